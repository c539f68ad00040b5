//! Unsupervised class-incremental learning with confidence-based pseudo-labels.
//!
//! The first task of a stream is learned with labels. Every later task arrives
//! unlabeled: its samples are embedded with the previous feature extractor,
//! clustered with KMeans, and only the samples whose Gaussian-kernel confidence
//! clears a threshold are trained on, with their cluster id standing in for
//! the label. Forgetting is limited by an exemplar memory plus one of three
//! strategies (plain replay, iCaRL-style logit distillation, weight alignment).
//!
//! Evaluation uses a static encoding: when a task ends, its classifier units are
//! matched once to the real classes with the Hungarian algorithm and that
//! mapping is never revised. Cluster accuracy, which re-matches everything at
//! every evaluation, is reported alongside for comparison.
//!
//! | module | contents |
//! |---|---|
//! | [`nncore`] | MLP feature extractor, growable classifier, losses, SGD |
//! | [`clustering`] | KMeans, confidence scores, pseudo-label selection |
//! | [`assignment`] | Hungarian solver and the append-only encoding table |
//! | [`evaluation`] | static Top-1, cluster accuracy, NMI, ARI, reports |
//! | [`memory`] | herding exemplar memory |
//! | [`strategies`] | Replay, iCaRL, WA training on one task |
//! | [`pipeline`] | task streams and the full incremental run |
//! | [`dataio`] | synthetic mixtures, CSV, IDX and CIFAR-100 loaders |
//! | [`flops`] | analytical training-cost model |
//! | [`cli`] | the `icpl` command-line frontend |

// `!(x > 0.0)` style checks are kept because they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod cli;
pub mod clustering;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod flops;
pub mod memory;
pub mod nncore;
pub mod pipeline;
pub mod rng;
pub mod strategies;

pub use error::{Error, Result};
