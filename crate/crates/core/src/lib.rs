//! Cost-sensitive deep learning for imbalanced binary classification of
//! 1-D spectra.
//!
//! The crate contains everything needed to train and evaluate a small 1-D
//! convolutional network on spectral samples where the positive class is
//! rare:
//!
//! - [`tensor`] and [`ops`]: shape-checked arrays and layer primitives with
//!   hand-derived gradients, checked against [`gradcheck`].
//! - [`model`] and [`checkpoint`]: the network, its initialization and a
//!   bit-exact checkpoint format.
//! - [`loss`]: cross-entropy weighted per class by `alpha * exp(R)`, where
//!   `alpha` reflects the class counts and `R` tracks how many positives the
//!   model currently misses.
//! - [`optim`]: Adam and a step-decay learning-rate schedule.
//! - [`data`]: CSV I/O, a synthetic spectrum generator, stratified splits,
//!   minority replication and batching.
//! - [`metrics`], [`knn`]: evaluation and a nearest-neighbour baseline.
//! - [`experiment`]: the training loop, ablation grid and reports driven by
//!   the `frostnet` command-line tool.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod knn;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{LayerGradients, NumericArray};
