//! Layer primitives with hand-derived backward passes.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod pool;
pub mod softmax;

pub use activation::{relu, relu_backward};
pub use batchnorm::{batchnorm1d, batchnorm1d_backward, BatchNormCache, Mode, RunningStats};
pub use conv::{conv1d, conv1d_backward};
pub use dense::{dense, dense_backward};
pub use pool::{maxpool1d, maxpool1d_backward, PoolIndices};
pub use softmax::softmax;
