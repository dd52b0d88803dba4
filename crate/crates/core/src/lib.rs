//! Citywide taxi origin-destination demand forecasting with a contextualized
//! spatial-temporal network.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense tensors, a recording graph for reverse-mode
//!   gradients, Adam and Xavier initialization.
//! * [`data`]: region binning, OD tensor construction, meteorology
//!   encoding, normalization, sample windows, synthetic data and the dataset
//!   cache.
//! * [`model`]: the two-view local spatial module, the ConvLSTM temporal
//!   module with meteorological conditioning, global correlation fusion and
//!   the long-horizon decoder.
//! * [`train`]: loss, learning-rate schedule, minibatch Adam training and
//!   checkpoints.
//! * [`eval`]: MAPE/RMSE with the ground-truth filter, region subsets and
//!   day-of-week splits.
//! * [`baselines`]: historical averages, least squares and a per-channel MLP.

mod binio;
pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
