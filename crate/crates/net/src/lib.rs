//! Unrolled reconstruction networks for partial-Fourier MRI.

pub mod adam;
pub mod aggregate;
pub mod checkpoint;
pub mod conv;
pub mod error;
pub mod gru;
pub mod loss;
pub mod params;
pub mod real;
pub mod resnet;
pub mod train;
pub mod unrolled;

pub use aggregate::Aggregation;
pub use error::{Error, Result};
pub use params::{ParamSet, Tensor};
pub use real::Real;
pub use unrolled::{count_params, HiddenState, Model, ModelConfig, Strategy, Tape};
