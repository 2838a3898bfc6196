//! Cross-antenna mMIMO channel prediction with predictive and generative
//! autoencoders.
//!
//! The numeric core ([`tensor`], [`autodiff`], [`optim`], [`model`],
//! [`link`], [`loss`], [`train`], [`eval`]) is generic over the scalar type
//! through [`Real`]; the aliases at the crate root fix it to `f64`, which is
//! what the file formats and the command-line tool use.

pub mod autodiff;
pub mod channel;
pub mod error;
pub mod eval;
pub(crate) mod linalg;
pub mod link;
pub mod loss;
pub mod model;
pub mod optim;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default-precision tensor.
pub type Tensor = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tape = autodiff::Tape<f64>;
pub type ParamSet = params::ParamSet<f64>;
pub type AdamState = optim::AdamState<f64>;
pub type ModelBundle = model::ModelBundle<f64>;
