//! Velocity-conditioned joint-embedding predictive channel charting.
//!
//! The numeric core ([`ndnum`], [`models`], [`training`], [`evaluation`]) is
//! generic over [`Scalar`] (`f32` or `f64`); the aliases below fix it to `f64`.
//! The radio simulator and feature extraction work in `f64` only.

pub mod channelsim;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod format;
pub mod models;
pub mod ndnum;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = ndnum::Matrix<f64>;
pub type Tape = ndnum::Tape<f64>;
pub type Encoder = models::Encoder<f64>;
pub type Predictor = models::Predictor<f64>;
pub type Checkpoint = models::Checkpoint<f64>;
pub type ChartPoint = models::ChartPoint<f64>;
