//! The three learnable networks: context encoder, EMA target encoder and the
//! velocity-conditioned recurrent predictor.

pub mod checkpoint;
pub mod init;
mod mlp;
mod recurrent;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use mlp::{BoundMlp, Encoder, Linear, Mlp};
pub use recurrent::{BoundCell, BoundPredictor, CellKind, CellState, Gate, Predictor, RecurrentCell};

use crate::error::{Error, Result};
use crate::ndnum::Matrix;
use crate::rng::{rng_for, Rng};
use crate::scalar::Scalar;

/// A 2-D chart point (pseudo-location).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartPoint<T>(pub [T; 2]);

/// Uniform access to a network's tensors in declaration order.
pub trait Params<T: Scalar> {
    fn tensors(&self) -> Vec<&Matrix<T>>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|t| t.shape()).collect()
    }
}

/// `target ← τ·target + (1 − τ)·online`, parameter by parameter.
pub fn ema_update<T: Scalar, P: Params<T>>(target: &mut P, online: &P, tau: T) -> Result<()> {
    if !(tau >= T::zero() && tau <= T::one()) {
        return Err(Error::invalid(format!("EMA decay {tau} outside [0, 1]")));
    }
    let src = online.tensors();
    let mut dst = target.tensors_mut();
    if src.len() != dst.len() || src.iter().zip(dst.iter()).any(|(a, b)| a.shape() != b.shape()) {
        return Err(Error::invalid("EMA target and online shapes differ"));
    }
    // Written as x + (1 - τ)(y - x) so that y == x is an exact fixed point.
    let step = T::one() - tau;
    for (d, s) in dst.iter_mut().zip(src) {
        for (x, &y) in d.data_mut().iter_mut().zip(s.data()) {
            *x = if tau == T::zero() { y } else { *x + step * (y - *x) };
        }
    }
    Ok(())
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder_widths: Vec<usize>,
    pub cell: CellKind,
    pub hidden: usize,
    pub head_hidden: usize,
    pub input_gain: f64,
}

impl ModelConfig {
    /// Desk-scale preset used by the end-to-end runs.
    pub fn desk() -> Self {
        ModelConfig {
            encoder_widths: vec![256, 128, 64],
            cell: CellKind::Gru,
            hidden: 64,
            head_hidden: 64,
            input_gain: 10.0,
        }
    }

    /// Full-scale architecture: five hidden layers and a 256-unit GRU.
    pub fn full() -> Self {
        ModelConfig {
            encoder_widths: vec![1024, 512, 256, 128, 64],
            cell: CellKind::Gru,
            hidden: 256,
            head_hidden: 256,
            input_gain: 10.0,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Fresh encoder and predictor drawn from `seed`.
pub fn init_models<T: Scalar>(
    cfg: &ModelConfig,
    input_dim: usize,
    seed: u64,
) -> Result<(Encoder<T>, Predictor<T>)> {
    let mut enc_rng: Rng = rng_for(seed, 0xE1C0);
    let mut pred_rng: Rng = rng_for(seed, 0x9ED1);
    let encoder = Encoder::init(input_dim, &cfg.encoder_widths, &mut enc_rng)?;
    let predictor = Predictor::init(
        cfg.cell,
        cfg.hidden,
        cfg.head_hidden,
        T::lit(cfg.input_gain),
        &mut pred_rng,
    )?;
    Ok((encoder, predictor))
}
