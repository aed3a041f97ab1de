//! Stage 1: siamese channel charting on a dissimilarity matrix.
//!
//! Sammon-style stress `Σ w_ij (|z_i - z_j| - s·d_ij)² / Σ w_ij` with
//! `w_ij = 1 / (d_ij + ε)`. Dissimilarities are divided by their mean first, so
//! chart units are comparable across dissimilarity kinds. The scale `s` starts
//! at 1 and is refit by weighted least squares after every epoch.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::features::{DissimilarityMatrix, GeodesicConfig};
use crate::models::Encoder;
use crate::ndnum::{Matrix, Tape};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::training::jepa::sgd_update;

pub const SAMMON_EPS: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PretrainKind {
    Adp,
    Geodesic,
}

impl std::fmt::Display for PretrainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PretrainKind::Adp => "adp",
            PretrainKind::Geodesic => "geodesic",
        })
    }
}

impl std::str::FromStr for PretrainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adp" => Ok(PretrainKind::Adp),
            "geodesic" => Ok(PretrainKind::Geodesic),
            other => Err(Error::invalid(format!("unknown pretraining mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    /// Share of the training split used for pretraining.
    pub fraction: f64,
    /// Points per step; every pair among them contributes.
    pub batch: usize,
    /// One epoch visits as many pairs as the subset has.
    pub epochs: usize,
    pub lr: f64,
    pub geodesic: GeodesicConfig,
}

impl PretrainConfig {
    pub fn desk() -> Self {
        PretrainConfig {
            fraction: 0.2,
            batch: 200,
            epochs: 20,
            lr: 0.3,
            geodesic: GeodesicConfig::desk(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::invalid("pretraining fraction must be in (0, 1]"));
        }
        if self.batch < 2 {
            return Err(Error::invalid("pretraining batch needs at least 2 points"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("pretraining lr must be positive"));
        }
        Ok(())
    }
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainLog {
    /// Normalised stress `Σ w (|Δz| - s d)² / Σ w (s d)²` after each epoch.
    pub stress: Vec<f64>,
    /// Final scale between chart distances and mean-normalised dissimilarities.
    pub scale: f64,
    pub steps: usize,
}

/// Mean-normalised dissimilarities of the pairs `i < j` in row-major order.
fn normalised(dissim: &DissimilarityMatrix) -> Result<(Vec<f64>, f64)> {
    let n = dissim.n();
    let mut d = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        d.extend_from_slice(&dissim.row(i)[i + 1..]);
    }
    let mean = d.iter().sum::<f64>() / d.len().max(1) as f64;
    if !(mean > 0.0) {
        return Err(Error::invalid("dissimilarity matrix is identically zero"));
    }
    d.iter_mut().for_each(|x| *x /= mean);
    Ok((d, mean))
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    // Row-major upper triangle without the diagonal, i < j.
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Weighted least-squares scale and normalised stress of chart `z` (n x 2).
pub fn sammon_fit<T: Scalar>(z: &Matrix<T>, dissim: &DissimilarityMatrix) -> Result<(f64, f64)> {
    let n = dissim.n();
    let (d, _) = normalised(dissim)?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut dz = Vec::with_capacity(d.len());
    for i in 0..n {
        for j in i + 1..n {
            let a = (z.get(i, 0) - z.get(j, 0)).as_f64();
            let b = (z.get(i, 1) - z.get(j, 1)).as_f64();
            let e = a.hypot(b);
            let dij = d[pair_index(n, i, j)];
            let w = 1.0 / (dij + SAMMON_EPS);
            num += w * e * dij;
            den += w * dij * dij;
            dz.push(e);
        }
    }
    let s = num / den;
    let mut err = 0.0;
    let mut norm = 0.0;
    for (e, dij) in dz.iter().zip(&d) {
        let w = 1.0 / (dij + SAMMON_EPS);
        err += w * (e - s * dij).powi(2);
        norm += w * (s * dij).powi(2);
    }
    let stress = if norm > 0.0 { err / norm } else { 1.0 };
    Ok((s, stress))
}

/// Fits `encoder` so that chart distances follow `dissim` up to scale.
/// `features` row `i` belongs to dissimilarity row `i`.
pub fn pretrain_siamese<T: Scalar>(
    encoder: &mut Encoder<T>,
    features: &Matrix<T>,
    dissim: &DissimilarityMatrix,
    cfg: &PretrainConfig,
    rng: &mut Rng,
) -> Result<PretrainLog> {
    cfg.validate()?;
    let n = dissim.n();
    if features.rows() != n {
        return Err(Error::Shape {
            op: "pretraining features",
            left: features.shape(),
            right: (n, encoder.input_dim()),
        });
    }
    if n < 2 {
        return Err(Error::invalid("pretraining needs at least 2 points"));
    }
    let (d, _) = normalised(dissim)?;
    let m = cfg.batch.min(n);
    let total_pairs = n * (n - 1) / 2;
    let batch_pairs = m * (m - 1) / 2;
    let steps_per_epoch = total_pairs.div_ceil(batch_pairs);
    let lr = T::lit(cfg.lr);

    let mut scale = 1.0;
    let mut log = PretrainLog {
        stress: Vec::with_capacity(cfg.epochs),
        scale,
        steps: 0,
    };
    for _ in 0..cfg.epochs {
        for _ in 0..steps_per_epoch {
            let mut pts = sample(rng, n, m).into_vec();
            pts.sort_unstable();
            let mut left = Vec::with_capacity(batch_pairs);
            let mut right = Vec::with_capacity(batch_pairs);
            let mut target = Vec::with_capacity(batch_pairs);
            let mut weight = Vec::with_capacity(batch_pairs);
            for a in 0..m {
                for b in a + 1..m {
                    let dij = d[pair_index(n, pts[a], pts[b])];
                    left.push(a);
                    right.push(b);
                    target.push(T::lit(scale * dij));
                    weight.push(T::lit(1.0 / (dij + SAMMON_EPS)));
                }
            }
            let wsum: T = weight.iter().copied().sum();

            let mut tape = Tape::new();
            let enc = encoder.mlp.bind(&mut tape)?;
            let x = tape.constant(features.select_rows(&pts))?;
            let z = enc.forward(&mut tape, &x)?;
            let zi = tape.gather(z, &left)?;
            let zj = tape.gather(z, &right)?;
            let diff = tape.sub(zi, zj)?;
            let dist = tape.row_norm(diff)?;
            let tgt = tape.constant(Matrix::from_vec(target.len(), 1, target)?)?;
            let r = tape.sub(dist, tgt)?;
            let r2 = tape.mul(r, r)?;
            let w = tape.constant(Matrix::from_vec(weight.len(), 1, weight)?)?;
            let wr = tape.mul(r2, w)?;
            let s = tape.sum(wr)?;
            let loss = tape.scale(s, T::one() / wsum)?;
            tape.backward(loss)?;
            let grads: Vec<Matrix<T>> = enc.vars().iter().map(|&v| tape.grad(v)).collect();
            sgd_update(encoder, &grads, lr, T::zero())?;
            log.steps += 1;
        }
        let z = encoder.encode_batch(features)?;
        let (s, stress) = sammon_fit(&z, dissim)?;
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::NonFinite("pretraining scale"));
        }
        scale = s;
        log.stress.push(stress);
    }
    log.scale = scale;
    Ok(log)
}
