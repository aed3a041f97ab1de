//! Two-stage curriculum: optional siamese pretraining of the encoder, then
//! joint predictive training with an EMA target encoder.

mod jepa;
mod log;
mod pretrain;

pub use self::jepa::{
    epoch_batches, jepa_loss, jepa_step, sgd_update, valid_windows, window_is_valid, JepaGrads,
    JepaState, StepStats, TargetBranch, WindowData,
};
pub use self::log::{StepRecord, TrainLog};
pub use self::pretrain::{
    pretrain_siamese, sammon_fit, PretrainConfig, PretrainKind, PretrainLog, SAMMON_EPS,
};

use std::time::Instant;

use rand::seq::index::sample;

use crate::channelsim::{Dataset, Split};
use crate::error::{Error, Result};
use crate::features::{adp_matrix, d_geodesic_fused, dataset_features, DissimilarityMatrix};
use crate::models::{Encoder, Predictor};
use crate::ndnum::Matrix;
use crate::rng::rng_for;
use crate::scalar::Scalar;

/// What runs before the predictive stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    PretrainAdp,
    PretrainGeodesic,
    /// Predictive stage only, starting from the given encoder (for example a
    /// stage-1 checkpoint).
    Jepa,
    /// Predictive stage only, from random initialisation.
    NoPretrain,
}

impl Stage {
    pub fn pretrain_kind(self) -> Option<PretrainKind> {
        match self {
            Stage::PretrainAdp => Some(PretrainKind::Adp),
            Stage::PretrainGeodesic => Some(PretrainKind::Geodesic),
            Stage::Jepa | Stage::NoPretrain => None,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::PretrainAdp => "pretrain_adp",
            Stage::PretrainGeodesic => "pretrain_geodesic",
            Stage::Jepa => "jepa",
            Stage::NoPretrain => "none",
        })
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain_adp" => Ok(Stage::PretrainAdp),
            "pretrain_geodesic" => Ok(Stage::PretrainGeodesic),
            "jepa" => Ok(Stage::Jepa),
            "none" | "none-pretrain" => Ok(Stage::NoPretrain),
            other => Err(Error::invalid(format!("unknown training stage '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub tau: f64,
    pub weight_decay: f64,
    /// Learning-rate factor applied after every epoch.
    pub lr_decay: f64,
    pub horizon: usize,
    pub epochs: usize,
    pub seed: u64,
    pub stage: Stage,
    pub pretrain: PretrainConfig,
}

impl TrainConfig {
    /// Desk-scale preset used by the end-to-end runs.
    pub fn desk() -> Self {
        TrainConfig {
            lr: 0.05,
            batch: 200,
            tau: 0.99,
            weight_decay: 3e-4,
            lr_decay: 0.97,
            horizon: 50,
            epochs: 30,
            seed: 7,
            stage: Stage::PretrainGeodesic,
            pretrain: PretrainConfig::desk(),
        }
    }

    /// Full-scale optimiser settings.
    pub fn full() -> Self {
        TrainConfig {
            lr: 0.005,
            horizon: 300,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr must be positive"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::invalid("tau must lie in [0, 1]"));
        }
        if self.horizon == 0 || self.batch == 0 {
            return Err(Error::invalid("horizon and batch must be at least 1"));
        }
        if !(self.weight_decay >= 0.0 && self.lr_decay > 0.0) {
            return Err(Error::invalid("weight decay must be >= 0 and lr decay > 0"));
        }
        self.pretrain.validate()
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Sorted random subset of the training split used for stage 1.
pub fn pretrain_subset(ds: &Dataset, fraction: f64, seed: u64) -> Vec<usize> {
    let train = ds.indices(Split::Train);
    let m = ((train.len() as f64 * fraction).round() as usize).clamp(2.min(train.len()), train.len());
    let mut rng = rng_for(seed, 0x5B5E);
    let mut pick: Vec<usize> = sample(&mut rng, train.len(), m).into_iter().map(|i| train[i]).collect();
    pick.sort_unstable();
    pick
}

/// Dissimilarities of the given kind over the samples `idx`.
pub fn dissimilarity(
    ds: &Dataset,
    idx: &[usize],
    kind: PretrainKind,
    cfg: &PretrainConfig,
) -> Result<(Matrix<f64>, DissimilarityMatrix)> {
    let features = dataset_features(ds, idx)?;
    let dm = match kind {
        PretrainKind::Adp => adp_matrix(&features, idx.to_vec())?,
        PretrainKind::Geodesic => d_geodesic_fused(ds, idx, &features, &cfg.geodesic)?,
    };
    Ok((features, dm))
}

/// Stage 1 on its own: subset selection, dissimilarities and the fit.
/// Returns the subset's dissimilarity matrix alongside the log.
pub fn run_pretraining<T: Scalar>(
    ds: &Dataset,
    encoder: &mut Encoder<T>,
    kind: PretrainKind,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<(PretrainLog, DissimilarityMatrix)> {
    cfg.validate()?;
    let idx = pretrain_subset(ds, cfg.fraction, seed);
    let (features, dm) = dissimilarity(ds, &idx, kind, cfg)?;
    let mut rng = rng_for(seed, 0x5B5F);
    let log = pretrain_siamese(encoder, &features.cast(), &dm, cfg, &mut rng)?;
    Ok((log, dm))
}

/// Eigenvalues of the 2x2 covariance of chart points, largest first.
pub fn chart_variance<T: Scalar>(z: &Matrix<T>) -> [f64; 2] {
    let n = z.rows().max(1) as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for r in 0..z.rows() {
        mx += z.get(r, 0).as_f64();
        my += z.get(r, 1).as_f64();
    }
    mx /= n;
    my /= n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for r in 0..z.rows() {
        let (a, b) = (z.get(r, 0).as_f64() - mx, z.get(r, 1).as_f64() - my);
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
    let mid = 0.5 * (sxx + syy);
    let rad = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    [mid + rad, (mid - rad).max(0.0)]
}

/// Runs both stages on the training split of `ds`.
///
/// The target encoder starts as a copy of the (possibly pretrained) online
/// encoder. Non-finite losses abort with [`Error::Diverged`].
pub fn train<T: Scalar>(
    ds: &Dataset,
    online: Encoder<T>,
    predictor: Predictor<T>,
    cfg: &TrainConfig,
) -> Result<(JepaState<T>, TrainLog)> {
    cfg.validate()?;
    let started = Instant::now();
    let mut online = online;
    let mut log = TrainLog::default();
    if let Some(kind) = cfg.stage.pretrain_kind() {
        let (plog, _) = run_pretraining(ds, &mut online, kind, &cfg.pretrain, cfg.seed)?;
        ::log::info!(
            "pretraining ({kind}): {} steps, final stress {:.4}",
            plog.steps,
            plog.stress.last().copied().unwrap_or(f64::NAN)
        );
        log.pretrain = Some(plog);
    }
    let mut state = JepaState {
        target: online.clone(),
        online,
        predictor,
    };
    if cfg.epochs == 0 {
        log.wall_time = started.elapsed();
        return Ok((state, log));
    }

    let data = WindowData::<T>::from_dataset(ds)?;
    let windows = data.windows(Split::Train, cfg.horizon);
    if windows.is_empty() {
        return Err(Error::invalid(format!(
            "no training window of horizon {} fits inside a trajectory",
            cfg.horizon
        )));
    }
    let probe_idx: Vec<usize> = {
        let train = ds.indices(Split::Train);
        let stride = (train.len() / 500).max(1);
        train.into_iter().step_by(stride).collect()
    };
    let probe = data.features.select_rows(&probe_idx);

    let mut rng = rng_for(cfg.seed, 0x7A11);
    let mut lr = cfg.lr;
    let mut step = 0;
    let mut last_grad_norm = f64::NAN;
    for epoch in 0..cfg.epochs {
        let mut sum = 0.0;
        let batches = epoch_batches(&windows, cfg.batch, &mut rng);
        for batch in &batches {
            let stats = jepa_step(
                &mut state,
                &data,
                batch,
                cfg.horizon,
                T::lit(lr),
                T::lit(cfg.weight_decay),
                T::lit(cfg.tau),
                TargetBranch::Detached,
            )
            .map_err(|e| match e {
                Error::Diverged {
                    loss, lr, grad_norm, ..
                } => Error::Diverged {
                    step,
                    loss,
                    lr,
                    grad_norm,
                },
                // Overflow inside the forward or backward pass.
                Error::NonFinite(_) => Error::Diverged {
                    step,
                    loss: f64::NAN,
                    lr,
                    grad_norm: last_grad_norm,
                },
                other => other,
            })?;
            last_grad_norm = stats.grad_norm;
            log.steps.push(StepRecord {
                step,
                epoch,
                loss: stats.loss,
                lr,
                grad_norm: stats.grad_norm,
            });
            sum += stats.loss;
            step += 1;
        }
        let mean = sum / batches.len() as f64;
        log.epoch_loss.push(mean);
        let var = chart_variance(&state.online.encode_batch(&probe)?);
        if !(var[1] >= 1e-6 * var[0]) {
            ::log::warn!(
                "epoch {epoch}: chart variance {:.3e} / {:.3e} suggests representation collapse",
                var[1],
                var[0]
            );
        }
        log.chart_variance.push(var);
        ::log::info!("epoch {epoch}: mean loss {mean:.6}, lr {lr:.5}");
        lr *= cfg.lr_decay;
    }
    log.wall_time = started.elapsed();
    Ok((state, log))
}
