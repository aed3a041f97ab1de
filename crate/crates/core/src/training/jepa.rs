//! Stage 2: predict target embeddings of future channels from one context
//! embedding and the velocity sequence.

use rand::seq::SliceRandom;

use crate::channelsim::{Dataset, Split, TrajectoryInfo};
use crate::error::{Error, Result};
use crate::features::dataset_features;
use crate::models::{ema_update, Encoder, Params, Predictor};
use crate::ndnum::{Matrix, Tape, Var};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Per-sample encoder inputs and velocities of one dataset.
#[derive(Clone, Debug)]
pub struct WindowData<T> {
    pub features: Matrix<T>,
    pub velocities: Vec<[T; 2]>,
    pub dt: T,
    pub trajectories: Vec<TrajectoryInfo>,
}

impl<T: Scalar> WindowData<T> {
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let all: Vec<usize> = (0..ds.len()).collect();
        Ok(WindowData {
            features: dataset_features(ds, &all)?.cast(),
            velocities: ds
                .samples
                .iter()
                .map(|s| [T::lit(s.velocity[0]), T::lit(s.velocity[1])])
                .collect(),
            dt: T::lit(ds.spec.slot_duration),
            trajectories: ds.trajectories.clone(),
        })
    }

    /// Every `n` of `split` whose window `n..=n+horizon` stays in one trajectory.
    pub fn windows(&self, split: Split, horizon: usize) -> Vec<usize> {
        valid_windows(&self.trajectories, split, horizon)
    }
}

pub fn valid_windows(trajectories: &[TrajectoryInfo], split: Split, horizon: usize) -> Vec<usize> {
    trajectories
        .iter()
        .filter(|t| t.split == split && t.len > horizon)
        .flat_map(|t| t.start..t.end() - horizon)
        .collect()
}

/// True if `n..=n+horizon` lies inside a single trajectory.
pub fn window_is_valid(trajectories: &[TrajectoryInfo], n: usize, horizon: usize) -> bool {
    trajectories
        .iter()
        .any(|t| n >= t.start && n + horizon < t.end())
}

/// Shuffled mini-batches of window starts for one epoch.
pub fn epoch_batches(windows: &[usize], batch: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order = windows.to_vec();
    order.shuffle(rng);
    order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

/// How the target embeddings enter the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetBranch {
    /// Target encoder outputs as constants: no gradient reaches any parameter
    /// through the targets.
    Detached,
    /// Ablation: targets produced by the online encoder on the tape with no
    /// stop-gradient, so the online parameters also receive gradient through
    /// the target branch.
    Live,
}

/// Gradients in `Params::tensors` order.
#[derive(Clone, Debug, PartialEq)]
pub struct JepaGrads<T> {
    pub encoder: Vec<Matrix<T>>,
    pub predictor: Vec<Matrix<T>>,
}

impl<T: Scalar> JepaGrads<T> {
    pub fn norm(&self) -> T {
        self.encoder
            .iter()
            .chain(&self.predictor)
            .flat_map(|g| g.data().iter())
            .map(|&x| x * x)
            .sum::<T>()
            .sqrt()
    }
}

/// `(1 / (batch · H)) Σ_windows Σ_t |ẑ_{n+t} - z_{n+t}|²` and its gradient
/// with respect to the online encoder and the predictor.
pub fn jepa_loss<T: Scalar>(
    online: &Encoder<T>,
    target: &Encoder<T>,
    predictor: &Predictor<T>,
    data: &WindowData<T>,
    windows: &[usize],
    horizon: usize,
    branch: TargetBranch,
) -> Result<(T, JepaGrads<T>)> {
    if windows.is_empty() || horizon == 0 {
        return Err(Error::invalid("need at least one window and horizon >= 1"));
    }
    if let Some(&bad) = windows
        .iter()
        .find(|&&n| !window_is_valid(&data.trajectories, n, horizon))
    {
        return Err(Error::invalid(format!(
            "window starting at {bad} crosses a trajectory boundary"
        )));
    }
    let b = windows.len();
    let mut frames: Vec<usize> = windows.iter().flat_map(|&n| n + 1..=n + horizon).collect();
    frames.sort_unstable();
    frames.dedup();
    let slot = |i: usize| frames.binary_search(&i).expect("frame listed");

    let mut tape = Tape::new();
    let enc = online.mlp.bind(&mut tape)?;
    let pred = predictor.bind(&mut tape)?;
    let ctx = tape.constant(data.features.select_rows(windows))?;
    let z0 = enc.forward(&mut tape, &ctx)?;

    let gain = data.dt * predictor.input_gain;
    let mut inputs = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let m = Matrix::from_fn(b, 2, |r, c| data.velocities[windows[r] + t][c] * gain);
        inputs.push(tape.constant(m)?);
    }
    let preds = pred.rollout(&mut tape, &z0, &inputs, data.dt)?;

    let frame_x = data.features.select_rows(&frames);
    let live = match branch {
        TargetBranch::Detached => None,
        TargetBranch::Live => {
            let x = tape.constant(frame_x.clone())?;
            Some(enc.forward(&mut tape, &x)?)
        }
    };
    let eager = match branch {
        TargetBranch::Detached => Some(target.encode_batch(&frame_x)?),
        TargetBranch::Live => None,
    };

    let mut total: Option<Var> = None;
    for (t, p) in preds.iter().enumerate() {
        let rows: Vec<usize> = windows.iter().map(|&n| slot(n + t + 1)).collect();
        let y = match (&eager, live) {
            (Some(z), _) => tape.constant(z.select_rows(&rows))?,
            (None, Some(z)) => tape.gather(z, &rows)?,
            (None, None) => unreachable!("one branch is always built"),
        };
        let d = tape.sub(*p, y)?;
        let sq = tape.mul(d, d)?;
        let s = tape.sum(sq)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, s)?,
            None => s,
        });
    }
    let loss = tape.scale(total.expect("horizon >= 1"), T::one() / T::lit((b * horizon) as f64))?;
    tape.backward(loss)?;
    let value = tape.value(loss).get(0, 0);
    let grads = JepaGrads {
        encoder: enc.vars().iter().map(|&v| tape.grad(v)).collect(),
        predictor: pred.vars().iter().map(|&v| tape.grad(v)).collect(),
    };
    Ok((value, grads))
}

/// `p ← p - lr · (g + weight_decay · p)` for every tensor.
pub fn sgd_update<T: Scalar, P: Params<T>>(
    params: &mut P,
    grads: &[Matrix<T>],
    lr: T,
    weight_decay: T,
) -> Result<()> {
    let mut tensors = params.tensors_mut();
    if tensors.len() != grads.len() {
        return Err(Error::invalid("gradient list does not match parameters"));
    }
    let keep = T::one() - lr * weight_decay;
    for (p, g) in tensors.iter_mut().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "sgd update",
                left: p.shape(),
                right: g.shape(),
            });
        }
        for (x, &d) in p.data_mut().iter_mut().zip(g.data()) {
            *x = keep * *x - lr * d;
        }
    }
    Ok(())
}

/// Mutable training state of stage 2.
#[derive(Clone, Debug, PartialEq)]
pub struct JepaState<T> {
    pub online: Encoder<T>,
    pub target: Encoder<T>,
    pub predictor: Predictor<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub grad_norm: f64,
}

/// One optimisation step: gradient update of the online encoder and the
/// predictor, then the EMA update of the target encoder. The target encoder
/// is never handed to the optimiser.
#[allow(clippy::too_many_arguments)]
pub fn jepa_step<T: Scalar>(
    state: &mut JepaState<T>,
    data: &WindowData<T>,
    windows: &[usize],
    horizon: usize,
    lr: T,
    weight_decay: T,
    tau: T,
    branch: TargetBranch,
) -> Result<StepStats> {
    let (loss, grads) = jepa_loss(
        &state.online,
        &state.target,
        &state.predictor,
        data,
        windows,
        horizon,
        branch,
    )?;
    let stats = StepStats {
        loss: loss.as_f64(),
        grad_norm: grads.norm().as_f64(),
    };
    if !(stats.loss.is_finite() && stats.grad_norm.is_finite()) {
        return Err(Error::Diverged {
            step: 0,
            loss: stats.loss,
            lr: lr.as_f64(),
            grad_norm: stats.grad_norm,
        });
    }
    sgd_update(&mut state.online, &grads.encoder, lr, weight_decay)?;
    sgd_update(&mut state.predictor, &grads.predictor, lr, weight_decay)?;
    ema_update(&mut state.target, &state.online, tau)?;
    Ok(stats)
}
