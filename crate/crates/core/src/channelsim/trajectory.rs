use std::f64::consts::TAU;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::channelsim::Bounds;
use crate::error::{Error, Result};
use crate::rng::rng;

/// Kinematic state at one slot. `velocity` is what the user moves with
/// during the slot: `position(n+1) = position(n) + Δt · velocity(n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub heading: f64,
    pub speed: f64,
}

/// Random-walk statistics of the mobile user.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSpec {
    /// Largest heading change per slot (radians); increments are uniform.
    pub heading_step: f64,
    /// Mean-reversion rate of the speed process per slot, in [0, 1].
    pub speed_reversion: f64,
    /// Standard deviation of the speed innovation per slot (m/s).
    pub speed_noise: f64,
    pub speed_mean: f64,
    pub speed_min: f64,
    pub speed_max: f64,
}

impl MotionSpec {
    pub fn desk() -> Self {
        MotionSpec {
            heading_step: 0.15,
            speed_reversion: 0.05,
            speed_noise: 0.05,
            speed_mean: 1.2,
            speed_min: 0.2,
            speed_max: 1.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.heading_step,
            self.speed_reversion,
            self.speed_noise,
            self.speed_mean,
            self.speed_min,
            self.speed_max,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite
            || self.heading_step < 0.0
            || self.speed_noise < 0.0
            || !(0.0..=1.0).contains(&self.speed_reversion)
            || self.speed_min < 0.0
            || self.speed_min > self.speed_max
        {
            return Err(Error::invalid(format!("invalid motion parameters {self:?}")));
        }
        Ok(())
    }
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self::desk()
    }
}

/// Smooth random walk inside `bounds` with reflecting walls.
///
/// The start point is uniform in the inner 80 % of the room, the start heading
/// uniform, the start speed the clipped mean.
pub fn generate_trajectory(
    bounds: &Bounds,
    motion: &MotionSpec,
    slot_duration: f64,
    steps: usize,
    seed: u64,
) -> Result<Vec<TrajectoryState>> {
    bounds.validate()?;
    motion.validate()?;
    if steps == 0 {
        return Err(Error::invalid("a trajectory needs at least one step"));
    }
    if !(slot_duration > 0.0) {
        return Err(Error::invalid("slot duration must be positive"));
    }
    let mut r = rng(seed);
    let (w, h) = (bounds.width(), bounds.height());
    let mut p = [
        bounds.min[0] + w * r.gen_range(0.1..0.9),
        bounds.min[1] + h * r.gen_range(0.1..0.9),
    ];
    let mut heading: f64 = r.gen_range(0.0..TAU);
    let mut speed = motion.speed_mean.clamp(motion.speed_min, motion.speed_max);

    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut v = [speed * heading.cos(), speed * heading.sin()];
        // Reflect before stepping so the recorded velocity is the one used.
        for i in 0..2 {
            let next = p[i] + slot_duration * v[i];
            if next < bounds.min[i] || next > bounds.max[i] {
                v[i] = -v[i];
            }
        }
        heading = v[1].atan2(v[0]);
        out.push(TrajectoryState {
            position: p,
            velocity: v,
            heading,
            speed,
        });
        p = [p[0] + slot_duration * v[0], p[1] + slot_duration * v[1]];
        // A step longer than the room could still escape; clamp as a last resort.
        for i in 0..2 {
            p[i] = p[i].clamp(bounds.min[i], bounds.max[i]);
        }

        if motion.heading_step > 0.0 {
            heading += r.gen_range(-motion.heading_step..=motion.heading_step);
        }
        let z: f64 = StandardNormal.sample(&mut r);
        speed += motion.speed_reversion * (motion.speed_mean - speed) + motion.speed_noise * z;
        speed = speed.clamp(motion.speed_min, motion.speed_max);
    }
    Ok(out)
}

/// Rotates `v[t]` by `bias · slot_duration · (t + 1)`, i.e. the heading error
/// accumulated by the end of slot `t` under a constant angular-velocity bias.
pub fn perturb_velocity(velocities: &[[f64; 2]], angular_bias: f64, slot_duration: f64) -> Vec<[f64; 2]> {
    if angular_bias == 0.0 {
        return velocities.to_vec();
    }
    velocities
        .iter()
        .enumerate()
        .map(|(t, v)| {
            let (s, c) = (angular_bias * slot_duration * (t + 1) as f64).sin_cos();
            [c * v[0] - s * v[1], s * v[0] + c * v[1]]
        })
        .collect()
}
