//! Synthetic 2-D indoor environment: smooth random-walk trajectories and a
//! geometric multipath MIMO-OFDM channel model.

mod csi;
mod dataset;
mod regions;
mod trajectory;

pub use csi::{add_noise, synth_csi, Csi, SPEED_OF_LIGHT};
pub use dataset::{
    CsiSample, Dataset, SimConfig, Split, TrajectoryInfo, DS_MAGIC, MANIFEST_MAGIC,
};
pub use regions::{assign_regions, RegionMap};
pub use trajectory::{generate_trajectory, perturb_velocity, MotionSpec, TrajectoryState};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Receiving array: reference antenna position and boresight direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrayPose {
    pub position: [f64; 2],
    /// Radians, measured from the +x axis.
    pub boresight: f64,
}

/// Point reflector with an amplitude gain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scatterer {
    pub position: [f64; 2],
    pub gain: f64,
}

/// Axis-aligned rectangle in metres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        let b = Bounds { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0..2).all(|i| {
            self.min[i].is_finite() && self.max[i].is_finite() && self.max[i] > self.min[i]
        });
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate bounds {self:?}")))
        }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Bounds grown by `margin` on every side.
    pub fn expanded(&self, margin: f64) -> Bounds {
        Bounds {
            min: [self.min[0] - margin, self.min[1] - margin],
            max: [self.max[0] + margin, self.max[1] + margin],
        }
    }
}

/// Geometry and radio parameters of the synthetic environment.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentSpec {
    pub arrays: Vec<ArrayPose>,
    /// Antennas per array (M).
    pub antennas: usize,
    /// OFDM subcarriers (W).
    pub subcarriers: usize,
    /// Hz.
    pub bandwidth: f64,
    /// Hz.
    pub carrier_freq: f64,
    pub scatterers: Vec<Scatterer>,
    pub bounds: Bounds,
    /// Seconds.
    pub slot_duration: f64,
    /// Estimation SNR; `None` disables noise.
    pub snr_db: Option<f64>,
}

impl EnvironmentSpec {
    /// 4 arrays of 8 antennas facing into a 20 m x 15 m room, 32 subcarriers
    /// over 50 MHz at 1.272 GHz, 25 scatterers, 40 ms slots, 20 dB SNR.
    pub fn desk() -> Self {
        let bounds = Bounds {
            min: [0.0, 0.0],
            max: [20.0, 15.0],
        };
        let (w, h) = (bounds.width(), bounds.height());
        let arrays = vec![
            ArrayPose {
                position: [w / 2.0, -0.5],
                boresight: std::f64::consts::FRAC_PI_2,
            },
            ArrayPose {
                position: [w + 0.5, h / 2.0],
                boresight: std::f64::consts::PI,
            },
            ArrayPose {
                position: [w / 2.0, h + 0.5],
                boresight: -std::f64::consts::FRAC_PI_2,
            },
            ArrayPose {
                position: [-0.5, h / 2.0],
                boresight: 0.0,
            },
        ];
        EnvironmentSpec {
            arrays,
            antennas: 8,
            subcarriers: 32,
            bandwidth: 50e6,
            carrier_freq: 1.272e9,
            scatterers: random_scatterers(&bounds, 25, 0x5CA7),
            bounds,
            slot_duration: 0.04,
            snr_db: Some(20.0),
        }
    }

    pub fn num_arrays(&self) -> usize {
        self.arrays.len()
    }

    /// Complex entries per sample, `B * M * W`.
    pub fn csi_len(&self) -> usize {
        self.arrays.len() * self.antennas * self.subcarriers
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.subcarriers as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.arrays.is_empty() {
            return Err(Error::invalid("at least one array is required"));
        }
        if self.antennas < 2 {
            return Err(Error::invalid(format!("need M >= 2 antennas, got {}", self.antennas)));
        }
        if self.subcarriers < 4 {
            return Err(Error::invalid(format!(
                "need W >= 4 subcarriers, got {}",
                self.subcarriers
            )));
        }
        if !(self.slot_duration > 0.0 && self.slot_duration.is_finite()) {
            return Err(Error::invalid("slot duration must be positive"));
        }
        if !(self.bandwidth > 0.0 && self.carrier_freq > 0.0) {
            return Err(Error::invalid("bandwidth and carrier frequency must be positive"));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::invalid("SNR must be finite"));
            }
        }
        // "Near" the room: within a quarter of the larger side.
        let near = self
            .bounds
            .expanded(0.25 * self.bounds.width().max(self.bounds.height()));
        for a in &self.arrays {
            if !near.contains(a.position) || !a.boresight.is_finite() {
                return Err(Error::invalid(format!("array {a:?} is far outside the bounds")));
            }
        }
        for s in &self.scatterers {
            if !near.contains(s.position) || !(s.gain >= 0.0 && s.gain.is_finite()) {
                return Err(Error::invalid(format!("invalid scatterer {s:?}")));
            }
        }
        Ok(())
    }
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        Self::desk()
    }
}

/// `count` scatterers uniform in `bounds` with gains uniform in [0.1, 0.4].
pub fn random_scatterers(bounds: &Bounds, count: usize, seed: u64) -> Vec<Scatterer> {
    let mut rng = rng_for(seed, 0x5CA7);
    (0..count)
        .map(|_| Scatterer {
            position: [
                rng.gen_range(bounds.min[0]..bounds.max[0]),
                rng.gen_range(bounds.min[1]..bounds.max[1]),
            ],
            gain: rng.gen_range(0.1..0.4),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_spec_is_valid() {
        let s = EnvironmentSpec::desk();
        s.validate().unwrap();
        assert_eq!(s.csi_len(), 4 * 8 * 32);
        assert_eq!(s.scatterers.len(), 25);
        assert_eq!(s, EnvironmentSpec::desk());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = EnvironmentSpec::desk();
        s.antennas = 1;
        assert!(s.validate().is_err());
        let mut s = EnvironmentSpec::desk();
        s.subcarriers = 3;
        assert!(s.validate().is_err());
        let mut s = EnvironmentSpec::desk();
        s.arrays.clear();
        assert!(s.validate().is_err());
        let mut s = EnvironmentSpec::desk();
        s.slot_duration = 0.0;
        assert!(s.validate().is_err());
        assert!(Bounds::new([0.0, 0.0], [0.0, 1.0]).is_err());
    }
}
