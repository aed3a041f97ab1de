//! Geometric ray model: line-of-sight plus single-bounce scatterer paths.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::channelsim::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

// Closer than this to an array the far-field model is meaningless.
const MIN_DISTANCE: f64 = 0.01;

/// Channel tensor `h[b][m][w]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Csi {
    pub arrays: usize,
    pub antennas: usize,
    pub subcarriers: usize,
    pub data: Vec<Complex64>,
}

impl Csi {
    pub fn zeros(arrays: usize, antennas: usize, subcarriers: usize) -> Self {
        Csi {
            arrays,
            antennas,
            subcarriers,
            data: vec![Complex64::new(0.0, 0.0); arrays * antennas * subcarriers],
        }
    }

    /// Rebuilds a tensor from interleaved `re, im` pairs.
    pub fn from_interleaved(
        arrays: usize,
        antennas: usize,
        subcarriers: usize,
        values: &[f32],
    ) -> Result<Self> {
        let n = arrays * antennas * subcarriers;
        if values.len() != 2 * n {
            return Err(Error::invalid(format!(
                "expected {} interleaved values, got {}",
                2 * n,
                values.len()
            )));
        }
        let data = values
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0] as f64, c[1] as f64))
            .collect();
        Ok(Csi {
            arrays,
            antennas,
            subcarriers,
            data,
        })
    }

    pub fn to_interleaved(&self) -> Vec<f32> {
        self.data
            .iter()
            .flat_map(|c| [c.re as f32, c.im as f32])
            .collect()
    }

    pub fn index(&self, b: usize, m: usize, w: usize) -> usize {
        (b * self.antennas + m) * self.subcarriers + w
    }

    pub fn get(&self, b: usize, m: usize, w: usize) -> Complex64 {
        self.data[self.index(b, m, w)]
    }

    /// The `M x W` block of array `b`.
    pub fn array(&self, b: usize) -> &[Complex64] {
        let n = self.antennas * self.subcarriers;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn power(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }

    pub fn scaled(&self, c: Complex64) -> Csi {
        Csi {
            data: self.data.iter().map(|x| x * c).collect(),
            ..self.clone()
        }
    }
}

struct Path {
    amplitude: f64,
    /// Angle of arrival relative to the array boresight.
    angle: f64,
    delay: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Noise-free channel from a user at `p`.
///
/// Each path contributes `a · e^{-j2π f_c τ} · e^{-jπ m sin θ} · e^{-j2π w Δf τ}`
/// with amplitude `1/d` (line of sight) or `g_k / (d_1 + d_2)` (scatterer `k`).
pub fn synth_csi(spec: &EnvironmentSpec, p: [f64; 2]) -> Result<Csi> {
    if !(p[0].is_finite() && p[1].is_finite()) {
        return Err(Error::invalid(format!("non-finite position {p:?}")));
    }
    let (m_count, w_count) = (spec.antennas, spec.subcarriers);
    let df = spec.subcarrier_spacing();
    let mut h = Csi::zeros(spec.num_arrays(), m_count, w_count);
    for (b, array) in spec.arrays.iter().enumerate() {
        let q = array.position;
        let d_los = dist(p, q);
        if d_los < MIN_DISTANCE {
            return Err(Error::invalid(format!(
                "position {p:?} coincides with array {b} at {q:?}"
            )));
        }
        let mut paths = Vec::with_capacity(spec.scatterers.len() + 1);
        paths.push(Path {
            amplitude: 1.0 / d_los,
            angle: (p[1] - q[1]).atan2(p[0] - q[0]) - array.boresight,
            delay: d_los / SPEED_OF_LIGHT,
        });
        for s in &spec.scatterers {
            let d1 = dist(p, s.position).max(MIN_DISTANCE);
            let d2 = dist(s.position, q).max(MIN_DISTANCE);
            paths.push(Path {
                amplitude: s.gain / (d1 + d2),
                angle: (s.position[1] - q[1]).atan2(s.position[0] - q[0]) - array.boresight,
                delay: (d1 + d2) / SPEED_OF_LIGHT,
            });
        }

        let block = &mut h.data[b * m_count * w_count..(b + 1) * m_count * w_count];
        for path in &paths {
            let gain = Complex64::from_polar(path.amplitude, -2.0 * PI * spec.carrier_freq * path.delay);
            let spatial = -PI * path.angle.sin();
            let spectral = -2.0 * PI * df * path.delay;
            for m in 0..m_count {
                let gm = gain * Complex64::from_polar(1.0, spatial * m as f64);
                for w in 0..w_count {
                    block[m * w_count + w] += gm * Complex64::from_polar(1.0, spectral * w as f64);
                }
            }
        }
    }
    Ok(h)
}

/// Adds circular complex Gaussian noise at `snr_db` relative to the tensor's
/// mean power.
pub fn add_noise(h: &mut Csi, snr_db: f64, rng: &mut Rng) {
    let noise_power = h.power() / 10f64.powf(snr_db / 10.0);
    let sigma = (noise_power / 2.0).sqrt();
    for c in &mut h.data {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *c += Complex64::new(sigma * re, sigma * im);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channelsim::{ArrayPose, Bounds};
    use crate::rng::rng;

    fn single_los(antennas: usize, subcarriers: usize) -> EnvironmentSpec {
        EnvironmentSpec {
            arrays: vec![ArrayPose {
                position: [0.0, 0.0],
                boresight: 0.0,
            }],
            antennas,
            subcarriers,
            bandwidth: 50e6,
            carrier_freq: 1.272e9,
            scatterers: vec![],
            bounds: Bounds {
                min: [-5.0, -5.0],
                max: [5.0, 5.0],
            },
            slot_duration: 0.04,
            snr_db: None,
        }
    }

    #[test]
    fn steering_entries_have_equal_modulus() {
        // W = 1 bypasses validation on purpose: the model itself allows it.
        let spec = single_los(2, 1);
        let h = synth_csi(&spec, [3.0, 1.0]).unwrap();
        let a = h.get(0, 0, 0).norm();
        let b = h.get(0, 1, 0).norm();
        assert!((a - b).abs() < 1e-15);
        assert!((a - 1.0 / 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn noise_free_is_deterministic() {
        let spec = EnvironmentSpec::desk();
        let a = synth_csi(&spec, [4.0, 3.0]).unwrap();
        let b = synth_csi(&spec, [4.0, 3.0]).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
    }

    #[test]
    fn coincident_position_rejected() {
        let spec = single_los(4, 4);
        assert!(synth_csi(&spec, [0.005, 0.0]).is_err());
        assert!(synth_csi(&spec, [f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn noise_matches_requested_snr() {
        let spec = EnvironmentSpec::desk();
        let clean = synth_csi(&spec, [7.0, 9.0]).unwrap();
        let mut noisy = clean.clone();
        add_noise(&mut noisy, 20.0, &mut rng(1));
        let err: f64 = noisy
            .data
            .iter()
            .zip(&clean.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / clean.data.len() as f64;
        let snr = 10.0 * (clean.power() / err).log10();
        assert!((snr - 20.0).abs() < 0.5, "snr {snr}");
    }

    #[test]
    fn interleaved_round_trip() {
        let h = synth_csi(&EnvironmentSpec::desk(), [2.0, 2.0]).unwrap();
        let v = h.to_interleaved();
        let back = Csi::from_interleaved(4, 8, 32, &v).unwrap();
        assert_eq!(back.to_interleaved(), v);
        assert!(Csi::from_interleaved(4, 8, 31, &v).is_err());
    }
}
