use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::channelsim::Csi;
use crate::error::{Error, Result};

/// Cached FFT plans for one `M x W` geometry.
pub struct AdpPlan {
    antennas: usize,
    subcarriers: usize,
    angle: Arc<dyn Fft<f64>>,
    delay: Arc<dyn Fft<f64>>,
}

impl AdpPlan {
    pub fn new(antennas: usize, subcarriers: usize) -> Self {
        let mut planner = FftPlanner::new();
        AdpPlan {
            antennas,
            subcarriers,
            angle: planner.plan_fft_forward(antennas),
            delay: planner.plan_fft_inverse(subcarriers),
        }
    }

    /// Angle-delay profile magnitudes, laid out like `h` (`[b][angle][delay]`).
    pub fn compute(&self, h: &Csi) -> Result<Vec<f64>> {
        if h.antennas != self.antennas || h.subcarriers != self.subcarriers {
            return Err(Error::invalid(format!(
                "ADP plan is {}x{}, CSI is {}x{}",
                self.antennas, self.subcarriers, h.antennas, h.subcarriers
            )));
        }
        let (m, w) = (self.antennas, self.subcarriers);
        let mut out = Vec::with_capacity(h.data.len());
        let mut block = vec![Complex64::new(0.0, 0.0); m * w];
        let mut column = vec![Complex64::new(0.0, 0.0); m];
        for b in 0..h.arrays {
            block.copy_from_slice(h.array(b));
            // Antenna axis: strided columns, copied out and back.
            for j in 0..w {
                for i in 0..m {
                    column[i] = block[i * w + j];
                }
                self.angle.process(&mut column);
                for i in 0..m {
                    block[i * w + j] = column[i];
                }
            }
            // Subcarrier axis: contiguous rows.
            for row in block.chunks_exact_mut(w) {
                self.delay.process(row);
            }
            out.extend(block.iter().map(|c| c.norm()));
        }
        Ok(out)
    }
}

/// Per-array 2-D DFT magnitude: forward over antennas, inverse over subcarriers.
pub fn adp(h: &Csi) -> Vec<f64> {
    AdpPlan::new(h.antennas, h.subcarriers)
        .compute(h)
        .expect("plan built for this shape")
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cosine dissimilarity of two ADP vectors, clamped to [0, 1].
pub fn cosine_dissimilarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("ADP vectors differ in length"));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 1.0))
}

/// `1 - <A1, A2> / (|A1| |A2|)` with `A = adp(h)`.
pub fn d_adp(h1: &Csi, h2: &Csi) -> Result<f64> {
    if (h1.arrays, h1.antennas, h1.subcarriers) != (h2.arrays, h2.antennas, h2.subcarriers) {
        return Err(Error::invalid("CSI tensors differ in shape"));
    }
    let plan = AdpPlan::new(h1.antennas, h1.subcarriers);
    cosine_dissimilarity(&plan.compute(h1)?, &plan.compute(h2)?)
}

/// Encoder input: ADP magnitudes flattened and scaled to unit norm.
pub fn preprocess(h: &Csi) -> Result<Vec<f64>> {
    preprocess_with(&AdpPlan::new(h.antennas, h.subcarriers), h)
}

pub fn preprocess_with(plan: &AdpPlan, h: &Csi) -> Result<Vec<f64>> {
    if !h.is_finite() {
        return Err(Error::NonFinite("preprocess input"));
    }
    let mut a = plan.compute(h)?;
    let n = norm(&a);
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    a.iter_mut().for_each(|x| *x /= n);
    Ok(a)
}
