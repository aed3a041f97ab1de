use std::io::Write;
use std::time::Duration;

use crate::error::Result;
use crate::training::pretrain::PretrainLog;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

/// Everything recorded during one `train` call.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epoch_loss: Vec<f64>,
    /// Principal variances of the online chart on the probe set, largest first.
    pub chart_variance: Vec<[f64; 2]>,
    pub pretrain: Option<PretrainLog>,
    pub wall_time: Duration,
}

impl TrainLog {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty() && self.pretrain.is_none()
    }

    /// Largest and mean gradient norm over all steps.
    pub fn grad_norm_stats(&self) -> Option<(f64, f64)> {
        if self.steps.is_empty() {
            return None;
        }
        let max = self.steps.iter().map(|s| s.grad_norm).fold(0.0, f64::max);
        let mean = self.steps.iter().map(|s| s.grad_norm).sum::<f64>() / self.steps.len() as f64;
        Some((max, mean))
    }

    /// `step,epoch,loss,lr,grad_norm`, one row per step. Wall time is left out
    /// so that the file only depends on the inputs.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "step,epoch,loss,lr,grad_norm")?;
        for s in &self.steps {
            writeln!(w, "{},{},{},{},{}", s.step, s.epoch, s.loss, s.lr, s.grad_norm)?;
        }
        Ok(())
    }
}
