//! The five subcommands. Each reads its inputs, writes its artifacts and
//! returns a short human-readable summary for stdout.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chartjepa::channelsim::{Dataset, Split};
use chartjepa::evaluation::{noise_sweep, to_points, write_embedding_csv, MetricsReport};
use chartjepa::features::dataset_features;
use chartjepa::models::{Checkpoint, CheckpointMeta, ModelConfig};
use chartjepa::training::{
    pretrain_subset, run_pretraining, train, JepaState, PretrainKind, Stage,
};
use chartjepa::Error;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

pub const TOOL: &str = concat!("chartjepa ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for anything the operator can fix in the invocation, 2 for failures
    /// during the run itself.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Core(Error::InvalidArgument(_) | Error::Shape { .. }) => 1,
            CliError::Core(_) | CliError::Io { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// What `train` starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainStart {
    /// Stage 1 inline, then JEPA.
    Pretrain,
    /// Random encoder straight into JEPA.
    Scratch,
    /// Continue from `paths.init`.
    Init,
}

/// A resolved configuration plus the provenance stamped on every artifact.
pub struct Run {
    pub cfg: RunConfig,
}

impl Run {
    pub fn new(cfg: RunConfig) -> Self {
        Run { cfg }
    }

    fn provenance(&self, command: &str) -> Result<Vec<(String, String)>> {
        Ok(vec![
            ("tool".into(), TOOL.into()),
            ("command".into(), command.into()),
            ("config_hash".into(), self.cfg.hash()),
            ("seed".into(), self.cfg.seed()?.to_string()),
        ])
    }

    fn required(&self, key: &str) -> Result<PathBuf> {
        self.cfg
            .path(key)
            .ok_or_else(|| CliError::Usage(format!("{key} is not set")))
    }

    fn existing(&self, key: &str) -> Result<PathBuf> {
        let p = self.required(key)?;
        if !p.is_file() {
            return Err(CliError::Usage(format!("{key}: no such file {}", p.display())));
        }
        Ok(p)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.required("paths.out")?;
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(dir)
    }

    /// Opens a CSV in the output directory with provenance as `#` lines.
    fn csv(&self, dir: &Path, name: &str, command: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = dir.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        for (k, v) in self.provenance(command)? {
            writeln!(w, "# {k} = {v}").map_err(io_err(&path))?;
        }
        Ok((path, w))
    }

    fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
        w.flush().map_err(io_err(path))
    }

    /// Stage-1 stress per epoch as `epoch,stress`.
    fn write_stress(&self, dir: &Path, stress: &[f64], command: &str) -> Result<()> {
        let (path, mut w) = self.csv(dir, "pretrain_stress.csv", command)?;
        writeln!(w, "epoch,stress").map_err(io_err(&path))?;
        for (e, s) in stress.iter().enumerate() {
            writeln!(w, "{},{}", e + 1, s).map_err(io_err(&path))?;
        }
        Self::finish(&path, w)
    }

    /// Resolved configuration next to the other outputs.
    fn write_config(&self, dir: &Path, command: &str) -> Result<()> {
        let path = dir.join(format!("{command}.conf"));
        let mut text = String::new();
        for (k, v) in self.provenance(command)? {
            let _ = writeln!(text, "# {k} = {v}");
        }
        text.push_str(&self.cfg.canonical());
        fs::write(&path, text).map_err(io_err(&path))
    }

    fn load_dataset(&self) -> Result<Dataset> {
        let path = self.existing("paths.dataset")?;
        Ok(Dataset::load(&path)?.0)
    }

    fn load_checkpoint(&self, key: &str, ds: &Dataset) -> Result<Checkpoint<f64>> {
        let path = self.existing(key)?;
        let ck = Checkpoint::<f64>::load(&path)?;
        let f = ds.spec.csi_len();
        if ck.meta.input_dim != f {
            return Err(Error::Shape {
                op: "checkpoint input vs dataset features",
                left: (1, ck.meta.input_dim),
                right: (1, f),
            }
            .into());
        }
        Ok(ck)
    }

    fn save_checkpoint(
        &self,
        state: JepaState<f64>,
        model: ModelConfig,
        step: usize,
        stage: &str,
    ) -> Result<PathBuf> {
        let path = self.required("paths.checkpoint")?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut meta_extra = self.provenance("checkpoint")?;
        meta_extra.push(("stage".into(), stage.into()));
        let ck = Checkpoint {
            meta: CheckpointMeta {
                input_dim: state.online.input_dim(),
                model,
                seed: self.cfg.seed()?,
                step: step as u64,
                extra: meta_extra,
            },
            online: state.online,
            target: state.target,
            predictor: state.predictor,
        };
        ck.save(&path)?;
        Ok(path)
    }

    pub fn simulate(&self) -> Result<String> {
        let sim = self.cfg.sim()?;
        let (ds, _) = Dataset::generate(&sim)?;
        let path = self.required("paths.dataset")?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let extra = self.provenance("simulate")?;
        ds.save(&path, &extra)?;
        let manifest = manifest_path(&path);
        let mut w = BufWriter::new(File::create(&manifest).map_err(io_err(&manifest))?);
        let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        ds.write_manifest(&mut w, &name, &extra)?;
        w.flush().map_err(io_err(&manifest))?;

        let mut s = String::new();
        let _ = writeln!(s, "wrote {} ({} samples)", path.display(), ds.len());
        let _ = writeln!(s, "manifest {}", manifest.display());
        let _ = writeln!(
            s,
            "train {} / test {} samples",
            ds.indices(Split::Train).len(),
            ds.indices(Split::Test).len()
        );
        let _ = writeln!(s, "region histogram:");
        for (r, c) in ds.region_histogram().iter().enumerate() {
            let _ = writeln!(s, "  {r:>2} {c}");
        }
        Ok(s)
    }

    pub fn pretrain(&self) -> Result<String> {
        let ds = self.load_dataset()?;
        let kind = self.cfg.pretrain_kind()?;
        let pcfg = self.cfg.pretrain(ds.spec.slot_duration)?;
        let seed = self.cfg.seed()?;
        let model = self.cfg.model()?;
        let mut ck = Checkpoint::<f64>::fresh(&model, ds.spec.csi_len(), seed)?;
        let (log, dm) = run_pretraining(&ds, &mut ck.online, kind, &pcfg, seed)?;

        let idx = pretrain_subset(&ds, pcfg.fraction, seed);
        let features = dataset_features(&ds, &idx)?;
        let z = to_points(&ck.online.encode_batch(&features)?);
        let report = MetricsReport::compute(&ds.positions(&idx), &z)?;

        let dir = self.out_dir()?;
        let (path, mut w) = self.csv(&dir, "pretrain_metrics.csv", "pretrain")?;
        report.write_csv(&mut w, true)?;
        Self::finish(&path, w)?;
        self.write_stress(&dir, &log.stress, "pretrain")?;
        let dm_path = dir.join(format!("dissimilarity_{kind}.dm"));
        dm.save(&dm_path, &self.provenance("pretrain")?)?;
        self.write_config(&dir, "pretrain")?;

        let state = JepaState {
            target: ck.online.clone(),
            online: ck.online,
            predictor: ck.predictor,
        };
        let stage = match kind {
            PretrainKind::Adp => Stage::PretrainAdp,
            PretrainKind::Geodesic => Stage::PretrainGeodesic,
        };
        let ck_path = self.save_checkpoint(state, model, 0, &stage.to_string())?;

        let mut s = String::new();
        let _ = writeln!(s, "stage 1 ({kind}) on {} samples, {} steps", idx.len(), log.steps);
        let _ = writeln!(
            s,
            "stress {:.4} -> {:.4}, scale {:.4}",
            log.stress.first().copied().unwrap_or(f64::NAN),
            log.stress.last().copied().unwrap_or(f64::NAN),
            log.scale
        );
        let _ = writeln!(s, "subset chart: {report}");
        let _ = writeln!(s, "checkpoint {}", ck_path.display());
        Ok(s)
    }

    pub fn train(&self, start: TrainStart) -> Result<String> {
        let ds = self.load_dataset()?;
        let seed = self.cfg.seed()?;
        let (online, predictor, model, stage) = match start {
            TrainStart::Init => {
                // The architecture comes from the checkpoint, not from model.*.
                let ck = self.load_checkpoint("paths.init", &ds)?;
                (ck.online, ck.predictor, ck.meta.model, Stage::Jepa)
            }
            TrainStart::Scratch | TrainStart::Pretrain => {
                let model = self.cfg.model()?;
                let ck = Checkpoint::<f64>::fresh(&model, ds.spec.csi_len(), seed)?;
                let stage = match (start, self.cfg.pretrain_kind()?) {
                    (TrainStart::Scratch, _) => Stage::NoPretrain,
                    (_, PretrainKind::Adp) => Stage::PretrainAdp,
                    (_, PretrainKind::Geodesic) => Stage::PretrainGeodesic,
                };
                (ck.online, ck.predictor, model, stage)
            }
        };
        let tcfg = self.cfg.train(stage, ds.spec.slot_duration)?;
        let (state, log) = train(&ds, online, predictor, &tcfg)?;

        let dir = self.out_dir()?;
        let (path, mut w) = self.csv(&dir, "train_log.csv", "train")?;
        log.write_csv(&mut w)?;
        Self::finish(&path, w)?;
        if let Some(p) = &log.pretrain {
            self.write_stress(&dir, &p.stress, "train")?;
        }
        self.write_config(&dir, "train")?;
        let ck_path = self.save_checkpoint(state, model, log.steps.len(), &stage.to_string())?;

        let mut s = String::new();
        let _ = writeln!(s, "stage {stage}: {} JEPA steps over {} epochs", log.steps.len(), tcfg.epochs);
        if let Some(p) = &log.pretrain {
            let _ = writeln!(s, "stage 1 final stress {:.4}", p.stress.last().copied().unwrap_or(f64::NAN));
        }
        if let (Some(a), Some(b)) = (log.epoch_loss.first(), log.epoch_loss.last()) {
            let _ = writeln!(s, "epoch loss {a:.5} -> {b:.5}");
        }
        if let Some((mean, max)) = log.grad_norm_stats() {
            let _ = writeln!(s, "grad norm mean {mean:.4}, max {max:.4}");
        }
        let _ = writeln!(s, "checkpoint {}", ck_path.display());
        Ok(s)
    }

    pub fn evaluate(&self) -> Result<String> {
        let ds = self.load_dataset()?;
        let ck = self.load_checkpoint("paths.checkpoint", &ds)?;
        let horizons: Vec<usize> = self.cfg.list("eval.horizons")?;
        let biases = self.cfg.angles("eval.biases")?;
        let fit_fraction: f64 = self.cfg.get("eval.fit_fraction")?;
        if horizons.is_empty() || biases.is_empty() {
            return Err(CliError::Usage("eval.horizons and eval.biases must not be empty".into()));
        }
        let seed = self.cfg.seed()?;

        let test = ds.indices(Split::Test);
        let features = dataset_features(&ds, &test)?;
        let z = to_points(&ck.online.encode_batch(&features)?);
        let metrics = MetricsReport::compute(&ds.positions(&test), &z)?;
        let sweep = noise_sweep(&ck.online, &ck.predictor, &ds, &biases, &horizons, fit_fraction, seed)?;

        let dir = self.out_dir()?;
        let (path, mut w) = self.csv(&dir, "metrics.csv", "evaluate")?;
        metrics.write_csv(&mut w, true)?;
        Self::finish(&path, w)?;
        let (path, mut w) = self.csv(&dir, "downstream.csv", "evaluate")?;
        sweep.write_csv(&mut w, true)?;
        Self::finish(&path, w)?;
        let (path, mut w) = self.csv(&dir, "embedding.csv", "evaluate")?;
        write_embedding_csv(&mut w, &ds, &test, &z)?;
        Self::finish(&path, w)?;
        self.write_config(&dir, "evaluate")?;

        let mut s = String::new();
        let _ = writeln!(s, "test chart: {metrics}");
        let _ = writeln!(
            s,
            "downstream: {} windows, {} fit points, cell {}",
            sweep.windows,
            sweep.fit_points,
            ck.predictor.kind()
        );
        let _ = writeln!(s, "{:<8} {:>7} {:>8}  accuracy", "method", "horizon", "bias");
        for r in &sweep.rows {
            let _ = writeln!(s, "{:<8} {:>7} {:>8.5}  {:.3}", r.method, r.horizon, r.bias, r.accuracy);
        }
        let _ = writeln!(s, "reports in {}", dir.display());
        Ok(s)
    }

    /// Rolls the predictor from sample `start` over the next `horizon`
    /// recorded velocities.
    pub fn predict(&self, start: usize, horizon: Option<usize>) -> Result<String> {
        let ds = self.load_dataset()?;
        let ck = self.load_checkpoint("paths.checkpoint", &ds)?;
        let h = match horizon {
            Some(h) => h,
            None => self.cfg.get("train.horizon")?,
        };
        if h == 0 {
            return Err(CliError::Usage("horizon must be at least 1".into()));
        }
        let traj = ds
            .trajectories
            .iter()
            .find(|t| (t.start..t.end()).contains(&start))
            .ok_or_else(|| CliError::Usage(format!("sample {start} is out of range (0..{})", ds.len())))?;
        if start + h >= traj.end() {
            return Err(CliError::Usage(format!(
                "window {start}..={} leaves its trajectory (ends at {})",
                start + h,
                traj.end() - 1
            )));
        }
        let x = dataset_features(&ds, &[start])?;
        let z0 = ck.online.encode(x.row(0))?;
        let vel: Vec<[f64; 2]> = (start..start + h).map(|i| ds.samples[i].velocity).collect();
        let path_pred = ck.predictor.rollout(z0, &vel, ds.spec.slot_duration)?;

        let dir = self.out_dir()?;
        let (path, mut w) = self.csv(&dir, "prediction.csv", "predict")?;
        writeln!(w, "step,x,y").map_err(io_err(&path))?;
        writeln!(w, "0,{},{}", z0.0[0], z0.0[1]).map_err(io_err(&path))?;
        for (t, p) in path_pred.iter().enumerate() {
            writeln!(w, "{},{},{}", t + 1, p.0[0], p.0[1]).map_err(io_err(&path))?;
        }
        Self::finish(&path, w)?;

        let last = path_pred.last().map(|p| p.0).unwrap_or(z0.0);
        let mut s = String::new();
        let _ = writeln!(s, "sample {start}, trajectory {}, {h} steps", ds.samples[start].trajectory);
        let _ = writeln!(s, "chart ({:.4}, {:.4}) -> ({:.4}, {:.4})", z0.0[0], z0.0[1], last[0], last[1]);
        let _ = writeln!(s, "wrote {}", path.display());
        Ok(s)
    }
}

/// `desk.ds` -> `desk.ds.manifest`.
pub fn manifest_path(dataset: &Path) -> PathBuf {
    let mut s = dataset.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}
