//! Flat `section.key = value` run configuration.
//!
//! Built-in desk defaults, then an optional file, then `--section.key value`
//! flags. Unknown keys are rejected so that typos do not silently fall back to
//! a default.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chartjepa::channelsim::SimConfig;
use chartjepa::features::GeodesicConfig;
use chartjepa::models::{CellKind, ModelConfig};
use chartjepa::training::{PretrainConfig, PretrainKind, Stage, TrainConfig};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value for {key}: '{value}' ({reason})")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("flag --{0} needs a value")]
    MissingValue(String),
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

/// Every recognised key with its desk default.
fn defaults() -> BTreeMap<String, String> {
    let sim = SimConfig::desk();
    let model = ModelConfig::desk();
    let train = TrainConfig::desk();
    let pre = &train.pretrain;
    let geo = &pre.geodesic;
    let widths: Vec<String> = model.encoder_widths.iter().map(ToString::to_string).collect();
    [
        ("seed", sim.seed.to_string()),
        ("sim.trajectories", sim.trajectories.to_string()),
        ("sim.steps", sim.steps.to_string()),
        ("sim.test_trajectories", sim.test_trajectories.to_string()),
        ("sim.regions", sim.regions.to_string()),
        ("sim.antennas", sim.env.antennas.to_string()),
        ("sim.subcarriers", sim.env.subcarriers.to_string()),
        ("sim.snr_db", sim.env.snr_db.map_or("none".into(), |s| s.to_string())),
        ("model.encoder_widths", widths.join(",")),
        ("model.cell", model.cell.to_string()),
        ("model.hidden", model.hidden.to_string()),
        ("model.head_hidden", model.head_hidden.to_string()),
        ("model.input_gain", model.input_gain.to_string()),
        ("train.lr", train.lr.to_string()),
        ("train.batch", train.batch.to_string()),
        ("train.tau", train.tau.to_string()),
        ("train.weight_decay", train.weight_decay.to_string()),
        ("train.lr_decay", train.lr_decay.to_string()),
        ("train.horizon", train.horizon.to_string()),
        ("train.epochs", train.epochs.to_string()),
        ("pretrain.mode", "geodesic".into()),
        ("pretrain.fraction", pre.fraction.to_string()),
        ("pretrain.batch", pre.batch.to_string()),
        ("pretrain.epochs", pre.epochs.to_string()),
        ("pretrain.lr", pre.lr.to_string()),
        ("geodesic.k", geo.k.to_string()),
        ("geodesic.time_window", geo.time_window.to_string()),
        ("geodesic.speed_scale", geo.speed_scale.to_string()),
        ("eval.horizons", "10,25,50".into()),
        ("eval.biases", "0,pi/260,pi/130,pi/65".into()),
        ("eval.fit_fraction", "0.1".into()),
        ("paths.dataset", "desk.ds".into()),
        ("paths.checkpoint", "model.ckpt".into()),
        ("paths.init", "".into()),
        ("paths.out", "out".into()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_text(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            path: origin.to_string(),
            line: n + 1,
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// `(key, value)` pairs in command-line order.
pub type Overrides = Vec<(String, String)>;

/// Splits `--section.key value` and `--section.key=value` pairs (and plain
/// `--seed`) out of `args`, returning the overrides and the remaining arguments.
pub fn extract_overrides(args: Vec<String>) -> Result<(Overrides, Vec<String>)> {
    let mut overrides = Vec::new();
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !(key.contains('.') || key == "seed") {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| ConfigError::MissingValue(key.clone()))?,
        };
        overrides.push((key, value));
    }
    Ok((overrides, rest))
}

/// Resolved configuration: every key present, typed access on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new() -> Self {
        RunConfig { values: defaults() }
    }

    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::new();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.display().to_string(),
                source,
            })?;
            cfg.apply(&parse_text(&text, &path.display().to_string())?)?;
        }
        cfg.apply(overrides)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            match self.values.get_mut(k) {
                Some(slot) => *slot = v.clone(),
                None => return Err(ConfigError::UnknownKey(k.clone())),
            }
        }
        Ok(())
    }

    #[cfg(test)]
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        self.apply(&[(key.to_string(), value.into())])
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn bad(&self, key: &str, reason: impl ToString) -> ConfigError {
        ConfigError::Value {
            key: key.to_string(),
            value: self.raw(key).to_string(),
            reason: reason.to_string(),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key).parse().map_err(|e: T::Err| self.bad(key, e))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e: T::Err| self.bad(key, e)))
            .collect()
    }

    /// Numbers, optionally written as `pi/x` or `pi*x`.
    pub fn angles(&self, key: &str) -> Result<Vec<f64>> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_angle(s).ok_or_else(|| self.bad(key, "expected a number or pi/x")))
            .collect()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    /// `key = value` lines in key order: the canonical form that gets hashed.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of the canonical form, leaving out
    /// output locations so that moving a run does not change its hash.
    pub fn hash(&self) -> String {
        let text: String = self
            .values
            .iter()
            .filter(|(k, _)| !k.starts_with("paths."))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    pub fn sim(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::desk();
        cfg.seed = self.seed()?;
        cfg.trajectories = self.get("sim.trajectories")?;
        cfg.steps = self.get("sim.steps")?;
        cfg.test_trajectories = self.get("sim.test_trajectories")?;
        cfg.regions = self.get("sim.regions")?;
        cfg.env.antennas = self.get("sim.antennas")?;
        cfg.env.subcarriers = self.get("sim.subcarriers")?;
        cfg.env.snr_db = match self.raw("sim.snr_db") {
            "none" | "off" => None,
            _ => Some(self.get("sim.snr_db")?),
        };
        Ok(cfg)
    }

    pub fn model(&self) -> Result<ModelConfig> {
        Ok(ModelConfig {
            encoder_widths: self.list("model.encoder_widths")?,
            cell: self.get::<CellKind>("model.cell")?,
            hidden: self.get("model.hidden")?,
            head_hidden: self.get("model.head_hidden")?,
            input_gain: self.get("model.input_gain")?,
        })
    }

    pub fn pretrain_kind(&self) -> Result<PretrainKind> {
        self.get("pretrain.mode")
    }

    pub fn pretrain(&self, slot_duration: f64) -> Result<PretrainConfig> {
        Ok(PretrainConfig {
            fraction: self.get("pretrain.fraction")?,
            batch: self.get("pretrain.batch")?,
            epochs: self.get("pretrain.epochs")?,
            lr: self.get("pretrain.lr")?,
            geodesic: GeodesicConfig {
                k: self.get("geodesic.k")?,
                time_window: self.get("geodesic.time_window")?,
                speed_scale: self.get("geodesic.speed_scale")?,
                slot_duration,
            },
        })
    }

    pub fn train(&self, stage: Stage, slot_duration: f64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            lr: self.get("train.lr")?,
            batch: self.get("train.batch")?,
            tau: self.get("train.tau")?,
            weight_decay: self.get("train.weight_decay")?,
            lr_decay: self.get("train.lr_decay")?,
            horizon: self.get("train.horizon")?,
            epochs: self.get("train.epochs")?,
            seed: self.seed()?,
            stage,
            pretrain: self.pretrain(slot_duration)?,
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

impl RunConfig {
    /// Parses every typed section so that a bad value fails before any work.
    pub fn validate(&self) -> Result<()> {
        let sim = self.sim()?;
        sim.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.model()?;
        self.pretrain_kind()?;
        self.train(Stage::Jepa, sim.env.slot_duration)?
            .pretrain
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let horizons: Vec<usize> = self.list("eval.horizons")?;
        if horizons.contains(&0) {
            return Err(self.bad("eval.horizons", "horizons start at 1"));
        }
        self.angles("eval.biases")?;
        let f: f64 = self.get("eval.fit_fraction")?;
        if !(f > 0.0 && f <= 1.0) {
            return Err(self.bad("eval.fit_fraction", "must be in (0, 1]"));
        }
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::new()
    }
}

fn parse_angle(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("pi/") {
        return rest.trim().parse::<f64>().ok().map(|d| PI / d);
    }
    if let Some(rest) = s.strip_prefix("pi*") {
        return rest.trim().parse::<f64>().ok().map(|m| PI * m);
    }
    if s == "pi" {
        return Some(PI);
    }
    s.parse().ok()
}
