//! `CHARTJEPA-CKPT v1` checkpoints.
//!
//! Text header (architecture, cell kind, widths, seed, training step plus any
//! provenance entries), then every tensor of the online encoder, the target
//! encoder and the predictor in declaration order. Each tensor is written as
//! `rows: u32, cols: u32` followed by `rows * cols` little-endian `f32`s.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::{join, read_f32s, read_u32, split_list, write_f32s, Header};
use crate::models::{init_models, CellKind, Encoder, ModelConfig, Params, Predictor};
use crate::ndnum::Matrix;
use crate::scalar::Scalar;

pub const CKPT_MAGIC: &str = "CHARTJEPA-CKPT v1";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub input_dim: usize,
    pub model: ModelConfig,
    pub seed: u64,
    pub step: u64,
    /// Free-form provenance (tool version, config hash, stage, ...).
    pub extra: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub meta: CheckpointMeta,
    pub online: Encoder<T>,
    pub target: Encoder<T>,
    pub predictor: Predictor<T>,
}

impl<T: Scalar> Checkpoint<T> {
    /// Randomly initialised models with the target a copy of the online encoder.
    pub fn fresh(model: &ModelConfig, input_dim: usize, seed: u64) -> Result<Self> {
        let (online, predictor) = init_models(model, input_dim, seed)?;
        Ok(Checkpoint {
            meta: CheckpointMeta {
                input_dim,
                model: model.clone(),
                seed,
                step: 0,
                extra: Vec::new(),
            },
            target: online.clone(),
            online,
            predictor,
        })
    }

    fn header(&self) -> Header {
        let m = &self.meta;
        let mut h = Header::new();
        h.push("input_dim", m.input_dim)
            .push("encoder_widths", join(&m.model.encoder_widths))
            .push("cell", m.model.cell)
            .push("hidden", m.model.hidden)
            .push("head_hidden", m.model.head_hidden)
            .push("input_gain", format!("{:?}", m.model.input_gain))
            .push("seed", m.seed)
            .push("step", m.step);
        let count = self.online.tensors().len() * 2 + self.predictor.tensors().len();
        h.push("tensors", count);
        for (k, v) in &m.extra {
            h.push(format!("extra.{k}"), v);
        }
        h
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        self.header().write(CKPT_MAGIC, w)?;
        let tensors = self
            .online
            .tensors()
            .into_iter()
            .chain(self.target.tensors())
            .chain(self.predictor.tensors());
        for t in tensors {
            w.write_all(&(t.rows() as u32).to_le_bytes())?;
            w.write_all(&(t.cols() as u32).to_le_bytes())?;
            write_f32s(w, t.data().iter().map(|x| x.as_f64() as f32))?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl std::io::BufRead) -> Result<Self> {
        const WHAT: &str = "checkpoint";
        let h = Header::read(CKPT_MAGIC, WHAT, r)?;
        let model = ModelConfig {
            encoder_widths: split_list(WHAT, h.require(WHAT, "encoder_widths")?)?,
            cell: h.require(WHAT, "cell")?.parse::<CellKind>()?,
            hidden: h.parse(WHAT, "hidden")?,
            head_hidden: h.parse(WHAT, "head_hidden")?,
            input_gain: h.parse(WHAT, "input_gain")?,
        };
        let input_dim: usize = h.parse(WHAT, "input_dim")?;
        let extra = h
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("extra.").map(|k| (k.to_string(), v.clone())))
            .collect();
        let mut ck = Checkpoint::<T>::fresh(&model, input_dim, 0)?;
        ck.meta = CheckpointMeta {
            input_dim,
            model,
            seed: h.parse(WHAT, "seed")?,
            step: h.parse(WHAT, "step")?,
            extra,
        };
        let declared: usize = h.parse(WHAT, "tensors")?;
        let slots: Vec<&mut Matrix<T>> = ck
            .online
            .tensors_mut()
            .into_iter()
            .chain(ck.target.tensors_mut())
            .chain(ck.predictor.tensors_mut())
            .collect();
        if slots.len() != declared {
            return Err(Error::format(
                WHAT,
                format!("header declares {declared} tensors, architecture has {}", slots.len()),
            ));
        }
        for (i, slot) in slots.into_iter().enumerate() {
            let rows = read_u32(r)? as usize;
            let cols = read_u32(r)? as usize;
            if (rows, cols) != slot.shape() {
                return Err(Error::format(
                    WHAT,
                    format!("tensor {i}: stored {rows}x{cols}, expected {:?}", slot.shape()),
                ));
            }
            let data = read_f32s(r, rows * cols)?;
            for (dst, src) in slot.data_mut().iter_mut().zip(data) {
                *dst = T::lit(src as f64);
            }
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::format(WHAT, "trailing bytes after last tensor"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    /// Round every parameter through `f32`, the storage precision.
    pub fn quantize(&mut self) {
        let tensors = self
            .online
            .tensors_mut()
            .into_iter()
            .chain(self.target.tensors_mut())
            .chain(self.predictor.tensors_mut());
        for t in tensors {
            for x in t.data_mut() {
                *x = T::lit(x.as_f64() as f32 as f64);
            }
        }
    }
}
