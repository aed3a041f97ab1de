//! Simulated datasets and their `CHARTJEPA-DS v1` / manifest files.
//!
//! Sample values are rounded to `f32` when generated, so writing and reading a
//! dataset is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::channelsim::{
    add_noise, assign_regions, generate_trajectory, synth_csi, ArrayPose, Bounds, Csi,
    EnvironmentSpec, MotionSpec, RegionMap, Scatterer,
};
use crate::error::{Error, Result};
use crate::format::{join, read_f32s, split_list, write_f32s, Header};
use crate::rng::{derive_seed, rng_for};

pub const DS_MAGIC: &str = "CHARTJEPA-DS v1";
pub const MANIFEST_MAGIC: &str = "CHARTJEPA-MANIFEST v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrajectoryInfo {
    pub start: usize,
    pub len: usize,
    pub split: Split,
}

impl TrajectoryInfo {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// One slot of one trajectory. Position and region are evaluation labels.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiSample {
    pub trajectory: usize,
    /// Slot index within the trajectory.
    pub slot: usize,
    /// `B * M * W` complex values as interleaved `re, im`.
    pub h: Vec<f32>,
    pub velocity: [f64; 2],
    pub position: [f64; 2],
    pub region: usize,
}

/// What to simulate.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub env: EnvironmentSpec,
    pub motion: MotionSpec,
    pub trajectories: usize,
    /// Slots per trajectory.
    pub steps: usize,
    /// The last `test_trajectories` trajectories form the test split.
    pub test_trajectories: usize,
    pub regions: usize,
    pub seed: u64,
}

impl SimConfig {
    /// 20 trajectories of 250 slots (5 000 samples), 4 held out, 10 regions.
    pub fn desk() -> Self {
        SimConfig {
            env: EnvironmentSpec::desk(),
            motion: MotionSpec::desk(),
            trajectories: 20,
            steps: 250,
            test_trajectories: 4,
            regions: 10,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.motion.validate()?;
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.trajectories == 0 || self.test_trajectories >= self.trajectories {
            return Err(Error::invalid(format!(
                "need at least one training trajectory ({} total, {} test)",
                self.trajectories, self.test_trajectories
            )));
        }
        if self.regions < 2 {
            return Err(Error::invalid("need at least 2 regions"));
        }
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: EnvironmentSpec,
    pub motion: MotionSpec,
    pub samples: Vec<CsiSample>,
    pub trajectories: Vec<TrajectoryInfo>,
    pub regions: usize,
    pub seed: u64,
}

fn q(x: f64) -> f64 {
    x as f32 as f64
}

impl Dataset {
    /// Simulates every trajectory and labels regions. Trajectory `i` draws its
    /// motion and its noise from their own seed streams.
    pub fn generate(cfg: &SimConfig) -> Result<(Dataset, RegionMap)> {
        cfg.validate()?;
        let env = &cfg.env;
        let mut samples = Vec::with_capacity(cfg.trajectories * cfg.steps);
        let mut trajectories = Vec::with_capacity(cfg.trajectories);
        for t in 0..cfg.trajectories {
            let states = generate_trajectory(
                &env.bounds,
                &cfg.motion,
                env.slot_duration,
                cfg.steps,
                derive_seed(cfg.seed, 2 * t as u64),
            )?;
            let mut noise = rng_for(cfg.seed, 2 * t as u64 + 1);
            trajectories.push(TrajectoryInfo {
                start: samples.len(),
                len: states.len(),
                split: if t + cfg.test_trajectories >= cfg.trajectories {
                    Split::Test
                } else {
                    Split::Train
                },
            });
            for (slot, s) in states.iter().enumerate() {
                let mut h = synth_csi(env, s.position)?;
                if let Some(snr) = env.snr_db {
                    add_noise(&mut h, snr, &mut noise);
                }
                samples.push(CsiSample {
                    trajectory: t,
                    slot,
                    h: h.to_interleaved(),
                    velocity: [q(s.velocity[0]), q(s.velocity[1])],
                    position: [q(s.position[0]), q(s.position[1])],
                    region: 0,
                });
            }
        }
        let mut ds = Dataset {
            spec: env.clone(),
            motion: cfg.motion.clone(),
            samples,
            trajectories,
            regions: 1,
            seed: cfg.seed,
        };
        let map = assign_regions(&mut ds, cfg.regions)?;
        Ok((ds, map))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn csi(&self, i: usize) -> Result<Csi> {
        Csi::from_interleaved(
            self.spec.num_arrays(),
            self.spec.antennas,
            self.spec.subcarriers,
            &self.samples[i].h,
        )
    }

    pub fn split_trajectories(&self, split: Split) -> impl Iterator<Item = &TrajectoryInfo> {
        self.trajectories.iter().filter(move |t| t.split == split)
    }

    /// Sample indices of a split, in time order per trajectory.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.split_trajectories(split)
            .flat_map(|t| t.start..t.end())
            .collect()
    }

    pub fn positions(&self, idx: &[usize]) -> Vec<[f64; 2]> {
        idx.iter().map(|&i| self.samples[i].position).collect()
    }

    pub fn region_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.regions];
        for s in &self.samples {
            h[s.region] += 1;
        }
        h
    }

    fn header(&self, extra: &[(String, String)]) -> Header {
        let s = &self.spec;
        let m = &self.motion;
        let mut h = Header::new();
        h.push("samples", self.samples.len())
            .push("seed", self.seed)
            .push("regions", self.regions)
            .push("arrays", s.arrays.len())
            .push("antennas", s.antennas)
            .push("subcarriers", s.subcarriers)
            .push(
                "array_poses",
                s.arrays
                    .iter()
                    .map(|a| format!("{} {} {}", a.position[0], a.position[1], a.boresight))
                    .collect::<Vec<_>>()
                    .join(","),
            )
            .push(
                "scatterers",
                s.scatterers
                    .iter()
                    .map(|a| format!("{} {} {}", a.position[0], a.position[1], a.gain))
                    .collect::<Vec<_>>()
                    .join(","),
            )
            .push("bandwidth", s.bandwidth)
            .push("carrier_freq", s.carrier_freq)
            .push(
                "bounds",
                join(&[s.bounds.min[0], s.bounds.min[1], s.bounds.max[0], s.bounds.max[1]]),
            )
            .push("slot_duration", s.slot_duration)
            .push(
                "snr_db",
                s.snr_db.map_or_else(|| "none".to_string(), |x| x.to_string()),
            )
            .push("motion.heading_step", m.heading_step)
            .push("motion.speed_reversion", m.speed_reversion)
            .push("motion.speed_noise", m.speed_noise)
            .push("motion.speed_mean", m.speed_mean)
            .push("motion.speed_min", m.speed_min)
            .push("motion.speed_max", m.speed_max)
            .push(
                "trajectory_lengths",
                join(&self.trajectories.iter().map(|t| t.len).collect::<Vec<_>>()),
            )
            .push(
                "test_trajectories",
                join(
                    &self
                        .trajectories
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| t.split == Split::Test)
                        .map(|(i, _)| i)
                        .collect::<Vec<_>>(),
                ),
            )
            .push("record", "csi_interleaved,vx,vy,px,py,region");
        for (k, v) in extra {
            h.push(format!("extra.{k}"), v);
        }
        h
    }

    /// Writes the dataset; `extra` entries land in the header as `extra.<key>`.
    pub fn write_to(&self, w: &mut impl Write, extra: &[(String, String)]) -> Result<()> {
        self.header(extra).write(DS_MAGIC, w)?;
        let f = 2 * self.spec.csi_len();
        for s in &self.samples {
            if s.h.len() != f {
                return Err(Error::invalid("sample CSI length disagrees with the array layout"));
            }
            write_f32s(w, s.h.iter().copied())?;
            write_f32s(
                w,
                [
                    s.velocity[0] as f32,
                    s.velocity[1] as f32,
                    s.position[0] as f32,
                    s.position[1] as f32,
                    s.region as f32,
                ],
            )?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<(Dataset, Vec<(String, String)>)> {
        const WHAT: &str = "dataset";
        let h = Header::read(DS_MAGIC, WHAT, r)?;
        let triples = |key: &str| -> Result<Vec<[f64; 3]>> {
            let raw = h.require(WHAT, key)?;
            if raw.is_empty() {
                return Ok(Vec::new());
            }
            raw.split(',')
                .map(|t| {
                    let v: Vec<f64> = t
                        .split(' ')
                        .map(|x| x.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::format(WHAT, format!("bad {key} entry '{t}'")))?;
                    <[f64; 3]>::try_from(v)
                        .map_err(|_| Error::format(WHAT, format!("bad {key} entry '{t}'")))
                })
                .collect()
        };
        let arrays = triples("array_poses")?
            .into_iter()
            .map(|[x, y, b]| ArrayPose {
                position: [x, y],
                boresight: b,
            })
            .collect::<Vec<_>>();
        let scatterers = triples("scatterers")?
            .into_iter()
            .map(|[x, y, g]| Scatterer {
                position: [x, y],
                gain: g,
            })
            .collect();
        let b: Vec<f64> = split_list(WHAT, h.require(WHAT, "bounds")?)?;
        if b.len() != 4 {
            return Err(Error::format(WHAT, "bounds needs 4 values"));
        }
        let snr_db = match h.require(WHAT, "snr_db")? {
            "none" => None,
            _ => Some(h.parse(WHAT, "snr_db")?),
        };
        let spec = EnvironmentSpec {
            arrays,
            antennas: h.parse(WHAT, "antennas")?,
            subcarriers: h.parse(WHAT, "subcarriers")?,
            bandwidth: h.parse(WHAT, "bandwidth")?,
            carrier_freq: h.parse(WHAT, "carrier_freq")?,
            scatterers,
            bounds: Bounds {
                min: [b[0], b[1]],
                max: [b[2], b[3]],
            },
            slot_duration: h.parse(WHAT, "slot_duration")?,
            snr_db,
        };
        spec.validate()?;
        if spec.arrays.len() != h.parse::<usize>(WHAT, "arrays")? {
            return Err(Error::format(WHAT, "array count disagrees with array_poses"));
        }
        let motion = MotionSpec {
            heading_step: h.parse(WHAT, "motion.heading_step")?,
            speed_reversion: h.parse(WHAT, "motion.speed_reversion")?,
            speed_noise: h.parse(WHAT, "motion.speed_noise")?,
            speed_mean: h.parse(WHAT, "motion.speed_mean")?,
            speed_min: h.parse(WHAT, "motion.speed_min")?,
            speed_max: h.parse(WHAT, "motion.speed_max")?,
        };
        let lengths: Vec<usize> = split_list(WHAT, h.require(WHAT, "trajectory_lengths")?)?;
        let test: Vec<usize> = split_list(WHAT, h.require(WHAT, "test_trajectories")?)?;
        let n: usize = h.parse(WHAT, "samples")?;
        if lengths.iter().sum::<usize>() != n {
            return Err(Error::format(WHAT, "trajectory lengths do not add up to the sample count"));
        }
        let regions: usize = h.parse(WHAT, "regions")?;
        let mut trajectories = Vec::with_capacity(lengths.len());
        let mut start = 0;
        for (i, &len) in lengths.iter().enumerate() {
            trajectories.push(TrajectoryInfo {
                start,
                len,
                split: if test.contains(&i) { Split::Test } else { Split::Train },
            });
            start += len;
        }

        let f = 2 * spec.csi_len();
        let mut samples = Vec::with_capacity(n);
        for (t, info) in trajectories.iter().enumerate() {
            for slot in 0..info.len {
                let h = read_f32s(r, f)?;
                let tail = read_f32s(r, 5)?;
                let region = tail[4];
                if region < 0.0 || region.fract() != 0.0 || region as usize >= regions.max(1) {
                    return Err(Error::format(WHAT, format!("bad region label {region}")));
                }
                if h.iter().chain(&tail).any(|x| !x.is_finite()) {
                    return Err(Error::format(WHAT, "non-finite sample value"));
                }
                samples.push(CsiSample {
                    trajectory: t,
                    slot,
                    h,
                    velocity: [tail[0] as f64, tail[1] as f64],
                    position: [tail[2] as f64, tail[3] as f64],
                    region: region as usize,
                });
            }
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::format(WHAT, "trailing bytes after last sample"));
        }
        let extra = h
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("extra.").map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok((
            Dataset {
                spec,
                motion,
                samples,
                trajectories,
                regions,
                seed: h.parse(WHAT, "seed")?,
            },
            extra,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>, extra: &[(String, String)]) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w, extra)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Dataset, Vec<(String, String)>)> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    /// Trajectory boundaries and split membership as a text manifest.
    pub fn write_manifest(
        &self,
        w: &mut impl Write,
        dataset_file: &str,
        extra: &[(String, String)],
    ) -> Result<()> {
        let mut h = Header::new();
        h.push("dataset", dataset_file)
            .push("samples", self.samples.len())
            .push("seed", self.seed)
            .push("trajectories", self.trajectories.len());
        for (i, t) in self.trajectories.iter().enumerate() {
            h.push(
                format!("trajectory.{i}"),
                format!("{},{},{}", t.start, t.end(), t.split.as_str()),
            );
        }
        for split in [Split::Train, Split::Test] {
            let ids: Vec<usize> = self
                .trajectories
                .iter()
                .enumerate()
                .filter(|(_, t)| t.split == split)
                .map(|(i, _)| i)
                .collect();
            h.push(format!("{}.trajectories", split.as_str()), join(&ids));
            h.push(format!("{}.samples", split.as_str()), self.indices(split).len());
        }
        for (k, v) in extra {
            h.push(format!("extra.{k}"), v);
        }
        h.write(MANIFEST_MAGIC, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn small() -> SimConfig {
        SimConfig {
            trajectories: 3,
            steps: 20,
            test_trajectories: 1,
            ..SimConfig::desk()
        }
    }

    #[test]
    fn generation_layout_and_determinism() {
        let (a, _) = Dataset::generate(&small()).unwrap();
        let (b, _) = Dataset::generate(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 60);
        assert_eq!(a.indices(Split::Train), (0..40).collect::<Vec<_>>());
        assert_eq!(a.indices(Split::Test), (40..60).collect::<Vec<_>>());
        assert_eq!(a.samples[25].trajectory, 1);
        assert_eq!(a.samples[25].slot, 5);
        assert!(a.samples.iter().all(|s| s.h.len() == 2 * 1024));
    }

    #[test]
    fn file_round_trip_is_lossless() {
        let (a, _) = Dataset::generate(&small()).unwrap();
        let extra = vec![("tool_version".to_string(), "0.1.0".to_string())];
        let mut buf = Vec::new();
        a.write_to(&mut buf, &extra).unwrap();
        let (b, e) = Dataset::read_from(&mut Cursor::new(buf.clone())).unwrap();
        assert_eq!(a, b);
        assert_eq!(e, extra);
        let mut again = Vec::new();
        b.write_to(&mut again, &extra).unwrap();
        assert_eq!(buf, again);

        let cut = buf[..buf.len() - 3].to_vec();
        assert!(Dataset::read_from(&mut Cursor::new(cut)).is_err());
        let mut longer = buf.clone();
        longer.push(0);
        assert!(Dataset::read_from(&mut Cursor::new(longer)).is_err());
    }

    #[test]
    fn zero_steps_rejected() {
        let cfg = SimConfig {
            steps: 0,
            ..small()
        };
        assert!(Dataset::generate(&cfg).is_err());
        let cfg = SimConfig {
            test_trajectories: 3,
            ..small()
        };
        assert!(Dataset::generate(&cfg).is_err());
    }

    #[test]
    fn manifest_lists_boundaries() {
        let (a, _) = Dataset::generate(&small()).unwrap();
        let mut buf = Vec::new();
        a.write_manifest(&mut buf, "data.ds", &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(MANIFEST_MAGIC));
        assert!(text.contains("trajectory.2 = 40,60,test"));
        assert!(text.contains("train.trajectories = 0,1"));
        assert!(text.contains("test.samples = 20"));
    }
}
