//! Region classification of predicted chart points.

use std::io::Write;

use rand::seq::index::sample;

use crate::channelsim::{perturb_velocity, Dataset, Split};
use crate::error::{Error, Result};
use crate::evaluation::metrics::{sq_dist, Point};
use crate::features::dataset_features;
use crate::models::{Encoder, Predictor};
use crate::ndnum::Matrix;
use crate::rng::rng_for;
use crate::scalar::Scalar;
use crate::training::valid_windows;

/// Share of the test split used to fit the 1-NN classifier.
pub const FIT_FRACTION: f64 = 0.1;

/// 1-nearest-neighbour classifier on chart points. Ties go to the earlier point.
#[derive(Clone, Debug, PartialEq)]
pub struct OneNn {
    points: Vec<Point>,
    labels: Vec<usize>,
}

impl OneNn {
    /// Every region in `required` must have at least one fit point.
    pub fn fit(points: Vec<Point>, labels: Vec<usize>, required: &[usize]) -> Result<Self> {
        if points.len() != labels.len() || points.is_empty() {
            return Err(Error::invalid("1-NN needs matching, non-empty points and labels"));
        }
        if let Some(&r) = required.iter().find(|r| !labels.contains(r)) {
            return Err(Error::EmptyFitRegion(r));
        }
        Ok(OneNn { points, labels })
    }

    pub fn classify(&self, z: Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (p, &l) in self.points.iter().zip(&self.labels) {
            let d = sq_dist(*p, z);
            if d < best.0 {
                best = (d, l);
            }
        }
        best.1
    }
}

/// Per-region stratified sample of `idx`: `round(fraction · count)` from each
/// region present, at least one. Sorted.
pub fn stratified_subset(ds: &Dataset, idx: &[usize], fraction: f64, seed: u64) -> Vec<usize> {
    let mut rng = rng_for(seed, 0xF175);
    let mut out = Vec::new();
    for r in 0..ds.regions {
        let members: Vec<usize> = idx.iter().copied().filter(|&i| ds.samples[i].region == r).collect();
        if members.is_empty() {
            continue;
        }
        let m = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len());
        out.extend(sample(&mut rng, members.len(), m).into_iter().map(|k| members[k]));
    }
    out.sort_unstable();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    /// Predictor rollout from the first encoded channel.
    Rollout,
    /// Region of the first chart point kept for the whole window.
    Greedy,
    /// Every future channel encoded directly.
    Oracle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rollout, Method::Greedy, Method::Oracle];
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Rollout => "rollout",
            Method::Greedy => "greedy",
            Method::Oracle => "oracle",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccuracyRow {
    pub method: Method,
    pub horizon: usize,
    /// Angular-velocity bias in rad/s.
    pub bias: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DownstreamReport {
    pub rows: Vec<AccuracyRow>,
    /// Evaluation windows behind every row.
    pub windows: usize,
    /// Test samples per region.
    pub region_counts: Vec<usize>,
    /// Size of the 1-NN fit set.
    pub fit_points: usize,
}

impl DownstreamReport {
    pub fn accuracy(&self, method: Method, horizon: usize, bias: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.horizon == horizon && r.bias == bias)
            .map(|r| r.accuracy)
    }

    /// `method,horizon,bias,accuracy`, one row per cell.
    pub fn write_csv(&self, w: &mut impl Write, header: bool) -> Result<()> {
        if header {
            writeln!(w, "method,horizon,bias,accuracy")?;
        }
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.method, r.horizon, r.bias, r.accuracy)?;
        }
        Ok(())
    }
}

/// Test-split features, chart and 1-NN classifier shared by all cells of a sweep.
pub struct DownstreamSetup<T> {
    features: Matrix<T>,
    chart: Vec<Point>,
    classifier: OneNn,
    fit_points: usize,
    region_counts: Vec<usize>,
}

impl<T: Scalar> DownstreamSetup<T> {
    pub fn new(online: &Encoder<T>, ds: &Dataset, fit_fraction: f64, seed: u64) -> Result<Self> {
        let all: Vec<usize> = (0..ds.len()).collect();
        let features: Matrix<T> = dataset_features(ds, &all)?.cast();
        let test = ds.indices(Split::Test);
        if test.is_empty() {
            return Err(Error::invalid("dataset has no test split"));
        }
        let z = online.encode_batch(&features.select_rows(&test))?;
        let mut chart = vec![[f64::NAN; 2]; ds.len()];
        for (r, &i) in test.iter().enumerate() {
            chart[i] = [z.get(r, 0).as_f64(), z.get(r, 1).as_f64()];
        }
        if test.iter().any(|&i| !(chart[i][0].is_finite() && chart[i][1].is_finite())) {
            return Err(Error::NonFinite("test chart"));
        }
        let mut region_counts = vec![0; ds.regions];
        for &i in &test {
            region_counts[ds.samples[i].region] += 1;
        }
        let present: Vec<usize> = (0..ds.regions).filter(|&r| region_counts[r] > 0).collect();
        let fit = stratified_subset(ds, &test, fit_fraction, seed);
        let classifier = OneNn::fit(
            fit.iter().map(|&i| chart[i]).collect(),
            fit.iter().map(|&i| ds.samples[i].region).collect(),
            &present,
        )?;
        Ok(DownstreamSetup {
            features,
            chart,
            classifier,
            fit_points: fit.len(),
            region_counts,
        })
    }

    /// Accuracy of every method at every horizon for one velocity bias.
    /// Windows are all test starts that fit the longest horizon; accuracy at
    /// `H` is the share of windows whose chart point `H` steps ahead lands in
    /// the true region of that slot.
    pub fn run(
        &self,
        predictor: &Predictor<T>,
        ds: &Dataset,
        horizons: &[usize],
        bias: f64,
    ) -> Result<DownstreamReport> {
        let h_max = *horizons
            .iter()
            .max()
            .ok_or_else(|| Error::invalid("need at least one horizon"))?;
        if horizons.contains(&0) {
            return Err(Error::invalid("horizons must be at least 1"));
        }
        let windows = valid_windows(&ds.trajectories, Split::Test, h_max);
        if windows.is_empty() {
            return Err(Error::invalid(format!("no test window fits horizon {h_max}")));
        }
        let b = windows.len();
        let dt = ds.spec.slot_duration;

        let z0 = Matrix::from_fn(b, 2, |r, c| T::lit(self.chart[windows[r]][c]));
        let mut vel = vec![Matrix::<T>::zeros(b, 2); h_max];
        for (r, &n) in windows.iter().enumerate() {
            let vs: Vec<[f64; 2]> = (0..h_max).map(|t| ds.samples[n + t].velocity).collect();
            for (t, v) in perturb_velocity(&vs, bias, dt).into_iter().enumerate() {
                vel[t].set(r, 0, T::lit(v[0]));
                vel[t].set(r, 1, T::lit(v[1]));
            }
        }
        let preds = predictor.rollout_batch(&z0, &vel, T::lit(dt))?;

        // hits[method][t]: correct calls over all windows at step t + 1.
        let mut hits = vec![vec![0usize; h_max]; Method::ALL.len()];
        for (r, &n) in windows.iter().enumerate() {
            let greedy = self.classifier.classify(self.chart[n]);
            for t in 0..h_max {
                let truth = ds.samples[n + t + 1].region;
                let p = [preds[t].get(r, 0).as_f64(), preds[t].get(r, 1).as_f64()];
                let calls = [
                    self.classifier.classify(p),
                    greedy,
                    self.classifier.classify(self.chart[n + t + 1]),
                ];
                for (m, c) in calls.into_iter().enumerate() {
                    hits[m][t] += usize::from(c == truth);
                }
            }
        }
        let mut rows = Vec::with_capacity(horizons.len() * Method::ALL.len());
        for (m, method) in Method::ALL.into_iter().enumerate() {
            for &h in horizons {
                rows.push(AccuracyRow {
                    method,
                    horizon: h,
                    bias,
                    accuracy: hits[m][h - 1] as f64 / b as f64,
                });
            }
        }
        Ok(DownstreamReport {
            rows,
            windows: b,
            region_counts: self.region_counts.clone(),
            fit_points: self.fit_points,
        })
    }

    /// Online chart of test sample `i`.
    pub fn chart_point(&self, i: usize) -> Point {
        self.chart[i]
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }
}

/// One-shot downstream evaluation without velocity bias.
pub fn downstream_accuracy<T: Scalar>(
    online: &Encoder<T>,
    predictor: &Predictor<T>,
    ds: &Dataset,
    horizons: &[usize],
    fit_fraction: f64,
    seed: u64,
) -> Result<DownstreamReport> {
    DownstreamSetup::new(online, ds, fit_fraction, seed)?.run(predictor, ds, horizons, 0.0)
}

/// Downstream evaluation repeated for every angular-velocity bias (rad/s).
pub fn noise_sweep<T: Scalar>(
    online: &Encoder<T>,
    predictor: &Predictor<T>,
    ds: &Dataset,
    biases: &[f64],
    horizons: &[usize],
    fit_fraction: f64,
    seed: u64,
) -> Result<DownstreamReport> {
    let setup = DownstreamSetup::new(online, ds, fit_fraction, seed)?;
    let mut out: Option<DownstreamReport> = None;
    for &bias in biases {
        let rep = setup.run(predictor, ds, horizons, bias)?;
        match &mut out {
            None => out = Some(rep),
            Some(acc) => acc.rows.extend(rep.rows),
        }
    }
    out.ok_or_else(|| Error::invalid("need at least one bias value"))
}

/// `x,y,region,trajectory_id` for the samples `idx` with chart `z`.
pub fn write_embedding_csv(
    w: &mut impl Write,
    ds: &Dataset,
    idx: &[usize],
    z: &[Point],
) -> Result<()> {
    if idx.len() != z.len() {
        return Err(Error::invalid("embedding and index list differ in length"));
    }
    writeln!(w, "x,y,region,trajectory_id")?;
    for (&i, p) in idx.iter().zip(z) {
        let s = &ds.samples[i];
        writeln!(w, "{},{},{},{}", p[0], p[1], s.region, s.trajectory)?;
    }
    Ok(())
}
