//! Chart quality against ground-truth positions.

use std::cmp::Ordering;
use std::io::Write;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::rng;

pub type Point = [f64; 2];

/// Bins used by [`rajski_distance`] in reports.
pub const RAJSKI_BINS: usize = 16;
/// Upper bound on the number of pairs entering the Rajski histogram.
pub const RAJSKI_MAX_PAIRS: usize = 200_000;
const RAJSKI_SEED: u64 = 0x4AD5;

pub(crate) fn sq_dist(a: Point, b: Point) -> f64 {
    let (x, y) = (a[0] - b[0], a[1] - b[1]);
    x * x + y * y
}

fn dist(a: Point, b: Point) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Neighbourhood size used in reports: 5 % of `n`, at least 5.
pub fn default_k(n: usize) -> usize {
    (n / 20).max(5)
}

/// `rank[i * n + j]`: position of `j` among the other points sorted by
/// distance from `i` (1-based, ties by index). The diagonal is 0.
fn rank_table(x: &[Point]) -> Vec<usize> {
    let n = x.len();
    let mut rank = vec![0; n * n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut d = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            d[j] = sq_dist(x[i], x[j]);
        }
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        for (r, &j) in order.iter().enumerate() {
            rank[i * n + j] = r + 1;
        }
    }
    rank
}

/// Continuity and trustworthiness of chart `z` for positions `p`, using `k`
/// nearest neighbours. Requires `n > 3k`.
pub fn continuity_trustworthiness(p: &[Point], z: &[Point], k: usize) -> Result<(f64, f64)> {
    let n = p.len();
    if z.len() != n {
        return Err(Error::invalid("positions and chart differ in length"));
    }
    if k == 0 || n <= 3 * k {
        return Err(Error::invalid(format!("need n > 3k and k >= 1, got n = {n}, k = {k}")));
    }
    let rp = rank_table(p);
    let rz = rank_table(z);
    let (mut ct, mut tw) = (0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (rp[i * n + j], rz[i * n + j]);
            if b <= k && a > k {
                tw += a - k;
            }
            if a <= k && b > k {
                ct += b - k;
            }
        }
    }
    let norm = 2.0 / (n as f64 * k as f64 * (2 * n - 3 * k - 1) as f64);
    Ok((1.0 - norm * ct as f64, 1.0 - norm * tw as f64))
}

/// Kruskal stress with the least-squares scale on the chart distances.
/// A fully coincident chart has no defined scale and scores 1.
pub fn kruskal_stress(p: &[Point], z: &[Point]) -> Result<f64> {
    let n = p.len();
    if z.len() != n || n < 2 {
        return Err(Error::invalid("need at least two matching points"));
    }
    let (mut pz, mut zz, mut pp) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (dist(p[i], p[j]), dist(z[i], z[j]));
            pz += a * b;
            zz += b * b;
            pp += a * a;
        }
    }
    if pp == 0.0 {
        return Err(Error::invalid("all true positions coincide"));
    }
    if zz == 0.0 {
        return Ok(1.0);
    }
    let beta = pz / zz;
    let mut res = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            res += (dist(p[i], p[j]) - beta * dist(z[i], z[j])).powi(2);
        }
    }
    Ok((res / pp).sqrt().clamp(0.0, 1.0))
}

/// Equal-frequency bin of every value: thresholds sit at the order
/// statistics `floor(b n / bins)`, and equal values share a bin.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let thresholds: Vec<f64> = (1..bins).map(|b| sorted[b * n / bins]).collect();
    values
        .iter()
        .map(|v| thresholds.partition_point(|t| t <= v))
        .collect()
}

/// `1 - I(X;Y) / H(X,Y)` from a joint count table.
pub fn rajski_from_joint(joint: &[Vec<u64>]) -> f64 {
    let total: u64 = joint.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let rows: Vec<u64> = joint.iter().map(|r| r.iter().sum()).collect();
    let cols_len = joint.iter().map(Vec::len).max().unwrap_or(0);
    let cols: Vec<u64> = (0..cols_len)
        .map(|c| joint.iter().map(|r| r.get(c).copied().unwrap_or(0)).sum())
        .collect();
    let entropy = |counts: &mut dyn Iterator<Item = u64>| -> f64 {
        counts
            .filter(|&c| c > 0)
            .map(|c| {
                let q = c as f64 / n;
                -q * q.ln()
            })
            .sum()
    };
    let occupied_x = rows.iter().filter(|&&c| c > 0).count();
    let occupied_y = cols.iter().filter(|&&c| c > 0).count();
    if occupied_x <= 1 || occupied_y <= 1 {
        return if occupied_x > 1 || occupied_y > 1 { 1.0 } else { 0.0 };
    }
    let hx = entropy(&mut rows.iter().copied());
    let hy = entropy(&mut cols.iter().copied());
    let hxy = entropy(&mut joint.iter().flatten().copied());
    let mi = hx + hy - hxy;
    (1.0 - mi / hxy).clamp(0.0, 1.0)
}

/// Rajski distance between binned true and chart pair distances. At most
/// [`RAJSKI_MAX_PAIRS`] pairs are used, drawn with a fixed seed.
pub fn rajski_distance(p: &[Point], z: &[Point], bins: usize) -> Result<f64> {
    let n = p.len();
    if z.len() != n || n < 2 {
        return Err(Error::invalid("need at least two matching points"));
    }
    if bins < 2 {
        return Err(Error::invalid("need at least two bins"));
    }
    let total = n * (n - 1) / 2;
    let chosen: Option<Vec<usize>> = (total > RAJSKI_MAX_PAIRS).then(|| {
        let mut v = sample(&mut rng(RAJSKI_SEED), total, RAJSKI_MAX_PAIRS).into_vec();
        v.sort_unstable();
        v
    });
    let mut dp = Vec::with_capacity(total.min(RAJSKI_MAX_PAIRS));
    let mut dz = Vec::with_capacity(dp.capacity());
    let mut next = 0;
    let mut k = 0;
    'outer: for i in 0..n {
        for j in i + 1..n {
            let take = match &chosen {
                None => true,
                Some(c) => {
                    if next == c.len() {
                        break 'outer;
                    }
                    c[next] == k
                }
            };
            if take {
                dp.push(dist(p[i], p[j]));
                dz.push(dist(z[i], z[j]));
                next += 1;
            }
            k += 1;
        }
    }
    rajski_from_distances(&dp, &dz, bins)
}

/// Rajski distance between two paired lists of distances.
pub fn rajski_from_distances(dp: &[f64], dz: &[f64], bins: usize) -> Result<f64> {
    if dp.len() != dz.len() || dp.is_empty() {
        return Err(Error::invalid("distance lists must be non-empty and paired"));
    }
    if bins < 2 {
        return Err(Error::invalid("need at least two bins"));
    }
    let bx = equal_frequency_bins(dp, bins);
    let by = equal_frequency_bins(dz, bins);
    let mut joint = vec![vec![0u64; bins]; bins];
    for (&x, &y) in bx.iter().zip(&by) {
        joint[x][y] += 1;
    }
    Ok(rajski_from_joint(&joint))
}

/// CT, TW, KS and RD of one chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub ct: f64,
    pub tw: f64,
    pub ks: f64,
    pub rd: f64,
    pub k: usize,
    pub n: usize,
}

impl MetricsReport {
    /// All four metrics with `k = default_k(n)` and [`RAJSKI_BINS`] bins.
    pub fn compute(p: &[Point], z: &[Point]) -> Result<Self> {
        let n = p.len();
        let k = default_k(n);
        let (ct, tw) = continuity_trustworthiness(p, z, k)?;
        Ok(MetricsReport {
            ct,
            tw,
            ks: kruskal_stress(p, z)?,
            rd: rajski_distance(p, z, RAJSKI_BINS)?,
            k,
            n,
        })
    }

    /// `metric,value,k,n`, one row per metric. `k` is empty for KS and RD.
    pub fn write_csv(&self, w: &mut impl Write, header: bool) -> Result<()> {
        if header {
            writeln!(w, "metric,value,k,n")?;
        }
        writeln!(w, "ct,{},{},{}", self.ct, self.k, self.n)?;
        writeln!(w, "tw,{},{},{}", self.tw, self.k, self.n)?;
        writeln!(w, "ks,{},,{}", self.ks, self.n)?;
        writeln!(w, "rd,{},,{}", self.rd, self.n)?;
        Ok(())
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "CT {:.4}  TW {:.4}  KS {:.4}  RD {:.4}  (k = {}, n = {})",
            self.ct, self.tw, self.ks, self.rd, self.k, self.n
        )
    }
}
