//! Partition of the room into `R` labelled regions.

use rand::Rng as _;

use crate::channelsim::{Bounds, Dataset};
use crate::error::{Error, Result};
use crate::rng::rng;

// Grid cells more elongated than this trigger the k-means fallback.
const MAX_CELL_ASPECT: f64 = 4.0;
const KMEANS_SEED: u64 = 0x4E61;
const KMEANS_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub enum RegionMap {
    /// `nx x ny` equal cells; region index is `iy * nx + ix`.
    Grid { bounds: Bounds, nx: usize, ny: usize },
    /// Nearest centroid.
    KMeans { centroids: Vec<[f64; 2]> },
}

impl RegionMap {
    /// Grid from the factor pair of `r` whose `nx / ny` is closest to the
    /// room's aspect ratio (in log scale). `None` if its cells are too elongated.
    pub fn grid(bounds: &Bounds, r: usize) -> Option<RegionMap> {
        let aspect = bounds.width() / bounds.height();
        let (nx, ny) = (1..=r)
            .filter(|nx| r.is_multiple_of(*nx))
            .map(|nx| (nx, r / nx))
            .min_by(|a, b| {
                let score = |(nx, ny): (usize, usize)| ((nx as f64 / ny as f64) / aspect).ln().abs();
                score(*a).total_cmp(&score(*b))
            })?;
        let cw = bounds.width() / nx as f64;
        let ch = bounds.height() / ny as f64;
        if cw.max(ch) / cw.min(ch) > MAX_CELL_ASPECT {
            return None;
        }
        Some(RegionMap::Grid {
            bounds: *bounds,
            nx,
            ny,
        })
    }

    pub fn count(&self) -> usize {
        match self {
            RegionMap::Grid { nx, ny, .. } => nx * ny,
            RegionMap::KMeans { centroids } => centroids.len(),
        }
    }

    pub fn classify(&self, p: [f64; 2]) -> usize {
        match self {
            RegionMap::Grid { bounds, nx, ny } => {
                let cell = |x: f64, lo: f64, span: f64, n: usize| {
                    (((x - lo) / span * n as f64).floor().max(0.0) as usize).min(n - 1)
                };
                let ix = cell(p[0], bounds.min[0], bounds.width(), *nx);
                let iy = cell(p[1], bounds.min[1], bounds.height(), *ny);
                iy * nx + ix
            }
            RegionMap::KMeans { centroids } => nearest(centroids, p),
        }
    }
}

fn sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(centroids: &[[f64; 2]], p: [f64; 2]) -> usize {
    let mut best = 0;
    for (i, c) in centroids.iter().enumerate() {
        if sq(*c, p) < sq(centroids[best], p) {
            best = i;
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding.
fn kmeans(points: &[[f64; 2]], k: usize) -> Result<Vec<[f64; 2]>> {
    if points.len() < k {
        return Err(Error::invalid(format!(
            "k-means needs at least {k} points, got {}",
            points.len()
        )));
    }
    let mut r = rng(KMEANS_SEED);
    let mut centroids = vec![points[r.gen_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq(*p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = r.gen_range(0.0..total);
            let mut pick = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            points[pick]
        } else {
            points[r.gen_range(0..points.len())]
        };
        centroids.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq(*p, next));
        }
    }
    for _ in 0..KMEANS_ITERS {
        let mut sums = vec![[0.0f64; 3]; k];
        for p in points {
            let c = nearest(&centroids, *p);
            sums[c][0] += p[0];
            sums[c][1] += p[1];
            sums[c][2] += 1.0;
        }
        let mut moved = false;
        for (c, s) in centroids.iter_mut().zip(&sums) {
            if s[2] > 0.0 {
                let next = [s[0] / s[2], s[1] / s[2]];
                moved |= next != *c;
                *c = next;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(centroids)
}

/// Labels every sample with its region and returns the partition used.
pub fn assign_regions(dataset: &mut Dataset, r: usize) -> Result<RegionMap> {
    if r < 2 {
        return Err(Error::invalid(format!("need at least 2 regions, got {r}")));
    }
    let map = match RegionMap::grid(&dataset.spec.bounds, r) {
        Some(g) => g,
        None => {
            let points: Vec<[f64; 2]> = dataset.samples.iter().map(|s| s.position).collect();
            RegionMap::KMeans {
                centroids: kmeans(&points, r)?,
            }
        }
    };
    for s in &mut dataset.samples {
        s.region = map.classify(s.position);
    }
    dataset.regions = r;
    Ok(map)
}
