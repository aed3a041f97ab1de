//! Chart metrics and the region-classification downstream task.

mod downstream;
mod metrics;

pub use downstream::{
    downstream_accuracy, noise_sweep, stratified_subset, write_embedding_csv, AccuracyRow,
    DownstreamReport, DownstreamSetup, Method, OneNn, FIT_FRACTION,
};
pub use metrics::{
    continuity_trustworthiness, default_k, equal_frequency_bins, kruskal_stress, rajski_distance,
    rajski_from_distances, rajski_from_joint, MetricsReport, Point, RAJSKI_BINS, RAJSKI_MAX_PAIRS,
};

use crate::error::Result;
use crate::models::Encoder;
use crate::ndnum::Matrix;
use crate::scalar::Scalar;

/// Chart rows as points.
pub fn to_points<T: Scalar>(z: &Matrix<T>) -> Vec<Point> {
    (0..z.rows()).map(|r| [z.get(r, 0).as_f64(), z.get(r, 1).as_f64()]).collect()
}

/// Metrics of `encoder` on pre-computed feature rows with known positions.
pub fn chart_metrics<T: Scalar>(
    encoder: &Encoder<T>,
    features: &Matrix<T>,
    positions: &[Point],
) -> Result<MetricsReport> {
    let z = to_points(&encoder.encode_batch(features)?);
    MetricsReport::compute(positions, &z)
}
