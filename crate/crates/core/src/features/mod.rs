//! Encoder inputs and pretraining dissimilarities computed from raw CSI.

mod adp;
mod dissim;

pub use adp::{adp, cosine_dissimilarity, d_adp, preprocess, preprocess_with, AdpPlan};
pub use dissim::{geodesic_fused, DissimilarityMatrix, GeodesicConfig, SlotTag, DM_MAGIC};

use crate::channelsim::Dataset;
use crate::error::Result;
use crate::ndnum::Matrix;

/// Preprocessed feature rows for the samples `idx` (`idx.len() x B·M·W`).
pub fn dataset_features(ds: &Dataset, idx: &[usize]) -> Result<Matrix<f64>> {
    let plan = AdpPlan::new(ds.spec.antennas, ds.spec.subcarriers);
    let f = ds.spec.csi_len();
    let mut data = Vec::with_capacity(idx.len() * f);
    for &i in idx {
        data.extend(preprocess_with(&plan, &ds.csi(i)?)?);
    }
    Matrix::from_vec(idx.len(), f, data)
}

/// `d_ADP` between every pair of rows of unit-norm feature rows.
pub fn adp_matrix(features: &Matrix<f64>, indices: Vec<usize>) -> Result<DissimilarityMatrix> {
    let gram = features.matmul_t(false, features, true)?;
    DissimilarityMatrix::from_fn("adp", indices, |i, j| Ok((1.0 - gram.get(i, j)).clamp(0.0, 1.0)))
}

/// Fused geodesic over the samples `idx` of `ds`, with `d_ADP` as the local distance.
pub fn d_geodesic_fused(
    ds: &Dataset,
    idx: &[usize],
    features: &Matrix<f64>,
    cfg: &GeodesicConfig,
) -> Result<DissimilarityMatrix> {
    let local = adp_matrix(features, idx.to_vec())?;
    let tags: Vec<SlotTag> = idx
        .iter()
        .map(|&i| SlotTag {
            trajectory: ds.samples[i].trajectory,
            slot: ds.samples[i].slot,
        })
        .collect();
    geodesic_fused("geodesic", idx.to_vec(), &tags, &local, cfg)
}
