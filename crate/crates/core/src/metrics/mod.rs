//! Distortion between a reference cloud and a test (decoded) cloud.
//!
//! Every one-sided measure walks the points of one cloud, looks up the
//! nearest point of the other, and averages a squared error with compensated
//! summation in point-index order. Bidirectional values take the max of the
//! two one-sided values. Geometry and color are then combined through the
//! inverse pooled attribute covariance into a single dimensionless
//! distortion `D`, reported in decibels as PC-PSNR with peak value 2.

mod covariance;
mod normals;

pub use covariance::{attribute_covariance, pooled_covariance, PooledCovariance, Sym2, REGULARIZATION};
pub use normals::{estimate_normals, estimate_normals_with, DEGENERATE_NORMAL};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::neighbor::{IndexError, Neighbor, NeighborIndex};
use crate::pointcloud::PointCloud;

/// Peak value used by PC-PSNR.
pub const PC_PSNR_PEAK: f64 = 2.0;

/// Luma and chroma weights of the overall color distortion (sum 8).
pub const COLOR_WEIGHTS: [f64; 3] = [6.0, 1.0, 1.0];

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric input cloud is empty")]
    EmptyCloud,
    #[error("neighbor index: {0}")]
    Index(#[from] IndexError),
    #[error("pooled covariance is not positive definite after regularization: {0:?}")]
    SingularCovariance(Sym2),
    #[error("unified distortion must be non-negative, got {0}")]
    NegativeDistortion(f64),
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

fn mean_of(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    let mut acc = KahanSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value() / n
}

/// Nearest reference neighbor of every test point, in test-index order.
pub fn correspondences(test: &PointCloud, reference: &NeighborIndex) -> Vec<Neighbor> {
    test.positions().map(|p| reference.nearest(&p)).collect()
}

/// Mean squared distance from each test point to its nearest reference point.
pub fn one_sided_point_to_point(test: &PointCloud, reference: &NeighborIndex) -> f64 {
    mean_of(test.positions().map(|p| reference.nearest(&p).squared_distance))
}

fn non_empty(cloud: &PointCloud) -> Result<(), MetricError> {
    if cloud.is_empty() {
        Err(MetricError::EmptyCloud)
    } else {
        Ok(())
    }
}

/// Symmetric point-to-point distance: the larger of the two one-sided values.
///
/// ```
/// use pcrd::{Point, PointCloud};
/// use pcrd::metrics::point_to_point;
/// let a = PointCloud::new(vec![Point::new([0.0; 3], [0.0; 3])]).unwrap();
/// let b = PointCloud::new(vec![
///     Point::new([0.0, 0.0, 1.0], [0.0; 3]),
///     Point::new([0.0; 3], [0.0; 3]),
/// ]).unwrap();
/// assert_eq!(point_to_point(&a, &b).unwrap(), 0.5);
/// ```
pub fn point_to_point(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricError> {
    non_empty(a)?;
    non_empty(b)?;
    let index_a = NeighborIndex::build(a)?;
    let index_b = NeighborIndex::build(b)?;
    Ok(one_sided_point_to_point(a, &index_b).max(one_sided_point_to_point(b, &index_a)))
}

fn plane_error(test: [f64; 3], reference: [f64; 3], normal: [f64; 3]) -> f64 {
    let projection = (test[0] - reference[0]) * normal[0]
        + (test[1] - reference[1]) * normal[1]
        + (test[2] - reference[2]) * normal[2];
    projection * projection
}

/// Mean squared projection of each test point's error vector onto the
/// normal of its nearest reference point.
pub fn one_sided_point_to_plane(
    test: &PointCloud,
    reference: &PointCloud,
    reference_index: &NeighborIndex,
    reference_normals: &[[f64; 3]],
) -> f64 {
    let refs = reference.points();
    mean_of(test.positions().map(|p| {
        let n = reference_index.nearest(&p);
        plane_error(p, refs[n.index].position, reference_normals[n.index])
    }))
}

fn normals_for(cloud: &PointCloud, index: &NeighborIndex, k: usize) -> Result<Vec<[f64; 3]>, IndexError> {
    if let Some(normals) = cloud.normals() {
        return Ok(normals.to_vec());
    }
    if k < 3 {
        return Err(IndexError::KOutOfRange { k, size: cloud.len() });
    }
    // Heavily decimated clouds can have fewer points than the neighborhood.
    match k.min(cloud.len()) {
        small if small < 3 => Ok(vec![DEGENERATE_NORMAL; cloud.len()]),
        k => estimate_normals_with(cloud, index, k),
    }
}

/// Symmetric point-to-plane distance. Normals attached to a cloud are used
/// as-is; missing ones are estimated with `normals_k` neighbors.
pub fn point_to_plane(a: &PointCloud, b: &PointCloud, normals_k: usize) -> Result<f64, MetricError> {
    non_empty(a)?;
    non_empty(b)?;
    let index_a = NeighborIndex::build(a)?;
    let index_b = NeighborIndex::build(b)?;
    let normals_a = normals_for(a, &index_a, normals_k)?;
    let normals_b = normals_for(b, &index_b, normals_k)?;
    Ok(one_sided_point_to_plane(a, b, &index_b, &normals_b)
        .max(one_sided_point_to_plane(b, a, &index_a, &normals_a)))
}

/// Per-channel mean squared color error `[Y, U, V]` over correspondences.
pub fn one_sided_color(test: &PointCloud, reference: &PointCloud, matches: &[Neighbor]) -> [f64; 3] {
    let refs = reference.points();
    let channel = |c: usize| {
        mean_of(test.points().iter().zip(matches).map(|(p, n)| {
            let e = p.color[c] - refs[n.index].color[c];
            e * e
        }))
    };
    [channel(0), channel(1), channel(2)]
}

/// `(6·Y + U + V) / 8`.
pub fn weighted_color(channels: [f64; 3]) -> f64 {
    (COLOR_WEIGHTS[0] * channels[0] + COLOR_WEIGHTS[1] * channels[1] + COLOR_WEIGHTS[2] * channels[2]) / 8.0
}

/// Color distortion in both directions plus the symmetric combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorDistortion {
    /// Test → reference, per channel.
    pub test_to_reference: [f64; 3],
    /// Reference → test, per channel.
    pub reference_to_test: [f64; 3],
    /// Channel-wise max of the two directions.
    pub channels: [f64; 3],
    /// Weighted combination of `channels`.
    pub weighted: f64,
}

impl ColorDistortion {
    fn from_sides(test_to_reference: [f64; 3], reference_to_test: [f64; 3]) -> Self {
        let channels = [0, 1, 2].map(|c| test_to_reference[c].max(reference_to_test[c]));
        Self {
            test_to_reference,
            reference_to_test,
            channels,
            weighted: weighted_color(channels),
        }
    }
}

pub fn color_distortion(reference: &PointCloud, test: &PointCloud) -> Result<ColorDistortion, MetricError> {
    non_empty(reference)?;
    non_empty(test)?;
    let index_r = NeighborIndex::build(reference)?;
    let index_t = NeighborIndex::build(test)?;
    let forward = one_sided_color(test, reference, &correspondences(test, &index_r));
    let backward = one_sided_color(reference, test, &correspondences(reference, &index_t));
    Ok(ColorDistortion::from_sides(forward, backward))
}

/// Covariance-weighted norm of the `(d_g, d_c)` distortion vector.
///
/// ```
/// use pcrd::metrics::{unified_distortion, PooledCovariance, Sym2};
/// let s = PooledCovariance::regularize(Sym2::IDENTITY, 1, 1);
/// let d = unified_distortion(3.0, 4.0, &s).unwrap();
/// assert!((d - 5.0).abs() < 1e-6);
/// ```
pub fn unified_distortion(d_g: f64, d_c: f64, covariance: &PooledCovariance) -> Result<f64, MetricError> {
    let s = covariance.regularized;
    let q = s
        .inverse_quadratic_form([d_g, d_c])
        .ok_or(MetricError::SingularCovariance(s))?;
    Ok(q.max(0.0).sqrt())
}

/// `10·log10(2² / D)`; `D = 0` maps to `+∞`.
pub fn pc_psnr(d: f64) -> Result<f64, MetricError> {
    if d.is_nan() || d < 0.0 {
        return Err(MetricError::NegativeDistortion(d));
    }
    if d == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PC_PSNR_PEAK * PC_PSNR_PEAK / d).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Neighborhood size for normal estimation.
    pub normals_k: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { normals_k: 12 }
    }
}

/// All distortion figures for one (reference, test) pair.
///
/// Serializes to a flat JSON object; an infinite `pc_psnr` is written as the
/// string `"inf"`.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub d_g: f64,
    pub d_p: f64,
    pub d_cY: f64,
    pub d_cU: f64,
    pub d_cV: f64,
    pub d_c: f64,
    pub D: f64,
    #[serde(serialize_with = "ser_psnr", deserialize_with = "de_psnr")]
    pub pc_psnr: f64,
    pub d_g_test_to_ref: f64,
    pub d_g_ref_to_test: f64,
    pub d_c_test_to_ref: f64,
    pub d_c_ref_to_test: f64,
    pub n_ref: usize,
    pub n_test: usize,
}

fn ser_psnr<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
    if value.is_infinite() && *value > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*value)
    }
}

fn de_psnr<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Psnr {
        Number(f64),
        Text(String),
    }
    match Psnr::deserialize(d)? {
        Psnr::Number(v) => Ok(v),
        Psnr::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Psnr::Text(t) => Err(serde::de::Error::custom(format!("invalid pc_psnr `{t}`"))),
    }
}

/// Computes every metric for `test` measured against `reference`.
///
/// Nearest-neighbor correspondences are computed once per direction and
/// shared by the geometry, plane and color terms.
pub fn full_report(
    reference: &PointCloud,
    test: &PointCloud,
    config: &MetricsConfig,
) -> Result<DistortionReport, MetricError> {
    non_empty(reference)?;
    non_empty(test)?;
    let index_r = NeighborIndex::build(reference)?;
    let index_t = NeighborIndex::build(test)?;
    let forward = correspondences(test, &index_r);
    let backward = correspondences(reference, &index_t);

    let d_g_fwd = mean_of(forward.iter().map(|n| n.squared_distance));
    let d_g_bwd = mean_of(backward.iter().map(|n| n.squared_distance));

    let normals_r = normals_for(reference, &index_r, config.normals_k)?;
    let normals_t = normals_for(test, &index_t, config.normals_k)?;
    let plane = |from: &PointCloud, to: &PointCloud, matches: &[Neighbor], normals: &[[f64; 3]]| {
        let targets = to.points();
        mean_of(
            from.positions()
                .zip(matches)
                .map(|(p, n)| plane_error(p, targets[n.index].position, normals[n.index])),
        )
    };
    let d_p_fwd = plane(test, reference, &forward, &normals_r);
    let d_p_bwd = plane(reference, test, &backward, &normals_t);

    let color = ColorDistortion::from_sides(
        one_sided_color(test, reference, &forward),
        one_sided_color(reference, test, &backward),
    );

    let d_g = d_g_fwd.max(d_g_bwd);
    let covariance = pooled_covariance(reference, test);
    let d = unified_distortion(d_g, color.weighted, &covariance)?;

    Ok(DistortionReport {
        d_g,
        d_p: d_p_fwd.max(d_p_bwd),
        d_cY: color.channels[0],
        d_cU: color.channels[1],
        d_cV: color.channels[2],
        d_c: color.weighted,
        D: d,
        pc_psnr: pc_psnr(d)?,
        d_g_test_to_ref: d_g_fwd,
        d_g_ref_to_test: d_g_bwd,
        d_c_test_to_ref: weighted_color(color.test_to_reference),
        d_c_ref_to_test: weighted_color(color.reference_to_test),
        n_ref: reference.len(),
        n_test: test.len(),
    })
}
