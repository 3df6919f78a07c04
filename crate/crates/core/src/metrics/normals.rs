//! Surface normals from local principal component analysis.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::neighbor::{IndexError, NeighborIndex};
use crate::pointcloud::PointCloud;

/// Normal reported for a neighborhood collapsed onto a single position.
pub const DEGENERATE_NORMAL: [f64; 3] = [0.0, 0.0, 1.0];

/// Estimates one unit normal per point from its `k` nearest neighbors (the
/// point itself included).
///
/// The normal is the eigenvector of the smallest eigenvalue of the
/// neighborhood's position covariance, signed so that its largest-magnitude
/// component is positive.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<Vec<[f64; 3]>, IndexError> {
    let index = NeighborIndex::build(cloud)?;
    estimate_normals_with(cloud, &index, k)
}

/// Same as [`estimate_normals`] with a prebuilt index over `cloud`.
pub fn estimate_normals_with(
    cloud: &PointCloud,
    index: &NeighborIndex,
    k: usize,
) -> Result<Vec<[f64; 3]>, IndexError> {
    if k < 3 || k > cloud.len() {
        return Err(IndexError::KOutOfRange { k, size: cloud.len() });
    }
    let points = cloud.points();
    cloud
        .positions()
        .map(|query| {
            let neighborhood = index.nearest_k(&query, k)?;
            let positions = neighborhood.iter().map(|n| points[n.index].position);
            Ok(plane_normal(positions))
        })
        .collect()
}

fn plane_normal(positions: impl ExactSizeIterator<Item = [f64; 3]> + Clone) -> [f64; 3] {
    let n = positions.len() as f64;
    let mut mean = Vector3::zeros();
    for p in positions.clone() {
        mean += Vector3::from(p);
    }
    mean /= n;

    let mut cov = Matrix3::zeros();
    for p in positions {
        let d = Vector3::from(p) - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    if cov.iter().all(|&c| c == 0.0) {
        return DEGENERATE_NORMAL;
    }

    let eigen = SymmetricEigen::new(cov);
    let smallest = eigen.eigenvalues.imin();
    let mut normal: [f64; 3] = eigen.eigenvectors.column(smallest).into_owned().into();
    let length = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
    for c in &mut normal {
        *c /= length;
    }
    let dominant = (0..3)
        .max_by(|&a, &b| normal[a].abs().total_cmp(&normal[b].abs()).then(b.cmp(&a)))
        .unwrap();
    if normal[dominant] < 0.0 {
        for c in &mut normal {
            *c = -*c;
        }
    }
    normal
}
