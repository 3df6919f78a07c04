//! Geometry/color attribute covariance and its pooling across two clouds.

use serde::{Deserialize, Serialize};

use super::KahanSum;
use crate::pointcloud::PointCloud;

/// Symmetric 2×2 matrix over the (geometry mean, weighted color) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub gg: f64,
    pub gc: f64,
    pub cc: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 {
        gg: 1.0,
        gc: 0.0,
        cc: 1.0,
    };

    pub fn new(gg: f64, gc: f64, cc: f64) -> Self {
        Self { gg, gc, cc }
    }

    pub fn trace(&self) -> f64 {
        self.gg + self.cc
    }

    pub fn determinant(&self) -> f64 {
        self.gg * self.cc - self.gc * self.gc
    }

    pub fn to_array(&self) -> [[f64; 2]; 2] {
        [[self.gg, self.gc], [self.gc, self.cc]]
    }

    /// `v · S⁻¹ · vᵀ`, or `None` when the matrix is not positive definite.
    pub fn inverse_quadratic_form(&self, v: [f64; 2]) -> Option<f64> {
        let det = self.determinant();
        if !(det > 0.0 && self.gg > 0.0) {
            return None;
        }
        let [a, b] = v;
        Some((self.cc * a * a - 2.0 * self.gc * a * b + self.gg * b * b) / det)
    }
}

/// Population covariance of the per-point `(ḡ, c̄)` attribute pairs.
pub fn attribute_covariance(cloud: &PointCloud) -> Sym2 {
    let n = cloud.len() as f64;
    let attributes = || cloud.points().iter().map(|p| p.weighted_attributes());

    let mut sum_g = KahanSum::default();
    let mut sum_c = KahanSum::default();
    for (g, c) in attributes() {
        sum_g.add(g);
        sum_c.add(c);
    }
    let mean_g = sum_g.value() / n;
    let mean_c = sum_c.value() / n;

    let mut gg = KahanSum::default();
    let mut gc = KahanSum::default();
    let mut cc = KahanSum::default();
    for (g, c) in attributes() {
        let dg = g - mean_g;
        let dc = c - mean_c;
        gg.add(dg * dg);
        gc.add(dg * dc);
        cc.add(dc * dc);
    }
    Sym2::new(gg.value() / n, gc.value() / n, cc.value() / n)
}

/// Covariance pooled over the reference and test clouds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledCovariance {
    /// Count-weighted mean of the two per-cloud covariances.
    pub raw: Sym2,
    /// `raw + εI` with `ε = 1e-9 · max(1, trace(raw))`; this is the matrix
    /// that gets inverted.
    pub regularized: Sym2,
    pub n_reference: usize,
    pub n_test: usize,
}

pub const REGULARIZATION: f64 = 1e-9;

impl PooledCovariance {
    /// Pools two covariances by point count and regularizes the result.
    pub fn from_parts(s_reference: Sym2, n_reference: usize, s_test: Sym2, n_test: usize) -> Self {
        let na = n_reference as f64;
        let nb = n_test as f64;
        let total = na + nb;
        let raw = Sym2::new(
            (na * s_reference.gg + nb * s_test.gg) / total,
            (na * s_reference.gc + nb * s_test.gc) / total,
            (na * s_reference.cc + nb * s_test.cc) / total,
        );
        Self::regularize(raw, n_reference, n_test)
    }

    /// Wraps a matrix that is already pooled, adding the `εI` ridge.
    pub fn regularize(raw: Sym2, n_reference: usize, n_test: usize) -> Self {
        let eps = REGULARIZATION * raw.trace().max(1.0);
        let regularized = Sym2::new(raw.gg + eps, raw.gc, raw.cc + eps);
        Self {
            raw,
            regularized,
            n_reference,
            n_test,
        }
    }
}

pub fn pooled_covariance(reference: &PointCloud, test: &PointCloud) -> PooledCovariance {
    PooledCovariance::from_parts(
        attribute_covariance(reference),
        reference.len(),
        attribute_covariance(test),
        test.len(),
    )
}
