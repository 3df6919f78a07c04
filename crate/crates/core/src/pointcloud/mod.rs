//! Point-cloud data model: positions in voxel units, YUV colors on the 8-bit
//! scale, and optional unit normals.

mod color;
pub mod ply;

pub use color::{quantize_channel, rgb_to_yuv, yuv_to_rgb};

use thiserror::Error;

/// Tolerance on `|n| - 1` for normals attached to a cloud.
pub const NORMAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("point {index}: position component is not finite")]
    NonFinitePosition { index: usize },
    #[error("point {index}: color component {value} outside [0, 255]")]
    ColorOutOfRange { index: usize, value: f64 },
    #[error("normal count {normals} does not match point count {points}")]
    NormalCountMismatch { points: usize, normals: usize },
    #[error("normal {index} has norm {norm}, expected 1")]
    NonUnitNormal { index: usize, norm: f64 },
}

/// A single point: position `[x, y, z]` and color `[Y, U, V]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub position: [f64; 3],
    pub color: [f64; 3],
}

impl Point {
    pub fn new(position: [f64; 3], color: [f64; 3]) -> Self {
        Self { position, color }
    }

    /// Per-point scalar summaries used by the attribute covariance:
    /// the mean of the coordinates and the 6:1:1 weighted color.
    ///
    /// ```
    /// use pcrd::Point;
    /// let p = Point::new([1.0, 2.0, 3.0], [80.0, 16.0, 24.0]);
    /// assert_eq!(p.weighted_attributes(), (2.0, 65.0));
    /// ```
    pub fn weighted_attributes(&self) -> (f64, f64) {
        let [x, y, z] = self.position;
        let [luma, u, v] = self.color;
        ((x + y + z) / 3.0, (6.0 * luma + u + v) / 8.0)
    }

    fn validate(&self, index: usize) -> Result<(), CloudError> {
        if self.position.iter().any(|c| !c.is_finite()) {
            return Err(CloudError::NonFinitePosition { index });
        }
        if let Some(&value) = self
            .color
            .iter()
            .find(|c| !(0.0..=255.0).contains(*c))
        {
            return Err(CloudError::ColorOutOfRange { index, value });
        }
        Ok(())
    }
}

/// Ordered collection of points with an optional normal per point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point>,
    normals: Option<Vec<[f64; 3]>>,
    label: String,
}

impl PointCloud {
    /// Builds a cloud after checking every point. An empty cloud is allowed
    /// here; metric entry points reject it.
    pub fn new(points: Vec<Point>) -> Result<Self, CloudError> {
        for (index, point) in points.iter().enumerate() {
            point.validate(index)?;
        }
        Ok(Self {
            points,
            normals: None,
            label: String::new(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_normals(mut self, normals: Vec<[f64; 3]>) -> Result<Self, CloudError> {
        if normals.len() != self.points.len() {
            return Err(CloudError::NormalCountMismatch {
                points: self.points.len(),
                normals: normals.len(),
            });
        }
        for (index, n) in normals.iter().enumerate() {
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if !((norm - 1.0).abs() <= NORMAL_TOLERANCE) {
                return Err(CloudError::NonUnitNormal { index, norm });
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[[f64; 3]]> {
        self.normals.as_deref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = [f64; 3]> + '_ {
        self.points.iter().map(|p| p.position)
    }
}
