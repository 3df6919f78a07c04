//! Deterministic synthetic test clouds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pointcloud::{rgb_to_yuv, Point, PointCloud};

/// Environment variable that fixes the seed of generated test data.
pub const SEED_ENV: &str = "PCRD_SEED";

/// `PCRD_SEED` when set to an integer, else `default`.
pub fn seed_from_env(default: u64) -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(default)
}

/// A voxelized, textured blob inside a 10-bit cube.
///
/// Points lie on a lumpy sphere (radius 300 to 420 voxels, centered in
/// `[0, 1023]³`) with integer coordinates. Colors are smooth cosine patterns
/// of the offset from the center, a brightness ramp falling along
/// `x + y + z`, and a little per-point noise, converted from RGB to YUV.
/// The ramp makes geometry and color attributes negatively correlated.
pub fn textured_blob(points: usize, seed: u64) -> PointCloud {
    const CENTER: f64 = 511.5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lobes = 2.0 * rng.random_range(1..4) as f64;
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let freq = [
        rng.random_range(40.0..90.0),
        rng.random_range(40.0..90.0),
        rng.random_range(40.0..90.0),
    ];
    let mut out = Vec::with_capacity(points);
    for _ in 0..points {
        // Uniform direction on the sphere.
        let z: f64 = rng.random_range(-1.0..1.0);
        let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let s = (1.0 - z * z).sqrt();
        let dir = [s * theta.cos(), s * theta.sin(), z];
        let radius = 360.0 + 60.0 * (lobes * theta + phase).sin() * s;
        let position = dir.map(|d| (CENTER + radius * d).round());

        // Light from the low corner: brightness falls off along x + y + z.
        let shade = -30.0 * (position.iter().sum::<f64>() / 3.0 - CENTER) / 360.0;
        let mut channel = |axis: usize| {
            let wave = ((position[axis] - CENTER) / freq[axis]).cos();
            128.0 + shade + 80.0 * wave + rng.random_range(-6.0..6.0)
        };
        let (r, g, b) = (channel(0), channel(1), channel(2));
        out.push(Point::new(position, rgb_to_yuv(r, g, b)));
    }
    PointCloud::new(out)
        .expect("generated points are valid")
        .with_label(format!("textured-blob-{points}-{seed}"))
}

/// Uniform random positions in `[0, extent)³` and uniform colors; used by
/// property tests that need unstructured clouds.
pub fn uniform_cloud(points: usize, extent: f64, rng: &mut impl Rng) -> PointCloud {
    let out = (0..points)
        .map(|_| {
            Point::new(
                [rng.random::<f64>() * extent, rng.random::<f64>() * extent, rng.random::<f64>() * extent],
                [rng.random::<f64>() * 255.0, rng.random::<f64>() * 255.0, rng.random::<f64>() * 255.0],
            )
        })
        .collect();
    PointCloud::new(out).expect("generated points are valid")
}
