//! Brute-force reference implementations used by the integration tests.
//!
//! Everything here is deliberately naive: linear scans, full sorts, plain
//! two-pass sums and a Jacobi eigensolver, sharing no code with the library.

#![allow(dead_code)]

use pcrd::{Point, PointCloud};
use rand::Rng;

pub fn d2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Nearest point by linear scan; ties go to the smaller index.
pub fn nearest(p: [f64; 3], cloud: &[Point]) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, q) in cloud.iter().enumerate() {
        let d = d2(p, q.position);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// The `k` nearest points by sorting every distance, ties by index.
pub fn nearest_k(p: [f64; 3], cloud: &[Point], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = cloud.iter().enumerate().map(|(i, q)| (d2(p, q.position), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut s = 0.0;
    for v in values {
        s += v;
        n += 1;
    }
    s / n as f64
}

pub fn p2point_one_sided(test: &[Point], reference: &[Point]) -> f64 {
    mean(test.iter().map(|p| nearest(p.position, reference).1))
}

pub fn p2point(a: &[Point], b: &[Point]) -> f64 {
    p2point_one_sided(a, b).max(p2point_one_sided(b, a))
}

/// Eigen-decomposition of a symmetric 3×3 matrix by cyclic Jacobi
/// rotations. Returns eigenvalues and eigenvectors as columns.
pub fn jacobi3(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _sweep in 0..100 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let diag = a[0][0].powi(2) + a[1][1].powi(2) + a[2][2].powi(2);
        if off <= 1e-36 * diag || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in &mut v {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Covariance of the `k` nearest neighbors of `p`; `None` when fewer than
/// three points are available or the neighborhood has no spread.
pub fn hood_covariance(p: [f64; 3], cloud: &[Point], k: usize) -> Option<[[f64; 3]; 3]> {
    let k = k.min(cloud.len());
    if k < 3 {
        return None;
    }
    let hood: Vec<[f64; 3]> = nearest_k(p, cloud, k).into_iter().map(|i| cloud[i].position).collect();
    let n = hood.len() as f64;
    let mut m = [0.0; 3];
    for q in &hood {
        for c in 0..3 {
            m[c] += q[c] / n;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for q in &hood {
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += (q[r] - m[r]) * (q[c] - m[c]) / n;
            }
        }
    }
    if cov.iter().flatten().all(|&x| x == 0.0) {
        None
    } else {
        Some(cov)
    }
}

/// Eigenvalues ascending with their unit eigenvectors.
fn eigen_sorted(cov: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let (values, vectors) = jacobi3(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let vals = order.map(|j| values[j]);
    let vecs = order.map(|j| {
        let v = [vectors[0][j], vectors[1][j], vectors[2][j]];
        let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        v.map(|x| x / len)
    });
    (vals, vecs)
}

fn orient(mut v: [f64; 3]) -> [f64; 3] {
    let dominant = (0..3)
        .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
        .unwrap();
    if v[dominant] < 0.0 {
        v = v.map(|x| -x);
    }
    v
}

/// PCA normal of the `k` nearest neighbors, unit length, largest-magnitude
/// component positive; `(0, 0, 1)` for a neighborhood with no spread.
pub fn normal(p: [f64; 3], cloud: &[Point], k: usize) -> [f64; 3] {
    match hood_covariance(p, cloud, k) {
        None => [0.0, 0.0, 1.0],
        Some(cov) => orient(eigen_sorted(cov).1[0]),
    }
}

/// Oracle normals, except where the smallest eigenvalue is repeated: there
/// any unit vector of that eigenspace is a valid normal, so `candidate` is
/// checked to be one and used. Returns the normals and how many came from
/// `candidate`.
pub fn checked_normals(cloud: &[Point], k: usize, candidate: &[[f64; 3]]) -> Result<(Vec<[f64; 3]>, usize), String> {
    let mut adopted = 0;
    let mut out = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.iter().enumerate() {
        let Some(cov) = hood_covariance(p.position, cloud, k) else {
            out.push([0.0, 0.0, 1.0]);
            continue;
        };
        let (values, vectors) = eigen_sorted(cov);
        let scale = values[2].abs();
        if values[1] - values[0] > 1e-9 * scale {
            out.push(orient(vectors[0]));
            continue;
        }
        let n = candidate[i];
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        let residual = (0..3)
            .map(|r| (cov[r][0] * n[0] + cov[r][1] * n[1] + cov[r][2] * n[2] - values[0] * n[r]).powi(2))
            .sum::<f64>()
            .sqrt();
        if (len - 1.0).abs() > 1e-12 || residual > 1e-9 * scale {
            return Err(format!("point {i}: {n:?} is not a normal of its degenerate neighborhood"));
        }
        out.push(n);
        adopted += 1;
    }
    Ok((out, adopted))
}

pub fn normals(cloud: &[Point], k: usize) -> Vec<[f64; 3]> {
    cloud.iter().map(|p| normal(p.position, cloud, k)).collect()
}

pub fn p2plane_one_sided(test: &[Point], reference: &[Point], reference_normals: &[[f64; 3]]) -> f64 {
    mean(test.iter().map(|p| {
        let (i, _) = nearest(p.position, reference);
        let r = reference[i].position;
        let n = reference_normals[i];
        let e = (p.position[0] - r[0]) * n[0] + (p.position[1] - r[1]) * n[1] + (p.position[2] - r[2]) * n[2];
        e * e
    }))
}

pub fn p2plane(a: &[Point], b: &[Point], k: usize) -> f64 {
    let na = normals(a, k);
    let nb = normals(b, k);
    p2plane_one_sided(a, b, &nb).max(p2plane_one_sided(b, a, &na))
}

pub fn color_one_sided(test: &[Point], reference: &[Point]) -> [f64; 3] {
    [0, 1, 2].map(|c| {
        mean(test.iter().map(|p| {
            let (i, _) = nearest(p.position, reference);
            (p.color[c] - reference[i].color[c]).powi(2)
        }))
    })
}

/// Per-channel bidirectional color error and its 6:1:1 weighting.
pub fn color(reference: &[Point], test: &[Point]) -> ([f64; 3], f64) {
    let f = color_one_sided(test, reference);
    let b = color_one_sided(reference, test);
    let ch = [0, 1, 2].map(|c| f[c].max(b[c]));
    (ch, (6.0 * ch[0] + ch[1] + ch[2]) / 8.0)
}

/// Population covariance `[gg, gc, cc]` of `((x+y+z)/3, (6Y+U+V)/8)`.
pub fn covariance(cloud: &[Point]) -> [f64; 3] {
    let attr: Vec<(f64, f64)> = cloud
        .iter()
        .map(|p| {
            let [x, y, z] = p.position;
            let [cy, cu, cv] = p.color;
            ((x + y + z) / 3.0, (6.0 * cy + cu + cv) / 8.0)
        })
        .collect();
    let mg = mean(attr.iter().map(|a| a.0));
    let mc = mean(attr.iter().map(|a| a.1));
    [
        mean(attr.iter().map(|a| (a.0 - mg) * (a.0 - mg))),
        mean(attr.iter().map(|a| (a.0 - mg) * (a.1 - mc))),
        mean(attr.iter().map(|a| (a.1 - mc) * (a.1 - mc))),
    ]
}

pub fn pooled(reference: &[Point], test: &[Point]) -> [f64; 3] {
    let (na, nb) = (reference.len() as f64, test.len() as f64);
    let sa = covariance(reference);
    let sb = covariance(test);
    [0, 1, 2].map(|i| (na * sa[i] + nb * sb[i]) / (na + nb))
}

/// `sqrt(v (S + εI)⁻¹ vᵀ)` with `ε = 1e-9·max(1, trace S)`.
pub fn unified(d_g: f64, d_c: f64, s: [f64; 3]) -> f64 {
    let eps = 1e-9 * (s[0] + s[2]).max(1.0);
    let (a, b, c) = (s[0] + eps, s[1], s[2] + eps);
    let det = a * c - b * b;
    // Inverse of [[a, b], [b, c]] is [[c, -b], [-b, a]] / det.
    let q = (c * d_g * d_g - 2.0 * b * d_g * d_c + a * d_c * d_c) / det;
    q.max(0.0).sqrt()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// A random cloud: continuous or integer-lattice positions (the latter
/// produce plenty of distance ties) and uniform YUV colors.
pub fn random_cloud(rng: &mut impl Rng, sizes: std::ops::RangeInclusive<usize>, lattice: bool) -> PointCloud {
    let n = rng.random_range(sizes);
    let points = (0..n)
        .map(|_| {
            let position = if lattice {
                [0; 3].map(|_| rng.random_range(0..12) as f64)
            } else {
                [0; 3].map(|_| rng.random_range(-50.0..50.0))
            };
            let color = [0; 3].map(|_| rng.random_range(0.0..=255.0));
            Point::new(position, color)
        })
        .collect();
    PointCloud::new(points).unwrap()
}

/// Keeps the first point at each position. Identical clouds only score
/// zero color error when no two points share a position, because
/// coincident matches resolve to the lowest index.
pub fn distinct_positions(cloud: &PointCloud) -> PointCloud {
    let mut seen = std::collections::HashSet::new();
    let points = cloud
        .points()
        .iter()
        .filter(|p| seen.insert(p.position.map(f64::to_bits)))
        .copied()
        .collect();
    PointCloud::new(points).unwrap()
}

/// `cloud` with every position nudged by up to `amount` and colors jittered.
pub fn perturbed(rng: &mut impl Rng, cloud: &PointCloud, amount: f64) -> PointCloud {
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            Point::new(
                p.position.map(|x| x + rng.random_range(-amount..=amount)),
                p.color.map(|c| (c + rng.random_range(-8.0..=8.0)).clamp(0.0, 255.0)),
            )
        })
        .collect();
    PointCloud::new(points).unwrap()
}

/// Least-squares polynomial by normal equations in the shifted variable
/// `t = q − mean(q)`, solved by Gaussian elimination with partial pivoting.
/// Returns coefficients in `t`, lowest power first, and the shift.
pub fn normal_equations_fit(xs: &[f64], ys: &[f64], degree: usize) -> (Vec<f64>, f64) {
    let shift = xs.iter().sum::<f64>() / xs.len() as f64;
    let m = degree + 1;
    let mut a = vec![vec![0.0; m + 1]; m];
    for (&x, &y) in xs.iter().zip(ys) {
        let t = x - shift;
        for r in 0..m {
            for c in 0..m {
                a[r][c] += t.powi((r + c) as i32);
            }
            a[r][m] += t.powi(r as i32) * y;
        }
    }
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    ((0..m).map(|i| a[i][m] / a[i][i]).collect(), shift)
}

pub fn eval_shifted(coeffs: &[f64], shift: f64, x: f64) -> f64 {
    let t = x - shift;
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// Sum of squared residuals of a descending-power polynomial.
pub fn rss(desc: &[f64], xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| (desc.iter().fold(0.0, |acc, &c| acc * x + c) - y).powi(2))
        .sum()
}

/// Feasible integer pair of minimum model distortion over the whole QP grid,
/// ties by lower rate then lower `q_g`.
pub fn grid_optimum(models: &pcrd::RdModels, target: f64) -> Option<(u32, u32, f64)> {
    let mut best: Option<(f64, f64, u32, u32)> = None;
    for g in 2..=51u32 {
        for c in 2..=51u32 {
            let r = models.rate(g as f64, c as f64);
            if r > target {
                continue;
            }
            let d = models.distortion(g as f64, c as f64);
            let better = match best {
                None => true,
                Some((bd, br, _, _)) => d < bd || (d == bd && r < br),
            };
            if better {
                best = Some((d, r, g, c));
            }
        }
    }
    best.map(|(d, _, g, c)| (g, c, d))
}
