//! Dense polynomial helpers. Coefficients are stored highest degree first.

use nalgebra::{DMatrix, DVector};

/// Horner evaluation of `coeffs[0]·xⁿ + … + coeffs[n]`.
pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
}

/// Derivative at `x`.
pub fn eval_derivative(coeffs: &[f64], x: f64) -> f64 {
    let degree = coeffs.len().saturating_sub(1);
    coeffs[..degree]
        .iter()
        .enumerate()
        .fold(0.0, |acc, (i, &c)| acc * x + c * (degree - i) as f64)
}

/// Second derivative at `x`.
pub fn eval_second_derivative(coeffs: &[f64], x: f64) -> f64 {
    let degree = coeffs.len().saturating_sub(1);
    if degree < 2 {
        return 0.0;
    }
    coeffs[..degree - 1].iter().enumerate().fold(0.0, |acc, (i, &c)| {
        let power = (degree - i) as f64;
        acc * x + c * power * (power - 1.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolyFitError {
    /// Fewer distinct abscissae than unknowns.
    Underdetermined { points: usize, unknowns: usize },
    /// The scaled design matrix is numerically rank deficient.
    IllConditioned { ratio: f64 },
}

/// Smallest acceptable ratio between the smallest and largest diagonal
/// entries of the triangular factor.
const MIN_PIVOT_RATIO: f64 = 1e-12;

/// Least-squares polynomial of the given degree; exact interpolation when
/// there are `degree + 1` distinct points.
///
/// The abscissae are mapped affinely onto `[-1, 1]` before the solve and the
/// result is expanded back into the raw monomial basis.
pub fn fit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>, PolyFitError> {
    assert_eq!(xs.len(), ys.len());
    let unknowns = degree + 1;
    if xs.len() < unknowns {
        return Err(PolyFitError::Underdetermined {
            points: xs.len(),
            unknowns,
        });
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let center = 0.5 * (lo + hi);
    let half_width = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };

    // Columns in ascending power of the scaled abscissa.
    let design = DMatrix::from_fn(xs.len(), unknowns, |r, c| ((xs[r] - center) / half_width).powi(c as i32));
    let rhs = DVector::from_column_slice(ys);
    let qr = design.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..unknowns).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().copied().fold(0.0, f64::max);
    let smallest = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
    if ratio < MIN_PIVOT_RATIO {
        return Err(PolyFitError::IllConditioned { ratio });
    }
    let qty = qr.q().transpose() * rhs;
    let scaled = r
        .solve_upper_triangular(&qty)
        .ok_or(PolyFitError::IllConditioned { ratio })?;

    // p(q) = Σ_k β_k ((q - m) / h)^k, expanded by the binomial theorem.
    let mut ascending = vec![0.0; unknowns];
    for (k, &beta) in scaled.iter().enumerate() {
        let scale = beta / half_width.powi(k as i32);
        let mut binom = 1.0;
        for j in 0..=k {
            ascending[j] += scale * binom * (-center).powi((k - j) as i32);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    ascending.reverse();
    Ok(ascending)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_and_derivatives() {
        // 2x³ - x + 5
        let p = [2.0, 0.0, -1.0, 5.0];
        assert_eq!(eval(&p, 2.0), 19.0);
        assert_eq!(eval_derivative(&p, 2.0), 23.0);
        assert_eq!(eval_second_derivative(&p, 2.0), 24.0);
        assert_eq!(eval_derivative(&[7.0], 3.0), 0.0);
    }

    #[test]
    fn interpolation_recovers_generator() {
        let truth = [1e-5, -2e-3, 0.11, -1.7, 9.0];
        let xs = [15.0, 20.0, 26.0, 30.0, 33.0];
        let ys: Vec<f64> = xs.iter().map(|&x| eval(&truth, x)).collect();
        let got = fit(&xs, &ys, 4).unwrap();
        for (g, t) in got.iter().zip(truth) {
            assert!((g - t).abs() <= 1e-6 * t.abs(), "{got:?}");
        }
    }

    #[test]
    fn constant_data_gives_constant_polynomial() {
        let got = fit(&[20.0, 26.0, 31.0, 35.0, 38.0], &[0.7; 5], 4).unwrap();
        assert!((got[4] - 0.7).abs() < 1e-12);
        for c in &got[..4] {
            assert!(c.abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn too_few_or_repeated_points() {
        assert!(matches!(fit(&[1.0, 2.0], &[1.0, 2.0], 2), Err(PolyFitError::Underdetermined { .. })));
        assert!(matches!(
            fit(&[1.0, 1.0, 1.0, 2.0], &[1.0; 4], 3),
            Err(PolyFitError::IllConditioned { .. })
        ));
    }
}
