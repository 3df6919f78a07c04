//! Separable polynomial models of distortion and rate versus the geometry
//! and color QPs.
//!
//! Distortion is a quartic in each QP, rate a quadratic in the geometry QP
//! plus a cubic in the color QP:
//!
//! ```text
//! D(q_g, q_c) = Σ a_i q_g^i + Σ b_i q_c^i        (i = 0..4)
//! R(q_g, q_c) = Σ c_i q_g^i + Σ d_i q_c^i        (c: i = 0..2, d: i = 0..3)
//! ```
//!
//! Both constants are kept, so at the anchor pair `D` is the sum of the two
//! sweep curves evaluated there.

pub mod poly;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const QP_MIN: u32 = 2;
pub const QP_MAX: u32 = 51;

/// The nine pre-encoding `(q_g, q_c)` pairs: a geometry sweep at `q_c = 35`
/// followed by the four new pairs of a color sweep at `q_g = 30`.
pub const PREENCODE_SCHEDULE: [(u32, u32); 9] = [
    (33, 35),
    (30, 35),
    (26, 35),
    (20, 35),
    (15, 35),
    (30, 38),
    (30, 31),
    (30, 26),
    (30, 20),
];

pub fn preencode_schedule() -> Vec<(u32, u32)> {
    PREENCODE_SCHEDULE.to_vec()
}

/// One pre-encode: QPs, unified distortion, and bit-rate in Mbps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub q_g: u32,
    pub q_c: u32,
    #[serde(rename = "D")]
    pub distortion: f64,
    /// Total rate in Mbps.
    #[serde(rename = "R")]
    pub rate: f64,
    /// Geometry share of the rate, when the producer reports it.
    #[serde(rename = "R_g", default, skip_serializing_if = "Option::is_none")]
    pub rate_geometry: Option<f64>,
    /// Color share of the rate, when the producer reports it.
    #[serde(rename = "R_c", default, skip_serializing_if = "Option::is_none")]
    pub rate_color: Option<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum MeasurementError {
    #[error("{field} = {value} outside [{QP_MIN}, {QP_MAX}]")]
    QpOutOfRange { field: &'static str, value: i64 },
    #[error("{field} = {value} must be {requirement}")]
    InvalidValue {
        field: &'static str,
        value: f64,
        requirement: &'static str,
    },
}

impl Measurement {
    pub fn new(q_g: u32, q_c: u32, distortion: f64, rate: f64) -> Self {
        Self {
            q_g,
            q_c,
            distortion,
            rate,
            rate_geometry: None,
            rate_color: None,
        }
    }

    pub fn with_split(mut self, rate_geometry: f64, rate_color: f64) -> Self {
        self.rate_geometry = Some(rate_geometry);
        self.rate_color = Some(rate_color);
        self
    }

    pub fn validate(&self) -> Result<(), MeasurementError> {
        for (field, q) in [("q_g", self.q_g), ("q_c", self.q_c)] {
            if !(QP_MIN..=QP_MAX).contains(&q) {
                return Err(MeasurementError::QpOutOfRange { field, value: q as i64 });
            }
        }
        if !(self.distortion.is_finite() && self.distortion >= 0.0) {
            return Err(MeasurementError::InvalidValue {
                field: "D",
                value: self.distortion,
                requirement: "finite and >= 0",
            });
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(MeasurementError::InvalidValue {
                field: "R",
                value: self.rate,
                requirement: "finite and > 0",
            });
        }
        for (field, value) in [("R_g", self.rate_geometry), ("R_c", self.rate_color)] {
            if let Some(v) = value {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(MeasurementError::InvalidValue {
                        field,
                        value: v,
                        requirement: "finite and >= 0",
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Geometry,
    Color,
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sweep::Geometry => "geometry",
            Sweep::Color => "color",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("measurement {row}: {source}")]
    InvalidMeasurement { row: usize, source: MeasurementError },
    #[error("no {sweep} sweep: need at least 5 distinct QPs at a common {held} QP (best found: {found})")]
    MissingSweep {
        sweep: Sweep,
        held: &'static str,
        found: usize,
    },
    #[error("geometry and color sweeps do not share an anchor pair")]
    NoSharedAnchor,
    #[error("{sweep} sweep repeats QP {qp}")]
    DuplicateQp { sweep: Sweep, qp: u32 },
    #[error("{sweep} sweep {quantity} fit is ill-conditioned (pivot ratio {ratio:e})")]
    IllConditioned {
        sweep: Sweep,
        quantity: &'static str,
        ratio: f64,
    },
}

/// Fitted coefficients, highest degree first, plus the sweep anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdModels {
    /// Distortion quartic in `q_g`.
    pub a: [f64; 5],
    /// Distortion quartic in `q_c`.
    pub b: [f64; 5],
    /// Rate quadratic in `q_g`.
    pub c: [f64; 3],
    /// Rate cubic in `q_c`.
    pub d: [f64; 4],
    /// `(q_g, q_c)` shared by both sweeps.
    pub anchor: [u32; 2],
}

impl RdModels {
    /// Literal sum of both quartics, constants `a0 + b0` included.
    ///
    /// ```
    /// use pcrd::RdModels;
    /// let m = RdModels {
    ///     a: [0.0, 0.0, 0.0, 0.0, 1.0],
    ///     b: [0.0, 0.0, 0.0, 0.0, 2.0],
    ///     c: [0.0; 3],
    ///     d: [0.0; 4],
    ///     anchor: [30, 35],
    /// };
    /// assert_eq!(m.distortion(17.0, 42.5), 3.0);
    /// ```
    pub fn distortion(&self, q_g: f64, q_c: f64) -> f64 {
        poly::eval(&self.a, q_g) + poly::eval(&self.b, q_c)
    }

    pub fn rate(&self, q_g: f64, q_c: f64) -> f64 {
        poly::eval(&self.c, q_g) + poly::eval(&self.d, q_c)
    }

    /// `(R(q_g), R(q_c))`: the geometry and color terms of the rate model.
    pub fn rate_split(&self, q_g: f64, q_c: f64) -> (f64, f64) {
        (poly::eval(&self.c, q_g), poly::eval(&self.d, q_c))
    }

    /// `(∂D/∂q_g, ∂D/∂q_c)`.
    pub fn distortion_gradient(&self, q_g: f64, q_c: f64) -> [f64; 2] {
        [poly::eval_derivative(&self.a, q_g), poly::eval_derivative(&self.b, q_c)]
    }

    /// `(∂R/∂q_g, ∂R/∂q_c)`.
    pub fn rate_gradient(&self, q_g: f64, q_c: f64) -> [f64; 2] {
        [poly::eval_derivative(&self.c, q_g), poly::eval_derivative(&self.d, q_c)]
    }

    /// Diagonal of the distortion Hessian; the mixed term is zero.
    pub fn distortion_curvature(&self, q_g: f64, q_c: f64) -> [f64; 2] {
        [poly::eval_second_derivative(&self.a, q_g), poly::eval_second_derivative(&self.b, q_c)]
    }

    /// Diagonal of the rate Hessian; the mixed term is zero.
    pub fn rate_curvature(&self, q_g: f64, q_c: f64) -> [f64; 2] {
        [poly::eval_second_derivative(&self.c, q_g), poly::eval_second_derivative(&self.d, q_c)]
    }
}

struct SweepPoints {
    qps: Vec<f64>,
    distortion: Vec<f64>,
    rate: Vec<f64>,
}

fn collect_sweep<'a>(
    sweep: Sweep,
    rows: impl Iterator<Item = &'a Measurement>,
    varying: impl Fn(&Measurement) -> u32,
    split: impl Fn(&Measurement) -> Option<f64>,
) -> Result<SweepPoints, FitError> {
    let mut rows: Vec<&Measurement> = rows.collect();
    rows.sort_by_key(|m| varying(m));
    for pair in rows.windows(2) {
        if varying(pair[0]) == varying(pair[1]) {
            return Err(FitError::DuplicateQp {
                sweep,
                qp: varying(pair[0]),
            });
        }
    }
    let use_split = rows.iter().all(|m| split(m).is_some());
    Ok(SweepPoints {
        qps: rows.iter().map(|m| varying(m) as f64).collect(),
        distortion: rows.iter().map(|m| m.distortion).collect(),
        rate: rows
            .iter()
            .map(|m| if use_split { split(m).unwrap() } else { m.rate })
            .collect(),
    })
}

/// Candidate held QPs for a sweep, most distinct varying QPs first.
fn sweep_candidates(measurements: &[Measurement], held: impl Fn(&Measurement) -> u32, varying: impl Fn(&Measurement) -> u32) -> Vec<(u32, usize)> {
    let mut groups: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for m in measurements {
        groups.entry(held(m)).or_default().insert(varying(m));
    }
    let mut out: Vec<(u32, usize)> = groups.into_iter().map(|(q, set)| (q, set.len())).collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

const MIN_SWEEP: usize = 5;

/// Fits all fourteen coefficients from a geometry sweep (several `q_g` at one
/// `q_c`) and a color sweep (several `q_c` at one `q_g`) that share their
/// anchor pair.
///
/// The distortion quartics interpolate their sweeps (least squares when a
/// sweep has more than five points). The rate polynomials are least-squares
/// fits; they use the `R_g` / `R_c` split when every row of the sweep has
/// it, and the total rate otherwise.
pub fn fit(measurements: &[Measurement]) -> Result<RdModels, FitError> {
    for (row, m) in measurements.iter().enumerate() {
        m.validate()
            .map_err(|source| FitError::InvalidMeasurement { row, source })?;
    }
    let geometry = sweep_candidates(measurements, |m| m.q_c, |m| m.q_g);
    let color = sweep_candidates(measurements, |m| m.q_g, |m| m.q_c);
    let best = |c: &[(u32, usize)]| c.first().map_or(0, |x| x.1);
    if best(&geometry) < MIN_SWEEP {
        return Err(FitError::MissingSweep {
            sweep: Sweep::Geometry,
            held: "q_c",
            found: best(&geometry),
        });
    }
    if best(&color) < MIN_SWEEP {
        return Err(FitError::MissingSweep {
            sweep: Sweep::Color,
            held: "q_g",
            found: best(&color),
        });
    }

    let present: BTreeSet<(u32, u32)> = measurements.iter().map(|m| (m.q_g, m.q_c)).collect();
    let anchor = geometry
        .iter()
        .filter(|g| g.1 >= MIN_SWEEP)
        .flat_map(|&(q_c, _)| {
            color
                .iter()
                .filter(|c| c.1 >= MIN_SWEEP)
                .map(move |&(q_g, _)| (q_g, q_c))
        })
        .find(|pair| present.contains(pair))
        .ok_or(FitError::NoSharedAnchor)?;

    let geo = collect_sweep(
        Sweep::Geometry,
        measurements.iter().filter(|m| m.q_c == anchor.1),
        |m| m.q_g,
        |m| m.rate_geometry,
    )?;
    let col = collect_sweep(
        Sweep::Color,
        measurements.iter().filter(|m| m.q_g == anchor.0),
        |m| m.q_c,
        |m| m.rate_color,
    )?;

    let solve = |sweep: Sweep, quantity: &'static str, xs: &[f64], ys: &[f64], degree: usize| {
        poly::fit(xs, ys, degree).map_err(|e| match e {
            poly::PolyFitError::IllConditioned { ratio } => FitError::IllConditioned { sweep, quantity, ratio },
            poly::PolyFitError::Underdetermined { points, .. } => FitError::MissingSweep {
                sweep,
                held: if sweep == Sweep::Geometry { "q_c" } else { "q_g" },
                found: points,
            },
        })
    };
    let a = solve(Sweep::Geometry, "distortion", &geo.qps, &geo.distortion, 4)?;
    let b = solve(Sweep::Color, "distortion", &col.qps, &col.distortion, 4)?;
    let c = solve(Sweep::Geometry, "rate", &geo.qps, &geo.rate, 2)?;
    let d = solve(Sweep::Color, "rate", &col.qps, &col.rate, 3)?;

    Ok(RdModels {
        a: a.try_into().unwrap(),
        b: b.try_into().unwrap(),
        c: c.try_into().unwrap(),
        d: d.try_into().unwrap(),
        anchor: [anchor.0, anchor.1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known_models() -> RdModels {
        RdModels {
            a: [2e-6, -1e-4, 3e-3, 0.02, 0.1],
            b: [-1e-7, 2e-5, -3e-4, 0.004, 0.05],
            c: [0.02, -2.2, 70.0],
            d: [-2e-4, 0.03, -1.6, 30.0],
            anchor: [30, 35],
        }
    }

    fn synthesize(m: &RdModels) -> Vec<Measurement> {
        PREENCODE_SCHEDULE
            .iter()
            .map(|&(qg, qc)| {
                let (rg, rc) = m.rate_split(qg as f64, qc as f64);
                Measurement::new(qg, qc, m.distortion(qg as f64, qc as f64), rg + rc).with_split(rg, rc)
            })
            .collect()
    }

    #[test]
    fn schedule_shape() {
        let s = preencode_schedule();
        assert_eq!(s.len(), 9);
        assert_eq!(s.iter().filter(|&&p| p == (30, 35)).count(), 1);
        assert_eq!(s.iter().collect::<BTreeSet<_>>().len(), 9);
        assert!(s[..5].iter().all(|&(_, qc)| qc == 35));
        assert!(s[5..].iter().all(|&(qg, _)| qg == 30));
    }

    #[test]
    fn fit_recovers_rate_polynomials_and_distortion_sums() {
        let truth = known_models();
        let fitted = fit(&synthesize(&truth)).unwrap();
        assert_eq!(fitted.anchor, [30, 35]);
        for (f, t) in fitted.c.iter().zip(truth.c) {
            assert!((f - t).abs() <= 1e-6 * t.abs());
        }
        for (f, t) in fitted.d.iter().zip(truth.d) {
            assert!((f - t).abs() <= 1e-6 * t.abs());
        }
        // Each quartic absorbs the other axis' value at the anchor into its
        // constant; the non-constant terms come back unchanged.
        for i in 0..4 {
            assert!((fitted.a[i] - truth.a[i]).abs() <= 1e-6 * truth.a[i].abs());
            assert!((fitted.b[i] - truth.b[i]).abs() <= 1e-6 * truth.b[i].abs());
        }
        let b_at_anchor = poly::eval(&truth.b, 35.0);
        assert!((fitted.a[4] - (truth.a[4] + b_at_anchor)).abs() < 1e-9);
    }

    #[test]
    fn anchor_value_is_literal_sum_of_sweeps() {
        let truth = known_models();
        let data = synthesize(&truth);
        let fitted = fit(&data).unwrap();
        let anchor = data.iter().find(|m| (m.q_g, m.q_c) == (30, 35)).unwrap();
        let via_geo = poly::eval(&fitted.a, 30.0);
        let via_col = poly::eval(&fitted.b, 35.0);
        assert!((via_geo - anchor.distortion).abs() < 1e-9);
        assert!((via_col - anchor.distortion).abs() < 1e-9);
        assert_eq!(fitted.distortion(30.0, 35.0), via_geo + via_col);
    }

    #[test]
    fn constant_distortion_sweep() {
        let data: Vec<_> = PREENCODE_SCHEDULE
            .iter()
            .map(|&(g, c)| Measurement::new(g, c, 0.25, 100.0 - g as f64 - c as f64))
            .collect();
        let m = fit(&data).unwrap();
        for i in 0..4 {
            assert!(m.a[i].abs() < 1e-12 && m.b[i].abs() < 1e-12);
        }
        assert!((m.a[4] - 0.25).abs() < 1e-12 && (m.b[4] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn missing_color_sweep_is_named() {
        let data: Vec<_> = PREENCODE_SCHEDULE[..5]
            .iter()
            .map(|&(g, c)| Measurement::new(g, c, 1.0, 10.0))
            .collect();
        assert_eq!(
            fit(&data),
            Err(FitError::MissingSweep {
                sweep: Sweep::Color,
                held: "q_g",
                found: 1
            })
        );
        assert!(matches!(
            fit(&[]),
            Err(FitError::MissingSweep { sweep: Sweep::Geometry, .. })
        ));
    }

    #[test]
    fn sweeps_without_common_pair() {
        let mut data: Vec<_> = [15, 20, 26, 30, 33].iter().map(|&g| Measurement::new(g, 35, 1.0, 10.0)).collect();
        data.extend([20, 26, 31, 38, 40].iter().map(|&c| Measurement::new(29, c, 1.0, 10.0)));
        assert_eq!(fit(&data), Err(FitError::NoSharedAnchor));
    }

    #[test]
    fn invalid_rows_are_rejected() {
        let mut data: Vec<_> = PREENCODE_SCHEDULE.iter().map(|&(g, c)| Measurement::new(g, c, 1.0, 10.0)).collect();
        data[3].rate = 0.0;
        assert!(matches!(fit(&data), Err(FitError::InvalidMeasurement { row: 3, .. })));
        data[3].rate = 1.0;
        data[4].q_g = 60;
        assert!(matches!(
            fit(&data),
            Err(FitError::InvalidMeasurement {
                row: 4,
                source: MeasurementError::QpOutOfRange { field: "q_g", value: 60 }
            })
        ));
    }

    #[test]
    fn zero_and_pure_quadratic_models() {
        let zero = RdModels {
            a: [0.0; 5],
            b: [0.0; 5],
            c: [0.0; 3],
            d: [0.0; 4],
            anchor: [30, 35],
        };
        assert_eq!(zero.rate(12.0, 40.0), 0.0);
        assert_eq!(zero.rate_gradient(12.0, 40.0), [0.0, 0.0]);
        let quad = RdModels { c: [1.0, 0.0, 0.0], ..zero };
        assert_eq!(quad.rate(7.0, 40.0), 49.0);
        assert_eq!(quad.rate_gradient(7.0, 40.0), [14.0, 0.0]);
    }

    #[test]
    fn json_layout() {
        let json = serde_json::to_value(known_models()).unwrap();
        assert_eq!(json["a"].as_array().unwrap().len(), 5);
        assert_eq!(json["d"][3], 30.0);
        assert_eq!(json["anchor"], serde_json::json!([30, 35]));
        let m = Measurement::new(30, 35, 0.1, 2.0);
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"{"q_g":30,"q_c":35,"D":0.1,"R":2.0}"#);
    }
}
