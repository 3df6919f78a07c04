//! A deterministic stand-in codec and the measurement CSV format.
//!
//! The proxy quantizes positions onto a cubic grid, merges points that land
//! in the same cell (averaging their colors), quantizes each color channel,
//! and charges the first-order entropy of the resulting symbols as the bit
//! cost. Step sizes follow the usual video-codec law `2^((q - 4) / 6)`, so
//! rate and distortion move smoothly with the QP.

mod csv_io;

pub use csv_io::{format_real, ingest_csv, read_csv, write_csv, CsvError};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{estimate_normals, full_report, DistortionReport, MetricError, MetricsConfig};
use crate::pointcloud::{Point, PointCloud};
use crate::rdmodel::{Measurement, PREENCODE_SCHEDULE, QP_MAX, QP_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyCodecConfig {
    /// Frames per second used to turn bits per frame into Mbps.
    pub frame_rate: f64,
    /// Seed for uniform pre-quantization dither; `None` disables dithering.
    pub rng_seed: Option<u64>,
}

impl Default for ProxyCodecConfig {
    fn default() -> Self {
        Self {
            frame_rate: 30.0,
            rng_seed: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("{field} = {value} outside [{QP_MIN}, {QP_MAX}]")]
    QpOutOfRange { field: &'static str, value: u32 },
    #[error("frame_rate = {0} must be finite and > 0")]
    InvalidFrameRate(f64),
    #[error("cannot encode an empty cloud")]
    EmptyCloud,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl ProxyCodecConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(CodecError::InvalidFrameRate(self.frame_rate));
        }
        Ok(())
    }

    /// Converts a per-frame bit count to Mbps.
    pub fn mbps(&self, bits: u64) -> f64 {
        bits as f64 * self.frame_rate / 1e6
    }
}

/// Nominal quantizer step `2^((q - 4) / 6)`.
pub fn nominal_step(q: u32) -> f64 {
    ((q as f64 - 4.0) / 6.0).exp2()
}

/// Step actually applied: the nominal step, but never finer than one unit,
/// so integer voxel coordinates and 8-bit colors pass through low QPs
/// untouched.
pub fn quantizer_step(q: u32) -> f64 {
    nominal_step(q).max(1.0)
}

/// Bit cost of one encode, split by stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bits {
    pub geometry: u64,
    pub color: u64,
}

impl Bits {
    pub fn total(&self) -> u64 {
        self.geometry + self.color
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub decoded: PointCloud,
    pub bits: Bits,
}

fn check_qp(field: &'static str, value: u32) -> Result<(), CodecError> {
    if (QP_MIN..=QP_MAX).contains(&value) {
        Ok(())
    } else {
        Err(CodecError::QpOutOfRange { field, value })
    }
}

struct Cell {
    color_sum: [f64; 3],
    count: usize,
}

/// Encodes and decodes `cloud` at the given QPs.
///
/// ```
/// use pcrd::{encode_decode, Point, PointCloud, ProxyCodecConfig};
///
/// let cloud = PointCloud::new(vec![
///     Point::new([0.0, 0.0, 0.0], [100.0, 128.0, 128.0]),
///     Point::new([1.0, 0.0, 0.0], [110.0, 128.0, 128.0]),
/// ])?;
/// let config = ProxyCodecConfig::default();
/// let fine = encode_decode(&cloud, 2, 2, &config)?;
/// assert_eq!(fine.decoded.len(), 2);
/// // A 32-voxel step puts both points in one cell.
/// let coarse = encode_decode(&cloud, 34, 2, &config)?;
/// assert_eq!(coarse.decoded.len(), 1);
/// assert_eq!(coarse.decoded.points()[0].color, [105.0, 128.0, 128.0]);
/// # Ok::<(), Box<dyn std::error::Error>>(())
/// ```
pub fn encode_decode(
    cloud: &PointCloud,
    q_g: u32,
    q_c: u32,
    config: &ProxyCodecConfig,
) -> Result<Encoded, CodecError> {
    check_qp("q_g", q_g)?;
    check_qp("q_c", q_c)?;
    config.validate()?;
    if cloud.is_empty() {
        return Err(CodecError::EmptyCloud);
    }
    let step_g = quantizer_step(q_g);
    let step_c = quantizer_step(q_c);
    let mut dither = config
        .rng_seed
        .map(|seed| ChaCha8Rng::seed_from_u64(seed ^ ((q_g as u64) << 32 | q_c as u64)));
    let mut offset = |step: f64| match dither.as_mut() {
        Some(rng) => (rng.random::<f64>() - 0.5) * step,
        None => 0.0,
    };

    let mut cells: BTreeMap<[i64; 3], Cell> = BTreeMap::new();
    for point in cloud.points() {
        let key = point.position.map(|x| ((x + offset(step_g)) / step_g).round() as i64);
        let cell = cells.entry(key).or_insert(Cell {
            color_sum: [0.0; 3],
            count: 0,
        });
        for (sum, c) in cell.color_sum.iter_mut().zip(point.color) {
            *sum += c;
        }
        cell.count += 1;
    }

    let max_index = (255.0 / step_c).floor() as i64;
    let mut geometry_symbols: [BTreeMap<i64, u64>; 3] = Default::default();
    let mut color_symbols: [BTreeMap<i64, u64>; 3] = Default::default();
    let mut points = Vec::with_capacity(cells.len());
    for (key, cell) in &cells {
        for (axis, &k) in key.iter().enumerate() {
            *geometry_symbols[axis].entry(k).or_default() += 1;
        }
        let mut color = [0.0; 3];
        for channel in 0..3 {
            let mean = cell.color_sum[channel] / cell.count as f64;
            let index = ((mean + offset(step_c)) / step_c).round().clamp(0.0, max_index as f64) as i64;
            *color_symbols[channel].entry(index).or_default() += 1;
            color[channel] = index as f64 * step_c;
        }
        points.push(Point::new(key.map(|k| k as f64 * step_g), color));
    }

    let bits = Bits {
        geometry: entropy_bits(&geometry_symbols),
        color: entropy_bits(&color_symbols),
    };
    let decoded = PointCloud::new(points)
        .expect("quantized points are finite and in gamut")
        .with_label(format!("{} @ q_g={q_g} q_c={q_c}", cloud.label()));
    Ok(Encoded { decoded, bits })
}

/// `⌈Σ_streams N·H(stream)⌉`, with each stream coded independently under
/// its own first-order distribution.
fn entropy_bits(streams: &[BTreeMap<i64, u64>]) -> u64 {
    let mut total = 0.0;
    for histogram in streams {
        let n: u64 = histogram.values().sum();
        let n = n as f64;
        for &count in histogram.values() {
            let c = count as f64;
            total += c * (n / c).log2();
        }
    }
    total.ceil() as u64
}

/// One encode with its measurement and full distortion report.
#[derive(Debug, Clone, PartialEq)]
pub struct Measured {
    pub measurement: Measurement,
    pub encoded: Encoded,
    pub report: DistortionReport,
}

/// Encodes at one QP pair and measures the result against the original.
pub fn measure(
    cloud: &PointCloud,
    q_g: u32,
    q_c: u32,
    codec: &ProxyCodecConfig,
    metrics: &MetricsConfig,
) -> Result<Measured, CodecError> {
    let encoded = encode_decode(cloud, q_g, q_c, codec)?;
    let report = full_report(cloud, &encoded.decoded, metrics)?;
    let measurement = Measurement::new(q_g, q_c, report.D, codec.mbps(encoded.bits.total()))
        .with_split(codec.mbps(encoded.bits.geometry), codec.mbps(encoded.bits.color));
    Ok(Measured {
        measurement,
        encoded,
        report,
    })
}

/// `cloud` with normals attached, estimating them when missing, so that
/// repeated reports against it skip the estimation.
pub fn prepare_reference(cloud: &PointCloud, metrics: &MetricsConfig) -> Result<PointCloud, CodecError> {
    if cloud.is_empty() {
        return Err(CodecError::EmptyCloud);
    }
    if cloud.normals().is_some() || cloud.len() < metrics.normals_k {
        return Ok(cloud.clone());
    }
    let normals = estimate_normals(cloud, metrics.normals_k).map_err(MetricError::from)?;
    Ok(cloud.clone().with_normals(normals).expect("estimated normals are unit length"))
}

/// Runs the nine-pair pre-encoding schedule, in schedule order.
pub fn preencode_sweep(
    cloud: &PointCloud,
    codec: &ProxyCodecConfig,
    metrics: &MetricsConfig,
) -> Result<Vec<Measurement>, CodecError> {
    let reference = prepare_reference(cloud, metrics)?;
    PREENCODE_SCHEDULE
        .iter()
        .map(|&(q_g, q_c)| measure(&reference, q_g, q_c, codec, metrics).map(|m| m.measurement))
        .collect()
}
