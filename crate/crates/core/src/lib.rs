//! Point-cloud rate-distortion toolkit.
//!
//! * [`metrics`]: point-to-point, point-to-plane and YUV color distortion,
//!   the covariance-weighted unified distortion and PC-PSNR.
//! * [`rdmodel`]: separable polynomial distortion and rate models fitted from
//!   a nine-encode pre-encoding sweep.
//! * [`optimizer`]: rate-constrained QP selection by an augmented Lagrangian
//!   outer loop over projected gradient descent.
//! * [`codec`]: a deterministic quantize-and-merge stand-in codec and the
//!   measurement CSV format, so the whole pipeline runs without a real
//!   encoder.
//!
//! The guide in `book/` walks through each piece; its code listings are
//! compiled and run as doctests of this crate.

pub mod codec;
pub mod metrics;
pub mod neighbor;
pub mod optimizer;
pub mod pointcloud;
pub mod rdmodel;
pub mod synth;

pub use codec::{encode_decode, preencode_sweep, ProxyCodecConfig};
pub use metrics::{full_report, DistortionReport, MetricsConfig};
pub use neighbor::{Neighbor, NeighborIndex};
pub use optimizer::{solve, SolveResult, SolverConfig};
pub use pointcloud::ply::{load_ply, save_ply, PlyFormat};
pub use pointcloud::{rgb_to_yuv, Point, PointCloud};
pub use rdmodel::{fit, preencode_schedule, Measurement, RdModels};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/point-clouds.md")]
    mod point_clouds {}
    #[doc = include_str!("../../../book/src/nearest-neighbors.md")]
    mod nearest_neighbors {}
    #[doc = include_str!("../../../book/src/distortion.md")]
    mod distortion {}
    #[doc = include_str!("../../../book/src/rd-models.md")]
    mod rd_models {}
    #[doc = include_str!("../../../book/src/optimizer.md")]
    mod optimizer {}
    #[doc = include_str!("../../../book/src/codec-proxy.md")]
    mod codec_proxy {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
