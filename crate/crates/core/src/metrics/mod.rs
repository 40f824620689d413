//! Cost accounting, image quality, toy-distribution oracles and latency.

pub mod image;
pub mod latency;
pub mod macs;
pub mod toy;

pub use image::{psnr, ssim, ssim_with, Image, SsimParams};
pub use latency::{latency_benchmark, HostFingerprint, LatencyReport};
pub use macs::{compression_ratio, compression_ratio_of, macs, spec_macs, MacsReport};
pub use toy::{mmd_rbf, mode_coverage, ring_centers, ModeCoverage};
