//! Wall-clock forward-pass latency.

use std::time::Instant;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{GccError, Result};
use crate::model_zoo::network::{device, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostFingerprint {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub crate_version: String,
}

impl HostFingerprint {
    pub fn current() -> Self {
        HostFingerprint {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub network: String,
    pub input_shape: Vec<usize>,
    pub iters: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub variance_ms2: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub host: HostFingerprint,
}

/// Times `iters` forward passes on a fixed standard-normal input of shape
/// `input_shape` (batch dimension included) after `warmup` untimed passes.
pub fn latency_benchmark(
    network: &Network,
    input_shape: &[usize],
    warmup: usize,
    iters: usize,
) -> Result<LatencyReport> {
    if iters == 0 {
        return Err(GccError::InvalidInput("iters must be >= 1".into()));
    }
    let x = Tensor::randn(0f64, 1.0, input_shape, &device())?;
    for _ in 0..warmup {
        network.forward(&x)?;
    }
    let mut times = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        let y = network.forward(&x)?;
        // Force materialization of the result.
        let _ = y.dims();
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let variance = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    Ok(LatencyReport {
        network: network.spec().name.clone(),
        input_shape: input_shape.to_vec(),
        iters,
        mean_ms: mean,
        median_ms: median,
        variance_ms2: variance,
        min_ms: sorted[0],
        max_ms: sorted[sorted.len() - 1],
        host: HostFingerprint::current(),
    })
}
