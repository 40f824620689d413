//! Distribution-quality oracles for low-dimensional mixtures.

use serde::{Deserialize, Serialize};

use crate::error::{GccError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoverage {
    /// Modes with at least `min_count` samples inside `radius`.
    pub covered: usize,
    /// Samples assigned (nearest center, within `radius`) to each mode.
    pub histogram: Vec<usize>,
    /// Fraction of samples lying within `radius` of some center.
    pub high_quality: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Assigns each sample to its nearest center (lowest index on ties) and
/// counts it when the distance is at most `radius`.
pub fn mode_coverage(
    samples: &[Vec<f64>],
    centers: &[Vec<f64>],
    radius: f64,
    min_count: usize,
) -> Result<ModeCoverage> {
    if samples.is_empty() {
        return Err(GccError::InvalidInput("no samples".into()));
    }
    if centers.is_empty() {
        return Err(GccError::InvalidInput("no centers".into()));
    }
    let r2 = radius * radius;
    let mut histogram = vec![0usize; centers.len()];
    for s in samples {
        let (best, d2) = centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, sq_dist(s, c)))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        if d2 <= r2 {
            histogram[best] += 1;
        }
    }
    let hits: usize = histogram.iter().sum();
    Ok(ModeCoverage {
        covered: histogram.iter().filter(|&&n| n >= min_count.max(1)).count(),
        high_quality: hits as f64 / samples.len() as f64,
        histogram,
    })
}

/// Biased squared maximum mean discrepancy with a Gaussian kernel.
pub fn mmd_rbf(a: &[Vec<f64>], b: &[Vec<f64>], bandwidth: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(GccError::InvalidInput("empty sample set".into()));
    }
    let k = |x: &[f64], y: &[f64]| (-sq_dist(x, y) / (2.0 * bandwidth * bandwidth)).exp();
    let mean_k = |p: &[Vec<f64>], q: &[Vec<f64>]| {
        let mut s = 0.0;
        for x in p {
            for y in q {
                s += k(x, y);
            }
        }
        s / (p.len() * q.len()) as f64
    };
    Ok((mean_k(a, a) + mean_k(b, b) - 2.0 * mean_k(a, b)).max(0.0))
}

/// `n` centers evenly spaced on a circle of radius `r`.
pub fn ring_centers(n: usize, r: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            vec![r * t.cos(), r * t.sin()]
        })
        .collect()
}
