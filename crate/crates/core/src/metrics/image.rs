//! Full-reference image quality: PSNR and windowed SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{GccError, Result};

/// PSNR reported for identical images.
pub const PSNR_IDENTICAL_DB: f64 = 100.0;

/// Channel-major (`C × H × W`) image with real-valued pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width || data.is_empty() {
            return Err(GccError::Shape(format!(
                "{} values for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn gray(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(1, height, width, data)
    }

    fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    fn same_shape(&self, other: &Image) -> Result<()> {
        if (self.channels, self.height, self.width) != (other.channels, other.height, other.width) {
            return Err(GccError::Shape(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.channels, self.height, self.width, other.channels, other.height, other.width
            )));
        }
        Ok(())
    }
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(GccError::Shape(format!("{} vs {} values", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// `10·log10(max² / MSE)`, capped at [`PSNR_IDENTICAL_DB`].
pub fn psnr(a: &Image, b: &Image, max_value: f64) -> Result<f64> {
    a.same_shape(b)?;
    Ok(psnr_from_mse(mse(&a.data, &b.data)?, max_value))
}

pub fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_IDENTICAL_DB;
    }
    (10.0 * (max_value * max_value / mse).log10()).min(PSNR_IDENTICAL_DB)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    /// Gaussian window width; shrunk to the largest odd size that fits.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with(a, b, &SsimParams::default())
}

/// Mean SSIM over all fully-contained window positions, averaged over
/// channels.
pub fn ssim_with(a: &Image, b: &Image, p: &SsimParams) -> Result<f64> {
    a.same_shape(b)?;
    let mut win = p.window.min(a.height).min(a.width);
    if win % 2 == 0 {
        win -= 1;
    }
    let half = (win / 2) as f64;
    let g: Vec<f64> = (0..win)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * p.sigma * p.sigma)).exp())
        .collect();
    let gsum: f64 = g.iter().sum();
    let mut kernel = vec![0.0; win * win];
    for i in 0..win {
        for j in 0..win {
            kernel[i * win + j] = g[i] * g[j] / (gsum * gsum);
        }
    }
    let c1 = (p.k1 * p.data_range).powi(2);
    let c2 = (p.k2 * p.data_range).powi(2);
    let (h, w) = (a.height, a.width);
    let mut total = 0.0;
    for c in 0..a.channels {
        let (x, y) = (a.plane(c), b.plane(c));
        let mut acc = 0.0;
        let mut count = 0usize;
        for r0 in 0..=h - win {
            for c0 in 0..=w - win {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..win {
                    for j in 0..win {
                        let k = kernel[i * win + j];
                        let idx = (r0 + i) * w + c0 + j;
                        mx += k * x[idx];
                        my += k * y[idx];
                        sxx += k * x[idx] * x[idx];
                        syy += k * y[idx] * y[idx];
                        sxy += k * x[idx] * y[idx];
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cov = sxy - mx * my;
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total += acc / count as f64;
    }
    Ok(total / a.channels as f64)
}
