//! Synthetic data: the ring of Gaussians and small blob images.

use candle_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GccError, Result};
use crate::metrics::toy::ring_centers;
use crate::model_zoo::network::device;

/// Position of a ChaCha stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn of(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

pub trait DataSource {
    /// Latent batch shaped for the generator input.
    fn noise(&mut self, n: usize) -> Result<Tensor>;
    /// Batch of real samples shaped for the discriminator input.
    fn real(&mut self, n: usize) -> Result<Tensor>;
    fn rng_state(&self) -> RngState;
    fn set_rng_state(&mut self, state: &RngState);
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `modes` isotropic Gaussians evenly spaced on a circle.
#[derive(Debug, Clone)]
pub struct RingMixture {
    pub centers: Vec<Vec<f64>>,
    pub std: f64,
    pub z_dim: usize,
    rng: ChaCha8Rng,
}

impl RingMixture {
    pub fn new(modes: usize, radius: f64, std: f64, z_dim: usize, seed: u64) -> Result<Self> {
        if modes == 0 || z_dim == 0 || !(std >= 0.0) {
            return Err(GccError::InvalidInput(
                "ring mixture needs modes ≥ 1, z_dim ≥ 1 and std ≥ 0".into(),
            ));
        }
        Ok(RingMixture {
            centers: ring_centers(modes, radius),
            std,
            z_dim,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn sample_points(&mut self, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let c = &self.centers[self.rng.random_range(0..self.centers.len())];
                let e = normal_vec(&mut self.rng, 2);
                vec![c[0] + self.std * e[0], c[1] + self.std * e[1]]
            })
            .collect()
    }
}

impl DataSource for RingMixture {
    fn noise(&mut self, n: usize) -> Result<Tensor> {
        let v = normal_vec(&mut self.rng, n * self.z_dim);
        Ok(Tensor::from_vec(v, (n, self.z_dim), &device())?)
    }

    fn real(&mut self, n: usize) -> Result<Tensor> {
        let v: Vec<f64> = self.sample_points(n).into_iter().flatten().collect();
        Ok(Tensor::from_vec(v, (n, 2), &device())?)
    }

    fn rng_state(&self) -> RngState {
        RngState::of(&self.rng)
    }

    fn set_rng_state(&mut self, state: &RngState) {
        self.rng = state.restore();
    }
}

/// Images in [-1, 1] holding one bright Gaussian blob at a random position.
#[derive(Debug, Clone)]
pub struct BlobImages {
    pub size: usize,
    pub channels: usize,
    pub nz: usize,
    rng: ChaCha8Rng,
}

impl BlobImages {
    pub fn new(size: usize, channels: usize, nz: usize, seed: u64) -> Self {
        BlobImages {
            size,
            channels,
            nz,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl DataSource for BlobImages {
    fn noise(&mut self, n: usize) -> Result<Tensor> {
        let v = normal_vec(&mut self.rng, n * self.nz);
        Ok(Tensor::from_vec(v, (n, self.nz, 1, 1), &device())?)
    }

    fn real(&mut self, n: usize) -> Result<Tensor> {
        let s = self.size;
        let sigma = s as f64 / 8.0;
        let mut out = Vec::with_capacity(n * self.channels * s * s);
        for _ in 0..n {
            let cy = self.rng.random_range(0.0..s as f64);
            let cx = self.rng.random_range(0.0..s as f64);
            for _ in 0..self.channels {
                for y in 0..s {
                    for x in 0..s {
                        let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                        out.push(2.0 * (-d2 / (2.0 * sigma * sigma)).exp() - 1.0);
                    }
                }
            }
        }
        Ok(Tensor::from_vec(out, (n, self.channels, s, s), &device())?)
    }

    fn rng_state(&self) -> RngState {
        RngState::of(&self.rng)
    }

    fn set_rng_state(&mut self, state: &RngState) {
        self.rng = state.restore();
    }
}

/// Rows of a `[n, d]` tensor.
pub fn rows(t: &Tensor) -> Result<Vec<Vec<f64>>> {
    Ok(t.flatten_from(1)?.to_vec2()?)
}
