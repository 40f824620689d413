//! Independent oracles shared by the integration tests. Nothing here calls
//! the code path it is used to check.

#![allow(dead_code)]

use candle_core::{Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use gcc_core::model_zoo::network::device;
use gcc_core::model_zoo::{Activation, LayerKind, LayerSpec, NetworkRole, NetworkSpec};

pub fn tensor(v: &[f64], shape: &[usize]) -> Tensor {
    Tensor::from_vec(v.to_vec(), shape, &device()).unwrap()
}

pub fn values(t: &Tensor) -> Vec<f64> {
    t.flatten_all().unwrap().to_vec1().unwrap()
}

pub fn scalar(t: &Tensor) -> f64 {
    t.to_scalar().unwrap()
}

/// Distance in units in the last place.
pub fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    let (x, y) = (a.to_bits() as i64, b.to_bits() as i64);
    if (x < 0) != (y < 0) {
        return u64::MAX;
    }
    x.abs_diff(y)
}

/// `|a - b| <= rel * max(|a|, |b|) + abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

/// Elementwise Gram matrix of one sample: `c × c` from a `c × n` row-major
/// buffer.
pub fn brute_gram(x: &[f64], c: usize, n: usize) -> Vec<f64> {
    let mut g = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            let mut s = 0.0;
            for k in 0..n {
                s += x[i * n + k] * x[j * n + k];
            }
            g[i * c + j] = s;
        }
    }
    g
}

/// Batch mean of `‖G(a) − G(b)‖_F / c²`.
pub fn brute_texture(a: &[f64], b: &[f64], batch: usize, c: usize, n: usize) -> f64 {
    let per = c * n;
    let mut total = 0.0;
    for s in 0..batch {
        let ga = brute_gram(&a[s * per..(s + 1) * per], c, n);
        let gb = brute_gram(&b[s * per..(s + 1) * per], c, n);
        let sq: f64 = ga.iter().zip(&gb).map(|(x, y)| (x - y) * (x - y)).sum();
        total += sq.sqrt() / (c * c) as f64;
    }
    total / batch as f64
}

pub fn brute_mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Central difference of `f` with respect to every coordinate of `x`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        out.push((up - down) / (2.0 * h));
    }
    out
}

pub fn set_var(v: &Var, data: &[f64]) {
    let shape = v.as_tensor().shape().clone();
    v.set(&Tensor::from_vec(data.to_vec(), shape, &device()).unwrap()).unwrap();
}

/// A plain feed-forward chain used by the pruning oracle: either an MLP of
/// Linear-BN-ReLU blocks or a conv net of Conv-BN-ReLU blocks.
#[derive(Debug, Clone)]
pub struct Chain {
    pub conv: bool,
    pub input: Vec<usize>,
    /// Output widths of every parameterized layer; the last one is fixed.
    pub widths: Vec<usize>,
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
}

impl Chain {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let conv = rng.random_bool(0.5);
        let depth = rng.random_range(2..=5);
        let mut widths: Vec<usize> = (0..depth - 1).map(|_| rng.random_range(1..=9)).collect();
        widths.push(rng.random_range(1..=3));
        let kernels = (0..depth).map(|_| if conv { [1, 3][rng.random_range(0..2)] } else { 1 }).collect();
        let strides = (0..depth).map(|_| if conv { rng.random_range(1..=2) } else { 1 }).collect();
        let input = if conv {
            vec![rng.random_range(1..=3), 8, 8]
        } else {
            vec![rng.random_range(1..=6)]
        };
        Chain {
            conv,
            input,
            widths,
            kernels,
            strides,
        }
    }

    pub fn spec(&self) -> NetworkSpec {
        let mut layers = Vec::new();
        let mut c_in = self.input[0];
        let last = self.widths.len() - 1;
        for (i, &w) in self.widths.iter().enumerate() {
            if self.conv {
                let k = self.kernels[i];
                layers.push(LayerSpec::conv(c_in, w, k, self.strides[i], k / 2));
            } else {
                layers.push(LayerSpec::linear(c_in, w));
            }
            if i < last {
                layers.push(LayerSpec::batch_norm(w));
                layers.push(LayerSpec::activation(Activation::Relu, w));
            }
            c_in = w;
        }
        NetworkSpec::new("chain", NetworkRole::Generator, self.input.clone(), layers)
    }

    /// Index of parameterized layer `i` inside `spec().layers`.
    pub fn layer_index(&self, i: usize) -> usize {
        3 * i
    }

    /// MACs for the given per-layer widths, computed by hand.
    pub fn macs(&self, widths: &[usize]) -> u64 {
        let mut c_in = self.input[0] as u64;
        let mut side = if self.conv { self.input[1] as u64 } else { 1 };
        let mut total = 0;
        for (i, &w) in widths.iter().enumerate() {
            let w = w as u64;
            if self.conv {
                let k = self.kernels[i] as u64;
                let p = k / 2;
                side = (side + 2 * p - k) / self.strides[i] as u64 + 1;
                total += side * side * w * c_in * k * k;
            } else {
                total += c_in * w;
            }
            c_in = w;
        }
        total
    }
}

/// Outcome of the reference greedy pruning loop.
#[derive(Debug, Clone, PartialEq)]
pub enum GreedyOutcome {
    /// Kept kernel indices per parameterized layer, and the final MACs.
    Plan(Vec<Vec<usize>>, u64),
    Unachievable(u64),
}

/// Visits kernels of every non-output layer by ascending
/// `(score, layer, kernel)`, removing each unless its layer has one left,
/// until MACs fall to the target.
pub fn greedy_oracle(chain: &Chain, scores: &[Vec<f64>], target: u64) -> GreedyOutcome {
    let n = chain.widths.len();
    let mut alive: Vec<Vec<bool>> = chain.widths.iter().map(|&w| vec![true; w]).collect();
    let widths = |alive: &Vec<Vec<bool>>| -> Vec<usize> {
        alive.iter().map(|a| a.iter().filter(|&&x| x).count()).collect()
    };
    let mut current = chain.macs(&chain.widths);
    let mut floor = chain.widths.clone();
    floor[..n - 1].iter_mut().for_each(|w| *w = 1);
    let minimum = chain.macs(&floor);
    if current > target && minimum > target {
        return GreedyOutcome::Unachievable(minimum);
    }
    let mut queue = Vec::new();
    for (l, s) in scores.iter().enumerate().take(n - 1) {
        for (k, &v) in s.iter().enumerate() {
            queue.push((v, chain.layer_index(l), k, l));
        }
    }
    // Insertion sort keeps this oracle free of the comparator used in the
    // implementation.
    for i in 1..queue.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (queue[j - 1], queue[j]);
            let greater = a.0 > b.0 || (a.0 == b.0 && (a.1 > b.1 || (a.1 == b.1 && a.2 > b.2)));
            if !greater {
                break;
            }
            queue.swap(j - 1, j);
            j -= 1;
        }
    }
    for &(_, _, k, l) in &queue {
        if current <= target {
            break;
        }
        if widths(&alive)[l] == 1 {
            continue;
        }
        alive[l][k] = false;
        current = chain.macs(&widths(&alive));
    }
    let kept = alive
        .iter()
        .map(|a| (0..a.len()).filter(|&k| a[k]).collect())
        .collect();
    GreedyOutcome::Plan(kept, current)
}

/// Random scores drawn from a small set so that ties occur.
pub fn random_scores(chain: &Chain, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    chain
        .widths
        .iter()
        .map(|&w| (0..w).map(|_| rng.random_range(0..6) as f64 * 0.25).collect())
        .collect()
}

pub fn is_param(kind: LayerKind) -> bool {
    matches!(kind, LayerKind::Conv | LayerKind::TransposedConv | LayerKind::Linear)
}

/// A ring config that trains in well under a second.
pub fn quick_config(out: &std::path::Path) -> gcc_core::trainer::ExperimentConfig {
    let mut c = gcc_core::trainer::ExperimentConfig::defaults(gcc_core::trainer::Task::Ring8);
    c.epochs_const = 5;
    c.epochs_decay = 5;
    c.steps_per_epoch = 2;
    c.batch_size = 32;
    c.checkpoint_every = 4;
    c.data.eval_samples = 200;
    c.output_dir = out.to_path_buf();
    c
}
