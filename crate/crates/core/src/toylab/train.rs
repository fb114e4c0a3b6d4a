//! Momentum-SGD training of a fully connected ReLU autoencoder in `f32`.
//!
//! Single-threaded and fully determined by the seed: batches are visited in a seeded
//! shuffled order and every reduction runs in a fixed order.

use log::info;
use matrixmultiply::sgemm;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::netgraph::{Dense, LayerSpec, NetworkModel};

use super::squares::Squares;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Layer widths from input to output; the first and last must match the image size
    /// and the narrowest must be 8.
    pub widths: Vec<usize>,
    pub use_bias: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            widths: vec![4096, 512, 64, 8, 64, 512, 4096],
            use_bias: false,
            epochs: 40,
            batch_size: 32,
            learning_rate: 5e-5,
            momentum: 0.9,
            seed: 7,
        }
    }
}

pub const BOTTLENECK: usize = 8;

impl TrainConfig {
    pub fn validate(&self, image_len: usize) -> Result<()> {
        let w = &self.widths;
        if w.len() < 3 {
            return Err(Error::Usage("an autoencoder needs at least three widths".into()));
        }
        if w[0] != image_len || w[w.len() - 1] != image_len {
            return Err(Error::Usage(format!(
                "input and output widths must equal the image size {image_len}, got {} and {}",
                w[0],
                w[w.len() - 1]
            )));
        }
        if w.iter().min() != Some(&BOTTLENECK) {
            return Err(Error::Usage(format!(
                "the narrowest layer must have width {BOTTLENECK}"
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Usage(
                "learning rate must be positive and momentum in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: NetworkModel,
    /// Mean squared error per pixel of the initial network over the whole dataset.
    pub initial_mse: f64,
    /// Mean training MSE per pixel for each epoch.
    pub losses: Vec<f64>,
    /// MSE per pixel of the final network over the whole dataset.
    pub final_mse: f64,
}

struct Net {
    widths: Vec<usize>,
    /// `[out, in]` row-major per layer.
    weights: Vec<Vec<f32>>,
    biases: Option<Vec<Vec<f32>>>,
}

fn gemm(m: usize, k: usize, n: usize, a: (&[f32], isize, isize), b: (&[f32], isize, isize), beta: f32, c: &mut [f32]) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides describe matrices that lie inside the given slices, and `c`
    // does not alias `a` or `b`.
    unsafe {
        sgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Net {
    fn init(widths: &[usize], use_bias: bool, rng: &mut ChaCha8Rng) -> Net {
        let n = widths.len() - 1;
        let weights = (0..n)
            .map(|l| {
                if l + 1 == n {
                    // A zero output layer starts the fit from f = 0 instead of first shrinking
                    // large random outputs, which tends to silence the whole bottleneck.
                    return vec![0.0; widths[l] * widths[l + 1]];
                }
                let limit = (6.0 / widths[l] as f32).sqrt();
                (0..widths[l] * widths[l + 1])
                    .map(|_| rng.random_range(-limit..limit))
                    .collect()
            })
            .collect();
        let biases = use_bias.then(|| (0..n).map(|l| vec![0.0; widths[l + 1]]).collect());
        Net {
            widths: widths.to_vec(),
            weights,
            biases,
        }
    }

    fn layers(&self) -> usize {
        self.weights.len()
    }

    /// Pre-activations of every layer for a batch `[b, widths[0]]`; entry `l` holds the
    /// post-activation input of layer `l` (entry 0 is the batch itself).
    fn forward(&self, x: &[f32], b: usize) -> Vec<Vec<f32>> {
        let mut acts = vec![x.to_vec()];
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let mut z = vec![0.0f32; b * n_out];
            if let Some(bs) = &self.biases {
                for row in z.chunks_exact_mut(n_out) {
                    row.copy_from_slice(&bs[l]);
                }
            }
            let beta = if self.biases.is_some() { 1.0 } else { 0.0 };
            // z = a W^T
            gemm(
                b,
                n_in,
                n_out,
                (&acts[l], n_in as isize, 1),
                (&self.weights[l], 1, n_in as isize),
                beta,
                &mut z,
            );
            if l + 1 < self.layers() {
                for v in z.iter_mut() {
                    if *v <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(z);
        }
        acts
    }

    fn to_model(&self, image_shape: &[usize]) -> Result<NetworkModel> {
        let mut layers = Vec::with_capacity(2 * self.layers());
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = Matrix::new(n_out, n_in, self.weights[l].iter().map(|&v| v as f64).collect())?;
            let bias = self.biases.as_ref().map(|bs| bs[l].iter().map(|&v| v as f64).collect());
            let mut dense = Dense::new(w, bias);
            if l + 1 == self.layers() {
                dense.out_shape = Some(image_shape.to_vec());
                layers.push(LayerSpec::Dense(dense));
            } else {
                layers.push(LayerSpec::Dense(dense));
                layers.push(LayerSpec::Relu);
            }
        }
        NetworkModel::new("rotated-squares-autoencoder", image_shape.to_vec(), layers)
    }
}

fn batch_sq_error(out: &[f32], target: &[f32]) -> f64 {
    out.iter()
        .zip(target)
        .map(|(&y, &t)| {
            let d = (y - t) as f64;
            d * d
        })
        .sum()
}

fn dataset_mse(net: &Net, data: &[f32], n: usize, dim: usize) -> f64 {
    let chunk = 256;
    let mut total = 0.0;
    let mut i = 0;
    while i < n {
        let b = chunk.min(n - i);
        let x = &data[i * dim..(i + b) * dim];
        let acts = net.forward(x, b);
        total += batch_sq_error(acts.last().expect("output"), x);
        i += b;
    }
    total / (n * dim) as f64
}

/// Trains on the objective `mean_batch 0.5 * sum_pixels (y - x)^2` with
/// `v = mu v + g; w -= lr v`.
pub fn train_autoencoder(data: &Squares, cfg: &TrainConfig) -> Result<TrainReport> {
    let dim = data.image_len();
    cfg.validate(dim)?;
    let n = data.len();
    let image_shape = data.images.shape()[1..].to_vec();
    let xs: Vec<f32> = data.images.data().iter().map(|&v| v as f32).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Net::init(&cfg.widths, cfg.use_bias, &mut rng);
    let n_layers = net.layers();
    let mut vel_w: Vec<Vec<f32>> = net.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut vel_b: Vec<Vec<f32>> = (0..n_layers).map(|l| vec![0.0; cfg.widths[l + 1]]).collect();
    let mut grad_w: Vec<Vec<f32>> = net.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut grad_b: Vec<Vec<f32>> = (0..n_layers).map(|l| vec![0.0; cfg.widths[l + 1]]).collect();

    let initial_mse = dataset_mse(&net, &xs, n, dim);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch = vec![0.0f32; cfg.batch_size * dim];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sq = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let b = idx.len();
            for (row, &i) in idx.iter().enumerate() {
                batch[row * dim..(row + 1) * dim].copy_from_slice(&xs[i * dim..(i + 1) * dim]);
            }
            let x = &batch[..b * dim];
            let acts = net.forward(x, b);
            let out = acts.last().expect("output");
            sq += batch_sq_error(out, x);

            // d(loss)/d(out) for the batch-mean objective.
            let inv_b = 1.0 / b as f32;
            let mut delta: Vec<f32> = out.iter().zip(x).map(|(&y, &t)| (y - t) * inv_b).collect();
            for l in (0..n_layers).rev() {
                let (n_in, n_out) = (cfg.widths[l], cfg.widths[l + 1]);
                // grad_w = delta^T a_l
                gemm(
                    n_out,
                    b,
                    n_in,
                    (&delta, 1, n_out as isize),
                    (&acts[l], n_in as isize, 1),
                    0.0,
                    &mut grad_w[l],
                );
                if net.biases.is_some() {
                    let gb = &mut grad_b[l];
                    gb.iter_mut().for_each(|g| *g = 0.0);
                    for row in delta.chunks_exact(n_out) {
                        for (g, d) in gb.iter_mut().zip(row) {
                            *g += d;
                        }
                    }
                }
                if l > 0 {
                    // delta_prev = (delta W) * relu'(z_{l-1})
                    let mut prev = vec![0.0f32; b * n_in];
                    gemm(
                        b,
                        n_out,
                        n_in,
                        (&delta, n_out as isize, 1),
                        (&net.weights[l], n_in as isize, 1),
                        0.0,
                        &mut prev,
                    );
                    for (p, &a) in prev.iter_mut().zip(&acts[l]) {
                        if a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
            for l in 0..n_layers {
                for ((w, v), g) in net.weights[l].iter_mut().zip(&mut vel_w[l]).zip(&grad_w[l]) {
                    *v = cfg.momentum * *v + g;
                    *w -= cfg.learning_rate * *v;
                }
                if let Some(bs) = &mut net.biases {
                    for ((w, v), g) in bs[l].iter_mut().zip(&mut vel_b[l]).zip(&grad_b[l]) {
                        *v = cfg.momentum * *v + g;
                        *w -= cfg.learning_rate * *v;
                    }
                }
            }
        }
        let mse = sq / (n * dim) as f64;
        if !mse.is_finite() {
            return Err(Error::Training { epoch });
        }
        info!("epoch {epoch}: mse {mse:.6}");
        losses.push(mse);
    }
    let final_mse = dataset_mse(&net, &xs, n, dim);
    if !final_mse.is_finite() {
        return Err(Error::Training { epoch: cfg.epochs });
    }
    Ok(TrainReport {
        model: net.to_model(&image_shape)?,
        initial_mse,
        losses,
        final_mse,
    })
}
