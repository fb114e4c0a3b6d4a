//! Randomly initialised models used by the demo, the benchmarks and the test suites.

use rand::Rng;

use crate::error::Result;
use crate::linalg::{ConvParams, Matrix, Tensor};
use crate::netgraph::{Concat, Conv2d, Dense, LayerSpec, NetworkModel, Pool, Residual};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    None,
}

impl Activation {
    fn layer(self) -> Option<LayerSpec> {
        match self {
            Activation::Relu => Some(LayerSpec::Relu),
            Activation::Sigmoid => Some(LayerSpec::Sigmoid),
            Activation::Tanh => Some(LayerSpec::Tanh),
            Activation::None => None,
        }
    }
}

/// Uniform `[-a, a]` with `a = sqrt(6 / fan_in)`.
pub fn he_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let a = (6.0 / fan_in as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Matrix::new(rows, cols, data).expect("positive dims")
}

pub fn uniform_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_input<R: Rng>(rng: &mut R, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), uniform_vec(rng, n, 1.0)).expect("valid shape")
}

/// `widths[0] -> widths[1] -> ...` dense network with `act` between layers and a linear
/// last layer.
pub fn random_mlp<R: Rng>(rng: &mut R, widths: &[usize], act: Activation, bias: bool) -> Result<NetworkModel> {
    assert!(widths.len() >= 2, "an MLP needs input and output widths");
    let mut layers = Vec::new();
    for (i, w) in widths.windows(2).enumerate() {
        let weight = he_uniform(rng, w[1], w[0], w[0]);
        let b = bias.then(|| uniform_vec(rng, w[1], 0.5));
        layers.push(LayerSpec::Dense(Dense::new(weight, b)));
        if i + 2 < widths.len() {
            layers.extend(act.layer());
        }
    }
    NetworkModel::new(format!("mlp-{widths:?}"), vec![widths[0]], layers)
}

fn random_conv<R: Rng>(rng: &mut R, k: usize, c_in: usize, c_out: usize, pad: usize) -> LayerSpec {
    let fan_in = k * k * c_in;
    let a = (6.0 / fan_in as f64).sqrt();
    let kernel = Tensor::new(
        vec![k, k, c_in, c_out],
        (0..k * k * c_in * c_out).map(|_| rng.random_range(-a..a)).collect(),
    )
    .expect("valid kernel");
    LayerSpec::Conv2d(Conv2d {
        kernel,
        bias: Some(uniform_vec(rng, c_out, 0.3)),
        params: ConvParams {
            padding: [pad, pad],
            ..ConvParams::default()
        },
    })
}

/// A small randomly wired CNN on an `[side, side, channels]` input that mixes
/// convolution, average and max pooling, a residual block and a two-branch concat.
pub fn random_cnn<R: Rng>(rng: &mut R, side: usize, channels: usize, outputs: usize) -> Result<NetworkModel> {
    let c1 = rng.random_range(2..=4);
    let mut layers = vec![random_conv(rng, 3, channels, c1, 1), LayerSpec::Relu];

    // Residual block keeping the shape.
    let inner = vec![
        random_conv(rng, 3, c1, c1, 1),
        LayerSpec::Relu,
        random_conv(rng, 1, c1, c1, 0),
    ];
    let skip = rng.random_bool(0.5).then(|| {
        let n = side * side * c1;
        let mut m = Matrix::identity(n);
        m.scale_rows(&vec![rng.random_range(0.5..1.5); n]);
        m
    });
    layers.push(LayerSpec::Residual(Residual { inner, skip }));
    layers.push(LayerSpec::Relu);

    let pool = Pool::square(2);
    layers.push(if rng.random_bool(0.5) {
        LayerSpec::MaxPool(pool)
    } else {
        LayerSpec::AvgPool(pool)
    });
    let s2 = side / 2;

    // Two branches stacked along channels.
    let c2 = rng.random_range(1..=3);
    let c3 = rng.random_range(1..=3);
    let branches = vec![
        vec![random_conv(rng, 3, c1, c2, 1), LayerSpec::Relu],
        vec![random_conv(rng, 1, c1, c3, 0), LayerSpec::Tanh],
    ];
    let concat = Concat::stack(branches, &[s2, s2, c1])?;
    layers.push(LayerSpec::Concat(concat));

    if rng.random_bool(0.5) && s2 >= 2 {
        layers.push(LayerSpec::MaxPool(Pool {
            window: [2, 2],
            stride: [1, 1],
        }));
    }
    layers.push(LayerSpec::Flatten);
    let shapes = crate::netgraph::chain_shapes(&layers, &[side, side, channels])?;
    let flat = shapes.last().expect("non-empty")[0];
    let hidden = rng.random_range(4..=16);
    layers.push(LayerSpec::Dense(Dense::new(
        he_uniform(rng, hidden, flat, flat),
        Some(uniform_vec(rng, hidden, 0.3)),
    )));
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::Dense(Dense::new(
        he_uniform(rng, outputs, hidden, hidden),
        Some(uniform_vec(rng, outputs, 0.3)),
    )));
    NetworkModel::new("random-cnn", vec![side, side, channels], layers)
}
