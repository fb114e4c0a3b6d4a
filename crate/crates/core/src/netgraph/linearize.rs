use super::layers::{argmax_window, sigmoid, LayerSpec};
use crate::error::{Error, Result};
use crate::linalg::{chain_product, conv2d_to_matrix, Matrix, Operator, Tensor, DEFAULT_ELEMENT_BUDGET};

/// How smooth activations (sigmoid, tanh) are written as point-wise affine maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothMode {
    /// `sigma(z) = diag((sigma(z) - sigma(0)) / z) z + sigma(0)`; the limit `sigma'(0)` is
    /// used where `|z| < 1e-12`. The bias is input independent.
    #[default]
    Secant,
    /// `diag(sigma'(z))` with the bias `sigma(z) - sigma'(z) z` that makes the map exact at
    /// the anchoring point. The slope is then the true Jacobian.
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearizeOptions {
    pub element_budget: usize,
    pub smooth_mode: SmoothMode,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        LinearizeOptions {
            element_budget: DEFAULT_ELEMENT_BUDGET,
            smooth_mode: SmoothMode::Secant,
        }
    }
}

/// State of one ReLU unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Indicator {
    Off,
    On,
    /// Pre-activation exactly zero: the input sits on a region boundary.
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignatureEntry {
    Gate(Indicator),
    /// Max-pool choice: position inside the window, and whether the maximum was tied.
    Select {
        offset: u32,
        tie: bool,
    },
}

/// Indicator states of every piecewise-linear unit, in layer order. Two inputs of a
/// piecewise-linear network with equal signatures share one affine map.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ActivationSignature {
    entries: Vec<SignatureEntry>,
}

impl ActivationSignature {
    pub fn entries(&self) -> &[SignatureEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn extend(&mut self, other: &ActivationSignature) {
        self.entries.extend_from_slice(&other.entries);
    }

    /// True when some unit is exactly at its switching point.
    pub fn on_boundary(&self) -> bool {
        self.entries.iter().any(|e| {
            matches!(
                e,
                SignatureEntry::Gate(Indicator::Boundary) | SignatureEntry::Select { tie: true, .. }
            )
        })
    }

    /// Number of boundary units.
    pub fn boundary_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| {
                matches!(
                    e,
                    SignatureEntry::Gate(Indicator::Boundary) | SignatureEntry::Select { tie: true, .. }
                )
            })
            .count()
    }

    /// Compact text form: `1`/`0`/`b` per gate, `<offset>` or `<offset*>` per selection.
    pub fn to_compact_string(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            match e {
                SignatureEntry::Gate(Indicator::On) => s.push('1'),
                SignatureEntry::Gate(Indicator::Off) => s.push('0'),
                SignatureEntry::Gate(Indicator::Boundary) => s.push('b'),
                SignatureEntry::Select { offset, tie } => {
                    s.push_str(&format!("<{offset}{}>", if *tie { "*" } else { "" }))
                }
            }
        }
        s
    }
}

/// The affine form of one layer at one input: `z_out = weight * z_in + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerLinearization {
    pub weight: Operator,
    pub bias: Vec<f64>,
    pub signature: ActivationSignature,
}

impl LayerLinearization {
    pub fn weight_matrix(&self) -> Matrix {
        self.weight.to_matrix()
    }

    /// `weight * z + bias`
    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.weight.apply(z)?;
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += b;
        }
        Ok(y)
    }
}

fn relu_gates(z: &[f64]) -> (Vec<f64>, ActivationSignature) {
    let mut diag = Vec::with_capacity(z.len());
    let mut entries = Vec::with_capacity(z.len());
    for &v in z {
        let (d, s) = if v > 0.0 {
            (1.0, Indicator::On)
        } else if v < 0.0 {
            (0.0, Indicator::Off)
        } else {
            (0.0, Indicator::Boundary)
        };
        diag.push(d);
        entries.push(SignatureEntry::Gate(s));
    }
    (diag, ActivationSignature { entries })
}

const SMALL_Z: f64 = 1e-12;

type ScalarFn = fn(f64) -> f64;

fn smooth_linearization(z: &[f64], is_sigmoid: bool, mode: SmoothMode) -> (Vec<f64>, Vec<f64>) {
    let (f, df): (ScalarFn, ScalarFn) = if is_sigmoid {
        (sigmoid, |z| {
            let s = sigmoid(z);
            s * (1.0 - s)
        })
    } else {
        (f64::tanh, |z| {
            let t = z.tanh();
            1.0 - t * t
        })
    };
    match mode {
        SmoothMode::Secant => {
            let offset = f(0.0);
            let diag = z
                .iter()
                .map(|&v| {
                    if v.abs() < SMALL_Z {
                        df(0.0)
                    } else if is_sigmoid {
                        // sigmoid(z) - 1/2 == tanh(z/2) / 2, without the cancellation
                        0.5 * (0.5 * v).tanh() / v
                    } else {
                        v.tanh() / v
                    }
                })
                .collect();
            (diag, vec![offset; z.len()])
        }
        SmoothMode::Gradient => {
            let diag: Vec<f64> = z.iter().map(|&v| df(v)).collect();
            let bias = z.iter().zip(&diag).map(|(&v, d)| f(v) - d * v).collect();
            (diag, bias)
        }
    }
}

fn zeros_if_none(b: &Option<Vec<f64>>, n: usize) -> Vec<f64> {
    b.clone().unwrap_or_else(|| vec![0.0; n])
}

/// Signature of one layer at `z_in`, without building any matrices.
pub fn layer_signature(layer: &LayerSpec, z_in: &Tensor) -> Result<ActivationSignature> {
    match layer {
        LayerSpec::Relu => Ok(relu_gates(z_in.data()).1),
        LayerSpec::MaxPool(p) => {
            p.out_shape(z_in.shape())?;
            let mut entries = Vec::new();
            p.for_each_window(z_in.shape(), |_, idx| {
                let (best, tie) = argmax_window(z_in.data(), idx);
                entries.push(SignatureEntry::Select {
                    offset: best as u32,
                    tie,
                });
            });
            Ok(ActivationSignature { entries })
        }
        LayerSpec::Residual(r) => chain_signature(&r.inner, z_in).map(|(s, _)| s),
        LayerSpec::Concat(c) => {
            let mut sig = ActivationSignature::default();
            for b in &c.branches {
                sig.extend(&chain_signature(b, z_in)?.0);
            }
            Ok(sig)
        }
        _ => Ok(ActivationSignature::default()),
    }
}

/// Signature of a layer chain and its output.
pub(crate) fn chain_signature(layers: &[LayerSpec], x: &Tensor) -> Result<(ActivationSignature, Tensor)> {
    let mut sig = ActivationSignature::default();
    let mut z = x.clone();
    for layer in layers {
        sig.extend(&layer_signature(layer, &z)?);
        z = layer.apply(&z)?;
    }
    Ok((sig, z))
}

/// Affine form of `layer` at the input `z_in`.
pub fn linearize_layer(layer: &LayerSpec, z_in: &Tensor, opts: &LinearizeOptions) -> Result<LayerLinearization> {
    let out_shape = layer.output_shape(z_in.shape())?;
    let out_len: usize = out_shape.iter().product();
    let in_len = z_in.len();
    let plain = |weight: Operator, bias: Vec<f64>| LayerLinearization {
        weight,
        bias,
        signature: ActivationSignature::default(),
    };
    match layer {
        LayerSpec::Dense(d) => Ok(plain(
            Operator::Dense(d.weight.clone()),
            zeros_if_none(&d.bias, out_len),
        )),
        LayerSpec::Conv2d(c) => {
            let m = conv2d_to_matrix(&c.kernel, z_in.shape(), c.params, opts.element_budget)?;
            let bias = match &c.bias {
                Some(b) => b.iter().cycle().take(out_len).copied().collect(),
                None => vec![0.0; out_len],
            };
            Ok(plain(Operator::Dense(m), bias))
        }
        LayerSpec::AvgPool(p) => {
            budget(out_len * in_len, opts, "avgpool matrix")?;
            let mut m = Matrix::zeros(out_len, in_len);
            let area = 1.0 / (p.window[0] * p.window[1]) as f64;
            p.for_each_window(z_in.shape(), |o, idx| {
                for &i in idx {
                    m.set(o, i, area);
                }
            });
            Ok(plain(Operator::Dense(m), vec![0.0; out_len]))
        }
        LayerSpec::MaxPool(p) => {
            budget(out_len * in_len, opts, "maxpool selection matrix")?;
            let mut m = Matrix::zeros(out_len, in_len);
            let mut entries = Vec::with_capacity(out_len);
            p.for_each_window(z_in.shape(), |o, idx| {
                let (best, tie) = argmax_window(z_in.data(), idx);
                m.set(o, idx[best], 1.0);
                entries.push(SignatureEntry::Select {
                    offset: best as u32,
                    tie,
                });
            });
            Ok(LayerLinearization {
                weight: Operator::Dense(m),
                bias: vec![0.0; out_len],
                signature: ActivationSignature { entries },
            })
        }
        LayerSpec::Relu => {
            let (diag, signature) = relu_gates(z_in.data());
            Ok(LayerLinearization {
                weight: Operator::Diagonal(diag),
                bias: vec![0.0; out_len],
                signature,
            })
        }
        LayerSpec::Sigmoid | LayerSpec::Tanh => {
            let (diag, bias) = smooth_linearization(z_in.data(), matches!(layer, LayerSpec::Sigmoid), opts.smooth_mode);
            Ok(plain(Operator::Diagonal(diag), bias))
        }
        LayerSpec::Flatten => Ok(plain(Operator::identity(in_len), vec![0.0; out_len])),
        LayerSpec::Residual(r) => {
            let inner = linearize_chain(&r.inner, z_in, opts)?;
            let weight = match (&r.skip, inner.weight) {
                (None, Operator::Diagonal(d)) => Operator::Diagonal(d.iter().map(|v| v + 1.0).collect()),
                (None, Operator::Dense(mut m)) => {
                    for i in 0..out_len {
                        m.set(i, i, m.get(i, i) + 1.0);
                    }
                    Operator::Dense(m)
                }
                (Some(w), op) => {
                    budget(w.len(), opts, "residual operator")?;
                    Operator::Dense(w.add(&op.to_matrix())?)
                }
            };
            Ok(LayerLinearization {
                weight,
                bias: inner.bias,
                signature: inner.signature,
            })
        }
        LayerSpec::Concat(c) => {
            budget(out_len * in_len, opts, "concat operator")?;
            let mut weight = Matrix::zeros(out_len, in_len);
            let mut bias = zeros_if_none(&c.bias, out_len);
            let mut signature = ActivationSignature::default();
            for (branch, w) in c.branches.iter().zip(&c.combine) {
                let lin = linearize_chain(branch, z_in, opts)?;
                let part = match &lin.weight {
                    Operator::Dense(m) => crate::linalg::matmul(w, m)?,
                    Operator::Diagonal(d) => {
                        let mut m = w.clone();
                        m.scale_columns(d);
                        m
                    }
                };
                weight = weight.add(&part)?;
                for (b, add) in bias.iter_mut().zip(w.matvec(&lin.bias)?) {
                    *b += add;
                }
                signature.extend(&lin.signature);
            }
            Ok(LayerLinearization {
                weight: Operator::Dense(weight),
                bias,
                signature,
            })
        }
    }
}

fn budget(needed: usize, opts: &LinearizeOptions, what: &str) -> Result<()> {
    if needed > opts.element_budget {
        Err(Error::Resource {
            what: what.to_string(),
            needed,
            budget: opts.element_budget,
        })
    } else {
        Ok(())
    }
}

/// Per-layer linearizations of a chain along with the visited representations.
#[derive(Debug, Clone)]
pub struct ChainLinearization {
    /// `z_0 .. z_n`
    pub activations: Vec<Tensor>,
    pub layers: Vec<LayerLinearization>,
}

impl ChainLinearization {
    pub fn signature(&self) -> ActivationSignature {
        let mut s = ActivationSignature::default();
        for l in &self.layers {
            s.extend(&l.signature);
        }
        s
    }
}

pub fn linearize_layers(layers: &[LayerSpec], x: &Tensor, opts: &LinearizeOptions) -> Result<ChainLinearization> {
    let mut activations = vec![x.clone()];
    let mut lins = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let z = activations.last().expect("non-empty");
        let lin = linearize_layer(layer, z, opts).map_err(|e| match e {
            Error::Resource { what, needed, budget } => Error::Resource {
                what: format!("layer {i} ({}): {what}", layer.kind()),
                needed,
                budget,
            },
            other => other,
        })?;
        let next = layer.apply(z)?;
        lins.push(lin);
        activations.push(next);
    }
    Ok(ChainLinearization {
        activations,
        layers: lins,
    })
}

/// Collapses a chain to a single affine map (used for nested sub-networks).
fn linearize_chain(layers: &[LayerSpec], x: &Tensor, opts: &LinearizeOptions) -> Result<LayerLinearization> {
    let chain = linearize_layers(layers, x, opts)?;
    let ops: Vec<&Operator> = chain.layers.iter().map(|l| &l.weight).collect();
    let weight = chain_product(&ops, opts.element_budget)?;
    let mut bias = vec![0.0; x.len()];
    for l in &chain.layers {
        bias = l.apply(&bias)?;
    }
    let signature = chain.signature();
    Ok(LayerLinearization {
        weight,
        bias,
        signature,
    })
}
