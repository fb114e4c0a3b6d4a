//! Whole-network point-wise affine form `f(x) = u x + b` at a given input, the per-layer
//! split of the bias, and linear-region diagnostics.

use crate::error::{Error, Result};
use crate::linalg::{chain_product, max_abs, max_abs_diff, Matrix, Operator, Tensor};
use crate::netgraph::{ActivationSignature, ChainLinearization, LinearizeOptions, NetworkModel};

/// Relative tolerance for the agreement of the two bias computations.
pub const BIAS_AGREEMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AffineOperator {
    /// `N x M` slope.
    pub u: Matrix,
    /// Bias as the sum of the per-layer contributions.
    pub b: Vec<f64>,
    pub signature: ActivationSignature,
    pub x_ref: Tensor,
    /// `f(x_ref)` from the forward pass.
    pub output: Vec<f64>,
    /// Max-abs gap between `f(x) - u x` and the per-layer bias sum.
    pub bias_gap: f64,
}

impl AffineOperator {
    /// `u x + b`
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.u.matvec(x)?;
        for (v, b) in y.iter_mut().zip(&self.b) {
            *v += b;
        }
        Ok(y)
    }

    /// `||f(x) - (u x + b)||_inf` at the anchoring input.
    pub fn residual(&self) -> f64 {
        let y = self.apply(self.x_ref.data()).expect("consistent shapes");
        max_abs_diff(&y, &self.output)
    }
}

/// Per-layer bias contributions `beta_l`, each already mapped to the output space.
#[derive(Debug, Clone)]
pub struct BiasDecomposition {
    /// One entry per layer (zero vectors for layers without a bias).
    pub betas: Vec<Vec<f64>>,
    pub total: Vec<f64>,
}

impl BiasDecomposition {
    /// Indices of the layers whose contribution is non-zero.
    pub fn contributing_layers(&self) -> Vec<usize> {
        self.betas
            .iter()
            .enumerate()
            .filter(|(_, b)| b.iter().any(|&v| v != 0.0))
            .map(|(i, _)| i)
            .collect()
    }
}

/// `beta_l = W_L .. W_{l+1} b_l` for every layer of a linearized chain.
pub(crate) fn propagate_biases(chain: &ChainLinearization) -> Result<BiasDecomposition> {
    let n_layers = chain.layers.len();
    let out_len = chain.activations.last().expect("non-empty").len();
    let mut betas = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let mut v = chain.layers[l].bias.clone();
        if v.iter().all(|&x| x == 0.0) {
            betas.push(vec![0.0; out_len]);
            continue;
        }
        for later in &chain.layers[l + 1..] {
            v = later.weight.apply(&v)?;
        }
        betas.push(v);
    }
    let mut total = vec![0.0; out_len];
    for b in &betas {
        for (t, v) in total.iter_mut().zip(b) {
            *t += v;
        }
    }
    Ok(BiasDecomposition { betas, total })
}

pub(crate) fn operator_product(
    chain: &ChainLinearization,
    range: std::ops::Range<usize>,
    budget: usize,
) -> Result<Operator> {
    let ops: Vec<&Operator> = chain.layers[range].iter().map(|l| &l.weight).collect();
    chain_product(&ops, budget)
}

fn scale(y: &[f64]) -> f64 {
    1.0 + max_abs(y)
}

/// Builds `u` and `b` at `x`, checking that both bias routes agree.
pub fn extract_affine(model: &NetworkModel, x: &Tensor, opts: &LinearizeOptions) -> Result<AffineOperator> {
    let chain = model.linearize(x, opts)?;
    affine_from_chain(&chain, opts)
}

pub(crate) fn affine_from_chain(chain: &ChainLinearization, opts: &LinearizeOptions) -> Result<AffineOperator> {
    let u = operator_product(chain, 0..chain.layers.len(), opts.element_budget)?.to_matrix();
    let x = chain.activations[0].clone();
    let output = chain.activations.last().expect("non-empty").data().to_vec();
    let ux = u.matvec(x.data())?;
    let residual_bias: Vec<f64> = output.iter().zip(&ux).map(|(f, v)| f - v).collect();
    let decomposition = propagate_biases(chain)?;
    let bias_gap = max_abs_diff(&residual_bias, &decomposition.total);
    if bias_gap > BIAS_AGREEMENT_TOL * scale(&output) {
        return Err(Error::Numeric(format!(
            "bias routes disagree by {bias_gap:e} (f(x) - u x vs sum of layer contributions)"
        )));
    }
    Ok(AffineOperator {
        u,
        b: decomposition.total,
        signature: chain.signature(),
        x_ref: x,
        output,
        bias_gap,
    })
}

pub fn bias_decomposition(model: &NetworkModel, x: &Tensor, opts: &LinearizeOptions) -> Result<BiasDecomposition> {
    propagate_biases(&model.linearize(x, opts)?)
}

/// True iff both inputs have the same activation signature.
pub fn same_region(model: &NetworkModel, x1: &Tensor, x2: &Tensor) -> Result<bool> {
    Ok(model.activation_pattern(x1)? == model.activation_pattern(x2)?)
}

/// Finite-difference probe settings.
#[derive(Debug, Clone, Copy)]
pub struct ProbeOptions {
    pub step: f64,
    /// How many times the step may be halved to keep both probes in the region.
    pub max_shrinks: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            step: 1e-5,
            max_shrinks: 20,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JacobianCheck {
    pub max_abs_error: f64,
    /// Smallest step actually used over all coordinates.
    pub min_step: f64,
}

/// Compares `u` with central finite differences, keeping every probe inside the linear
/// region of `x`.
pub fn jacobian_check(
    model: &NetworkModel,
    x: &Tensor,
    probe: ProbeOptions,
    opts: &LinearizeOptions,
) -> Result<JacobianCheck> {
    let op = extract_affine(model, x, opts)?;
    if op.signature.on_boundary() {
        return Err(Error::RegionBoundary(format!(
            "{} unit(s) exactly at their switching point",
            op.signature.boundary_count()
        )));
    }
    let m = x.len();
    let mut worst: f64 = 0.0;
    let mut min_step = probe.step;
    for i in 0..m {
        let mut h = probe.step;
        let mut found = None;
        for _ in 0..=probe.max_shrinks {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            if model.activation_pattern(&xp)? == op.signature && model.activation_pattern(&xm)? == op.signature {
                found = Some((model.predict(&xp)?, model.predict(&xm)?));
                break;
            }
            h *= 0.5;
        }
        let Some((fp, fm)) = found else {
            return Err(Error::RegionBoundary(format!(
                "no in-region step for coordinate {i} after {} halvings",
                probe.max_shrinks
            )));
        };
        min_step = min_step.min(h);
        for (j, (a, b)) in fp.data().iter().zip(fm.data()).enumerate() {
            let fd = (a - b) / (2.0 * h);
            worst = worst.max((fd - op.u.get(j, i)).abs());
        }
    }
    Ok(JacobianCheck {
        max_abs_error: worst,
        min_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{Dense, LayerSpec};

    fn opts() -> LinearizeOptions {
        LinearizeOptions::default()
    }

    fn dense(rows: &[Vec<f64>], b: Option<Vec<f64>>) -> LayerSpec {
        LayerSpec::Dense(Dense::new(Matrix::from_rows(rows).unwrap(), b))
    }

    #[test]
    fn identity_network() {
        let m = NetworkModel::new("id", vec![2], vec![dense(&[vec![1.0, 0.0], vec![0.0, 1.0]], None)]).unwrap();
        let x = Tensor::vector(vec![0.3, -0.7]).unwrap();
        let op = extract_affine(&m, &x, &opts()).unwrap();
        assert_eq!(op.u, Matrix::identity(2));
        assert_eq!(op.b, vec![0.0, 0.0]);
    }

    #[test]
    fn dense_relu_hand_example() {
        let m = NetworkModel::new(
            "dr",
            vec![2],
            vec![
                dense(&[vec![1.0, -1.0], vec![2.0, 1.0]], Some(vec![0.5, -3.0])),
                LayerSpec::Relu,
            ],
        )
        .unwrap();
        let x = Tensor::vector(vec![1.0, 1.0]).unwrap();
        let op = extract_affine(&m, &x, &opts()).unwrap();
        // pre-activation [0.5, 0]: the second unit is exactly at zero -> gated off.
        assert_eq!(op.u.data(), &[1.0, -1.0, 0.0, 0.0]);
        assert_eq!(op.u.matvec(x.data()).unwrap(), vec![0.0, 0.0]);
        assert_eq!(op.b, vec![0.5, 0.0]);
        assert!(op.signature.on_boundary());
    }

    #[test]
    fn scalar_relu_negative_input() {
        let m = NetworkModel::new("r", vec![1], vec![LayerSpec::Relu]).unwrap();
        let op = extract_affine(&m, &Tensor::vector(vec![-2.0]).unwrap(), &opts()).unwrap();
        assert_eq!(op.u.data(), &[0.0]);
        assert_eq!(op.b, vec![0.0]);
        assert_eq!(op.output, vec![0.0]);
    }

    #[test]
    fn bias_free_network_has_zero_betas() {
        let m = NetworkModel::new(
            "nb",
            vec![2],
            vec![
                dense(&[vec![1.0, 2.0], vec![-1.0, 0.5]], None),
                LayerSpec::Relu,
                dense(&[vec![1.0, 1.0]], None),
            ],
        )
        .unwrap();
        let d = bias_decomposition(&m, &Tensor::vector(vec![0.2, 0.9]).unwrap(), &opts()).unwrap();
        assert!(d.betas.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(d.total, vec![0.0]);
        assert!(d.contributing_layers().is_empty());
    }

    #[test]
    fn single_dense_beta_is_bias() {
        let m = NetworkModel::new(
            "d",
            vec![2],
            vec![dense(&[vec![1.0, 2.0], vec![3.0, 4.0]], Some(vec![0.25, -1.5]))],
        )
        .unwrap();
        let d = bias_decomposition(&m, &Tensor::vector(vec![1.0, 1.0]).unwrap(), &opts()).unwrap();
        assert_eq!(d.betas, vec![vec![0.25, -1.5]]);
    }

    #[test]
    fn same_region_basic() {
        let m = NetworkModel::new("r", vec![1], vec![LayerSpec::Relu]).unwrap();
        let a = Tensor::vector(vec![1.0]).unwrap();
        let b = Tensor::vector(vec![-1.0]).unwrap();
        assert!(same_region(&m, &a, &a).unwrap());
        assert!(!same_region(&m, &a, &b).unwrap());
    }

    #[test]
    fn linear_net_jacobian_is_exact() {
        let m = NetworkModel::new(
            "lin",
            vec![2],
            vec![
                dense(&[vec![1.0, 2.0], vec![3.0, -4.0]], Some(vec![1.0, 1.0])),
                dense(&[vec![0.5, -0.25]], None),
            ],
        )
        .unwrap();
        let x = Tensor::vector(vec![0.1, 0.2]).unwrap();
        for step in [1e-1, 1e-3, 1e-5] {
            let c = jacobian_check(&m, &x, ProbeOptions { step, max_shrinks: 20 }, &opts()).unwrap();
            assert!(c.max_abs_error <= 1e-9, "step {step}: {}", c.max_abs_error);
        }
    }

    #[test]
    fn boundary_input_is_reported() {
        let m = NetworkModel::new("r", vec![2], vec![dense(&[vec![1.0, -1.0]], None), LayerSpec::Relu]).unwrap();
        let x = Tensor::vector(vec![0.5, 0.5]).unwrap();
        let err = jacobian_check(&m, &x, ProbeOptions::default(), &opts()).unwrap_err();
        assert!(matches!(err, Error::RegionBoundary(_)));
    }
}
