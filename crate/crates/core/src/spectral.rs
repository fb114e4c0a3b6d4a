//! Spectral surgery: split the operator chain at a layer, take the SVD of the right piece,
//! and express one network output as an additive sum over singular vectors.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{dot, thin_svd, Matrix, Operator, SvdResult, Tensor, DEFAULT_RANK_TOL};
use crate::netgraph::{ChainLinearization, LinearizeOptions, NetworkModel};
use crate::pwa::{operator_product, propagate_biases};

/// SVD of the right operator at split layer `l_s`, plus everything needed to rebuild
/// output `j` from it.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    /// `l_s`, in `1..=L`; the right operator covers layers `1..=l_s`.
    pub split_layer: usize,
    pub output_index: usize,
    /// `R = d z_{l_s} / d x`.
    pub right: Matrix,
    /// `L`, layers `l_s+1..=L` (identity when `l_s == L`).
    pub left: Operator,
    pub svd: SvdResult,
    /// `L U`; `None` when the right operator is zero.
    pub left_hat: Option<Matrix>,
    /// `c_i = sigma_i (phi_i . x)`
    pub coefficients: Vec<f64>,
    /// Whole-network bias `b` at `x`.
    pub bias: Vec<f64>,
    /// `f(x)`
    pub output: Vec<f64>,
    pub x: Tensor,
}

impl SpectralSplit {
    /// `psi`: row `j` of the spectral left operator.
    pub fn psi(&self) -> Vec<f64> {
        match &self.left_hat {
            Some(m) => m.row(self.output_index).to_vec(),
            None => Vec::new(),
        }
    }

    /// `phi^k . x`
    pub fn projections(&self) -> Vec<f64> {
        (0..self.svd.len())
            .map(|k| dot(&self.svd.right_vector(k), self.x.data()))
            .collect()
    }

    /// `|(L_hat c)_j + b_j - y_j|`
    pub fn reconstruction_residual(&self) -> f64 {
        let j = self.output_index;
        let lc = dot(&self.psi(), &self.coefficients);
        (lc + self.bias[j] - self.output[j]).abs()
    }

    /// Right singular vector `k` shaped like the input.
    pub fn singular_vector(&self, k: usize) -> Tensor {
        Tensor::new(self.x.shape().to_vec(), self.svd.right_vector(k)).expect("input-shaped")
    }
}

fn check_output_index(j: usize, n: usize) -> Result<()> {
    if j >= n {
        return Err(Error::Usage(format!(
            "output index {j} out of range (model has {n} outputs)"
        )));
    }
    Ok(())
}

fn check_split(l_s: usize, depth: usize) -> Result<()> {
    if l_s == 0 || l_s > depth {
        return Err(Error::Usage(format!("split layer {l_s} outside 1..={depth}")));
    }
    Ok(())
}

/// Spectral split of `model` at `x`.
pub fn split_at(
    model: &NetworkModel,
    x: &Tensor,
    l_s: usize,
    output_index: usize,
    opts: &LinearizeOptions,
) -> Result<SpectralSplit> {
    check_split(l_s, model.depth())?;
    check_output_index(output_index, model.output_len())?;
    let chain = model.linearize(x, opts)?;
    let bias = propagate_biases(&chain)?.total;
    split_from_chain(&chain, &bias, l_s, output_index, opts)
}

pub(crate) fn split_from_chain(
    chain: &ChainLinearization,
    bias: &[f64],
    l_s: usize,
    output_index: usize,
    opts: &LinearizeOptions,
) -> Result<SpectralSplit> {
    let depth = chain.layers.len();
    check_split(l_s, depth)?;
    let x = chain.activations[0].clone();
    let output = chain.activations[depth].data().to_vec();
    check_output_index(output_index, output.len())?;

    let right = operator_product(chain, 0..l_s, opts.element_budget)?.to_matrix();
    let left = if l_s == depth {
        Operator::identity(output.len())
    } else {
        operator_product(chain, l_s..depth, opts.element_budget)?
    };
    let svd = thin_svd(&right, DEFAULT_RANK_TOL)?;
    let coefficients: Vec<f64> = (0..svd.len())
        .map(|k| svd.sigma[k] * dot(&svd.right_vector(k), x.data()))
        .collect();
    let left_hat = if svd.is_empty() {
        None
    } else {
        Some(left.compose(&svd.u)?)
    };
    Ok(SpectralSplit {
        split_layer: l_s,
        output_index,
        right,
        left,
        svd,
        left_hat,
        coefficients,
        bias: bias.to_vec(),
        output,
        x,
    })
}

/// `y_j = sum_k alpha^k + b_j` with `alpha^k = psi^k sigma^k (phi^k . x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaDecomposition {
    pub alphas: Vec<f64>,
    pub psi: Vec<f64>,
    /// `b_j`
    pub residual_bias: f64,
    /// `y_j`
    pub output: f64,
}

impl AlphaDecomposition {
    pub fn total(&self) -> f64 {
        self.alphas.iter().sum::<f64>() + self.residual_bias
    }

    /// `|sum alpha + b_j - y_j|`
    pub fn residual(&self) -> f64 {
        (self.total() - self.output).abs()
    }
}

pub fn alpha_decomposition(split: &SpectralSplit) -> AlphaDecomposition {
    let psi = split.psi();
    let alphas = psi.iter().zip(&split.coefficients).map(|(p, c)| p * c).collect();
    AlphaDecomposition {
        alphas,
        psi,
        residual_bias: split.bias[split.output_index],
        output: split.output[split.output_index],
    }
}

/// Order in which the positive and negative lists are paired up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairOrder {
    /// Keep the order in which the entries appear (spectral order on the first pass).
    #[default]
    Sequence,
    /// Sort each list by descending magnitude first.
    Magnitude,
}

/// Sign-homogeneous reduction of a set of alpha components.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCoefficients {
    /// `a_hat`: entries sharing one sign, summing to `sum alpha`.
    pub a_hat: Vec<f64>,
    /// `a_hat / sum(a_hat)`; sums to one.
    pub a_tilde: Vec<f64>,
    /// Spectral index carried by each `a_hat` entry.
    pub spectral_index_map: Vec<usize>,
    /// Number of pairing passes performed.
    pub iterations: usize,
    /// Sequence after every pass (the input is not included).
    pub passes: Vec<Vec<f64>>,
    /// Set when the components cancel to zero; all vectors are then empty.
    pub cancelled: bool,
}

impl ReducedCoefficients {
    /// Sign of the surviving total (`0.0` if cancelled).
    pub fn sign(&self) -> f64 {
        match self.a_hat.first() {
            Some(v) => v.signum(),
            None => 0.0,
        }
    }
}

/// Relative size under which `sum alpha` is treated as a complete cancellation.
pub const CANCELLATION_TOL: f64 = 1e-12;

/// Pairs the positive and negative components order-wise, appends the unpaired
/// leftovers, and repeats until every entry has the same sign.
pub fn reduce_coefficients(alphas: &[f64], order: PairOrder) -> Result<ReducedCoefficients> {
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numeric("alpha components must be finite".into()));
    }
    let total: f64 = alphas.iter().sum();
    let mass: f64 = alphas.iter().map(|a| a.abs()).sum();
    if mass == 0.0 || total.abs() <= CANCELLATION_TOL * mass {
        warn!("alpha components cancel out (sum {total:e}); reduction is empty");
        return Ok(ReducedCoefficients {
            a_hat: Vec::new(),
            a_tilde: Vec::new(),
            spectral_index_map: Vec::new(),
            iterations: 0,
            passes: Vec::new(),
            cancelled: true,
        });
    }

    // (value, spectral index); exact zeros carry no sign and no contribution.
    let mut seq: Vec<(f64, usize)> = alphas
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, a)| *a != 0.0)
        .map(|(k, a)| (a, k))
        .collect();
    let mut passes = Vec::new();
    while seq.iter().any(|e| e.0 > 0.0) && seq.iter().any(|e| e.0 < 0.0) {
        let mut pos: Vec<(f64, usize)> = seq.iter().copied().filter(|e| e.0 > 0.0).collect();
        let mut neg: Vec<(f64, usize)> = seq.iter().copied().filter(|e| e.0 < 0.0).collect();
        if order == PairOrder::Magnitude {
            pos.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
            neg.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
        }
        let paired = pos.len().min(neg.len());
        let mut next = Vec::with_capacity(pos.len().max(neg.len()));
        for (p, n) in pos.iter().zip(&neg) {
            let idx = if p.0.abs() >= n.0.abs() { p.1 } else { n.1 };
            next.push((p.0 + n.0, idx));
        }
        next.extend_from_slice(&pos[paired..]);
        next.extend_from_slice(&neg[paired..]);
        next.retain(|e| e.0 != 0.0);
        passes.push(next.iter().map(|e| e.0).collect());
        seq = next;
    }
    let a_hat: Vec<f64> = seq.iter().map(|e| e.0).collect();
    let sum: f64 = a_hat.iter().sum();
    Ok(ReducedCoefficients {
        a_tilde: a_hat.iter().map(|a| a / sum).collect(),
        spectral_index_map: seq.iter().map(|e| e.1).collect(),
        iterations: passes.len(),
        passes,
        a_hat,
        cancelled: false,
    })
}

/// Indices of the components whose magnitude is at least `threshold`.
pub fn prune_components(alphas: &[f64], threshold: f64) -> Vec<usize> {
    alphas
        .iter()
        .enumerate()
        .filter(|(_, a)| a.abs() >= threshold)
        .map(|(k, _)| k)
        .collect()
}

/// Per-location map obtained by collapsing the channel axis of a singular vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionMap {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub spectral_index: Option<usize>,
}

impl ContractionMap {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Copy scaled to unit sum; `None` when the sum vanishes.
    pub fn normalized(&self, zero_tol: f64) -> Option<ContractionMap> {
        let s = self.sum();
        (s.abs() > zero_tol).then(|| ContractionMap {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| v / s).collect(),
            spectral_index: self.spectral_index,
        })
    }
}

/// The channel axis used when none is given: the last axis of inputs with two or more
/// axes, none for flat vectors.
pub fn default_channel_axis(shape: &[usize]) -> Option<usize> {
    (shape.len() >= 2).then(|| shape.len() - 1)
}

fn reduce_axis(t: &[f64], shape: &[usize], axis: usize, f: impl Fn(&[f64]) -> f64) -> (Vec<usize>, Vec<f64>) {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(outer * inner);
    let mut buf = vec![0.0; len];
    for o in 0..outer {
        for i in 0..inner {
            for (c, b) in buf.iter_mut().enumerate() {
                *b = t[(o * len + c) * inner + i];
            }
            out.push(f(&buf));
        }
    }
    let mut map_shape: Vec<usize> = shape.to_vec();
    map_shape.remove(axis);
    if map_shape.is_empty() {
        map_shape.push(1);
    }
    (map_shape, out)
}

fn check_axis(shape: &[usize], axis: Option<usize>) -> Result<()> {
    match axis {
        Some(a) if a >= shape.len() => Err(Error::dim(format!("axis {a} out of range for {shape:?}"))),
        _ => Ok(()),
    }
}

/// `c_{hw} = sum_c phi_{hwc} x_{hwc}`; with no axis the map is the element-wise product.
pub fn feature_contraction(phi: &Tensor, x: &Tensor, axis: Option<usize>) -> Result<ContractionMap> {
    if phi.shape() != x.shape() {
        return Err(Error::dim(format!(
            "contraction: phi {:?} vs x {:?}",
            phi.shape(),
            x.shape()
        )));
    }
    check_axis(phi.shape(), axis)?;
    let prod: Vec<f64> = phi.data().iter().zip(x.data()).map(|(a, b)| a * b).collect();
    let (shape, values) = match axis {
        Some(a) => reduce_axis(&prod, phi.shape(), a, |v| v.iter().sum()),
        None => (phi.shape().to_vec(), prod),
    };
    Ok(ContractionMap {
        shape,
        values,
        spectral_index: None,
    })
}

/// Mean of `phi` over the channel axis, for comparison with the contraction.
pub fn feature_average(phi: &Tensor, axis: Option<usize>) -> Result<ContractionMap> {
    check_axis(phi.shape(), axis)?;
    let (shape, values) = match axis {
        Some(a) => reduce_axis(phi.data(), phi.shape(), a, |v| v.iter().sum::<f64>() / v.len() as f64),
        None => (phi.shape().to_vec(), phi.data().to_vec()),
    };
    Ok(ContractionMap {
        shape,
        values,
        spectral_index: None,
    })
}

/// Plain change of basis: `x = sum_k (phi^k . x) phi^k + x_perp`. Returns the projections
/// and the norm of the part of `x` outside the span of the singular vectors.
pub fn change_of_basis(split: &SpectralSplit) -> (Vec<f64>, f64) {
    let proj = split.projections();
    let mut rest = split.x.data().to_vec();
    for (k, p) in proj.iter().enumerate() {
        for (r, v) in rest.iter_mut().zip(split.svd.right_vector(k)) {
            *r -= p * v;
        }
    }
    let rest_norm = dot(&rest, &rest).sqrt();
    (proj, rest_norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicTerm {
    pub spectral_index: usize,
    /// `alpha^k`, or the reduced `a_hat` entry when reduction is on.
    pub coefficient: f64,
    /// Share of the total: `alpha^k / sum alpha`, or `a_tilde` when reduced.
    pub weight: f64,
    /// `c_hat^k`: the contraction map normalised to unit sum.
    pub map: ContractionMap,
}

/// `y_j = sum_hw (sum_k coeff_k c_hat^k_hw + b_j / |hw|) + remainder`
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicDecomposition {
    pub split_layer: usize,
    pub output_index: usize,
    /// Ranked by `|weight|`, largest first.
    pub terms: Vec<SymbolicTerm>,
    pub bias_map: ContractionMap,
    /// Alpha mass of terms whose contraction map sums to zero.
    pub remainder: f64,
    pub reduced: bool,
    pub output: f64,
    /// Sum over the grid plus the remainder.
    pub reconstructed: f64,
}

impl SymbolicDecomposition {
    pub fn residual(&self) -> f64 {
        (self.reconstructed - self.output).abs()
    }

    /// Grid of `sum_k coeff_k c_hat^k + bias` (the per-location output contributions).
    pub fn output_map(&self) -> Vec<f64> {
        let mut out = self.bias_map.values.clone();
        for t in &self.terms {
            for (o, v) in out.iter_mut().zip(&t.map.values) {
                *o += t.coefficient * v;
            }
        }
        out
    }
}

/// Maps whose raw sum is below this are dropped from the symbolic form.
pub const CONTRACTION_ZERO_TOL: f64 = 1e-12;

/// Options for [`symbolic_from_split`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SymbolicOptions {
    pub reduce: bool,
    pub order: PairOrder,
    /// Channel axis of the input; `None` picks [`default_channel_axis`].
    pub axis: Option<usize>,
}

pub fn symbolic(
    model: &NetworkModel,
    x: &Tensor,
    l_s: usize,
    output_index: usize,
    reduce: bool,
    opts: &LinearizeOptions,
) -> Result<SymbolicDecomposition> {
    let split = split_at(model, x, l_s, output_index, opts)?;
    symbolic_from_split(
        &split,
        SymbolicOptions {
            reduce,
            ..SymbolicOptions::default()
        },
    )
}

pub fn symbolic_from_split(split: &SpectralSplit, sopts: SymbolicOptions) -> Result<SymbolicDecomposition> {
    let axis = sopts.axis.or_else(|| default_channel_axis(split.x.shape()));
    let alpha = alpha_decomposition(split);
    let mut remainder = 0.0;
    let mut maps: Vec<Option<ContractionMap>> = Vec::with_capacity(alpha.alphas.len());
    for k in 0..alpha.alphas.len() {
        let mut raw = feature_contraction(&split.singular_vector(k), &split.x, axis)?;
        raw.spectral_index = Some(k);
        let norm = raw.normalized(CONTRACTION_ZERO_TOL);
        if norm.is_none() {
            remainder += alpha.alphas[k];
        }
        maps.push(norm);
    }
    let kept: Vec<usize> = (0..maps.len()).filter(|&k| maps[k].is_some()).collect();

    let mut terms = Vec::new();
    if sopts.reduce {
        let kept_alphas: Vec<f64> = kept.iter().map(|&k| alpha.alphas[k]).collect();
        let red = reduce_coefficients(&kept_alphas, sopts.order)?;
        if red.cancelled {
            remainder += kept_alphas.iter().sum::<f64>();
        }
        for ((&a, &w), &pos) in red.a_hat.iter().zip(&red.a_tilde).zip(&red.spectral_index_map) {
            let k = kept[pos];
            terms.push(SymbolicTerm {
                spectral_index: k,
                coefficient: a,
                weight: w,
                map: maps[k].clone().expect("kept"),
            });
        }
    } else {
        let total: f64 = alpha.alphas.iter().sum();
        for &k in &kept {
            let a = alpha.alphas[k];
            terms.push(SymbolicTerm {
                spectral_index: k,
                coefficient: a,
                weight: if total != 0.0 { a / total } else { 0.0 },
                map: maps[k].clone().expect("kept"),
            });
        }
    }
    terms.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()));

    let grid = feature_average(&split.x, axis)?;
    let cells = grid.values.len() as f64;
    let bias_map = ContractionMap {
        shape: grid.shape.clone(),
        values: vec![alpha.residual_bias / cells; grid.values.len()],
        spectral_index: None,
    };
    let mut decomposition = SymbolicDecomposition {
        split_layer: split.split_layer,
        output_index: split.output_index,
        terms,
        bias_map,
        remainder,
        reduced: sopts.reduce,
        output: alpha.output,
        reconstructed: 0.0,
    };
    decomposition.reconstructed = decomposition.output_map().iter().sum::<f64>() + remainder;
    Ok(decomposition)
}

/// Gram matrix of unit vectors (cosine similarities).
pub fn sv_similarity(vectors: &[Vec<f64>]) -> Result<Matrix> {
    if vectors.is_empty() {
        return Err(Error::dim("similarity needs at least one vector"));
    }
    let n = vectors[0].len();
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != n {
            return Err(Error::dim(format!("vector {i} has length {}, expected {n}", v.len())));
        }
        let norm = dot(v, v).sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::Normalization { index: i, norm });
        }
    }
    let k = vectors.len();
    let mut g = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let d = dot(&vectors[i], &vectors[j]);
            g.set(i, j, d);
            g.set(j, i, d);
        }
    }
    Ok(g)
}

/// Summary of one split layer in a sweep.
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub split_layer: usize,
    pub sigma: Vec<f64>,
    pub rank_used: usize,
    pub alphas: Vec<f64>,
    pub reduced: ReducedCoefficients,
    /// Spectral index of the largest reduced weight, if any.
    pub top_index: Option<usize>,
    /// Feature-wise contraction of that singular vector.
    pub top_map: Option<ContractionMap>,
    pub residual: f64,
}

#[derive(Debug)]
pub struct SweepEntry {
    pub split_layer: usize,
    pub result: Result<SweepSummary>,
}

/// Runs the split at every layer `1..=L`; failures are recorded per layer.
pub fn layer_sweep(
    model: &NetworkModel,
    x: &Tensor,
    output_index: usize,
    opts: &LinearizeOptions,
) -> Result<Vec<SweepEntry>> {
    check_output_index(output_index, model.output_len())?;
    let chain = model.linearize(x, opts)?;
    let bias = propagate_biases(&chain)?.total;
    let axis = default_channel_axis(x.shape());
    let entries = (1..=model.depth())
        .map(|l_s| {
            let result = (|| {
                let split = split_from_chain(&chain, &bias, l_s, output_index, opts)?;
                summarize(&split, axis)
            })();
            SweepEntry {
                split_layer: l_s,
                result,
            }
        })
        .collect();
    Ok(entries)
}

pub(crate) fn summarize(split: &SpectralSplit, axis: Option<usize>) -> Result<SweepSummary> {
    let alpha = alpha_decomposition(split);
    let reduced = reduce_coefficients(&alpha.alphas, PairOrder::default())?;
    let top = reduced
        .a_tilde
        .iter()
        .zip(&reduced.spectral_index_map)
        .max_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .map(|(_, &k)| k);
    let top_map = match top {
        Some(k) => {
            let mut m = feature_contraction(&split.singular_vector(k), &split.x, axis)?;
            m.spectral_index = Some(k);
            Some(m)
        }
        None => None,
    };
    Ok(SweepSummary {
        split_layer: split.split_layer,
        sigma: split.svd.sigma.clone(),
        rank_used: split.svd.rank_used,
        residual: alpha.residual(),
        alphas: alpha.alphas,
        reduced,
        top_index: top,
        top_map,
    })
}

/// Share of `sum |c|` held by the `k` largest-magnitude coefficients.
pub fn top_coefficient_mass(coefficients: &[f64], k: usize) -> f64 {
    let mut mags: Vec<f64> = coefficients.iter().map(|c| c.abs()).collect();
    let total: f64 = mags.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.iter().take(k).sum::<f64>() / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{Dense, LayerSpec};

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn mixed_signs_reduce_in_one_pass() {
        let r = reduce_coefficients(&[5.0, -3.0, 2.0, -1.0], PairOrder::Sequence).unwrap();
        assert!(close(&r.a_hat, &[2.0, 1.0]));
        assert!(close(&r.a_tilde, &[2.0 / 3.0, 1.0 / 3.0]));
        assert_eq!(r.iterations, 1);
        assert_eq!(r.spectral_index_map, vec![0, 2]);
    }

    #[test]
    fn same_sign_input_is_only_normalized() {
        let r = reduce_coefficients(&[1.0, 2.0], PairOrder::Sequence).unwrap();
        assert!(close(&r.a_tilde, &[1.0 / 3.0, 2.0 / 3.0]));
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn leftover_forces_second_pass() {
        let r = reduce_coefficients(&[5.0, -3.0, -4.0], PairOrder::Sequence).unwrap();
        assert_eq!(r.passes.len(), 2);
        assert!(close(&r.passes[0], &[2.0, -4.0]));
        assert!(close(&r.passes[1], &[-2.0]));
        assert!(close(&r.a_tilde, &[1.0]));
        assert_eq!(r.iterations, 2);
        assert_eq!(r.sign(), -1.0);
        assert_eq!(r.spectral_index_map, vec![2]);
    }

    #[test]
    fn magnitude_order_pairs_largest_first() {
        let r = reduce_coefficients(&[5.0, -3.0, -4.0], PairOrder::Magnitude).unwrap();
        assert!(close(&r.passes[0], &[1.0, -3.0]));
        assert!(close(&r.a_hat, &[-2.0]));
    }

    #[test]
    fn cancellation_is_reported() {
        let r = reduce_coefficients(&[1.0, -1.0], PairOrder::Sequence).unwrap();
        assert!(r.cancelled);
        assert!(r.a_tilde.is_empty());
    }

    #[test]
    fn contraction_sums_channels() {
        let phi = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 1.0, 2.0, 0.5]).unwrap();
        let c = feature_contraction(&phi, &x, Some(2)).unwrap();
        assert_eq!(c.shape, vec![1, 2]);
        assert_eq!(c.values, vec![3.0, 8.0]);
        let avg = feature_average(&phi, Some(2)).unwrap();
        assert_eq!(avg.values, vec![1.5, 3.5]);
        let flat = feature_contraction(&phi, &x, None).unwrap();
        assert_eq!(flat.values, vec![1.0, 2.0, 6.0, 2.0]);
    }

    #[test]
    fn similarity_rejects_unnormalized() {
        let err = sv_similarity(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::Normalization { index: 1, .. }));
        let g = sv_similarity(&[vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap();
        assert!((g.get(0, 1) - 0.6).abs() < 1e-15);
        assert_eq!(g.get(1, 1), 1.0);
    }

    #[test]
    fn diagonal_net_splits_into_its_axes() {
        let w = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -2.0]]).unwrap();
        let model = NetworkModel::new(
            "diag",
            vec![2],
            vec![LayerSpec::Dense(Dense::new(w, Some(vec![1.0, 1.0])))],
        )
        .unwrap();
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let split = split_at(&model, &x, 1, 0, &LinearizeOptions::default()).unwrap();
        assert!(close(&split.svd.sigma, &[3.0, 2.0]));
        let alpha = alpha_decomposition(&split);
        assert!(close(&alpha.alphas, &[3.0, 0.0]));
        assert!(alpha.residual() < 1e-12);
        let (proj, rest) = change_of_basis(&split);
        assert!(close(&proj, &[1.0, 2.0]));
        assert!(rest < 1e-12);
    }

    #[test]
    fn split_layer_out_of_range_is_usage_error() {
        let model = NetworkModel::new("id", vec![2], vec![LayerSpec::Relu]).unwrap();
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let err = split_at(&model, &x, 2, 0, &LinearizeOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = split_at(&model, &x, 1, 5, &LinearizeOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn top_mass() {
        assert!((top_coefficient_mass(&[3.0, -1.0, 0.0], 1) - 0.75).abs() < 1e-15);
        assert_eq!(top_coefficient_mass(&[], 2), 0.0);
    }
}
