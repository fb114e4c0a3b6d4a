use crate::error::{Error, Result};
use crate::linalg::{max_abs_diff, thin_svd, Matrix, SvdResult, Tensor, DEFAULT_RANK_TOL};
use crate::netgraph::{LayerSpec, LinearizeOptions, NetworkModel};
use crate::pwa::{affine_from_chain, propagate_biases};
use crate::spectral::{default_channel_axis, feature_contraction, split_at};

use super::squares::Squares;

/// Number of leading singular vectors kept in comparison reports.
pub const REPORT_VECTORS: usize = 4;

/// `count x pixels` matrix whose rows are the flattened images.
pub fn data_matrix(data: &Squares) -> Matrix {
    Matrix::new(data.len(), data.image_len(), data.images.data().to_vec()).expect("image stack")
}

/// Thin SVD of the raw (uncentred) data matrix.
pub fn data_matrix_svd(rows: &Matrix) -> Result<SvdResult> {
    if rows.rows() < 2 {
        return Err(Error::Usage("the data matrix needs at least two samples".into()));
    }
    thin_svd(rows, DEFAULT_RANK_TOL)
}

/// `sigma / sigma_0`; empty for a zero spectrum.
pub fn normalized(sigma: &[f64]) -> Vec<f64> {
    match sigma.first() {
        Some(&s0) if s0 > 0.0 => sigma.iter().map(|s| s / s0).collect(),
        _ => Vec::new(),
    }
}

/// `sigma_k / sigma_0`, zero when the spectrum has fewer than `k + 1` nonzero values.
pub fn normalized_at(sigma: &[f64], k: usize) -> f64 {
    normalized(sigma).get(k).copied().unwrap_or(0.0)
}

/// Whole-network operator at one sample.
#[derive(Debug, Clone)]
pub struct OperatorSpectrum {
    pub sample: usize,
    pub sigma: Vec<f64>,
    pub rank_used: usize,
    /// `c_i = sigma_i (phi_i . x)`
    pub coefficients: Vec<f64>,
    /// Leading right singular vectors `phi`.
    pub right_vectors: Vec<Vec<f64>>,
    /// Their feature-wise contractions with the sample.
    pub contractions: Vec<Vec<f64>>,
    /// Leading left singular vectors.
    pub left_vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SpectraComparison {
    pub data_sigma: Vec<f64>,
    pub data_rank: usize,
    pub data_vectors: Vec<Vec<f64>>,
    pub operators: Vec<OperatorSpectrum>,
    /// Set when some operator is identically zero.
    pub degenerate: bool,
}

/// Spectrum of the data matrix against the spectrum of the network operator at each of
/// `samples`.
pub fn compare_spectra(
    model: &NetworkModel,
    data: &Squares,
    samples: &[usize],
    opts: &LinearizeOptions,
) -> Result<SpectraComparison> {
    let dsvd = data_matrix_svd(&data_matrix(data))?;
    let keep = |svd: &SvdResult| REPORT_VECTORS.min(svd.len());
    let data_vectors = (0..keep(&dsvd)).map(|k| dsvd.right_vector(k)).collect();
    let mut operators = Vec::with_capacity(samples.len());
    for &i in samples {
        if i >= data.len() {
            return Err(Error::Usage(format!("sample {i} out of range ({} images)", data.len())));
        }
        let x = data.sample(i);
        let split = split_at(model, &x, model.depth(), 0, opts)?;
        let axis = default_channel_axis(x.shape());
        let k = keep(&split.svd);
        let contractions = (0..k)
            .map(|j| feature_contraction(&split.singular_vector(j), &x, axis).map(|m| m.values))
            .collect::<Result<Vec<_>>>()?;
        operators.push(OperatorSpectrum {
            sample: i,
            sigma: split.svd.sigma.clone(),
            rank_used: split.svd.rank_used,
            coefficients: split.coefficients.clone(),
            right_vectors: (0..k).map(|j| split.svd.right_vector(j)).collect(),
            contractions,
            left_vectors: (0..k).map(|j| split.svd.left_vector(j)).collect(),
        });
    }
    Ok(SpectraComparison {
        data_sigma: dsvd.sigma.clone(),
        data_rank: dsvd.rank_used,
        data_vectors,
        degenerate: operators.iter().any(|o| o.sigma.is_empty()),
        operators,
    })
}

#[derive(Debug, Clone)]
pub struct BiasStudy {
    /// `beta_l` for every layer, in output space.
    pub betas: Vec<Vec<f64>>,
    /// Dense layers after the narrowest one, as 0-based layer indices.
    pub decoder_layers: Vec<usize>,
    pub total: Vec<f64>,
    /// `u x`
    pub ux: Vec<f64>,
    pub output: Vec<f64>,
    /// `max |f(x) - (u x + sum beta)|`
    pub residual: f64,
}

/// Splits the output at `x` into the input-driven part `u x` and the per-layer bias maps.
pub fn bias_study(model: &NetworkModel, x: &Tensor, opts: &LinearizeOptions) -> Result<BiasStudy> {
    let chain = model.linearize(x, opts)?;
    let affine = affine_from_chain(&chain, opts)?;
    let decomposition = propagate_biases(&chain)?;
    let ux = affine.u.matvec(x.data())?;
    let recon: Vec<f64> = ux.iter().zip(&decomposition.total).map(|(a, b)| a + b).collect();
    let residual = max_abs_diff(&recon, &affine.output);

    let dense: Vec<usize> = model
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, LayerSpec::Dense(_)))
        .map(|(i, _)| i)
        .collect();
    let shapes = model.shapes();
    let narrowest = dense
        .iter()
        .copied()
        .min_by_key(|&i| shapes[i + 1].iter().product::<usize>());
    let decoder_layers = match narrowest {
        Some(b) => dense.into_iter().filter(|&i| i > b).collect(),
        None => Vec::new(),
    };
    Ok(BiasStudy {
        betas: decomposition.betas,
        decoder_layers,
        total: decomposition.total,
        ux,
        output: affine.output,
        residual,
    })
}

fn bilinear(map: &[f64], side: usize, x: f64, y: f64) -> f64 {
    // (x, y) in pixel-centre coordinates: pixel (r, c) sits at (c + 0.5, r + 0.5).
    let fx = x - 0.5;
    let fy = y - 0.5;
    let c0 = fx.floor();
    let r0 = fy.floor();
    let tx = fx - c0;
    let ty = fy - r0;
    let at = |r: f64, c: f64| {
        if r < 0.0 || c < 0.0 || r >= side as f64 || c >= side as f64 {
            0.0
        } else {
            map[r as usize * side + c as usize]
        }
    };
    (1.0 - ty) * ((1.0 - tx) * at(r0, c0) + tx * at(r0, c0 + 1.0))
        + ty * ((1.0 - tx) * at(r0 + 1.0, c0) + tx * at(r0 + 1.0, c0 + 1.0))
}

/// Rotational variability of a square map: the map is rotated about its centre in steps
/// of `step_deg` over a full turn, and the per-pixel variance across the copies is summed
/// over the inscribed disc and divided by the map's energy there. Zero for perfectly
/// circular maps.
pub fn angular_variance(map: &[f64], side: usize, step_deg: f64) -> f64 {
    assert_eq!(map.len(), side * side, "square map");
    let steps = (360.0 / step_deg).round().max(1.0) as usize;
    let mid = side as f64 / 2.0;
    let radius = mid - 1.0;
    let mut var_sum = 0.0;
    let mut energy = 0.0;
    for r in 0..side {
        for c in 0..side {
            let dx = c as f64 + 0.5 - mid;
            let dy = r as f64 + 0.5 - mid;
            if dx.hypot(dy) > radius {
                continue;
            }
            let vals: Vec<f64> = (0..steps)
                .map(|k| {
                    let (s, co) = (k as f64 * step_deg).to_radians().sin_cos();
                    bilinear(map, side, mid + co * dx - s * dy, mid + s * dx + co * dy)
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / steps as f64;
            var_sum += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / steps as f64;
            energy += map[r * side + c].powi(2);
        }
    }
    if energy == 0.0 {
        0.0
    } else {
        var_sum / energy
    }
}
