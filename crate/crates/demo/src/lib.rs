//! WebAssembly front end for the browser demo in `www/`. Each exported function returns
//! a JSON string; the plain Rust functions underneath are what the native tests call.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use specxai::linalg::Tensor;
use specxai::spectral::{reduce_coefficients, split_at, symbolic_from_split, PairOrder, SymbolicOptions};
use specxai::toylab::rasterize_square;
use specxai::zoo::{random_cnn, random_mlp, Activation};
use specxai::{LinearizeOptions, NetworkModel};
use wasm_bindgen::prelude::*;

/// Square canvas used by the explanation panel.
pub const SIDE: usize = 12;
const SQUARE: usize = 6;

#[derive(Debug, Serialize)]
pub struct RegionMap {
    pub resolution: usize,
    /// Region id per grid cell, row-major, rows running from y = 1 down to y = -1.
    pub ids: Vec<u32>,
    pub regions: usize,
    /// Network output per grid cell.
    pub output: Vec<f64>,
}

/// Linear regions of a random `2 -> hidden^layers -> 1` ReLU network over `[-1, 1]^2`.
pub fn region_map(seed: u64, hidden: usize, layers: usize, resolution: usize) -> specxai::Result<RegionMap> {
    let mut widths = vec![2];
    widths.extend(std::iter::repeat_n(hidden.max(1), layers.max(1)));
    widths.push(1);
    let model = random_mlp(&mut ChaCha8Rng::seed_from_u64(seed), &widths, Activation::Relu, true)?;
    let n = resolution.max(2);
    let mut seen = HashMap::new();
    let mut ids = Vec::with_capacity(n * n);
    let mut output = Vec::with_capacity(n * n);
    for r in 0..n {
        let y = 1.0 - 2.0 * r as f64 / (n - 1) as f64;
        for c in 0..n {
            let x = -1.0 + 2.0 * c as f64 / (n - 1) as f64;
            let p = Tensor::vector(vec![x, y])?;
            let next = seen.len() as u32;
            ids.push(*seen.entry(model.activation_pattern(&p)?).or_insert(next));
            output.push(model.predict(&p)?.data()[0]);
        }
    }
    Ok(RegionMap {
        resolution: n,
        ids,
        regions: seen.len(),
        output,
    })
}

#[derive(Debug, Serialize)]
pub struct Reduction {
    pub input: Vec<f64>,
    pub passes: Vec<Vec<f64>>,
    pub a_hat: Vec<f64>,
    pub a_tilde: Vec<f64>,
    pub spectral_index_map: Vec<usize>,
    pub cancelled: bool,
}

pub fn reduce(alphas: &[f64], by_magnitude: bool) -> specxai::Result<Reduction> {
    let order = if by_magnitude {
        PairOrder::Magnitude
    } else {
        PairOrder::Sequence
    };
    let r = reduce_coefficients(alphas, order)?;
    Ok(Reduction {
        input: alphas.to_vec(),
        passes: r.passes,
        a_hat: r.a_hat,
        a_tilde: r.a_tilde,
        spectral_index_map: r.spectral_index_map,
        cancelled: r.cancelled,
    })
}

#[derive(Debug, Serialize)]
pub struct Term {
    pub k: usize,
    pub weight: f64,
    pub coefficient: f64,
    pub map: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct SquareExplanation {
    pub side: usize,
    pub input: Vec<f64>,
    pub output_index: usize,
    pub output: f64,
    pub sigma: Vec<f64>,
    pub terms: Vec<Term>,
    pub bias: f64,
    pub remainder: f64,
    pub reconstructed: f64,
}

/// Symbolic decomposition of the largest output of a small random CNN, fed a square
/// rotated by `angle_deg`, split after the last layer.
pub fn explain_square(seed: u64, angle_deg: f64, top_k: usize) -> specxai::Result<SquareExplanation> {
    let model: NetworkModel = random_cnn(&mut ChaCha8Rng::seed_from_u64(seed), SIDE, 1, 3)?;
    let x = Tensor::new(vec![SIDE, SIDE, 1], rasterize_square(SIDE, SQUARE, angle_deg))?;
    let y = model.predict(&x)?;
    let j = (0..y.len())
        .max_by(|&a, &b| y.data()[a].total_cmp(&y.data()[b]))
        .unwrap_or(0);
    let split = split_at(&model, &x, model.depth(), j, &LinearizeOptions::default())?;
    let sym = symbolic_from_split(
        &split,
        SymbolicOptions {
            reduce: true,
            ..SymbolicOptions::default()
        },
    )?;
    Ok(SquareExplanation {
        side: SIDE,
        input: x.data().to_vec(),
        output_index: j,
        output: sym.output,
        sigma: split.svd.sigma.clone(),
        terms: sym
            .terms
            .iter()
            .take(top_k)
            .map(|t| Term {
                k: t.spectral_index,
                weight: t.weight,
                coefficient: t.coefficient,
                map: t.map.values.clone(),
            })
            .collect(),
        bias: split.bias[j],
        remainder: sym.remainder,
        reconstructed: sym.reconstructed,
    })
}

fn to_js<T: Serialize>(r: specxai::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = regionMap)]
pub fn region_map_js(seed: u32, hidden: u32, layers: u32, resolution: u32) -> Result<String, JsError> {
    to_js(region_map(
        seed as u64,
        hidden as usize,
        layers as usize,
        resolution as usize,
    ))
}

#[wasm_bindgen(js_name = reduce)]
pub fn reduce_js(alphas: Vec<f64>, by_magnitude: bool) -> Result<String, JsError> {
    to_js(reduce(&alphas, by_magnitude))
}

#[wasm_bindgen(js_name = explainSquare)]
pub fn explain_square_js(seed: u32, angle_deg: f64, top_k: u32) -> Result<String, JsError> {
    to_js(explain_square(seed as u64, angle_deg, top_k as usize))
}
