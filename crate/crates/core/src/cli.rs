//! The `specxai` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{
    format_float, load_model, read_tensor, save_model, write_csv, write_heatmap, write_pgm, write_tensor, Dtype,
};
use crate::linalg::{Tensor, DEFAULT_ELEMENT_BUDGET};
use crate::netgraph::{LayerSpec, LinearizeOptions, NetworkModel, SmoothMode};
use crate::pwa::bias_decomposition;
use crate::spectral::{
    alpha_decomposition, default_channel_axis, feature_average, feature_contraction, reduce_coefficients, split_at,
    sv_similarity, symbolic_from_split, top_coefficient_mass, PairOrder, SpectralSplit, SymbolicOptions,
};
use crate::toylab::{
    angular_variance, bias_study, compare_spectra, generate_squares, normalized, normalized_at, train_autoencoder,
    Squares, SquaresConfig, TrainConfig,
};

/// Environment variable overriding the element budget for dense operators.
pub const BUDGET_ENV: &str = "SPECXAI_BUDGET";

#[derive(Debug, Parser)]
#[command(
    name = "specxai",
    version,
    about = "Spectral explanations of locally linear networks"
)]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the rotated-squares data and train the autoencoder on it.
    TrainToy(TrainToyArgs),
    /// Write a rotated-squares dataset as a tensor file.
    GenData(GenDataArgs),
    /// Spectral report for one input at one split layer (or every layer with --sweep).
    Explain(ExplainArgs),
    /// Spectral report at every split layer.
    Sweep(SweepArgs),
    /// Cosine similarity of the leading singular vectors across a dataset.
    Similarity(SimilarityArgs),
    /// Data-matrix spectrum against the network operator spectrum.
    CompareSpectra(CompareArgs),
    /// Per-layer bias maps of an autoencoder output.
    BiasStudy(BiasArgs),
    /// Print the layers of a model file.
    InspectModel(InspectArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Number of images.
    #[arg(long, default_value_t = 2048)]
    pub count: usize,
    /// Random seed (square angles, and weight initialization when training).
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// Output directory for the dataset, model and loss curve.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Train with bias terms.
    #[arg(long, overrides_with = "no_bias")]
    pub bias: bool,
    /// Train without bias terms (the default).
    #[arg(long)]
    pub no_bias: bool,
    /// Training epochs [default: 40].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size [default: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// SGD learning rate [default: 5e-5].
    #[arg(long)]
    pub learning_rate: Option<f32>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output tensor file; angles go to `<stem>.angles.csv` beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SmoothArg {
    Secant,
    Gradient,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    Sequence,
    Magnitude,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Model manifest (`.sxm`).
    #[arg(long)]
    pub model: PathBuf,
    /// Tensor file holding one input, or a stack of inputs along a leading axis.
    #[arg(long)]
    pub input: PathBuf,
    /// Which input of a stack to use.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Linearization of sigmoid and tanh units.
    #[arg(long, value_enum, default_value_t = SmoothArg::Secant)]
    pub smooth: SmoothArg,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output index; defaults to the largest output.
    #[arg(long)]
    pub output: Option<usize>,
    /// Number of singular-vector heatmaps to write.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub top_k: u64,
    /// Apply the sign reduction to the alpha components.
    #[arg(long)]
    pub reduce: bool,
    /// Pairing order of the reduction.
    #[arg(long, value_enum, default_value_t = OrderArg::Sequence)]
    pub pair_order: OrderArg,
    /// Also write channel-averaged singular vectors.
    #[arg(long)]
    pub average: bool,
    /// Write the report even when the input sits on a region boundary.
    #[arg(long)]
    pub allow_boundary: bool,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Split layer `l_s` in `1..=L`; defaults to `L`.
    #[arg(long, conflicts_with = "sweep")]
    pub layer: Option<usize>,
    /// Run the split at every layer, one subdirectory each.
    #[arg(long)]
    pub sweep: bool,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct SimilarityArgs {
    /// Model manifest (`.sxm`).
    #[arg(long)]
    pub model: PathBuf,
    /// Tensor stack of inputs.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Use only the first `limit` samples.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Singular vectors per sample.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Split layer; defaults to `L`.
    #[arg(long)]
    pub layer: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Model manifest (`.sxm`).
    #[arg(long)]
    pub model: PathBuf,
    /// Tensor stack of rotated-squares images.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Comma-separated sample indices.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub samples: Vec<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Model manifest (`.sxm`).
    #[arg(long)]
    pub model: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

/// Element budget from the environment, or the default.
pub fn element_budget() -> Result<usize> {
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&b| b > 0)
            .ok_or_else(|| Error::Usage(format!("{BUDGET_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(DEFAULT_ELEMENT_BUDGET),
    }
}

fn linearize_options(smooth: SmoothArg) -> Result<LinearizeOptions> {
    Ok(LinearizeOptions {
        element_budget: element_budget()?,
        smooth_mode: match smooth {
            SmoothArg::Secant => SmoothMode::Secant,
            SmoothArg::Gradient => SmoothMode::Gradient,
        },
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn f(v: f64) -> String {
    format_float(v)
}

/// Picks one model input from a tensor file holding either a single input or a stack.
pub fn select_input(t: &Tensor, input_shape: &[usize], index: usize) -> Result<Tensor> {
    if t.shape() == input_shape {
        if index != 0 {
            return Err(Error::Usage(format!(
                "input file holds one sample, index {index} requested"
            )));
        }
        return Ok(t.clone());
    }
    if t.shape().len() == input_shape.len() + 1 && &t.shape()[1..] == input_shape {
        let n = t.shape()[0];
        if index >= n {
            return Err(Error::Usage(format!("index {index} out of range ({n} samples)")));
        }
        let len: usize = input_shape.iter().product();
        return Tensor::new(input_shape.to_vec(), t.data()[index * len..(index + 1) * len].to_vec());
    }
    Err(Error::dim(format!(
        "input tensor {:?} does not match model input {input_shape:?}",
        t.shape()
    )))
}

fn stack_to_squares(t: Tensor) -> Result<Squares> {
    if t.shape().len() < 2 {
        return Err(Error::dim("a dataset needs a leading sample axis"));
    }
    let n = t.shape()[0];
    Ok(Squares {
        images: t,
        angles: vec![f64::NAN; n],
    })
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::TrainToy(a) => train_toy(a),
        Command::GenData(a) => gen_data(a),
        Command::Explain(a) => {
            if a.sweep {
                sweep(a.input, a.report)
            } else {
                explain(a.input, a.layer, a.report)
            }
        }
        Command::Sweep(a) => sweep(a.input, a.report),
        Command::Similarity(a) => similarity(a),
        Command::CompareSpectra(a) => compare(a),
        Command::BiasStudy(a) => bias(a),
        Command::InspectModel(a) => inspect(a),
    }
}

fn squares_config(d: &DataArgs) -> SquaresConfig {
    SquaresConfig {
        count: d.count,
        seed: d.seed,
        ..SquaresConfig::default()
    }
}

fn write_angles(path: &Path, data: &Squares) -> Result<()> {
    let rows: Vec<Vec<String>> = data
        .angles
        .iter()
        .enumerate()
        .map(|(i, a)| vec![i.to_string(), f(*a)])
        .collect();
    write_csv(path, &["index", "angle_deg"], &rows)
}

fn train_toy(a: TrainToyArgs) -> Result<i32> {
    ensure_dir(&a.out)?;
    let data = generate_squares(&squares_config(&a.data))?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        use_bias: a.bias && !a.no_bias,
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        learning_rate: a.learning_rate.unwrap_or(defaults.learning_rate),
        seed: a.data.seed,
        ..defaults
    };
    write_tensor(&a.out.join("dataset.sxt"), &data.images, Dtype::F32)?;
    write_angles(&a.out.join("dataset.angles.csv"), &data)?;
    let report = train_autoencoder(&data, &cfg)?;
    save_model(&report.model, &a.out.join("model.sxm"))?;
    let rows: Vec<Vec<String>> = report
        .losses
        .iter()
        .enumerate()
        .map(|(e, l)| vec![e.to_string(), f(*l)])
        .collect();
    write_csv(&a.out.join("loss.csv"), &["epoch", "mse"], &rows)?;
    write_json(
        &a.out.join("train.json"),
        &json!({
            "seed": cfg.seed,
            "use_bias": cfg.use_bias,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate,
            "momentum": cfg.momentum,
            "widths": cfg.widths,
            "count": data.len(),
            "initial_mse": report.initial_mse,
            "final_mse": report.final_mse,
        }),
    )?;
    println!(
        "trained {} epochs: mse {:.6} -> {:.6}; wrote {}",
        cfg.epochs,
        report.initial_mse,
        report.final_mse,
        a.out.join("model.sxm").display()
    );
    Ok(0)
}

fn gen_data(a: GenDataArgs) -> Result<i32> {
    let data = generate_squares(&squares_config(&a.data))?;
    write_tensor(&a.out, &data.images, Dtype::F32)?;
    let stem = a
        .out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    write_angles(&a.out.with_file_name(format!("{stem}.angles.csv")), &data)?;
    println!("wrote {} images to {}", data.len(), a.out.display());
    Ok(0)
}

struct Loaded {
    model: NetworkModel,
    x: Tensor,
    opts: LinearizeOptions,
}

fn load_input(a: &InputArgs) -> Result<Loaded> {
    let opts = linearize_options(a.smooth)?;
    let model = load_model(&a.model)?;
    let t = read_tensor(&a.input)?;
    let x = select_input(&t, model.input_shape(), a.index)?;
    Ok(Loaded { model, x, opts })
}

fn map_checksum(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the files of one split into `dir` and returns the reconstruction difference.
fn write_split_report(
    dir: &Path,
    model: &NetworkModel,
    split: &SpectralSplit,
    r: &ReportArgs,
    opts: &LinearizeOptions,
) -> Result<f64> {
    ensure_dir(dir)?;
    let alpha = alpha_decomposition(split);
    let order = match r.pair_order {
        OrderArg::Sequence => PairOrder::Sequence,
        OrderArg::Magnitude => PairOrder::Magnitude,
    };
    let reduced = reduce_coefficients(&alpha.alphas, order)?;

    let rows: Vec<Vec<String>> = (0..split.svd.len())
        .map(|k| {
            let s = split.svd.sigma[k];
            vec![
                k.to_string(),
                f(s),
                f(s / split.svd.sigma[0]),
                f(split.coefficients[k]),
                f(alpha.alphas[k]),
            ]
        })
        .collect();
    write_csv(
        &dir.join("spectra.csv"),
        &["k", "sigma", "sigma_normalized", "coefficient", "alpha"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = reduced
        .a_hat
        .iter()
        .zip(&reduced.a_tilde)
        .zip(&reduced.spectral_index_map)
        .map(|((h, t), k)| vec![k.to_string(), f(split.svd.sigma[*k]), f(*h), f(*t)])
        .collect();
    write_csv(
        &dir.join("spectra_reduced.csv"),
        &["k", "sigma", "a_hat", "a_tilde"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = (0..alpha.alphas.len())
        .map(|k| {
            vec![
                k.to_string(),
                f(alpha.psi[k]),
                f(split.coefficients[k]),
                f(alpha.alphas[k]),
            ]
        })
        .collect();
    write_csv(&dir.join("alpha.csv"), &["k", "psi", "coefficient", "alpha"], &rows)?;

    let axis = default_channel_axis(split.x.shape());
    let sym = symbolic_from_split(
        split,
        SymbolicOptions {
            reduce: r.reduce,
            order,
            axis,
        },
    )?;
    for (rank, term) in sym.terms.iter().take(r.top_k as usize).enumerate() {
        let k = term.spectral_index;
        let phi = split.singular_vector(k);
        let m = feature_contraction(&phi, &split.x, axis)?;
        write_heatmap(dir, &format!("sv_{k}"), &m.shape, &m.values)?;
        if r.average {
            let m = feature_average(&phi, axis)?;
            write_heatmap(dir, &format!("sv_{k}_avg"), &m.shape, &m.values)?;
        }
        log::info!("term {rank}: k={k} weight {}", term.weight);
    }
    write_heatmap(dir, "bias_map", &sym.bias_map.shape, &sym.bias_map.values)?;

    let j = split.output_index;
    let betas = bias_decomposition(model, &split.x, opts).map(|d| d.betas.iter().map(|b| b[j]).collect::<Vec<_>>())?;
    let rows: Vec<Vec<String>> = betas
        .iter()
        .enumerate()
        .map(|(l, b)| vec![(l + 1).to_string(), f(*b)])
        .collect();
    write_csv(&dir.join("bias_layers.csv"), &["layer", "beta"], &rows)?;

    let sum_alpha: f64 = alpha.alphas.iter().sum();
    let total = sum_alpha + alpha.residual_bias;
    let difference = total - alpha.output;
    let line = format!(
        "y_{j} = {}; sum(alpha) + b = {}; difference = {:e}",
        alpha.output, total, difference
    );
    let terms: Vec<serde_json::Value> = sym
        .terms
        .iter()
        .map(|t| {
            json!({
                "k": t.spectral_index,
                "coefficient": t.coefficient,
                "weight": t.weight,
                "map_sha256": map_checksum(&t.map.values),
            })
        })
        .collect();
    write_json(
        &dir.join("symbolic.json"),
        &json!({
            "split_layer": split.split_layer,
            "output_index": j,
            "reduced": sym.reduced,
            "rank_used": split.svd.rank_used,
            "output": alpha.output,
            "bias": alpha.residual_bias,
            "sum_alpha": sum_alpha,
            "sum_alpha_plus_bias": total,
            "difference": difference,
            "symbolic_reconstruction": sym.reconstructed,
            "symbolic_residual": sym.residual(),
            "remainder": sym.remainder,
            "reduction_iterations": reduced.iterations,
            "reduction_cancelled": reduced.cancelled,
            "terms": terms,
            "reconstruction": line,
        }),
    )?;
    println!("layer {}: {line}", split.split_layer);
    Ok(difference)
}

fn boundary_check(model: &NetworkModel, x: &Tensor, allow: bool) -> Result<()> {
    let sig = model.activation_pattern(x)?;
    if sig.on_boundary() {
        let msg = format!("{} units sit exactly on a region boundary", sig.boundary_count());
        if !allow {
            return Err(Error::RegionBoundary(msg));
        }
        warn!("{msg}");
    }
    Ok(())
}

fn output_index(model: &NetworkModel, x: &Tensor, requested: Option<usize>) -> Result<usize> {
    match requested {
        Some(j) => Ok(j),
        None => Ok(model.predict(x)?.argmax()),
    }
}

fn explain(a: InputArgs, layer: Option<usize>, r: ReportArgs) -> Result<i32> {
    let Loaded { model, x, opts } = load_input(&a)?;
    let l_s = layer.unwrap_or(model.depth());
    let j = output_index(&model, &x, r.output)?;
    let split = split_at(&model, &x, l_s, j, &opts)?;
    write_split_report(&r.out, &model, &split, &r, &opts)?;
    boundary_check(&model, &x, r.allow_boundary)?;
    Ok(0)
}

fn sweep(a: InputArgs, r: ReportArgs) -> Result<i32> {
    let Loaded { model, x, opts } = load_input(&a)?;
    let j = output_index(&model, &x, r.output)?;
    ensure_dir(&r.out)?;
    let mut entries = Vec::new();
    let mut failed = None;
    for l_s in 1..=model.depth() {
        let dir = r.out.join(format!("layer_{l_s:02}"));
        let outcome = split_at(&model, &x, l_s, j, &opts).and_then(|s| write_split_report(&dir, &model, &s, &r, &opts));
        match outcome {
            Ok(diff) => entries.push(json!({"layer": l_s, "difference": diff})),
            Err(e) => {
                warn!("layer {l_s}: {e}");
                entries.push(json!({"layer": l_s, "error": e.to_string(), "exit_code": e.exit_code()}));
                failed.get_or_insert(e.exit_code());
            }
        }
    }
    write_json(
        &r.out.join("sweep.json"),
        &json!({ "output_index": j, "layers": entries }),
    )?;
    boundary_check(&model, &x, r.allow_boundary)?;
    Ok(failed.unwrap_or(0))
}

fn similarity(a: SimilarityArgs) -> Result<i32> {
    let opts = linearize_options(SmoothArg::Secant)?;
    let model = load_model(&a.model)?;
    let t = read_tensor(&a.dataset)?;
    if t.shape().len() != model.input_shape().len() + 1 {
        return Err(Error::dim("similarity needs a stack of inputs"));
    }
    let n = a.limit.unwrap_or(t.shape()[0]).min(t.shape()[0]);
    if n < 2 {
        return Err(Error::Usage("similarity needs at least two samples".into()));
    }
    if a.k == 0 {
        return Err(Error::Usage("k must be at least 1".into()));
    }
    let l_s = a.layer.unwrap_or(model.depth());
    let mut vectors = Vec::with_capacity(n * a.k);
    for i in 0..n {
        let x = select_input(&t, model.input_shape(), i)?;
        let split = split_at(&model, &x, l_s, 0, &opts)?;
        for k in 0..a.k {
            if k < split.svd.len() {
                vectors.push(split.svd.right_vector(k));
            } else {
                return Err(Error::Numeric(format!(
                    "sample {i} has only {} nonzero singular values, {} requested",
                    split.svd.len(),
                    a.k
                )));
            }
        }
    }
    let g = sv_similarity(&vectors)?;
    ensure_dir(&a.out)?;
    let rows: Vec<Vec<String>> = (0..g.rows())
        .map(|i| g.row(i).iter().map(|v| f(*v)).collect())
        .collect();
    write_csv(&a.out.join("gram.csv"), &[], &rows)?;
    let scale = write_pgm(&a.out.join("gram.pgm"), g.data(), g.rows(), g.cols())?;
    write_json(
        &a.out.join("gram.scale.json"),
        &serde_json::to_value(scale).expect("scale"),
    )?;
    println!("wrote {0}x{0} similarity matrix to {1}", g.rows(), a.out.display());
    Ok(0)
}

fn side_of(shape: &[usize]) -> Option<usize> {
    (shape.len() == 3 && shape[0] == shape[1] && shape[2] == 1).then_some(shape[0])
}

fn compare(a: CompareArgs) -> Result<i32> {
    let opts = linearize_options(SmoothArg::Secant)?;
    let model = load_model(&a.model)?;
    let data = stack_to_squares(read_tensor(&a.dataset)?)?;
    if data.images.shape()[1..] != *model.input_shape() {
        return Err(Error::dim("dataset images do not match the model input"));
    }
    let cmp = compare_spectra(&model, &data, &a.samples, &opts)?;
    ensure_dir(&a.out)?;
    let shape = model.input_shape().to_vec();
    let side = side_of(&shape);

    let spectrum_rows = |sigma: &[f64]| -> Vec<Vec<String>> {
        normalized(sigma)
            .iter()
            .enumerate()
            .map(|(k, s)| vec![k.to_string(), f(sigma[k]), f(*s)])
            .collect()
    };
    let header = ["k", "sigma", "sigma_normalized"];
    write_csv(
        &a.out.join("spectrum_data.csv"),
        &header,
        &spectrum_rows(&cmp.data_sigma),
    )?;
    for (k, v) in cmp.data_vectors.iter().enumerate() {
        write_heatmap(&a.out, &format!("data_sv_{k}"), &shape, v)?;
    }
    let data_var = match (side, cmp.data_vectors.first()) {
        (Some(s), Some(v)) => Some(angular_variance(v, s, 15.0)),
        _ => None,
    };
    let mut ops = Vec::new();
    for op in &cmp.operators {
        let i = op.sample;
        write_csv(
            &a.out.join(format!("spectrum_operator_{i}.csv")),
            &header,
            &spectrum_rows(&op.sigma),
        )?;
        for k in 0..op.right_vectors.len() {
            write_heatmap(&a.out, &format!("op_{i}_sv_{k}"), &shape, &op.right_vectors[k])?;
            write_heatmap(&a.out, &format!("op_{i}_contraction_{k}"), &shape, &op.contractions[k])?;
            write_heatmap(
                &a.out,
                &format!("op_{i}_left_{k}"),
                model.output_shape(),
                &op.left_vectors[k],
            )?;
        }
        let op_var = match (side, op.right_vectors.first()) {
            (Some(s), Some(v)) => Some(angular_variance(v, s, 15.0)),
            _ => None,
        };
        ops.push(json!({
            "sample": i,
            "rank_used": op.rank_used,
            "sigma8_over_sigma0": normalized_at(&op.sigma, 8),
            "top2_coefficient_mass": top_coefficient_mass(&op.coefficients, 2),
            "coefficients": op.coefficients,
            "angular_variance_top": op_var,
        }));
    }
    write_json(
        &a.out.join("summary.json"),
        &json!({
            "data_rank": cmp.data_rank,
            "data_sigma8_over_sigma0": normalized_at(&cmp.data_sigma, 8),
            "data_angular_variance_top": data_var,
            "degenerate": cmp.degenerate,
            "operators": ops,
        }),
    )?;
    if cmp.degenerate {
        warn!("an operator spectrum is identically zero");
    }
    println!(
        "data rank {}, operator ranks {:?}",
        cmp.data_rank,
        cmp.operators.iter().map(|o| o.rank_used).collect::<Vec<_>>()
    );
    Ok(0)
}

fn bias(a: BiasArgs) -> Result<i32> {
    let Loaded { model, x, opts } = load_input(&a.input)?;
    let study = bias_study(&model, &x, &opts)?;
    ensure_dir(&a.out)?;
    let shape = model.output_shape().to_vec();
    let mut layers = Vec::new();
    for (l, beta) in study.betas.iter().enumerate() {
        if model.layers()[l].has_bias() {
            write_heatmap(&a.out, &format!("beta_{:02}", l + 1), &shape, beta)?;
            layers.push(l + 1);
        }
    }
    write_heatmap(&a.out, "bias_total", &shape, &study.total)?;
    write_heatmap(&a.out, "ux", &shape, &study.ux)?;
    write_heatmap(&a.out, "output", &shape, &study.output)?;
    write_json(
        &a.out.join("bias.json"),
        &json!({
            "biased_layers": layers,
            "decoder_layers": study.decoder_layers.iter().map(|l| l + 1).collect::<Vec<_>>(),
            "residual": study.residual,
        }),
    )?;
    println!("max |f(x) - (u x + sum beta)| = {:e}", study.residual);
    Ok(0)
}

fn parameter_count(layer: &LayerSpec) -> usize {
    let opt = |b: &Option<Vec<f64>>| b.as_ref().map_or(0, |v| v.len());
    match layer {
        LayerSpec::Dense(d) => d.weight.len() + opt(&d.bias),
        LayerSpec::Conv2d(c) => c.kernel.len() + opt(&c.bias),
        LayerSpec::Residual(r) => {
            r.inner.iter().map(parameter_count).sum::<usize>() + r.skip.as_ref().map_or(0, |m| m.len())
        }
        LayerSpec::Concat(c) => {
            c.branches.iter().flatten().map(parameter_count).sum::<usize>()
                + c.combine.iter().map(|m| m.len()).sum::<usize>()
                + opt(&c.bias)
        }
        _ => 0,
    }
}

fn inspect(a: InspectArgs) -> Result<i32> {
    let model = load_model(&a.model)?;
    let shapes = model.shapes();
    let layers: Vec<serde_json::Value> = model
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            json!({
                "layer": i + 1,
                "kind": l.kind(),
                "output_shape": shapes[i + 1],
                "parameters": parameter_count(l),
                "bias": l.has_bias(),
            })
        })
        .collect();
    let total: usize = model.layers().iter().map(parameter_count).sum();
    if a.json {
        let v = json!({
            "name": model.name(),
            "input_shape": model.input_shape(),
            "depth": model.depth(),
            "parameters": total,
            "layers": layers,
        });
        println!("{}", serde_json::to_string_pretty(&v).expect("json"));
    } else {
        println!(
            "{}: input {:?}, {} layers, {} parameters",
            model.name(),
            model.input_shape(),
            model.depth(),
            total
        );
        for (i, l) in model.layers().iter().enumerate() {
            println!(
                "{:>3}  {:<9} {:>16}  {}",
                i + 1,
                l.kind(),
                format!("{:?}", shapes[i + 1]),
                parameter_count(l)
            );
        }
    }
    Ok(0)
}
