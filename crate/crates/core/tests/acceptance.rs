//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any
//! criterion fails. Trains two full-size toy autoencoders, so it takes several minutes.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use clap::Parser;
use common::{conv_oracle, inf_norm, max_abs_diff, naive_matmul};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specxai::extract_affine;
use specxai::io::{read_csv, save_model, write_tensor, Dtype};
use specxai::linalg::{
    conv2d, conv2d_to_matrix, matmul, thin_svd, ConvParams, Matrix, SvdResult, Tensor, DEFAULT_RANK_TOL,
};
use specxai::netgraph::{LayerSpec, LinearizeOptions, NetworkModel};
use specxai::spectral::{
    alpha_decomposition, feature_contraction, reduce_coefficients, split_at, top_coefficient_mass, PairOrder,
};
use specxai::toylab::{
    angular_variance, bias_study, data_matrix, data_matrix_svd, generate_squares, normalized_at, train_autoencoder,
    Squares, SquaresConfig, TrainConfig, TrainReport, CANVAS,
};
use specxai::zoo::{random_cnn, random_input, random_mlp, Activation};

type Outcome = std::result::Result<String, String>;

/// Worst `|phi_i . phi_j - delta_ij|` (and the same for the left vectors) over every SVD
/// computed by the suite.
static ORTHO: Mutex<(f64, usize)> = Mutex::new((0.0, 0));

fn track(svd: &SvdResult) {
    let gram_err = |m: &Matrix| {
        let g = matmul(&m.transpose(), m).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let delta = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - delta).abs());
            }
        }
        worst
    };
    let e = gram_err(&svd.v).max(gram_err(&svd.u));
    let mut t = ORTHO.lock().unwrap();
    t.0 = t.0.max(e);
    t.1 += 1;
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Suite {
    failed: Vec<&'static str>,
}

impl Suite {
    fn check(&mut self, name: &'static str, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                println!("FAIL {name}: {detail} [{secs:.1}s]");
                self.failed.push(name);
            }
        }
    }
}

fn corpus() -> Vec<NetworkModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..200)
        .map(|i| {
            if i % 2 == 0 {
                let depth = rng.random_range(2..=6);
                let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(2..=256)).collect();
                let bias = rng.random_bool(0.8);
                random_mlp(&mut rng, &widths, Activation::Relu, bias).unwrap()
            } else {
                let side = 2 * rng.random_range(2..=4);
                let channels = rng.random_range(1..=3);
                let outputs = rng.random_range(1..=10);
                random_cnn(&mut rng, side, channels, outputs).unwrap()
            }
        })
        .collect()
}

fn pwa_identity(models: &[NetworkModel]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let opts = LinearizeOptions::default();
    let mut worst: f64 = 0.0;
    for (i, model) in models.iter().enumerate() {
        for _ in 0..5 {
            let x = random_input(&mut rng, model.input_shape());
            let op = extract_affine(model, &x, &opts).map_err(|e| format!("model {i}: {e}"))?;
            let f = model.predict(&x).unwrap();
            let ux = naive_matmul(op.u.data(), x.data(), op.u.rows(), op.u.cols(), 1);
            let y: Vec<f64> = ux.iter().zip(&op.b).map(|(a, b)| a + b).collect();
            let rel = max_abs_diff(&y, f.data()) / (1.0 + inf_norm(f.data()));
            worst = worst.max(rel);
            ensure(rel <= 1e-8, || format!("model {i}: relative gap {rel:.3e}"))?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "1000 inputs, worst relative gap {worst:.2e}, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn bias_dual(models: &[NetworkModel]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let opts = LinearizeOptions::default();
    let mut worst: f64 = 0.0;
    for (i, model) in models.iter().enumerate() {
        for _ in 0..5 {
            let x = random_input(&mut rng, model.input_shape());
            let op = extract_affine(model, &x, &opts).map_err(|e| format!("model {i}: {e}"))?;
            let f = model.predict(&x).unwrap();
            let ux = naive_matmul(op.u.data(), x.data(), op.u.rows(), op.u.cols(), 1);
            let by_difference: Vec<f64> = f.data().iter().zip(&ux).map(|(a, b)| a - b).collect();
            let gap = max_abs_diff(&by_difference, &op.b);
            worst = worst.max(gap);
            ensure(gap <= 1e-8, || format!("model {i}: bias gap {gap:.3e}"))?;
        }
    }
    Ok(format!("worst gap {worst:.2e}"))
}

/// Sign pattern of every ReLU pre-activation, from the plain forward pass.
fn relu_pattern(model: &NetworkModel, x: &Tensor) -> Vec<bool> {
    let zs = model.forward(x).unwrap();
    let mut pattern = Vec::new();
    for (l, layer) in model.layers().iter().enumerate() {
        if matches!(layer, LayerSpec::Relu) {
            pattern.extend(zs[l].data().iter().map(|&z| z > 0.0));
        }
    }
    pattern
}

fn jacobian_fd() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let depth = rng.random_range(2..=5);
        let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(2..=32)).collect();
        let model = random_mlp(&mut rng, &widths, Activation::Relu, true).unwrap();
        let x = random_input(&mut rng, model.input_shape());
        let u = extract_affine(&model, &x, &LinearizeOptions::default()).unwrap().u;
        let pattern = relu_pattern(&model, &x);
        for c in 0..x.len() {
            let mut h = 1e-4;
            let (fp, fm) = loop {
                ensure(h > 1e-12, || format!("model {i}: no in-region step for coordinate {c}"))?;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp.data_mut()[c] += h;
                xm.data_mut()[c] -= h;
                if relu_pattern(&model, &xp) == pattern && relu_pattern(&model, &xm) == pattern {
                    break (model.predict(&xp).unwrap(), model.predict(&xm).unwrap());
                }
                h *= 0.5;
            };
            for r in 0..u.rows() {
                let fd = (fp.data()[r] - fm.data()[r]) / (2.0 * h);
                let err = (fd - u.get(r, c)).abs();
                worst = worst.max(err);
                ensure(err <= 1e-6, || format!("model {i}: d f_{r} / d x_{c} off by {err:.3e}"))?;
            }
        }
    }
    Ok(format!("50 models, worst error {worst:.2e}"))
}

fn split_invariance(model: &NetworkModel, data: &Squares) -> Outcome {
    let opts = LinearizeOptions::default();
    let mut worst: f64 = 0.0;
    for sample in [0, 1] {
        let x = data.sample(sample);
        let y = model.predict(&x).unwrap();
        let j = (0..y.len())
            .max_by(|&a, &b| y.data()[a].total_cmp(&y.data()[b]))
            .unwrap();
        for l_s in 1..=model.depth() {
            let split = split_at(model, &x, l_s, j, &opts).map_err(|e| format!("l_s {l_s}: {e}"))?;
            track(&split.svd);
            let alpha = alpha_decomposition(&split);
            let gap = (alpha.total() + split.bias[j] - y.data()[j]).abs();
            worst = worst.max(gap);
            ensure(gap <= 1e-8, || format!("sample {sample}, l_s {l_s}: gap {gap:.3e}"))?;
        }
    }
    Ok(format!(
        "{} split layers x 2 samples, worst gap {worst:.2e}",
        model.depth()
    ))
}

fn reduction() -> Outcome {
    let r = reduce_coefficients(&[5.0, -3.0, 2.0, -1.0], PairOrder::Sequence).unwrap();
    ensure(r.a_hat == [2.0, 1.0] && r.a_tilde == [2.0 / 3.0, 1.0 / 3.0], || {
        format!("example 1: {r:?}")
    })?;
    let r = reduce_coefficients(&[1.0, 2.0], PairOrder::Sequence).unwrap();
    ensure(r.a_hat == [1.0, 2.0] && r.a_tilde == [1.0 / 3.0, 2.0 / 3.0], || {
        format!("example 2: {r:?}")
    })?;
    let r = reduce_coefficients(&[5.0, -3.0, -4.0], PairOrder::Sequence).unwrap();
    ensure(
        r.passes == [vec![2.0, -4.0], vec![-2.0]] && r.a_tilde == [1.0] && r.sign() < 0.0 && r.iterations == 2,
        || format!("example 3: {r:?}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut max_passes = 0;
    for case in 0..10_000 {
        let n = rng.random_range(1..=16);
        let alphas: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let order = if case % 2 == 0 {
            PairOrder::Sequence
        } else {
            PairOrder::Magnitude
        };
        let r = reduce_coefficients(&alphas, order).unwrap();
        let total: f64 = alphas.iter().sum();
        let scale: f64 = alphas.iter().map(|a| a.abs()).sum();
        if r.cancelled {
            ensure(total.abs() <= 1e-12 * scale, || {
                format!("case {case}: spurious cancellation")
            })?;
            continue;
        }
        for (p, pass) in r.passes.iter().enumerate() {
            let s: f64 = pass.iter().sum();
            ensure((s - total).abs() <= 1e-12 * scale, || {
                format!("case {case}: pass {p} sum {s} != {total}")
            })?;
        }
        ensure(r.iterations == r.passes.len() && r.iterations <= n, || {
            format!("case {case}: {} passes for {n} entries", r.iterations)
        })?;
        ensure(r.a_hat.iter().all(|a| a.signum() == r.sign()), || {
            format!("case {case}: mixed signs {:?}", r.a_hat)
        })?;
        let s: f64 = r.a_tilde.iter().sum();
        ensure((s - 1.0).abs() <= 1e-12, || format!("case {case}: sum of a_tilde {s}"))?;
        max_passes = max_passes.max(r.iterations);
    }
    Ok(format!(
        "3 worked examples exact, 10000 random vectors, at most {max_passes} passes"
    ))
}

fn contraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let shape = vec![
            rng.random_range(1..=16),
            rng.random_range(1..=16),
            rng.random_range(1..=4),
        ];
        let phi = random_input(&mut rng, &shape);
        let x = random_input(&mut rng, &shape);
        let map = feature_contraction(&phi, &x, Some(2)).unwrap();
        let dot: f64 = phi.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        let gap = (map.sum() - dot).abs();
        worst = worst.max(gap);
        ensure(gap <= 1e-10, || format!("case {case}: gap {gap:.3e}"))?;
    }
    Ok(format!("1000 pairs, worst gap {worst:.2e}"))
}

fn squares_reproduction(data: &Squares, run: &TrainReport, train_time: Duration) -> Outcome {
    let model = &run.model;
    ensure(train_time < Duration::from_secs(600), || {
        format!("training took {train_time:?}")
    })?;
    ensure(run.final_mse <= 0.003, || format!("final MSE {:.6}", run.final_mse))?;
    ensure(run.final_mse <= run.initial_mse, || {
        format!("final MSE {} above initial {}", run.final_mse, run.initial_mse)
    })?;

    let dsvd = data_matrix_svd(&data_matrix(data)).unwrap();
    track(&dsvd);
    let data_ratio = normalized_at(&dsvd.sigma, 8);
    let opts = LinearizeOptions::default();
    let mut masses = Vec::new();
    let mut max_rank = 0;
    let mut max_ratio: f64 = 0.0;
    let mut top_vector = None;
    for i in 0..32 {
        let split = split_at(model, &data.sample(i), model.depth(), 0, &opts).unwrap();
        track(&split.svd);
        max_rank = max_rank.max(split.svd.rank_used);
        max_ratio = max_ratio.max(normalized_at(&split.svd.sigma, 8));
        masses.push(top_coefficient_mass(&split.coefficients, 2));
        if i == 0 && !split.svd.is_empty() {
            top_vector = Some(split.svd.right_vector(0));
        }
    }
    ensure(max_rank <= 8, || format!("operator rank {max_rank}"))?;
    ensure(max_ratio < data_ratio, || {
        format!("operator sigma8/sigma0 {max_ratio} vs data {data_ratio}")
    })?;
    let mean_mass = masses.iter().sum::<f64>() / masses.len() as f64;
    ensure(mean_mass >= 0.90, || format!("mean top-2 mass {mean_mass:.3}"))?;
    let top_vector = top_vector.ok_or("operator at sample 0 is zero")?;
    let data_var = angular_variance(&dsvd.right_vector(0), CANVAS, 15.0);
    let net_var = angular_variance(&top_vector, CANVAS, 15.0);
    ensure(data_var < net_var, || {
        format!("angular variance data {data_var:.4} vs network {net_var:.4}")
    })?;
    Ok(format!(
        "train {:.0}s, MSE {:.6} (initial {:.4}), rank <= {max_rank}, sigma8/sigma0 {max_ratio:.2e} < {data_ratio:.4}, \
         mean top-2 mass {mean_mass:.3}, angular variance {data_var:.5} < {net_var:.3}",
        train_time.as_secs_f64(),
        run.final_mse,
        run.initial_mse
    ))
}

fn bias_decomposition_study(data: &Squares, run: &TrainReport) -> Outcome {
    let model = &run.model;
    let x = data.sample(0);
    let study = bias_study(model, &x, &LinearizeOptions::default()).unwrap();
    let f = model.predict(&x).unwrap();
    let recon: Vec<f64> = study
        .ux
        .iter()
        .enumerate()
        .map(|(p, v)| v + study.betas.iter().map(|b| b[p]).sum::<f64>())
        .collect();
    let gap = max_abs_diff(&recon, f.data());
    ensure(gap <= 1e-7, || format!("f - (ux + sum beta) = {gap:.3e}"))?;
    ensure(study.decoder_layers == [6, 8, 10], || {
        format!("decoder layers {:?}", study.decoder_layers)
    })?;

    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("toy.sxm");
    save_model(model, &model_path).unwrap();
    let input = dir.path().join("x.sxt");
    write_tensor(&input, &x, Dtype::F64).unwrap();
    let out = dir.path().join("bias");
    let cli = specxai::cli::Cli::parse_from([
        "specxai",
        "bias-study",
        "--model",
        model_path.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let code = specxai::cli::run(cli).map_err(|e| e.to_string())?;
    ensure(code == 0, || format!("bias-study exited with {code}"))?;
    for &l in &study.decoder_layers {
        let stem = format!("beta_{:02}", l + 1);
        for ext in ["csv", "pgm", "scale.json"] {
            ensure(out.join(format!("{stem}.{ext}")).exists(), || {
                format!("missing {stem}.{ext}")
            })?;
        }
        let written: Vec<f64> = read_csv(&out.join(format!("{stem}.csv"))).unwrap().concat();
        let diff = max_abs_diff(&written, &study.betas[l]);
        ensure(diff <= 1e-12, || format!("{stem}.csv differs by {diff:.3e}"))?;
    }
    let nonzero = study
        .decoder_layers
        .iter()
        .filter(|&&l| study.betas[l].iter().any(|&v| v != 0.0))
        .count();
    let layers: Vec<usize> = study.decoder_layers.iter().map(|l| l + 1).collect();
    Ok(format!(
        "gap {gap:.2e}, beta maps for layers {layers:?} ({nonzero} non-zero)"
    ))
}

fn conv_toeplitz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 200 {
        let (h, w) = (rng.random_range(1..=9), rng.random_range(1..=9));
        let (ci, co) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let (kh, kw) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let stride = [rng.random_range(1..=3), rng.random_range(1..=3)];
        let pad = [rng.random_range(0..=2), rng.random_range(0..=2)];
        let dil = [rng.random_range(1..=2), rng.random_range(1..=2)];
        if dil[0] * (kh - 1) + 1 > h + 2 * pad[0] || dil[1] * (kw - 1) + 1 > w + 2 * pad[1] {
            continue;
        }
        let x = random_input(&mut rng, &[h, w, ci]);
        let kernel = random_input(&mut rng, &[kh, kw, ci, co]);
        let (oracle, oshape) = conv_oracle(x.data(), [h, w, ci], kernel.data(), [kh, kw, ci, co], stride, pad, dil);
        let params = ConvParams {
            stride,
            padding: pad,
            dilation: dil,
        };
        let direct = conv2d(&kernel, None, &x, params).unwrap();
        ensure(direct.shape() == oshape, || {
            format!("case {done}: shape {:?} vs {oshape:?}", direct.shape())
        })?;
        let t = conv2d_to_matrix(&kernel, &[h, w, ci], params, usize::MAX).unwrap();
        let flat = t.matvec(x.data()).unwrap();
        let err = max_abs_diff(direct.data(), &oracle).max(max_abs_diff(&flat, &oracle));
        worst = worst.max(err);
        ensure(err <= 1e-12, || format!("case {done}: error {err:.3e}"))?;
        done += 1;
    }
    Ok(format!("200 configurations, worst error {worst:.2e}"))
}

/// Extra SVDs for the orthonormality check: random matrices and one split per corpus model.
fn orthonormality(models: &[NetworkModel]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let (m, n) = (rng.random_range(1..=40), rng.random_range(1..=40));
        let a = Matrix::new(m, n, (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        track(&thin_svd(&a, DEFAULT_RANK_TOL).unwrap());
    }
    let opts = LinearizeOptions::default();
    for model in models {
        let x = random_input(&mut rng, model.input_shape());
        let l_s = rng.random_range(1..=model.depth());
        let j = rng.random_range(0..model.output_len());
        track(&split_at(model, &x, l_s, j, &opts).map_err(|e| e.to_string())?.svd);
    }
    let (worst, count) = *ORTHO.lock().unwrap();
    ensure(worst <= 1e-10, || {
        format!("worst |phi_i . phi_j - delta_ij| {worst:.3e} over {count} SVDs")
    })?;
    Ok(format!("{count} SVDs, worst deviation {worst:.2e}"))
}

fn main() {
    let mut suite = Suite { failed: Vec::new() };
    let models = corpus();
    suite.check("pwa-identity", || pwa_identity(&models));
    suite.check("bias-dual", || bias_dual(&models));
    suite.check("jacobian-finite-difference", jacobian_fd);
    suite.check("reduction", reduction);
    suite.check("contraction-completeness", contraction);
    suite.check("conv-toeplitz", conv_toeplitz);

    let data = generate_squares(&SquaresConfig::default()).expect("dataset");
    let start = Instant::now();
    let plain = train_autoencoder(&data, &TrainConfig::default());
    let plain_time = start.elapsed();
    match &plain {
        Ok(run) => {
            suite.check("split-invariance", || split_invariance(&run.model, &data));
            suite.check("rotated-squares", || squares_reproduction(&data, run, plain_time));
        }
        Err(e) => {
            for name in ["split-invariance", "rotated-squares"] {
                suite.check(name, || Err(format!("training failed: {e}")));
            }
        }
    }
    let biased = train_autoencoder(
        &data,
        &TrainConfig {
            use_bias: true,
            ..TrainConfig::default()
        },
    );
    suite.check("bias-study", || match &biased {
        Ok(run) => bias_decomposition_study(&data, run),
        Err(e) => Err(format!("training failed: {e}")),
    });
    suite.check("orthonormality", || orthonormality(&models));

    if suite.failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed: {}", suite.failed.len(), suite.failed.join(", "));
        std::process::exit(1);
    }
}
