//! Reference implementations used as test oracles. They are written for clarity, not
//! speed, and share no code with the library.

#![allow(dead_code)]

/// Row-major `a (m x k) * b (k x n)` by the textbook triple loop.
pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i * k + t] * b[t * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

/// Eigenvalues of a symmetric matrix by the cyclic two-sided Jacobi method, descending.
pub fn symmetric_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += a[p * n + q] * a[p * n + q];
                }
            }
        }
        let scale: f64 = (0..n).map(|i| a[i * n + i].abs()).sum::<f64>() + off.sqrt();
        if off.sqrt() <= 1e-14 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Singular values of a row-major `m x n` matrix from the eigenvalues of the symmetric
/// embedding `[[0, A], [A^T, 0]]`, whose spectrum is `+-sigma` plus zeros.
pub fn singular_values(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let s = m + n;
    let mut e = vec![0.0; s * s];
    for i in 0..m {
        for j in 0..n {
            e[i * s + m + j] = a[i * n + j];
            e[(m + j) * s + i] = a[i * n + j];
        }
    }
    let ev = symmetric_eigenvalues(e, s);
    ev.into_iter().take(m.min(n)).map(|v| v.max(0.0)).collect()
}

/// Direct 2-D cross-correlation on an explicitly zero-padded `[H, W, C]` input with a
/// `[KH, KW, C_in, C_out]` kernel.
#[allow(clippy::too_many_arguments)]
pub fn conv_oracle(
    x: &[f64],
    shape: [usize; 3],
    kernel: &[f64],
    kshape: [usize; 4],
    stride: [usize; 2],
    pad: [usize; 2],
    dil: [usize; 2],
) -> (Vec<f64>, [usize; 3]) {
    let [h, w, c] = shape;
    let [kh, kw, ci, co] = kshape;
    assert_eq!(c, ci);
    let (ph, pw) = (h + 2 * pad[0], w + 2 * pad[1]);
    let mut padded = vec![0.0; ph * pw * c];
    for r in 0..h {
        for q in 0..w {
            for ch in 0..c {
                padded[((r + pad[0]) * pw + q + pad[1]) * c + ch] = x[(r * w + q) * c + ch];
            }
        }
    }
    let oh = (ph - (dil[0] * (kh - 1) + 1)) / stride[0] + 1;
    let ow = (pw - (dil[1] * (kw - 1) + 1)) / stride[1] + 1;
    let mut out = vec![0.0; oh * ow * co];
    for r in 0..oh {
        for q in 0..ow {
            for o in 0..co {
                let mut s = 0.0;
                for a in 0..kh {
                    for b in 0..kw {
                        for ch in 0..c {
                            let pr = r * stride[0] + a * dil[0];
                            let pq = q * stride[1] + b * dil[1];
                            s += padded[(pr * pw + pq) * c + ch] * kernel[((a * kw + b) * ci + ch) * co + o];
                        }
                    }
                }
                out[(r * ow + q) * co + o] = s;
            }
        }
    }
    (out, [oh, ow, co])
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn inf_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max)
}
