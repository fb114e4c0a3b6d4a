//! Thin singular value decomposition.
//!
//! The matrix (transposed if wide) is first reduced with a column-pivoted Householder QR,
//! which also reveals its numerical rank. The triangular factor goes through a second,
//! unpivoted QR and the resulting small square factor is diagonalised with one-sided
//! (Hestenes) Jacobi rotations. The Householder steps only cost `O(m n k)` for a rank-`k`
//! matrix, which is what makes the rank-8 operators of a bottlenecked autoencoder cheap.

use super::{dot, Matrix};
use crate::error::{Error, Result};

/// Default relative threshold used to count significant singular values.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Columns whose remaining norm falls below this fraction of the largest column norm are
/// treated as numerically zero by the rank-revealing QR.
const QR_DROP_TOL: f64 = 1e-13;

const MAX_SWEEPS: usize = 80;

/// `m = U diag(sigma) V^T`, with `sigma` sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
    pub rank_used: usize,
}

impl SvdResult {
    /// Number of singular triplets held.
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Right singular vector `k` (column `k` of V).
    pub fn right_vector(&self, k: usize) -> Vec<f64> {
        self.v.column(k)
    }

    pub fn left_vector(&self, k: usize) -> Vec<f64> {
        self.u.column(k)
    }

    /// `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = Matrix::zeros(m, n);
        for k in 0..self.sigma.len() {
            let s = self.sigma[k];
            for i in 0..m {
                let us = self.u.get(i, k) * s;
                if us == 0.0 {
                    continue;
                }
                let row = &mut out.data_mut()[i * n..(i + 1) * n];
                for (j, o) in row.iter_mut().enumerate() {
                    *o += us * self.v.get(j, k);
                }
            }
        }
        out
    }
}

/// Column-major scratch matrix: column `j` occupies `data[j*rows..(j+1)*rows]`.
struct ColMajor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ColMajor {
    fn from_matrix(m: &Matrix, transpose: bool) -> Self {
        if transpose {
            // columns of m^T are rows of m
            ColMajor {
                rows: m.cols(),
                cols: m.rows(),
                data: m.data().to_vec(),
            }
        } else {
            ColMajor {
                rows: m.rows(),
                cols: m.cols(),
                data: m.transpose().into_data(),
            }
        }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn two_cols_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(p < q);
        let r = self.rows;
        let (head, tail) = self.data.split_at_mut(q * r);
        (&mut head[p * r..(p + 1) * r], &mut tail[..r])
    }

    fn swap_cols(&mut self, p: usize, q: usize) {
        if p == q {
            return;
        }
        let (a, b) = self.two_cols_mut(p.min(q), p.max(q));
        a.swap_with_slice(b);
    }
}

/// Householder reflector `I - 2 v v^T` acting on rows `offset..`.
struct Reflector {
    offset: usize,
    v: Vec<f64>,
}

impl Reflector {
    fn apply(&self, x: &mut [f64]) {
        let tail = &mut x[self.offset..];
        let s = 2.0 * dot(&self.v, tail);
        if s != 0.0 {
            for (t, &v) in tail.iter_mut().zip(&self.v) {
                *t -= s * v;
            }
        }
    }
}

/// Builds the reflector zeroing `x[1..]`; returns it with the resulting diagonal value.
fn householder(x: &[f64], offset: usize) -> (Reflector, f64) {
    let nrm = dot(x, x).sqrt();
    let alpha = if x[0] >= 0.0 { -nrm } else { nrm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vn = dot(&v, &v).sqrt();
    if vn > 0.0 {
        for e in &mut v {
            *e /= vn;
        }
    }
    (Reflector { offset, v }, alpha)
}

struct PivotedQr {
    reflectors: Vec<Reflector>,
    /// `rank x cols` upper trapezoidal factor, row-major, in pivoted column order.
    r: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

fn pivoted_qr(mut a: ColMajor) -> PivotedQr {
    let (m, n) = (a.rows, a.cols);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut reflectors = Vec::new();
    let max_initial = (0..n).map(|j| dot(a.col(j), a.col(j))).fold(0.0f64, f64::max).sqrt();
    let drop = QR_DROP_TOL * max_initial;
    let mut rank = 0;
    for k in 0..m.min(n) {
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..n {
            let tail = &a.col(j)[k..];
            let s = dot(tail, tail);
            if s > best_norm {
                best_norm = s;
                best = j;
            }
        }
        if max_initial == 0.0 || best_norm.sqrt() <= drop {
            break;
        }
        a.swap_cols(k, best);
        perm.swap(k, best);
        let (h, alpha) = householder(&a.col(k)[k..], k);
        {
            let ck = a.col_mut(k);
            ck[k] = alpha;
            for e in &mut ck[k + 1..] {
                *e = 0.0;
            }
        }
        for j in k + 1..n {
            h.apply(a.col_mut(j));
        }
        reflectors.push(h);
        rank = k + 1;
    }
    let mut r = vec![0.0; rank * n];
    for j in 0..n {
        let col = a.col(j);
        for i in 0..rank.min(j + 1) {
            r[i * n + j] = col[i];
        }
    }
    PivotedQr {
        reflectors,
        r,
        perm,
        rank,
    }
}

/// One-sided Jacobi on the columns of `w` (square, column-major). On return the columns
/// of `w` are mutually orthogonal and `rot` holds the accumulated rotation.
fn jacobi_orthogonalize(w: &mut ColMajor, rot: &mut ColMajor) -> Result<()> {
    let k = w.cols;
    let tol = f64::EPSILON * (k as f64).max(16.0);
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let (wp, wq) = w.two_cols_mut(p, q);
                let alpha = dot(wp, wp);
                let beta = dot(wq, wq);
                let gamma = dot(wp, wq);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in wp.iter_mut().zip(wq.iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
                let (rp, rq) = rot.two_cols_mut(p, q);
                for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::Numeric(format!(
        "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"
    )))
}

/// Thin SVD of `m`.
///
/// Returns one triplet per numerically non-zero direction found by the rank-revealing
/// QR (so `min(rows, cols)` triplets for a full-rank matrix). `rank_used` counts the
/// singular values above `rank_tol * sigma[0]`. For each triplet the largest-magnitude
/// entry of the V column (lowest index on ties) is made positive.
pub fn thin_svd(m: &Matrix, rank_tol: f64) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(Error::Numeric("thin_svd: input contains NaN or Inf".into()));
    }
    if rank_tol.is_nan() || rank_tol < 0.0 {
        return Err(Error::Usage(format!("rank_tol must be >= 0, got {rank_tol}")));
    }
    let wide = m.rows() < m.cols();
    let a = ColMajor::from_matrix(m, wide);
    let (rows, cols) = (a.rows, a.cols);

    let qr = pivoted_qr(a);
    let k = qr.rank;
    if k == 0 {
        // No triplets; U and V keep a single zero placeholder column.
        return Ok(SvdResult {
            u: Matrix::zeros(m.rows(), 1),
            sigma: Vec::new(),
            v: Matrix::zeros(m.cols(), 1),
            rank_used: 0,
        });
    }

    // Second QR on R^T (cols x k): R^T = Q2 [T; 0].
    let mut rt = ColMajor {
        rows: cols,
        cols: k,
        data: qr.r.clone(),
    };
    let mut refl2 = Vec::with_capacity(k);
    for j in 0..k {
        let (h, alpha) = householder(&rt.col(j)[j..], j);
        {
            let cj = rt.col_mut(j);
            cj[j] = alpha;
            for e in &mut cj[j + 1..] {
                *e = 0.0;
            }
        }
        for jj in j + 1..k {
            h.apply(rt.col_mut(jj));
        }
        refl2.push(h);
    }
    // B = T^T (k x k, lower triangular), column-major: column j of B is row j of T.
    let mut b = ColMajor {
        rows: k,
        cols: k,
        data: vec![0.0; k * k],
    };
    for j in 0..k {
        for i in j..k {
            // T[j][i] lives in rt column i, row j.
            b.data[j * k + i] = rt.col(i)[j];
        }
    }
    let mut rot = ColMajor {
        rows: k,
        cols: k,
        data: vec![0.0; k * k],
    };
    for i in 0..k {
        rot.data[i * k + i] = 1.0;
    }
    jacobi_orthogonalize(&mut b, &mut rot)?;

    let mut sigma: Vec<f64> = (0..k).map(|j| dot(b.col(j), b.col(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));

    // Left vectors of the tall problem: Q1 [B_j / sigma_j; 0].
    let mut left = ColMajor {
        rows,
        cols: k,
        data: vec![0.0; rows * k],
    };
    // Right vectors: P Q2 [J; 0].
    let mut right = ColMajor {
        rows: cols,
        cols: k,
        data: vec![0.0; cols * k],
    };
    for (dst, &src) in order.iter().enumerate() {
        let s = sigma[src];
        let col = left.col_mut(dst);
        for i in 0..k {
            col[i] = if s > 0.0 { b.col(src)[i] / s } else { 0.0 };
        }
        for h in qr.reflectors.iter().rev() {
            h.apply(col);
        }
        let mut tmp = vec![0.0; cols];
        tmp[..k].copy_from_slice(rot.col(src));
        for h in refl2.iter().rev() {
            h.apply(&mut tmp);
        }
        let rcol = right.col_mut(dst);
        for (i, &p) in qr.perm.iter().enumerate() {
            rcol[p] = tmp[i];
        }
    }
    sigma = order.iter().map(|&i| sigma[i]).collect();

    let (mut u_cols, mut v_cols) = if wide { (right, left) } else { (left, right) };
    for j in 0..k {
        let vj = v_cols.col(j);
        let mut best = 0;
        for (i, &x) in vj.iter().enumerate() {
            if x.abs() > vj[best].abs() {
                best = i;
            }
        }
        if vj[best] < 0.0 {
            for x in v_cols.col_mut(j) {
                *x = -*x;
            }
            for x in u_cols.col_mut(j) {
                *x = -*x;
            }
        }
    }

    let to_matrix = |c: ColMajor| {
        let t = Matrix::new(c.cols, c.rows, c.data).expect("non-empty factor");
        t.transpose()
    };
    let rank_used = sigma.iter().filter(|&&s| s > rank_tol * sigma[0]).count();
    Ok(SvdResult {
        u: to_matrix(u_cols),
        sigma,
        v: to_matrix(v_cols),
        rank_used,
    })
}
