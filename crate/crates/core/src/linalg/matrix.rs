use crate::error::{Error, Result};

/// Default ceiling on the number of elements any explicit matrix may hold (2^26).
pub const DEFAULT_ELEMENT_BUDGET: usize = 1 << 26;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim(format!("matrix dims {rows}x{cols} must be positive")));
        }
        if rows * cols != data.len() {
            return Err(Error::dim(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dims must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dim("ragged rows"));
        }
        Self::new(r, c, rows.concat())
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let c = cols.len();
        let r = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|col| col.len() != r) {
            return Err(Error::dim("ragged columns"));
        }
        let mut data = vec![0.0; r * c];
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * c + j] = v;
            }
        }
        Self::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::dim(format!(
                "matvec: {}x{} matrix against vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| super::dot(self.row(i), x)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        super::norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        super::max_abs(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dim(format!(
                "add: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Scales row `i` by `d[i]`, i.e. `diag(d) * self`.
    pub fn scale_rows(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.rows);
        for (i, &s) in d.iter().enumerate() {
            for v in &mut self.data[i * self.cols..(i + 1) * self.cols] {
                *v *= s;
            }
        }
    }

    /// Scales column `j` by `d[j]`, i.e. `self * diag(d)`.
    pub fn scale_columns(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.cols);
        for row in self.data.chunks_mut(self.cols) {
            for (v, &s) in row.iter_mut().zip(d) {
                *v *= s;
            }
        }
    }

    /// Copy of the rows selected by `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Copy of the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        assert!(k > 0 && k <= self.cols);
        let mut data = Vec::with_capacity(self.rows * k);
        for row in self.data.chunks(self.cols) {
            data.extend_from_slice(&row[..k]);
        }
        Matrix {
            rows: self.rows,
            cols: k,
            data,
        }
    }
}

/// Matrix product `a * b`.
///
/// Every output entry is accumulated over the inner index in increasing order, so the
/// result is bit-for-bit reproducible.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::dim(format!(
            "matmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let (n, p) = (a.rows, b.cols);
    let mut c = vec![0.0; n * p];
    for i in 0..n {
        let out = &mut c[i * p..(i + 1) * p];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(Matrix {
        rows: n,
        cols: p,
        data: c,
    })
}

/// A linear map in the shape it is cheapest to store.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Dense(Matrix),
    Diagonal(Vec<f64>),
}

impl Operator {
    pub fn identity(n: usize) -> Self {
        Operator::Diagonal(vec![1.0; n])
    }

    pub fn rows(&self) -> usize {
        match self {
            Operator::Dense(m) => m.rows(),
            Operator::Diagonal(d) => d.len(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Operator::Dense(m) => m.cols(),
            Operator::Diagonal(d) => d.len(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Operator::Dense(m) => m.matvec(x),
            Operator::Diagonal(d) => {
                if d.len() != x.len() {
                    return Err(Error::dim(format!(
                        "diagonal of length {} against vector of length {}",
                        d.len(),
                        x.len()
                    )));
                }
                Ok(d.iter().zip(x).map(|(a, b)| a * b).collect())
            }
        }
    }

    /// `self * m`
    pub fn compose(&self, m: &Matrix) -> Result<Matrix> {
        match self {
            Operator::Dense(a) => matmul(a, m),
            Operator::Diagonal(d) => {
                if d.len() != m.rows() {
                    return Err(Error::dim("diagonal compose: dimension mismatch"));
                }
                let mut out = m.clone();
                out.scale_rows(d);
                Ok(out)
            }
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        match self {
            Operator::Dense(m) => m.clone(),
            Operator::Diagonal(d) => Matrix::from_diagonal(d),
        }
    }

    /// Selected rows of the operator as a dense matrix.
    pub fn rows_of(&self, idx: &[usize]) -> Matrix {
        match self {
            Operator::Dense(m) => m.select_rows(idx),
            Operator::Diagonal(d) => {
                let mut out = Matrix::zeros(idx.len(), d.len());
                for (r, &i) in idx.iter().enumerate() {
                    out.set(r, i, d[i]);
                }
                out
            }
        }
    }
}

fn check_budget(what: &str, needed: usize, budget: usize) -> Result<()> {
    if needed > budget {
        return Err(Error::Resource {
            what: what.to_string(),
            needed,
            budget,
        });
    }
    Ok(())
}

/// Product of a chain of operators, `ops[n-1] * ... * ops[1] * ops[0]`.
///
/// `ops[0]` is applied first. Diagonal factors are folded into their dense neighbours,
/// and the dense products are then evaluated in the cheapest association order.
/// Every intermediate (and the result) must fit in `budget` elements.
pub fn chain_product(ops: &[&Operator], budget: usize) -> Result<Operator> {
    if ops.is_empty() {
        return Err(Error::dim("empty operator chain"));
    }
    for w in ops.windows(2) {
        if w[1].cols() != w[0].rows() {
            return Err(Error::dim(format!(
                "operator chain break: {}x{} cannot follow {}x{}",
                w[1].rows(),
                w[1].cols(),
                w[0].rows(),
                w[0].cols()
            )));
        }
    }

    // Fold diagonals into the dense factor applied just before them.
    let mut pending: Option<Vec<f64>> = None;
    let mut dense: Vec<Matrix> = Vec::new();
    for op in ops {
        match op {
            Operator::Diagonal(d) => {
                if let Some(last) = dense.last_mut() {
                    last.scale_rows(d);
                } else {
                    pending = Some(match pending {
                        Some(p) => p.iter().zip(d).map(|(a, b)| a * b).collect(),
                        None => d.clone(),
                    });
                }
            }
            Operator::Dense(m) => {
                check_budget("operator factor", m.len(), budget)?;
                let mut m = m.clone();
                if let Some(p) = pending.take() {
                    m.scale_columns(&p);
                }
                dense.push(m);
            }
        }
    }
    if dense.is_empty() {
        return Ok(Operator::Diagonal(pending.unwrap_or_default()));
    }

    // dims[i] x dims[i+1] is factor i in left-to-right (application-reversed) order.
    dense.reverse();
    let n = dense.len();
    let mut dims = Vec::with_capacity(n + 1);
    dims.push(dense[0].rows());
    dims.extend(dense.iter().map(Matrix::cols));

    let mut cost = vec![vec![0u128; n]; n];
    let mut split = vec![vec![0usize; n]; n];
    for len in 2..=n {
        for i in 0..=n - len {
            let j = i + len - 1;
            cost[i][j] = u128::MAX;
            for k in i..j {
                let c = cost[i][k] + cost[k + 1][j] + (dims[i] * dims[k + 1] * dims[j + 1]) as u128;
                if c < cost[i][j] {
                    cost[i][j] = c;
                    split[i][j] = k;
                }
            }
        }
    }

    fn eval(i: usize, j: usize, dense: &mut [Option<Matrix>], split: &[Vec<usize>], budget: usize) -> Result<Matrix> {
        if i == j {
            return Ok(dense[i].take().expect("factor used once"));
        }
        let k = split[i][j];
        let left = eval(i, k, dense, split, budget)?;
        let right = eval(k + 1, j, dense, split, budget)?;
        check_budget("operator product", left.rows() * right.cols(), budget)?;
        matmul(&left, &right)
    }

    let mut slots: Vec<Option<Matrix>> = dense.into_iter().map(Some).collect();
    let product = eval(0, n - 1, &mut slots, &split, budget)?;
    Ok(Operator::Dense(product))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_times_matrix() {
        let b = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(2), &b).unwrap(), b);
    }

    #[test]
    fn projector_times_vector() {
        let p = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let v = Matrix::from_rows(&[vec![5.0], vec![7.0]]).unwrap();
        let out = matmul(&p, &v).unwrap();
        assert_eq!(out.data(), &[5.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn chain_folds_diagonals() {
        let w1 = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let w2 = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let ops = [
            Operator::Diagonal(vec![2.0, 0.5]),
            Operator::Dense(w1.clone()),
            Operator::Diagonal(vec![1.0, 0.0]),
            Operator::Dense(w2.clone()),
        ];
        let refs: Vec<&Operator> = ops.iter().collect();
        let got = chain_product(&refs, DEFAULT_ELEMENT_BUDGET).unwrap().to_matrix();
        let expect = matmul(
            &w2,
            &matmul(
                &Matrix::from_diagonal(&[1.0, 0.0]),
                &matmul(&w1, &Matrix::from_diagonal(&[2.0, 0.5])).unwrap(),
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(got, expect);
    }

    #[test]
    fn chain_respects_budget() {
        let a = Operator::Dense(Matrix::zeros(40, 2));
        let b = Operator::Dense(Matrix::zeros(2, 40));
        // 40x40 product exceeds a 1000 element budget.
        let err = chain_product(&[&b, &a], 1000).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
    }
}
