use crate::error::{Error, Result};
use crate::linalg::{conv2d, ConvGeometry, ConvParams, Matrix, Tensor};

/// Fully connected layer `W z + b`. The input may have any shape; it is flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
    /// Output shape; defaults to `[rows]`.
    pub out_shape: Option<Vec<usize>>,
}

impl Dense {
    pub fn new(weight: Matrix, bias: Option<Vec<f64>>) -> Self {
        Dense {
            weight,
            bias,
            out_shape: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[KH, KW, C_in, C_out]`
    pub kernel: Tensor,
    pub bias: Option<Vec<f64>>,
    pub params: ConvParams,
}

/// Pooling window and stride (no padding).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool {
    pub window: [usize; 2],
    pub stride: [usize; 2],
}

impl Pool {
    pub fn square(size: usize) -> Self {
        Pool {
            window: [size, size],
            stride: [size, size],
        }
    }

    pub(crate) fn out_shape(&self, in_shape: &[usize]) -> Result<[usize; 3]> {
        let [h, w, c] = spatial(in_shape, "pool")?;
        if self.window.contains(&0) || self.stride.contains(&0) {
            return Err(Error::dim("pool window and stride must be positive"));
        }
        if self.window[0] > h || self.window[1] > w {
            return Err(Error::dim(format!(
                "pool window {:?} larger than input {h}x{w}",
                self.window
            )));
        }
        Ok([
            (h - self.window[0]) / self.stride[0] + 1,
            (w - self.window[1]) / self.stride[1] + 1,
            c,
        ])
    }

    /// Calls `f(out_index, window_input_indices)` for every output element.
    pub(crate) fn for_each_window(&self, in_shape: &[usize], mut f: impl FnMut(usize, &[usize])) {
        let [_, w, c] = [in_shape[0], in_shape[1], in_shape[2]];
        let [oh_n, ow_n, _] = self.out_shape(in_shape).expect("validated shape");
        let mut idx = Vec::with_capacity(self.window[0] * self.window[1]);
        for oh in 0..oh_n {
            for ow in 0..ow_n {
                for ch in 0..c {
                    idx.clear();
                    for dh in 0..self.window[0] {
                        for dw in 0..self.window[1] {
                            let ih = oh * self.stride[0] + dh;
                            let iw = ow * self.stride[1] + dw;
                            idx.push((ih * w + iw) * c + ch);
                        }
                    }
                    f((oh * ow_n + ow) * c + ch, &idx);
                }
            }
        }
    }
}

/// `y = (W + f)(x) + b`: an inner sub-network plus a skip map `W` (identity when absent).
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub inner: Vec<LayerSpec>,
    pub skip: Option<Matrix>,
}

/// `z = sum_i W_i f_i(x) + b` over parallel branches.
#[derive(Debug, Clone, PartialEq)]
pub struct Concat {
    pub branches: Vec<Vec<LayerSpec>>,
    pub combine: Vec<Matrix>,
    pub bias: Option<Vec<f64>>,
    pub out_shape: Vec<usize>,
}

impl Concat {
    /// Plain concatenation of the branch outputs, expressed with 0/1 combining matrices.
    /// Branches producing `[H, W, C_i]` maps with equal `H, W` are stacked along the
    /// channel axis; anything else is concatenated flat.
    pub fn stack(branches: Vec<Vec<LayerSpec>>, in_shape: &[usize]) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::dim("concat needs at least one branch"));
        }
        let outs = branches
            .iter()
            .map(|b| chain_shapes(b, in_shape).map(|s| s.last().cloned().expect("non-empty")))
            .collect::<Result<Vec<_>>>()?;
        let spatial_hw = outs
            .iter()
            .map(|s| (s.len() == 3).then(|| (s[0], s[1])))
            .collect::<Option<Vec<_>>>()
            .filter(|hw| hw.windows(2).all(|p| p[0] == p[1]));
        let mut combine = Vec::with_capacity(outs.len());
        let out_shape = if let Some(hw) = spatial_hw {
            let (h, w) = hw[0];
            let total_c: usize = outs.iter().map(|s| s[2]).sum();
            let mut c_off = 0;
            for s in &outs {
                let c = s[2];
                let mut m = Matrix::zeros(h * w * total_c, h * w * c);
                for p in 0..h * w {
                    for ch in 0..c {
                        m.set(p * total_c + c_off + ch, p * c + ch, 1.0);
                    }
                }
                combine.push(m);
                c_off += c;
            }
            vec![h, w, total_c]
        } else {
            let lens: Vec<usize> = outs.iter().map(|s| s.iter().product()).collect();
            let total: usize = lens.iter().sum();
            let mut off = 0;
            for &n in &lens {
                let mut m = Matrix::zeros(total, n);
                for i in 0..n {
                    m.set(off + i, i, 1.0);
                }
                combine.push(m);
                off += n;
            }
            vec![total]
        };
        Ok(Concat {
            branches,
            combine,
            bias: None,
            out_shape,
        })
    }
}

/// One layer of a locally linear network.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense(Dense),
    Conv2d(Conv2d),
    AvgPool(Pool),
    MaxPool(Pool),
    Relu,
    Sigmoid,
    Tanh,
    Flatten,
    Residual(Residual),
    Concat(Concat),
}

pub(crate) fn spatial(shape: &[usize], what: &str) -> Result<[usize; 3]> {
    match shape {
        &[h, w, c] => Ok([h, w, c]),
        _ => Err(Error::dim(format!("{what} expects an [H,W,C] input, got {shape:?}"))),
    }
}

fn check_bias(bias: &Option<Vec<f64>>, n: usize, what: &str) -> Result<()> {
    match bias {
        Some(b) if b.len() != n => Err(Error::dim(format!("{what} bias has length {}, expected {n}", b.len()))),
        _ => Ok(()),
    }
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense(_) => "dense",
            LayerSpec::Conv2d(_) => "conv2d",
            LayerSpec::AvgPool(_) => "avgpool",
            LayerSpec::MaxPool(_) => "maxpool",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Residual(_) => "residual",
            LayerSpec::Concat(_) => "concat",
        }
    }

    /// Whether the layer (or anything nested in it) carries a trainable bias.
    pub fn has_bias(&self) -> bool {
        match self {
            LayerSpec::Dense(d) => d.bias.is_some(),
            LayerSpec::Conv2d(c) => c.bias.is_some(),
            LayerSpec::Residual(r) => r.inner.iter().any(LayerSpec::has_bias),
            LayerSpec::Concat(c) => c.bias.is_some() || c.branches.iter().flatten().any(LayerSpec::has_bias),
            _ => false,
        }
    }

    /// Output shape for a given input shape, validating all parameters on the way.
    pub fn output_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        let in_len: usize = in_shape.iter().product();
        match self {
            LayerSpec::Dense(d) => {
                if d.weight.cols() != in_len {
                    return Err(Error::dim(format!(
                        "dense weight has {} columns, input has {in_len} values",
                        d.weight.cols()
                    )));
                }
                check_bias(&d.bias, d.weight.rows(), "dense")?;
                match &d.out_shape {
                    Some(s) if s.iter().product::<usize>() != d.weight.rows() || s.contains(&0) => Err(Error::dim(
                        format!("dense out_shape {s:?} does not hold {} values", d.weight.rows()),
                    )),
                    Some(s) => Ok(s.clone()),
                    None => Ok(vec![d.weight.rows()]),
                }
            }
            LayerSpec::Conv2d(c) => {
                let g = ConvGeometry::new(c.kernel.shape(), in_shape, c.params)?;
                check_bias(&c.bias, g.out_c, "conv2d")?;
                Ok(g.out_shape().to_vec())
            }
            LayerSpec::AvgPool(p) | LayerSpec::MaxPool(p) => Ok(p.out_shape(in_shape)?.to_vec()),
            LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Tanh => Ok(in_shape.to_vec()),
            LayerSpec::Flatten => Ok(vec![in_len]),
            LayerSpec::Residual(r) => {
                if r.inner.is_empty() {
                    return Err(Error::dim("residual block has no inner layers"));
                }
                let out = chain_shapes(&r.inner, in_shape)?.pop().expect("non-empty");
                let out_len: usize = out.iter().product();
                match &r.skip {
                    Some(w) if w.rows() != out_len || w.cols() != in_len => Err(Error::dim(format!(
                        "residual skip is {}x{}, needs {out_len}x{in_len}",
                        w.rows(),
                        w.cols()
                    ))),
                    None if out_len != in_len => Err(Error::dim(format!(
                        "residual without skip map changes size {in_len} -> {out_len}"
                    ))),
                    _ => Ok(out),
                }
            }
            LayerSpec::Concat(c) => {
                if c.branches.is_empty() || c.branches.len() != c.combine.len() {
                    return Err(Error::dim("concat needs one combining matrix per branch"));
                }
                let out_len: usize = c.out_shape.iter().product();
                if c.out_shape.is_empty() || c.out_shape.contains(&0) {
                    return Err(Error::dim("concat out_shape must be positive"));
                }
                for (b, w) in c.branches.iter().zip(&c.combine) {
                    if b.is_empty() {
                        return Err(Error::dim("concat branch has no layers"));
                    }
                    let bo: usize = chain_shapes(b, in_shape)?.last().expect("non-empty").iter().product();
                    if w.rows() != out_len || w.cols() != bo {
                        return Err(Error::dim(format!(
                            "concat combining matrix is {}x{}, needs {out_len}x{bo}",
                            w.rows(),
                            w.cols()
                        )));
                    }
                }
                check_bias(&c.bias, out_len, "concat")?;
                Ok(c.out_shape.clone())
            }
        }
    }

    /// Evaluates the layer.
    pub fn apply(&self, z: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(z.shape())?;
        match self {
            LayerSpec::Dense(d) => {
                let mut y = d.weight.matvec(z.data())?;
                if let Some(b) = &d.bias {
                    for (v, bv) in y.iter_mut().zip(b) {
                        *v += bv;
                    }
                }
                Tensor::new(out_shape, y)
            }
            LayerSpec::Conv2d(c) => conv2d(&c.kernel, c.bias.as_deref(), z, c.params),
            LayerSpec::AvgPool(p) => {
                let mut out = vec![0.0; out_shape.iter().product()];
                let area = (p.window[0] * p.window[1]) as f64;
                p.for_each_window(z.shape(), |o, idx| {
                    out[o] = idx.iter().map(|&i| z.data()[i]).sum::<f64>() / area;
                });
                Tensor::new(out_shape, out)
            }
            LayerSpec::MaxPool(p) => {
                let mut out = vec![0.0; out_shape.iter().product()];
                p.for_each_window(z.shape(), |o, idx| {
                    out[o] = z.data()[idx[argmax_window(z.data(), idx).0]];
                });
                Tensor::new(out_shape, out)
            }
            LayerSpec::Relu => Ok(z.map(|v| if v > 0.0 { v } else { 0.0 })),
            LayerSpec::Sigmoid => Ok(z.map(sigmoid)),
            LayerSpec::Tanh => Ok(z.map(f64::tanh)),
            LayerSpec::Flatten => z.clone().reshape(out_shape),
            LayerSpec::Residual(r) => {
                let inner = run_chain(&r.inner, z)?;
                let skip = match &r.skip {
                    Some(w) => w.matvec(z.data())?,
                    None => z.data().to_vec(),
                };
                let y = inner.data().iter().zip(&skip).map(|(a, b)| a + b).collect();
                Tensor::new(out_shape, y)
            }
            LayerSpec::Concat(c) => {
                let mut y = c.bias.clone().unwrap_or_else(|| vec![0.0; c.combine[0].rows()]);
                for (b, w) in c.branches.iter().zip(&c.combine) {
                    let zb = run_chain(b, z)?;
                    for (v, add) in y.iter_mut().zip(w.matvec(zb.data())?) {
                        *v += add;
                    }
                }
                Tensor::new(out_shape, y)
            }
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Position within `idx` of the window maximum (lowest position on ties) and whether
/// the maximum is tied.
pub(crate) fn argmax_window(data: &[f64], idx: &[usize]) -> (usize, bool) {
    let mut best = 0;
    let mut tie = false;
    for (p, &i) in idx.iter().enumerate().skip(1) {
        let v = data[i];
        let b = data[idx[best]];
        if v > b {
            best = p;
            tie = false;
        } else if v == b {
            tie = true;
        }
    }
    (best, tie)
}

/// Shapes `z_0 .. z_n` through a layer chain.
pub fn chain_shapes(layers: &[LayerSpec], in_shape: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut shapes = vec![in_shape.to_vec()];
    for (i, layer) in layers.iter().enumerate() {
        let next = layer
            .output_shape(shapes.last().expect("non-empty"))
            .map_err(|e| match e {
                Error::Dimension(m) => Error::Dimension(format!("layer {i} ({}): {m}", layer.kind())),
                other => other,
            })?;
        shapes.push(next);
    }
    Ok(shapes)
}

pub(crate) fn run_chain(layers: &[LayerSpec], x: &Tensor) -> Result<Tensor> {
    let mut z = x.clone();
    for layer in layers {
        z = layer.apply(&z)?;
    }
    Ok(z)
}
