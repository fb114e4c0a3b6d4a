//! 2-D convolution on channels-last (`[H, W, C]`) tensors and its explicit Toeplitz
//! matricization. Kernels are laid out `[KH, KW, C_in, C_out]`.

use super::{Matrix, Tensor};
use crate::error::{Error, Result};

/// Stride, zero padding and dilation of a 2-D convolution, as `[height, width]` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub stride: [usize; 2],
    pub padding: [usize; 2],
    pub dilation: [usize; 2],
}

impl Default for ConvParams {
    fn default() -> Self {
        ConvParams {
            stride: [1, 1],
            padding: [0, 0],
            dilation: [1, 1],
        }
    }
}

/// Resolved sizes of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub params: ConvParams,
}

fn out_len(input: usize, kernel: usize, stride: usize, pad: usize, dil: usize) -> Result<usize> {
    if stride == 0 || dil == 0 {
        return Err(Error::dim("stride and dilation must be positive"));
    }
    let span = dil * (kernel - 1) + 1;
    let padded = input + 2 * pad;
    if span > padded {
        return Err(Error::dim(format!(
            "kernel span {span} exceeds padded input extent {padded}"
        )));
    }
    Ok((padded - span) / stride + 1)
}

impl ConvGeometry {
    pub fn new(kernel_shape: &[usize], in_shape: &[usize], params: ConvParams) -> Result<Self> {
        let [k_h, k_w, k_c, out_c] = match kernel_shape {
            &[a, b, c, d] => [a, b, c, d],
            _ => {
                return Err(Error::dim(format!(
                    "kernel shape {kernel_shape:?} is not [KH,KW,Cin,Cout]"
                )))
            }
        };
        let [in_h, in_w, in_c] = match in_shape {
            &[a, b, c] => [a, b, c],
            _ => return Err(Error::dim(format!("conv input shape {in_shape:?} is not [H,W,C]"))),
        };
        if k_c != in_c {
            return Err(Error::dim(format!(
                "kernel expects {k_c} input channels, input has {in_c}"
            )));
        }
        let out_h = out_len(in_h, k_h, params.stride[0], params.padding[0], params.dilation[0])?;
        let out_w = out_len(in_w, k_w, params.stride[1], params.padding[1], params.dilation[1])?;
        Ok(ConvGeometry {
            in_h,
            in_w,
            in_c,
            k_h,
            k_w,
            out_c,
            out_h,
            out_w,
            params,
        })
    }

    pub fn out_shape(&self) -> [usize; 3] {
        [self.out_h, self.out_w, self.out_c]
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w * self.out_c
    }

    /// Calls `f(out_row, in_col, kernel_offset)` for every kernel tap that lands inside
    /// the unpadded input, where `kernel_offset` indexes `[kh, kw, ci, 0]`.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let p = self.params;
        for oh in 0..self.out_h {
            for ow in 0..self.out_w {
                for kh in 0..self.k_h {
                    let ih = (oh * p.stride[0] + kh * p.dilation[0]) as isize - p.padding[0] as isize;
                    if ih < 0 || ih >= self.in_h as isize {
                        continue;
                    }
                    for kw in 0..self.k_w {
                        let iw = (ow * p.stride[1] + kw * p.dilation[1]) as isize - p.padding[1] as isize;
                        if iw < 0 || iw >= self.in_w as isize {
                            continue;
                        }
                        let out_base = (oh * self.out_w + ow) * self.out_c;
                        let in_base = (ih as usize * self.in_w + iw as usize) * self.in_c;
                        for ci in 0..self.in_c {
                            let k_base = ((kh * self.k_w + kw) * self.in_c + ci) * self.out_c;
                            f(out_base, in_base + ci, k_base);
                        }
                    }
                }
            }
        }
    }
}

/// Direct convolution; `bias` (one per output channel) is optional.
pub fn conv2d(kernel: &Tensor, bias: Option<&[f64]>, input: &Tensor, params: ConvParams) -> Result<Tensor> {
    let g = ConvGeometry::new(kernel.shape(), input.shape(), params)?;
    let mut out = vec![0.0; g.out_len()];
    let (k, x) = (kernel.data(), input.data());
    g.for_each_tap(|out_base, in_idx, k_base| {
        let xv = x[in_idx];
        for co in 0..g.out_c {
            out[out_base + co] += k[k_base + co] * xv;
        }
    });
    if let Some(b) = bias {
        if b.len() != g.out_c {
            return Err(Error::dim("conv bias length differs from output channels"));
        }
        for px in out.chunks_mut(g.out_c) {
            for (o, bv) in px.iter_mut().zip(b) {
                *o += bv;
            }
        }
    }
    Tensor::new(g.out_shape().to_vec(), out)
}

/// Explicit `(H' W' C') x (H W C)` matrix of the convolution, so that
/// `matrix * flatten(z) == flatten(conv(z))`.
pub fn conv2d_to_matrix(
    kernel: &Tensor,
    in_shape: &[usize],
    params: ConvParams,
    element_budget: usize,
) -> Result<Matrix> {
    let g = ConvGeometry::new(kernel.shape(), in_shape, params)?;
    let needed = g.out_len() * g.in_len();
    if needed > element_budget {
        return Err(Error::Resource {
            what: "conv2d Toeplitz matrix".into(),
            needed,
            budget: element_budget,
        });
    }
    let mut m = Matrix::zeros(g.out_len(), g.in_len());
    let cols = g.in_len();
    let k = kernel.data();
    let data = m.data_mut();
    g.for_each_tap(|out_base, in_idx, k_base| {
        for co in 0..g.out_c {
            data[(out_base + co) * cols + in_idx] += k[k_base + co];
        }
    });
    Ok(m)
}
