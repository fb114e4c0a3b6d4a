//! Dense linear algebra: tensors, matrices, operator chains, thin SVD and convolution
//! matricization. Everything here works in `f64`.

mod conv;
mod matrix;
mod svd;
mod tensor;

pub use conv::{conv2d, conv2d_to_matrix, ConvGeometry, ConvParams};
pub use matrix::{chain_product, matmul, Matrix, Operator, DEFAULT_ELEMENT_BUDGET};
pub use svd::{thin_svd, SvdResult, DEFAULT_RANK_TOL};
pub use tensor::{dot, flat_index, max_abs, max_abs_diff, norm, Tensor};
