//! Layer vocabulary of locally linear networks, forward evaluation, and the
//! input-dependent affine form of each layer.

mod layers;
mod linearize;
mod model;

pub use layers::{chain_shapes, Concat, Conv2d, Dense, LayerSpec, Pool, Residual};
pub use linearize::{
    layer_signature, linearize_layer, linearize_layers, ActivationSignature, ChainLinearization, Indicator,
    LayerLinearization, LinearizeOptions, SignatureEntry, SmoothMode,
};
pub use model::NetworkModel;
