use super::layers::{chain_shapes, LayerSpec};
use super::linearize::{chain_signature, linearize_layers, ActivationSignature, ChainLinearization, LinearizeOptions};
use crate::error::{Error, Result};
use crate::linalg::Tensor;

/// A locally linear network: an input shape and an ordered chain of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
}

impl NetworkModel {
    pub fn new(name: impl Into<String>, input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::dim("a model needs at least one layer"));
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::dim(format!("invalid input shape {input_shape:?}")));
        }
        let shapes = chain_shapes(&layers, &input_shape)?;
        Ok(NetworkModel {
            name: name.into(),
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("validated")
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Number of layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Shapes of `z_0 .. z_L`.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::dim(format!(
                "input shape {:?} does not match model input {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// All representations `z_0 = x, z_1, .., z_L = y`.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let mut zs = Vec::with_capacity(self.layers.len() + 1);
        zs.push(x.clone());
        for layer in &self.layers {
            let next = layer.apply(zs.last().expect("non-empty"))?;
            zs.push(next);
        }
        Ok(zs)
    }

    /// Network output `f(x)`.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.pop().expect("non-empty"))
    }

    /// Concatenated indicator states of all piecewise-linear units at `x`.
    pub fn activation_pattern(&self, x: &Tensor) -> Result<ActivationSignature> {
        self.check_input(x)?;
        Ok(chain_signature(&self.layers, x)?.0)
    }

    /// Every layer's affine form at `x`.
    pub fn linearize(&self, x: &Tensor, opts: &LinearizeOptions) -> Result<ChainLinearization> {
        self.check_input(x)?;
        linearize_layers(&self.layers, x, opts)
    }
}
