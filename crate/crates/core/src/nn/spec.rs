use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel-major tensor shape of one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape { channels, height, width }
    }

    pub const fn flat(len: usize) -> Self {
        Shape { channels: len, height: 1, width: 1 }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Cnn,
}

/// One stage of a sequential network.
///
/// Dense weights are stored input-major (`in_dim × out_dim`), convolution
/// kernels as `out_channels × in_channels × kernel_h × kernel_w`; each
/// parametric layer's bias follows its weights. Convolutions are stride 1
/// without padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Dense { in_dim: usize, out_dim: usize },
    Conv { in_channels: usize, out_channels: usize, kernel_h: usize, kernel_w: usize },
    MaxPool { window: usize },
    Relu,
}

impl Layer {
    pub fn weight_count(&self) -> usize {
        match *self {
            Layer::Dense { in_dim, out_dim } => in_dim * out_dim,
            Layer::Conv { in_channels, out_channels, kernel_h, kernel_w } => {
                out_channels * in_channels * kernel_h * kernel_w
            }
            Layer::MaxPool { .. } | Layer::Relu => 0,
        }
    }

    pub fn bias_count(&self) -> usize {
        match *self {
            Layer::Dense { out_dim, .. } => out_dim,
            Layer::Conv { out_channels, .. } => out_channels,
            Layer::MaxPool { .. } | Layer::Relu => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    /// Fan-in and fan-out used for Glorot scaling.
    pub(crate) fn fans(&self) -> (usize, usize) {
        match *self {
            Layer::Dense { in_dim, out_dim } => (in_dim, out_dim),
            Layer::Conv { in_channels, out_channels, kernel_h, kernel_w } => {
                let k = kernel_h * kernel_w;
                (in_channels * k, out_channels * k)
            }
            Layer::MaxPool { .. } | Layer::Relu => (0, 0),
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            Layer::Dense { in_dim, out_dim } => {
                if input.len() != in_dim {
                    return Err(Error::layout(format!(
                        "dense layer expects {in_dim} inputs, previous stage yields {}",
                        input.len()
                    )));
                }
                Ok(Shape::flat(out_dim))
            }
            Layer::Conv { in_channels, out_channels, kernel_h, kernel_w } => {
                if input.channels != in_channels {
                    return Err(Error::layout(format!(
                        "conv layer expects {in_channels} channels, got {}",
                        input.channels
                    )));
                }
                if kernel_h == 0 || kernel_w == 0 || kernel_h > input.height || kernel_w > input.width {
                    return Err(Error::layout(format!(
                        "conv kernel {kernel_h}x{kernel_w} does not fit input {}x{}",
                        input.height, input.width
                    )));
                }
                Ok(Shape::new(out_channels, input.height - kernel_h + 1, input.width - kernel_w + 1))
            }
            Layer::MaxPool { window } => {
                if window == 0 || input.height < window || input.width < window {
                    return Err(Error::layout(format!(
                        "pool window {window} does not fit input {}x{}",
                        input.height, input.width
                    )));
                }
                Ok(Shape::new(input.channels, input.height / window, input.width / window))
            }
            Layer::Relu => Ok(input),
        }
    }
}

/// Offsets of one layer's parameters inside a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerParams {
    pub weights: Range<usize>,
    pub bias: Range<usize>,
}

/// Architecture descriptor. Construction validates that consecutive layers fit
/// together and that the last stage produces one logit per class.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    kind: ModelKind,
    layers: Vec<Layer>,
    input_shape: Shape,
    num_classes: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, input_shape: Shape, layers: Vec<Layer>, num_classes: usize) -> Result<Self> {
        if input_shape.is_empty() {
            return Err(Error::layout("empty input shape"));
        }
        if num_classes < 2 {
            return Err(Error::layout("need at least two classes"));
        }
        let mut shape = input_shape;
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(shape).map_err(|e| match e {
                Error::Layout(msg) => Error::Layout(format!("layer {i}: {msg}")),
                other => other,
            })?;
        }
        if shape.len() != num_classes {
            return Err(Error::layout(format!(
                "network emits {} values but there are {num_classes} classes",
                shape.len()
            )));
        }
        Ok(ModelSpec { kind, layers, input_shape, num_classes })
    }

    /// Dense network with ReLU after every hidden layer.
    pub fn mlp(input_dim: usize, hidden: &[usize], num_classes: usize) -> Result<Self> {
        let mut layers = Vec::new();
        let mut width = input_dim;
        for &h in hidden {
            layers.push(Layer::Dense { in_dim: width, out_dim: h });
            layers.push(Layer::Relu);
            width = h;
        }
        layers.push(Layer::Dense { in_dim: width, out_dim: num_classes });
        ModelSpec::new(ModelKind::Mlp, Shape::flat(input_dim), layers, num_classes)
    }

    /// 784→200→10 with a ReLU hidden layer.
    pub fn mnist_mlp() -> Self {
        ModelSpec::mlp(784, &[200], 10).expect("static architecture")
    }

    /// conv(1→10,5×5) → pool 2 → ReLU → conv(10→20,5×5) → pool 2 → ReLU →
    /// dense(320→50) → ReLU → dense(50→10).
    pub fn mnist_cnn() -> Self {
        let layers = vec![
            Layer::Conv { in_channels: 1, out_channels: 10, kernel_h: 5, kernel_w: 5 },
            Layer::MaxPool { window: 2 },
            Layer::Relu,
            Layer::Conv { in_channels: 10, out_channels: 20, kernel_h: 5, kernel_w: 5 },
            Layer::MaxPool { window: 2 },
            Layer::Relu,
            Layer::Dense { in_dim: 320, out_dim: 50 },
            Layer::Relu,
            Layer::Dense { in_dim: 50, out_dim: 10 },
        ];
        ModelSpec::new(ModelKind::Cnn, Shape::new(1, 28, 28), layers, 10).expect("static architecture")
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Input shape of every layer followed by the final output shape.
    pub fn shapes(&self) -> Vec<Shape> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut shape = self.input_shape;
        shapes.push(shape);
        for layer in &self.layers {
            shape = layer.output_shape(shape).expect("validated at construction");
            shapes.push(shape);
        }
        shapes
    }

    /// Parameter offsets for each layer, in layer order. Non-parametric layers
    /// get empty ranges.
    pub fn param_layout(&self) -> Vec<LayerParams> {
        let mut offset = 0;
        self.layers
            .iter()
            .map(|layer| {
                let weights = offset..offset + layer.weight_count();
                let bias = weights.end..weights.end + layer.bias_count();
                offset = bias.end;
                LayerParams { weights, bias }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnist_mlp_param_count() {
        assert_eq!(ModelSpec::mnist_mlp().param_count(), 784 * 200 + 200 + 200 * 10 + 10);
        assert_eq!(ModelSpec::mnist_mlp().param_count(), 159_010);
    }

    #[test]
    fn mnist_cnn_shapes() {
        let spec = ModelSpec::mnist_cnn();
        let shapes = spec.shapes();
        assert_eq!(shapes[1], Shape::new(10, 24, 24));
        assert_eq!(shapes[2], Shape::new(10, 12, 12));
        assert_eq!(shapes[4], Shape::new(20, 8, 8));
        assert_eq!(shapes[5], Shape::new(20, 4, 4));
        let expected = (10 * 25 + 10) + (20 * 10 * 25 + 20) + (320 * 50 + 50) + (50 * 10 + 10);
        assert_eq!(spec.param_count(), expected);
    }

    #[test]
    fn incompatible_layers_rejected() {
        let bad = ModelSpec::new(ModelKind::Mlp, Shape::flat(4), vec![Layer::Dense { in_dim: 5, out_dim: 3 }], 3);
        assert!(matches!(bad, Err(Error::Layout(_))));

        let wrong_classes = ModelSpec::mlp(4, &[3], 2).unwrap();
        assert_eq!(wrong_classes.num_classes(), 2);
        let mismatch = ModelSpec::new(ModelKind::Mlp, Shape::flat(4), vec![Layer::Dense { in_dim: 4, out_dim: 3 }], 2);
        assert!(mismatch.is_err());
    }

    #[test]
    fn layout_ranges_tile_the_vector() {
        let spec = ModelSpec::mnist_cnn();
        let layout = spec.param_layout();
        let mut end = 0;
        for lp in &layout {
            assert_eq!(lp.weights.start, end);
            assert_eq!(lp.bias.start, lp.weights.end);
            end = lp.bias.end;
        }
        assert_eq!(end, spec.param_count());
    }
}
