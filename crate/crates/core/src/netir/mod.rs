//! Network description, shape inference, sparse lowering and the plain
//! (unkeyed) forward pass.
//!
//! Tensors are vectorized channel-major, then row-major, then by column, and
//! every vector carries a trailing homogeneous `1`.

mod io;
mod lower;
pub mod zoo;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparsekit::{CooMatrix, DenseVector};

pub use io::MODEL_MANIFEST;
pub use lower::{lower_avgpool, lower_conv2d, lower_dense, lower_network};

/// Layer kinds rejected at load time because they do not commute with keys.
pub const REJECTED_LAYER_KINDS: &[&str] =
    &["maxpool", "max_pool", "softmax", "sigmoid", "tanh", "lrn"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub const fn flat(len: usize) -> Self {
        Shape::new(len, 1, 1)
    }

    /// Number of elements, excluding the homogeneous coordinate.
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    #[default]
    Zeros,
    Reflect,
    Replicate,
    Circular,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
        #[serde(default)]
        pad_mode: PadMode,
        #[serde(default)]
        has_bias: bool,
    },
    AvgPool {
        k: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    Dense {
        in_dim: usize,
        out_dim: usize,
        #[serde(default)]
        has_bias: bool,
    },
    Relu,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::AvgPool { .. } => "avg_pool",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
        }
    }

    pub fn is_relu(&self) -> bool {
        matches!(self, LayerSpec::Relu)
    }

    /// Expected `(kernel, bias)` parameter counts.
    pub fn param_counts(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kh,
                kw,
                has_bias,
                ..
            } => (out_ch * in_ch * kh * kw, if has_bias { out_ch } else { 0 }),
            LayerSpec::Dense {
                in_dim,
                out_dim,
                has_bias,
            } => (out_dim * in_dim, if has_bias { out_dim } else { 0 }),
            LayerSpec::AvgPool { .. } | LayerSpec::Relu => (0, 0),
        }
    }

    /// Output shape for input `input`.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kh,
                kw,
                stride,
                pad,
                ..
            } => {
                if kh == 0 || kw == 0 || stride == 0 || in_ch == 0 || out_ch == 0 {
                    return Err(Error::Parameter("conv2d dims and stride must be >= 1".into()));
                }
                if input.channels != in_ch {
                    return Err(Error::shape("conv2d input channels", in_ch, input.channels));
                }
                let (h, w) = (input.height + 2 * pad, input.width + 2 * pad);
                if kh > h || kw > w {
                    return Err(Error::shape(
                        "conv2d kernel extent",
                        format!("kernel within padded {h}x{w}"),
                        format!("{kh}x{kw}"),
                    ));
                }
                Ok(Shape::new(out_ch, (h - kh) / stride + 1, (w - kw) / stride + 1))
            }
            LayerSpec::AvgPool { k, stride } => {
                if k == 0 || stride == 0 {
                    return Err(Error::Parameter("avg_pool window and stride must be >= 1".into()));
                }
                if k > input.height || k > input.width {
                    return Err(Error::shape(
                        "avg_pool window",
                        format!("window within {}x{}", input.height, input.width),
                        format!("{k}x{k}"),
                    ));
                }
                Ok(Shape::new(
                    input.channels,
                    (input.height - k) / stride + 1,
                    (input.width - k) / stride + 1,
                ))
            }
            LayerSpec::Dense { in_dim, out_dim, .. } => {
                if input.len() != in_dim {
                    return Err(Error::shape("dense input", in_dim, input.len()));
                }
                if out_dim == 0 {
                    return Err(Error::Parameter("dense out_dim must be >= 1".into()));
                }
                Ok(Shape::flat(out_dim))
            }
            LayerSpec::Relu => Ok(input),
        }
    }
}

/// Parameters of one layer: kernel in `[out][in][kh][kw]` (conv) or
/// `[out][in]` (dense) row-major order, and an optional bias.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerWeights {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kernel: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(flatten)]
    pub spec: LayerSpec,
    #[serde(flatten)]
    pub weights: LayerWeights,
}

impl Layer {
    pub fn relu() -> Self {
        Layer {
            spec: LayerSpec::Relu,
            weights: LayerWeights::default(),
        }
    }

    pub fn avg_pool(k: usize, stride: usize) -> Self {
        Layer {
            spec: LayerSpec::AvgPool { k, stride },
            weights: LayerWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDef {
    pub input_shape: Shape,
    pub layers: Vec<Layer>,
}

impl NetworkDef {
    /// Runs shape inference and parameter-count checks, returning the shape
    /// at every layer boundary (`layers.len() + 1` entries).
    pub fn boundary_shapes(&self) -> Result<Vec<Shape>> {
        if self.input_shape.is_empty() {
            return Err(Error::Parameter("empty input shape".into()));
        }
        let mut shapes = vec![self.input_shape];
        for (i, layer) in self.layers.iter().enumerate() {
            let (nk, nb) = layer.spec.param_counts();
            if layer.weights.kernel.len() != nk {
                return Err(Error::Shape {
                    context: "layer kernel",
                    expected: format!("{nk} values for layer {i} ({})", layer.spec.kind()),
                    found: layer.weights.kernel.len().to_string(),
                });
            }
            if layer.weights.bias.len() != nb {
                return Err(Error::Shape {
                    context: "layer bias",
                    expected: format!("{nb} values for layer {i} ({})", layer.spec.kind()),
                    found: layer.weights.bias.len().to_string(),
                });
            }
            let next = layer.spec.output_shape(*shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(*self.boundary_shapes()?.last().unwrap())
    }
}

/// Row-major image tensor in channel-major storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape("Tensor3::new", shape.len(), data.len()));
        }
        Ok(Tensor3 { shape, data })
    }

    /// Builds a tensor from nested `[channel][row][col]` vectors.
    pub fn from_nested(channels: &[Vec<Vec<f64>>]) -> Result<Self> {
        let c = channels.len();
        let h = channels.first().map_or(0, Vec::len);
        let w = channels.first().and_then(|ch| ch.first()).map_or(0, Vec::len);
        let mut data = Vec::with_capacity(c * h * w);
        for ch in channels {
            if ch.len() != h {
                return Err(Error::shape("Tensor3::from_nested rows", h, ch.len()));
            }
            for row in ch {
                if row.len() != w {
                    return Err(Error::shape("Tensor3::from_nested cols", w, row.len()));
                }
                data.extend_from_slice(row);
            }
        }
        Tensor3::new(Shape::new(c, h, w), data)
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }
}

/// Flattens `image` and appends the homogeneous coordinate.
pub fn vectorize(image: &Tensor3) -> DenseVector {
    let mut v = Vec::with_capacity(image.data.len() + 1);
    v.extend_from_slice(&image.data);
    v.push(1.0);
    v
}

/// Checked variant of [`vectorize`] that enforces an expected input shape.
pub fn vectorize_as(image: &Tensor3, expected: Shape) -> Result<DenseVector> {
    if image.shape != expected {
        return Err(Error::shape("vectorize", expected, image.shape));
    }
    Ok(vectorize(image))
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &[f64], shape: Shape) -> Result<Tensor3> {
    if v.len() != shape.len() + 1 {
        return Err(Error::shape("devectorize", shape.len() + 1, v.len()));
    }
    if v[shape.len()] != 1.0 {
        return Err(Error::Contract(format!(
            "devectorize: homogeneous coordinate is {}",
            v[shape.len()]
        )));
    }
    Tensor3::new(shape, v[..shape.len()].to_vec())
}

/// ReLU on every element except the trailing homogeneous coordinate.
pub fn relu_homogeneous(v: &mut [f64]) {
    if let Some((_, body)) = v.split_last_mut() {
        for x in body {
            *x = if *x > 0.0 { *x } else { 0.0 };
        }
    }
}

/// Affine-augmented sparse layer `[W b; 0 1]` acting on `[x; 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffine {
    pub matrix: CooMatrix,
    pub in_shape: Shape,
    pub out_shape: Shape,
}

impl SparseAffine {
    pub fn new(matrix: CooMatrix, in_shape: Shape, out_shape: Shape) -> Result<Self> {
        if matrix.rows() != out_shape.len() + 1 || matrix.cols() != in_shape.len() + 1 {
            return Err(Error::shape(
                "SparseAffine::new",
                format!("{}x{}", out_shape.len() + 1, in_shape.len() + 1),
                format!("{}x{}", matrix.rows(), matrix.cols()),
            ));
        }
        let last = out_shape.len();
        let (c, v) = matrix.row(last);
        if c != [in_shape.len()] || v != [1.0] {
            return Err(Error::Contract("affine matrix last row is not [0 ... 0 1]".into()));
        }
        Ok(SparseAffine {
            matrix,
            in_shape,
            out_shape,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_shape.len()
    }

    pub fn out_dim(&self) -> usize {
        self.out_shape.len()
    }

    /// Non-augmented `out_dim x in_dim` block.
    pub fn linear_block(&self) -> CooMatrix {
        self.matrix.leading_block(self.out_dim(), self.in_dim())
    }

    pub fn apply(&self, x: &[f64]) -> Result<DenseVector> {
        self.matrix.matvec(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoweredLayer {
    Affine(SparseAffine),
    Relu(Shape),
}

impl LoweredLayer {
    pub fn in_shape(&self) -> Shape {
        match self {
            LoweredLayer::Affine(a) => a.in_shape,
            LoweredLayer::Relu(s) => *s,
        }
    }

    pub fn out_shape(&self) -> Shape {
        match self {
            LoweredLayer::Affine(a) => a.out_shape,
            LoweredLayer::Relu(s) => *s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoweredNetwork {
    pub input_shape: Shape,
    pub output_shape: Shape,
    pub layers: Vec<LoweredLayer>,
}

impl LoweredNetwork {
    /// Shape at each boundary, input first.
    pub fn boundary_shapes(&self) -> Vec<Shape> {
        std::iter::once(self.input_shape)
            .chain(self.layers.iter().map(LoweredLayer::out_shape))
            .collect()
    }

    /// Plain forward pass on a homogeneous input.
    pub fn forward(&self, x: &[f64]) -> Result<DenseVector> {
        Ok(self.forward_trace(x)?.pop().unwrap())
    }

    /// Activations at every boundary, input included.
    pub fn forward_trace(&self, x: &[f64]) -> Result<Vec<DenseVector>> {
        check_homogeneous(x, self.input_shape, "plain_forward")?;
        let mut acts = vec![x.to_vec()];
        for layer in &self.layers {
            let cur = acts.last().unwrap();
            if cur.len() != layer.in_shape().len() + 1 {
                return Err(Error::shape("plain_forward layer input", layer.in_shape().len() + 1, cur.len()));
            }
            let next = match layer {
                LoweredLayer::Affine(a) => a.apply(cur)?,
                LoweredLayer::Relu(_) => {
                    let mut v = cur.clone();
                    relu_homogeneous(&mut v);
                    v
                }
            };
            acts.push(next);
        }
        Ok(acts)
    }

    /// Product of all affine layers; only defined for ReLU-free networks.
    pub fn compose_linear(&self) -> Result<CooMatrix> {
        let mut acc = CooMatrix::identity(self.input_shape.len() + 1);
        for layer in &self.layers {
            match layer {
                LoweredLayer::Affine(a) => acc = a.matrix.matmul(&acc)?,
                LoweredLayer::Relu(_) => {
                    return Err(Error::Contract("network contains ReLU; not a single matrix".into()))
                }
            }
        }
        Ok(acc)
    }
}

/// Plain forward pass; see [`LoweredNetwork::forward`].
pub fn plain_forward(net: &LoweredNetwork, x: &[f64]) -> Result<DenseVector> {
    net.forward(x)
}

pub(crate) fn check_homogeneous(x: &[f64], shape: Shape, context: &'static str) -> Result<()> {
    if x.len() != shape.len() + 1 {
        return Err(Error::shape(context, shape.len() + 1, x.len()));
    }
    if x[shape.len()] != 1.0 {
        return Err(Error::Contract(format!(
            "{context}: homogeneous coordinate is {}, expected 1",
            x[shape.len()]
        )));
    }
    Ok(())
}
