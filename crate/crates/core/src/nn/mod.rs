//! Minimal CNN inference on top of the quantized product.
//!
//! Tensors are channel-major (`data[c * h * w + y * w + x]`). Convolutions
//! are bias-free, padding-free, and lowered to matrix products via im2col:
//! the weight matrix is `filters x (c * kh * kw)` and each im2col column is
//! one receptive field flattened channel-major, so row `c * kh * kw +
//! ky * kw + kx` of the column matrix pairs with the same weight index.
//!
//! A network mixes float and quantized convolution layers. Activations cross
//! the boundary in four ways:
//!
//! * float -> float layer: plain arithmetic;
//! * float -> quantized layer: the input is quantized on the fly
//!   (per-tensor, dynamic range);
//! * quantized -> quantized layer: the integer activation is requantized to
//!   operand width and its scale keeps riding along as a multiplier;
//! * quantized -> float layer: the integer activation is converted once by
//!   its scale.
//!
//! Because quantized results carry zero-point 0, ReLU can be applied to the
//! integer activation directly; it commutes exactly with dequantization.
//! SoftMax only ever runs on float logits of the final fully-connected layer.

pub mod io;

use std::time::{Duration, Instant};

use crate::error::Error;
use crate::pack::{pack_lhs, PackedLhs};
use crate::qgemm::{max_safe_depth, qgemm, qgemm_prepacked, AccumulatorMode, CorrectedResult, GemmConfig};
use crate::quant::{compute_quant_params, quantize_values, QuantizedMatrix};

/// Dense channel-major f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Tensor, Error> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch { expected: channels * height * width, actual: data.len() });
        }
        Ok(Tensor { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Tensor {
        Tensor { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Integer activation of a quantized layer: exact corrected-product values
/// (zero-point 0) plus the scale that converts them to real numbers.
///
/// Values are exact in i32; with 16-bit lanes they stay within +-65535, but
/// the extended lane range already exceeds i16, so the wider storage keeps
/// every mode lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledActivation {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<i32>,
    pub scale: f32,
}

impl ScaledActivation {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    /// The quantized -> float transition: multiply through by the scale.
    pub fn dequantize(&self) -> Tensor {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| v as f32 * self.scale).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softmax,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Convolution computed on quantized operands.
    QConv,
    /// Convolution computed in f32.
    FConv,
    /// Fully-connected layer, always f32.
    Fc,
}

/// One layer. `weights` are row-major `filters x (in_c * kh * kw)` for
/// convolutions (filter-major, then channel, then kernel row, then column)
/// and `neurons x flattened_input` for fully-connected layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub filters: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub activation: Activation,
    pub weights: Vec<f32>,
}

impl LayerSpec {
    pub fn qconv(
        filters: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        activation: Activation,
        weights: Vec<f32>,
    ) -> LayerSpec {
        LayerSpec { kind: LayerKind::QConv, filters, kernel, stride, activation, weights }
    }

    pub fn fconv(
        filters: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        activation: Activation,
        weights: Vec<f32>,
    ) -> LayerSpec {
        LayerSpec { kind: LayerKind::FConv, filters, kernel, stride, activation, weights }
    }

    pub fn fc(neurons: usize, activation: Activation, weights: Vec<f32>) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::Fc,
            filters: neurons,
            kernel: (1, 1),
            stride: (1, 1),
            activation,
            weights,
        }
    }
}

/// Output height/width of a padding-free convolution:
/// `(in - kernel) / stride + 1` per axis.
pub fn conv_output_hw(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
) -> Result<(usize, usize), Error> {
    assert!(sh >= 1 && sw >= 1, "stride must be at least 1");
    assert!(kh >= 1 && kw >= 1, "kernel must be at least 1x1");
    if kh > h || kw > w {
        return Err(Error::KernelLargerThanInput { kernel: (kh, kw), input: (h, w) });
    }
    Ok(((h - kh) / sh + 1, (w - kw) / sw + 1))
}

fn im2col_map<T: Copy + Default>(
    data: &[T],
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let depth = channels * kh * kw;
    let cols = out_h * out_w;
    let mut out = vec![T::default(); depth * cols];
    for c in 0..channels {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..out_h {
                    let src_row = (c * h + oy * sh + ky) * w + kx;
                    for ox in 0..out_w {
                        dst[oy * out_w + ox] = data[src_row + ox * sw];
                    }
                }
            }
        }
    }
    out
}

/// Lower a tensor to the im2col column matrix. Returns the row-major
/// `depth x cols` data with `depth = channels * kh * kw` and one column per
/// output position (row-major over output rows).
pub fn im2col(
    input: &Tensor,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
) -> Result<(Vec<f32>, usize, usize), Error> {
    let (out_h, out_w) = conv_output_hw(input.height, input.width, kh, kw, sh, sw)?;
    let data = im2col_map(&input.data, input.channels, input.height, input.width, kh, kw, sh, sw, out_h, out_w);
    Ok((data, input.channels * kh * kw, out_h * out_w))
}

/// SoftMax over a logit slice.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f32> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f32 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

fn apply_float_activation(layer_index: usize, activation: Activation, data: &mut Vec<f32>) -> Result<(), Error> {
    match activation {
        Activation::Relu => data.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::None => {}
        Activation::Softmax => {
            if data.is_empty() {
                return Err(Error::InvalidLayer { layer: layer_index, reason: "softmax over no logits".into() });
            }
            *data = softmax(data);
        }
    }
    Ok(())
}

/// Run a convolution layer in f32. Works for both conv kinds; this is also
/// the reference a quantized layer approximates.
pub fn float_conv_forward(layer: &LayerSpec, input: &Tensor) -> Result<Tensor, Error> {
    if layer.kind == LayerKind::Fc {
        return Err(Error::InvalidLayer { layer: 0, reason: "fully-connected layer passed to a convolution".into() });
    }
    if layer.activation == Activation::Softmax {
        return Err(Error::InvalidLayer { layer: 0, reason: "softmax is only valid on a fully-connected layer".into() });
    }
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let depth = input.channels * kh * kw;
    if layer.weights.len() != layer.filters * depth {
        return Err(Error::WeightCountMismatch {
            layer: 0,
            expected: layer.filters * depth,
            actual: layer.weights.len(),
        });
    }
    let (out_h, out_w) = conv_output_hw(input.height, input.width, kh, kw, sh, sw)?;
    let (cols, d, n) = im2col(input, kh, kw, sh, sw)?;
    let mut out = vec![0.0f32; layer.filters * n];
    for f in 0..layer.filters {
        let row = &mut out[f * n..(f + 1) * n];
        for k in 0..d {
            let wv = layer.weights[f * d + k];
            let col_row = &cols[k * n..(k + 1) * n];
            for (o, &v) in row.iter_mut().zip(col_row) {
                *o += wv * v;
            }
        }
    }
    let mut data = out;
    apply_float_activation(0, layer.activation, &mut data)?;
    Tensor::new(layer.filters, out_h, out_w, data)
}

/// Run a fully-connected layer on the flattened (channel-major) input.
pub fn fc_forward(layer: &LayerSpec, input: &Tensor) -> Result<Tensor, Error> {
    if layer.kind != LayerKind::Fc {
        return Err(Error::InvalidLayer { layer: 0, reason: "convolution layer passed to fc_forward".into() });
    }
    let flat = input.data.len();
    if layer.weights.len() != layer.filters * flat {
        return Err(Error::WeightCountMismatch {
            layer: 0,
            expected: layer.filters * flat,
            actual: layer.weights.len(),
        });
    }
    let mut logits = vec![0.0f32; layer.filters];
    for (o, logit) in logits.iter_mut().enumerate() {
        let row = &layer.weights[o * flat..(o + 1) * flat];
        *logit = row.iter().zip(&input.data).map(|(&w, &v)| w * v).sum();
    }
    apply_float_activation(0, layer.activation, &mut logits)?;
    Tensor::new(layer.filters, 1, 1, logits)
}

/// Input to a quantized convolution: a float tensor (quantized on the fly)
/// or the integer activation of a previous quantized layer (requantized,
/// with its scale carried through).
#[derive(Debug, Clone, Copy)]
pub enum ConvInput<'a> {
    Float(&'a Tensor),
    Quantized(&'a ScaledActivation),
}

impl ConvInput<'_> {
    fn shape(&self) -> (usize, usize, usize) {
        match self {
            ConvInput::Float(t) => t.shape(),
            ConvInput::Quantized(a) => a.shape(),
        }
    }
}

/// Which engine computes the first term of quantized convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GemmBackend {
    /// Packed panels and 16-bit-lane micro-kernels (i32 for 8-bit operands).
    #[default]
    Packed,
    /// Straight i32 triple loop over the quantized operands. Same numbers,
    /// no packing — kept as a comparison engine.
    NaiveI32,
}

/// Quantized weights of one convolution layer, packed once at build time.
#[derive(Debug, Clone)]
struct PreparedConv {
    weights: QuantizedMatrix,
    /// Present at 4-bit; the 8-bit path multiplies unpacked.
    packed: Option<PackedLhs>,
}

impl PreparedConv {
    fn build(layer: &LayerSpec, in_channels: usize, bits: u8) -> Result<PreparedConv, Error> {
        let depth = in_channels * layer.kernel.0 * layer.kernel.1;
        let params = compute_quant_params(&layer.weights, bits)?;
        let weights = QuantizedMatrix::from_parts(
            layer.filters,
            depth,
            quantize_values(&layer.weights, &params),
            params,
        )?;
        let packed = if bits == 4 {
            let kernel_height = if layer.filters >= 24 { 24 } else { 8 };
            Some(pack_lhs(&weights, kernel_height)?)
        } else {
            None
        };
        Ok(PreparedConv { weights, packed })
    }
}

/// Exact `(w - z_w)(x - z_x)` product in i32, no packing. The comparison
/// engine behind [`GemmBackend::NaiveI32`].
fn naive_quantized_gemm(w: &QuantizedMatrix, x: &QuantizedMatrix) -> CorrectedResult {
    let z_w = w.params().zero_point as i32;
    let z_x = x.params().zero_point as i32;
    let (m, d, n) = (w.rows(), w.cols(), x.cols());
    let mut values = vec![0i32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0i32;
            for k in 0..d {
                acc += (w.get(i, k) as i32 - z_w) * (x.get(k, j) as i32 - z_x);
            }
            values[i * n + j] = acc;
        }
    }
    CorrectedResult { rows: m, cols: n, values, result_scale: w.params().scale * x.params().scale }
}

fn run_prepared_conv(
    prep: &PreparedConv,
    layer: &LayerSpec,
    input: ConvInput<'_>,
    bits: u8,
    mode: AccumulatorMode,
    backend: GemmBackend,
) -> Result<ScaledActivation, Error> {
    let (channels, h, w) = input.shape();
    let (levels, carried_scale, x_params) = match input {
        ConvInput::Float(t) => {
            let params = compute_quant_params(&t.data, bits)?;
            (quantize_values(&t.data, &params), 1.0f32, params)
        }
        ConvInput::Quantized(a) => {
            let floats: Vec<f32> = a.data.iter().map(|&v| v as f32).collect();
            let params = compute_quant_params(&floats, bits)?;
            (quantize_values(&floats, &params), a.scale, params)
        }
    };
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let (out_h, out_w) = conv_output_hw(h, w, kh, kw, sh, sw)?;
    let col_data = im2col_map(&levels, channels, h, w, kh, kw, sh, sw, out_h, out_w);
    let x = QuantizedMatrix::from_parts(channels * kh * kw, out_h * out_w, col_data, x_params)?;

    let result = match backend {
        GemmBackend::Packed => {
            if bits == 4 {
                let packed = prep.packed.as_ref().expect("4-bit prepared conv has a packed matrix");
                let config = GemmConfig {
                    kernel_height: packed.kernel_height(),
                    accumulator_mode: mode,
                    bits,
                    unchecked: false,
                };
                qgemm_prepacked(packed, prep.weights.params(), &x, &config)?
            } else {
                qgemm(&prep.weights, &x, &GemmConfig::u8_i32())?
            }
        }
        GemmBackend::NaiveI32 => naive_quantized_gemm(&prep.weights, &x),
    };

    let mut data = result.values;
    match layer.activation {
        Activation::Relu => data.iter_mut().for_each(|v| *v = (*v).max(0)),
        Activation::None => {}
        Activation::Softmax => {
            return Err(Error::InvalidLayer { layer: 0, reason: "softmax is only valid on a fully-connected layer".into() })
        }
    }
    Ok(ScaledActivation {
        channels: layer.filters,
        height: out_h,
        width: out_w,
        data,
        scale: result.result_scale * carried_scale,
    })
}

/// Run one quantized convolution layer standalone, quantizing and packing
/// its weights on the spot. Networks cache that work instead; results are
/// identical.
pub fn quantized_conv_forward(
    layer: &LayerSpec,
    input: ConvInput<'_>,
    bits: u8,
    mode: AccumulatorMode,
) -> Result<ScaledActivation, Error> {
    if layer.kind != LayerKind::QConv {
        return Err(Error::InvalidLayer { layer: 0, reason: "quantized_conv_forward needs a quantized convolution layer".into() });
    }
    let (channels, h, w) = input.shape();
    validate_layer(0, layer, (channels, h, w), bits, mode)?;
    let prep = PreparedConv::build(layer, channels, bits)?;
    run_prepared_conv(&prep, layer, input, bits, mode, GemmBackend::Packed)
}

fn validate_layer(
    index: usize,
    layer: &LayerSpec,
    in_shape: (usize, usize, usize),
    bits: u8,
    mode: AccumulatorMode,
) -> Result<(usize, usize, usize), Error> {
    let (c, h, w) = in_shape;
    if layer.filters == 0 {
        return Err(Error::InvalidLayer { layer: index, reason: "layer has zero filters".into() });
    }
    if let Some(pos) = layer.weights.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidLayer { layer: index, reason: format!("non-finite weight at index {pos}") });
    }
    match layer.kind {
        LayerKind::QConv | LayerKind::FConv => {
            let (kh, kw) = layer.kernel;
            let (sh, sw) = layer.stride;
            if kh == 0 || kw == 0 {
                return Err(Error::InvalidLayer { layer: index, reason: "kernel must be at least 1x1".into() });
            }
            if sh == 0 || sw == 0 {
                return Err(Error::InvalidLayer { layer: index, reason: "stride must be at least 1".into() });
            }
            if layer.activation == Activation::Softmax {
                return Err(Error::InvalidLayer { layer: index, reason: "softmax is only valid on a fully-connected layer".into() });
            }
            if kh > h || kw > w {
                return Err(Error::KernelLargerThanInput { kernel: (kh, kw), input: (h, w) });
            }
            let expected = layer.filters * c * kh * kw;
            if layer.weights.len() != expected {
                return Err(Error::WeightCountMismatch { layer: index, expected, actual: layer.weights.len() });
            }
            if layer.kind == LayerKind::QConv {
                let limit = max_safe_depth(bits, mode)? / (kh * kw);
                if c > limit {
                    return Err(Error::ChannelLimit { channels: c, limit, kernel: (kh, kw) });
                }
            }
            let (oh, ow) = conv_output_hw(h, w, kh, kw, sh, sw)?;
            Ok((layer.filters, oh, ow))
        }
        LayerKind::Fc => {
            if layer.kernel != (1, 1) || layer.stride != (1, 1) {
                return Err(Error::InvalidLayer { layer: index, reason: "fully-connected layers use kernel 1x1 and stride 1".into() });
            }
            let expected = layer.filters * c * h * w;
            if layer.weights.len() != expected {
                return Err(Error::WeightCountMismatch { layer: index, expected, actual: layer.weights.len() });
            }
            Ok((layer.filters, 1, 1))
        }
    }
}

/// Wall-clock split of one forward pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardTiming {
    /// Time inside convolution layers (either kind).
    pub conv: Duration,
    /// Time inside all layers.
    pub total: Duration,
}

enum Flow {
    F(Tensor),
    Q(ScaledActivation),
}

impl Flow {
    fn into_float(self) -> Tensor {
        match self {
            Flow::F(t) => t,
            Flow::Q(a) => a.dequantize(),
        }
    }
}

/// A validated feed-forward network.
///
/// Construction checks the whole shape chain, weight counts, and — for
/// quantized layers — the channel limits of the accumulator mode, then
/// quantizes and packs convolution weights once. `bits`/`mode` apply to
/// every quantized layer; float-only networks simply never use them.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: (usize, usize, usize),
    bits: u8,
    mode: AccumulatorMode,
    layers: Vec<LayerSpec>,
    shapes: Vec<(usize, usize, usize)>,
    prepared: Vec<Option<PreparedConv>>,
    backend: GemmBackend,
}

impl Network {
    pub fn new(
        input_shape: (usize, usize, usize),
        bits: u8,
        mode: AccumulatorMode,
        layers: Vec<LayerSpec>,
    ) -> Result<Network, Error> {
        // Rejects unsupported widths and width/mode pairings up front.
        max_safe_depth(bits, mode)?;
        if layers.is_empty() {
            return Err(Error::InvalidLayer { layer: 0, reason: "network has no layers".into() });
        }
        let (c, h, w) = input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::GeometryMismatch { expected: (1, 1, 1), actual: input_shape });
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut prepared = Vec::with_capacity(layers.len());
        let mut shape = input_shape;
        for (index, layer) in layers.iter().enumerate() {
            let out = validate_layer(index, layer, shape, bits, mode)?;
            prepared.push(if layer.kind == LayerKind::QConv {
                Some(PreparedConv::build(layer, shape.0, bits)?)
            } else {
                None
            });
            shapes.push(out);
            shape = out;
        }
        Ok(Network { input_shape, bits, mode, layers, shapes, prepared, backend: GemmBackend::Packed })
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn output_shape(&self) -> (usize, usize, usize) {
        *self.shapes.last().expect("networks have at least one layer")
    }

    /// Declared output shape after each layer.
    pub fn layer_shapes(&self) -> &[(usize, usize, usize)] {
        &self.shapes
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn mode(&self) -> AccumulatorMode {
        self.mode
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn backend(&self) -> GemmBackend {
        self.backend
    }

    /// Switch the engine used for quantized convolutions.
    pub fn set_backend(&mut self, backend: GemmBackend) {
        self.backend = backend;
    }

    /// The same architecture and weights with every quantized convolution
    /// replaced by its float form.
    pub fn float_equivalent(&self) -> Network {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let mut l = l.clone();
                if l.kind == LayerKind::QConv {
                    l.kind = LayerKind::FConv;
                }
                l
            })
            .collect();
        Network::new(self.input_shape, self.bits, self.mode, layers)
            .expect("a validated network stays valid with quantization dropped")
    }

    /// Run the network; returns the flattened final activation.
    pub fn forward(&self, input: &Tensor) -> Result<Vec<f32>, Error> {
        Ok(self.forward_timed(input)?.0)
    }

    /// Run the network and report how long the layers took.
    pub fn forward_timed(&self, input: &Tensor) -> Result<(Vec<f32>, ForwardTiming), Error> {
        if input.shape() != self.input_shape {
            return Err(Error::GeometryMismatch { expected: self.input_shape, actual: input.shape() });
        }
        let mut timing = ForwardTiming::default();
        let mut flow = Flow::F(input.clone());
        for (index, layer) in self.layers.iter().enumerate() {
            let start = Instant::now();
            flow = match layer.kind {
                LayerKind::QConv => {
                    let prep = self.prepared[index].as_ref().expect("quantized layers are prepared at build time");
                    let conv_in = match &flow {
                        Flow::F(t) => ConvInput::Float(t),
                        Flow::Q(a) => ConvInput::Quantized(a),
                    };
                    Flow::Q(run_prepared_conv(prep, layer, conv_in, self.bits, self.mode, self.backend)?)
                }
                LayerKind::FConv => {
                    let t = flow.into_float();
                    Flow::F(float_conv_forward(layer, &t)?)
                }
                LayerKind::Fc => {
                    let t = flow.into_float();
                    Flow::F(fc_forward(layer, &t)?)
                }
            };
            let elapsed = start.elapsed();
            timing.total += elapsed;
            if layer.kind != LayerKind::Fc {
                timing.conv += elapsed;
            }
        }
        Ok((flow.into_float().data, timing))
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Network) -> bool {
        self.input_shape == other.input_shape
            && self.bits == other.bits
            && self.mode == other.mode
            && self.layers == other.layers
    }
}
