//! Layer-level network descriptions.
//!
//! A [`NetworkSpec`] is an ordered chain of [`LayerSpec`]s. Skip connections
//! are expressed by naming an earlier tap: the tapped tensor is concatenated
//! onto (or added to) the *output* of the layer carrying the [`Skip`], before
//! that layer's own tap is recorded.
//!
//! Specs serialize to TOML; the on-disk schema carries `spec_version`.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_string, GccError, Result};

pub const NETWORK_SPEC_VERSION: u32 = 1;

/// Slope applied by [`Activation::LeakyRelu`].
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Conv,
    TransposedConv,
    BatchNorm,
    Activation,
    Linear,
    Upsample,
}

impl LayerKind {
    /// Conv, transposed conv and linear layers own a weight tensor with one
    /// "kernel" per output channel.
    pub fn is_parameterized(self) -> bool {
        matches!(
            self,
            LayerKind::Conv | LayerKind::TransposedConv | LayerKind::Linear
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UpsampleMode {
    #[default]
    Nearest,
    /// Sub-pixel rearrangement: `C·r² × H × W → C × rH × rW`.
    PixelShuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipMode {
    Concat,
    Add,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Skip {
    pub from: String,
    pub mode: SkipMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkRole {
    Generator,
    Discriminator,
}

fn one() -> usize {
    1
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub kernel_size: usize,
    /// Convolution stride, or the scale factor for upsampling layers.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub stride: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub padding: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub output_padding: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    pub has_bias: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upsample: Option<UpsampleMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip: Option<Skip>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap_name: Option<String>,
}

impl LayerSpec {
    fn base(kind: LayerKind, in_channels: usize, out_channels: usize) -> Self {
        LayerSpec {
            kind,
            in_channels,
            out_channels,
            kernel_size: 1,
            stride: 1,
            padding: 0,
            output_padding: 0,
            has_bias: false,
            activation: None,
            upsample: None,
            skip: None,
            tap_name: None,
        }
    }

    pub fn conv(in_c: usize, out_c: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec {
            kernel_size: kernel,
            stride,
            padding,
            ..Self::base(LayerKind::Conv, in_c, out_c)
        }
    }

    pub fn conv_transpose(
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        LayerSpec {
            kernel_size: kernel,
            stride,
            padding,
            ..Self::base(LayerKind::TransposedConv, in_c, out_c)
        }
    }

    pub fn linear(in_features: usize, out_features: usize) -> Self {
        LayerSpec {
            has_bias: true,
            ..Self::base(LayerKind::Linear, in_features, out_features)
        }
    }

    pub fn batch_norm(channels: usize) -> Self {
        Self::base(LayerKind::BatchNorm, channels, channels)
    }

    pub fn activation(act: Activation, channels: usize) -> Self {
        LayerSpec {
            activation: Some(act),
            ..Self::base(LayerKind::Activation, channels, channels)
        }
    }

    pub fn upsample(channels: usize, factor: usize) -> Self {
        LayerSpec {
            stride: factor,
            upsample: Some(UpsampleMode::Nearest),
            ..Self::base(LayerKind::Upsample, channels, channels)
        }
    }

    pub fn pixel_shuffle(in_channels: usize, factor: usize) -> Self {
        LayerSpec {
            stride: factor,
            upsample: Some(UpsampleMode::PixelShuffle),
            ..Self::base(LayerKind::Upsample, in_channels, in_channels / (factor * factor))
        }
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.has_bias = bias;
        self
    }

    pub fn with_output_padding(mut self, output_padding: usize) -> Self {
        self.output_padding = output_padding;
        self
    }

    pub fn tap(mut self, name: &str) -> Self {
        self.tap_name = Some(name.to_string());
        self
    }

    pub fn skip(mut self, from: &str, mode: SkipMode) -> Self {
        self.skip = Some(Skip {
            from: from.to_string(),
            mode,
        });
        self
    }
}

/// Per-sample feature shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    Flat(usize),
    Map { c: usize, h: usize, w: usize },
}

impl FeatureShape {
    pub fn from_dims(dims: &[usize]) -> Option<Self> {
        match *dims {
            [n] => Some(FeatureShape::Flat(n)),
            [c, h, w] => Some(FeatureShape::Map { c, h, w }),
            _ => None,
        }
    }

    pub fn channels(&self) -> usize {
        match *self {
            FeatureShape::Flat(n) => n,
            FeatureShape::Map { c, .. } => c,
        }
    }

    pub fn spatial(&self) -> usize {
        match *self {
            FeatureShape::Flat(_) => 1,
            FeatureShape::Map { h, w, .. } => h * w,
        }
    }

    pub fn numel(&self) -> usize {
        self.channels() * self.spatial()
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            FeatureShape::Flat(n) => vec![n],
            FeatureShape::Map { c, h, w } => vec![c, h, w],
        }
    }

    fn with_channels(&self, c: usize) -> Self {
        match *self {
            FeatureShape::Flat(_) => FeatureShape::Flat(c),
            FeatureShape::Map { h, w, .. } => FeatureShape::Map { c, h, w },
        }
    }
}

/// Input and output shape of one layer, as computed by [`NetworkSpec::shapes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShapes {
    pub input: FeatureShape,
    /// Includes the layer's skip connection, if any.
    pub output: FeatureShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default = "current_version")]
    pub spec_version: u32,
    pub name: String,
    pub role: NetworkRole,
    /// Per-sample input dims: `[features]` or `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

fn current_version() -> u32 {
    NETWORK_SPEC_VERSION
}

fn conv_out(len: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    let padded = len + 2 * p;
    if s == 0 || padded < k {
        return None;
    }
    Some((padded - k) / s + 1)
}

fn conv_t_out(len: usize, k: usize, s: usize, p: usize, op: usize) -> Option<usize> {
    ((len - 1) * s + k + op).checked_sub(2 * p).filter(|&n| n > 0)
}

impl NetworkSpec {
    pub fn new(name: &str, role: NetworkRole, input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        NetworkSpec {
            spec_version: NETWORK_SPEC_VERSION,
            name: name.to_string(),
            role,
            input_shape,
            layers,
        }
    }

    pub fn input(&self) -> Result<FeatureShape> {
        FeatureShape::from_dims(&self.input_shape).ok_or_else(|| {
            GccError::spec(
                &self.name,
                format!("input_shape must have 1 or 3 dims, got {:?}", self.input_shape),
            )
        })
    }

    /// Validates the spec and propagates shapes through every layer.
    pub fn shapes(&self) -> Result<Vec<LayerShapes>> {
        self.shapes_from(self.input()?)
    }

    /// Shape propagation from an explicit per-sample input shape (used when
    /// measuring a network at a resolution other than its declared one).
    pub fn shapes_from(&self, input: FeatureShape) -> Result<Vec<LayerShapes>> {
        let err = |i: usize, msg: String| GccError::spec(&self.name, format!("layer {i}: {msg}"));
        if self.spec_version != NETWORK_SPEC_VERSION {
            return Err(GccError::spec(
                &self.name,
                format!("unsupported spec_version {}", self.spec_version),
            ));
        }
        if self.layers.is_empty() {
            return Err(GccError::spec(&self.name, "network has no layers"));
        }
        let mut taps: Vec<(&str, FeatureShape)> = Vec::new();
        let mut out = Vec::with_capacity(self.layers.len());
        let mut cur = input;
        for (i, layer) in self.layers.iter().enumerate() {
            let input = cur;
            let c = cur.channels();
            let mut next = match layer.kind {
                LayerKind::Conv | LayerKind::TransposedConv => {
                    let FeatureShape::Map { h, w, .. } = cur else {
                        return Err(err(i, "convolution needs a [c, h, w] input".into()));
                    };
                    if layer.in_channels != c {
                        return Err(err(
                            i,
                            format!("in_channels {} but incoming channels {c}", layer.in_channels),
                        ));
                    }
                    if layer.out_channels == 0 || layer.kernel_size == 0 || layer.stride == 0 {
                        return Err(err(i, "out_channels, kernel_size and stride must be >= 1".into()));
                    }
                    let (k, s, p) = (layer.kernel_size, layer.stride, layer.padding);
                    let dims = if layer.kind == LayerKind::Conv {
                        conv_out(h, k, s, p).zip(conv_out(w, k, s, p))
                    } else {
                        let op = layer.output_padding;
                        conv_t_out(h, k, s, p, op).zip(conv_t_out(w, k, s, p, op))
                    };
                    let (oh, ow) = dims.ok_or_else(|| err(i, format!("kernel does not fit {h}x{w} input")))?;
                    FeatureShape::Map {
                        c: layer.out_channels,
                        h: oh,
                        w: ow,
                    }
                }
                LayerKind::Linear => {
                    if layer.in_channels != cur.numel() {
                        return Err(err(
                            i,
                            format!("in_features {} but incoming features {}", layer.in_channels, cur.numel()),
                        ));
                    }
                    if layer.out_channels == 0 {
                        return Err(err(i, "out_features must be >= 1".into()));
                    }
                    FeatureShape::Flat(layer.out_channels)
                }
                LayerKind::BatchNorm | LayerKind::Activation => {
                    if layer.in_channels != c || layer.out_channels != c {
                        return Err(err(
                            i,
                            format!(
                                "{:?} declares {}->{} channels but incoming channels {c}",
                                layer.kind, layer.in_channels, layer.out_channels
                            ),
                        ));
                    }
                    if layer.kind == LayerKind::Activation && layer.activation.is_none() {
                        return Err(err(i, "activation layer without an activation function".into()));
                    }
                    cur
                }
                LayerKind::Upsample => {
                    let FeatureShape::Map { h, w, .. } = cur else {
                        return Err(err(i, "upsample needs a [c, h, w] input".into()));
                    };
                    let f = layer.stride;
                    if f == 0 || layer.in_channels != c {
                        return Err(err(i, "upsample factor must be >= 1 and in_channels must match".into()));
                    }
                    let oc = match layer.upsample.unwrap_or_default() {
                        UpsampleMode::Nearest => c,
                        UpsampleMode::PixelShuffle => {
                            if c % (f * f) != 0 {
                                return Err(err(i, format!("{c} channels not divisible by {}", f * f)));
                            }
                            c / (f * f)
                        }
                    };
                    if layer.out_channels != oc {
                        return Err(err(i, format!("out_channels should be {oc}")));
                    }
                    FeatureShape::Map {
                        c: oc,
                        h: h * f,
                        w: w * f,
                    }
                }
            };
            if let Some(skip) = &layer.skip {
                let (_, other) = taps
                    .iter()
                    .find(|(n, _)| *n == skip.from)
                    .ok_or_else(|| err(i, format!("skip source `{}` is not an earlier tap", skip.from)))?;
                next = match (skip.mode, next, *other) {
                    (SkipMode::Add, a, b) if a == b => a,
                    (SkipMode::Concat, FeatureShape::Flat(a), FeatureShape::Flat(b)) => {
                        FeatureShape::Flat(a + b)
                    }
                    (
                        SkipMode::Concat,
                        FeatureShape::Map { c, h, w },
                        FeatureShape::Map { c: c2, h: h2, w: w2 },
                    ) if h == h2 && w == w2 => FeatureShape::Map { c: c + c2, h, w },
                    (mode, a, b) => {
                        return Err(err(i, format!("cannot {mode:?} {b:?} onto {a:?}")))
                    }
                };
            }
            if let Some(tap) = &layer.tap_name {
                if taps.iter().any(|(n, _)| n == tap) {
                    return Err(err(i, format!("duplicate tap name `{tap}`")));
                }
                taps.push((tap.as_str(), next));
            }
            out.push(LayerShapes { input, output: next });
            cur = next;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn output_shape(&self) -> Result<FeatureShape> {
        Ok(self.shapes()?.last().expect("non-empty").output)
    }

    /// Indices of conv / transposed-conv / linear layers, in order.
    pub fn parameterized_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind.is_parameterized())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn tap_index(&self, tap: &str) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| l.tap_name.as_deref() == Some(tap))
    }

    pub fn tap_names(&self) -> Vec<&str> {
        self.layers.iter().filter_map(|l| l.tap_name.as_deref()).collect()
    }

    /// Channel count of the feature map exposed at `tap`.
    pub fn tap_channels(&self, tap: &str) -> Result<usize> {
        let idx = self
            .tap_index(tap)
            .ok_or_else(|| GccError::spec(&self.name, format!("no tap named `{tap}`")))?;
        Ok(self.shapes()?[idx].output.channels())
    }

    /// Rewrites channel counts after parameterized layers changed their
    /// `out_channels`: every downstream in_channels, BN/activation width and
    /// upsample width is re-derived from the propagated shapes.
    pub fn rechain(&mut self) -> Result<()> {
        let mut cur = self.input()?;
        let mut taps: Vec<(String, FeatureShape)> = Vec::new();
        for i in 0..self.layers.len() {
            let c = cur.channels();
            let layer = &mut self.layers[i];
            match layer.kind {
                LayerKind::Conv | LayerKind::TransposedConv => layer.in_channels = c,
                LayerKind::Linear => layer.in_channels = cur.numel(),
                LayerKind::BatchNorm | LayerKind::Activation => {
                    layer.in_channels = c;
                    layer.out_channels = c;
                }
                LayerKind::Upsample => {
                    let f = layer.stride.max(1);
                    layer.in_channels = c;
                    layer.out_channels = match layer.upsample.unwrap_or_default() {
                        UpsampleMode::Nearest => c,
                        UpsampleMode::PixelShuffle => c / (f * f),
                    };
                }
            }
            // Propagate through this one layer (skip sources resolved from
            // the taps seen so far).
            let single = NetworkSpec {
                spec_version: NETWORK_SPEC_VERSION,
                name: self.name.clone(),
                role: self.role,
                input_shape: cur.dims(),
                layers: vec![LayerSpec {
                    skip: None,
                    tap_name: None,
                    ..layer.clone()
                }],
            };
            let mut next = single.shapes()?[0].output;
            if let Some(skip) = &layer.skip {
                let other = taps
                    .iter()
                    .find(|(n, _)| *n == skip.from)
                    .map(|(_, s)| *s)
                    .ok_or_else(|| GccError::spec(&self.name, format!("layer {i}: unknown skip source")))?;
                if skip.mode == SkipMode::Concat {
                    next = next.with_channels(next.channels() + other.channels());
                }
            }
            if let Some(tap) = &layer.tap_name {
                taps.push((tap.clone(), next));
            }
            cur = next;
        }
        self.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: NetworkSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_toml()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_to_string(path)?)
    }

    /// Tap names are unique (checked by [`NetworkSpec::shapes`]); this is a
    /// cheaper check for callers that only need that property.
    pub fn has_unique_taps(&self) -> bool {
        let mut seen = HashSet::new();
        self.tap_names().into_iter().all(|t| seen.insert(t))
    }
}
