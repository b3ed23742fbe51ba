//! The super-resolving denoiser.
//!
//! A U-Net encoder maps the sub-sampled image `(H/s, W/s)` to a feature map
//! with `feature_channels` channels; the decoder upsamples it by `s` and
//! applies three 1x1 convolutions to produce the full-resolution estimate.
//!
//! Gradients come from a small tape: the forward pass records each op and
//! its output, and [`Model::backward_tape`] replays the tape in reverse.

mod ops;
pub(crate) use ops::bilinear_up;
mod tensor;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::RngSeed;

pub use ops::LEAKY_SLOPE as LEAKY_RELU_SLOPE;
pub use tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsampling {
    PixelShuffle,
    TransposedConv,
    Bilinear,
}

impl Upsampling {
    pub const ALL: [Upsampling; 3] = [
        Upsampling::TransposedConv,
        Upsampling::PixelShuffle,
        Upsampling::Bilinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Upsampling::PixelShuffle => "pixel_shuffle",
            Upsampling::TransposedConv => "transposed_conv",
            Upsampling::Bilinear => "bilinear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub stride: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub feature_channels: usize,
    pub upsampling: Upsampling,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            stride: 2,
            base_channels: 32,
            depth: 3,
            feature_channels: 128,
            upsampling: Upsampling::PixelShuffle,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.stride < 2 {
            return bad(format!("stride must be at least 2, got {}", self.stride));
        }
        if self.base_channels == 0 || self.feature_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        let s2 = self.stride * self.stride;
        if self.upsampling == Upsampling::PixelShuffle && self.feature_channels % s2 != 0 {
            return bad(format!(
                "feature_channels {} not divisible by stride² = {s2}",
                self.feature_channels
            ));
        }
        Ok(())
    }

    /// Sub-sampled inputs must be divisible by this.
    pub fn input_multiple(&self) -> usize {
        1 << self.depth
    }

    /// Full-resolution images must be divisible by this.
    pub fn image_multiple(&self) -> usize {
        self.stride << self.depth
    }

    /// Width of the 1x1 layers after upsampling.
    pub fn decoder_channels(&self) -> usize {
        (self.feature_channels / (self.stride * self.stride)).max(1)
    }

    /// Ordered layer list; parameters are `<name>.weight` then `<name>.bias`.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let c = self.base_channels;
        let conv = |name: String, cin, cout, kernel| LayerSpec {
            name,
            kind: LayerKind::Conv { kernel },
            cin,
            cout,
        };
        let mut layers = vec![conv("enc0a".into(), 1, c, 3), conv("enc0b".into(), c, c, 3)];
        for l in 1..=self.depth {
            layers.push(conv(format!("enc{l}"), c, c, 3));
        }
        for l in (1..self.depth).rev() {
            let cin = if l == self.depth - 1 { 2 * c } else { 3 * c };
            layers.push(conv(format!("dec{l}a"), cin, 2 * c, 3));
            layers.push(conv(format!("dec{l}b"), 2 * c, 2 * c, 3));
        }
        let cin0 = if self.depth == 1 { 2 * c + 1 } else { 3 * c + 1 };
        layers.push(conv("dec0a".into(), cin0, c, 3));
        layers.push(conv("dec0b".into(), c, self.feature_channels, 3));
        let hidden = self.decoder_channels();
        let up_channels = match self.upsampling {
            Upsampling::PixelShuffle => self.feature_channels / (self.stride * self.stride),
            Upsampling::Bilinear => self.feature_channels,
            Upsampling::TransposedConv => {
                layers.push(LayerSpec {
                    name: "up".into(),
                    kind: LayerKind::TransposedConv {
                        stride: self.stride,
                    },
                    cin: self.feature_channels,
                    cout: hidden,
                });
                hidden
            }
        };
        layers.push(conv("sr1".into(), up_channels, hidden, 1));
        layers.push(conv("sr2".into(), hidden, hidden, 1));
        layers.push(conv("sr3".into(), hidden, 1, 1));
        layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(LayerSpec::parameter_count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv { kernel: usize },
    TransposedConv { stride: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub cin: usize,
    pub cout: usize,
}

impl LayerSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv { kernel } => vec![self.cout, self.cin, kernel, kernel],
            LayerKind::TransposedConv { stride } => vec![self.cin, self.cout, stride, stride],
        }
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv { kernel } => self.cin * kernel * kernel,
            LayerKind::TransposedConv { .. } => self.cin,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weight_shape().iter().product::<usize>() + self.cout
    }
}

/// Named parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    config: NetConfig,
    layers: Vec<LayerSpec>,
    params: Vec<Param<T>>,
}

/// Per-parameter gradients, aligned with [`Model::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32>(pub Vec<Vec<T>>);

impl<T: Real> Gradients<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        Gradients(
            model
                .params
                .iter()
                .map(|p| vec![T::zero(); p.data.len()])
                .collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.0.iter_mut().flatten() {
            *g *= factor;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|g| g.is_zero())
    }
}

impl Model<f32> {
    /// Fan-in-scaled uniform init: weights in `±sqrt(6 / ((1 + slope²) fan_in))`,
    /// biases zero. Deterministic under `seed`.
    pub fn init(config: NetConfig, seed: RngSeed) -> Result<Self> {
        config.validate()?;
        let layers = config.layers();
        let mut rng = seed.rng();
        let gain = 6.0 / (1.0 + ops::LEAKY_SLOPE * ops::LEAKY_SLOPE);
        let mut params = Vec::with_capacity(2 * layers.len());
        for layer in &layers {
            let shape = layer.weight_shape();
            let bound = num_traits::Float::sqrt(gain / layer.fan_in() as f64);
            let n: usize = shape.iter().product();
            let data = (0..n)
                .map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * bound) as f32)
                .collect();
            params.push(Param {
                name: format!("{}.weight", layer.name),
                shape,
                data,
            });
            params.push(Param {
                name: format!("{}.bias", layer.name),
                shape: vec![layer.cout],
                data: vec![0.0; layer.cout],
            });
        }
        Ok(Self {
            config,
            layers,
            params,
        })
    }

    /// Full-resolution estimate from a sub-sampled image.
    pub fn forward(&self, sub: &Image) -> Result<Image> {
        let (out, _) = self.forward_tensor(image_to_tensor(sub))?;
        tensor_to_image(out)
    }

    /// Weight gradients of `<forward(sub), grad_out>`.
    pub fn backward(&self, sub: &Image, grad_out: &Image) -> Result<Gradients<f32>> {
        let (out, tape) = self.forward_tensor(image_to_tensor(sub))?;
        if (out.height, out.width) != grad_out.dims() {
            return Err(Error::DimensionMismatch(
                out.height,
                out.width,
                grad_out.height(),
                grad_out.width(),
            ));
        }
        Ok(self.backward_tape(&tape, image_to_tensor(grad_out)))
    }
}

impl<T: Real> Model<T> {
    /// Rebuilds a model from named arrays, checking them against `config`.
    pub fn from_params(config: NetConfig, params: Vec<Param<T>>) -> Result<Self> {
        config.validate()?;
        let layers = config.layers();
        if params.len() != 2 * layers.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameter arrays, got {}",
                2 * layers.len(),
                params.len()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            let expect = [
                (format!("{}.weight", layer.name), layer.weight_shape()),
                (format!("{}.bias", layer.name), vec![layer.cout]),
            ];
            for (j, (name, shape)) in expect.into_iter().enumerate() {
                let p = &params[2 * i + j];
                let n: usize = shape.iter().product();
                if p.name != name || p.shape != shape || p.data.len() != n {
                    return Err(Error::InvalidConfig(format!(
                        "parameter {} {:?} does not match expected {name} {shape:?}",
                        p.name, p.shape
                    )));
                }
                if !p.data.iter().all(|v| v.is_finite()) {
                    return Err(Error::InvalidConfig(format!("parameter {name} is not finite")));
                }
            }
        }
        Ok(Self {
            config,
            layers,
            params,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config,
            layers: self.layers.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
        }
    }

    fn layer_index(&self, name: &str) -> usize {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .expect("layer list is derived from the config")
    }

    /// Runs the network on a single-channel input and records the tape.
    pub fn forward_tensor(&self, input: Tensor<T>) -> Result<(Tensor<T>, Tape<T>)> {
        let m = self.config.input_multiple();
        if input.channels != 1 {
            return Err(Error::InvalidConfig(format!(
                "network input must have one channel, got {}",
                input.channels
            )));
        }
        crate::image::check_divisible(input.height, input.width, m)?;
        let mut tape = Tape {
            nodes: vec![input],
            ops: Vec::new(),
        };
        let s = self.config.stride;
        let depth = self.config.depth;

        let x = self.conv(&mut tape, 0, "enc0a");
        let x = tape.leaky(x);
        let x = self.conv(&mut tape, x, "enc0b");
        let mut skips = vec![tape.leaky(x)];
        let mut y = skips[0];
        for l in 1..=depth {
            let p = tape.pool(y);
            let c = self.conv(&mut tape, p, &format!("enc{l}"));
            y = tape.leaky(c);
            if l < depth {
                skips.push(y);
            }
        }
        for l in (0..depth).rev() {
            let u = tape.up2(y);
            let cat = if l == 0 {
                tape.concat(vec![u, skips[0], 0])
            } else {
                tape.concat(vec![u, skips[l]])
            };
            let (a, b) = if l == 0 {
                ("dec0a".into(), "dec0b".into())
            } else {
                (format!("dec{l}a"), format!("dec{l}b"))
            };
            let h = self.conv(&mut tape, cat, &a);
            let h = tape.leaky(h);
            let h = self.conv(&mut tape, h, &b);
            y = tape.leaky(h);
        }
        let z = match self.config.upsampling {
            Upsampling::PixelShuffle => tape.push(Op::PixelShuffle { input: y, stride: s }),
            Upsampling::Bilinear => tape.push(Op::Bilinear { input: y, stride: s }),
            Upsampling::TransposedConv => {
                let layer = self.layer_index("up");
                tape.push_with(
                    Op::TransConv {
                        input: y,
                        layer,
                        stride: s,
                    },
                    self,
                )
            }
        };
        let h = self.conv(&mut tape, z, "sr1");
        let h = tape.leaky(h);
        let h = self.conv(&mut tape, h, "sr2");
        let h = tape.leaky(h);
        let out = self.conv(&mut tape, h, "sr3");
        let result = tape.nodes[out].clone();
        Ok((result, tape))
    }

    fn conv(&self, tape: &mut Tape<T>, input: usize, name: &str) -> usize {
        let layer = self.layer_index(name);
        tape.push_with(Op::Conv { input, layer }, self)
    }

    /// Reverse pass over `tape`, seeded with `grad_out` at the network output.
    pub fn backward_tape(&self, tape: &Tape<T>, grad_out: Tensor<T>) -> Gradients<T> {
        let mut grads = Gradients::zeros_like(self);
        let mut node_grads: Vec<Option<Tensor<T>>> = vec![None; tape.nodes.len()];
        let last = tape.nodes.len() - 1;
        assert_eq!(grad_out.data.len(), tape.nodes[last].data.len());
        node_grads[last] = Some(grad_out);

        fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
            match slot {
                Some(t) => t.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for (i, op) in tape.ops.iter().enumerate().rev() {
            let out = i + 1;
            let Some(dy) = node_grads[out].take() else {
                continue;
            };
            match op {
                Op::Conv { input, layer } => {
                    let spec = &self.layers[*layer];
                    let kernel = match spec.kind {
                        LayerKind::Conv { kernel } => kernel,
                        LayerKind::TransposedConv { .. } => unreachable!(),
                    };
                    let (gw, gb) = split_pair(&mut grads.0, 2 * layer);
                    let dx = ops::conv_backward(
                        &tape.nodes[*input],
                        &self.params[2 * layer].data,
                        spec.cout,
                        kernel,
                        &dy,
                        gw,
                        gb,
                    );
                    if *input != 0 {
                        accumulate(&mut node_grads[*input], dx);
                    }
                }
                Op::TransConv {
                    input,
                    layer,
                    stride,
                } => {
                    let spec = &self.layers[*layer];
                    let (gw, gb) = split_pair(&mut grads.0, 2 * layer);
                    let dx = ops::trans_conv_backward(
                        &tape.nodes[*input],
                        &self.params[2 * layer].data,
                        spec.cout,
                        *stride,
                        &dy,
                        gw,
                        gb,
                    );
                    accumulate(&mut node_grads[*input], dx);
                }
                Op::LeakyRelu { input } => {
                    let dx = ops::leaky_relu_backward(&tape.nodes[out], &dy);
                    accumulate(&mut node_grads[*input], dx);
                }
                Op::MaxPool { input, argmax } => {
                    let x = &tape.nodes[*input];
                    let dx = ops::max_pool2_backward((x.channels, x.height, x.width), argmax, &dy);
                    accumulate(&mut node_grads[*input], dx);
                }
                Op::Upsample2 { input } => {
                    accumulate(&mut node_grads[*input], ops::upsample2_backward(&dy));
                }
                Op::Concat { inputs } => {
                    let mut offset = 0;
                    for &inp in inputs {
                        let t = &tape.nodes[inp];
                        let n = t.data.len();
                        if inp != 0 {
                            let part = Tensor::from_vec(
                                t.channels,
                                t.height,
                                t.width,
                                dy.data[offset..offset + n].to_vec(),
                            );
                            accumulate(&mut node_grads[inp], part);
                        }
                        offset += n;
                    }
                }
                Op::PixelShuffle { input, stride } => {
                    accumulate(&mut node_grads[*input], ops::pixel_unshuffle(&dy, *stride));
                }
                Op::Bilinear { input, stride } => {
                    let x = &tape.nodes[*input];
                    let dx =
                        ops::bilinear_up_backward((x.channels, x.height, x.width), *stride, &dy);
                    accumulate(&mut node_grads[*input], dx);
                }
            }
        }
        grads
    }
}

fn split_pair<T>(grads: &mut [Vec<T>], i: usize) -> (&mut [T], &mut [T]) {
    let (a, b) = grads[i..].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

#[derive(Debug, Clone)]
enum Op {
    Conv { input: usize, layer: usize },
    TransConv { input: usize, layer: usize, stride: usize },
    LeakyRelu { input: usize },
    MaxPool { input: usize, argmax: Vec<u8> },
    Upsample2 { input: usize },
    Concat { inputs: Vec<usize> },
    PixelShuffle { input: usize, stride: usize },
    Bilinear { input: usize, stride: usize },
}

/// Recorded forward pass. Node 0 is the network input; op `i` produced
/// node `i + 1`.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    nodes: Vec<Tensor<T>>,
    ops: Vec<Op>,
}

impl<T: Real> Tape<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.nodes.last().expect("tape holds the input")
    }

    fn record(&mut self, op: Op, value: Tensor<T>) -> usize {
        self.ops.push(op);
        self.nodes.push(value);
        self.nodes.len() - 1
    }

    fn push(&mut self, op: Op) -> usize {
        let value = match &op {
            Op::PixelShuffle { input, stride } => ops::pixel_shuffle(&self.nodes[*input], *stride),
            Op::Bilinear { input, stride } => ops::bilinear_up(&self.nodes[*input], *stride),
            _ => unreachable!("parameterised ops go through push_with"),
        };
        self.record(op, value)
    }

    fn push_with(&mut self, op: Op, model: &Model<T>) -> usize {
        let value = match &op {
            Op::Conv { input, layer } => {
                let spec = &model.layers[*layer];
                let LayerKind::Conv { kernel } = spec.kind else {
                    unreachable!()
                };
                ops::conv_forward(
                    &self.nodes[*input],
                    &model.params[2 * layer].data,
                    &model.params[2 * layer + 1].data,
                    spec.cout,
                    kernel,
                )
            }
            Op::TransConv {
                input,
                layer,
                stride,
            } => ops::trans_conv_forward(
                &self.nodes[*input],
                &model.params[2 * layer].data,
                &model.params[2 * layer + 1].data,
                model.layers[*layer].cout,
                *stride,
            ),
            _ => unreachable!(),
        };
        self.record(op, value)
    }

    fn leaky(&mut self, input: usize) -> usize {
        let value = ops::leaky_relu(self.nodes[input].clone());
        self.record(Op::LeakyRelu { input }, value)
    }

    fn pool(&mut self, input: usize) -> usize {
        let (value, argmax) = ops::max_pool2(&self.nodes[input]);
        self.record(Op::MaxPool { input, argmax }, value)
    }

    fn up2(&mut self, input: usize) -> usize {
        let value = ops::upsample2(&self.nodes[input]);
        self.record(Op::Upsample2 { input }, value)
    }

    fn concat(&mut self, inputs: Vec<usize>) -> usize {
        let parts: Vec<&Tensor<T>> = inputs.iter().map(|&i| &self.nodes[i]).collect();
        let value = ops::concat(&parts);
        self.record(Op::Concat { inputs }, value)
    }
}

pub fn image_to_tensor<T: Real>(img: &Image) -> Tensor<T> {
    Tensor::from_vec(
        1,
        img.height(),
        img.width(),
        img.data().iter().map(|&v| T::from_f64(v as f64)).collect(),
    )
}

pub fn tensor_to_image<T: Real>(t: Tensor<T>) -> Result<Image> {
    if t.channels != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            got: t.channels,
        });
    }
    Image::new(
        t.height,
        t.width,
        t.data.into_iter().map(|v| v.to_f64() as f32).collect(),
    )
}
