//! Micro residual encoder-decoder with hand-written backward pass.
//!
//! Layer list for `levels = L`, `C_l = base_channels * 2^l`:
//!
//! * encoder level 0: 3x3 stem `1 -> C_0`, leaky ReLU, residual block
//! * encoder level l > 0: 3x3 stride-2 conv `C_{l-1} -> C_l`, leaky ReLU, residual block
//! * decoder level l (from L-2 down to 0): nearest x2 upsample, 3x3 conv
//!   `C_{l+1} -> C_l`, leaky ReLU, concat with the encoder level-l output,
//!   3x3 conv `2 C_l -> C_l`, leaky ReLU, residual block
//! * head: 1x1 conv `C_0 -> 1`, sigmoid
//!
//! A residual block is `x + lrelu(conv_b(lrelu(conv_a(x))))` at constant width.
//! The shared-encoder strategy keeps one encoder and one decoder+head group per
//! organelle; the separate strategy has a single group.

pub mod adam;
pub mod checkpoint;
pub mod conv;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::image::{Image2D, Organelle};
use conv::{Act, ConvShape};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("input {height}x{width} is not divisible by {divisor}")]
    Indivisible { height: usize, width: usize, divisor: usize },
    #[error("model has no decoder for {0}")]
    UnknownOrganelle(Organelle),
    #[error("expected {expected} output gradients, got {got}")]
    GradCount { expected: usize, got: usize },
    #[error("output gradient is {got_h}x{got_w}, prediction was {height}x{width}")]
    GradShape { got_h: usize, got_w: usize, height: usize, width: usize },
    #[error("parameter sets have different layouts")]
    LayoutMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// One independent encoder-decoder trained for a single organelle.
    Separate(Organelle),
    /// One encoder with a decoder per organelle.
    Shared,
}

impl Strategy {
    pub fn organelles(self) -> Vec<Organelle> {
        match self {
            Strategy::Separate(o) => vec![o],
            Strategy::Shared => Organelle::ALL.to_vec(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Separate(o) => write!(f, "separate:{o}"),
            Strategy::Shared => f.write_str("shared"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("shared") {
            return Ok(Strategy::Shared);
        }
        match s.split_once(':') {
            Some((kind, organelle)) if kind.eq_ignore_ascii_case("separate") => {
                Ok(Strategy::Separate(organelle.parse()?))
            }
            _ => Err(format!("unknown strategy {s:?} (expected shared or separate:<organelle>)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub levels: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub leaky_slope: f64,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            base_channels: 8,
            in_channels: 1,
            out_channels: 1,
            leaky_slope: 0.01,
            strategy: Strategy::Separate(Organelle::Nucleus),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::BadConfig(m.to_string()));
        if self.levels < 1 || self.levels > 8 {
            return bad("levels must be in 1..=8");
        }
        if self.base_channels < 1 {
            return bad("base_channels must be at least 1");
        }
        if self.in_channels != 1 || self.out_channels != 1 {
            return bad("only single-channel input and output are supported");
        }
        if !self.leaky_slope.is_finite() || self.leaky_slope < 0.0 || self.leaky_slope >= 1.0 {
            return bad("leaky_slope must be in [0, 1)");
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Spatial dimensions of model inputs must be multiples of this.
    pub fn size_divisor(&self) -> usize {
        1 << (self.levels - 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named parameter tensors in a fixed order. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    entries: Vec<(String, Tensor)>,
}

pub type ParamGrads = ModelParams;

impl ModelParams {
    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    #[inline]
    pub fn data(&self, index: usize) -> &[f64] {
        &self.entries[index].1.data
    }

    #[inline]
    pub fn data_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.entries[index].1.data
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor { shape: t.shape.clone(), data: vec![0.0; t.data.len()] }))
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| a.0 == b.0 && a.1.shape == b.1.shape)
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: f64) -> Result<(), ModelError> {
        if !self.same_layout(other) {
            return Err(ModelError::LayoutMismatch);
        }
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in &mut self.entries {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Rounds every value to the nearest f32 so the set survives a checkpoint
    /// round-trip unchanged.
    pub fn round_to_f32(&mut self) {
        for (_, t) in &mut self.entries {
            t.data.iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }

    /// Distinct `dec.<organelle>` groups present.
    pub fn decoder_groups(&self) -> Vec<String> {
        let mut groups: Vec<String> = self
            .entries
            .iter()
            .filter_map(|(n, _)| {
                let mut parts = n.split('.');
                (parts.next() == Some("dec")).then(|| parts.next().map(str::to_string)).flatten()
            })
            .collect();
        groups.dedup();
        groups
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvLayer {
    shape: ConvShape,
    weight: usize,
    bias: usize,
}

#[derive(Clone, Copy, Debug)]
struct ResLayers {
    a: ConvLayer,
    b: ConvLayer,
}

#[derive(Clone, Copy, Debug)]
struct EncoderLevel {
    entry: ConvLayer,
    res: ResLayers,
}

#[derive(Clone, Copy, Debug)]
struct DecoderLevel {
    level: usize,
    up: ConvLayer,
    fuse: ConvLayer,
    res: ResLayers,
}

#[derive(Clone, Debug)]
struct HeadLayers {
    organelle: Organelle,
    /// Deepest first, i.e. in forward order.
    levels: Vec<DecoderLevel>,
    out: ConvLayer,
}

/// Layer list derived from a [`ModelConfig`], with tensor indices into
/// [`ModelParams`].
#[derive(Clone, Debug)]
pub struct Architecture {
    encoder: Vec<EncoderLevel>,
    heads: Vec<HeadLayers>,
    specs: Vec<(String, Vec<usize>)>,
}

impl Architecture {
    pub fn new(cfg: &ModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut specs: Vec<(String, Vec<usize>)> = Vec::new();
        let mut conv = |name: String, cin: usize, cout: usize, kernel: usize, stride: usize| {
            let weight = specs.len();
            specs.push((format!("{name}.weight"), vec![cout, cin, kernel, kernel]));
            specs.push((format!("{name}.bias"), vec![cout]));
            ConvLayer { shape: ConvShape { cin, cout, kernel, stride }, weight, bias: weight + 1 }
        };

        let mut encoder = Vec::with_capacity(cfg.levels);
        for l in 0..cfg.levels {
            let c = cfg.channels(l);
            let entry = if l == 0 {
                conv("enc.l0.stem".into(), cfg.in_channels, c, 3, 1)
            } else {
                conv(format!("enc.l{l}.down"), cfg.channels(l - 1), c, 3, 2)
            };
            let res = ResLayers {
                a: conv(format!("enc.l{l}.res_a"), c, c, 3, 1),
                b: conv(format!("enc.l{l}.res_b"), c, c, 3, 1),
            };
            encoder.push(EncoderLevel { entry, res });
        }

        let mut heads = Vec::new();
        for organelle in cfg.strategy.organelles() {
            let group = format!("dec.{organelle}");
            let mut levels = Vec::new();
            for l in (0..cfg.levels - 1).rev() {
                let c = cfg.channels(l);
                levels.push(DecoderLevel {
                    level: l,
                    up: conv(format!("{group}.l{l}.up"), cfg.channels(l + 1), c, 3, 1),
                    fuse: conv(format!("{group}.l{l}.fuse"), 2 * c, c, 3, 1),
                    res: ResLayers {
                        a: conv(format!("{group}.l{l}.res_a"), c, c, 3, 1),
                        b: conv(format!("{group}.l{l}.res_b"), c, c, 3, 1),
                    },
                });
            }
            let out = conv(format!("{group}.head"), cfg.channels(0), cfg.out_channels, 1, 1);
            heads.push(HeadLayers { organelle, levels, out });
        }
        Ok(Self { encoder, heads, specs })
    }

    /// (name, shape) of every parameter tensor in storage order.
    pub fn tensor_specs(&self) -> &[(String, Vec<usize>)] {
        &self.specs
    }

    pub fn organelles(&self) -> Vec<Organelle> {
        self.heads.iter().map(|h| h.organelle).collect()
    }

    fn head_index(&self, organelle: Organelle) -> Result<usize, ModelError> {
        self.heads
            .iter()
            .position(|h| h.organelle == organelle)
            .ok_or(ModelError::UnknownOrganelle(organelle))
    }

    pub fn matches(&self, params: &ModelParams) -> bool {
        params.entries.len() == self.specs.len()
            && params.entries.iter().zip(&self.specs).all(|((n, t), (sn, ss))| {
                n == sn && &t.shape == ss && t.data.len() == ss.iter().product::<usize>()
            })
    }
}

/// He-uniform weights (`bound = sqrt(6 / fan_in)`), zero biases, drawn in
/// layer order from a stream seeded by `cfg.seed`. Encoder tensors come first,
/// so every strategy with the same seed starts from the same encoder.
pub fn init_params(cfg: &ModelConfig) -> Result<ModelParams, ModelError> {
    let arch = Architecture::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let entries = arch
        .specs
        .iter()
        .map(|(name, shape)| {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".weight") {
                let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                let bound = (6.0 / fan_in).sqrt();
                (0..n).map(|_| f64::from(rng.random_range(-bound..bound) as f32)).collect()
            } else {
                vec![0.0; n]
            };
            (name.clone(), Tensor { shape: shape.clone(), data })
        })
        .collect();
    Ok(ModelParams { entries })
}

struct ResCache {
    input: Act,
    za: Act,
    ha: Act,
    zb: Act,
}

struct EncoderCache {
    entry_in: Act,
    z_entry: Act,
    res: ResCache,
}

struct DecoderCache {
    up_in: Act,
    zu: Act,
    cat: Act,
    zf: Act,
    res: ResCache,
}

struct HeadCache {
    head: usize,
    levels: Vec<DecoderCache>,
    out_in: Act,
    prediction: Vec<f64>,
}

/// Activations kept by a forward pass; consumed by [`Model::backward`].
pub struct ForwardCache {
    encoder: Vec<EncoderCache>,
    heads: Vec<HeadCache>,
    height: usize,
    width: usize,
}

impl ForwardCache {
    pub fn organelle_count(&self) -> usize {
        self.heads.len()
    }
}

/// Parameters together with the configuration that shapes them.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    arch: Architecture,
    params: ModelParams,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let params = init_params(&config)?;
        let arch = Architecture::new(&config)?;
        Ok(Self { config, arch, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self, ModelError> {
        let arch = Architecture::new(&config)?;
        if !arch.matches(&params) {
            return Err(ModelError::LayoutMismatch);
        }
        Ok(Self { config, arch, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn organelles(&self) -> Vec<Organelle> {
        self.arch.organelles()
    }

    fn conv(&self, layer: ConvLayer, x: &Act) -> Act {
        conv::conv_forward(x, layer.shape, self.params.data(layer.weight), self.params.data(layer.bias))
    }

    fn res_forward(&self, layers: ResLayers, input: Act) -> (Act, ResCache) {
        let slope = self.config.leaky_slope;
        let za = self.conv(layers.a, &input);
        let ha = conv::leaky_relu(&za, slope);
        let zb = self.conv(layers.b, &ha);
        let mut out = conv::leaky_relu(&zb, slope);
        out.add_assign(&input);
        (out, ResCache { input, za, ha, zb })
    }

    fn check_input(&self, height: usize, width: usize) -> Result<(), ModelError> {
        let divisor = self.config.size_divisor();
        if height == 0 || width == 0 || height % divisor != 0 || width % divisor != 0 {
            return Err(ModelError::Indivisible { height, width, divisor });
        }
        Ok(())
    }

    /// Single-organelle forward pass.
    pub fn forward(
        &self,
        input: &Image2D<f64>,
        organelle: Organelle,
    ) -> Result<(Image2D<f64>, ForwardCache), ModelError> {
        let (mut preds, cache) = self.forward_heads(input, &[organelle])?;
        Ok((preds.pop().expect("one head"), cache))
    }

    /// Runs the encoder once and the decoder of every listed organelle.
    pub fn forward_heads(
        &self,
        input: &Image2D<f64>,
        organelles: &[Organelle],
    ) -> Result<(Vec<Image2D<f64>>, ForwardCache), ModelError> {
        let (h, w) = input.dims();
        self.check_input(h, w)?;
        let heads = organelles.iter().map(|&o| self.arch.head_index(o)).collect::<Result<Vec<_>, _>>()?;
        let slope = self.config.leaky_slope;

        let mut x = Act { channels: 1, height: h, width: w, data: input.data().to_vec() };
        let mut encoder = Vec::with_capacity(self.arch.encoder.len());
        let mut skips = Vec::with_capacity(self.arch.encoder.len());
        for level in &self.arch.encoder {
            let z_entry = self.conv(level.entry, &x);
            let e = conv::leaky_relu(&z_entry, slope);
            let (out, res) = self.res_forward(level.res, e);
            encoder.push(EncoderCache { entry_in: x, z_entry, res });
            skips.push(out.clone());
            x = out;
        }
        let bottleneck = x;

        let mut predictions = Vec::with_capacity(heads.len());
        let mut head_caches = Vec::with_capacity(heads.len());
        for head in heads {
            let layers = &self.arch.heads[head];
            let mut d = bottleneck.clone();
            let mut levels = Vec::with_capacity(layers.levels.len());
            for dl in &layers.levels {
                let up_in = conv::upsample_nearest2(&d);
                let zu = self.conv(dl.up, &up_in);
                let u = conv::leaky_relu(&zu, slope);
                let cat = conv::concat(&u, &skips[dl.level]);
                let zf = self.conv(dl.fuse, &cat);
                let f = conv::leaky_relu(&zf, slope);
                let (out, res) = self.res_forward(dl.res, f);
                levels.push(DecoderCache { up_in, zu, cat, zf, res });
                d = out;
            }
            let z = self.conv(layers.out, &d);
            let prediction: Vec<f64> = z.data.iter().map(|&v| sigmoid(v)).collect();
            predictions.push(Image2D::from_vec(h, w, prediction.clone()).expect("head output dims"));
            head_caches.push(HeadCache { head, levels, out_in: d, prediction });
        }
        Ok((predictions, ForwardCache { encoder, heads: head_caches, height: h, width: w }))
    }

    /// Inference on an f32 patch.
    pub fn predict(&self, input: &Image2D, organelle: Organelle) -> Result<Image2D, ModelError> {
        Ok(self.forward(&input.to_f64(), organelle)?.0.to_f32())
    }

    fn res_backward(&self, layers: ResLayers, cache: &ResCache, g_out: Act, grads: &mut ModelParams) -> Act {
        let slope = self.config.leaky_slope;
        let g_zb = conv::leaky_relu_backward(&cache.zb, &g_out, slope);
        let g_ha = self.conv_backward(layers.b, &cache.ha, &g_zb, grads);
        let g_za = conv::leaky_relu_backward(&cache.za, &g_ha, slope);
        let mut g_in = self.conv_backward(layers.a, &cache.input, &g_za, grads);
        g_in.add_assign(&g_out);
        g_in
    }

    fn conv_backward(&self, layer: ConvLayer, x: &Act, g: &Act, grads: &mut ModelParams) -> Act {
        let (gx, gw, gb) = conv::conv_backward(x, layer.shape, self.params.data(layer.weight), g);
        for (a, b) in grads.data_mut(layer.weight).iter_mut().zip(&gw) {
            *a += b;
        }
        for (a, b) in grads.data_mut(layer.bias).iter_mut().zip(&gb) {
            *a += b;
        }
        gx
    }

    /// Parameter gradients for upstream gradients `grad_out`, one per head in
    /// the order the forward pass was run. Decoders that were not run get
    /// exactly zero gradient.
    pub fn backward(&self, cache: ForwardCache, grad_out: &[Image2D<f64>]) -> Result<ParamGrads, ModelError> {
        if grad_out.len() != cache.heads.len() {
            return Err(ModelError::GradCount { expected: cache.heads.len(), got: grad_out.len() });
        }
        for g in grad_out {
            if g.dims() != (cache.height, cache.width) {
                return Err(ModelError::GradShape {
                    got_h: g.height(),
                    got_w: g.width(),
                    height: cache.height,
                    width: cache.width,
                });
            }
        }
        let slope = self.config.leaky_slope;
        let mut grads = self.params.zeros_like();
        let levels = self.arch.encoder.len();
        let mut skip_grads: Vec<Option<Act>> = (0..levels).map(|_| None).collect();
        let add_skip = |slot: &mut Option<Act>, g: Act| match slot {
            Some(acc) => acc.add_assign(&g),
            None => *slot = Some(g),
        };

        for (hc, g_pred) in cache.heads.iter().zip(grad_out) {
            let layers = &self.arch.heads[hc.head];
            let g_z = Act {
                channels: 1,
                height: cache.height,
                width: cache.width,
                data: hc.prediction.iter().zip(g_pred.data()).map(|(&s, &g)| g * s * (1.0 - s)).collect(),
            };
            let mut g_d = self.conv_backward(layers.out, &hc.out_in, &g_z, &mut grads);
            for (dl, dc) in layers.levels.iter().zip(&hc.levels).rev() {
                let g_f = self.res_backward(dl.res, &dc.res, g_d, &mut grads);
                let g_zf = conv::leaky_relu_backward(&dc.zf, &g_f, slope);
                let g_cat = self.conv_backward(dl.fuse, &dc.cat, &g_zf, &mut grads);
                let (g_u, g_skip) = conv::split(&g_cat, dl.up.shape.cout);
                add_skip(&mut skip_grads[dl.level], g_skip);
                let g_zu = conv::leaky_relu_backward(&dc.zu, &g_u, slope);
                let g_up_in = self.conv_backward(dl.up, &dc.up_in, &g_zu, &mut grads);
                g_d = conv::upsample_nearest2_backward(&g_up_in);
            }
            add_skip(&mut skip_grads[levels - 1], g_d);
        }

        let mut g = skip_grads[levels - 1].take();
        for l in (0..levels).rev() {
            let Some(g_out) = g.take() else { break };
            let level = &self.arch.encoder[l];
            let ec = &cache.encoder[l];
            let g_e = self.res_backward(level.res, &ec.res, g_out, &mut grads);
            let g_ze = conv::leaky_relu_backward(&ec.z_entry, &g_e, slope);
            let g_in = self.conv_backward(level.entry, &ec.entry_in, &g_ze, &mut grads);
            if l > 0 {
                let mut next = g_in;
                if let Some(s) = skip_grads[l - 1].take() {
                    next.add_assign(&s);
                }
                g = Some(next);
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{ObjectiveWeights, SsimConfig};

    fn random(h: usize, w: usize, seed: u64) -> Image2D<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image2D::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    fn tiny(levels: usize, base: usize, strategy: Strategy) -> Model {
        Model::new(ModelConfig { levels, base_channels: base, strategy, seed: 11, ..Default::default() })
            .unwrap()
    }

    /// Layer-by-layer scalar count, written independently of `Architecture`.
    fn expected_scalars(levels: usize, base: usize, decoders: usize) -> usize {
        let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
        let c = |l: usize| base << l;
        let mut encoder = 0;
        for l in 0..levels {
            encoder += if l == 0 { conv(1, c(0), 3) } else { conv(c(l - 1), c(l), 3) };
            encoder += 2 * conv(c(l), c(l), 3);
        }
        let mut decoder = conv(c(0), 1, 1);
        for l in 0..levels - 1 {
            decoder += conv(c(l + 1), c(l), 3) + conv(2 * c(l), c(l), 3) + 2 * conv(c(l), c(l), 3);
        }
        encoder + decoders * decoder
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = ModelConfig::default();
        let a = init_params(&cfg).unwrap();
        assert_eq!(a, init_params(&cfg).unwrap());
        for (name, t) in a.entries() {
            if name.ends_with(".bias") {
                assert!(t.data.iter().all(|&v| v == 0.0), "{name}");
            } else {
                let bound = (6.0 / (t.shape[1] * t.shape[2] * t.shape[3]) as f64).sqrt();
                assert!(t.data.iter().all(|v| v.abs() <= bound), "{name}");
            }
        }
    }

    #[test]
    fn parameter_count_matches_layer_enumeration() {
        let sep = init_params(&ModelConfig::default()).unwrap();
        assert_eq!(sep.scalar_count(), expected_scalars(3, 8, 1));
        let shared = init_params(&ModelConfig { strategy: Strategy::Shared, ..Default::default() }).unwrap();
        assert_eq!(shared.scalar_count(), expected_scalars(3, 8, 4));
        assert!(shared.scalar_count() > sep.scalar_count());
        assert!(shared.scalar_count() < 4 * sep.scalar_count());
        assert_eq!(shared.decoder_groups().len(), 4);
    }

    #[test]
    fn separate_models_share_initial_encoder() {
        let models: Vec<ModelParams> = Organelle::ALL
            .into_iter()
            .map(|o| init_params(&ModelConfig { strategy: Strategy::Separate(o), ..Default::default() }).unwrap())
            .collect();
        let enc = |p: &ModelParams| -> Vec<Tensor> {
            p.entries().iter().filter(|(n, _)| n.starts_with("enc.")).map(|(_, t)| t.clone()).collect()
        };
        for m in &models[1..] {
            assert_eq!(enc(m), enc(&models[0]));
        }
        let shared = init_params(&ModelConfig { strategy: Strategy::Shared, ..Default::default() }).unwrap();
        assert_eq!(enc(&shared), enc(&models[0]));
    }

    #[test]
    fn forward_shape_range_determinism() {
        let m = Model::new(ModelConfig::default()).unwrap();
        let x = random(128, 128, 3);
        let (a, _) = m.forward(&x, Organelle::Nucleus).unwrap();
        let (b, _) = m.forward(&x, Organelle::Nucleus).unwrap();
        assert_eq!(a.dims(), (128, 128));
        assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(a, b);
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let m = Model::new(ModelConfig::default()).unwrap();
        assert!(matches!(
            m.forward(&random(30, 32, 0), Organelle::Nucleus),
            Err(ModelError::Indivisible { divisor: 4, .. })
        ));
        assert_eq!(
            m.forward(&random(32, 32, 0), Organelle::Actin).err(),
            Some(ModelError::UnknownOrganelle(Organelle::Actin))
        );
    }

    #[test]
    fn zero_upstream_gives_zero_grads_and_linearity() {
        let m = tiny(2, 3, Strategy::Separate(Organelle::Nucleus));
        let x = random(8, 8, 1);
        let (_, cache) = m.forward(&x, Organelle::Nucleus).unwrap();
        let zero = m.backward(cache, &[Image2D::filled(8, 8, 0.0)]).unwrap();
        assert!(zero.entries().iter().all(|(_, t)| t.data.iter().all(|&v| v == 0.0)));

        let g = random(8, 8, 2);
        let (_, c1) = m.forward(&x, Organelle::Nucleus).unwrap();
        let (_, c2) = m.forward(&x, Organelle::Nucleus).unwrap();
        let once = m.backward(c1, &[g.clone()]).unwrap();
        let twice = m.backward(c2, &[g.map(|v| 2.0 * v)]).unwrap();
        for ((_, a), (_, b)) in once.entries().iter().zip(twice.entries()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    fn worst_param_error(mut m: Model, o: Organelle) -> f64 {
        let (x, gt) = (random(8, 8, 5), random(8, 8, 6));
        let ssim = SsimConfig::new(7, 1.5, 1.0);
        crate::gradcheck::model_param_error(&mut m, &x, &gt, o, &ObjectiveWeights::default(), &ssim, 1e-6).unwrap()
    }

    #[test]
    fn parameter_grads_match_fd_single_level() {
        let err = worst_param_error(tiny(1, 2, Strategy::Separate(Organelle::Nucleus)), Organelle::Nucleus);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn parameter_grads_match_fd_with_decoder() {
        let err = worst_param_error(tiny(2, 2, Strategy::Separate(Organelle::Actin)), Organelle::Actin);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn parameter_grads_match_fd_shared() {
        let err = worst_param_error(tiny(2, 2, Strategy::Shared), Organelle::Tubulin);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn unused_decoders_get_zero_grads() {
        let m = tiny(2, 2, Strategy::Shared);
        let x = random(8, 8, 1);
        let (_, cache) = m.forward_heads(&x, &[Organelle::Nucleus]).unwrap();
        let grads = m.backward(cache, &[random(8, 8, 2)]).unwrap();
        for (name, t) in grads.entries() {
            let other = ["mitochondria", "tubulin", "actin"].iter().any(|o| name.starts_with(&format!("dec.{o}.")));
            if other {
                assert!(t.data.iter().all(|v| v.to_bits() == 0), "{name}");
            }
        }
    }

    #[test]
    fn strategy_round_trips_through_text() {
        for s in [Strategy::Shared, Strategy::Separate(Organelle::Mitochondria)] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("separate".parse::<Strategy>().is_err());
    }
}
