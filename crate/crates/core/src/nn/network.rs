use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::volume::{DisplacementField, Shape3, Volume3D};

use super::layers::{self, Conv3d, Features};
use super::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkMode {
    Teacher,
    Student,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub encoder_channels: Vec<usize>,
    pub bottleneck_channels: usize,
    pub decoder_channels: Vec<usize>,
    pub refine_channels: usize,
    pub refine_blocks: usize,
    pub leaky_slope: f64,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl NetworkConfig {
    pub fn teacher() -> Self {
        NetworkConfig {
            encoder_channels: vec![16, 32, 32, 64],
            bottleneck_channels: 64,
            decoder_channels: vec![64, 32, 32, 16],
            refine_channels: 16,
            refine_blocks: 3,
            leaky_slope: 0.2,
            in_channels: 2,
            out_channels: 3,
        }
    }

    pub fn student() -> Self {
        NetworkConfig {
            encoder_channels: vec![16, 24, 24, 32],
            bottleneck_channels: 32,
            decoder_channels: vec![32, 24, 24, 16],
            ..Self::teacher()
        }
    }

    /// A minimal network with the full topology, for gradient checks.
    pub fn tiny() -> Self {
        NetworkConfig {
            encoder_channels: vec![2, 2, 2, 2],
            bottleneck_channels: 2,
            decoder_channels: vec![2, 2, 2, 2],
            refine_channels: 2,
            refine_blocks: 1,
            ..Self::teacher()
        }
    }

    pub fn levels(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Every spatial dimension must be a multiple of this.
    pub fn divisor(&self) -> usize {
        1 << (self.levels().saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("network: {m}")));
        if self.encoder_channels.is_empty() {
            return bad("encoder_channels must not be empty");
        }
        if self.decoder_channels.len() != self.encoder_channels.len() {
            return bad("decoder_channels must mirror encoder_channels in length");
        }
        let all = self
            .encoder_channels
            .iter()
            .chain(&self.decoder_channels)
            .chain([&self.bottleneck_channels, &self.in_channels]);
        if all.into_iter().any(|&c| c == 0) {
            return bad("channel counts must be positive");
        }
        if self.refine_blocks > 0 && self.refine_channels == 0 {
            return bad("refine_channels must be positive");
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad("leaky_slope must lie in (0, 1)");
        }
        if self.out_channels != 3 {
            return bad("out_channels must be 3");
        }
        Ok(())
    }

    pub fn check_input(&self, shape: Shape3) -> Result<()> {
        shape.check_positive()?;
        let d = self.divisor();
        if shape.dims().iter().any(|&n| n % d != 0) {
            return Err(Error::Geometry(format!(
                "input {shape} is not divisible by {d} on every axis"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    encoders: Vec<Conv3d>,
    bottleneck: Conv3d,
    decoders: Vec<Conv3d>,
    refine: Vec<Conv3d>,
    head: Conv3d,
    tensors: Vec<TensorInfo>,
    total: usize,
}

impl Layout {
    fn new(cfg: &NetworkConfig) -> Layout {
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut add = |name: String, cin: usize, cout: usize, kernel: usize| {
            let mut conv = Conv3d { cin, cout, kernel, weight: total, bias: 0 };
            tensors.push(TensorInfo {
                name: format!("{name}.weight"),
                shape: vec![cout, cin, kernel, kernel, kernel],
                offset: total,
                len: conv.weight_len(),
            });
            total += conv.weight_len();
            conv.bias = total;
            tensors.push(TensorInfo { name: format!("{name}.bias"), shape: vec![cout], offset: total, len: cout });
            total += cout;
            conv
        };
        let levels = cfg.levels();
        let mut cin = cfg.in_channels;
        let mut encoders = Vec::new();
        for (i, &c) in cfg.encoder_channels.iter().enumerate() {
            encoders.push(add(format!("enc{i}"), cin, c, 3));
            cin = c;
        }
        let bottleneck = add("bottleneck".into(), cin, cfg.bottleneck_channels, 3);
        let mut prev = cfg.bottleneck_channels;
        let mut decoders = Vec::new();
        for (i, &c) in cfg.decoder_channels.iter().enumerate() {
            let skip = cfg.encoder_channels[levels - 1 - i];
            decoders.push(add(format!("dec{i}"), prev + skip, c, 3));
            prev = c;
        }
        let mut refine = Vec::new();
        for i in 0..cfg.refine_blocks {
            refine.push(add(format!("refine{i}"), prev, cfg.refine_channels, 3));
            prev = cfg.refine_channels;
        }
        let head = add("head".into(), prev, cfg.out_channels, 1);
        Layout { encoders, bottleneck, decoders, refine, head, tensors, total }
    }

    fn convs(&self) -> impl Iterator<Item = &Conv3d> {
        self.encoders
            .iter()
            .chain([&self.bottleneck])
            .chain(&self.decoders)
            .chain(&self.refine)
            .chain([&self.head])
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    input: Features<T>,
    enc: Vec<Features<T>>,
    pooled: Vec<(Features<T>, Vec<u8>)>,
    bottleneck: Features<T>,
    dec_in: Vec<Features<T>>,
    dec: Vec<Features<T>>,
    refine: Vec<Features<T>>,
}

impl<T> ForwardCache<T> {
    /// Spatial extent at the bottleneck.
    pub fn bottleneck_shape(&self) -> Shape3 {
        self.bottleneck.shape
    }
}

/// A U-Net mapping a (fixed, moving) pair, stacked as two input channels, to
/// a dense displacement field in voxel units.
#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationNetwork<T = f32> {
    config: NetworkConfig,
    mode: NetworkMode,
    seed: u64,
    params: Vec<T>,
    layout: Layout,
}

impl<T: Scalar> RegistrationNetwork<T> {
    pub fn build(config: NetworkConfig, mode: NetworkMode, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![T::ZERO; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = 2.0 / (1.0 + config.leaky_slope * config.leaky_slope);
        for conv in layout.convs().filter(|c| **c != layout.head) {
            let fan_in = (conv.cin * conv.taps()) as f64;
            let normal = Normal::new(0.0, (gain / fan_in).sqrt()).expect("positive std");
            for p in &mut params[conv.weight..conv.weight + conv.weight_len()] {
                *p = T::from_f64(normal.sample(&mut rng));
            }
        }
        Ok(RegistrationNetwork { config, mode, seed, params, layout })
    }

    /// Rebuilds a network around stored parameters.
    pub fn from_parts(config: NetworkConfig, mode: NetworkMode, seed: u64, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters for this config, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(RegistrationNetwork { config, mode, seed, params, layout })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn mode(&self) -> NetworkMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.layout.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        let t = self.layout.tensors.iter().find(|t| t.name == name)?;
        Some(&self.params[t.offset..t.offset + t.len])
    }

    /// Hex SHA-256 of the little-endian parameter bytes.
    pub fn checksum(&self) -> String {
        let mut bytes = Vec::with_capacity(self.params.len() * T::BYTES);
        for &p in &self.params {
            p.write_le(&mut bytes);
        }
        hex(&Sha256::digest(&bytes))
    }

    pub fn cast<U: Scalar>(&self) -> RegistrationNetwork<U> {
        RegistrationNetwork {
            config: self.config.clone(),
            mode: self.mode,
            seed: self.seed,
            params: self.params.iter().map(|p| U::from_f64(p.to_f64())).collect(),
            layout: self.layout.clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn input_from_slices(&self, shape: Shape3, fixed: &[f64], moving: &[f64]) -> Result<Features<T>> {
        self.config.check_input(shape)?;
        let n = shape.len();
        if fixed.len() != n || moving.len() != n {
            return Err(Error::BufferLength { shape, len: fixed.len().max(moving.len()), expected: n });
        }
        let data = fixed.iter().chain(moving).map(|&v| T::from_f64(v)).collect();
        Ok(Features { channels: 2, shape, data })
    }

    pub fn forward_features(&self, input: &Features<T>) -> Features<T> {
        self.run(input.clone(), false).0
    }

    pub fn forward_cached(&self, input: Features<T>) -> (Features<T>, ForwardCache<T>) {
        let (out, cache) = self.run(input, true);
        (out, cache.expect("cache requested"))
    }

    /// Predicts the displacement field for a pair.
    pub fn forward(&self, fixed: &Volume3D, moving: &Volume3D) -> Result<DisplacementField> {
        crate::volume::ensure_same(fixed.shape(), moving.shape())?;
        let shape = fixed.shape();
        let input = self.input_from_slices(shape, &fixed.to_f64(), &moving.to_f64())?;
        let out = self.forward_features(&input);
        DisplacementField::new(shape, out.data.iter().map(|v| v.to_f64() as f32).collect())
    }

    fn act(&self, mut x: Features<T>) -> Features<T> {
        layers::leaky_relu_inplace(&mut x, T::from_f64(self.config.leaky_slope));
        x
    }

    fn run(&self, input: Features<T>, keep: bool) -> (Features<T>, Option<ForwardCache<T>>) {
        let p = &self.params;
        let l = &self.layout;
        let levels = l.encoders.len();
        let mut enc = Vec::with_capacity(levels);
        let mut pooled = Vec::with_capacity(levels - 1);
        let mut x = self.act(l.encoders[0].forward(p, &input));
        for i in 1..levels {
            let (down, arg) = layers::max_pool2(&x);
            enc.push(x);
            x = self.act(l.encoders[i].forward(p, &down));
            pooled.push((down, arg));
        }
        let bottleneck = self.act(l.bottleneck.forward(p, &x));
        enc.push(x);
        let mut dec_in = Vec::with_capacity(levels);
        let mut dec: Vec<Features<T>> = Vec::with_capacity(levels);
        for i in 0..levels {
            let below = match dec.last() {
                None => bottleneck.clone(),
                Some(d) => layers::upsample2(d),
            };
            let cat = Features::concat(&below, &enc[levels - 1 - i]);
            let d = self.act(l.decoders[i].forward(p, &cat));
            if keep {
                dec_in.push(cat);
            }
            dec.push(d);
        }
        let mut refine = Vec::with_capacity(l.refine.len());
        for conv in &l.refine {
            let src = refine.last().unwrap_or_else(|| dec.last().expect("at least one level"));
            let r = self.act(conv.forward(p, src));
            refine.push(r);
        }
        let last = refine.last().unwrap_or_else(|| dec.last().expect("at least one level"));
        let out = l.head.forward(p, last);
        let cache = keep.then_some(ForwardCache { input, enc, pooled, bottleneck, dec_in, dec, refine });
        (out, cache)
    }

    /// Accumulates dL/dparams into `grad` given dL/d(output).
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Features<T>, grad: &mut [T]) {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer length");
        let p = &self.params;
        let l = &self.layout;
        let slope = T::from_f64(self.config.leaky_slope);
        let levels = l.encoders.len();
        let last_dec = cache.dec.last().expect("at least one level");

        let head_in = cache.refine.last().unwrap_or(last_dec);
        let mut g = l.head.backward(p, head_in, grad_out, grad, true).expect("input grad");
        for j in (0..l.refine.len()).rev() {
            layers::leaky_relu_backward(&cache.refine[j], &mut g, slope);
            let src = if j == 0 { last_dec } else { &cache.refine[j - 1] };
            g = l.refine[j].backward(p, src, &g, grad, true).expect("input grad");
        }

        let mut enc_grad: Vec<Option<Features<T>>> = vec![None; levels];
        for i in (0..levels).rev() {
            layers::leaky_relu_backward(&cache.dec[i], &mut g, slope);
            let gin = l.decoders[i].backward(p, &cache.dec_in[i], &g, grad, true).expect("input grad");
            let below_channels = cache.dec_in[i].channels - cache.enc[levels - 1 - i].channels;
            let (g_below, g_skip) = gin.split(below_channels);
            enc_grad[levels - 1 - i] = Some(g_skip);
            g = if i == 0 { g_below } else { layers::upsample2_backward(&g_below) };
        }

        layers::leaky_relu_backward(&cache.bottleneck, &mut g, slope);
        let mut g = l.bottleneck.backward(p, &cache.enc[levels - 1], &g, grad, true).expect("input grad");
        for i in (0..levels).rev() {
            let skip = enc_grad[i].take().expect("skip gradient");
            for (a, b) in g.data.iter_mut().zip(&skip.data) {
                *a += *b;
            }
            layers::leaky_relu_backward(&cache.enc[i], &mut g, slope);
            if i == 0 {
                l.encoders[0].backward(p, &cache.input, &g, grad, false);
            } else {
                let (down, arg) = &cache.pooled[i - 1];
                let gd = l.encoders[i].backward(p, down, &g, grad, true).expect("input grad");
                g = layers::max_pool2_backward(&gd, arg, cache.enc[i - 1].shape);
            }
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
