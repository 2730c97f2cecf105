//! Resolution-preserving (RP) backbone and classifier head.
//!
//! Each block runs parallel stride-1 convolution branches (1x1, 3x3, 5x5 by
//! default, 64/32/16 channels) over the block input, concatenates them and
//! applies a rectifier. A 1x1 head maps the last block to class logits.
//! Nothing downsamples, so every map keeps the input height and width.

mod conv;

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use conv::Conv;

use crate::error::{Error, Result};
use crate::tensor::{softmax_channels, Real, TensorMap};

const CHECKPOINT_MAGIC: &[u8; 4] = b"L2HP";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RPBackboneConfig {
    pub blocks: usize,
    pub branch_kernels: Vec<usize>,
    pub branch_channels: Vec<usize>,
    pub input_channels: usize,
    pub num_classes: usize,
}

impl RPBackboneConfig {
    pub fn new(input_channels: usize, num_classes: usize) -> Self {
        Self {
            blocks: 5,
            branch_kernels: vec![1, 3, 5],
            branch_channels: vec![64, 32, 16],
            input_channels,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.blocks == 0 || self.input_channels == 0 {
            return Err(Error::Config(
                "blocks and input channels must be positive".into(),
            ));
        }
        if self.branch_kernels.is_empty() || self.branch_kernels.len() != self.branch_channels.len()
        {
            return Err(Error::Config(
                "branch kernels and channels must pair up".into(),
            ));
        }
        if self.branch_kernels.iter().any(|&k| k % 2 == 0) {
            return Err(Error::Config(
                "branch kernels must be odd for same padding".into(),
            ));
        }
        if self.branch_channels.contains(&0) {
            return Err(Error::Config("branch channels must be positive".into()));
        }
        Ok(())
    }

    /// Channels produced by every block (sum over branches).
    pub fn block_channels(&self) -> usize {
        self.branch_channels.iter().sum()
    }

    /// `(in, out, kernel)` of every convolution in declaration order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize, usize)> {
        let mut shapes = Vec::new();
        let mut input = self.input_channels;
        for _ in 0..self.blocks {
            for (&k, &c) in self.branch_kernels.iter().zip(&self.branch_channels) {
                shapes.push((input, c, k));
            }
            input = self.block_channels();
        }
        shapes.push((input, self.num_classes, 1));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(i, o, k)| o * i * k * k + o)
            .sum()
    }
}

/// Radius of the theoretical receptive field: each stride-1 layer widens it
/// by `(k - 1) / 2` of its largest kernel.
pub fn receptive_field(config: &RPBackboneConfig) -> usize {
    let widest = config.branch_kernels.iter().copied().max().unwrap_or(1);
    config.blocks * ((widest - 1) / 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<T> {
    pub config: RPBackboneConfig,
    pub seed: u64,
    /// Block branches in order, then the head.
    pub convs: Vec<Conv<T>>,
}

/// Per-parameter gradients with the same layout as [`NetParams::convs`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T> {
    pub convs: Vec<Conv<T>>,
}

impl<T: Real> ParamGrads<T> {
    pub fn zeros_like(params: &NetParams<T>) -> Self {
        Self {
            convs: params
                .convs
                .iter()
                .map(|c| Conv::zeros(c.in_channels, c.out_channels, c.kernel))
                .collect(),
        }
    }

    /// Every scalar in declaration order (weights then bias per layer).
    pub fn flat(&self) -> Vec<T> {
        flatten(&self.convs)
    }

    pub fn add_scaled(&mut self, other: &ParamGrads<T>, scale: T) {
        for (a, b) in self.convs.iter_mut().zip(&other.convs) {
            for (x, &y) in a.weight.iter_mut().zip(&b.weight) {
                *x += y * scale;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y * scale;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.convs
            .iter()
            .all(|c| c.weight.iter().chain(&c.bias).all(|v| v.is_finite()))
    }
}

fn flatten<T: Real>(convs: &[Conv<T>]) -> Vec<T> {
    let mut out = Vec::new();
    for c in convs {
        out.extend_from_slice(&c.weight);
        out.extend_from_slice(&c.bias);
    }
    out
}

/// Fan-in scaled uniform weights (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) and
/// zero biases, drawn in declaration order from a seeded ChaCha stream.
pub fn init_params<T: Real>(config: &RPBackboneConfig, seed: u64) -> Result<NetParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let convs = config
        .layer_shapes()
        .into_iter()
        .map(|(i, o, k)| {
            let mut conv = Conv::zeros(i, o, k);
            let bound = (6.0 / conv.fan_in() as f64).sqrt();
            for w in &mut conv.weight {
                *w = T::from_f64(rng.random_range(-bound..bound));
            }
            conv
        })
        .collect();
    Ok(NetParams {
        config: config.clone(),
        seed,
        convs,
    })
}

impl<T: Real> NetParams<T> {
    pub fn flat(&self) -> Vec<T> {
        flatten(&self.convs)
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(Conv::param_count).sum()
    }

    /// Mutable access to scalar `index` in [`NetParams::flat`] order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut T {
        for c in &mut self.convs {
            if index < c.weight.len() {
                return &mut c.weight[index];
            }
            index -= c.weight.len();
            if index < c.bias.len() {
                return &mut c.bias[index];
            }
            index -= c.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn cast<U: Real>(&self) -> NetParams<U> {
        let conv = |c: &Conv<T>| Conv {
            in_channels: c.in_channels,
            out_channels: c.out_channels,
            kernel: c.kernel,
            weight: c.weight.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            bias: c.bias.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        };
        NetParams {
            config: self.config.clone(),
            seed: self.seed,
            convs: self.convs.iter().map(conv).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.convs
            .iter()
            .all(|c| c.weight.iter().chain(&c.bias).all(|v| v.is_finite()))
    }

    fn blocks(&self) -> impl Iterator<Item = &[Conv<T>]> {
        let n = self.config.branch_kernels.len();
        self.convs[..self.convs.len() - 1].chunks(n)
    }

    fn head(&self) -> &Conv<T> {
        self.convs.last().expect("head layer")
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub logits: TensorMap<T>,
    /// Post-activation output of every block.
    pub features: Vec<TensorMap<T>>,
    pub cp_map: TensorMap<T>,
}

fn check_input<T: Real>(params: &NetParams<T>, image: &TensorMap<T>) -> Result<()> {
    if image.channels() != params.config.input_channels {
        return Err(Error::Shape(format!(
            "image has {} channels, network expects {}",
            image.channels(),
            params.config.input_channels
        )));
    }
    if image.height() == 0 || image.width() == 0 {
        return Err(Error::Shape("empty image".into()));
    }
    Ok(())
}

fn run_block<T: Real>(
    block: &[Conv<T>],
    input: &[T],
    h: usize,
    w: usize,
    out_channels: usize,
) -> Vec<T> {
    let plane = h * w;
    let mut out = vec![T::ZERO; out_channels * plane];
    let mut offset = 0;
    for conv in block {
        let span = conv.out_channels * plane;
        conv.forward(input, h, w, &mut out[offset..offset + span]);
        offset += span;
    }
    for v in &mut out {
        if !(*v > T::ZERO) {
            *v = T::ZERO;
        }
    }
    out
}

/// Full forward pass returning logits, every block output and the softmax
/// confidence map.
pub fn forward<T: Real>(params: &NetParams<T>, image: &TensorMap<T>) -> Result<ForwardPass<T>> {
    check_input(params, image)?;
    let (h, w) = (image.height(), image.width());
    let bc = params.config.block_channels();
    let mut features: Vec<TensorMap<T>> = Vec::with_capacity(params.config.blocks);
    for block in params.blocks() {
        let input = features
            .last()
            .map(|f| f.values())
            .unwrap_or(image.values());
        let out = run_block(block, input, h, w, bc);
        features.push(TensorMap::from_vec(bc, h, w, out)?);
    }
    let last = features.last().expect("at least one block");
    let mut logits = vec![T::ZERO; params.config.num_classes * h * w];
    params.head().forward(last.values(), h, w, &mut logits);
    let logits = TensorMap::from_vec(params.config.num_classes, h, w, logits)?;
    let cp_map = softmax_channels(&logits);
    Ok(ForwardPass {
        logits,
        features,
        cp_map,
    })
}

/// Forward pass that keeps only the final logits; used for inference.
pub fn forward_logits<T: Real>(
    params: &NetParams<T>,
    image: &TensorMap<T>,
) -> Result<TensorMap<T>> {
    check_input(params, image)?;
    let (h, w) = (image.height(), image.width());
    let bc = params.config.block_channels();
    let mut current: Option<Vec<T>> = None;
    for block in params.blocks() {
        let input = current.as_deref().unwrap_or(image.values());
        current = Some(run_block(block, input, h, w, bc));
    }
    let last = current.expect("at least one block");
    let mut logits = vec![T::ZERO; params.config.num_classes * h * w];
    params.head().forward(&last, h, w, &mut logits);
    TensorMap::from_vec(params.config.num_classes, h, w, logits)
}

/// Upstream gradients entering the network: on the logits and, optionally,
/// on each block output.
#[derive(Debug, Clone)]
pub struct Upstream<T> {
    pub logits: Option<TensorMap<T>>,
    pub features: Vec<Option<TensorMap<T>>>,
}

impl<T> Upstream<T> {
    pub fn logits_only(g: TensorMap<T>) -> Self {
        Self {
            logits: Some(g),
            features: Vec::new(),
        }
    }
}

/// Back-propagates `upstream` through the cached `pass`.
pub fn backward<T: Real>(
    params: &NetParams<T>,
    image: &TensorMap<T>,
    pass: &ForwardPass<T>,
    upstream: &Upstream<T>,
) -> Result<ParamGrads<T>> {
    check_input(params, image)?;
    let cfg = &params.config;
    let (h, w) = (image.height(), image.width());
    let plane = h * w;
    let bc = cfg.block_channels();
    if pass.features.len() != cfg.blocks || pass.features.iter().any(|f| f.shape() != (bc, h, w)) {
        return Err(Error::State("forward activations missing or stale".into()));
    }
    if let Some(g) = &upstream.logits {
        if g.shape() != (cfg.num_classes, h, w) {
            return Err(Error::Shape("logit gradient shape mismatch".into()));
        }
    }
    if upstream.features.len() > cfg.blocks {
        return Err(Error::Shape("more feature gradients than blocks".into()));
    }
    for g in upstream.features.iter().flatten() {
        if g.shape() != (bc, h, w) {
            return Err(Error::Shape("feature gradient shape mismatch".into()));
        }
    }

    let mut grads = ParamGrads::zeros_like(params);
    let feature_grad = |b: usize| upstream.features.get(b).and_then(|g| g.as_ref());

    // Gradient w.r.t. the last block output.
    let last = cfg.blocks - 1;
    let mut g: Vec<T> = match feature_grad(last) {
        Some(t) => t.values().to_vec(),
        None => vec![T::ZERO; bc * plane],
    };
    if let Some(gl) = &upstream.logits {
        let head_idx = grads.convs.len() - 1;
        params.head().backward(
            pass.features[last].values(),
            h,
            w,
            gl.values(),
            &mut grads.convs[head_idx],
            Some(&mut g),
        );
    }

    let n_branch = cfg.branch_kernels.len();
    for b in (0..cfg.blocks).rev() {
        let post = pass.features[b].values();
        for (gv, &pv) in g.iter_mut().zip(post) {
            if !(pv > T::ZERO) {
                *gv = T::ZERO;
            }
        }
        let input = if b == 0 {
            image.values()
        } else {
            pass.features[b - 1].values()
        };
        let in_ch = if b == 0 { cfg.input_channels } else { bc };
        let mut g_in = if b > 0 {
            match feature_grad(b - 1) {
                Some(t) => t.values().to_vec(),
                None => vec![T::ZERO; in_ch * plane],
            }
        } else {
            Vec::new()
        };
        let mut offset = 0;
        for i in 0..n_branch {
            let idx = b * n_branch + i;
            let conv = &params.convs[idx];
            let span = conv.out_channels * plane;
            let gi = if b > 0 {
                Some(g_in.as_mut_slice())
            } else {
                None
            };
            conv.backward(
                input,
                h,
                w,
                &g[offset..offset + span],
                &mut grads.convs[idx],
                gi,
            );
            offset += span;
        }
        g = g_in;
    }
    Ok(grads)
}

/// Writes an `L2HP` checkpoint: magic, config echo, seed, then every tensor
/// as little-endian `f32` in declaration order.
pub fn encode_checkpoint<T: Real>(params: &NetParams<T>) -> Vec<u8> {
    let cfg = &params.config;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        cfg.input_channels,
        cfg.num_classes,
        cfg.blocks,
        cfg.branch_kernels.len(),
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for (&k, &c) in cfg.branch_kernels.iter().zip(&cfg.branch_channels) {
        out.extend_from_slice(&(k as u32).to_le_bytes());
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    out.extend_from_slice(&params.seed.to_le_bytes());
    for v in params.flat() {
        out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<NetParams<f32>> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if bytes.len() - pos < n {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &bytes[pos..pos + n];
        pos += n;
        Ok(s)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("missing L2HP magic".into()));
    }
    let mut u32s = |n: usize| -> Result<Vec<usize>> {
        (0..n)
            .map(|_| {
                let b = take(4)?;
                Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
            })
            .collect()
    };
    let head = u32s(4)?;
    let pairs = u32s(head[3] * 2)?;
    let config = RPBackboneConfig {
        input_channels: head[0],
        num_classes: head[1],
        blocks: head[2],
        branch_kernels: pairs.iter().step_by(2).copied().collect(),
        branch_channels: pairs.iter().skip(1).step_by(2).copied().collect(),
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    let seed_bytes = take(8)?;
    let seed = u64::from_le_bytes(seed_bytes.try_into().expect("8 bytes"));
    let mut params = init_params::<f32>(&config, seed)?;
    let count = params.param_count();
    let payload = take(count * 4)?;
    if pos != bytes.len() {
        return Err(Error::Format(
            "trailing bytes after checkpoint tensors".into(),
        ));
    }
    for (i, c) in payload.chunks_exact(4).enumerate() {
        *params.param_mut(i) = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
    }
    Ok(params)
}

pub fn write_checkpoint<T: Real>(path: impl AsRef<Path>, params: &NetParams<T>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_checkpoint(params))?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<NetParams<f32>> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RPBackboneConfig {
        RPBackboneConfig {
            blocks: 2,
            branch_kernels: vec![1, 3, 5],
            branch_channels: vec![4, 2, 2],
            input_channels: 3,
            num_classes: 3,
        }
    }

    fn image(h: usize, w: usize, seed: u64) -> TensorMap<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..3 * h * w)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        TensorMap::from_vec(3, h, w, v).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params::<f32>(&small(), 1).unwrap();
        let b = init_params::<f32>(&small(), 1).unwrap();
        let c = init_params::<f32>(&small(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.flat(), c.flat());
        assert!(a.convs.iter().all(|c| c.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn rejects_single_class() {
        let mut cfg = small();
        cfg.num_classes = 1;
        assert!(matches!(init_params::<f32>(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn shapes_preserved() {
        let p = init_params::<f64>(&small(), 3).unwrap();
        let pass = forward(&p, &image(9, 7, 1)).unwrap();
        assert_eq!(pass.logits.shape(), (3, 9, 7));
        assert_eq!(pass.cp_map.shape(), (3, 9, 7));
        assert_eq!(pass.features.len(), 2);
        assert!(pass.features.iter().all(|f| f.shape() == (8, 9, 7)));
        let bad = TensorMap::<f64>::zeros(2, 9, 7);
        assert!(matches!(forward(&p, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn forward_logits_matches_forward() {
        let p = init_params::<f32>(&small(), 5).unwrap();
        let img = image(6, 6, 2).cast::<f32>();
        assert_eq!(
            forward(&p, &img).unwrap().logits,
            forward_logits(&p, &img).unwrap()
        );
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let p = init_params::<f64>(&small(), 3).unwrap();
        let img = image(5, 5, 4);
        let pass = forward(&p, &img).unwrap();
        let up = Upstream::logits_only(TensorMap::zeros(3, 5, 5));
        let g = backward(&p, &img, &pass, &up).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_state_error() {
        let p = init_params::<f64>(&small(), 3).unwrap();
        let img = image(5, 5, 4);
        let mut pass = forward(&p, &img).unwrap();
        pass.features.clear();
        let up = Upstream::logits_only(TensorMap::zeros(3, 5, 5));
        assert!(matches!(
            backward(&p, &img, &pass, &up),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = init_params::<f32>(&small(), 11).unwrap();
        let bytes = encode_checkpoint(&p);
        assert_eq!(&bytes[..4], b"L2HP");
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(encode_checkpoint(&back), bytes);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn receptive_field_radius() {
        let mut cfg = small();
        cfg.blocks = 1;
        cfg.branch_kernels = vec![3];
        cfg.branch_channels = vec![4];
        assert_eq!(receptive_field(&cfg), 1);
        assert_eq!(receptive_field(&RPBackboneConfig::new(3, 11)), 10);
        cfg.branch_kernels = vec![1];
        cfg.blocks = 4;
        assert_eq!(receptive_field(&cfg), 0);
    }
}
