//! The 2.5D classifier: one residual backbone shared by the three slices,
//! per-slice global pooling, elementwise max across slices, a linear head
//! and a sigmoid.

mod checkpoint;
mod pretrained;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_VERSION,
};
pub use pretrained::{load_pretrained_backbone, save_backbone_safetensors};

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    global_pool, global_pool_backward, join, max_pool_3x3s2, max_pool_backward, relu, relu_backward, BatchNorm2d,
    BnCache, Conv2d, GlobalPoolCache, MaxPoolCache, Param, ParamKind, SpatialPool, Tensor, Visit,
};
use crate::roi::Stack25D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// 18-layer residual network without its final pooling and fc layers.
    Resnet18,
    /// Three-stage miniature of the same design for fast tests.
    Stub,
}

impl Architecture {
    /// Stem (width, kernel, stride, pad, max pool) and stages (width, blocks, stride).
    fn layout(self) -> ((usize, usize, usize, usize, bool), &'static [(usize, usize, usize)]) {
        match self {
            Architecture::Resnet18 => ((64, 7, 2, 3, true), &[(64, 2, 1), (128, 2, 2), (256, 2, 2), (512, 2, 2)]),
            Architecture::Stub => ((8, 3, 1, 1, false), &[(8, 1, 1), (16, 1, 2), (32, 1, 2)]),
        }
    }

    pub fn feature_dim(self) -> usize {
        let (_, stages) = self.layout();
        stages.last().expect("at least one stage").0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainedInit {
    NaturalImageCorpus,
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub pooling: SpatialPool,
    pub init: PretrainedInit,
    /// safetensors file with torchvision-style backbone names.
    pub pretrained_weights: Option<PathBuf>,
    /// Expected SHA-256 of the pretrained file, hex.
    pub pretrained_sha256: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::Resnet18,
            pooling: SpatialPool::Average,
            init: PretrainedInit::Random,
            pretrained_weights: None,
            pretrained_sha256: None,
        }
    }
}

impl ModelConfig {
    pub fn stub() -> Self {
        ModelConfig {
            architecture: Architecture::Stub,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BasicBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    downsample: Option<(Conv2d, BatchNorm2d)>,
}

struct BlockCache {
    x: Tensor,
    bn1: BnCache,
    a1: Tensor,
    bn2: BnCache,
    ds: Option<BnCache>,
    out: Tensor,
}

impl BasicBlock {
    fn new(in_c: usize, out_c: usize, stride: usize) -> Self {
        BasicBlock {
            conv1: Conv2d::new(in_c, out_c, 3, stride, 1),
            bn1: BatchNorm2d::new(out_c),
            conv2: Conv2d::new(out_c, out_c, 3, 1, 1),
            bn2: BatchNorm2d::new(out_c),
            downsample: (stride != 1 || in_c != out_c)
                .then(|| (Conv2d::new(in_c, out_c, 1, stride, 0), BatchNorm2d::new(out_c))),
        }
    }

    fn forward_eval(&self, x: &Tensor) -> Tensor {
        let a1 = relu(&self.bn1.forward_eval(&self.conv1.forward(x)).0);
        let mut y = self.bn2.forward_eval(&self.conv2.forward(&a1)).0;
        match &self.downsample {
            Some((c, b)) => add_into(&mut y, &b.forward_eval(&c.forward(x)).0),
            None => add_into(&mut y, x),
        }
        relu(&y)
    }

    fn forward_train(&mut self, x: Tensor) -> (Tensor, BlockCache) {
        let (h1, bn1) = self.bn1.forward_train(&self.conv1.forward(&x));
        let a1 = relu(&h1);
        let (mut y, bn2) = self.bn2.forward_train(&self.conv2.forward(&a1));
        let ds = match &mut self.downsample {
            Some((c, b)) => {
                let (s, cache) = b.forward_train(&c.forward(&x));
                add_into(&mut y, &s);
                Some(cache)
            }
            None => {
                add_into(&mut y, &x);
                None
            }
        };
        let out = relu(&y);
        (
            out.clone(),
            BlockCache {
                x,
                bn1,
                a1,
                bn2,
                ds,
                out,
            },
        )
    }

    fn backward(&mut self, cache: BlockCache, dout: &Tensor) -> Tensor {
        let dsum = relu_backward(&cache.out, dout);
        let d = self.bn2.backward(&cache.bn2, &dsum);
        let d = self.conv2.backward(&cache.a1, &d);
        let d = relu_backward(&cache.a1, &d);
        let d = self.bn1.backward(&cache.bn1, &d);
        let mut dx = self.conv1.backward(&cache.x, &d);
        match (&mut self.downsample, &cache.ds) {
            (Some((c, b)), Some(bc)) => {
                let ds = b.backward(bc, &dsum);
                add_into(&mut dx, &c.backward(&cache.x, &ds));
            }
            _ => add_into(&mut dx, &dsum),
        }
        dx
    }
}

impl Visit for BasicBlock {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Param)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
        if let Some((c, b)) = &mut self.downsample {
            c.visit(&join(prefix, "downsample.0"), f);
            b.visit(&join(prefix, "downsample.1"), f);
        }
    }
}

fn add_into(y: &mut Tensor, x: &Tensor) {
    debug_assert_eq!(y.shape, x.shape);
    y.data.iter_mut().zip(&x.data).for_each(|(a, b)| *a += b);
}

/// Truncated residual trunk; parameter names follow torchvision.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub architecture: Architecture,
    conv1: Conv2d,
    bn1: BatchNorm2d,
    stem_pool: bool,
    layers: Vec<Vec<BasicBlock>>,
}

struct BackboneCache {
    x: Tensor,
    bn1: BnCache,
    a1: Tensor,
    pool: Option<MaxPoolCache>,
    blocks: Vec<BlockCache>,
}

impl Backbone {
    pub fn new(architecture: Architecture) -> Self {
        let ((width, k, stride, pad, stem_pool), stages) = architecture.layout();
        let mut in_c = width;
        let layers = stages
            .iter()
            .map(|&(w, blocks, s)| {
                (0..blocks)
                    .map(|b| {
                        let blk = BasicBlock::new(in_c, w, if b == 0 { s } else { 1 });
                        in_c = w;
                        blk
                    })
                    .collect()
            })
            .collect();
        Backbone {
            architecture,
            conv1: Conv2d::new(3, width, k, stride, pad),
            bn1: BatchNorm2d::new(width),
            stem_pool,
            layers,
        }
    }

    /// Spatial feature map of a batch of 3-channel images.
    pub fn forward_eval(&self, x: &Tensor) -> Tensor {
        let mut h = relu(&self.bn1.forward_eval(&self.conv1.forward(x)).0);
        if self.stem_pool {
            h = max_pool_3x3s2(&h).0;
        }
        for blk in self.layers.iter().flatten() {
            h = blk.forward_eval(&h);
        }
        h
    }

    fn forward_train(&mut self, x: Tensor) -> (Tensor, BackboneCache) {
        let (h1, bn1) = self.bn1.forward_train(&self.conv1.forward(&x));
        let a1 = relu(&h1);
        let (mut h, pool) = if self.stem_pool {
            let (p, c) = max_pool_3x3s2(&a1);
            (p, Some(c))
        } else {
            (a1.clone(), None)
        };
        let mut blocks = Vec::new();
        for blk in self.layers.iter_mut().flatten() {
            let (o, c) = blk.forward_train(h);
            blocks.push(c);
            h = o;
        }
        (
            h,
            BackboneCache {
                x,
                bn1,
                a1,
                pool,
                blocks,
            },
        )
    }

    fn backward(&mut self, cache: BackboneCache, dy: Tensor) {
        let mut d = dy;
        let mut caches = cache.blocks;
        for blk in self.layers.iter_mut().flatten().rev() {
            let c = caches.pop().expect("one cache per block");
            d = blk.backward(c, &d);
        }
        if let Some(pc) = &cache.pool {
            d = max_pool_backward(pc, &d);
        }
        let d = relu_backward(&cache.a1, &d);
        let d = self.bn1.backward(&cache.bn1, &d);
        // the input gradient is not needed
        let _ = self.conv1.backward(&cache.x, &d);
    }
}

impl Visit for Backbone {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Param)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (j, blk) in layer.iter_mut().enumerate() {
                blk.visit(&join(prefix, &format!("layer{}.{}", i + 1, j)), f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub backbone: Backbone,
    pub pooling: SpatialPool,
    /// (1, feature_dim)
    pub head_weight: Param,
    /// (1,)
    pub head_bias: Param,
}

impl Visit for Network {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Param)) {
        self.backbone.visit(&join(prefix, "backbone"), f);
        f(&join(prefix, "head.weight"), ParamKind::Trainable, &mut self.head_weight);
        f(&join(prefix, "head.bias"), ParamKind::Trainable, &mut self.head_bias);
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy on logits and its gradient per logit.
pub fn bce_with_logits(logits: &[f64], labels: &[bool]) -> (f64, Vec<f64>) {
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        let t = if y { 1.0 } else { 0.0 };
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - t) / n);
    }
    (loss / n, grad)
}

fn stack_batch(stacks: &[&Stack25D]) -> Result<Tensor> {
    let first = stacks.first().ok_or_else(|| Error::Invalid("empty batch".into()))?;
    let s = first.size;
    let mut data = Vec::with_capacity(stacks.len() * 9 * s * s);
    for st in stacks {
        if st.size != s || st.data.len() != 9 * s * s {
            return Err(Error::ShapeMismatch(format!(
                "stack of size {} in a batch of size {s}",
                st.size
            )));
        }
        data.extend_from_slice(&st.data);
    }
    Ok(Tensor::from_vec([stacks.len() * 3, 3, s, s], data))
}

/// Elementwise max over each group of three slice features; also returns
/// which slice won each entry (first on ties).
fn fuse_max(feats: &[f64], batch: usize, dim: usize) -> (Vec<f64>, Vec<u8>) {
    let mut fused = Vec::with_capacity(batch * dim);
    let mut arg = Vec::with_capacity(batch * dim);
    for b in 0..batch {
        for f in 0..dim {
            let mut best = 0u8;
            for s in 1..3u8 {
                if feats[(b * 3 + s as usize) * dim + f] > feats[(b * 3 + best as usize) * dim + f] {
                    best = s;
                }
            }
            fused.push(feats[(b * 3 + best as usize) * dim + f]);
            arg.push(best);
        }
    }
    (fused, arg)
}

impl Network {
    /// All-zero parameters (running variances 1).
    pub fn new(architecture: Architecture, pooling: SpatialPool) -> Self {
        let dim = architecture.feature_dim();
        Network {
            backbone: Backbone::new(architecture),
            pooling,
            head_weight: Param::filled(vec![1, dim], 0.0),
            head_bias: Param::filled(vec![1], 0.0),
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.backbone.architecture
    }

    pub fn feature_dim(&self) -> usize {
        self.head_weight.value.len()
    }

    /// Pooled 512-d (or stub-sized) features of single 3-channel images.
    pub fn image_features(&self, images: &Tensor) -> Vec<f64> {
        global_pool(&self.backbone.forward_eval(images), self.pooling).0
    }

    /// Max-fused features of each stack, inference mode.
    pub fn fused_features(&self, stacks: &[&Stack25D]) -> Result<Vec<f64>> {
        let x = stack_batch(stacks)?;
        let feats = self.image_features(&x);
        Ok(fuse_max(&feats, stacks.len(), self.feature_dim()).0)
    }

    fn head(&self, fused: &[f64]) -> Vec<f64> {
        let w = &self.head_weight.value;
        fused
            .chunks(w.len())
            .map(|f| f.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + self.head_bias.value[0])
            .collect()
    }

    /// Inference-mode logits.
    pub fn logits(&self, stacks: &[&Stack25D]) -> Result<Vec<f64>> {
        let z = self.head(&self.fused_features(stacks)?);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(z)
    }

    /// Positive-class probabilities, inference mode.
    pub fn predict(&self, stacks: &[&Stack25D]) -> Result<Vec<f64>> {
        Ok(self.logits(stacks)?.into_iter().map(sigmoid).collect())
    }

    /// Inference-mode loss with head gradients `(loss, d weight, d bias)`.
    pub fn head_loss_and_grad(&self, stacks: &[&Stack25D], labels: &[bool]) -> Result<(f64, Vec<f64>, f64)> {
        let fused = self.fused_features(stacks)?;
        let (loss, dz) = bce_with_logits(&self.head(&fused), labels);
        let dim = self.feature_dim();
        let mut dw = vec![0.0; dim];
        for (b, g) in dz.iter().enumerate() {
            for f in 0..dim {
                dw[f] += g * fused[b * dim + f];
            }
        }
        Ok((loss, dw, dz.iter().sum()))
    }

    pub fn zero_grad(&mut self) {
        self.visit("", &mut |_, _, p| p.zero_grad());
    }

    /// Training-mode forward and backward on one batch. Gradients are
    /// accumulated into the parameters; running statistics are updated.
    pub fn train_step_grads(&mut self, stacks: &[&Stack25D], labels: &[bool]) -> Result<f64> {
        if stacks.len() != labels.len() {
            return Err(Error::ShapeMismatch("batch and label counts differ".into()));
        }
        let x = stack_batch(stacks)?;
        let (fmap, cache) = self.backbone.forward_train(x);
        let (feats, pcache): (Vec<f64>, GlobalPoolCache) = global_pool(&fmap, self.pooling);
        let dim = self.feature_dim();
        let (fused, arg) = fuse_max(&feats, stacks.len(), dim);
        let logits = self.head(&fused);
        let (loss, dz) = bce_with_logits(&logits, labels);
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        let mut dfeats = vec![0.0; feats.len()];
        for (b, &g) in dz.iter().enumerate() {
            self.head_bias.grad[0] += g;
            for f in 0..dim {
                self.head_weight.grad[f] += g * fused[b * dim + f];
                dfeats[(b * 3 + arg[b * dim + f] as usize) * dim + f] = g * self.head_weight.value[f];
            }
        }
        let dmap = global_pool_backward(&pcache, &dfeats);
        self.backbone.backward(cache, dmap);
        Ok(loss)
    }

    /// Named copies of every tensor, in visit order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::new();
        let mut me = self.clone();
        me.visit("", &mut |name, _, p| out.push((name.to_string(), p.shape.clone(), p.value.clone())));
        out
    }
}

/// Random parameters: Kaiming-normal (fan-out) convolutions, unit batch-norm
/// scales, head weights uniform in ±1/sqrt(dim) and a zero head bias. The
/// backbone is then overwritten from pretrained weights if configured.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<Network> {
    let mut net = Network::new(cfg.architecture, cfg.pooling);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    net.backbone.visit("", &mut |name, kind, p| {
        if kind == ParamKind::Trainable && p.shape.len() == 4 {
            let fan_out = (p.shape[0] * p.shape[2] * p.shape[3]) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_out).sqrt()).expect("positive std");
            p.value.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        } else {
            debug_assert!(!name.is_empty());
        }
    });
    let bound = 1.0 / (net.feature_dim() as f64).sqrt();
    net.head_weight
        .value
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-bound..bound));
    if cfg.init == PretrainedInit::NaturalImageCorpus {
        let path = cfg
            .pretrained_weights
            .as_ref()
            .ok_or_else(|| Error::Pretrained("pretrained init requested but no weight file configured".into()))?;
        load_pretrained_backbone(&mut net.backbone, path, cfg.pretrained_sha256.as_deref())?;
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{rel_error, numeric_grad};
    use crate::roi::{RoiRect, Stack25D};

    pub(crate) fn stack(size: usize, seed: u64) -> Stack25D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Stack25D {
            size,
            data: (0..9 * size * size).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            triplet: [0, 1, 2],
            roi: RoiRect {
                row_min: 0,
                row_max: size - 1,
                col_min: 0,
                col_max: size - 1,
                margin_fraction: 0.0,
            },
        }
    }

    #[test]
    fn feature_dims() {
        assert_eq!(Architecture::Resnet18.feature_dim(), 512);
        let net = init_params(&ModelConfig::default(), 0).unwrap();
        let x = Tensor::zeros([1, 3, 32, 32]);
        assert_eq!(net.image_features(&x).len(), 512);
        let n = net.named_tensors();
        assert!(n.iter().any(|(k, _, _)| k == "backbone.layer4.1.bn2.running_var"));
        assert!(n.iter().any(|(k, _, _)| k == "backbone.layer2.0.downsample.0.weight"));
        let params: usize = n
            .iter()
            .filter(|(k, _, _)| !k.contains("running"))
            .map(|(_, s, _)| s.iter().product::<usize>())
            .sum();
        // torchvision resnet18 minus its 513_000-parameter fc layer, plus our 513-parameter head
        assert_eq!(params, 11_689_512 - 513_000 + 513);
    }

    #[test]
    fn zero_input_gives_one_half() {
        let net = init_params(&ModelConfig::stub(), 1).unwrap();
        let mut s = stack(8, 0);
        s.data.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(net.predict(&[&s]).unwrap()[0], 0.5);
    }

    #[test]
    fn same_seed_same_params() {
        let a = init_params(&ModelConfig::stub(), 5).unwrap();
        let b = init_params(&ModelConfig::stub(), 5).unwrap();
        let c = init_params(&ModelConfig::stub(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        // training mode: batch statistics make every parameter's gradient
        // depend on the whole batch
        let mut net = init_params(&ModelConfig::stub(), 2).unwrap();
        let stacks = [stack(8, 1), stack(8, 2), stack(8, 3)];
        let refs: Vec<&Stack25D> = stacks.iter().collect();
        let labels = [true, false, true];
        net.zero_grad();
        let base = net.clone();
        net.train_step_grads(&refs, &labels).unwrap();
        let loss_of = |n: &Network| -> f64 {
            let mut n = n.clone();
            n.train_step_grads(&refs, &labels).unwrap()
        };
        let mut analytic = Vec::new();
        net.visit("", &mut |name, kind, p| {
            if kind == ParamKind::Trainable {
                analytic.push((name.to_string(), p.grad.clone()));
            }
        });
        for (name, grad) in analytic.iter().filter(|(n, _)| {
            n == "backbone.conv1.weight" || n == "backbone.layer2.0.downsample.1.weight" || n.starts_with("head")
        }) {
            let mut values = Vec::new();
            let mut probe = base.clone();
            probe.visit("", &mut |n, _, p| {
                if n == name {
                    values = p.value.clone();
                }
            });
            let take = values.len().min(24);
            let mut v = values[..take].to_vec();
            let numeric = numeric_grad(&mut v, |vals| {
                let mut n = base.clone();
                n.visit("", &mut |pn, _, p| {
                    if pn == name {
                        p.value[..take].copy_from_slice(vals);
                    }
                });
                loss_of(&n)
            });
            let err = rel_error(&grad[..take], &numeric);
            assert!(err < 1e-4, "{name}: {err}");
        }
    }
}
