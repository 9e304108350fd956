use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layers::*;
use super::Tensor;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub in_channels: usize,
    pub image_size: usize,
    pub filters: usize,
    /// Number of conv blocks; each halves the spatial size.
    pub n_conv: usize,
    /// Blocks (counted from the input) followed by batch norm.
    pub n_bn: usize,
    pub num_classes: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            in_channels: 2,
            image_size: 32,
            filters: 80,
            n_conv: 2,
            n_bn: 1,
            num_classes: 3,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::config("net.in_channels", "must be positive"));
        }
        if self.filters == 0 {
            return Err(Error::config("net.filters", "must be positive"));
        }
        if self.n_conv == 0 {
            return Err(Error::config("net.n_conv", "need at least one conv block"));
        }
        if self.n_bn > self.n_conv {
            return Err(Error::config("net.n_bn", "cannot exceed net.n_conv"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("net.num_classes", "must be at least 2"));
        }
        let ladder = 1usize << self.n_conv.min(usize::BITS as usize - 1);
        if self.image_size == 0 || self.image_size % ladder != 0 {
            return Err(Error::config(
                "net.image_size",
                format!("must be a positive multiple of 2^n_conv = {ladder}"),
            ));
        }
        Ok(())
    }

    /// Spatial side length after the last pooling layer.
    pub fn final_size(&self) -> usize {
        self.image_size >> self.n_conv
    }

    /// Length of the flattened feature vector fed to the heads.
    pub fn feature_dim(&self) -> usize {
        self.filters * self.final_size() * self.final_size()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; caches kept for backward.
    Train,
    /// Running statistics; nothing cached.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub batches_seen: u64,
}

pub const BN_MOMENTUM: f64 = 0.1;

impl BnParams {
    fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::from_vec(&[channels], vec![1.0; channels]).unwrap(),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::from_vec(&[channels], vec![1.0; channels]).unwrap(),
            batches_seen: 0,
        }
    }

    /// The first batch sets the running statistics outright; later batches
    /// blend in with weight [`BN_MOMENTUM`].
    fn absorb(&mut self, cache: &BnCache) {
        let m = cache.count as f64;
        let correction = if cache.count > 1 { m / (m - 1.0) } else { 1.0 };
        let rate = if self.batches_seen == 0 { 1.0 } else { BN_MOMENTUM };
        for ch in 0..self.gamma.len() {
            let mean = &mut self.running_mean.data[ch];
            *mean += rate * (cache.batch_mean[ch] - *mean);
            let var = &mut self.running_var.data[ch];
            *var += rate * (cache.batch_var[ch] * correction - *var);
        }
        self.batches_seen += 1;
    }
}

/// Convolutional trunk shared by all heads of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGenerator {
    pub config: NetConfig,
    pub convs: Vec<ConvParams>,
    pub bns: Vec<BnParams>,
}

#[derive(Clone, Debug)]
struct BlockCache {
    conv: ConvCache,
    relu_out: Tensor,
    argmax: Vec<u32>,
    bn: Option<BnCache>,
}

#[derive(Clone, Debug)]
pub struct TrunkCache {
    blocks: Vec<BlockCache>,
    pooled_dims: Vec<Vec<usize>>,
}

impl TrunkCache {
    /// Which input element each pooled output came from, and whether it was
    /// active after ReLU. Two parameter settings with equal routing lie on
    /// the same smooth piece of the loss.
    pub fn routing(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for block in &self.blocks {
            for &src in &block.argmax {
                out.push(src);
                out.push(u32::from(block.relu_out.data[src as usize] > 0.0));
            }
        }
        out
    }
}

impl FeatureGenerator {
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut convs = Vec::with_capacity(config.n_conv);
        let mut channels = config.in_channels;
        for _ in 0..config.n_conv {
            let fan_in = channels * 9;
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dims = [config.filters, channels, 3, 3];
            convs.push(ConvParams {
                weight: uniform(&mut rng, &dims, bound),
                bias: Tensor::zeros(&[config.filters]),
            });
            channels = config.filters;
        }
        let bns = (0..config.n_bn).map(|_| BnParams::new(config.filters)).collect();
        Ok(Self { config, convs, bns })
    }

    /// Maps `[N, C, S, S]` images to `[N, feature_dim]` features.
    pub fn features(&self, batch: &Tensor, mode: Mode) -> Result<(Tensor, Option<TrunkCache>)> {
        let c = &self.config;
        if batch.dims.len() != 4
            || batch.dims[1] != c.in_channels
            || batch.dims[2] != c.image_size
            || batch.dims[3] != c.image_size
        {
            return Err(Error::shape(
                "input",
                format!(
                    "expected [N, {}, {s}, {s}], got {:?}",
                    c.in_channels,
                    batch.dims,
                    s = c.image_size
                ),
            ));
        }
        let train = mode == Mode::Train;
        let mut x = batch.clone();
        let mut blocks = Vec::new();
        let mut pooled_dims = Vec::new();
        for (i, conv) in self.convs.iter().enumerate() {
            let name = i + 1;
            let (y, conv_cache) =
                conv3x3_forward(&format!("conv{name}"), &x, &conv.weight, &conv.bias, train)?;
            let relu_out = relu_forward(&y);
            let (pooled, argmax) = maxpool2_forward(&format!("pool{name}"), &relu_out)?;
            pooled_dims.push(pooled.dims.clone());
            let mut bn_cache = None;
            x = match self.bns.get(i) {
                Some(bn) if train => {
                    let (out, cache) =
                        batchnorm_forward_train(&format!("bn{name}"), &pooled, &bn.gamma, &bn.beta)?;
                    bn_cache = Some(cache);
                    out
                }
                Some(bn) => batchnorm_forward_eval(
                    &format!("bn{name}"),
                    &pooled,
                    &bn.gamma,
                    &bn.beta,
                    &bn.running_mean,
                    &bn.running_var,
                )?,
                None => pooled,
            };
            if train {
                blocks.push(BlockCache {
                    conv: conv_cache.expect("train mode keeps conv cache"),
                    relu_out,
                    argmax,
                    bn: bn_cache,
                });
            }
        }
        let n = x.dims[0];
        x.dims = vec![n, c.feature_dim()];
        let cache = train.then_some(TrunkCache {
            blocks,
            pooled_dims,
        });
        Ok((x, cache))
    }

    /// Gradients in [`Self::trainable_mut`] order.
    pub fn backward(&self, cache: &TrunkCache, d_features: &Tensor) -> Vec<Tensor> {
        let mut per_block: Vec<Vec<Tensor>> = vec![Vec::new(); self.convs.len()];
        let mut d = d_features.clone();
        d.dims = cache.pooled_dims.last().unwrap().clone();
        for i in (0..self.convs.len()).rev() {
            let block = &cache.blocks[i];
            let mut bn_grads = Vec::new();
            if let Some(bn_cache) = &block.bn {
                let (dx, dg, db) = batchnorm_backward(bn_cache, &self.bns[i].gamma, &d);
                d = dx;
                bn_grads = vec![dg, db];
            }
            let d_relu = maxpool2_backward(&block.relu_out.dims, &block.argmax, &d);
            let d_conv = relu_backward(&block.relu_out, &d_relu);
            let (dx, dw, db) = conv3x3_backward(&block.conv, &self.convs[i].weight, &d_conv, i > 0);
            per_block[i].push(dw);
            per_block[i].push(db);
            per_block[i].extend(bn_grads);
            if let Some(dx) = dx {
                d = dx;
            }
        }
        per_block.into_iter().flatten().collect()
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// statistics.
    pub fn update_running_stats(&mut self, cache: &TrunkCache) {
        for (bn, block) in self.bns.iter_mut().zip(&cache.blocks) {
            if let Some(c) = &block.bn {
                bn.absorb(c);
            }
        }
    }

    /// Per block: conv weight, conv bias, then BN scale and shift if present.
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        let mut bns = self.bns.iter_mut();
        for conv in self.convs.iter_mut() {
            out.push(&mut conv.weight);
            out.push(&mut conv.bias);
            if let Some(bn) = bns.next() {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    pub fn trainable(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (i, conv) in self.convs.iter().enumerate() {
            out.push(&conv.weight);
            out.push(&conv.bias);
            if let Some(bn) = self.bns.get(i) {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// All tensors including running statistics, keyed `conv{i}.*` / `bn{i}.*`.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, conv) in self.convs.iter().enumerate() {
            let n = i + 1;
            out.push((format!("conv{n}.weight"), conv.weight.clone()));
            out.push((format!("conv{n}.bias"), conv.bias.clone()));
        }
        for (i, bn) in self.bns.iter().enumerate() {
            let n = i + 1;
            out.push((format!("bn{n}.gamma"), bn.gamma.clone()));
            out.push((format!("bn{n}.beta"), bn.beta.clone()));
            out.push((format!("bn{n}.running_mean"), bn.running_mean.clone()));
            out.push((format!("bn{n}.running_var"), bn.running_var.clone()));
            let seen = Tensor::from_vec(&[1], vec![bn.batches_seen as f64]).unwrap();
            out.push((format!("bn{n}.batches_seen"), seen));
        }
        out
    }

    pub fn from_named(config: NetConfig, tensors: &BTreeMap<String, Tensor>) -> Result<Self> {
        let mut model = Self::init(config, 0)?;
        let fetch = |name: String, like: &Tensor| -> Result<Tensor> {
            let t = tensors
                .get(&name)
                .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))?;
            if t.dims != like.dims {
                return Err(Error::Format(format!(
                    "tensor `{name}` has dims {:?}, expected {:?}",
                    t.dims, like.dims
                )));
            }
            Ok(t.clone())
        };
        for (i, conv) in model.convs.iter_mut().enumerate() {
            let n = i + 1;
            conv.weight = fetch(format!("conv{n}.weight"), &conv.weight)?;
            conv.bias = fetch(format!("conv{n}.bias"), &conv.bias)?;
        }
        for (i, bn) in model.bns.iter_mut().enumerate() {
            let n = i + 1;
            bn.gamma = fetch(format!("bn{n}.gamma"), &bn.gamma)?;
            bn.beta = fetch(format!("bn{n}.beta"), &bn.beta)?;
            bn.running_mean = fetch(format!("bn{n}.running_mean"), &bn.running_mean)?;
            bn.running_var = fetch(format!("bn{n}.running_var"), &bn.running_var)?;
            let seen = fetch(format!("bn{n}.batches_seen"), &Tensor::zeros(&[1]))?;
            bn.batches_seen = seen.data[0] as u64;
        }
        Ok(model)
    }
}

fn uniform(rng: &mut Rng, dims: &[usize], bound: f64) -> Tensor {
    let n = dims.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor {
        dims: dims.to_vec(),
        data,
    }
}

/// Dense softmax classifier for one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadClassifier {
    /// `[feature_dim, num_classes]`.
    pub weight: Tensor,
    pub bias: Tensor,
}

impl HeadClassifier {
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let f = config.feature_dim();
        let mut rng = rng_from_seed(seed);
        Ok(Self {
            weight: uniform(&mut rng, &[f, config.num_classes], 1.0 / (f as f64).sqrt()),
            bias: Tensor::zeros(&[config.num_classes]),
        })
    }

    pub fn zeros(config: NetConfig) -> Self {
        Self {
            weight: Tensor::zeros(&[config.feature_dim(), config.num_classes]),
            bias: Tensor::zeros(&[config.num_classes]),
        }
    }

    pub fn logits(&self, features: &Tensor) -> Result<Tensor> {
        dense_forward("dense", features, &self.weight, &self.bias)
    }

    pub fn probs(&self, features: &Tensor) -> Result<Tensor> {
        Ok(softmax(&self.logits(features)?))
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        vec![
            ("weight".to_string(), self.weight.clone()),
            ("bias".to_string(), self.bias.clone()),
        ]
    }
}

/// Trunk and head parameters drawn from independent sub-seeds.
pub fn init_params(config: NetConfig, seed: u64) -> Result<(FeatureGenerator, HeadClassifier)> {
    Ok((
        FeatureGenerator::init(config, derive_seed(seed, "trunk", 0))?,
        HeadClassifier::init(config, derive_seed(seed, "head", 0))?,
    ))
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub trunk: Option<TrunkCache>,
    pub features: Tensor,
    pub logits: Tensor,
}

pub fn forward(
    h: &FeatureGenerator,
    g: &HeadClassifier,
    batch: &Tensor,
    mode: Mode,
) -> Result<(Tensor, ForwardCache)> {
    let (features, trunk) = h.features(batch, mode)?;
    let logits = g.logits(&features)?;
    Ok((
        softmax(&logits),
        ForwardCache {
            trunk,
            features,
            logits,
        },
    ))
}

#[derive(Clone, Debug)]
pub struct Grads {
    pub trunk: Vec<Tensor>,
    pub head: Vec<Tensor>,
}

/// Train-mode forward plus backward. The returned cache carries the batch
/// statistics for [`FeatureGenerator::update_running_stats`].
pub fn loss_and_grads(
    h: &FeatureGenerator,
    g: &HeadClassifier,
    batch: &Tensor,
    labels: &[usize],
) -> Result<(f64, Grads, TrunkCache)> {
    let (features, trunk) = h.features(batch, Mode::Train)?;
    let trunk = trunk.expect("train mode returns a cache");
    let logits = g.logits(&features)?;
    let (loss, _, d_logits) = softmax_cross_entropy(&logits, labels)?;
    let (d_features, d_w, d_b) = dense_backward(&features, &g.weight, &d_logits);
    let trunk_grads = h.backward(&trunk, &d_features);
    Ok((
        loss,
        Grads {
            trunk: trunk_grads,
            head: vec![d_w, d_b],
        },
        trunk,
    ))
}
