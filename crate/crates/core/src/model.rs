//! The 1-D CNN classifier.
//!
//! Each block is `conv (valid, stride 1) -> batch norm -> ReLU -> max pool`.
//! The pooled output of the last block is flattened channel-major and fed to
//! one dense layer followed by a softmax over the classes.
//!
//! With the default configuration (2151 bands, filters `[64, 128, 32]`,
//! kernel 7, pools `[9, 5, 7]`) the per-stage lengths are
//! `2145, 238, 232, 46, 40, 5` and the dense layer sees `5 * 32 = 160` features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::batchnorm::{self, BatchNormCache, Mode, RunningStats};
use crate::ops::conv::{self, ConvDims};
use crate::ops::{self, PoolIndices};
use crate::tensor::NumericArray;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub input_length: usize,
    pub conv_filters: Vec<usize>,
    pub conv_kernel: usize,
    pub pool_windows: Vec<usize>,
    pub num_classes: usize,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            input_length: 2151,
            conv_filters: vec![64, 128, 32],
            conv_kernel: 7,
            pool_windows: vec![9, 5, 7],
            num_classes: 2,
        }
    }
}

/// Lengths along the band axis after every conv and pool stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeAudit {
    /// `[conv1, pool1, conv2, pool2, ...]`; may be non-positive for a bad config.
    pub stage_lengths: Vec<i64>,
    /// Flattened feature count entering the dense layer.
    pub dense_input: i64,
}

impl ShapeAudit {
    fn stage_name(i: usize) -> String {
        let kind = if i % 2 == 0 { "conv" } else { "pool" };
        format!("{kind}{}", i / 2 + 1)
    }

    /// The first stage whose length is not positive.
    pub fn first_invalid(&self) -> Option<(String, i64)> {
        self.stage_lengths
            .iter()
            .position(|&l| l < 1)
            .map(|i| (Self::stage_name(i), self.stage_lengths[i]))
    }
}

pub fn feature_lengths(config: &ArchitectureConfig) -> ShapeAudit {
    let mut len = config.input_length as i64;
    let mut stage_lengths = Vec::with_capacity(2 * config.conv_filters.len());
    let blocks = config.conv_filters.len().min(config.pool_windows.len());
    for &w in &config.pool_windows[..blocks] {
        len = len - config.conv_kernel as i64 + 1;
        stage_lengths.push(len);
        len = if len > 0 && w > 0 { len / w as i64 } else { 0 };
        stage_lengths.push(len);
    }
    let channels = if blocks == 0 {
        1
    } else {
        config.conv_filters[blocks - 1] as i64
    };
    ShapeAudit {
        stage_lengths,
        dense_input: len * channels,
    }
}

impl ArchitectureConfig {
    pub fn validate(&self) -> Result<ShapeAudit> {
        if self.input_length == 0 {
            return Err(Error::Config("input_length must be positive".into()));
        }
        if self.conv_filters.len() != self.pool_windows.len() {
            return Err(Error::Config(format!(
                "{} conv blocks but {} pooling windows",
                self.conv_filters.len(),
                self.pool_windows.len()
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if !self.conv_filters.is_empty() && self.conv_kernel == 0 {
            return Err(Error::Config("conv_kernel must be positive".into()));
        }
        if let Some(i) = self.conv_filters.iter().position(|&f| f == 0) {
            return Err(Error::Config(format!("conv{} has zero filters", i + 1)));
        }
        if let Some(i) = self.pool_windows.iter().position(|&w| w == 0) {
            return Err(Error::Config(format!("pool{} has a zero window", i + 1)));
        }
        let audit = feature_lengths(self);
        if let Some((stage, len)) = audit.first_invalid() {
            return Err(Error::Config(format!(
                "input length {} leaves {stage} with length {len}",
                self.input_length
            )));
        }
        Ok(audit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlockParams {
    /// `[C_out, C_in, K]`
    pub kernels: NumericArray,
    pub bias: NumericArray,
    pub gamma: NumericArray,
    pub beta: NumericArray,
    pub running: RunningStats,
}

/// All learnable parameters plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ArchitectureConfig,
    pub blocks: Vec<ConvBlockParams>,
    /// `[F, num_classes]`
    pub dense_weights: NumericArray,
    pub dense_bias: NumericArray,
}

fn he_normal(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> NumericArray {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| normal.sample(rng)).collect();
    NumericArray::from_parts(shape.to_vec(), data)
}

/// He-normal kernels and dense weights, zero biases, `gamma = 1`, `beta = 0`,
/// running mean 0 and variance 1. Deterministic in `seed`.
pub fn build_model(config: &ArchitectureConfig, seed: u64) -> Result<ModelParams> {
    let audit = config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c_in = 1;
    let mut blocks = Vec::with_capacity(config.conv_filters.len());
    for &c_out in &config.conv_filters {
        let k = config.conv_kernel;
        blocks.push(ConvBlockParams {
            kernels: he_normal(&[c_out, c_in, k], c_in * k, &mut rng),
            bias: NumericArray::zeros(&[c_out]),
            gamma: NumericArray::filled(&[c_out], 1.0),
            beta: NumericArray::zeros(&[c_out]),
            running: RunningStats::new(c_out),
        });
        c_in = c_out;
    }
    let features = audit.dense_input as usize;
    Ok(ModelParams {
        config: config.clone(),
        blocks,
        dense_weights: he_normal(&[features, config.num_classes], features, &mut rng),
        dense_bias: NumericArray::zeros(&[config.num_classes]),
    })
}

#[derive(Debug, Clone)]
struct BlockCache {
    /// Input of the convolution, `[N, C_in, L]`.
    conv_input: NumericArray,
    bn: BatchNormCache,
    /// Batch-norm output, i.e. the ReLU input.
    relu_input: NumericArray,
    pool: PoolIndices,
    window: usize,
}

/// Intermediates from a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    /// Pooled, flattened output of the last block, `[N, F]`.
    flat: NumericArray,
    probs: NumericArray,
}

impl ForwardCache {
    pub fn probabilities(&self) -> &NumericArray {
        &self.probs
    }

    pub fn batch_size(&self) -> usize {
        self.flat.dim(0)
    }

    /// Smallest |pre-activation| over every ReLU input.
    pub fn min_relu_margin(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.relu_input.data())
            .fold(f64::INFINITY, |m, &v| m.min(v.abs()))
    }

    /// Smallest gap between the winner of a pooling window and its runner-up,
    /// over windows with a positive winner.
    pub fn min_pool_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for b in &self.blocks {
            let act = ops::relu(&b.relu_input);
            let x = act.data();
            let len = b.relu_input.dim(2);
            for &best in b.pool.argmax() {
                // an all-zero window passes no gradient whichever index wins
                if x[best] <= 0.0 {
                    continue;
                }
                let start = best - (best % len) % b.window;
                for j in (start..start + b.window).filter(|&j| j != best) {
                    margin = margin.min(x[best] - x[j]);
                }
            }
        }
        margin
    }
}

/// Gradients for every learnable parameter, laid out like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub blocks: Vec<BlockGrads>,
    pub dense_weights: NumericArray,
    pub dense_bias: NumericArray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub kernels: NumericArray,
    pub bias: NumericArray,
    pub gamma: NumericArray,
    pub beta: NumericArray,
}

impl ModelGrads {
    /// Same order as [`ModelParams::learnable`].
    pub fn arrays(&self) -> Vec<&NumericArray> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &self.blocks {
            out.extend([&b.kernels, &b.bias, &b.gamma, &b.beta]);
        }
        out.push(&self.dense_weights);
        out.push(&self.dense_bias);
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for b in &mut self.blocks {
            for a in [&mut b.kernels, &mut b.bias, &mut b.gamma, &mut b.beta] {
                a.scale(factor);
            }
        }
        self.dense_weights.scale(factor);
        self.dense_bias.scale(factor);
    }
}

/// Batched valid convolution over `[N, C_in, L]`.
fn conv_batch(x: &NumericArray, kernels: &NumericArray, bias: &NumericArray) -> NumericArray {
    let (n, c_in, len) = (x.dim(0), x.dim(1), x.dim(2));
    let dims = ConvDims {
        c_in,
        c_out: kernels.dim(0),
        len,
        k: kernels.dim(2),
    };
    let per = dims.c_out * dims.out_len();
    let mut out = vec![0.0; n * per];
    for s in 0..n {
        conv::forward_into(
            dims,
            x.outer(s),
            kernels.data(),
            bias.data(),
            &mut out[s * per..(s + 1) * per],
        );
    }
    NumericArray::from_parts(vec![n, dims.c_out, dims.out_len()], out)
}

impl ModelParams {
    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    /// Learnable arrays in a fixed order: per block kernels, bias, gamma,
    /// beta; then dense weights and bias.
    pub fn learnable(&self) -> Vec<&NumericArray> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &self.blocks {
            out.extend([&b.kernels, &b.bias, &b.gamma, &b.beta]);
        }
        out.push(&self.dense_weights);
        out.push(&self.dense_bias);
        out
    }

    pub fn learnable_mut(&mut self) -> Vec<&mut NumericArray> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &mut self.blocks {
            out.extend([&mut b.kernels, &mut b.bias, &mut b.gamma, &mut b.beta]);
        }
        out.push(&mut self.dense_weights);
        out.push(&mut self.dense_bias);
        out
    }

    /// Stable names for [`Self::learnable`], e.g. `block0.kernels`.
    pub fn learnable_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.blocks.len() {
            for p in ["kernels", "bias", "gamma", "beta"] {
                out.push(format!("block{i}.{p}"));
            }
        }
        out.push("dense.weights".into());
        out.push("dense.bias".into());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.learnable().iter().map(|a| a.len()).sum()
    }

    fn input_view(&self, batch: &NumericArray) -> Result<NumericArray> {
        if batch.rank() != 2 || batch.dim(1) != self.config.input_length {
            return Err(Error::shape(
                "forward",
                format!(
                    "batch {:?} does not have width input_length={}",
                    batch.shape(),
                    self.config.input_length
                ),
            ));
        }
        batch.ensure_finite("forward")?;
        batch.clone().reshape(vec![batch.dim(0), 1, batch.dim(1)])
    }

    fn head(&self, pooled: NumericArray) -> Result<(NumericArray, NumericArray)> {
        let n = pooled.dim(0);
        let flat = pooled.reshape(vec![n, self.dense_weights.dim(0)])?;
        let logits = ops::dense(&flat, &self.dense_weights, &self.dense_bias)?;
        Ok((flat, ops::softmax(&logits)?))
    }

    /// Train-mode forward pass. Uses batch statistics and updates the
    /// batch-norm running statistics; nothing else in `self` changes.
    pub fn forward_train(&mut self, batch: &NumericArray) -> Result<(NumericArray, ForwardCache)> {
        let mut x = self.input_view(batch)?;
        let windows = self.config.pool_windows.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (block, &window) in self.blocks.iter_mut().zip(&windows) {
            let z = conv_batch(&x, &block.kernels, &block.bias);
            let (bn_out, bn_cache) =
                batchnorm::batchnorm1d(&z, &block.gamma, &block.beta, Some(&mut block.running), Mode::Train)?;
            let act = ops::relu(&bn_out);
            let (pooled, pool) = ops::maxpool1d(&act, window)?;
            caches.push(BlockCache {
                conv_input: x,
                bn: bn_cache.expect("train mode returns a cache"),
                relu_input: bn_out,
                pool,
                window,
            });
            x = pooled;
        }
        let (flat, probs) = self.head(x)?;
        Ok((
            probs.clone(),
            ForwardCache {
                blocks: caches,
                flat,
                probs,
            },
        ))
    }

    /// Eval-mode forward pass with running statistics; pure.
    pub fn forward_eval(&self, batch: &NumericArray) -> Result<NumericArray> {
        let mut x = self.input_view(batch)?;
        for (block, &window) in self.blocks.iter().zip(&self.config.pool_windows) {
            let z = conv_batch(&x, &block.kernels, &block.bias);
            let bn_out = batchnorm::normalize_with_running(&z, &block.gamma, &block.beta, &block.running)?;
            let (pooled, _) = ops::maxpool1d(&ops::relu(&bn_out), window)?;
            x = pooled;
        }
        Ok(self.head(x)?.1)
    }

    /// Eval-mode probabilities for a large set, processed in chunks.
    pub fn predict_proba(&self, features: &NumericArray, chunk: usize) -> Result<NumericArray> {
        let n = features.dim(0);
        let mut out = Vec::with_capacity(n * self.config.num_classes);
        let idx: Vec<usize> = (0..n).collect();
        for part in idx.chunks(chunk.max(1)) {
            let p = self.forward_eval(&features.select_outer(part)?)?;
            out.extend_from_slice(p.data());
        }
        Ok(NumericArray::from_parts(vec![n, self.config.num_classes], out))
    }

    /// Gradients of the loss with respect to every learnable parameter, given
    /// the loss gradient with respect to the logits. Does not modify `self`.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &NumericArray) -> Result<ModelGrads> {
        if cache.blocks.len() != self.blocks.len()
            || cache.flat.dim(1) != self.dense_weights.dim(0)
            || cache
                .blocks
                .iter()
                .zip(&self.blocks)
                .any(|(c, p)| c.conv_input.dim(1) != p.kernels.dim(1) || c.bn.shape()[1] != p.kernels.dim(0))
        {
            return Err(Error::shape(
                "backward",
                "forward cache was not produced by a model with these parameters",
            ));
        }
        let n = cache.batch_size();
        if d_logits.shape() != [n, self.config.num_classes] {
            return Err(Error::shape(
                "backward",
                format!("d_logits {:?} != [{n}, {}]", d_logits.shape(), self.config.num_classes),
            ));
        }
        d_logits.ensure_finite("backward")?;

        let dense = ops::dense_backward(&cache.flat, &self.dense_weights, d_logits)?;
        let mut d_params = dense.d_params;
        let dense_weights = d_params.remove("weights").expect("dense weights grad");
        let dense_bias = d_params.remove("bias").expect("dense bias grad");

        let mut grad = dense.d_input;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, (p, c)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let d_act = ops::maxpool1d_backward(&c.pool, &grad)?;
            let d_bn = ops::relu_backward(&c.relu_input, &d_act)?;
            let bn = batchnorm::batchnorm1d_backward(&c.bn, &p.gamma, &d_bn)?;
            let mut bn_params = bn.d_params;

            let x = &c.conv_input;
            let dims = ConvDims {
                c_in: x.dim(1),
                c_out: p.kernels.dim(0),
                len: x.dim(2),
                k: p.kernels.dim(2),
            };
            let mut dw = vec![0.0; p.kernels.len()];
            let mut db = vec![0.0; dims.c_out];
            let need_dx = i > 0;
            let mut dx = if need_dx { vec![0.0; x.len()] } else { Vec::new() };
            let per_in = x.outer_stride();
            for s in 0..n {
                let dx_s = need_dx.then(|| &mut dx[s * per_in..(s + 1) * per_in]);
                conv::backward_accumulate(
                    dims,
                    x.outer(s),
                    p.kernels.data(),
                    bn.d_input.outer(s),
                    dx_s,
                    &mut dw,
                    &mut db,
                );
            }
            blocks.push(BlockGrads {
                kernels: NumericArray::from_parts(p.kernels.shape().to_vec(), dw),
                bias: NumericArray::from_parts(vec![dims.c_out], db),
                gamma: bn_params.remove("gamma").expect("gamma grad"),
                beta: bn_params.remove("beta").expect("beta grad"),
            });
            if need_dx {
                grad = NumericArray::from_parts(x.shape().to_vec(), dx);
            }
        }
        blocks.reverse();
        let grads = ModelGrads {
            blocks,
            dense_weights,
            dense_bias,
        };
        for a in grads.arrays() {
            a.ensure_finite("backward")?;
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{self, CostWeights};

    fn tiny() -> ArchitectureConfig {
        ArchitectureConfig {
            input_length: 32,
            conv_filters: vec![2, 2, 2],
            conv_kernel: 3,
            pool_windows: vec![2, 2, 2],
            num_classes: 2,
        }
    }

    fn batch(n: usize, len: usize, seed: u64) -> NumericArray {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        NumericArray::new(vec![n, len], (0..n * len).map(|_| normal.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn default_shape_audit() {
        let audit = feature_lengths(&ArchitectureConfig::default());
        assert_eq!(audit.stage_lengths, vec![2145, 238, 232, 46, 40, 5]);
        assert_eq!(audit.dense_input, 160);
    }

    #[test]
    fn other_shape_audits() {
        let empty = ArchitectureConfig {
            conv_filters: vec![],
            pool_windows: vec![],
            ..ArchitectureConfig::default()
        };
        let audit = feature_lengths(&empty);
        assert!(audit.stage_lengths.is_empty());
        assert_eq!(audit.dense_input, 2151);

        let one = ArchitectureConfig {
            input_length: 63,
            conv_filters: vec![5],
            conv_kernel: 7,
            pool_windows: vec![8],
            num_classes: 2,
        };
        let audit = feature_lengths(&one);
        assert_eq!(audit.stage_lengths, vec![57, 7]);
        assert_eq!(audit.dense_input, 35);
    }

    #[test]
    fn build_default_model() {
        let p = build_model(&ArchitectureConfig::default(), 0).unwrap();
        assert_eq!(p.blocks[0].kernels.shape(), &[64, 1, 7]);
        assert_eq!(p.blocks[1].kernels.shape(), &[128, 64, 7]);
        assert_eq!(p.blocks[2].kernels.shape(), &[32, 128, 7]);
        assert_eq!(p.dense_weights.shape(), &[160, 2]);
        assert!(p.blocks.iter().all(|b| b.bias.data().iter().all(|&v| v == 0.0)));
        assert!(p.blocks.iter().all(|b| b.running.var.iter().all(|&v| v == 1.0)));
        assert_eq!(p, build_model(&ArchitectureConfig::default(), 0).unwrap());
        assert_ne!(p, build_model(&ArchitectureConfig::default(), 1).unwrap());
    }

    #[test]
    fn init_scale_is_he() {
        let p = build_model(&ArchitectureConfig::default(), 3).unwrap();
        let k = p.blocks[1].kernels.data();
        let var = k.iter().map(|v| v * v).sum::<f64>() / k.len() as f64;
        let expected = 2.0 / (64.0 * 7.0);
        assert!((var / expected - 1.0).abs() < 0.05, "var {var} vs {expected}");
    }

    #[test]
    fn rejects_underflowing_configs() {
        let short = ArchitectureConfig {
            input_length: 6,
            ..ArchitectureConfig::default()
        };
        let err = build_model(&short, 0).unwrap_err().to_string();
        assert!(err.contains("conv1"), "{err}");

        let pool = ArchitectureConfig {
            input_length: 300,
            ..ArchitectureConfig::default()
        };
        // 294 -> 32 -> 26 -> 5 -> conv3 = -1
        let err = build_model(&pool, 0).unwrap_err().to_string();
        assert!(err.contains("conv3"), "{err}");

        let mismatched = ArchitectureConfig {
            pool_windows: vec![9, 5],
            ..ArchitectureConfig::default()
        };
        assert!(build_model(&mismatched, 0).is_err());
    }

    #[test]
    fn forward_contracts() {
        let mut p = build_model(&tiny(), 5).unwrap();
        let x = batch(4, 32, 1);
        let (probs, cache) = p.forward_train(&x).unwrap();
        assert_eq!(probs.shape(), &[4, 2]);
        for s in 0..4 {
            assert!((probs.outer(s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(cache.batch_size(), 4);

        let mut dup = x.outer(0).to_vec();
        dup.extend_from_slice(x.outer(0));
        let dup = NumericArray::new(vec![2, 32], dup).unwrap();
        let pe = p.forward_eval(&dup).unwrap();
        assert_eq!(pe.outer(0), pe.outer(1));
        assert_eq!(pe, p.forward_eval(&dup).unwrap());

        assert!(p.forward_eval(&batch(2, 31, 0)).is_err());
    }

    #[test]
    fn train_forward_only_touches_running_stats() {
        let mut p = build_model(&tiny(), 5).unwrap();
        let before = p.clone();
        let (probs, cache) = p.forward_train(&batch(3, 32, 2)).unwrap();
        let d = loss::csbl_logit_grad(&probs, &[0, 1, 0], &CostWeights::unit()).unwrap();
        p.backward(&cache, &d).unwrap();
        assert_eq!(p.learnable(), before.learnable());
        assert_ne!(p.blocks[0].running, before.blocks[0].running);
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let mut p = build_model(&tiny(), 9).unwrap();
        let (probs, cache) = p.forward_train(&batch(3, 32, 4)).unwrap();
        let zero = p.backward(&cache, &NumericArray::zeros(&[3, 2])).unwrap();
        assert!(zero.arrays().iter().all(|a| a.data().iter().all(|&v| v == 0.0)));

        let d = loss::csbl_logit_grad(&probs, &[1, 0, 0], &CostWeights::unit()).unwrap();
        let g1 = p.backward(&cache, &d).unwrap();
        let mut d2 = d.clone();
        d2.scale(2.0);
        let g2 = p.backward(&cache, &d2).unwrap();
        let mut g1x2 = g1.clone();
        g1x2.scale(2.0);
        assert_eq!(g1x2, g2);
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let mut a = build_model(&tiny(), 1).unwrap();
        let other = ArchitectureConfig {
            conv_filters: vec![3, 2, 2],
            ..tiny()
        };
        let b = build_model(&other, 1).unwrap();
        let (_, cache) = a.forward_train(&batch(2, 32, 0)).unwrap();
        assert!(b.backward(&cache, &NumericArray::zeros(&[2, 2])).is_err());
        assert!(a.backward(&cache, &NumericArray::zeros(&[3, 2])).is_err());
    }
}
