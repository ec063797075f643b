//! The classifier network: three conv/batchnorm/ReLU/maxpool blocks, one
//! dropout stage after the last pool, then three fully connected layers
//! ending in a 2-way softmax.
//!
//! Odd spatial dimensions are handled by cropping the trailing row/column
//! before each pool, so the side length follows floor(side/2) per block
//! (e.g. 300 → 150 → 75 → 37).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::adam::{AdamHyper, AdamState};
use super::ops::{
    batchnorm2d_infer, batchnorm2d_train, conv2d, conv2d_backward, dense, dense_backward,
    dropout, dropout_backward, maxpool2, maxpool2_backward, relu, relu_backward, softmax,
    softmax_xent, update_running_stats, BnCache, NnError, Padding,
};
use super::tensor::Tensor;

pub const CONV_BLOCKS: usize = 3;
pub const FC_LAYERS: usize = 3;
pub const KERNEL_SIDE: usize = 3;
pub const NUM_CLASSES: usize = 2;

/// Architecture hyperparameters. Kernel size (3×3), stride (1), padding
/// (same), pool (2×2 max, stride 2), and the block/layer counts are fixed;
/// widths and regularization are configurable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    /// Input images are `input_side` × `input_side`.
    pub input_side: usize,
    /// 3 for RGB heatmaps.
    pub input_channels: usize,
    /// Filter count of each conv block.
    pub conv_filters: [usize; CONV_BLOCKS],
    /// Widths of the fully connected layers; the last must be 2.
    pub fc_widths: [usize; FC_LAYERS],
    /// Dropout after the final pool: 0 disables it.
    pub dropout_rate: f64,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_side: 300,
            input_channels: 3,
            conv_filters: [16, 32, 64],
            fc_widths: [128, 64, NUM_CLASSES],
            dropout_rate: 0.0,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_side < 8 {
            return Err(NnError::BadConfig(format!(
                "input side must be at least 8 to survive three pools, got {}",
                self.input_side
            )));
        }
        if self.input_channels == 0 {
            return Err(NnError::BadConfig("input channels must be at least 1".into()));
        }
        if self.conv_filters.contains(&0) {
            return Err(NnError::BadConfig("conv filter counts must be at least 1".into()));
        }
        if self.fc_widths[..FC_LAYERS - 1].contains(&0) {
            return Err(NnError::BadConfig("fc widths must be at least 1".into()));
        }
        if self.fc_widths[FC_LAYERS - 1] != NUM_CLASSES {
            return Err(NnError::BadConfig(format!(
                "final fc width must be {NUM_CLASSES}, got {}",
                self.fc_widths[FC_LAYERS - 1]
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::BadConfig(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.bn_epsilon.is_nan() || self.bn_epsilon <= 0.0 {
            return Err(NnError::BadConfig("batchnorm epsilon must be > 0".into()));
        }
        if self.bn_momentum.is_nan() || self.bn_momentum <= 0.0 || self.bn_momentum > 1.0 {
            return Err(NnError::BadConfig("batchnorm momentum must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Spatial side after the three pool stages (floor at each halving).
    pub fn side_after_pools(&self) -> usize {
        self.input_side / 2 / 2 / 2
    }

    /// Width of the flattened feature vector entering the first fc layer.
    pub fn flatten_len(&self) -> usize {
        let s = self.side_after_pools();
        self.conv_filters[CONV_BLOCKS - 1] * s * s
    }
}

/// How the final fc layer starts out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadInit {
    /// All-zero weights and bias: an untrained network outputs exactly
    /// [0.5, 0.5] for every input.
    Zeros,
    /// Randomly initialized like the hidden layers; used by gradient
    /// checking, where a zero head would zero out every upstream gradient.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvBlock {
    pub w: Tensor,
    pub b: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DenseLayer {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    pub(crate) blocks: Vec<ConvBlock>,
    pub(crate) fcs: Vec<DenseLayer>,
}

pub(crate) struct BlockCache {
    pub conv_in: Tensor,
    pub bn: BnCache,
    /// Batchnorm output — the relu input, kept for masking its gradient.
    pub bn_out: Tensor,
    /// Shape entering the crop stage.
    pub pre_crop: Vec<usize>,
    pub cropped_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache {
    pub(crate) blocks: Vec<BlockCache>,
    pub(crate) dropout_rate: f64,
    pub(crate) dropout_mask: Option<Vec<bool>>,
    pub(crate) pooled_shape: Vec<usize>,
    /// Input to each fc layer: [flat, a1, a2].
    pub(crate) fc_inputs: Vec<Tensor>,
    /// Pre-activation of the hidden fc layers.
    pub(crate) fc_pre: Vec<Tensor>,
    /// Softmax probabilities, batch × 2.
    pub probs: Tensor,
    pub(crate) d_logits: Tensor,
}

/// Gradients shaped exactly like the network's parameters.
pub struct BlockGrads {
    pub w: Tensor,
    pub b: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

pub struct DenseGrads {
    pub w: Tensor,
    pub b: Tensor,
}

pub struct NetworkGrads {
    pub blocks: Vec<BlockGrads>,
    pub fcs: Vec<DenseGrads>,
}

/// Adam state for every parameter tensor in the network.
pub struct NetworkAdam {
    blocks: Vec<[AdamState; 4]>,
    fcs: Vec<[AdamState; 2]>,
}

impl NetworkAdam {
    pub fn new(net: &Network) -> Self {
        Self {
            blocks: net
                .blocks
                .iter()
                .map(|b| {
                    [
                        AdamState::new(b.w.shape()),
                        AdamState::new(b.b.shape()),
                        AdamState::new(b.gamma.shape()),
                        AdamState::new(b.beta.shape()),
                    ]
                })
                .collect(),
            fcs: net
                .fcs
                .iter()
                .map(|f| [AdamState::new(f.w.shape()), AdamState::new(f.b.shape())])
                .collect(),
        }
    }
}

/// Drop the trailing row/column of odd spatial axes so 2×2 pooling fits.
fn crop_even(t: &Tensor) -> Tensor {
    let (n, c, h, w) = (t.dim(0), t.dim(1), t.dim(2), t.dim(3));
    let (ch, cw) = (h - h % 2, w - w % 2);
    if ch == h && cw == w {
        return t.clone();
    }
    let mut out = Tensor::zeros(&[n, c, ch, cw]);
    let od = out.data_mut();
    let data = t.data();
    for plane in 0..n * c {
        for y in 0..ch {
            let src = &data[plane * h * w + y * w..][..cw];
            od[plane * ch * cw + y * cw..][..cw].copy_from_slice(src);
        }
    }
    out
}

/// Inverse of [`crop_even`] for gradients: paste into a zero tensor of the
/// pre-crop shape (the cropped row/column received no gradient).
fn uncrop(d_cropped: &Tensor, pre_crop: &[usize]) -> Tensor {
    if d_cropped.shape() == pre_crop {
        return d_cropped.clone();
    }
    let (n, c, h, w) = (pre_crop[0], pre_crop[1], pre_crop[2], pre_crop[3]);
    let (ch, cw) = (d_cropped.dim(2), d_cropped.dim(3));
    let mut out = Tensor::zeros(pre_crop);
    let od = out.data_mut();
    let data = d_cropped.data();
    for plane in 0..n * c {
        for y in 0..ch {
            let src = &data[plane * ch * cw + y * cw..][..cw];
            od[plane * h * w + y * w..][..cw].copy_from_slice(src);
        }
    }
    out
}

impl Network {
    /// Fresh network with He-initialized hidden layers and a zeroed final
    /// layer, all drawn from the seed.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self, NnError> {
        Self::with_head(config, seed, HeadInit::Zeros)
    }

    pub fn with_head(config: NetworkConfig, seed: u64, head: HeadInit) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(CONV_BLOCKS);
        let mut c_in = config.input_channels;
        for &f in &config.conv_filters {
            let fan_in = c_in * KERNEL_SIDE * KERNEL_SIDE;
            blocks.push(ConvBlock {
                w: he_tensor(&[f, c_in, KERNEL_SIDE, KERNEL_SIDE], fan_in, &mut rng),
                b: Tensor::zeros(&[f]),
                gamma: Tensor::filled(&[f], 1.0),
                beta: Tensor::zeros(&[f]),
                running_mean: vec![0.0; f],
                running_var: vec![1.0; f],
            });
            c_in = f;
        }
        let mut fcs = Vec::with_capacity(FC_LAYERS);
        let mut width_in = config.flatten_len();
        for (j, &width) in config.fc_widths.iter().enumerate() {
            let final_layer = j == FC_LAYERS - 1;
            let w = if final_layer && head == HeadInit::Zeros {
                Tensor::zeros(&[width_in, width])
            } else {
                he_tensor(&[width_in, width], width_in, &mut rng)
            };
            fcs.push(DenseLayer { w, b: Tensor::zeros(&[width]) });
            width_in = width;
        }
        Ok(Self { config, blocks, fcs })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Total number of trainable parameters.
    pub fn param_count(&self) -> usize {
        let blocks: usize = self
            .blocks
            .iter()
            .map(|b| b.w.len() + b.b.len() + b.gamma.len() + b.beta.len())
            .sum();
        let fcs: usize = self.fcs.iter().map(|f| f.w.len() + f.b.len()).sum();
        blocks + fcs
    }

    fn check_input(&self, input: &Tensor) -> Result<usize, NnError> {
        let s = self.config.input_side;
        let c = self.config.input_channels;
        match *input.shape() {
            [n, ic, h, w] if ic == c && h == s && w == s => Ok(n),
            _ => Err(NnError::ShapeMismatch(format!(
                "network expects input [N, {c}, {s}, {s}], got {:?}",
                input.shape()
            ))),
        }
    }

    /// Forward pass with batch statistics, producing the loss and a cache
    /// for [`Network::backward`]. Dropout fires only when an rng is given
    /// and the configured rate is positive. Running batchnorm statistics
    /// are not touched — training wraps this and folds them in.
    fn forward_core<R: Rng + ?Sized>(
        &self,
        input: &Tensor,
        labels: &Tensor,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(f64, ForwardCache), NnError> {
        let n = self.check_input(input)?;
        if labels.shape() != [n, NUM_CLASSES] {
            return Err(NnError::ShapeMismatch(format!(
                "labels must be [{n}, {NUM_CLASSES}], got {:?}",
                labels.shape()
            )));
        }

        let mut x = input.clone();
        let mut block_caches = Vec::with_capacity(CONV_BLOCKS);
        for block in &self.blocks {
            let conv_out = conv2d(&x, &block.w, &block.b, Padding::Same)?;
            let (bn_out, bn) =
                batchnorm2d_train(&conv_out, &block.gamma, &block.beta, self.config.bn_epsilon)?;
            let r = relu(&bn_out);
            let pre_crop = r.shape().to_vec();
            let cropped = crop_even(&r);
            let cropped_shape = cropped.shape().to_vec();
            let (pooled, argmax) = maxpool2(&cropped)?;
            block_caches.push(BlockCache {
                conv_in: x,
                bn,
                bn_out,
                pre_crop,
                cropped_shape,
                argmax,
            });
            x = pooled;
        }

        let rate = self.config.dropout_rate;
        let (dropped, mask) = match dropout_rng.as_mut() {
            Some(rng) if rate > 0.0 => {
                let (d, m) = dropout(&x, rate, &mut **rng);
                (d, Some(m))
            }
            _ => (x, None),
        };
        let pooled_shape = dropped.shape().to_vec();
        let flat = dropped.reshape(&[n, self.config.flatten_len()]);

        let mut fc_inputs = vec![flat];
        let mut fc_pre = Vec::with_capacity(FC_LAYERS - 1);
        let mut logits = None;
        for (j, fc) in self.fcs.iter().enumerate() {
            let z = dense(&fc_inputs[j], &fc.w, &fc.b)?;
            if j + 1 < FC_LAYERS {
                fc_inputs.push(relu(&z));
                fc_pre.push(z);
            } else {
                logits = Some(z);
            }
        }
        let logits = logits.expect("final fc layer always runs");
        let (loss, probs, d_logits) = softmax_xent(&logits, labels)?;
        Ok((
            loss,
            ForwardCache {
                blocks: block_caches,
                dropout_rate: rate,
                dropout_mask: mask,
                pooled_shape,
                fc_inputs,
                fc_pre,
                probs,
                d_logits,
            },
        ))
    }

    /// Training-mode forward pass: batch statistics (and a running-stats
    /// update), dropout from the supplied stream.
    pub fn forward_train<R: Rng + ?Sized>(
        &mut self,
        input: &Tensor,
        labels: &Tensor,
        dropout_rng: &mut R,
    ) -> Result<(f64, ForwardCache), NnError> {
        let (loss, cache) = self.forward_core(input, labels, Some(dropout_rng))?;
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks) {
            update_running_stats(
                &mut block.running_mean,
                &mut block.running_var,
                &bc.bn,
                self.config.bn_momentum,
            );
        }
        Ok((loss, cache))
    }

    /// Deterministic diagnostic forward pass: batch statistics but no
    /// dropout and no running-stats update. This is the mode gradient
    /// checking differentiates.
    pub fn forward_stats(
        &self,
        input: &Tensor,
        labels: &Tensor,
    ) -> Result<(f64, ForwardCache), NnError> {
        self.forward_core::<ChaCha8Rng>(input, labels, None)
    }

    /// Inference: running batchnorm statistics, no dropout, no mutation.
    /// Returns softmax probabilities, batch × 2.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor, NnError> {
        let n = self.check_input(input)?;
        let mut x = input.clone();
        for block in &self.blocks {
            let conv_out = conv2d(&x, &block.w, &block.b, Padding::Same)?;
            let bn_out = batchnorm2d_infer(
                &conv_out,
                &block.gamma,
                &block.beta,
                self.config.bn_epsilon,
                &block.running_mean,
                &block.running_var,
            )?;
            let (pooled, _) = maxpool2(&crop_even(&relu(&bn_out)))?;
            x = pooled;
        }
        let flat = x.reshape(&[n, self.config.flatten_len()]);
        let logits = self.fc_chain(0, &flat)?;
        softmax(&logits)
    }

    /// Gradients of the cached forward pass with respect to every
    /// parameter, in exact reverse order of the forward computation.
    pub fn backward(&self, cache: &ForwardCache) -> Result<NetworkGrads, NnError> {
        let mut fc_grads: Vec<DenseGrads> = Vec::with_capacity(FC_LAYERS);
        let mut d = cache.d_logits.clone();
        for j in (0..FC_LAYERS).rev() {
            let (d_in, d_w, d_b) = dense_backward(&cache.fc_inputs[j], &self.fcs[j].w, &d)?;
            fc_grads.push(DenseGrads { w: d_w, b: d_b });
            d = if j > 0 { relu_backward(&cache.fc_pre[j - 1], &d_in) } else { d_in };
        }
        fc_grads.reverse();

        let mut d = d.reshape(&cache.pooled_shape);
        if let Some(mask) = &cache.dropout_mask {
            d = dropout_backward(&d, mask, cache.dropout_rate);
        }

        let mut block_grads: Vec<BlockGrads> = Vec::with_capacity(CONV_BLOCKS);
        for bi in (0..CONV_BLOCKS).rev() {
            let bc = &cache.blocks[bi];
            let d_cropped = maxpool2_backward(&bc.cropped_shape, &bc.argmax, &d)?;
            let d_relu_out = uncrop(&d_cropped, &bc.pre_crop);
            let d_bn_out = relu_backward(&bc.bn_out, &d_relu_out);
            let (d_conv_out, d_gamma, d_beta) =
                super::ops::batchnorm2d_backward(&d_bn_out, &bc.bn, &self.blocks[bi].gamma);
            let (d_in, d_w, d_b) =
                conv2d_backward(&bc.conv_in, &self.blocks[bi].w, &d_conv_out, Padding::Same)?;
            block_grads.push(BlockGrads { w: d_w, b: d_b, gamma: d_gamma, beta: d_beta });
            d = d_in;
        }
        block_grads.reverse();
        Ok(NetworkGrads { blocks: block_grads, fcs: fc_grads })
    }

    /// Apply one Adam update to every parameter tensor.
    pub fn adam_step(
        &mut self,
        grads: &NetworkGrads,
        adam: &mut NetworkAdam,
        hp: &AdamHyper,
    ) -> Result<(), NnError> {
        if grads.blocks.len() != self.blocks.len() || grads.fcs.len() != self.fcs.len() {
            return Err(NnError::ShapeMismatch("gradient set does not match network".into()));
        }
        for ((block, g), st) in self.blocks.iter_mut().zip(&grads.blocks).zip(&mut adam.blocks) {
            st[0].step(&mut block.w, &g.w, hp)?;
            st[1].step(&mut block.b, &g.b, hp)?;
            st[2].step(&mut block.gamma, &g.gamma, hp)?;
            st[3].step(&mut block.beta, &g.beta, hp)?;
        }
        for ((fc, g), st) in self.fcs.iter_mut().zip(&grads.fcs).zip(&mut adam.fcs) {
            st[0].step(&mut fc.w, &g.w, hp)?;
            st[1].step(&mut fc.b, &g.b, hp)?;
        }
        Ok(())
    }

    /// Loss restarted at conv block `k` from that block's cached input,
    /// using batch statistics. Lets the gradient checker skip recomputing
    /// stages a perturbed parameter cannot influence.
    pub(crate) fn loss_from_block(
        &self,
        k: usize,
        stage_input: &Tensor,
        labels: &Tensor,
    ) -> Result<f64, NnError> {
        let mut x = stage_input.clone();
        for block in &self.blocks[k..] {
            let conv_out = conv2d(&x, &block.w, &block.b, Padding::Same)?;
            let (bn_out, _) =
                batchnorm2d_train(&conv_out, &block.gamma, &block.beta, self.config.bn_epsilon)?;
            let (pooled, _) = maxpool2(&crop_even(&relu(&bn_out)))?;
            x = pooled;
        }
        let n = x.dim(0);
        let flat = x.reshape(&[n, self.config.flatten_len()]);
        self.loss_from_fc(0, &flat, labels)
    }

    /// Loss restarted at fc layer `j` from that layer's cached input.
    pub(crate) fn loss_from_fc(
        &self,
        j: usize,
        stage_input: &Tensor,
        labels: &Tensor,
    ) -> Result<f64, NnError> {
        let logits = self.fc_chain(j, stage_input)?;
        Ok(softmax_xent(&logits, labels)?.0)
    }

    fn fc_chain(&self, from: usize, input: &Tensor) -> Result<Tensor, NnError> {
        let mut a = input.clone();
        for (j, fc) in self.fcs.iter().enumerate().skip(from) {
            let z = dense(&a, &fc.w, &fc.b)?;
            a = if j + 1 < FC_LAYERS { relu(&z) } else { z };
        }
        Ok(a)
    }
}

fn he_tensor<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = normal.sample(rng);
    }
    t
}
