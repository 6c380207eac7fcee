//! A from-scratch residual network classifying single-channel images into
//! waiting/moving probabilities.
//!
//! Topology: input batch norm, a 5x5 reduction convolution, 2x2 max-pooling,
//! a 1x1 convolution to the stem width, then a chain of blocks. Each block
//! runs `layers_per_block` pre-activation bottleneck layers at its input
//! width, projects with a 1x1 convolution to the configured output width and
//! ends with a batch norm. Global average pooling, one fully connected layer
//! and a softmax produce the class probabilities.
//!
//! A bottleneck layer computes `y = x + F(x)` where `F` is
//! BN-ReLU-1x1(reduce), BN-ReLU-3x3, BN-ReLU-1x1(expand); driving the branch
//! weights to zero turns every layer into the identity. One convention worth
//! spelling out: no free-standing nonlinearity exists outside the
//! bottlenecks, and a block's trailing batch norm follows its projection.
//!
//! All arithmetic is in `f64`. Checkpoints store tensors as little-endian
//! `f32` behind a JSON manifest.

mod layers;
pub mod train;

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use layers::{softmax, BnMode, Tensor};
use layers::{BatchNorm2d, Conv2d, GlobalAvgPool, Linear, MaxPool2d, Relu};

const CHECKPOINT_MAGIC: &[u8; 4] = b"RNC1";

/// Visitor over `(name, values, gradients)` of one trainable tensor.
pub type ParamVisitor<'a> = dyn FnMut(&str, &mut Vec<f64>, &mut Vec<f64>) + 'a;
/// Visitor over `(name, shape, values)` of one persistent tensor.
type StateVisitor<'a> = dyn FnMut(&str, Vec<usize>, &mut Vec<f64>) + 'a;
const MAX_HEADER_BYTES: u32 = 16 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ResNetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid network configuration: {0}")]
    BadConfig(String),
    #[error("training diverged at iteration {iteration} (loss {loss})")]
    DivergenceDetected { iteration: usize, loss: f64 },
    #[error("checkpoint i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Network shape. `desk` is the trainable default; `paper_scale` is the
/// seven-block variant ending in a 1024-wide feature vector, constructible
/// for shape checks but far too slow to train here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResNetConfig {
    pub input_h: usize,
    pub input_w: usize,
    /// Output channels of the 5x5 reduction convolution.
    pub reduction_filters: usize,
    pub reduction_stride: usize,
    pub pool_window: usize,
    pub pool_stride: usize,
    /// Width after the 1x1 stem convolution; the first block's input width.
    pub stem_maps: usize,
    pub layers_per_block: usize,
    /// Output width of each block; the length fixes the block count and the
    /// last entry is the feature length seen by the classifier.
    pub block_out_maps: Vec<usize>,
    pub n_classes: usize,
}

impl Default for ResNetConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ResNetConfig {
    pub fn desk() -> Self {
        Self {
            input_h: 128,
            input_w: 128,
            reduction_filters: 8,
            reduction_stride: 2,
            pool_window: 2,
            pool_stride: 2,
            stem_maps: 4,
            layers_per_block: 2,
            block_out_maps: vec![32, 64],
            n_classes: 2,
        }
    }

    pub fn paper_scale() -> Self {
        Self {
            layers_per_block: 8,
            block_out_maps: vec![16, 32, 64, 128, 256, 512, 1024],
            ..Self::desk()
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.block_out_maps.len()
    }

    /// Length of the pooled feature vector entering the classifier.
    pub fn feature_length(&self) -> usize {
        self.block_out_maps.last().copied().unwrap_or(0)
    }

    /// Spatial size of the feature maps after reduction and pooling.
    pub fn feature_map_size(&self) -> (usize, usize) {
        let conv_h = (self.input_h + 4).saturating_sub(5) / self.reduction_stride + 1;
        let conv_w = (self.input_w + 4).saturating_sub(5) / self.reduction_stride + 1;
        (
            (conv_h - self.pool_window) / self.pool_stride + 1,
            (conv_w - self.pool_window) / self.pool_stride + 1,
        )
    }

    pub fn validate(&self) -> Result<(), ResNetError> {
        let counts = [
            ("input_h", self.input_h),
            ("input_w", self.input_w),
            ("reduction_filters", self.reduction_filters),
            ("reduction_stride", self.reduction_stride),
            ("pool_window", self.pool_window),
            ("pool_stride", self.pool_stride),
            ("stem_maps", self.stem_maps),
            ("layers_per_block", self.layers_per_block),
            ("n_classes", self.n_classes),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(ResNetError::BadConfig(format!("{name} must be at least 1")));
            }
        }
        if self.block_out_maps.is_empty() {
            return Err(ResNetError::BadConfig(
                "block_out_maps must name at least one block".into(),
            ));
        }
        if self.block_out_maps.contains(&0) {
            return Err(ResNetError::BadConfig(
                "every block width must be at least 1".into(),
            ));
        }
        if self.input_h + 4 < 5 || self.input_w + 4 < 5 {
            return Err(ResNetError::BadConfig(
                "input too small for the 5x5 reduction convolution".into(),
            ));
        }
        let conv_h = (self.input_h + 4 - 5) / self.reduction_stride + 1;
        let conv_w = (self.input_w + 4 - 5) / self.reduction_stride + 1;
        if conv_h < self.pool_window || conv_w < self.pool_window {
            return Err(ResNetError::BadConfig(
                "reduced feature map smaller than the pooling window".into(),
            ));
        }
        Ok(())
    }
}

/// Fill with N(0, sqrt(2/fan_in)) samples, Box-Muller over the seeded stream.
fn he_fill(weights: &mut [f64], fan_in: usize, rng: &mut ChaCha8Rng) {
    let std = (2.0 / fan_in as f64).sqrt();
    let mut i = 0;
    while i < weights.len() {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        weights[i] = std * r * c;
        i += 1;
        if i < weights.len() {
            weights[i] = std * r * s;
            i += 1;
        }
    }
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.data.len(), b.data.len(), "residual add shapes");
    let mut out = a.clone();
    for (o, v) in out.data.iter_mut().zip(&b.data) {
        *o += v;
    }
    out
}

/// Pre-activation bottleneck: `y = x + expand(relu(bn3(mid(relu(bn2(
/// reduce(relu(bn1(x)))))))))` with a 1x1/3x3/1x1 convolution branch.
#[derive(Debug, Clone)]
struct Bottleneck {
    bn1: BatchNorm2d,
    relu1: Relu,
    reduce: Conv2d,
    bn2: BatchNorm2d,
    relu2: Relu,
    mid: Conv2d,
    bn3: BatchNorm2d,
    relu3: Relu,
    expand: Conv2d,
}

impl Bottleneck {
    fn new(maps: usize) -> Self {
        let narrow = (maps / 4).max(1);
        Self {
            bn1: BatchNorm2d::new(maps),
            relu1: Relu::new(),
            reduce: Conv2d::new(maps, narrow, 1, 1, 0),
            bn2: BatchNorm2d::new(narrow),
            relu2: Relu::new(),
            mid: Conv2d::new(narrow, narrow, 3, 1, 1),
            bn3: BatchNorm2d::new(narrow),
            relu3: Relu::new(),
            expand: Conv2d::new(narrow, maps, 1, 1, 0),
        }
    }

    fn forward(&mut self, x: &Tensor, mode: BnMode) -> Tensor {
        let h = self.relu1.forward(&self.bn1.forward(x, mode));
        let h = self.reduce.forward(&h);
        let h = self.relu2.forward(&self.bn2.forward(&h, mode));
        let h = self.mid.forward(&h);
        let h = self.relu3.forward(&self.bn3.forward(&h, mode));
        let f = self.expand.forward(&h);
        add(x, &f)
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let h = Relu::infer(&self.bn1.infer(x));
        let h = self.reduce.infer(&h);
        let h = Relu::infer(&self.bn2.infer(&h));
        let h = self.mid.infer(&h);
        let h = Relu::infer(&self.bn3.infer(&h));
        let f = self.expand.infer(&h);
        add(x, &f)
    }

    fn backward(&mut self, gy: &Tensor) -> Tensor {
        let g = self.expand.backward(gy);
        let g = self.bn3.backward(&self.relu3.backward(&g));
        let g = self.mid.backward(&g);
        let g = self.bn2.backward(&self.relu2.backward(&g));
        let g = self.reduce.backward(&g);
        let g = self.bn1.backward(&self.relu1.backward(&g));
        add(gy, &g)
    }

    fn clear_caches(&mut self) {
        self.bn1.clear_cache();
        self.relu1.clear_cache();
        self.reduce.clear_cache();
        self.bn2.clear_cache();
        self.relu2.clear_cache();
        self.mid.clear_cache();
        self.bn3.clear_cache();
        self.relu3.clear_cache();
        self.expand.clear_cache();
    }
}

/// Bottleneck chain at the block's input width, then a 1x1 projection to the
/// block's output width followed by a batch norm.
#[derive(Debug, Clone)]
struct Block {
    layers: Vec<Bottleneck>,
    project: Conv2d,
    post_bn: BatchNorm2d,
}

impl Block {
    fn new(in_maps: usize, out_maps: usize, n_layers: usize) -> Self {
        Self {
            layers: (0..n_layers).map(|_| Bottleneck::new(in_maps)).collect(),
            project: Conv2d::new(in_maps, out_maps, 1, 1, 0),
            post_bn: BatchNorm2d::new(out_maps),
        }
    }

    fn forward(&mut self, x: &Tensor, mode: BnMode) -> Tensor {
        let mut h = x.clone();
        for layer in self.layers.iter_mut() {
            h = layer.forward(&h, mode);
        }
        let h = self.project.forward(&h);
        self.post_bn.forward(&h, mode)
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer(&h);
        }
        self.post_bn.infer(&self.project.infer(&h))
    }

    fn backward(&mut self, gy: &Tensor) -> Tensor {
        let g = self.post_bn.backward(gy);
        let mut g = self.project.backward(&g);
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    fn clear_caches(&mut self) {
        for layer in self.layers.iter_mut() {
            layer.clear_caches();
        }
        self.project.clear_cache();
        self.post_bn.clear_cache();
    }
}

#[derive(Debug, Clone)]
pub struct ResNet {
    config: ResNetConfig,
    input_bn: BatchNorm2d,
    reduce: Conv2d,
    pool: MaxPool2d,
    stem: Conv2d,
    blocks: Vec<Block>,
    gap: GlobalAvgPool,
    fc: Linear,
}

impl ResNet {
    pub fn new(config: ResNetConfig, seed: u64) -> Result<Self, ResNetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reduce = Conv2d::new(1, config.reduction_filters, 5, config.reduction_stride, 2);
        he_fill(&mut reduce.weight, 25, &mut rng);
        let mut stem = Conv2d::new(config.reduction_filters, config.stem_maps, 1, 1, 0);
        he_fill(&mut stem.weight, config.reduction_filters, &mut rng);

        let mut blocks = Vec::with_capacity(config.n_blocks());
        let mut width = config.stem_maps;
        for &out_maps in &config.block_out_maps {
            let mut block = Block::new(width, out_maps, config.layers_per_block);
            for layer in block.layers.iter_mut() {
                he_fill(&mut layer.reduce.weight, width, &mut rng);
                let narrow = layer.mid.in_c;
                he_fill(&mut layer.mid.weight, narrow * 9, &mut rng);
                he_fill(&mut layer.expand.weight, narrow, &mut rng);
            }
            he_fill(&mut block.project.weight, width, &mut rng);
            blocks.push(block);
            width = out_maps;
        }

        let mut fc = Linear::new(config.feature_length(), config.n_classes);
        he_fill(&mut fc.weight, config.feature_length(), &mut rng);

        Ok(Self {
            input_bn: BatchNorm2d::new(1),
            reduce,
            pool: MaxPool2d::new(config.pool_window, config.pool_stride),
            stem,
            blocks,
            gap: GlobalAvgPool::new(),
            fc,
            config,
        })
    }

    pub fn config(&self) -> &ResNetConfig {
        &self.config
    }

    fn check_input(&self, x: &Tensor) -> Result<(), ResNetError> {
        if x.c != 1 || x.h != self.config.input_h || x.w != self.config.input_w {
            return Err(ResNetError::ShapeMismatch(format!(
                "expected (b, 1, {}, {}), got ({}, {}, {}, {})",
                self.config.input_h, self.config.input_w, x.b, x.c, x.h, x.w
            )));
        }
        if x.b == 0 {
            return Err(ResNetError::ShapeMismatch("empty batch".into()));
        }
        Ok(())
    }

    /// Forward pass with caching for a later backward pass. `BnMode::Train`
    /// also updates the running batch-norm statistics; `BnMode::Probe` keeps
    /// the output a pure function of parameters and input.
    pub fn forward_train(&mut self, x: &Tensor, mode: BnMode) -> Result<Tensor, ResNetError> {
        self.check_input(x)?;
        let h = self.input_bn.forward(x, mode);
        let h = self.pool.forward(&self.reduce.forward(&h));
        let mut h = self.stem.forward(&h);
        for block in self.blocks.iter_mut() {
            h = block.forward(&h, mode);
        }
        let h = self.gap.forward(&h);
        let logits = self.fc.forward(&h);
        Ok(softmax(&logits))
    }

    /// Pure inference using the running batch-norm statistics.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, ResNetError> {
        self.check_input(x)?;
        let h = self.input_bn.infer(x);
        let h = self.pool.infer(&self.reduce.infer(&h));
        let mut h = self.stem.infer(&h);
        for block in &self.blocks {
            h = block.infer(&h);
        }
        let logits = self.fc.infer(&GlobalAvgPool::infer(&h));
        Ok(softmax(&logits))
    }

    /// Mean cross-entropy over the batch plus a full backward pass; the
    /// parameter gradients are left in the layers' `grad_*` buffers
    /// (zeroed at entry, so they hold exactly this batch's gradients).
    pub fn loss_and_grads(
        &mut self,
        x: &Tensor,
        labels: &[usize],
        mode: BnMode,
    ) -> Result<f64, ResNetError> {
        if labels.len() != x.b {
            return Err(ResNetError::ShapeMismatch(format!(
                "batch of {} images with {} labels",
                x.b,
                labels.len()
            )));
        }
        let n_classes = self.config.n_classes;
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(ResNetError::ShapeMismatch(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        self.zero_grads();
        let probs = self.forward_train(x, mode)?;

        let batch = x.b as f64;
        let mut loss = 0.0;
        let mut dlogits = probs.clone();
        for (bi, &label) in labels.iter().enumerate() {
            let p = probs.data[bi * n_classes + label];
            // f64::max drops NaN operands, which would mask a diverged
            // network behind a finite clamped loss; keep NaN propagating.
            loss -= if p.is_finite() {
                p.max(1e-300).ln()
            } else {
                f64::NAN
            };
            dlogits.data[bi * n_classes + label] -= 1.0;
        }
        loss /= batch;
        for g in dlogits.data.iter_mut() {
            *g /= batch;
        }

        let g = self.gap.backward(&self.fc.backward(&dlogits));
        let mut g = g;
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g);
        }
        let g = self.stem.backward(&g);
        let g = self.reduce.backward(&self.pool.backward(&g));
        let _ = self.input_bn.backward(&g);
        Ok(loss)
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, _, grad| {
            for g in grad.iter_mut() {
                *g = 0.0;
            }
        });
    }

    pub fn clear_caches(&mut self) {
        self.input_bn.clear_cache();
        self.reduce.clear_cache();
        self.pool.clear_cache();
        self.stem.clear_cache();
        for block in self.blocks.iter_mut() {
            block.clear_caches();
        }
        self.gap.clear_cache();
        self.fc.clear_cache();
    }

    /// Visits every trainable tensor as `(name, values, gradient)` in a fixed
    /// order. The optimizer keys its state to the visit order, so it must be
    /// deterministic.
    pub fn visit_params(&mut self, f: &mut ParamVisitor) {
        visit_bn_params(&mut self.input_bn, "input_bn", f);
        visit_conv_params(&mut self.reduce, "reduce", f);
        visit_conv_params(&mut self.stem, "stem", f);
        for (bi, block) in self.blocks.iter_mut().enumerate() {
            for (li, layer) in block.layers.iter_mut().enumerate() {
                let p = format!("block{bi}.layer{li}");
                visit_bn_params(&mut layer.bn1, &format!("{p}.bn1"), f);
                visit_conv_params(&mut layer.reduce, &format!("{p}.reduce"), f);
                visit_bn_params(&mut layer.bn2, &format!("{p}.bn2"), f);
                visit_conv_params(&mut layer.mid, &format!("{p}.mid"), f);
                visit_bn_params(&mut layer.bn3, &format!("{p}.bn3"), f);
                visit_conv_params(&mut layer.expand, &format!("{p}.expand"), f);
            }
            visit_conv_params(&mut block.project, &format!("block{bi}.project"), f);
            visit_bn_params(&mut block.post_bn, &format!("block{bi}.post_bn"), f);
        }
        visit_linear_params(&mut self.fc, "fc", f);
    }

    /// Visits every persistent tensor (parameters plus batch-norm running
    /// statistics) as `(name, shape, values)`; this is the checkpoint layout.
    fn visit_state(&mut self, f: &mut StateVisitor) {
        visit_bn_state(&mut self.input_bn, "input_bn", f);
        visit_conv_state(&mut self.reduce, "reduce", f);
        visit_conv_state(&mut self.stem, "stem", f);
        for (bi, block) in self.blocks.iter_mut().enumerate() {
            for (li, layer) in block.layers.iter_mut().enumerate() {
                let p = format!("block{bi}.layer{li}");
                visit_bn_state(&mut layer.bn1, &format!("{p}.bn1"), f);
                visit_conv_state(&mut layer.reduce, &format!("{p}.reduce"), f);
                visit_bn_state(&mut layer.bn2, &format!("{p}.bn2"), f);
                visit_conv_state(&mut layer.mid, &format!("{p}.mid"), f);
                visit_bn_state(&mut layer.bn3, &format!("{p}.bn3"), f);
                visit_conv_state(&mut layer.expand, &format!("{p}.expand"), f);
            }
            visit_conv_state(&mut block.project, &format!("block{bi}.project"), f);
            visit_bn_state(&mut block.post_bn, &format!("block{bi}.post_bn"), f);
        }
        visit_linear_state(&mut self.fc, "fc", f);
    }

    /// Names and shapes of every persistent tensor, in checkpoint order.
    pub fn named_state(&self) -> Vec<(String, Vec<usize>)> {
        let mut me = self.clone();
        let mut out = Vec::new();
        me.visit_state(&mut |name, shape, _| out.push((name.to_string(), shape)));
        out
    }

    pub fn parameter_count(&self) -> usize {
        let mut me = self.clone();
        let mut n = 0;
        me.visit_params(&mut |_, values, _| n += values.len());
        n
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), ResNetError> {
        let io_err = |source| ResNetError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut me = self.clone();
        let mut tensors = Vec::new();
        let mut payload: Vec<u8> = Vec::new();
        me.visit_state(&mut |name, shape, values| {
            tensors.push(TensorInfo {
                name: name.to_string(),
                shape,
            });
            for &v in values.iter() {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        });
        let header = serde_json::to_vec(&CheckpointHeader {
            config: self.config.clone(),
            tensors,
        })
        .expect("checkpoint header serializes");

        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        out.write_all(CHECKPOINT_MAGIC).map_err(io_err)?;
        out.write_all(&(header.len() as u32).to_le_bytes())
            .map_err(io_err)?;
        out.write_all(&header).map_err(io_err)?;
        out.write_all(&payload).map_err(io_err)?;
        out.flush().map_err(io_err)
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, ResNetError> {
        let io_err = |source: io::Error| ResNetError::Io {
            path: path.to_path_buf(),
            source,
        };
        let truncated = |source: io::Error| {
            if source.kind() == io::ErrorKind::UnexpectedEof {
                ResNetError::BadCheckpoint("file truncated".into())
            } else {
                ResNetError::Io {
                    path: path.to_path_buf(),
                    source,
                }
            }
        };
        let mut file = BufReader::new(File::open(path).map_err(io_err)?);

        let mut magic = [0u8; 4];
        file.read_exact(&mut magic).map_err(truncated)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(ResNetError::BadCheckpoint("bad magic".into()));
        }
        let mut len = [0u8; 4];
        file.read_exact(&mut len).map_err(truncated)?;
        let header_len = u32::from_le_bytes(len);
        if header_len == 0 || header_len > MAX_HEADER_BYTES {
            return Err(ResNetError::BadCheckpoint(format!(
                "implausible header length {header_len}"
            )));
        }
        let mut header_bytes = vec![0u8; header_len as usize];
        file.read_exact(&mut header_bytes).map_err(truncated)?;
        let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| ResNetError::BadCheckpoint(format!("header: {e}")))?;
        header.config.validate()?;

        let mut store: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::new();
        for info in &header.tensors {
            let count: usize = info.shape.iter().product();
            let mut buf = vec![0u8; count * 4];
            file.read_exact(&mut buf).map_err(truncated)?;
            let values = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            if store
                .insert(info.name.clone(), (info.shape.clone(), values))
                .is_some()
            {
                return Err(ResNetError::BadCheckpoint(format!(
                    "duplicate tensor {}",
                    info.name
                )));
            }
        }
        let mut trailing = [0u8; 1];
        if file.read(&mut trailing).map_err(io_err)? != 0 {
            return Err(ResNetError::BadCheckpoint("trailing data".into()));
        }

        let mut net = Self::new(header.config, 0)?;
        let mut problem = None;
        net.visit_state(&mut |name, shape, values| {
            if problem.is_some() {
                return;
            }
            match store.remove(name) {
                Some((stored_shape, stored)) if stored_shape == shape => *values = stored,
                Some((stored_shape, _)) => {
                    problem = Some(format!(
                        "tensor {name}: shape {stored_shape:?}, expected {shape:?}"
                    ));
                }
                None => problem = Some(format!("missing tensor {name}")),
            }
        });
        if let Some(p) = problem {
            return Err(ResNetError::BadCheckpoint(p));
        }
        if let Some(name) = store.keys().next() {
            return Err(ResNetError::BadCheckpoint(format!(
                "unknown tensor {name}"
            )));
        }
        Ok(net)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ResNetConfig,
    tensors: Vec<TensorInfo>,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

fn visit_conv_params(
    conv: &mut Conv2d,
    prefix: &str,
    f: &mut ParamVisitor,
) {
    f(
        &format!("{prefix}.weight"),
        &mut conv.weight,
        &mut conv.grad_weight,
    );
    f(&format!("{prefix}.bias"), &mut conv.bias, &mut conv.grad_bias);
}

fn visit_bn_params(
    bn: &mut BatchNorm2d,
    prefix: &str,
    f: &mut ParamVisitor,
) {
    f(&format!("{prefix}.gamma"), &mut bn.gamma, &mut bn.grad_gamma);
    f(&format!("{prefix}.beta"), &mut bn.beta, &mut bn.grad_beta);
}

fn visit_linear_params(
    linear: &mut Linear,
    prefix: &str,
    f: &mut ParamVisitor,
) {
    f(
        &format!("{prefix}.weight"),
        &mut linear.weight,
        &mut linear.grad_weight,
    );
    f(
        &format!("{prefix}.bias"),
        &mut linear.bias,
        &mut linear.grad_bias,
    );
}

fn visit_conv_state(
    conv: &mut Conv2d,
    prefix: &str,
    f: &mut StateVisitor,
) {
    let shape = vec![conv.out_c, conv.in_c, conv.k, conv.k];
    f(&format!("{prefix}.weight"), shape, &mut conv.weight);
    f(&format!("{prefix}.bias"), vec![conv.out_c], &mut conv.bias);
}

fn visit_bn_state(
    bn: &mut BatchNorm2d,
    prefix: &str,
    f: &mut StateVisitor,
) {
    let c = bn.c;
    f(&format!("{prefix}.gamma"), vec![c], &mut bn.gamma);
    f(&format!("{prefix}.beta"), vec![c], &mut bn.beta);
    f(
        &format!("{prefix}.running_mean"),
        vec![c],
        &mut bn.running_mean,
    );
    f(
        &format!("{prefix}.running_var"),
        vec![c],
        &mut bn.running_var,
    );
}

fn visit_linear_state(
    linear: &mut Linear,
    prefix: &str,
    f: &mut StateVisitor,
) {
    let shape = vec![linear.out_f, linear.in_f];
    f(&format!("{prefix}.weight"), shape, &mut linear.weight);
    f(
        &format!("{prefix}.bias"),
        vec![linear.out_f],
        &mut linear.bias,
    );
}
