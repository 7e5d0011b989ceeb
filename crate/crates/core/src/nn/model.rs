use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CpaError, Result};
use crate::nn::layers::{
    avgpool_backward, avgpool_forward, bn_backward, bn_forward_infer, bn_forward_train,
    conv_backward, conv_forward, dense_backward, dense_forward, relu_backward, relu_forward,
    softmax, BnCache, ConvGeometry, Tensor4,
};
use crate::nn::loss::{focal_loss, focal_loss_grad_logits, mse_grad, mse_log_ber, regression_weight};

pub const CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// How the last backbone block is reduced to the head input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInput {
    /// Every activation, `C·H·W` values.
    #[default]
    Flatten,
    /// Per-channel spatial mean, `C` values.
    GlobalAverage,
}

/// Architecture and loss hyperparameters.
///
/// Each backbone block is `conv → ReLU → average pool → batch norm`; the
/// reduced output of the last block feeds a 3-way softmax head and a scalar
/// regression head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub conv_blocks: Vec<ConvSpec>,
    pub pool_size: usize,
    pub batch_norm: bool,
    #[serde(default)]
    pub head_input: HeadInput,
    pub l2_coeff: f64,
    pub focal_gamma: f64,
    pub amplification: f64,
    /// Variance of the training capability labels, frozen at first training.
    pub reg_label_variance: Option<f64>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_channels: 3,
            input_height: 64,
            input_width: 64,
            conv_blocks: vec![
                ConvSpec { filters: 8, kernel: 3, stride: 1 },
                ConvSpec { filters: 16, kernel: 3, stride: 1 },
                ConvSpec { filters: 32, kernel: 3, stride: 1 },
            ],
            pool_size: 2,
            batch_norm: true,
            head_input: HeadInput::Flatten,
            l2_coeff: 1e-4,
            focal_gamma: 2.0,
            amplification: 10.0,
            reg_label_variance: None,
            bn_momentum: 0.99,
            bn_eps: 1e-3,
        }
    }
}

impl NetworkConfig {
    pub fn for_input(height: usize, width: usize) -> Self {
        NetworkConfig {
            input_height: height,
            input_width: width,
            ..NetworkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CpaError::InvalidConfig(msg));
        if self.input_channels == 0 || self.input_height == 0 || self.input_width == 0 {
            return bad("input dimensions must be positive".into());
        }
        if self.pool_size == 0 {
            return bad("pool_size must be positive".into());
        }
        for (i, b) in self.conv_blocks.iter().enumerate() {
            if b.filters == 0 || b.kernel == 0 || b.stride == 0 {
                return bad(format!("conv block {i} has a zero dimension"));
            }
        }
        if !(self.focal_gamma >= 0.0) {
            return bad("focal_gamma must be >= 0".into());
        }
        if !(self.amplification > 0.0) {
            return bad("amplification must be > 0".into());
        }
        if let Some(v) = self.reg_label_variance {
            if !(v > 0.0) {
                return bad(format!("reg_label_variance must be > 0, got {v}"));
            }
        }
        if !(self.l2_coeff >= 0.0) || !(self.bn_eps > 0.0) || !(0.0..1.0).contains(&self.bn_momentum) {
            return bad("l2_coeff, bn_eps or bn_momentum out of range".into());
        }
        let (_, h, w) = self.block_shapes().last().copied().unwrap_or((0, 0, 0));
        if h == 0 || w == 0 {
            return bad("backbone shrinks the input to nothing".into());
        }
        Ok(())
    }

    /// `(channels, height, width)` entering each block, plus the final output.
    pub fn block_shapes(&self) -> Vec<(usize, usize, usize)> {
        let mut shapes = vec![(self.input_channels, self.input_height, self.input_width)];
        for spec in &self.conv_blocks {
            let (c, h, w) = *shapes.last().expect("non-empty");
            let g = ConvGeometry { in_c: c, out_c: spec.filters, kernel: spec.kernel, stride: spec.stride };
            shapes.push((spec.filters, g.out_size(h) / self.pool_size, g.out_size(w) / self.pool_size));
        }
        shapes
    }

    pub fn feature_len(&self) -> usize {
        let (c, h, w) = *self.block_shapes().last().expect("non-empty");
        match self.head_input {
            HeadInput::Flatten => c * h * w,
            HeadInput::GlobalAverage => c,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_height * self.input_width
    }

    fn geometry(&self, block: usize) -> ConvGeometry {
        let (c, _, _) = self.block_shapes()[block];
        let spec = self.conv_blocks[block];
        ConvGeometry { in_c: c, out_c: spec.filters, kernel: spec.kernel, stride: spec.stride }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Kernel,
    Bias,
    BnScale,
    BnShift,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    pub fn learnable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub kind: ParamKind,
    /// Belongs to the shared backbone rather than a head.
    pub backbone: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct BlockIndex {
    conv_w: usize,
    conv_b: usize,
    bn: Option<[usize; 4]>,
}

#[derive(Debug, Clone)]
struct Layout {
    blocks: Vec<BlockIndex>,
    cls_w: usize,
    cls_b: usize,
    reg_w: usize,
    reg_b: usize,
}

/// Learnable tensors, batch-norm running statistics and ADAM state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub tensors: Vec<ParamTensor>,
    pub adam_m: Vec<Vec<f64>>,
    pub adam_v: Vec<Vec<f64>>,
    pub step: u64,
}

impl ModelParams {
    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.values.iter().all(|v| v.is_finite()))
    }

    /// `coeff * Σ ||W||²` over convolution and dense kernels.
    pub fn l2_penalty(&self, coeff: f64) -> f64 {
        coeff
            * self
                .tensors
                .iter()
                .filter(|t| t.kind == ParamKind::Kernel)
                .map(|t| t.values.iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients(self.tensors.iter().map(|t| vec![0.0; t.values.len()]).collect())
    }
}

/// Per-tensor gradients aligned with [`ModelParams::tensors`]; running
/// statistics always carry zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

fn push(tensors: &mut Vec<ParamTensor>, name: String, kind: ParamKind, backbone: bool, values: Vec<f64>) -> usize {
    tensors.push(ParamTensor { name, kind, backbone, values });
    tensors.len() - 1
}

fn build_layout(cfg: &NetworkConfig, mut kernel: impl FnMut(usize, usize) -> Vec<f64>) -> (Layout, Vec<ParamTensor>) {
    let mut t = Vec::new();
    let mut blocks = Vec::new();
    for (i, spec) in cfg.conv_blocks.iter().enumerate() {
        let g = cfg.geometry(i);
        let conv_w = push(&mut t, format!("block{i}.conv.kernel"), ParamKind::Kernel, true, kernel(g.weight_len(), g.fan_in()));
        let conv_b = push(&mut t, format!("block{i}.conv.bias"), ParamKind::Bias, true, vec![0.0; spec.filters]);
        let bn = cfg.batch_norm.then(|| {
            [
                push(&mut t, format!("block{i}.bn.scale"), ParamKind::BnScale, true, vec![1.0; spec.filters]),
                push(&mut t, format!("block{i}.bn.shift"), ParamKind::BnShift, true, vec![0.0; spec.filters]),
                push(&mut t, format!("block{i}.bn.running_mean"), ParamKind::RunningMean, true, vec![0.0; spec.filters]),
                push(&mut t, format!("block{i}.bn.running_var"), ParamKind::RunningVar, true, vec![1.0; spec.filters]),
            ]
        });
        blocks.push(BlockIndex { conv_w, conv_b, bn });
    }
    let f = cfg.feature_len();
    let cls_w = push(&mut t, "head_cls.kernel".into(), ParamKind::Kernel, false, kernel(CLASSES * f, f));
    let cls_b = push(&mut t, "head_cls.bias".into(), ParamKind::Bias, false, vec![0.0; CLASSES]);
    let reg_w = push(&mut t, "head_reg.kernel".into(), ParamKind::Kernel, false, kernel(f, f));
    let reg_b = push(&mut t, "head_reg.bias".into(), ParamKind::Bias, false, vec![0.0]);
    (Layout { blocks, cls_w, cls_b, reg_w, reg_b }, t)
}

/// He-normal initialization: kernels `N(0, 2 / fan_in)`, biases and shifts 0,
/// scales 1, running variance 1.
pub fn he_init<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Result<ModelParams> {
    cfg.validate()?;
    let (_, tensors) = build_layout(cfg, |len, fan_in| {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive fan-in");
        (0..len).map(|_| normal.sample(rng)).collect()
    });
    let zeros: Vec<Vec<f64>> = tensors.iter().map(|t| vec![0.0; t.values.len()]).collect();
    Ok(ModelParams {
        tensors,
        adam_m: zeros.clone(),
        adam_v: zeros,
        step: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Which heads contribute to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TaskMode {
    #[default]
    Multitask,
    Intent,
    Capability,
}

impl TaskMode {
    pub fn trains_intent(self) -> bool {
        matches!(self, TaskMode::Multitask | TaskMode::Intent)
    }

    pub fn trains_capability(self) -> bool {
        matches!(self, TaskMode::Multitask | TaskMode::Capability)
    }
}

impl std::str::FromStr for TaskMode {
    type Err = CpaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multitask" => Ok(TaskMode::Multitask),
            "intent" => Ok(TaskMode::Intent),
            "capability" => Ok(TaskMode::Capability),
            other => Err(CpaError::InvalidConfig(format!("unknown task mode {other:?}"))),
        }
    }
}

struct BlockCache {
    input: Tensor4,
    pre_relu: Tensor4,
    pooled_shape: (usize, usize, usize, usize),
    pooled: Tensor4,
    bn: Option<BnCache>,
}

/// Network outputs plus everything the backward pass needs.
pub struct ForwardPass {
    pub probs: Vec<f64>,
    pub rho_hat: Vec<f64>,
    pub batch: usize,
    blocks: Vec<BlockCache>,
    features: Vec<f64>,
}

impl ForwardPass {
    /// Batch statistics of each batch-norm layer, `(mean, biased var, count)`.
    pub fn bn_stats(&self) -> Vec<Option<(&[f64], &[f64], usize)>> {
        self.blocks
            .iter()
            .map(|b| b.bn.as_ref().map(|c| (c.mean.as_slice(), c.var.as_slice(), c.count)))
            .collect()
    }
}

/// A minibatch: channel-first inputs, one-hot intent targets, capability labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub input: Tensor4,
    pub targets: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.input.n
    }

    pub fn is_empty(&self) -> bool {
        self.input.n == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub classification: f64,
    pub regression: f64,
    pub l2: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: NetworkConfig,
    pub params: ModelParams,
    layout: Layout,
}

impl Model {
    pub fn new(config: NetworkConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let (layout, reference) = build_layout(&config, |len, _| vec![0.0; len]);
        if reference.len() != params.tensors.len()
            || reference.iter().zip(&params.tensors).any(|(a, b)| a.values.len() != b.values.len() || a.kind != b.kind)
            || params.adam_m.len() != params.tensors.len()
            || params.adam_v.len() != params.tensors.len()
            || params.tensors.iter().zip(&params.adam_m).zip(&params.adam_v).any(|((t, m), v)| {
                m.len() != t.values.len() || v.len() != t.values.len()
            })
        {
            return Err(CpaError::ShapeMismatch("parameters do not match the network config".into()));
        }
        Ok(Model { config, params, layout })
    }

    pub fn init<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        let params = he_init(&config, rng)?;
        Model::new(config, params)
    }

    fn p(&self, idx: usize) -> &[f64] {
        &self.params.tensors[idx].values
    }

    pub fn forward(&self, input: &Tensor4, mode: Mode) -> Result<ForwardPass> {
        let cfg = &self.config;
        if (input.c, input.h, input.w) != (cfg.input_channels, cfg.input_height, cfg.input_width) {
            return Err(CpaError::ShapeMismatch(format!(
                "input {}x{}x{} but network expects {}x{}x{}",
                input.c, input.h, input.w, cfg.input_channels, cfg.input_height, cfg.input_width
            )));
        }
        let batch = input.n;
        let mut x = input.clone();
        let mut blocks = Vec::with_capacity(cfg.conv_blocks.len());
        for (i, idx) in self.layout.blocks.iter().enumerate() {
            let g = cfg.geometry(i);
            let pre = conv_forward(&x, self.p(idx.conv_w), self.p(idx.conv_b), &g);
            let act = relu_forward(&pre);
            let pooled = avgpool_forward(&act, cfg.pool_size);
            let pooled_shape = (act.n, act.c, act.h, act.w);
            let (out, bn) = match (idx.bn, mode) {
                (None, _) => (pooled.clone(), None),
                (Some([s, b, _, _]), Mode::Train) => {
                    let (y, cache) = bn_forward_train(&pooled, self.p(s), self.p(b), cfg.bn_eps);
                    (y, Some(cache))
                }
                (Some([s, b, m, v]), Mode::Infer) => (
                    bn_forward_infer(&pooled, self.p(s), self.p(b), self.p(m), self.p(v), cfg.bn_eps),
                    None,
                ),
            };
            blocks.push(BlockCache { input: x, pre_relu: pre, pooled_shape, pooled, bn });
            x = out;
        }
        let features = match cfg.head_input {
            HeadInput::Flatten => x.data,
            HeadInput::GlobalAverage => x.data.chunks(x.plane()).map(|p| p.iter().sum::<f64>() / p.len() as f64).collect(),
        };
        let logits = dense_forward(&features, batch, self.p(self.layout.cls_w), self.p(self.layout.cls_b), CLASSES);
        let probs = softmax(&logits, CLASSES);
        let rho_hat = dense_forward(&features, batch, self.p(self.layout.reg_w), self.p(self.layout.reg_b), 1);
        Ok(ForwardPass { probs, rho_hat, batch, blocks, features })
    }

    /// Backpropagates the given output gradients; `grad_logits` is
    /// `[batch, 3]`, `grad_rho` is `[batch]`. Does not include the L2 term.
    pub fn backward(&self, fwd: &ForwardPass, grad_logits: &[f64], grad_rho: &[f64]) -> Gradients {
        let mut grads = self.params.zero_grads();
        let batch = fwd.batch;
        let l = &self.layout;
        let cls = dense_backward(&fwd.features, batch, self.p(l.cls_w), grad_logits, CLASSES);
        let reg = dense_backward(&fwd.features, batch, self.p(l.reg_w), grad_rho, 1);
        grads.0[l.cls_w] = cls.weight;
        grads.0[l.cls_b] = cls.bias;
        grads.0[l.reg_w] = reg.weight;
        grads.0[l.reg_b] = reg.bias;

        let (c, h, w) = *self.config.block_shapes().last().expect("non-empty");
        let head_grad = cls.input.iter().zip(&reg.input).map(|(a, b)| a + b);
        let data = match self.config.head_input {
            HeadInput::Flatten => head_grad.collect(),
            HeadInput::GlobalAverage => {
                let plane = (h * w) as f64;
                head_grad.flat_map(|g| std::iter::repeat_n(g / plane, h * w)).collect()
            }
        };
        let mut g = Tensor4::from_data(batch, c, h, w, data);
        for (i, (idx, cache)) in l.blocks.iter().zip(&fwd.blocks).enumerate().rev() {
            if let (Some([s, b, _, _]), Some(bn)) = (idx.bn, &cache.bn) {
                let bg = bn_backward(&g, bn, self.p(s));
                grads.0[s] = bg.gamma;
                grads.0[b] = bg.beta;
                g = bg.input;
            }
            debug_assert_eq!(g.data.len(), cache.pooled.data.len());
            let gpool = avgpool_backward(cache.pooled_shape, &g, self.config.pool_size);
            let grelu = relu_backward(&cache.pre_relu, &gpool);
            let cg = conv_backward(&cache.input, self.p(idx.conv_w), &grelu, &self.config.geometry(i));
            grads.0[idx.conv_w] = cg.weight;
            grads.0[idx.conv_b] = cg.bias;
            g = cg.input;
        }
        grads
    }

    fn reg_weight(&self) -> Result<f64> {
        regression_weight(self.config.amplification, self.config.reg_label_variance.unwrap_or(1.0))
    }

    /// Training-mode forward pass, total loss and full gradient for `task`.
    pub fn loss_and_grads(&self, batch: &Batch, task: TaskMode) -> Result<(LossBreakdown, Gradients, ForwardPass)> {
        let fwd = self.forward(&batch.input, Mode::Train)?;
        if batch.targets.len() != fwd.batch * CLASSES || batch.rho.len() != fwd.batch {
            return Err(CpaError::ShapeMismatch("batch labels do not match inputs".into()));
        }
        let gamma = self.config.focal_gamma;
        let w_reg = self.reg_weight()?;
        let l_cls = focal_loss(&batch.targets, &fwd.probs, CLASSES, gamma);
        let l_reg = mse_log_ber(&batch.rho, &fwd.rho_hat)?;
        let l2 = self.params.l2_penalty(self.config.l2_coeff);

        let grad_logits = if task.trains_intent() {
            focal_loss_grad_logits(&batch.targets, &fwd.probs, CLASSES, gamma)
        } else {
            vec![0.0; fwd.batch * CLASSES]
        };
        let grad_rho: Vec<f64> = if task.trains_capability() {
            mse_grad(&batch.rho, &fwd.rho_hat).into_iter().map(|g| g * w_reg).collect()
        } else {
            vec![0.0; fwd.batch]
        };
        let mut grads = self.backward(&fwd, &grad_logits, &grad_rho);
        let coeff = self.config.l2_coeff;
        for (g, t) in grads.0.iter_mut().zip(&self.params.tensors) {
            if t.kind == ParamKind::Kernel {
                for (gv, wv) in g.iter_mut().zip(&t.values) {
                    *gv += 2.0 * coeff * wv;
                }
            }
        }
        let cls_part = if task.trains_intent() { l_cls } else { 0.0 };
        let reg_part = if task.trains_capability() { w_reg * l_reg } else { 0.0 };
        let breakdown = LossBreakdown {
            classification: l_cls,
            regression: l_reg,
            l2,
            total: cls_part + reg_part + l2,
        };
        Ok((breakdown, grads, fwd))
    }

    /// Multitask loss without gradients, e.g. on held-out data in infer mode.
    pub fn loss(&self, batch: &Batch, mode: Mode) -> Result<LossBreakdown> {
        let fwd = self.forward(&batch.input, mode)?;
        if batch.targets.len() != fwd.batch * CLASSES || batch.rho.len() != fwd.batch {
            return Err(CpaError::ShapeMismatch("batch labels do not match inputs".into()));
        }
        let classification = focal_loss(&batch.targets, &fwd.probs, CLASSES, self.config.focal_gamma);
        let regression = mse_log_ber(&batch.rho, &fwd.rho_hat)?;
        let l2 = self.params.l2_penalty(self.config.l2_coeff);
        Ok(LossBreakdown {
            classification,
            regression,
            l2,
            total: classification + self.reg_weight()? * regression + l2,
        })
    }

    /// Folds the batch statistics of a training pass into the running
    /// averages.
    pub fn update_running_stats(&mut self, fwd: &ForwardPass) {
        let momentum = self.config.bn_momentum;
        let stats: Vec<_> = fwd
            .bn_stats()
            .into_iter()
            .map(|s| s.map(|(m, v, n)| (m.to_vec(), v.to_vec(), n)))
            .collect();
        for (idx, stat) in self.layout.blocks.clone().iter().zip(stats) {
            if let (Some([_, _, rm, rv]), Some((mean, var, n))) = (idx.bn, stat) {
                let unbias = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
                for (r, m) in self.params.tensors[rm].values.iter_mut().zip(&mean) {
                    *r = momentum * *r + (1.0 - momentum) * m;
                }
                for (r, v) in self.params.tensors[rv].values.iter_mut().zip(&var) {
                    *r = momentum * *r + (1.0 - momentum) * v * unbias;
                }
            }
        }
    }

    /// Inference-mode outputs `(probs [n, 3], rho_hat [n])`, evaluated in
    /// chunks of `chunk` samples.
    pub fn predict(&self, inputs: &[f64], n: usize, chunk: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let len = self.config.input_len();
        if inputs.len() != n * len {
            return Err(CpaError::InputSize { expected: n * len, got: inputs.len() });
        }
        let mut probs = Vec::with_capacity(n * CLASSES);
        let mut rho = Vec::with_capacity(n);
        let chunk = chunk.max(1);
        for start in (0..n).step_by(chunk) {
            let end = (start + chunk).min(n);
            let t = Tensor4::from_data(
                end - start,
                self.config.input_channels,
                self.config.input_height,
                self.config.input_width,
                inputs[start * len..end * len].to_vec(),
            );
            let fwd = self.forward(&t, Mode::Infer)?;
            probs.extend(fwd.probs);
            rho.extend(fwd.rho_hat);
        }
        Ok((probs, rho))
    }
}
