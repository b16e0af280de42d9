//! Residual-network builder and reverse-mode autodiff engine.
//!
//! Networks are partitioned into four module groups: (1) the initial
//! convolution, (2) unstrided block convolutions, (3) strided block
//! convolutions, and (4) strided 1×1 skip connections. A
//! [`PlacementConfig`] picks an anti-aliasing variant per group; none of the
//! variants add trainable parameters.

mod checkpoint;
mod layers;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use layers::{Aux, BnRunning, Node, NodeKind, Param, TapeEntry};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::activation::Activation;
use crate::antialias::{blur, blur_adjoint, BlurSpec, Stage, Variant};
use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::{conv2d, subsample, PaddingMode, Tensor};

const BN_MOMENTUM: f64 = 0.9;
const BN_EPS: f64 = 1e-5;

/// One stage of the residual trunk: `blocks` basic blocks at `channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StageSpec {
    pub channels: usize,
    pub blocks: usize,
}

/// Desk-scale architecture description. The first stage keeps the spatial
/// size; every later stage halves it exactly once.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    /// Input shape as (channels, height, width).
    pub input: (usize, usize, usize),
    pub classes: usize,
    pub stages: Vec<StageSpec>,
    /// Include the stem max-pool (window 3, stride 2).
    pub with_maxpool: bool,
    /// Border handling of the trainable convolutions and the max-pool.
    /// Circular makes an unstrided network exactly shift-equivariant.
    #[serde(default = "default_conv_padding")]
    pub conv_padding: PaddingMode,
}

fn default_conv_padding() -> PaddingMode {
    PaddingMode::Zero
}

impl ArchSpec {
    /// The default desk-scale trunk: 3 stages of (16, 32, 64) channels with
    /// 2 basic blocks each on 32×32 inputs.
    pub fn desk(in_channels: usize, classes: usize) -> Self {
        Self {
            input: (in_channels, 32, 32),
            classes,
            stages: vec![
                StageSpec {
                    channels: 16,
                    blocks: 2,
                },
                StageSpec {
                    channels: 32,
                    blocks: 2,
                },
                StageSpec {
                    channels: 64,
                    blocks: 2,
                },
            ],
            with_maxpool: true,
            conv_padding: PaddingMode::Zero,
        }
    }

    fn validate(&self) -> Result<()> {
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config(
                "arch input shape has a zero dimension".into(),
            ));
        }
        if self.classes == 0 {
            return Err(Error::Config("arch needs at least one class".into()));
        }
        if self.stages.is_empty() {
            return Err(Error::Config("arch needs at least one stage".into()));
        }
        if self.stages.iter().any(|s| s.channels == 0 || s.blocks == 0) {
            return Err(Error::Config(
                "stages need nonzero channels and blocks".into(),
            ));
        }
        Ok(())
    }
}

/// Anti-aliasing choice for one module group.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupPlacement {
    pub variant: Variant,
    pub blur: BlurSpec,
}

impl GroupPlacement {
    pub fn none() -> Self {
        Self {
            variant: Variant::None,
            blur: BlurSpec {
                k: 3,
                padding: PaddingMode::Reflect,
            },
        }
    }

    pub fn blur_after(k: usize) -> Result<Self> {
        Ok(Self {
            variant: Variant::BlurAfter,
            blur: BlurSpec::reflect(k)?,
        })
    }
}

/// Per-group anti-aliasing and activation choices defining one architecture
/// flavor. Group 4's trainable kernel is 1×1, so the ERF variant is invalid
/// there and rejected at build time.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementConfig {
    pub initial_conv: GroupPlacement,
    pub block_conv_unstrided: GroupPlacement,
    pub block_conv_strided: GroupPlacement,
    pub skip_strided: GroupPlacement,
    /// Blur between the dense max operation and its subsampling; uses the
    /// initial-conv group's blur spec.
    pub maxpool_blur: bool,
    pub activation: Activation,
    /// Stride of the first convolution, 1 or 2.
    pub conv1_stride: usize,
}

impl PlacementConfig {
    /// All-none baseline with ReLU.
    pub fn baseline() -> Self {
        Self {
            initial_conv: GroupPlacement::none(),
            block_conv_unstrided: GroupPlacement::none(),
            block_conv_strided: GroupPlacement::none(),
            skip_strided: GroupPlacement::none(),
            maxpool_blur: false,
            activation: Activation::Relu,
            conv1_stride: 1,
        }
    }

    /// The best-performing combination: blur after the strided block convs
    /// and strided skips, blur before the max-pool subsampling, Swish.
    pub fn best_model(k: usize) -> Result<Self> {
        Ok(Self {
            initial_conv: GroupPlacement {
                variant: Variant::None,
                blur: BlurSpec::reflect(k)?,
            },
            block_conv_unstrided: GroupPlacement::none(),
            block_conv_strided: GroupPlacement::blur_after(k)?,
            skip_strided: GroupPlacement::blur_after(k)?,
            maxpool_blur: true,
            activation: Activation::Swish,
            conv1_stride: 1,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.skip_strided.variant == Variant::Erf {
            return Err(Error::Config(
                "erf variant is invalid on the 1x1 strided skip group".into(),
            ));
        }
        if self.conv1_stride != 1 && self.conv1_stride != 2 {
            return Err(Error::Config(format!(
                "conv1_stride must be 1 or 2, got {}",
                self.conv1_stride
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// The built network: topologically ordered layers, the trainable parameter
/// store, and batch-norm running statistics. Blur layers hold no trainable
/// parameters, so the parameter count is identical across placements.
#[derive(Debug, Clone)]
pub struct LayerGraph<S: Scalar> {
    nodes: Vec<Node>,
    params: Vec<Param<S>>,
    bn_states: Vec<BnRunning<S>>,
    mode: Mode,
    feature_node: usize,
    input_shape: (usize, usize, usize),
    classes: usize,
    has_grads: bool,
}

struct Builder<'a, S: Scalar> {
    nodes: Vec<Node>,
    params: Vec<Param<S>>,
    bn_states: Vec<BnRunning<S>>,
    rng: &'a mut ChaCha8Rng,
    activation: Activation,
    conv_padding: PaddingMode,
    // Spatial size tracked through the build to validate exact halving.
    h: usize,
    w: usize,
}

impl<'a, S: Scalar> Builder<'a, S> {
    fn push(&mut self, kind: NodeKind, input: usize, name: String) -> usize {
        self.nodes.push(Node { kind, input, name });
        self.nodes.len() - 1
    }

    fn he_conv(&mut self, name: &str, oc: usize, ic: usize, k: usize) -> usize {
        let fan_in = ic * k * k;
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = StandardNormal;
        let data: Vec<S> = (0..oc * ic * k * k)
            .map(|_| {
                let z: f64 = normal.sample(self.rng);
                cast(z * std)
            })
            .collect();
        self.params.push(Param::new(
            format!("{name}.weight"),
            vec![oc, ic, k, k],
            data,
        ));
        self.params.len() - 1
    }

    fn bn_params(&mut self, name: &str, channels: usize) -> (usize, usize, usize) {
        self.params.push(Param::new(
            format!("{name}.gamma"),
            vec![channels],
            vec![S::one(); channels],
        ));
        let gamma = self.params.len() - 1;
        self.params.push(Param::new(
            format!("{name}.beta"),
            vec![channels],
            vec![S::zero(); channels],
        ));
        let beta = self.params.len() - 1;
        self.bn_states.push(BnRunning {
            mean: vec![S::zero(); channels],
            var: vec![S::one(); channels],
        });
        (gamma, beta, self.bn_states.len() - 1)
    }

    fn subsample_checked(&mut self, input: usize, stride: usize, name: String) -> Result<usize> {
        if !self.h.is_multiple_of(stride) || !self.w.is_multiple_of(stride) {
            return Err(Error::Config(format!(
                "spatial size {}x{} does not halve exactly at {name}",
                self.h, self.w
            )));
        }
        self.h /= stride;
        self.w /= stride;
        Ok(self.push(NodeKind::Subsample { stride }, input, name))
    }

    /// One downsampling unit: the variant's stages around a trainable
    /// convolution, with batch-norm inserted right before the activation
    /// slot. `with_activation = false` (skip paths) keeps the batch-norm but
    /// drops the nonlinearity itself.
    #[allow(clippy::too_many_arguments)]
    fn unit(
        &mut self,
        input: usize,
        group: &GroupPlacement,
        in_ch: usize,
        out_ch: usize,
        ksize: usize,
        stride: usize,
        with_activation: bool,
        name: &str,
    ) -> Result<usize> {
        let stages = group
            .variant
            .stages(stride, ksize)
            .map_err(|e| Error::Config(format!("{name}: {e}")))?;
        let mut current = input;
        let mut blur_idx = 0;
        for stage in stages {
            current = match stage {
                Stage::Blur => {
                    let suffix = if blur_idx == 0 { "blur" } else { "blur2" };
                    blur_idx += 1;
                    self.push(
                        NodeKind::Blur { spec: group.blur },
                        current,
                        format!("{name}.{suffix}"),
                    )
                }
                Stage::Conv => {
                    let weight = self.he_conv(name, out_ch, in_ch, ksize);
                    self.push(
                        NodeKind::Conv {
                            weight,
                            pad: (ksize - 1) / 2,
                            padding: self.conv_padding,
                        },
                        current,
                        name.to_string(),
                    )
                }
                Stage::Subsample => {
                    self.subsample_checked(current, stride, format!("{name}.subsample"))?
                }
                Stage::Activation => {
                    let (gamma, beta, state) = self.bn_params(&format!("{name}.bn"), out_ch);
                    current = self.push(
                        NodeKind::BatchNorm {
                            gamma,
                            beta,
                            state,
                            momentum: BN_MOMENTUM,
                            eps: BN_EPS,
                        },
                        current,
                        format!("{name}.bn"),
                    );
                    if with_activation {
                        current = self.push(
                            NodeKind::Activation(self.activation),
                            current,
                            format!("{name}.act"),
                        );
                    }
                    current
                }
            };
        }
        Ok(current)
    }
}

/// Builds the network deterministically from the architecture, placement,
/// and seed. Two builds with the same seed produce bitwise-identical
/// parameters.
pub fn build_network<S: Scalar>(
    arch: &ArchSpec,
    placement: &PlacementConfig,
    seed: u64,
) -> Result<LayerGraph<S>> {
    arch.validate()?;
    placement.validate()?;
    let (in_c, in_h, in_w) = arch.input;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::<S> {
        nodes: Vec::new(),
        params: Vec::new(),
        bn_states: Vec::new(),
        rng: &mut rng,
        activation: placement.activation,
        conv_padding: arch.conv_padding,
        h: in_h,
        w: in_w,
    };
    let input = b.push(NodeKind::Input, 0, "input".into());

    // Group 1: the stem convolution, strided or not per conv1_stride.
    let stem_ch = arch.stages[0].channels;
    let mut current = b.unit(
        input,
        &placement.initial_conv,
        in_c,
        stem_ch,
        3,
        placement.conv1_stride,
        true,
        "stem.conv1",
    )?;

    if arch.with_maxpool {
        current = b.push(
            NodeKind::MaxPoolDense {
                window: 3,
                pad: 1,
                padding: arch.conv_padding,
            },
            current,
            "stem.maxpool".into(),
        );
        if placement.maxpool_blur {
            current = b.push(
                NodeKind::Blur {
                    spec: placement.initial_conv.blur,
                },
                current,
                "stem.maxpool.blur".into(),
            );
        }
        current = b.subsample_checked(current, 2, "stem.maxpool.subsample".into())?;
    }

    let mut in_ch = stem_ch;
    for (si, stage) in arch.stages.iter().enumerate() {
        for bi in 0..stage.blocks {
            let stride = if si > 0 && bi == 0 { 2 } else { 1 };
            let name = format!("stage{si}.block{bi}");
            let block_input = current;
            let main_group = if stride > 1 {
                &placement.block_conv_strided
            } else {
                &placement.block_conv_unstrided
            };
            let main = b.unit(
                block_input,
                main_group,
                in_ch,
                stage.channels,
                3,
                stride,
                true,
                &format!("{name}.conv1"),
            )?;
            let main = b.unit(
                main,
                &placement.block_conv_unstrided,
                stage.channels,
                stage.channels,
                3,
                1,
                false,
                &format!("{name}.conv2"),
            )?;
            let skip = if stride > 1 || in_ch != stage.channels {
                // Undo the main path's spatial bookkeeping so the skip unit
                // re-checks the same halving.
                if stride > 1 {
                    b.h *= stride;
                    b.w *= stride;
                }
                b.unit(
                    block_input,
                    &placement.skip_strided,
                    in_ch,
                    stage.channels,
                    1,
                    stride,
                    false,
                    &format!("{name}.skip"),
                )?
            } else {
                block_input
            };
            let add = b.push(NodeKind::Add { rhs: skip }, main, format!("{name}.add"));
            current = b.push(
                NodeKind::Activation(placement.activation),
                add,
                format!("{name}.act"),
            );
            in_ch = stage.channels;
        }
    }

    let feature_node = b.push(NodeKind::GlobalAvgPool, current, "head.pool".into());
    let features = in_ch;
    let head_std = (2.0 / features as f64).sqrt();
    let normal = StandardNormal;
    let wdata: Vec<S> = (0..arch.classes * features)
        .map(|_| {
            let z: f64 = normal.sample(b.rng);
            cast(z * head_std)
        })
        .collect();
    b.params.push(Param::new(
        "head.fc.weight".into(),
        vec![arch.classes, features],
        wdata,
    ));
    let weight = b.params.len() - 1;
    b.params.push(Param::new(
        "head.fc.bias".into(),
        vec![arch.classes],
        vec![S::zero(); arch.classes],
    ));
    let bias = b.params.len() - 1;
    let output = b.push(
        NodeKind::Linear { weight, bias },
        feature_node,
        "head.fc".into(),
    );
    debug_assert_eq!(output, b.nodes.len() - 1);

    Ok(LayerGraph {
        nodes: b.nodes,
        params: b.params,
        bn_states: b.bn_states,
        mode: Mode::Train,
        feature_node,
        input_shape: arch.input,
        classes: arch.classes,
        has_grads: false,
    })
}

impl<S: Scalar> LayerGraph<S> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn params(&self) -> &[Param<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<S>] {
        &mut self.params
    }

    pub(crate) fn bn_states(&self) -> &[BnRunning<S>] {
        &self.bn_states
    }

    pub(crate) fn bn_states_mut(&mut self) -> &mut [BnRunning<S>] {
        &mut self.bn_states
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    fn check_batch(&self, batch: &Tensor<S>) -> Result<()> {
        let (_, c, h, w) = batch.shape();
        if (c, h, w) != self.input_shape {
            return Err(Error::Dimension(format!(
                "batch shape ({c},{h},{w}) does not match network input {:?}",
                self.input_shape
            )));
        }
        Ok(())
    }

    fn forward_all(&self, batch: &Tensor<S>, use_batch_stats: bool) -> Result<Vec<TapeEntry<S>>> {
        self.check_batch(batch)?;
        let mut tape: Vec<TapeEntry<S>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let x = if matches!(node.kind, NodeKind::Input) {
                batch
            } else {
                &tape[node.input].out
            };
            let rhs = match node.kind {
                NodeKind::Add { rhs } => Some(&tape[rhs].out),
                _ => None,
            };
            let entry = layers::forward_node(
                &node.kind,
                x,
                rhs,
                &self.params,
                &self.bn_states,
                use_batch_stats,
            )?;
            tape.push(entry);
        }
        Ok(tape)
    }

    /// Forward pass honoring the current mode. Train mode uses batch
    /// statistics and updates the running ones; eval mode is pure.
    pub fn forward(&mut self, batch: &Tensor<S>) -> Result<Tensor<S>> {
        match self.mode {
            Mode::Eval => self.eval_forward(batch),
            Mode::Train => {
                let tape = self.forward_all(batch, true)?;
                self.update_running_stats(&tape);
                Ok(tape.last().expect("graph is non-empty").out.clone())
            }
        }
    }

    /// Pure eval-mode forward: batch-norm uses running statistics.
    pub fn eval_forward(&self, batch: &Tensor<S>) -> Result<Tensor<S>> {
        let tape = self.forward_all(batch, false)?;
        Ok(tape.last().expect("graph is non-empty").out.clone())
    }

    /// Eval-mode forward returning (pre-classifier features, logits).
    pub fn eval_features_and_logits(&self, batch: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        let tape = self.forward_all(batch, false)?;
        let features = tape[self.feature_node].out.clone();
        let logits = tape.last().expect("graph is non-empty").out.clone();
        Ok((features, logits))
    }

    /// Eval-mode forward returning every node's output, for diagnostics.
    pub fn eval_forward_trace(&self, batch: &Tensor<S>) -> Result<Vec<Tensor<S>>> {
        Ok(self
            .forward_all(batch, false)?
            .into_iter()
            .map(|e| e.out)
            .collect())
    }

    fn update_running_stats(&mut self, tape: &[TapeEntry<S>]) {
        let m = cast::<S>(BN_MOMENTUM);
        let one_minus = cast::<S>(1.0 - BN_MOMENTUM);
        for (node, entry) in self.nodes.iter().zip(tape) {
            if let NodeKind::BatchNorm { state, .. } = node.kind {
                if let Aux::BatchNorm {
                    batch_mean,
                    batch_var,
                    ..
                } = &entry.aux
                {
                    let st = &mut self.bn_states[state];
                    for c in 0..st.mean.len() {
                        st.mean[c] = m * st.mean[c] + one_minus * batch_mean[c];
                        st.var[c] = m * st.var[c] + one_minus * batch_var[c];
                    }
                }
            }
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn cross_entropy(&self, logits: &Tensor<S>, labels: &[usize]) -> Result<(S, Tensor<S>)> {
        let (n, c, _, _) = logits.shape();
        if labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} labels for a batch of {n}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Argument(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        let inv_n = S::one() / cast::<S>(n as f64);
        let mut loss = S::zero();
        let mut grad = Tensor::zeros(n, c, 1, 1);
        for bn in 0..n {
            let row: Vec<S> = (0..c).map(|k| logits.at(bn, k, 0, 0)).collect();
            let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
            let exps: Vec<S> = row.iter().map(|&v| (v - max).exp()).collect();
            let denom = exps.iter().fold(S::zero(), |a, &b| a + b);
            let label = labels[bn];
            loss = loss - ((exps[label] / denom).ln()) * inv_n;
            for k in 0..c {
                let p = exps[k] / denom;
                let indicator = if k == label { S::one() } else { S::zero() };
                grad.set(bn, k, 0, 0, (p - indicator) * inv_n);
            }
        }
        Ok((loss, grad))
    }

    /// Train-mode loss without any mutation; the finite-difference oracle
    /// evaluates exactly this function.
    pub fn train_loss(&self, batch: &Tensor<S>, labels: &[usize]) -> Result<S> {
        let tape = self.forward_all(batch, true)?;
        let (loss, _) = self.cross_entropy(&tape.last().expect("non-empty").out, labels)?;
        Ok(loss)
    }

    /// Softmax cross-entropy mean over the batch; populates every trainable
    /// parameter's gradient. Blur layers pass gradients through their fixed
    /// kernels but accumulate none. Requires train mode.
    pub fn loss_and_backward(&mut self, batch: &Tensor<S>, labels: &[usize]) -> Result<S> {
        if self.mode != Mode::Train {
            return Err(Error::Argument(
                "loss_and_backward requires train mode".into(),
            ));
        }
        let tape = self.forward_all(batch, true)?;
        self.update_running_stats(&tape);
        let (loss, dlogits) = self.cross_entropy(&tape.last().expect("non-empty").out, labels)?;

        let mut grads: Vec<Option<Tensor<S>>> = vec![None; self.nodes.len()];
        let last = self.nodes.len() - 1;
        grads[last] = Some(dlogits);
        for id in (0..self.nodes.len()).rev() {
            let Some(gout) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if matches!(node.kind, NodeKind::Input) {
                continue;
            }
            let x = &tape[node.input].out;
            let (gin, grhs) =
                layers::backward_node(&node.kind, x, &tape[id].aux, &gout, &mut self.params)?;
            accumulate(&mut grads[node.input], gin);
            if let (NodeKind::Add { rhs }, Some(g)) = (&node.kind, grhs) {
                accumulate(&mut grads[*rhs], g);
            }
        }
        self.has_grads = true;
        Ok(loss)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            for g in &mut p.grad {
                *g = S::zero();
            }
        }
        self.has_grads = false;
    }

    /// Momentum SGD: v ← momentum·v + g, p ← p − lr·v. A zero learning rate
    /// leaves parameters untouched; negative rates are rejected.
    pub fn sgd_step(&mut self, lr: f64, momentum: f64) -> Result<()> {
        if lr < 0.0 {
            return Err(Error::Argument(format!("learning rate {lr} is negative")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Argument(format!(
                "momentum {momentum} must lie in [0, 1)"
            )));
        }
        if !self.has_grads {
            return Err(Error::Argument(
                "sgd_step called before loss_and_backward".into(),
            ));
        }
        let lr_s = cast::<S>(lr);
        let m_s = cast::<S>(momentum);
        for p in &mut self.params {
            for i in 0..p.data.len() {
                p.velocity[i] = m_s * p.velocity[i] + p.grad[i];
                p.data[i] = p.data[i] - lr_s * p.velocity[i];
            }
        }
        Ok(())
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<Tensor<S>>, g: Tensor<S>) {
    match slot {
        Some(acc) => *acc = acc.add(&g).expect("gradient shapes match"),
        None => *slot = Some(g),
    }
}

/// Backpropagates a unit gradient from one interior output position of a
/// single downsampling unit built with all-positive surrogate weights, and
/// returns the bounding-box side length of the nonzero input support.
pub fn receptive_field_probe<S: Scalar>(
    variant: Variant,
    blur_spec: &BlurSpec,
    conv_spatial: usize,
    stride: usize,
) -> Result<usize> {
    let stages = variant.stages(stride, conv_spatial)?;
    let size = 16 * stride.max(1) + 8 * conv_spatial;
    let weight = Param::new(
        "probe.weight".into(),
        vec![1, 1, conv_spatial, conv_spatial],
        vec![cast::<S>(0.1); conv_spatial * conv_spatial],
    );
    let pad = (conv_spatial - 1) / 2;

    // Forward, recording each stage's input so the adjoint chain can walk
    // back with exact shapes and activation slopes.
    let mut current = Tensor::<S>::from_fn(1, 1, size, size, |_, _, _, _| S::one());
    let mut inputs: Vec<Tensor<S>> = Vec::new();
    for stage in &stages {
        inputs.push(current.clone());
        current = match stage {
            Stage::Blur => blur(&current, blur_spec)?,
            Stage::Conv => {
                let w = Tensor::from_vec(1, 1, conv_spatial, conv_spatial, weight.data.clone())?;
                conv2d(&current, &w, 1, PaddingMode::Zero, pad)?
            }
            Stage::Subsample => subsample(&current, stride)?,
            Stage::Activation => current.map(|v| Activation::Relu.value(v)),
        };
    }

    let (_, _, oh, ow) = current.shape();
    let mut grad = Tensor::<S>::zeros(1, 1, oh, ow);
    grad.set(0, 0, oh / 2, ow / 2, S::one());

    for (stage, x) in stages.iter().zip(&inputs).rev() {
        grad = match stage {
            Stage::Blur => blur_adjoint(&grad, blur_spec)?,
            Stage::Conv => layers::conv_input_grad(x, &weight, &grad, pad, PaddingMode::Zero),
            Stage::Subsample => layers::subsample_adjoint(x, &grad, stride),
            Stage::Activation => Tensor::from_fn(1, 1, x.shape().2, x.shape().3, |_, _, y, xx| {
                Activation::Relu.derivative(x.at(0, 0, y, xx)) * grad.at(0, 0, y, xx)
            }),
        };
    }

    let (_, _, h, w) = grad.shape();
    let mut y_min = h;
    let mut y_max = 0;
    let mut x_min = w;
    let mut x_max = 0;
    let mut any = false;
    for y in 0..h {
        for x in 0..w {
            if grad.at(0, 0, y, x) != S::zero() {
                any = true;
                y_min = y_min.min(y);
                y_max = y_max.max(y);
                x_min = x_min.min(x);
                x_max = x_max.max(x);
            }
        }
    }
    if !any {
        return Ok(0);
    }
    Ok((y_max - y_min + 1).max(x_max - x_min + 1))
}
