//! Layer assembly (projection, attention, aggregation), multi-head
//! combination, the semi-supervised loss and the full-batch training loop.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::adam::{AdamHyper, AdamState};
use crate::error::{CoreError, Result};
use crate::flops::{ForwardTrace, TraceEvent};
use crate::graph::Graph;
use crate::matrix::DenseMatrix;
use crate::rng::Rng;
use crate::spiking::{EdgeAttention, ResetMode};
use crate::tape::{self, NodeId, Surrogate, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    Spiking,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadCombine {
    Concat,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerConfig {
    pub in_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
    pub head_combine: HeadCombine,
    pub attention_kind: AttentionKind,
    pub activation: Activation,
}

impl LayerConfig {
    pub fn output_width(&self) -> usize {
        match self.head_combine {
            HeadCombine::Concat => self.heads * self.out_dim,
            HeadCombine::Average => self.out_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub layers: Vec<LayerConfig>,
    pub num_classes: usize,
    /// Spike-train length T.
    pub steps: usize,
    /// Firing threshold.
    pub mu: f64,
    pub share_theta: bool,
    pub reset_mode: ResetMode,
    pub surrogate: Surrogate,
    pub leaky_slope: f64,
    pub adam: AdamHyper,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Forward passes averaged at evaluation time.
    pub eval_passes: usize,
}

impl ModelConfig {
    /// Standard two-layer architecture: `heads` attention heads of width
    /// `hidden` concatenated, then a single averaged output head over the
    /// classes.
    pub fn two_layer(
        in_dim: usize,
        hidden: usize,
        num_classes: usize,
        heads: usize,
        kind: AttentionKind,
    ) -> Self {
        let layers = vec![
            LayerConfig {
                in_dim,
                out_dim: hidden,
                heads,
                head_combine: HeadCombine::Concat,
                attention_kind: kind,
                activation: Activation::Elu,
            },
            LayerConfig {
                in_dim: hidden * heads,
                out_dim: num_classes,
                heads: 1,
                head_combine: HeadCombine::Average,
                attention_kind: kind,
                activation: Activation::Identity,
            },
        ];
        ModelConfig {
            layers,
            num_classes,
            steps: 8,
            mu: 0.1,
            share_theta: false,
            reset_mode: ResetMode::FiredOnly,
            surrogate: Surrogate::default(),
            leaky_slope: 0.2,
            adam: AdamHyper::default(),
            weight_decay: 5e-4,
            epochs: 300,
            patience: 100,
            seed: 42,
            eval_passes: 1,
        }
    }

    pub fn validate(&self, in_dim: usize) -> Result<()> {
        if self.layers.is_empty() {
            return Err(CoreError::InvalidArgument("model has no layers".into()));
        }
        if self.steps == 0 {
            return Err(CoreError::InvalidArgument("steps (T) must be >= 1".into()));
        }
        if self.mu < 0.0 {
            return Err(CoreError::InvalidArgument("mu must be >= 0".into()));
        }
        let mut width = in_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_dim != width {
                return Err(CoreError::InvalidArgument(format!(
                    "layer {i} expects input width {}, got {width}",
                    layer.in_dim
                )));
            }
            width = layer.output_width();
        }
        if width != self.num_classes {
            return Err(CoreError::InvalidArgument(format!(
                "final layer width {width} does not match {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// Trainable matrices of one attention head: the projection and the
/// per-step (or shared) attention parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w: DenseMatrix,
    pub thetas: Vec<DenseMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `layers[l][k]` is head `k` of layer `l`.
    pub layers: Vec<Vec<HeadParams>>,
}

impl ModelParams {
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(config.layers.len());
        for (l, layer) in config.layers.iter().enumerate() {
            let mut heads = Vec::with_capacity(layer.heads);
            for k in 0..layer.heads {
                let mut head_rng = rng.fork((l as u64) << 32 | k as u64);
                let w = DenseMatrix::glorot(layer.in_dim, layer.out_dim, &mut head_rng);
                let theta_count = match layer.attention_kind {
                    AttentionKind::Baseline => 1,
                    AttentionKind::Spiking => {
                        if config.share_theta {
                            1
                        } else {
                            config.steps
                        }
                    }
                };
                let thetas = (0..theta_count)
                    .map(|_| DenseMatrix::glorot(layer.out_dim, 2, &mut head_rng))
                    .collect();
                heads.push(HeadParams { w, thetas });
            }
            layers.push(heads);
        }
        ModelParams { layers }
    }

    pub fn iter_matrices(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.layers.iter().flatten().flat_map(|h| {
            core::iter::once(&h.w).chain(h.thetas.iter())
        })
    }

    pub fn iter_matrices_mut(&mut self) -> impl Iterator<Item = &mut DenseMatrix> {
        self.layers.iter_mut().flatten().flat_map(|h| {
            core::iter::once(&mut h.w).chain(h.thetas.iter_mut())
        })
    }
}

/// Attention coefficients held fixed during a forward pass (used to check
/// the differentiable subgraph in isolation).
#[derive(Debug, Clone)]
pub struct FixedAttention {
    /// `per_layer[l][k]` replaces layer `l`, head `k`.
    pub per_layer: Vec<Vec<EdgeAttention>>,
}

/// Tape node ids of all parameters, mirroring [`ModelParams`].
pub struct ParamNodes {
    pub layers: Vec<Vec<(NodeId, Vec<NodeId>)>>,
}

impl ParamNodes {
    pub fn flat(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for (w, thetas) in layer {
                out.push(*w);
                out.extend_from_slice(thetas);
            }
        }
        out
    }
}

pub struct ForwardResult {
    /// Row-softmaxed class probabilities, `n x c`.
    pub output: NodeId,
    /// Normalized attention node per `(layer, head)`.
    pub attentions: Vec<Vec<NodeId>>,
}

/// Register every parameter matrix as a gradient-tracked leaf.
pub fn register_params(tape: &mut Tape, params: &ModelParams) -> ParamNodes {
    let layers = params
        .layers
        .iter()
        .map(|heads| {
            heads
                .iter()
                .map(|h| {
                    let w = tape.leaf(h.w.clone());
                    let thetas = h.thetas.iter().map(|t| tape.leaf(t.clone())).collect();
                    (w, thetas)
                })
                .collect()
        })
        .collect();
    ParamNodes { layers }
}

/// One full forward pass on an existing tape. `rng` drives the Poisson
/// encoder; `fixed` (when given) bypasses attention computation entirely;
/// `trace` records the operation counts the FLOPs model needs.
#[allow(clippy::too_many_arguments)]
pub fn forward_on_tape(
    tape: &mut Tape,
    config: &ModelConfig,
    nodes: &ParamNodes,
    x: NodeId,
    g: &Rc<Graph>,
    rng: &mut Rng,
    fixed: Option<&FixedAttention>,
    mut trace: Option<&mut ForwardTrace>,
) -> Result<ForwardResult> {
    let n = g.num_nodes();
    let edges = g.edge_slots();
    let mut current = x;
    let mut attentions = Vec::with_capacity(config.layers.len());
    for (l, layer) in config.layers.iter().enumerate() {
        let mut head_outputs = Vec::with_capacity(layer.heads);
        let mut layer_attention = Vec::with_capacity(layer.heads);
        for k in 0..layer.heads {
            let (w_id, theta_ids) = &nodes.layers[l][k];
            let mut head_rng = rng.fork(((l as u64) << 20) ^ (k as u64 + 1));
            let h = tape.matmul(current, *w_id)?;
            if let Some(t) = trace.as_deref_mut() {
                t.events.push(TraceEvent::Projection {
                    rows: n,
                    inner: layer.in_dim,
                    cols: layer.out_dim,
                });
            }
            let alpha_norm = if let Some(fixed) = fixed {
                let m = tape::edge_to_matrix(&fixed.per_layer[l][k]);
                tape.constant(m)
            } else {
                match layer.attention_kind {
                    AttentionKind::Spiking => {
                        let mut potential: Option<NodeId> = None;
                        let mut fired = Vec::with_capacity(config.steps);
                        for t in 0..config.steps {
                            let z = tape.poisson_encode(h, &mut head_rng);
                            if let Some(tr) = trace.as_deref_mut() {
                                tr.events.push(TraceEvent::SpikeCharge {
                                    nnz: tape.value(z).count_nonzero(),
                                });
                                tr.events.push(TraceEvent::FireReset { neurons: 2 * n });
                            }
                            let theta = if config.share_theta {
                                theta_ids[0]
                            } else {
                                theta_ids[t]
                            };
                            let charge = tape.matmul(z, theta)?;
                            potential = Some(match potential {
                                None => charge,
                                Some(v) => tape.add(v, charge)?,
                            });
                            let v = potential.unwrap();
                            let s = tape.fire(v, config.mu, config.surrogate);
                            fired.push(s);
                            potential = Some(match config.reset_mode {
                                ResetMode::FiredOnly => {
                                    let neg = tape.scale(s, -config.mu);
                                    tape.add(v, neg)?
                                }
                                ResetMode::Unconditional => tape.add_scalar(v, -config.mu),
                            });
                        }
                        let total = tape.sum(&fired)?;
                        let s_avg = tape.scale(total, 1.0 / config.steps as f64);
                        let raw = tape.attention_scores(s_avg, g.clone())?;
                        let norm = tape.symmetric_normalize(raw, g.clone())?;
                        if let Some(tr) = trace.as_deref_mut() {
                            tr.events.push(TraceEvent::SymNorm { edges, nodes: n });
                        }
                        norm
                    }
                    AttentionKind::Baseline => {
                        let s = tape.matmul(h, theta_ids[0])?;
                        let raw = tape.attention_scores(s, g.clone())?;
                        let norm =
                            tape.softmax_normalize(raw, g.clone(), config.leaky_slope)?;
                        if let Some(tr) = trace.as_deref_mut() {
                            tr.events.push(TraceEvent::BaselineScore {
                                edges,
                                hidden: layer.out_dim,
                            });
                            tr.events.push(TraceEvent::SoftmaxNorm { edges });
                        }
                        norm
                    }
                }
            };
            layer_attention.push(alpha_norm);
            let aggregated = tape.aggregate(alpha_norm, h, g.clone())?;
            if let Some(tr) = trace.as_deref_mut() {
                tr.events.push(TraceEvent::Aggregate {
                    edges,
                    hidden: layer.out_dim,
                });
            }
            let activated = match layer.activation {
                Activation::Elu => tape.elu(aggregated),
                Activation::Identity => aggregated,
            };
            head_outputs.push(activated);
        }
        current = match layer.head_combine {
            HeadCombine::Concat => tape.concat_cols(&head_outputs)?,
            HeadCombine::Average => {
                let total = tape.sum(&head_outputs)?;
                tape.scale(total, 1.0 / layer.heads as f64)
            }
        };
        attentions.push(layer_attention);
    }
    let output = tape.softmax_rows(current);
    Ok(ForwardResult { output, attentions })
}

/// Summed cross-entropy over labeled nodes; probabilities are floored at
/// `1e-12` inside the log.
pub fn cross_entropy_loss(o: &DenseMatrix, labels: &[usize], mask: &[bool]) -> Result<f64> {
    if labels.len() != o.rows() || mask.len() != o.rows() {
        return Err(CoreError::InvalidArgument(format!(
            "{} rows of predictions vs {} labels / {} mask entries",
            o.rows(),
            labels.len(),
            mask.len()
        )));
    }
    let mut loss = 0.0;
    for i in 0..o.rows() {
        if !mask[i] {
            continue;
        }
        if labels[i] >= o.cols() {
            return Err(CoreError::InvalidArgument(format!(
                "labeled node {i} has class {} outside [0, {})",
                labels[i],
                o.cols()
            )));
        }
        loss -= libm::log(o.get(i, labels[i]).max(1e-12));
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub edge_removal_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: ModelParams,
    pub log: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

/// Averaged class probabilities over `passes` evaluation forward passes
/// with the fixed evaluation stream, plus the attention coefficients of
/// the first pass.
pub fn eval_probabilities(
    params: &ModelParams,
    config: &ModelConfig,
    g: &Rc<Graph>,
    mut trace: Option<&mut ForwardTrace>,
) -> Result<(DenseMatrix, Vec<Vec<EdgeAttention>>)> {
    let eval_root = Rng::new(config.seed).fork(0xe7a1);
    let passes = config.eval_passes.max(1);
    let mut sum: Option<DenseMatrix> = None;
    let mut attentions = Vec::new();
    for pass in 0..passes {
        let mut tape = Tape::new();
        // evaluation never backpropagates, so parameters enter as constants
        let nodes = ParamNodes {
            layers: params
                .layers
                .iter()
                .map(|heads| {
                    heads
                        .iter()
                        .map(|h| {
                            let w = tape.constant(h.w.clone());
                            let thetas =
                                h.thetas.iter().map(|t| tape.constant(t.clone())).collect();
                            (w, thetas)
                        })
                        .collect()
                })
                .collect(),
        };
        let x = tape.constant(g.features().clone());
        let mut pass_rng = eval_root.fork(pass as u64);
        let result = forward_on_tape(
            &mut tape,
            config,
            &nodes,
            x,
            g,
            &mut pass_rng,
            None,
            if pass == 0 { trace.as_deref_mut() } else { None },
        )?;
        if pass == 0 {
            attentions = result
                .attentions
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|&id| tape::matrix_to_edge(tape.value(id)))
                        .collect()
                })
                .collect();
        }
        let probs = tape.value(result.output).clone();
        sum = Some(match sum {
            None => probs,
            Some(s) => s.add(&probs)?,
        });
    }
    let avg = sum.unwrap().scale(1.0 / passes as f64);
    Ok((avg, attentions))
}

pub fn accuracy(probs: &DenseMatrix, labels: &[usize], mask: &[bool]) -> Result<f64> {
    let total = mask.iter().filter(|&&b| b).count();
    if total == 0 {
        return Err(CoreError::InvalidArgument(
            "accuracy over an empty mask".into(),
        ));
    }
    let mut correct = 0usize;
    for i in 0..probs.rows() {
        if !mask[i] {
            continue;
        }
        let row = probs.row(i);
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}

/// Accuracy of the trained model on `mask`, averaging `eval_passes`
/// deterministic forward passes.
pub fn evaluate(
    params: &ModelParams,
    config: &ModelConfig,
    g: &Rc<Graph>,
    mask: &[bool],
) -> Result<f64> {
    let (probs, _) = eval_probabilities(params, config, g, None)?;
    accuracy(&probs, g.labels(), mask)
}

/// Mean fraction of exactly-zero non-self-loop coefficients across all
/// attention instances of one forward pass.
pub fn mean_removal_ratio(attentions: &[Vec<EdgeAttention>], g: &Graph) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for layer in attentions {
        for alpha in layer {
            sum += crate::experiment::edge_removal_ratio(alpha, g);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Full-batch training with Adam, validation-based early stopping and a
/// per-epoch metric log. Deterministic given `config.seed`.
pub fn train(g: &Graph, config: &ModelConfig) -> Result<TrainResult> {
    config.validate(g.features().cols())?;
    if g.num_classes() != config.num_classes {
        return Err(CoreError::InvalidArgument(format!(
            "graph has {} classes, config expects {}",
            g.num_classes(),
            config.num_classes
        )));
    }
    if g.train_mask().iter().all(|&b| !b) {
        return Err(CoreError::InvalidArgument(
            "training requires a non-empty train mask".into(),
        ));
    }
    let g = Rc::new(if g.self_loops_added() {
        g.clone()
    } else {
        g.add_self_loops()
    });
    let root = Rng::new(config.seed);
    let mut params = ModelParams::init(config, &mut root.fork(0x1717));
    let mut adam: Vec<AdamState> = params
        .iter_matrices()
        .map(|m| AdamState::new(m.rows(), m.cols(), config.adam))
        .collect();
    let labels = Rc::new(g.labels().to_vec());
    let train_mask = Rc::new(g.train_mask().to_vec());
    let mut log = Vec::with_capacity(config.epochs);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = params.clone();
    let mut since_best = 0usize;
    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let nodes = register_params(&mut tape, &params);
        let x = tape.constant(g.features().clone());
        let mut epoch_rng = root.fork(0x7261_0000 + epoch as u64);
        let result = forward_on_tape(
            &mut tape, config, &nodes, x, &g, &mut epoch_rng, None, None,
        )?;
        let loss_id = tape.cross_entropy(result.output, labels.clone(), train_mask.clone())?;
        let train_loss = tape.value(loss_id).get(0, 0);
        if !train_loss.is_finite() {
            return Err(CoreError::Diverged { epoch });
        }
        let mut grads = tape.backward(loss_id)?;
        let flat = nodes.flat();
        for ((id, param), state) in flat
            .iter()
            .zip(params.iter_matrices_mut())
            .zip(adam.iter_mut())
        {
            let mut grad = grads
                .take(*id)
                .unwrap_or_else(|| DenseMatrix::zeros(param.rows(), param.cols()));
            if config.weight_decay != 0.0 {
                for (gv, pv) in grad.data_mut().iter_mut().zip(param.data()) {
                    *gv += config.weight_decay * pv;
                }
            }
            state.update(param, &grad)?;
        }
        let (probs, attentions) = eval_probabilities(&params, config, &g, None)?;
        let val_acc = accuracy(&probs, g.labels(), g.val_mask()).unwrap_or(0.0);
        let test_acc = accuracy(&probs, g.labels(), g.test_mask()).unwrap_or(0.0);
        let removal = mean_removal_ratio(&attentions, &g);
        log.push(EpochMetrics {
            epoch,
            train_loss,
            val_acc,
            test_acc,
            edge_removal_ratio: removal,
        });
        if val_acc > best_val {
            best_val = val_acc;
            best_epoch = epoch;
            best_params = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                break;
            }
        }
    }
    Ok(TrainResult {
        params: best_params,
        log,
        best_epoch,
        best_val_acc: best_val,
    })
}
