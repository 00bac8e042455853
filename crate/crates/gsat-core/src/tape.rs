//! Minimal reverse-mode tape over the operations the model composes:
//! dense matmul, elementwise activations, the spiking forward pass with
//! straight-through surrogates, per-edge attention scoring/normalization
//! and sparse aggregation.
//!
//! Values are `DenseMatrix`; per-edge vectors are stored as `slots x 1`
//! matrices. The two stochastic/discontinuous steps (Poisson encoding and
//! threshold firing) record surrogate backward rules; everything else
//! backpropagates its exact Jacobian.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::gat;
use crate::graph::Graph;
use crate::matrix::{self, DenseMatrix};
use crate::rng::Rng;
use crate::spiking::{self, EdgeAttention};

pub type NodeId = usize;

const CE_FLOOR: f64 = 1e-12;

/// Backward rule through the firing threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surrogate {
    /// Pass gradient 1 within `|v - mu| <= width`, 0 outside.
    Window { width: f64 },
    /// Scaled sigmoid derivative `beta * s * (1 - s)` with
    /// `s = sigmoid(beta * (v - mu))`.
    SigmoidDerivative { beta: f64 },
}

impl Default for Surrogate {
    fn default() -> Self {
        Surrogate::Window { width: 0.5 }
    }
}

impl Surrogate {
    /// Surrogate derivative at membrane offset `x = v - mu`.
    pub fn grad(&self, x: f64) -> f64 {
        match *self {
            Surrogate::Window { width } => {
                if libm::fabs(x) <= width {
                    1.0
                } else {
                    0.0
                }
            }
            Surrogate::SigmoidDerivative { beta } => {
                let s = 1.0 / (1.0 + libm::exp(-beta * x));
                beta * s * (1.0 - s)
            }
        }
    }
}

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Sum(Vec<NodeId>),
    LeakyRelu(NodeId, f64),
    Elu(NodeId),
    SoftmaxRows(NodeId),
    EncodeSte(NodeId),
    FireSte {
        v: NodeId,
        mu: f64,
        surrogate: Surrogate,
    },
    AttentionScores {
        s: NodeId,
        graph: Rc<Graph>,
    },
    SymNormalize {
        alpha: NodeId,
        graph: Rc<Graph>,
    },
    SoftmaxNormalize {
        alpha: NodeId,
        graph: Rc<Graph>,
        slope: f64,
    },
    Aggregate {
        alpha: NodeId,
        h: NodeId,
        graph: Rc<Graph>,
    },
    ConcatCols(Vec<NodeId>),
    CrossEntropy {
        o: NodeId,
        labels: Rc<Vec<usize>>,
        mask: Rc<Vec<bool>>,
    },
}

struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by node id.
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<DenseMatrix> {
        self.grads.get_mut(id).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id].value
    }

    fn push(&mut self, value: DenseMatrix, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.nodes.len() - 1
    }

    fn requires(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Trainable input: gradients are tracked.
    pub fn leaf(&mut self, value: DenseMatrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable input: no gradient flows into it.
    pub fn constant(&mut self, value: DenseMatrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Copy of a node's value with the gradient path cut.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let v = self.nodes[id].value.clone();
        self.push(v, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.nodes[a].value.matmul(&self.nodes[b].value)?;
        let rg = self.requires(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.nodes[a].value.add(&self.nodes[b].value)?;
        let rg = self.requires(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let value = self.nodes[x].value.scale(factor);
        let rg = self.requires(&[x]);
        self.push(value, Op::Scale(x, factor), rg)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.nodes[x].value.add_scalar(c);
        let rg = self.requires(&[x]);
        self.push(value, Op::AddScalar(x), rg)
    }

    pub fn sum(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        let first = *ids
            .first()
            .ok_or_else(|| CoreError::InvalidArgument("sum over no nodes".into()))?;
        let mut value = self.nodes[first].value.clone();
        for &id in &ids[1..] {
            value.add_assign(&self.nodes[id].value)?;
        }
        let rg = self.requires(ids);
        Ok(self.push(value, Op::Sum(ids.to_vec()), rg))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let value = matrix::leaky_relu(&self.nodes[x].value, slope);
        let rg = self.requires(&[x]);
        self.push(value, Op::LeakyRelu(x, slope), rg)
    }

    pub fn elu(&mut self, x: NodeId) -> NodeId {
        let value = matrix::elu(&self.nodes[x].value);
        let rg = self.requires(&[x]);
        self.push(value, Op::Elu(x), rg)
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let value = matrix::softmax_rows(&self.nodes[x].value);
        let rg = self.requires(&[x]);
        self.push(value, Op::SoftmaxRows(x), rg)
    }

    /// Poisson-encode the parent value; backward is the straight-through
    /// estimator `clamp'(h)`: 1 on `(0, 1)`, 0 elsewhere.
    pub fn poisson_encode(&mut self, h: NodeId, rng: &mut Rng) -> NodeId {
        let value = spiking::poisson_encode(&self.nodes[h].value, rng);
        let rg = self.requires(&[h]);
        self.push(value, Op::EncodeSte(h), rg)
    }

    /// Threshold firing on the parent potential; backward uses `surrogate`.
    pub fn fire(&mut self, v: NodeId, mu: f64, surrogate: Surrogate) -> NodeId {
        let value = self.nodes[v].value.map(|p| if p - mu >= 0.0 { 1.0 } else { 0.0 });
        let rg = self.requires(&[v]);
        self.push(value, Op::FireSte { v, mu, surrogate }, rg)
    }

    pub fn attention_scores(&mut self, s: NodeId, graph: Rc<Graph>) -> Result<NodeId> {
        let alpha = spiking::attention_scores(&self.nodes[s].value, &graph)?;
        let value = edge_to_matrix(&alpha);
        let rg = self.requires(&[s]);
        Ok(self.push(value, Op::AttentionScores { s, graph }, rg))
    }

    pub fn symmetric_normalize(&mut self, alpha: NodeId, graph: Rc<Graph>) -> Result<NodeId> {
        let a = matrix_to_edge(&self.nodes[alpha].value);
        let norm = spiking::symmetric_normalize(&a, &graph)?;
        let value = edge_to_matrix(&norm);
        let rg = self.requires(&[alpha]);
        Ok(self.push(value, Op::SymNormalize { alpha, graph }, rg))
    }

    pub fn softmax_normalize(
        &mut self,
        alpha: NodeId,
        graph: Rc<Graph>,
        slope: f64,
    ) -> Result<NodeId> {
        let a = matrix_to_edge(&self.nodes[alpha].value);
        let norm = gat::softmax_normalize(&a, &graph, slope)?;
        let value = edge_to_matrix(&norm);
        let rg = self.requires(&[alpha]);
        Ok(self.push(value, Op::SoftmaxNormalize { alpha, graph, slope }, rg))
    }

    /// Sparse weighted aggregation `out_i = sum over slots (i -> j) of
    /// alpha_slot * h_j`. Gradient flows into both `alpha` and `h`.
    pub fn aggregate(&mut self, alpha: NodeId, h: NodeId, graph: Rc<Graph>) -> Result<NodeId> {
        let a = &self.nodes[alpha].value;
        let hm = &self.nodes[h].value;
        if a.rows() != graph.edge_slots() || a.cols() != 1 {
            return Err(CoreError::ShapeMismatch {
                op: "aggregate",
                left: a.shape(),
                right: (graph.edge_slots(), 1),
            });
        }
        if hm.rows() != graph.num_nodes() {
            return Err(CoreError::ShapeMismatch {
                op: "aggregate",
                left: hm.shape(),
                right: (graph.num_nodes(), hm.cols()),
            });
        }
        let d = hm.cols();
        let mut out = DenseMatrix::zeros(graph.num_nodes(), d);
        for slot in 0..graph.edge_slots() {
            let w = a.get(slot, 0);
            if w == 0.0 {
                continue;
            }
            let (i, j) = (graph.slot_src(slot), graph.slot_dst(slot));
            for k in 0..d {
                let cur = out.get(i, k);
                out.set(i, k, cur + w * hm.get(j, k));
            }
        }
        let rg = self.requires(&[alpha, h]);
        Ok(self.push(out, Op::Aggregate { alpha, h, graph }, rg))
    }

    pub fn concat_cols(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(CoreError::InvalidArgument("concat over no nodes".into()));
        }
        let rows = self.nodes[ids[0]].value.rows();
        let total: usize = ids.iter().map(|&i| self.nodes[i].value.cols()).sum();
        let mut out = DenseMatrix::zeros(rows, total);
        let mut offset = 0;
        for &id in ids {
            let m = &self.nodes[id].value;
            if m.rows() != rows {
                return Err(CoreError::ShapeMismatch {
                    op: "concat_cols",
                    left: (rows, 0),
                    right: m.shape(),
                });
            }
            for r in 0..rows {
                for c in 0..m.cols() {
                    out.set(r, offset + c, m.get(r, c));
                }
            }
            offset += m.cols();
        }
        let rg = self.requires(ids);
        Ok(self.push(out, Op::ConcatCols(ids.to_vec()), rg))
    }

    /// Summed negative log-likelihood over labeled nodes; `o` must already
    /// be row-softmaxed. Returns a `1 x 1` node.
    pub fn cross_entropy(
        &mut self,
        o: NodeId,
        labels: Rc<Vec<usize>>,
        mask: Rc<Vec<bool>>,
    ) -> Result<NodeId> {
        let om = &self.nodes[o].value;
        let loss = crate::model::cross_entropy_loss(om, &labels, &mask)?;
        let value = DenseMatrix::from_vec(1, 1, vec![loss])?;
        let rg = self.requires(&[o]);
        Ok(self.push(value, Op::CrossEntropy { o, labels, mask }, rg))
    }

    /// Reverse sweep from a scalar node. Returns the gradient of every
    /// gradient-tracked node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.nodes[loss].value.shape() != (1, 1) {
            return Err(CoreError::InvalidArgument(
                "backward expects a scalar (1x1) loss node".into(),
            ));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[loss] = Some(DenseMatrix::from_vec(1, 1, vec![1.0])?);
        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            if !self.nodes[id].requires_grad {
                grads[id] = Some(g);
                continue;
            }
            self.backprop_node(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(
        &self,
        grads: &mut [Option<DenseMatrix>],
        id: NodeId,
        delta: DenseMatrix,
    ) -> Result<()> {
        if !self.nodes[id].requires_grad {
            return Ok(());
        }
        match &mut grads[id] {
            Some(g) => g.add_assign(&delta),
            slot @ None => {
                *slot = Some(delta);
                Ok(())
            }
        }
    }

    fn backprop_node(
        &self,
        id: NodeId,
        g: &DenseMatrix,
        grads: &mut [Option<DenseMatrix>],
    ) -> Result<()> {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                if self.nodes[a].requires_grad {
                    let da = g.matmul_transpose_right(&self.nodes[b].value)?;
                    self.accumulate(grads, a, da)?;
                }
                if self.nodes[b].requires_grad {
                    let db = self.nodes[a].value.matmul_transpose_left(g)?;
                    self.accumulate(grads, b, db)?;
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(grads, a, g.clone())?;
                self.accumulate(grads, b, g.clone())?;
            }
            Op::Scale(x, factor) => {
                let d = g.scale(*factor);
                self.accumulate(grads, *x, d)?;
            }
            Op::AddScalar(x) => {
                self.accumulate(grads, *x, g.clone())?;
            }
            Op::Sum(ids) => {
                for &p in ids.clone().iter() {
                    self.accumulate(grads, p, g.clone())?;
                }
            }
            Op::LeakyRelu(x, slope) => {
                let xv = &self.nodes[*x].value;
                let mut d = g.clone();
                for (dv, &v) in d.data_mut().iter_mut().zip(xv.data()) {
                    if v < 0.0 {
                        *dv *= slope;
                    }
                }
                self.accumulate(grads, *x, d)?;
            }
            Op::Elu(x) => {
                let xv = &self.nodes[*x].value;
                let mut d = g.clone();
                for (dv, &v) in d.data_mut().iter_mut().zip(xv.data()) {
                    if v < 0.0 {
                        *dv *= libm::exp(v);
                    }
                }
                self.accumulate(grads, *x, d)?;
            }
            Op::SoftmaxRows(x) => {
                let y = &self.nodes[id].value;
                let mut d = DenseMatrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let mut dot = 0.0;
                    for c in 0..y.cols() {
                        dot += g.get(r, c) * y.get(r, c);
                    }
                    for c in 0..y.cols() {
                        d.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                self.accumulate(grads, *x, d)?;
            }
            Op::EncodeSte(h) => {
                let hv = &self.nodes[*h].value;
                let mut d = g.clone();
                for (dv, &v) in d.data_mut().iter_mut().zip(hv.data()) {
                    if !(0.0 < v && v < 1.0) {
                        *dv = 0.0;
                    }
                }
                self.accumulate(grads, *h, d)?;
            }
            Op::FireSte { v, mu, surrogate } => {
                let vv = &self.nodes[*v].value;
                let mut d = g.clone();
                for (dv, &p) in d.data_mut().iter_mut().zip(vv.data()) {
                    *dv *= surrogate.grad(p - mu);
                }
                self.accumulate(grads, *v, d)?;
            }
            Op::AttentionScores { s, graph } => {
                let mut d = DenseMatrix::zeros(graph.num_nodes(), 2);
                for slot in 0..graph.edge_slots() {
                    let gv = g.get(slot, 0);
                    let (i, j) = (graph.slot_src(slot), graph.slot_dst(slot));
                    d.set(i, 0, d.get(i, 0) + gv);
                    d.set(j, 1, d.get(j, 1) + gv);
                }
                self.accumulate(grads, *s, d)?;
            }
            Op::SymNormalize { alpha, graph } => {
                let av = &self.nodes[*alpha].value;
                let a = matrix_to_edge(av);
                let (row, col) = spiking::edge_sums(&a, graph);
                let slots = graph.edge_slots();
                let mut row_acc = vec![0.0; graph.num_nodes()];
                let mut col_acc = vec![0.0; graph.num_nodes()];
                let mut d = DenseMatrix::zeros(slots, 1);
                for slot in 0..slots {
                    let (i, j) = (graph.slot_src(slot), graph.slot_dst(slot));
                    let (r, c) = (row[i], col[j]);
                    if r <= 0.0 || c <= 0.0 {
                        continue;
                    }
                    let gv = g.get(slot, 0);
                    let inv = 1.0 / (libm::sqrt(r) * libm::sqrt(c));
                    d.set(slot, 0, gv * inv);
                    let ae = a.get(slot);
                    if ae != 0.0 && gv != 0.0 {
                        row_acc[i] += gv * ae * (-0.5) * inv / r;
                        col_acc[j] += gv * ae * (-0.5) * inv / c;
                    }
                }
                for slot in 0..slots {
                    let (i, j) = (graph.slot_src(slot), graph.slot_dst(slot));
                    let extra = row_acc[i] + col_acc[j];
                    if extra != 0.0 {
                        d.set(slot, 0, d.get(slot, 0) + extra);
                    }
                }
                self.accumulate(grads, *alpha, d)?;
            }
            Op::SoftmaxNormalize { alpha, graph, slope } => {
                let av = &self.nodes[*alpha].value;
                let y = &self.nodes[id].value;
                let mut d = DenseMatrix::zeros(y.rows(), 1);
                for i in 0..graph.num_nodes() {
                    let range = graph.slot_range(i);
                    let mut dot = 0.0;
                    for slot in range.clone() {
                        dot += g.get(slot, 0) * y.get(slot, 0);
                    }
                    for slot in range {
                        let dl = y.get(slot, 0) * (g.get(slot, 0) - dot);
                        let deriv = if av.get(slot, 0) >= 0.0 { 1.0 } else { *slope };
                        d.set(slot, 0, dl * deriv);
                    }
                }
                self.accumulate(grads, *alpha, d)?;
            }
            Op::Aggregate { alpha, h, graph } => {
                let av = &self.nodes[*alpha].value;
                let hv = &self.nodes[*h].value;
                let dcols = hv.cols();
                let want_alpha = self.nodes[*alpha].requires_grad;
                let want_h = self.nodes[*h].requires_grad;
                let mut da = DenseMatrix::zeros(av.rows(), 1);
                let mut dh = DenseMatrix::zeros(hv.rows(), hv.cols());
                for slot in 0..graph.edge_slots() {
                    let (i, j) = (graph.slot_src(slot), graph.slot_dst(slot));
                    if want_alpha {
                        let mut dot = 0.0;
                        for k in 0..dcols {
                            dot += g.get(i, k) * hv.get(j, k);
                        }
                        da.set(slot, 0, dot);
                    }
                    if want_h {
                        let w = av.get(slot, 0);
                        if w != 0.0 {
                            for k in 0..dcols {
                                let cur = dh.get(j, k);
                                dh.set(j, k, cur + w * g.get(i, k));
                            }
                        }
                    }
                }
                if want_alpha {
                    self.accumulate(grads, *alpha, da)?;
                }
                if want_h {
                    self.accumulate(grads, *h, dh)?;
                }
            }
            Op::ConcatCols(ids) => {
                let mut offset = 0;
                for &p in ids.clone().iter() {
                    let cols = self.nodes[p].value.cols();
                    let rows = self.nodes[p].value.rows();
                    let mut d = DenseMatrix::zeros(rows, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            d.set(r, c, g.get(r, offset + c));
                        }
                    }
                    offset += cols;
                    self.accumulate(grads, p, d)?;
                }
            }
            Op::CrossEntropy { o, labels, mask } => {
                let ov = &self.nodes[*o].value;
                let g0 = g.get(0, 0);
                let mut d = DenseMatrix::zeros(ov.rows(), ov.cols());
                for i in 0..ov.rows() {
                    if !mask[i] {
                        continue;
                    }
                    let y = labels[i];
                    let p = ov.get(i, y);
                    if p >= CE_FLOOR {
                        d.set(i, y, -g0 / p);
                    }
                }
                self.accumulate(grads, *o, d)?;
            }
        }
        Ok(())
    }
}

pub fn edge_to_matrix(alpha: &EdgeAttention) -> DenseMatrix {
    DenseMatrix::from_vec(alpha.len(), 1, alpha.as_slice().to_vec())
        .expect("edge vector shape")
}

pub fn matrix_to_edge(m: &DenseMatrix) -> EdgeAttention {
    EdgeAttention::new(m.data().to_vec())
}
