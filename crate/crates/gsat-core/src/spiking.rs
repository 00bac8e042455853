//! Spiking edge-attention: Poisson encoding, integrate-and-fire dynamics
//! with soft reset, spike averaging, the split-parameter edge score and
//! symmetric normalization. Attention is only ever computed per edge slot;
//! no dense node-by-node score matrix exists anywhere in this module.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::matrix::DenseMatrix;
use crate::graph::Graph;
use crate::rng::Rng;

/// Per-edge attention coefficients, aligned with the graph's directed edge
/// slots.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeAttention {
    coefficients: Vec<f64>,
}

impl EdgeAttention {
    pub fn new(coefficients: Vec<f64>) -> Self {
        EdgeAttention { coefficients }
    }

    pub fn zeros(slots: usize) -> Self {
        EdgeAttention {
            coefficients: vec![0.0; slots],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    #[inline]
    pub fn get(&self, slot: usize) -> f64 {
        self.coefficients[slot]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }
}

/// How the membrane potential is reset after a firing step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResetMode {
    /// Subtract the threshold only where the neuron fired (soft reset).
    #[default]
    FiredOnly,
    /// Subtract the threshold everywhere, exactly as the update rule is
    /// written; drives silent neurons negative.
    Unconditional,
}

/// Trainable state of one spiking attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikingAttentionParams {
    /// One `d' x 2` matrix per time step, or a single shared matrix.
    pub theta_steps: Vec<DenseMatrix>,
    pub mu: f64,
    pub steps: usize,
    pub share_theta: bool,
}

impl SpikingAttentionParams {
    pub fn init(
        hidden_dim: usize,
        steps: usize,
        mu: f64,
        share_theta: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if steps == 0 {
            return Err(CoreError::InvalidArgument("steps must be >= 1".into()));
        }
        if mu < 0.0 {
            return Err(CoreError::InvalidArgument("mu must be >= 0".into()));
        }
        let count = if share_theta { 1 } else { steps };
        let theta_steps = (0..count)
            .map(|_| DenseMatrix::glorot(hidden_dim, 2, rng))
            .collect();
        Ok(SpikingAttentionParams {
            theta_steps,
            mu,
            steps,
            share_theta,
        })
    }

    /// Parameter matrix used at step `t` (0-based).
    pub fn theta_at(&self, t: usize) -> &DenseMatrix {
        if self.share_theta {
            &self.theta_steps[0]
        } else {
            &self.theta_steps[t]
        }
    }
}

/// Membrane potential of the `n x 2` attention neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct IFNeuronState {
    pub potential: DenseMatrix,
    pub mu: f64,
}

impl IFNeuronState {
    /// Fresh state with zero potential.
    pub fn new(nodes: usize, mu: f64) -> Self {
        IFNeuronState {
            potential: DenseMatrix::zeros(nodes, 2),
            mu,
        }
    }
}

/// Bernoulli rate encoding: entry spikes iff `h_ij >= p` for `p` drawn
/// uniformly from `(0, 1]`, so the spike probability is exactly
/// `clamp(h_ij, 0, 1)` and non-positive inputs never spike.
pub fn poisson_encode(h: &DenseMatrix, rng: &mut Rng) -> DenseMatrix {
    let mut z = DenseMatrix::zeros(h.rows(), h.cols());
    for (o, &v) in z.data_mut().iter_mut().zip(h.data()) {
        let p = rng.uniform_open_closed();
        *o = if v >= p { 1.0 } else { 0.0 };
    }
    z
}

/// Charge: `V += Z * theta`.
pub fn if_charge(
    state: &mut IFNeuronState,
    z: &DenseMatrix,
    theta: &DenseMatrix,
) -> Result<()> {
    if z.cols() != theta.rows() || theta.cols() != 2 || z.rows() != state.potential.rows() {
        return Err(CoreError::ShapeMismatch {
            op: "if_charge",
            left: z.shape(),
            right: theta.shape(),
        });
    }
    let delta = z.matmul(theta)?;
    state.potential.add_assign(&delta)
}

/// Fire: bit 1 where `V - mu >= 0` (inclusive threshold).
pub fn if_fire(state: &IFNeuronState) -> DenseMatrix {
    let mu = state.mu;
    state
        .potential
        .map(|v| if v - mu >= 0.0 { 1.0 } else { 0.0 })
}

/// Soft reset: subtract `mu` where the neuron fired (or everywhere under
/// [`ResetMode::Unconditional`]).
pub fn if_reset(state: &mut IFNeuronState, fired: &DenseMatrix, mode: ResetMode) {
    let mu = state.mu;
    match mode {
        ResetMode::FiredOnly => {
            for (v, &f) in state.potential.data_mut().iter_mut().zip(fired.data()) {
                if f != 0.0 {
                    *v -= mu;
                }
            }
        }
        ResetMode::Unconditional => {
            for v in state.potential.data_mut().iter_mut() {
                *v -= mu;
            }
        }
    }
}

/// Mean of the firing steps: `S = (1/T) sum_t S^(t)`.
pub fn spike_average(steps: &[DenseMatrix]) -> Result<DenseMatrix> {
    let first = steps
        .first()
        .ok_or_else(|| CoreError::InvalidArgument("spike_average over empty list".into()))?;
    let mut sum = DenseMatrix::zeros(first.rows(), first.cols());
    for s in steps {
        sum.add_assign(s)?;
    }
    Ok(sum.scale(1.0 / steps.len() as f64))
}

/// Edge score from the two-column summary `s`: slot `(i -> j)` gets
/// `s[i,0] + s[j,1]`. Only edge slots are materialized.
pub fn attention_scores(s: &DenseMatrix, g: &Graph) -> Result<EdgeAttention> {
    if s.rows() != g.num_nodes() || s.cols() != 2 {
        return Err(CoreError::ShapeMismatch {
            op: "attention_scores",
            left: s.shape(),
            right: (g.num_nodes(), 2),
        });
    }
    let mut coeff = vec![0.0; g.edge_slots()];
    for slot in 0..g.edge_slots() {
        let (i, j) = (g.slot_src(slot), g.slot_dst(slot));
        coeff[slot] = s.get(i, 0) + s.get(j, 1);
    }
    Ok(EdgeAttention::new(coeff))
}

/// Row and column sums of per-edge coefficients: `row[i] = sum over slots
/// (i -> j)`, `col[j] = sum over slots (i -> j)`.
pub fn edge_sums(alpha: &EdgeAttention, g: &Graph) -> (Vec<f64>, Vec<f64>) {
    let mut row = vec![0.0; g.num_nodes()];
    let mut col = vec![0.0; g.num_nodes()];
    for slot in 0..g.edge_slots() {
        let v = alpha.get(slot);
        row[g.slot_src(slot)] += v;
        col[g.slot_dst(slot)] += v;
    }
    (row, col)
}

/// Symmetric normalization `alpha'_ij = alpha_ij / (sqrt(row_i) * sqrt(col_j))`.
/// Exact zeros stay exact zeros; a degenerate zero row or column sum yields
/// zero coefficients instead of a division error.
pub fn symmetric_normalize(alpha: &EdgeAttention, g: &Graph) -> Result<EdgeAttention> {
    if alpha.len() != g.edge_slots() {
        return Err(CoreError::InvalidArgument(format!(
            "attention length {} does not match {} edge slots",
            alpha.len(),
            g.edge_slots()
        )));
    }
    if let Some(v) = alpha.as_slice().iter().find(|v| **v < 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "symmetric_normalize requires nonnegative coefficients, found {v}"
        )));
    }
    let (row, col) = edge_sums(alpha, g);
    let mut out = vec![0.0; alpha.len()];
    for slot in 0..alpha.len() {
        let v = alpha.get(slot);
        if v == 0.0 {
            continue;
        }
        let r = row[g.slot_src(slot)];
        let c = col[g.slot_dst(slot)];
        if r > 0.0 && c > 0.0 {
            out[slot] = v / (libm::sqrt(r) * libm::sqrt(c));
        }
    }
    Ok(EdgeAttention::new(out))
}

/// Full spiking attention computation: encode, charge, fire, reset for
/// `T` steps, then average, score and normalize.
pub fn spiking_attention(
    h: &DenseMatrix,
    params: &SpikingAttentionParams,
    g: &Graph,
    rng: &mut Rng,
    reset_mode: ResetMode,
) -> Result<EdgeAttention> {
    if h.rows() != g.num_nodes() {
        return Err(CoreError::ShapeMismatch {
            op: "spiking_attention",
            left: h.shape(),
            right: (g.num_nodes(), h.cols()),
        });
    }
    let mut state = IFNeuronState::new(g.num_nodes(), params.mu);
    let mut fired = Vec::with_capacity(params.steps);
    for t in 0..params.steps {
        let z = poisson_encode(h, rng);
        if_charge(&mut state, &z, params.theta_at(t))?;
        let s = if_fire(&state);
        if_reset(&mut state, &s, reset_mode);
        fired.push(s);
    }
    let s = spike_average(&fired)?;
    let raw = attention_scores(&s, g)?;
    symmetric_normalize(&raw, g)
}
