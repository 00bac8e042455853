//! Classical GAT edge attention: the comparison baseline. Raw scores use
//! the split form `h_i theta_1^T + h_j theta_2^T`, which is algebraically
//! identical to the concatenated form but never materializes dense scores.

use alloc::format;
use alloc::vec;

use crate::error::{CoreError, Result};
use crate::graph::Graph;
use crate::matrix::{self, DenseMatrix};
use crate::rng::Rng;
use crate::spiking::{attention_scores, EdgeAttention};

/// Attention weight vector `theta` of length `2 d'`, stored as the
/// equivalent `d' x 2` matrix whose columns are the two halves.
#[derive(Debug, Clone, PartialEq)]
pub struct GatAttentionParams {
    pub theta: DenseMatrix,
    pub leaky_slope: f64,
}

impl GatAttentionParams {
    pub fn init(hidden_dim: usize, leaky_slope: f64, rng: &mut Rng) -> Self {
        // Glorot over the logical 1 x 2d' vector
        let limit = libm::sqrt(6.0 / (1 + 2 * hidden_dim) as f64);
        let mut theta = DenseMatrix::zeros(hidden_dim, 2);
        for v in theta.data_mut().iter_mut() {
            *v = rng.uniform_range(-limit, limit);
        }
        GatAttentionParams { theta, leaky_slope }
    }

    /// Build from the flat `1 x 2d'` weight vector `[theta_1, theta_2]`.
    pub fn from_flat(flat: &[f64], leaky_slope: f64) -> Result<Self> {
        if flat.len() % 2 != 0 || flat.is_empty() {
            return Err(CoreError::InvalidArgument(format!(
                "theta length {} is not an even positive number",
                flat.len()
            )));
        }
        let d = flat.len() / 2;
        let mut theta = DenseMatrix::zeros(d, 2);
        for k in 0..d {
            theta.set(k, 0, flat[k]);
            theta.set(k, 1, flat[d + k]);
        }
        Ok(GatAttentionParams { theta, leaky_slope })
    }
}

/// Raw per-edge scores via `S = H Theta`, then slot `(i -> j)` gets
/// `S[i,0] + S[j,1]`.
pub fn gat_attention(
    h: &DenseMatrix,
    params: &GatAttentionParams,
    g: &Graph,
) -> Result<EdgeAttention> {
    if h.rows() != g.num_nodes() {
        return Err(CoreError::ShapeMismatch {
            op: "gat_attention",
            left: h.shape(),
            right: (g.num_nodes(), h.cols()),
        });
    }
    let s = h.matmul(&params.theta)?;
    attention_scores(&s, g)
}

/// Per-source-node softmax of `exp(leaky_relu(score))` over that node's
/// edge slots, max-subtracted for stability. Every coefficient is strictly
/// positive; rows sum to one.
pub fn softmax_normalize(
    alpha: &EdgeAttention,
    g: &Graph,
    slope: f64,
) -> Result<EdgeAttention> {
    if alpha.len() != g.edge_slots() {
        return Err(CoreError::InvalidArgument(format!(
            "attention length {} does not match {} edge slots",
            alpha.len(),
            g.edge_slots()
        )));
    }
    let mut out = vec![0.0; alpha.len()];
    for i in 0..g.num_nodes() {
        let range = g.slot_range(i);
        if range.is_empty() {
            continue;
        }
        let mut max = f64::NEG_INFINITY;
        for slot in range.clone() {
            max = max.max(matrix::leaky_relu_scalar(alpha.get(slot), slope));
        }
        let mut sum = 0.0;
        for slot in range.clone() {
            let e = libm::exp(matrix::leaky_relu_scalar(alpha.get(slot), slope) - max);
            out[slot] = e;
            sum += e;
        }
        for slot in range {
            out[slot] /= sum;
        }
    }
    Ok(EdgeAttention::new(out))
}
