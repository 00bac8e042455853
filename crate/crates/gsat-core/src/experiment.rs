//! Sparsity measurements and the threshold/step-count sweep.

use alloc::rc::Rc;
use alloc::vec::Vec;

use crate::error::Result;
use crate::graph::Graph;
use crate::model::{self, ModelConfig};
use crate::spiking::EdgeAttention;

/// Fraction of non-self-loop directed edge slots whose coefficient is
/// exactly zero. The spiking path produces true zeros by construction, so
/// the comparison is exact, not epsilon-based.
pub fn edge_removal_ratio(alpha: &EdgeAttention, g: &Graph) -> f64 {
    let mut total = 0usize;
    let mut removed = 0usize;
    for slot in 0..g.edge_slots() {
        if g.slot_src(slot) == g.slot_dst(slot) {
            continue;
        }
        total += 1;
        if alpha.get(slot) == 0.0 {
            removed += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        removed as f64 / total as f64
    }
}

/// One grid point of the sparsity sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub mu: f64,
    pub steps: usize,
    pub removal_ratio: f64,
    pub test_accuracy: f64,
}

/// Train one model per `(mu, T)` grid point with the shared seed from
/// `base`, then measure the edge removal ratio and test accuracy on the
/// deterministic evaluation forward pass of the best parameters.
pub fn sparsity_sweep(
    g: &Graph,
    base: &ModelConfig,
    mu_values: &[f64],
    step_values: &[usize],
) -> Result<Vec<SweepPoint>> {
    let looped = Rc::new(if g.self_loops_added() {
        g.clone()
    } else {
        g.add_self_loops()
    });
    let mut out = Vec::with_capacity(mu_values.len() * step_values.len());
    for &mu in mu_values {
        for &steps in step_values {
            let mut config = base.clone();
            config.mu = mu;
            config.steps = steps;
            let trained = model::train(&looped, &config)?;
            let (probs, attentions) =
                model::eval_probabilities(&trained.params, &config, &looped, None)?;
            let test_accuracy =
                model::accuracy(&probs, looped.labels(), looped.test_mask())?;
            let removal_ratio = model::mean_removal_ratio(&attentions, &looped);
            out.push(SweepPoint {
                mu,
                steps,
                removal_ratio,
                test_accuracy,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;
    use crate::spiking::EdgeAttention;
    use alloc::vec;

    fn path_graph() -> Graph {
        Graph::new(
            4,
            &[(0, 1), (1, 2), (2, 3)],
            DenseMatrix::zeros(4, 1),
            vec![0, 0, 0, 0],
            1,
        )
        .unwrap()
        .add_self_loops()
    }

    #[test]
    fn removal_ratio_extremes() {
        let g = path_graph();
        let slots = g.edge_slots();
        let all_pos = EdgeAttention::new(vec![0.3; slots]);
        assert_eq!(edge_removal_ratio(&all_pos, &g), 0.0);
        let all_zero = EdgeAttention::zeros(slots);
        assert_eq!(edge_removal_ratio(&all_zero, &g), 1.0);
    }

    #[test]
    fn removal_ratio_counts_non_self_loops_only() {
        let g = path_graph();
        // 6 directed non-self-loop slots; zero 3 of them
        let mut alpha = EdgeAttention::new(vec![1.0; g.edge_slots()]);
        let mut zeroed = 0;
        for slot in 0..g.edge_slots() {
            if g.slot_src(slot) != g.slot_dst(slot) && zeroed < 3 {
                alpha.as_mut_slice()[slot] = 0.0;
                zeroed += 1;
            }
        }
        assert!((edge_removal_ratio(&alpha, &g) - 0.5).abs() < 1e-15);
    }
}
