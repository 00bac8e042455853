//! Structural perturbations: uniform random edge addition and a
//! degree-targeted variant. Attacks only ever add edges; features, labels
//! and masks are untouched.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::graph::Graph;
use crate::rng::Rng;

/// Add `round(rate * |undirected edges|)` uniformly sampled absent
/// non-self-loop pairs.
pub fn random_attack(g: &Graph, rate: f64, rng: &mut Rng) -> Result<Graph> {
    if rate < 0.0 || !rate.is_finite() {
        return Err(CoreError::InvalidArgument(format!(
            "perturbation rate must be a nonnegative number, got {rate}"
        )));
    }
    let n = g.num_nodes();
    let existing = g.undirected_edge_count();
    let quota = libm::round(rate * existing as f64) as usize;
    if quota == 0 {
        return Ok(g.clone());
    }
    let total_pairs = n * (n - 1) / 2;
    let absent = total_pairs - existing;
    if quota > absent {
        return Err(CoreError::InvalidArgument(format!(
            "cannot add {quota} edges: only {absent} absent pairs exist"
        )));
    }
    let extra = if n <= 4000 {
        // enumerate absent pairs and draw without replacement
        let mut pool: Vec<(usize, usize)> = Vec::with_capacity(absent);
        for a in 0..n {
            for b in (a + 1)..n {
                if !g.has_edge(a, b) {
                    pool.push((a, b));
                }
            }
        }
        // partial Fisher-Yates: the first `quota` slots become the sample
        for i in 0..quota {
            let j = i + rng.index(pool.len() - i);
            pool.swap(i, j);
        }
        pool.truncate(quota);
        pool
    } else {
        let mut chosen: BTreeSet<(usize, usize)> = BTreeSet::new();
        while chosen.len() < quota {
            let a = rng.index(n);
            let b = rng.index(n);
            if a == b {
                continue;
            }
            let pair = (a.min(b), a.max(b));
            if g.has_edge(pair.0, pair.1) {
                continue;
            }
            chosen.insert(pair);
        }
        chosen.into_iter().collect()
    };
    g.with_extra_edges(&extra)
}

/// For each target node, add `budget` edges to the highest-degree nodes of
/// a different class (ties broken by node index).
pub fn degree_targeted_attack(
    g: &Graph,
    budget_per_target: usize,
    targets: &[usize],
    _rng: &mut Rng,
) -> Result<Graph> {
    if budget_per_target == 0 {
        return Ok(g.clone());
    }
    let mut extra = Vec::new();
    for &t in targets {
        if t >= g.num_nodes() {
            return Err(CoreError::InvalidArgument(format!(
                "target {t} outside [0, {})",
                g.num_nodes()
            )));
        }
        let mut candidates: Vec<usize> = (0..g.num_nodes())
            .filter(|&j| j != t && g.labels()[j] != g.labels()[t] && !g.has_edge(t, j))
            .collect();
        if candidates.len() < budget_per_target {
            return Err(CoreError::InvalidArgument(format!(
                "target {t}: budget {budget_per_target} exceeds {} eligible endpoints",
                candidates.len()
            )));
        }
        candidates.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
        for &j in candidates.iter().take(budget_per_target) {
            extra.push((t.min(j), t.max(j)));
        }
    }
    g.with_extra_edges(&extra)
}
