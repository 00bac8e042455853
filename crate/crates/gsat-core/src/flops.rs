//! Floating-point operation accounting for one instrumented forward pass.
//!
//! The same counting rules apply to both attention mechanisms so the
//! comparison is internally consistent:
//! - dense matmul `(a x b) * (b x c)`: `2abc` multiply-accumulate FLOPs
//! - baseline edge score: `2 * (2 d')` per edge, plus softmax exp and div
//!   counted as 2 each per edge slot
//! - spiking charge `Z Theta`: 2 additions per spike (one per output
//!   column), accumulate-only, summed over steps
//! - fire + reset: one compare and one subtract per potential entry per
//!   step (`2n` entries)
//! - symmetric normalization: 1 div per edge plus 2 sqrt per node
//! - aggregation: `2 * edges * d'`

use alloc::vec::Vec;

/// One counted operation of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    /// Dense projection `rows x inner` by `inner x cols`.
    Projection { rows: usize, inner: usize, cols: usize },
    /// One spiking charge step; `nnz` spikes entered the neuron.
    SpikeCharge { nnz: usize },
    /// One fire + reset step over `neurons` potential entries.
    FireReset { neurons: usize },
    /// Baseline raw scores over all edge slots at hidden width `hidden`.
    BaselineScore { edges: usize, hidden: usize },
    /// Softmax normalization over all edge slots.
    SoftmaxNorm { edges: usize },
    /// Symmetric normalization over all edge slots and `nodes` nodes.
    SymNorm { edges: usize, nodes: usize },
    /// Sparse aggregation over all edge slots at hidden width `hidden`.
    Aggregate { edges: usize, hidden: usize },
}

/// Record of everything countable in one forward pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ForwardTrace {
    pub events: Vec<TraceEvent>,
}

impl ForwardTrace {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Operation counts per pipeline component, with the multiply-accumulate /
/// accumulate-only split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopsReport {
    pub projection: u64,
    pub attention: u64,
    pub normalization: u64,
    pub aggregation: u64,
    /// Operations involving a multiplication.
    pub multiply_accumulate: u64,
    /// Spike-driven additions and compare/subtract work.
    pub accumulate_only: u64,
}

impl FlopsReport {
    pub fn total(&self) -> u64 {
        self.projection + self.attention + self.normalization + self.aggregation
    }

    /// Cost of computing and normalizing attention coefficients; the
    /// quantity the two mechanisms are compared on.
    pub fn attention_path(&self) -> u64 {
        self.attention + self.normalization
    }
}

/// Fold a forward trace into component totals.
pub fn count_flops(trace: &ForwardTrace) -> FlopsReport {
    let mut report = FlopsReport::default();
    for event in &trace.events {
        match *event {
            TraceEvent::Projection { rows, inner, cols } => {
                let f = 2 * (rows * inner * cols) as u64;
                report.projection += f;
                report.multiply_accumulate += f;
            }
            TraceEvent::SpikeCharge { nnz } => {
                let f = 2 * nnz as u64;
                report.attention += f;
                report.accumulate_only += f;
            }
            TraceEvent::FireReset { neurons } => {
                let f = 2 * neurons as u64;
                report.attention += f;
                report.accumulate_only += f;
            }
            TraceEvent::BaselineScore { edges, hidden } => {
                let f = (edges * 2 * (2 * hidden)) as u64;
                report.attention += f;
                report.multiply_accumulate += f;
            }
            TraceEvent::SoftmaxNorm { edges } => {
                let f = 4 * edges as u64;
                report.normalization += f;
                report.multiply_accumulate += f;
            }
            TraceEvent::SymNorm { edges, nodes } => {
                let f = (edges + 2 * nodes) as u64;
                report.normalization += f;
                report.multiply_accumulate += f;
            }
            TraceEvent::Aggregate { edges, hidden } => {
                let f = 2 * (edges * hidden) as u64;
                report.aggregation += f;
                report.multiply_accumulate += f;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn dense_matmul_rule() {
        let trace = ForwardTrace {
            events: vec![TraceEvent::Projection {
                rows: 4,
                inner: 3,
                cols: 2,
            }],
        };
        let report = count_flops(&trace);
        assert_eq!(report.projection, 48);
        assert_eq!(report.total(), 48);
    }

    #[test]
    fn spike_charge_rule() {
        let trace = ForwardTrace {
            events: vec![TraceEvent::SpikeCharge { nnz: 5 }],
        };
        let report = count_flops(&trace);
        assert_eq!(report.attention, 10);
        assert_eq!(report.accumulate_only, 10);
        assert_eq!(report.multiply_accumulate, 0);
    }

    #[test]
    fn totals_are_component_sums() {
        let trace = ForwardTrace {
            events: vec![
                TraceEvent::Projection { rows: 2, inner: 2, cols: 2 },
                TraceEvent::SpikeCharge { nnz: 3 },
                TraceEvent::FireReset { neurons: 4 },
                TraceEvent::SymNorm { edges: 6, nodes: 2 },
                TraceEvent::Aggregate { edges: 6, hidden: 2 },
            ],
        };
        let report = count_flops(&trace);
        assert_eq!(
            report.total(),
            report.projection + report.attention + report.normalization + report.aggregation
        );
        assert_eq!(report.attention_path(), report.attention + report.normalization);
        assert_eq!(report.total(), 16 + 6 + 8 + 10 + 24);
    }
}
