//! Randomized properties of the spiking attention pipeline and its
//! numeric building blocks.

use gsat_core::gat::{softmax_normalize, GatAttentionParams};
use gsat_core::graph::{sbm_generate, Graph};
use gsat_core::matrix::softmax_rows;
use gsat_core::spiking::{
    self, spiking_attention, EdgeAttention, IFNeuronState, ResetMode, SpikingAttentionParams,
};
use gsat_core::{DenseMatrix, Rng};
use proptest::prelude::*;

fn random_graph(seed: u64, n: usize) -> Graph {
    let mut rng = Rng::new(seed);
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.uniform() < 0.4 {
                pairs.push((a, b));
            }
        }
    }
    // a spanning path keeps every node connected
    for a in 1..n {
        pairs.push((a - 1, a));
    }
    Graph::new(n, &pairs, DenseMatrix::zeros(n, 1), vec![0; n], 1)
        .unwrap()
        .add_self_loops()
}

fn random_features(seed: u64, n: usize, d: usize) -> DenseMatrix {
    let mut rng = Rng::new(seed);
    let data = (0..n * d).map(|_| rng.uniform_range(-0.5, 1.5)).collect();
    DenseMatrix::from_vec(n, d, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Spike averages can only take values k/T, and the per-edge scores
    /// (a sum of two averages) stay inside [0, 2].
    #[test]
    fn spike_averages_are_quantized_and_scores_bounded(
        seed in 0u64..1_000_000,
        n in 4usize..12,
        d in 1usize..5,
        steps in 1usize..16,
        mu in 0.01f64..0.8,
    ) {
        let g = random_graph(seed, n);
        let h = random_features(seed ^ 0x5eed, n, d);
        let rng = Rng::new(seed ^ 0xa1fa);
        let params =
            SpikingAttentionParams::init(d, steps, mu, false, &mut rng.fork(1)).unwrap();

        // replicate the pipeline up to the spike average to observe it
        let mut state = IFNeuronState::new(n, mu);
        let mut fired = Vec::with_capacity(steps);
        let mut enc_rng = rng.fork(2);
        for t in 0..steps {
            let z = spiking::poisson_encode(&h, &mut enc_rng);
            spiking::if_charge(&mut state, &z, params.theta_at(t)).unwrap();
            let s = spiking::if_fire(&state);
            spiking::if_reset(&mut state, &s, ResetMode::FiredOnly);
            fired.push(s);
        }
        let avg = spiking::spike_average(&fired).unwrap();
        for &v in avg.data() {
            let scaled = v * steps as f64;
            prop_assert!(
                (scaled - scaled.round()).abs() < 1e-9,
                "average {v} is not a multiple of 1/{steps}"
            );
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let raw = spiking::attention_scores(&avg, &g).unwrap();
        for slot in 0..raw.len() {
            prop_assert!((0.0..=2.0).contains(&raw.get(slot)));
        }
    }

    /// With per-step charge at most mu, the IF neuron's total fire count
    /// equals floor(total charge / mu), and raising mu never fires more.
    #[test]
    fn if_fire_count_matches_floor_oracle(
        seed in 0u64..1_000_000,
        steps in 1usize..50,
    ) {
        let mut rng = Rng::new(seed);
        let mu0 = rng.uniform_range(0.05, 1.0);
        let charges: Vec<f64> = (0..steps).map(|_| rng.uniform() * mu0).collect();
        let mut previous = usize::MAX;
        for k in 0..10 {
            let mu = mu0 * (1.0 + 0.3 * k as f64);
            let mut potential = 0.0;
            let mut fires = 0usize;
            for &c in &charges {
                potential += c;
                if potential - mu >= 0.0 {
                    fires += 1;
                    potential -= mu;
                }
            }
            let total: f64 = charges.iter().sum();
            let oracle = (total / mu).floor() as usize;
            prop_assert_eq!(fires, oracle, "mu = {}", mu);
            prop_assert!(fires <= previous, "fire count rose as mu grew");
            previous = fires;
        }
    }

    /// The simulator agrees with the scalar recurrence on whole matrices.
    #[test]
    fn if_state_matches_scalar_recurrence(
        seed in 0u64..1_000_000,
        steps in 1usize..20,
        mu in 0.05f64..1.0,
    ) {
        let mut rng = Rng::new(seed);
        let mut state = IFNeuronState::new(3, mu);
        let theta = DenseMatrix::identity(2);
        let mut scalar_v = [[0.0f64; 2]; 3];
        let mut scalar_fires = [[0usize; 2]; 3];
        let mut module_fires = [[0usize; 2]; 3];
        for _ in 0..steps {
            let z_data: Vec<f64> = (0..6).map(|_| rng.uniform() * mu).collect();
            let z = DenseMatrix::from_vec(3, 2, z_data.clone()).unwrap();
            spiking::if_charge(&mut state, &z, &theta).unwrap();
            let s = spiking::if_fire(&state);
            spiking::if_reset(&mut state, &s, ResetMode::FiredOnly);
            for i in 0..3 {
                for j in 0..2 {
                    scalar_v[i][j] += z_data[i * 2 + j];
                    if scalar_v[i][j] - mu >= 0.0 {
                        scalar_fires[i][j] += 1;
                        scalar_v[i][j] -= mu;
                    }
                    if s.get(i, j) == 1.0 {
                        module_fires[i][j] += 1;
                    }
                    prop_assert!((state.potential.get(i, j) - scalar_v[i][j]).abs() < 1e-9);
                }
            }
        }
        prop_assert_eq!(scalar_fires, module_fires);
    }

    /// Symmetric normalization preserves exact zeros and never produces
    /// negative or non-finite coefficients.
    #[test]
    fn symmetric_normalization_preserves_zeros(
        seed in 0u64..1_000_000,
        n in 4usize..10,
    ) {
        let g = random_graph(seed, n);
        let mut rng = Rng::new(seed ^ 0xbeef);
        let coeff: Vec<f64> = (0..g.edge_slots())
            .map(|_| if rng.uniform() < 0.3 { 0.0 } else { rng.uniform() * 2.0 })
            .collect();
        let alpha = EdgeAttention::new(coeff.clone());
        let normalized = spiking::symmetric_normalize(&alpha, &g).unwrap();
        for slot in 0..normalized.len() {
            let v = normalized.get(slot);
            prop_assert!(v.is_finite());
            prop_assert!(v >= 0.0);
            prop_assert_eq!(coeff[slot] == 0.0, v == 0.0);
        }
    }

    /// Softmax rows sum to one; the baseline normalization is row-stochastic
    /// per source node and invariant to shifting all scores of that node.
    #[test]
    fn baseline_normalization_is_row_stochastic_and_shift_invariant(
        seed in 0u64..1_000_000,
        n in 4usize..10,
        shift in -3.0f64..3.0,
    ) {
        let g = random_graph(seed, n);
        let mut rng = Rng::new(seed ^ 0xcafe);
        let coeff: Vec<f64> = (0..g.edge_slots())
            .map(|_| rng.uniform_range(-2.0, 2.0))
            .collect();
        let alpha = EdgeAttention::new(coeff.clone());
        let normalized = softmax_normalize(&alpha, &g, 0.2).unwrap();
        for i in 0..n {
            let total: f64 = g.slot_range(i).map(|slot| normalized.get(slot)).sum();
            prop_assert!((total - 1.0).abs() < 1e-9, "node {i} sums to {total}");
        }
        let shifted = EdgeAttention::new(coeff.iter().map(|v| v + shift).collect());
        let normalized_shifted = softmax_normalize(&shifted, &g, 0.2).unwrap();
        // shifting raw scores commutes with leaky-relu only in the linear
        // regions, so compare on an all-positive copy instead
        let positive = EdgeAttention::new(coeff.iter().map(|v| v.abs() + 1.0).collect());
        let positive_shift = shift.abs();
        let positive_shifted =
            EdgeAttention::new(positive.as_slice().iter().map(|v| v + positive_shift).collect());
        let a = softmax_normalize(&positive, &g, 0.2).unwrap();
        let b = softmax_normalize(&positive_shifted, &g, 0.2).unwrap();
        for slot in 0..a.len() {
            prop_assert!((a.get(slot) - b.get(slot)).abs() < 1e-9);
        }
        drop(normalized_shifted);
    }

    /// The full spiking pipeline is a pure function of its RNG stream.
    #[test]
    fn spiking_attention_is_deterministic(
        seed in 0u64..1_000_000,
        n in 4usize..10,
        d in 1usize..4,
        steps in 1usize..8,
    ) {
        let g = random_graph(seed, n);
        let h = random_features(seed ^ 1, n, d);
        let params =
            SpikingAttentionParams::init(d, steps, 0.2, false, &mut Rng::new(seed ^ 2)).unwrap();
        let a = spiking_attention(&h, &params, &g, &mut Rng::new(seed ^ 3), ResetMode::FiredOnly)
            .unwrap();
        let b = spiking_attention(&h, &params, &g, &mut Rng::new(seed ^ 3), ResetMode::FiredOnly)
            .unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
    }

    /// Dense matmul is associative to tight tolerance on small matrices.
    #[test]
    fn matmul_is_associative(seed in 0u64..1_000_000) {
        let mut rng = Rng::new(seed);
        let mut mat = |r: usize, c: usize| {
            let data = (0..r * c).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            DenseMatrix::from_vec(r, c, data).unwrap()
        };
        let a = mat(3, 4);
        let b = mat(4, 5);
        let c = mat(5, 2);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        for (&x, &y) in left.data().iter().zip(right.data()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    /// Row-softmax output rows are probability vectors.
    #[test]
    fn softmax_rows_are_stochastic(seed in 0u64..1_000_000) {
        let mut rng = Rng::new(seed);
        let data = (0..12).map(|_| rng.uniform_range(-30.0, 30.0)).collect();
        let m = DenseMatrix::from_vec(3, 4, data).unwrap();
        let s = softmax_rows(&m);
        for i in 0..3 {
            let total: f64 = s.row(i).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(s.row(i).iter().all(|&v| v >= 0.0));
        }
    }

    /// Concatenated-weight scores equal the split two-column form.
    #[test]
    fn baseline_scores_split_equals_concat(seed in 0u64..1_000_000, d in 1usize..6) {
        let mut rng = Rng::new(seed);
        let n = 6;
        let g = random_graph(seed ^ 9, n);
        let h = random_features(seed ^ 10, n, d);
        let params = GatAttentionParams::init(d, 0.2, &mut rng);
        let split = gsat_core::gat::gat_attention(&h, &params, &g).unwrap();
        // concatenated form: score(i, j) = [h_i || h_j] . [theta_col0 || theta_col1]
        for slot in 0..g.edge_slots() {
            let (i, j) = (g.slot_src(slot), g.slot_dst(slot));
            let mut concat = 0.0;
            for k in 0..d {
                concat += h.get(i, k) * params.theta.get(k, 0);
                concat += h.get(j, k) * params.theta.get(k, 1);
            }
            prop_assert!((split.get(slot) - concat).abs() <= 1e-12);
        }
    }
}

#[test]
fn encoder_rate_matches_clamped_input_within_3_sigma() {
    let steps = 10_000usize;
    let mut rng = Rng::new(99);
    for &h in &[-0.5, 0.0, 0.3, 0.7, 1.0, 1.5] {
        let m = DenseMatrix::filled(1, 1, h);
        let mut spikes = 0usize;
        for _ in 0..steps {
            let z = spiking::poisson_encode(&m, &mut rng);
            if z.get(0, 0) == 1.0 {
                spikes += 1;
            }
        }
        let p = h.clamp(0.0, 1.0);
        let sigma = (p * (1.0 - p) / steps as f64).sqrt();
        let rate = spikes as f64 / steps as f64;
        assert!(
            (rate - p).abs() <= 3.0 * sigma.max(1e-12),
            "input {h}: rate {rate} vs expected {p}"
        );
    }
}

#[test]
fn sbm_generator_respects_block_structure() {
    let mut rng = Rng::new(5);
    let g = sbm_generate(2, 50, 0.3, 0.02, 4, 1.0, &mut rng).unwrap();
    let mut intra = 0usize;
    let mut inter = 0usize;
    for (a, b) in g.undirected_pairs() {
        if g.labels()[a] == g.labels()[b] {
            intra += 1;
        } else {
            inter += 1;
        }
    }
    // 0.3 within blocks vs 0.02 across: intra edges must clearly dominate
    assert!(intra > inter * 5, "intra {intra} vs inter {inter}");
}
