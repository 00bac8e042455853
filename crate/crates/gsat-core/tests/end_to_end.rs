//! End-to-end training behavior on the synthetic block-model fixture.

use std::rc::Rc;

use gsat_core::graph::{sbm_generate, Graph, SplitSpec};
use gsat_core::model::{self, AttentionKind, ModelConfig};
use gsat_core::rng::Rng;

fn sbm_fixture(seed: u64) -> Graph {
    let mut rng = Rng::new(seed);
    let mut g = sbm_generate(2, 100, 0.1, 0.01, 8, 1.0, &mut rng).unwrap();
    let (train, val, test) = g
        .split_nodes(20, SplitSpec::Fixed { val: 40, test: 100 }, &mut rng.fork(1))
        .unwrap();
    g.set_masks(train, val, test).unwrap();
    g.add_self_loops()
}

fn fixture_config(kind: AttentionKind, seed: u64) -> ModelConfig {
    let mut config = ModelConfig::two_layer(8, 8, 2, 8, kind);
    config.seed = seed;
    config.epochs = 200;
    config
}

#[test]
fn spiking_model_learns_sbm() {
    let g = Rc::new(sbm_fixture(1));
    let mut accs = Vec::new();
    for seed in 0..5 {
        let config = fixture_config(AttentionKind::Spiking, seed);
        let trained = model::train(&g, &config).unwrap();
        let acc = model::evaluate(&trained.params, &config, &g, g.test_mask()).unwrap();
        accs.push(acc);
    }
    accs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = accs[2];
    assert!(median >= 0.9, "median test accuracy {median}, all {accs:?}");
}

#[test]
fn training_loss_decreases_on_sbm() {
    let g = Rc::new(sbm_fixture(2));
    for seed in [0, 1, 2] {
        let mut config = fixture_config(AttentionKind::Spiking, seed);
        config.epochs = 50;
        config.patience = 100;
        let trained = model::train(&g, &config).unwrap();
        let first = trained.log.first().unwrap().train_loss;
        let last = trained.log.last().unwrap().train_loss;
        assert!(last < first, "seed {seed}: loss went {first} -> {last}");
    }
}

#[test]
fn baseline_model_learns_sbm() {
    let g = Rc::new(sbm_fixture(3));
    let config = fixture_config(AttentionKind::Baseline, 0);
    let trained = model::train(&g, &config).unwrap();
    let acc = model::evaluate(&trained.params, &config, &g, g.test_mask()).unwrap();
    assert!(acc >= 0.9, "baseline test accuracy {acc}");
}

#[test]
fn zero_epochs_is_chance_level() {
    let g = Rc::new(sbm_fixture(4));
    let mut config = fixture_config(AttentionKind::Spiking, 0);
    config.epochs = 0;
    let trained = model::train(&g, &config).unwrap();
    let acc = model::evaluate(&trained.params, &config, &g, g.test_mask()).unwrap();
    // binary task: untrained accuracy should hover around 1/2
    assert!((0.2..=0.8).contains(&acc), "untrained accuracy {acc}");
}
