use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gsat_cli::config::{Attention, RunConfig};
use gsat_cli::dataset::{self, Meta};
use gsat_cli::params;
use gsat_core::attack::random_attack;
use gsat_core::experiment::sparsity_sweep;
use gsat_core::flops::{count_flops, FlopsReport, ForwardTrace};
use gsat_core::graph::Graph;
use gsat_core::model::{self, ModelParams};
use gsat_core::Rng;

#[derive(Parser)]
#[command(
    name = "gsat",
    about = "Train and probe graph attention models with spiking or softmax attention"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command. Flags override the config file, which
/// overrides built-in defaults.
#[derive(Args)]
struct CommonOpts {
    /// Key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Attention mechanism: spiking or baseline.
    #[arg(long)]
    attention: Option<Attention>,
    /// Firing threshold.
    #[arg(long)]
    mu: Option<f64>,
    /// Spike-train length.
    #[arg(long = "T")]
    steps: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write metrics, parameters and the resolved config.
    Train {
        #[command(flatten)]
        common: CommonOpts,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate saved parameters and print accuracy as JSON.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        /// Parameter file written by `train`.
        #[arg(long)]
        params: PathBuf,
        /// Optional directory for the JSON report and config snapshot.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add random edges and write the perturbed dataset as a new manifest.
    Attack {
        #[command(flatten)]
        common: CommonOpts,
        /// Output manifest directory.
        #[arg(long)]
        out: PathBuf,
        /// Edges to add as a fraction of the existing undirected edges.
        #[arg(long = "attack-rate")]
        attack_rate: Option<f64>,
    },
    /// Count forward-pass floating-point operations.
    Flops {
        #[command(flatten)]
        common: CommonOpts,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train across a (mu, T) grid and tabulate sparsity and accuracy.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated threshold grid.
        #[arg(long)]
        mu_grid: Option<String>,
        /// Comma-separated step-count grid.
        #[arg(long)]
        t_grid: Option<String>,
    },
}

fn resolve_config(common: &CommonOpts) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.merge_file(path)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(attention) = common.attention {
        cfg.attention = attention;
    }
    if let Some(mu) = common.mu {
        cfg.mu = mu;
    }
    if let Some(steps) = common.steps {
        cfg.steps = steps;
    }
    if let Some(heads) = common.heads {
        cfg.heads = heads;
    }
    if let Some(hidden) = common.hidden {
        cfg.hidden = hidden;
    }
    if let Some(epochs) = common.epochs {
        cfg.epochs = epochs;
    }
    Ok(cfg)
}

/// Ensure the graph carries train/val/test masks, deriving them from the
/// manifest's split policy when `splits.json` did not provide any.
fn ensure_masks(g: Graph, meta: &Meta, seed: u64) -> Result<Graph> {
    if g.train_mask().iter().any(|&b| b) {
        return Ok(g);
    }
    let mut g = g;
    let mut rng = Rng::new(seed).fork(0x517);
    let (train, val, test) = g.split_nodes(
        meta.policy.train_per_class(),
        meta.policy.spec(),
        &mut rng,
    )?;
    g.set_masks(train, val, test)?;
    Ok(g)
}

fn load_meta(dir: &Path) -> Result<Meta> {
    let path = dir.join("meta.json");
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

#[derive(Serialize)]
struct MetricsRecord {
    epoch: usize,
    train_loss: f64,
    val_acc: f64,
    test_acc: f64,
    edge_removal_ratio: f64,
}

#[derive(Serialize)]
struct EvalReport {
    val_accuracy: f64,
    test_accuracy: f64,
    edge_removal_ratio: f64,
}

#[derive(Serialize)]
struct FlopsSummary {
    attention: String,
    projection: u64,
    attention_flops: u64,
    normalization: u64,
    aggregation: u64,
    multiply_accumulate: u64,
    accumulate_only: u64,
    attention_path: u64,
    total: u64,
}

impl FlopsSummary {
    fn new(attention: Attention, report: &FlopsReport) -> Self {
        FlopsSummary {
            attention: format!("{attention:?}").to_lowercase(),
            projection: report.projection,
            attention_flops: report.attention,
            normalization: report.normalization,
            aggregation: report.aggregation,
            multiply_accumulate: report.multiply_accumulate,
            accumulate_only: report.accumulate_only,
            attention_path: report.attention_path(),
            total: report.total(),
        }
    }

    fn to_csv(&self) -> String {
        let mut csv = String::from("component,flops\n");
        csv.push_str(&format!("projection,{}\n", self.projection));
        csv.push_str(&format!("attention,{}\n", self.attention_flops));
        csv.push_str(&format!("normalization,{}\n", self.normalization));
        csv.push_str(&format!("aggregation,{}\n", self.aggregation));
        csv.push_str(&format!("attention_path,{}\n", self.attention_path));
        csv.push_str(&format!("total,{}\n", self.total));
        csv
    }
}

fn cmd_train(common: &CommonOpts, out: &Path) -> Result<()> {
    let cfg = resolve_config(common)?;
    let meta = load_meta(&common.data)?;
    let g = dataset::load_manifest(&common.data, cfg.normalize_features)?;
    let g = ensure_masks(g, &meta, cfg.seed)?;
    let model_config = cfg.model_config(g.features().cols(), g.num_classes());
    let trained = model::train(&g, &model_config)?;

    create_out_dir(out)?;
    let mut metrics = String::new();
    for entry in &trained.log {
        let record = MetricsRecord {
            epoch: entry.epoch,
            train_loss: entry.train_loss,
            val_acc: entry.val_acc,
            test_acc: entry.test_acc,
            edge_removal_ratio: entry.edge_removal_ratio,
        };
        metrics.push_str(&serde_json::to_string(&record)?);
        metrics.push('\n');
    }
    fs::write(out.join("metrics.jsonl"), metrics)?;
    params::save_params(&trained.params, &out.join("params.bin"))?;
    cfg.write_snapshot(&out.join("config.json"))?;
    println!(
        "best epoch {} with validation accuracy {:.4}",
        trained.best_epoch, trained.best_val_acc
    );
    Ok(())
}

fn cmd_eval(common: &CommonOpts, params_path: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = resolve_config(common)?;
    let meta = load_meta(&common.data)?;
    let g = dataset::load_manifest(&common.data, cfg.normalize_features)?;
    let g = Rc::new(ensure_masks(g, &meta, cfg.seed)?.add_self_loops());
    let model_config = cfg.model_config(g.features().cols(), g.num_classes());
    let trained = params::load_params(params_path)?;
    let (probs, attentions) = model::eval_probabilities(&trained, &model_config, &g, None)?;
    let report = EvalReport {
        val_accuracy: model::accuracy(&probs, g.labels(), g.val_mask())?,
        test_accuracy: model::accuracy(&probs, g.labels(), g.test_mask())?,
        edge_removal_ratio: model::mean_removal_ratio(&attentions, &g),
    };
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = out {
        create_out_dir(out)?;
        fs::write(out.join("eval.json"), &json)?;
        cfg.write_snapshot(&out.join("config.json"))?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_attack(common: &CommonOpts, out: &Path, attack_rate: Option<f64>) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    if let Some(rate) = attack_rate {
        cfg.attack_rate = rate;
    }
    let meta = load_meta(&common.data)?;
    // keep features verbatim so the perturbed manifest differs only in edges
    let g = dataset::load_manifest(&common.data, false)?;
    let attacked = random_attack(&g, cfg.attack_rate, &mut Rng::new(cfg.seed).fork(0xa77c))?;
    dataset::save_manifest(&attacked, out, meta.policy)?;
    cfg.write_snapshot(&out.join("attack_config.json"))?;
    println!(
        "added {} undirected edges ({} -> {})",
        attacked.undirected_edge_count() - g.undirected_edge_count(),
        g.undirected_edge_count(),
        attacked.undirected_edge_count()
    );
    Ok(())
}

fn cmd_flops(common: &CommonOpts, out: &Path) -> Result<()> {
    let cfg = resolve_config(common)?;
    let meta = load_meta(&common.data)?;
    let g = dataset::load_manifest(&common.data, cfg.normalize_features)?;
    let g = Rc::new(ensure_masks(g, &meta, cfg.seed)?.add_self_loops());
    let model_config = cfg.model_config(g.features().cols(), g.num_classes());
    let init_params = ModelParams::init(&model_config, &mut Rng::new(cfg.seed).fork(0x1717));
    let mut trace = ForwardTrace::new();
    model::eval_probabilities(&init_params, &model_config, &g, Some(&mut trace))?;
    let report = count_flops(&trace);
    let summary = FlopsSummary::new(cfg.attention, &report);

    create_out_dir(out)?;
    fs::write(out.join("flops.csv"), summary.to_csv())?;
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(out.join("flops.json"), &json)?;
    cfg.write_snapshot(&out.join("config.json"))?;
    println!("{json}");
    Ok(())
}

fn cmd_sweep(
    common: &CommonOpts,
    out: &Path,
    mu_grid: Option<&str>,
    t_grid: Option<&str>,
) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    if let Some(grid) = mu_grid {
        cfg.set("mu_grid", grid)?;
    }
    if let Some(grid) = t_grid {
        cfg.set("t_grid", grid)?;
    }
    if cfg.mu_grid.is_empty() || cfg.t_grid.is_empty() {
        bail!("sweep requires non-empty mu and T grids");
    }
    let meta = load_meta(&common.data)?;
    let g = dataset::load_manifest(&common.data, cfg.normalize_features)?;
    let g = ensure_masks(g, &meta, cfg.seed)?;
    let base = cfg.model_config(g.features().cols(), g.num_classes());
    let points = sparsity_sweep(&g, &base, &cfg.mu_grid, &cfg.t_grid)?;

    create_out_dir(out)?;
    let mut csv = String::from("mu,T,edge_removal_ratio,test_accuracy\n");
    let mut rows = Vec::new();
    for p in &points {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            p.mu, p.steps, p.removal_ratio, p.test_accuracy
        ));
        rows.push(serde_json::json!({
            "mu": p.mu,
            "T": p.steps,
            "edge_removal_ratio": p.removal_ratio,
            "test_accuracy": p.test_accuracy,
        }));
    }
    fs::write(out.join("sweep.csv"), csv)?;
    fs::write(
        out.join("sweep.json"),
        serde_json::to_string_pretty(&rows)?,
    )?;
    cfg.write_snapshot(&out.join("config.json"))?;
    println!("{} grid points written", points.len());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train { common, out } => cmd_train(common, out),
        Command::Eval {
            common,
            params,
            out,
        } => cmd_eval(common, params, out.as_deref()),
        Command::Attack {
            common,
            out,
            attack_rate,
        } => cmd_attack(common, out, *attack_rate),
        Command::Flops { common, out } => cmd_flops(common, out),
        Command::Sweep {
            common,
            out,
            mu_grid,
            t_grid,
        } => cmd_sweep(common, out, mu_grid.as_deref(), t_grid.as_deref()),
    }
}
