//! Dataset manifests: a directory with `meta.json`, `edges.csv`,
//! `features.csv`, `labels.csv` and an optional `splits.json`.
//!
//! - `meta.json`: `{"n": .., "d": .., "c": .., "policy": "citation" | "copurchase"}`
//! - `edges.csv`: one `src,dst` pair per line, 0-based, undirected, no header
//! - `features.csv`: `n` lines of `d` comma-separated reals (fixed or
//!   scientific notation)
//! - `labels.csv`: `n` lines, one integer in `[0, c)` each
//! - `splits.json`: `{"train": [..], "val": [..], "test": [..]}` node indices
//!
//! Loading validates everything and reports malformed input with a
//! file-and-line diagnostic. Saving writes floats in Rust's shortest
//! round-trip notation, so `load(save(g))` reproduces `g` bit-exactly.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gsat_core::graph::{Graph, SplitSpec};
use gsat_core::DenseMatrix;
use serde::{Deserialize, Serialize};

/// How validation/test masks are sized when `splits.json` is absent and a
/// split is requested at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPolicy {
    /// 20 per class train, 500 validation, 1000 test.
    Citation,
    /// 20 per class train, 30 per class validation, rest test.
    Copurchase,
}

impl SplitPolicy {
    pub fn train_per_class(self) -> usize {
        20
    }

    pub fn spec(self) -> SplitSpec {
        match self {
            SplitPolicy::Citation => SplitSpec::Fixed { val: 500, test: 1000 },
            SplitPolicy::Copurchase => SplitSpec::PerClassVal { val_per_class: 30 },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub policy: SplitPolicy,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Splits {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Load and validate a manifest directory. When `normalize_features` is
/// set, each feature row is scaled to unit L1 norm (zero rows are left
/// untouched). Self loops are *not* added here; training and evaluation
/// add them on their own.
pub fn load_manifest(dir: &Path, normalize_features: bool) -> Result<Graph> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read_to_string(&meta_path)?)
        .with_context(|| format!("parsing {}", meta_path.display()))?;

    let edges_path = dir.join("edges.csv");
    let mut pairs = Vec::new();
    for (lineno, line) in read_to_string(&edges_path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let parse = |field: Option<&str>, what: &str| -> Result<usize> {
            field
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .with_context(|| {
                    format!("{}:{}: missing {what}", edges_path.display(), lineno + 1)
                })?
                .parse::<usize>()
                .with_context(|| {
                    format!("{}:{}: invalid {what}", edges_path.display(), lineno + 1)
                })
        };
        let a = parse(fields.next(), "source node")?;
        let b = parse(fields.next(), "destination node")?;
        if fields.next().is_some() {
            bail!(
                "{}:{}: expected exactly two fields",
                edges_path.display(),
                lineno + 1
            );
        }
        if a >= meta.n || b >= meta.n {
            bail!(
                "{}:{}: edge ({a}, {b}) references a node outside [0, {})",
                edges_path.display(),
                lineno + 1,
                meta.n
            );
        }
        pairs.push((a, b));
    }

    let features_path = dir.join("features.csv");
    let mut data = Vec::with_capacity(meta.n * meta.d);
    let mut rows = 0usize;
    for (lineno, line) in read_to_string(&features_path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row: Vec<f64> = Vec::with_capacity(meta.d);
        for field in line.split(',') {
            let v: f64 = field.trim().parse().with_context(|| {
                format!(
                    "{}:{}: invalid real value {field:?}",
                    features_path.display(),
                    lineno + 1
                )
            })?;
            row.push(v);
        }
        if row.len() != meta.d {
            bail!(
                "{}:{}: expected {} features, found {}",
                features_path.display(),
                lineno + 1,
                meta.d,
                row.len()
            );
        }
        data.extend_from_slice(&row);
        rows += 1;
    }
    if rows != meta.n {
        bail!(
            "{}: expected {} feature rows, found {rows}",
            features_path.display(),
            meta.n
        );
    }
    let mut features = DenseMatrix::from_vec(meta.n, meta.d, data)?;
    if normalize_features {
        features = l1_normalize_rows(&features);
    }

    let labels_path = dir.join("labels.csv");
    let mut labels = Vec::with_capacity(meta.n);
    for (lineno, line) in read_to_string(&labels_path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let label: usize = line.parse().with_context(|| {
            format!("{}:{}: invalid label", labels_path.display(), lineno + 1)
        })?;
        if label >= meta.c {
            bail!(
                "{}:{}: label {label} outside [0, {})",
                labels_path.display(),
                lineno + 1,
                meta.c
            );
        }
        labels.push(label);
    }
    if labels.len() != meta.n {
        bail!(
            "{}: expected {} labels, found {}",
            labels_path.display(),
            meta.n,
            labels.len()
        );
    }

    let mut g = Graph::new(meta.n, &pairs, features, labels, meta.c)?;

    let splits_path = dir.join("splits.json");
    if splits_path.exists() {
        let splits: Splits = serde_json::from_str(&read_to_string(&splits_path)?)
            .with_context(|| format!("parsing {}", splits_path.display()))?;
        let to_mask = |indices: &[usize], what: &str| -> Result<Vec<bool>> {
            let mut mask = vec![false; meta.n];
            for &i in indices {
                if i >= meta.n {
                    bail!(
                        "{}: {what} index {i} outside [0, {})",
                        splits_path.display(),
                        meta.n
                    );
                }
                mask[i] = true;
            }
            Ok(mask)
        };
        let train = to_mask(&splits.train, "train")?;
        let val = to_mask(&splits.val, "val")?;
        let test = to_mask(&splits.test, "test")?;
        g.set_masks(train, val, test)?;
    }
    Ok(g)
}

/// Scale each row to unit L1 norm; all-zero rows stay zero.
pub fn l1_normalize_rows(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let norm: f64 = out.row(i).iter().map(|v| v.abs()).sum();
        if norm > 0.0 {
            for j in 0..out.cols() {
                let v = out.get(i, j) / norm;
                out.set(i, j, v);
            }
        }
    }
    out
}

fn mask_to_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect()
}

/// Write `g` as a manifest directory. `splits.json` is emitted only when
/// at least one mask is non-empty.
pub fn save_manifest(g: &Graph, dir: &Path, policy: SplitPolicy) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let meta = Meta {
        n: g.num_nodes(),
        d: g.features().cols(),
        c: g.num_classes(),
        policy,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;

    let mut edges = String::new();
    for (a, b) in g.undirected_pairs() {
        edges.push_str(&format!("{a},{b}\n"));
    }
    fs::write(dir.join("edges.csv"), edges)?;

    let mut features = String::new();
    for i in 0..g.num_nodes() {
        let row: Vec<String> = g.features().row(i).iter().map(f64::to_string).collect();
        features.push_str(&row.join(","));
        features.push('\n');
    }
    fs::write(dir.join("features.csv"), features)?;

    let mut labels = String::new();
    for &label in g.labels() {
        labels.push_str(&format!("{label}\n"));
    }
    fs::write(dir.join("labels.csv"), labels)?;

    let splits = Splits {
        train: mask_to_indices(g.train_mask()),
        val: mask_to_indices(g.val_mask()),
        test: mask_to_indices(g.test_mask()),
    };
    if !(splits.train.is_empty() && splits.val.is_empty() && splits.test.is_empty()) {
        fs::write(
            dir.join("splits.json"),
            serde_json::to_string_pretty(&splits)?,
        )?;
    }
    Ok(())
}
