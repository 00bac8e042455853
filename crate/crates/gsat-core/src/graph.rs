//! Node-attributed undirected graphs in CSR form.
//!
//! Both directions of every undirected edge are stored explicitly because
//! attention coefficients are directional (`alpha_ij != alpha_ji`). A mirror
//! index maps every directed slot `(i, j)` to its reverse slot `(j, i)`,
//! which the symmetric normalization needs for column sums.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    /// Source node of each directed edge slot.
    src: Vec<usize>,
    /// Slot index of the reverse edge `(j, i)` for each slot `(i, j)`.
    mirror: Vec<usize>,
    features: DenseMatrix,
    labels: Vec<usize>,
    num_classes: usize,
    train_mask: Vec<bool>,
    val_mask: Vec<bool>,
    test_mask: Vec<bool>,
    self_loops_added: bool,
}

/// Validation/test sizing policy for [`Graph::split_nodes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSpec {
    /// Fixed global counts (citation-style: 500 validation, 1000 test).
    Fixed { val: usize, test: usize },
    /// Per-class validation count, everything else becomes test
    /// (co-purchase-style: 30 per class / rest).
    PerClassVal { val_per_class: usize },
}

impl Graph {
    /// Build a graph from undirected node pairs. Duplicate pairs collapse to
    /// one edge; symmetry is enforced by mirroring every pair.
    pub fn new(
        n: usize,
        pairs: &[(usize, usize)],
        features: DenseMatrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Graph> {
        if features.rows() != n {
            return Err(CoreError::InvalidGraph(format!(
                "feature matrix has {} rows for {n} nodes",
                features.rows()
            )));
        }
        if labels.len() != n {
            return Err(CoreError::InvalidGraph(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(CoreError::InvalidGraph(format!(
                "label {bad} out of range [0, {num_classes})"
            )));
        }
        if !features.is_finite() {
            return Err(CoreError::NonFinite("graph features"));
        }
        let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(a, b) in pairs {
            if a >= n || b >= n {
                return Err(CoreError::InvalidGraph(format!(
                    "edge ({a}, {b}) references a node outside [0, {n})"
                )));
            }
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        let self_loops = (0..n).all(|i| adjacency[i].contains(&i)) && n > 0;
        Ok(Self::from_adjacency(
            adjacency,
            features,
            labels,
            num_classes,
            self_loops,
        ))
    }

    fn from_adjacency(
        adjacency: Vec<BTreeSet<usize>>,
        features: DenseMatrix,
        labels: Vec<usize>,
        num_classes: usize,
        self_loops_added: bool,
    ) -> Graph {
        let n = adjacency.len();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        let mut src = Vec::new();
        row_offsets.push(0);
        for (i, nbrs) in adjacency.iter().enumerate() {
            for &j in nbrs {
                col_indices.push(j);
                src.push(i);
            }
            row_offsets.push(col_indices.len());
        }
        let mut g = Graph {
            n,
            row_offsets,
            col_indices,
            src,
            mirror: Vec::new(),
            features,
            labels,
            num_classes,
            train_mask: vec![false; n],
            val_mask: vec![false; n],
            test_mask: vec![false; n],
            self_loops_added,
        };
        g.mirror = g.build_mirror();
        g
    }

    fn build_mirror(&self) -> Vec<usize> {
        let mut mirror = vec![0usize; self.col_indices.len()];
        for slot in 0..self.col_indices.len() {
            let (i, j) = (self.src[slot], self.col_indices[slot]);
            let row = &self.col_indices[self.row_offsets[j]..self.row_offsets[j + 1]];
            // symmetric storage guarantees (j, i) exists
            let pos = row.binary_search(&i).expect("missing mirror edge");
            mirror[slot] = self.row_offsets[j] + pos;
        }
        mirror
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of directed edge slots (each undirected edge counts twice,
    /// each self loop once).
    #[inline]
    pub fn edge_slots(&self) -> usize {
        self.col_indices.len()
    }

    /// Undirected edge count, self loops excluded.
    pub fn undirected_edge_count(&self) -> usize {
        let loops = self.self_loop_count();
        (self.col_indices.len() - loops) / 2
    }

    pub fn self_loop_count(&self) -> usize {
        (0..self.col_indices.len())
            .filter(|&s| self.src[s] == self.col_indices[s])
            .count()
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Range of edge slots whose source is node `i`.
    #[inline]
    pub fn slot_range(&self, i: usize) -> core::ops::Range<usize> {
        self.row_offsets[i]..self.row_offsets[i + 1]
    }

    #[inline]
    pub fn slot_src(&self, slot: usize) -> usize {
        self.src[slot]
    }

    #[inline]
    pub fn slot_dst(&self, slot: usize) -> usize {
        self.col_indices[slot]
    }

    #[inline]
    pub fn mirror_slot(&self, slot: usize) -> usize {
        self.mirror[slot]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    #[inline]
    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    #[inline]
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn train_mask(&self) -> &[bool] {
        &self.train_mask
    }

    #[inline]
    pub fn val_mask(&self) -> &[bool] {
        &self.val_mask
    }

    #[inline]
    pub fn test_mask(&self) -> &[bool] {
        &self.test_mask
    }

    pub fn self_loops_added(&self) -> bool {
        self.self_loops_added
    }

    /// Unique undirected pairs `(a, b)` with `a <= b`, self loops included
    /// only if present.
    pub fn undirected_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for slot in 0..self.col_indices.len() {
            let (i, j) = (self.src[slot], self.col_indices[slot]);
            if i <= j {
                out.push((i, j));
            }
        }
        out
    }

    /// Add the edge `(i, i)` for every node. Idempotent.
    pub fn add_self_loops(&self) -> Graph {
        let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.n];
        for slot in 0..self.col_indices.len() {
            adjacency[self.src[slot]].insert(self.col_indices[slot]);
        }
        for (i, nbrs) in adjacency.iter_mut().enumerate() {
            nbrs.insert(i);
        }
        let mut g = Graph::from_adjacency(
            adjacency,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
            true,
        );
        g.train_mask = self.train_mask.clone();
        g.val_mask = self.val_mask.clone();
        g.test_mask = self.test_mask.clone();
        g
    }

    /// New graph with extra undirected pairs added; features, labels and
    /// masks carry over unchanged.
    pub fn with_extra_edges(&self, extra: &[(usize, usize)]) -> Result<Graph> {
        let mut pairs = self.undirected_pairs();
        pairs.extend_from_slice(extra);
        let mut g = Graph::new(
            self.n,
            &pairs,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
        )?;
        g.self_loops_added = self.self_loops_added;
        g.train_mask = self.train_mask.clone();
        g.val_mask = self.val_mask.clone();
        g.test_mask = self.test_mask.clone();
        Ok(g)
    }

    /// Replace the feature matrix (used by the loader's row normalization).
    pub fn with_features(&self, features: DenseMatrix) -> Result<Graph> {
        if features.shape() != self.features.shape() {
            return Err(CoreError::ShapeMismatch {
                op: "with_features",
                left: self.features.shape(),
                right: features.shape(),
            });
        }
        if !features.is_finite() {
            return Err(CoreError::NonFinite("graph features"));
        }
        let mut g = self.clone();
        g.features = features;
        g
            .features
            .is_finite()
            .then_some(g)
            .ok_or(CoreError::NonFinite("graph features"))
    }

    pub fn set_masks(
        &mut self,
        train: Vec<bool>,
        val: Vec<bool>,
        test: Vec<bool>,
    ) -> Result<()> {
        for (name, m) in [("train", &train), ("val", &val), ("test", &test)] {
            if m.len() != self.n {
                return Err(CoreError::InvalidGraph(format!(
                    "{name} mask length {} for {} nodes",
                    m.len(),
                    self.n
                )));
            }
        }
        for i in 0..self.n {
            let count = train[i] as u8 + val[i] as u8 + test[i] as u8;
            if count > 1 {
                return Err(CoreError::InvalidGraph(format!(
                    "node {i} belongs to more than one split"
                )));
            }
        }
        self.train_mask = train;
        self.val_mask = val;
        self.test_mask = test;
        Ok(())
    }

    /// Sample train/val/test masks: `per_class_train` labeled nodes per
    /// class, then validation and test from the remainder per `spec`.
    pub fn split_nodes(
        &self,
        per_class_train: usize,
        spec: SplitSpec,
        rng: &mut Rng,
    ) -> Result<(Vec<bool>, Vec<bool>, Vec<bool>)> {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let mut train = vec![false; self.n];
        let mut val = vec![false; self.n];
        let mut test = vec![false; self.n];
        let mut remainder_by_class: Vec<Vec<usize>> = Vec::with_capacity(self.num_classes);
        for (c, nodes) in by_class.iter_mut().enumerate() {
            if nodes.len() < per_class_train {
                return Err(CoreError::InvalidArgument(format!(
                    "class {c} has {} nodes, fewer than per_class_train={per_class_train}",
                    nodes.len()
                )));
            }
            rng.shuffle(nodes);
            for &i in nodes.iter().take(per_class_train) {
                train[i] = true;
            }
            remainder_by_class.push(nodes[per_class_train..].to_vec());
        }
        match spec {
            SplitSpec::Fixed { val: nv, test: nt } => {
                let mut pool: Vec<usize> =
                    remainder_by_class.into_iter().flatten().collect();
                pool.sort_unstable();
                if pool.len() < nv + nt {
                    return Err(CoreError::InvalidArgument(format!(
                        "{} unlabeled-for-train nodes cannot cover val={nv} + test={nt}",
                        pool.len()
                    )));
                }
                rng.shuffle(&mut pool);
                for &i in pool.iter().take(nv) {
                    val[i] = true;
                }
                for &i in pool.iter().skip(nv).take(nt) {
                    test[i] = true;
                }
            }
            SplitSpec::PerClassVal { val_per_class } => {
                for (c, nodes) in remainder_by_class.iter().enumerate() {
                    if nodes.len() < val_per_class {
                        return Err(CoreError::InvalidArgument(format!(
                            "class {c} has too few nodes left for val_per_class={val_per_class}"
                        )));
                    }
                    for &i in nodes.iter().take(val_per_class) {
                        val[i] = true;
                    }
                    for &i in nodes.iter().skip(val_per_class) {
                        test[i] = true;
                    }
                }
            }
        }
        Ok((train, val, test))
    }
}

/// Stochastic block model generator: `blocks` communities of
/// `nodes_per_block` nodes, intra-block edge probability `p_in`, inter-block
/// `p_out`. Features are a block-dependent mean plus unit Gaussian noise;
/// labels are the block ids.
pub fn sbm_generate(
    blocks: usize,
    nodes_per_block: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    feature_shift: f64,
    rng: &mut Rng,
) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out >= p_in {
        return Err(CoreError::InvalidArgument(format!(
            "need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    if blocks == 0 || nodes_per_block == 0 || feature_dim == 0 {
        return Err(CoreError::InvalidArgument(
            "blocks, nodes_per_block and feature_dim must be positive".into(),
        ));
    }
    let n = blocks * nodes_per_block;
    let mut edge_rng = rng.fork(1);
    let mut feat_rng = rng.fork(2);
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let same = a / nodes_per_block == b / nodes_per_block;
            let p = if same { p_in } else { p_out };
            if edge_rng.uniform() < p {
                pairs.push((a, b));
            }
        }
    }
    let mut features = DenseMatrix::zeros(n, feature_dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let block = i / nodes_per_block;
        labels.push(block);
        for c in 0..feature_dim {
            let mean = if c == block % feature_dim {
                feature_shift
            } else if c < blocks && c < feature_dim {
                -feature_shift
            } else {
                0.0
            };
            features.set(i, c, mean + feat_rng.normal());
        }
    }
    Graph::new(n, &pairs, features, labels, blocks)
}
