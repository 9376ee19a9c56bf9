//! Foreground/background partitioning of the spanning tree by normalized cut
//! and the per-node suppression weights derived from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mst::{Edge, SpanningTree};
use crate::spectral::{argmax_abs, jacobi_eigen, normalize_sign};

/// Above this many nodes the Fiedler vector comes from inverse iteration on
/// the tree instead of a dense Jacobi decomposition.
pub const JACOBI_MAX_NODES: usize = 128;

/// Tree-shaped similarity graph; `Edge::weight` holds the similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    tree: SpanningTree,
    degree: Vec<f64>,
}

impl SimilarityGraph {
    /// Wraps explicit similarities. The edges must form a spanning tree and
    /// every similarity must be positive and finite.
    pub fn new(node_count: usize, edges: &[Edge]) -> Result<Self> {
        if let Some(e) = edges.iter().find(|e| !(e.weight > 0.0 && e.weight.is_finite())) {
            return Err(Error::Argument(format!(
                "similarity of ({}, {}) is {}",
                e.a, e.b, e.weight
            )));
        }
        let tree = SpanningTree::from_edges(node_count, edges, 0)?;
        let mut degree = vec![0.0; node_count];
        for e in tree.edges() {
            degree[e.a] += e.weight;
            degree[e.b] += e.weight;
        }
        Ok(Self { tree, degree })
    }

    pub fn node_count(&self) -> usize {
        self.tree.node_count()
    }

    pub fn edges(&self) -> &[Edge] {
        self.tree.edges()
    }

    /// Total incident similarity per node.
    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    /// Every similarity multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let edges: Vec<Edge> = self
            .edges()
            .iter()
            .map(|e| Edge::new(e.a, e.b, e.weight * factor))
            .collect();
        Self::new(self.node_count(), &edges)
    }

    fn laplacian_apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for e in self.edges() {
            let flow = e.weight * (x[e.a] - x[e.b]);
            out[e.a] += flow;
            out[e.b] -= flow;
        }
    }
}

/// `s = exp(−w)` on every tree edge.
pub fn tree_similarity(tree: &SpanningTree) -> Result<SimilarityGraph> {
    let edges: Vec<Edge> = tree
        .edges()
        .iter()
        .map(|e| Edge::new(e.a, e.b, (-e.weight).exp()))
        .collect();
    SimilarityGraph::new(tree.node_count(), &edges)
}

/// `s = exp(−(w − w_min) / σ)` with `σ` the standard deviation of the tree
/// edge weights. Falls back to `σ = 1` when the weights are (numerically)
/// constant. Similarities stay in `(0, 1]`.
pub fn tree_similarity_self_tuned(tree: &SpanningTree) -> Result<SimilarityGraph> {
    let sigma = self_tuned_bandwidth(tree.edges());
    let w_min = tree.edges().iter().map(|e| e.weight).fold(f64::INFINITY, f64::min);
    let edges: Vec<Edge> = tree
        .edges()
        .iter()
        .map(|e| Edge::new(e.a, e.b, (-(e.weight - w_min) / sigma).exp().max(f64::MIN_POSITIVE)))
        .collect();
    SimilarityGraph::new(tree.node_count(), &edges)
}

/// Population standard deviation of the edge weights, or 1 if that is not
/// resolvable against the weights' magnitude.
pub fn self_tuned_bandwidth(edges: &[Edge]) -> f64 {
    if edges.is_empty() {
        return 1.0;
    }
    let n = edges.len() as f64;
    let mean = edges.iter().map(|e| e.weight).sum::<f64>() / n;
    let var = edges.iter().map(|e| (e.weight - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd.is_finite() && sd > 1e-9 * (1.0 + mean.abs()) {
        sd
    } else {
        1.0
    }
}

/// How MST dissimilarities become Ncut similarities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKernel {
    /// `exp(−w)`.
    Unit,
    /// `exp(−(w − w_min) / σ)`, see [`tree_similarity_self_tuned`].
    #[default]
    SelfTuned,
}

impl SimilarityKernel {
    pub fn similarity(self, tree: &SpanningTree) -> Result<SimilarityGraph> {
        match self {
            Self::Unit => tree_similarity(tree),
            Self::SelfTuned => tree_similarity_self_tuned(tree),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutMethod {
    SpectralSweep,
    EdgeCut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// `true` marks the foreground side.
    pub mask: Vec<bool>,
    pub ncut_value: f64,
    pub method: CutMethod,
}

impl Partition {
    pub fn foreground_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }
}

/// `cut/vol(A) + cut/vol(B)`; `+∞` when a side has zero volume.
pub fn ncut_value(mask: &[bool], sim: &SimilarityGraph) -> Result<f64> {
    if mask.len() != sim.node_count() {
        return Err(Error::Argument(format!(
            "mask has {} entries for {} nodes",
            mask.len(),
            sim.node_count()
        )));
    }
    let inside = mask.iter().filter(|&&m| m).count();
    if inside == 0 || inside == mask.len() {
        return Err(Error::Argument("both sides of a cut must be nonempty".into()));
    }
    let cut: f64 = sim
        .edges()
        .iter()
        .filter(|e| mask[e.a] != mask[e.b])
        .map(|e| e.weight)
        .sum();
    let (mut vol_a, mut vol_b) = (0.0, 0.0);
    for (&m, &d) in mask.iter().zip(sim.degrees()) {
        if m {
            vol_a += d;
        } else {
            vol_b += d;
        }
    }
    if vol_a <= 0.0 || vol_b <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(cut / vol_a + cut / vol_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HswConfig {
    pub background_phi: f64,
    pub eig_tol: f64,
    pub eig_max_iter: usize,
    pub kernel: SimilarityKernel,
}

impl Default for HswConfig {
    fn default() -> Self {
        Self {
            background_phi: 0.7,
            eig_tol: 1e-10,
            eig_max_iter: 10_000,
            kernel: SimilarityKernel::SelfTuned,
        }
    }
}

impl HswConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.background_phi > 0.0 && self.background_phi < 1.0) {
            return Err(Error::Config(format!(
                "background_phi {} outside (0, 1)",
                self.background_phi
            )));
        }
        if !(self.eig_tol > 0.0) {
            return Err(Error::Config("eig_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Unit eigenvector of the second-smallest eigenvalue of the symmetric
/// normalized Laplacian `I − D^{-1/2} S D^{-1/2}`, sign-normalized.
pub fn fiedler_vector(sim: &SimilarityGraph, cfg: &HswConfig) -> Result<Vec<f64>> {
    let n = sim.node_count();
    if n < 2 {
        return Err(Error::Argument("Fiedler vector needs at least two nodes".into()));
    }
    if n <= JACOBI_MAX_NODES {
        fiedler_jacobi(sim, cfg)
    } else {
        fiedler_tree_inverse_iteration(sim, cfg)
    }
}

pub fn fiedler_jacobi(sim: &SimilarityGraph, cfg: &HswConfig) -> Result<Vec<f64>> {
    let n = sim.node_count();
    let inv_sqrt: Vec<f64> = sim.degrees().iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut lap = vec![0.0; n * n];
    for i in 0..n {
        lap[i * n + i] = 1.0;
    }
    for e in sim.edges() {
        let v = -e.weight * inv_sqrt[e.a] * inv_sqrt[e.b];
        lap[e.a * n + e.b] = v;
        lap[e.b * n + e.a] = v;
    }
    let eig = jacobi_eigen(&lap, n, cfg.eig_tol, cfg.eig_max_iter)?;
    Ok(eig.vectors.into_iter().nth(1).expect("n >= 2"))
}

/// Inverse iteration for `(D − S) x = λ D x` restricted to `x ⊥_D 1`.
///
/// On a tree, `(D − S) y = b` with `Σ b = 0` is solved exactly in linear
/// time: the flow across the edge above node `c` equals the sum of `b` over
/// the subtree of `c`, so `y_c = y_parent + flow_c / s_c`. The returned
/// vector is `D^{1/2} x`, the matching eigenvector of the normalized
/// Laplacian.
pub fn fiedler_tree_inverse_iteration(sim: &SimilarityGraph, cfg: &HswConfig) -> Result<Vec<f64>> {
    let n = sim.node_count();
    let tree = &sim.tree;
    let deg = sim.degrees();
    let total: f64 = deg.iter().sum();
    let order = tree.bfs_order();
    let parent = tree.parent();

    let project = |x: &mut Vec<f64>| {
        let mean = x.iter().zip(deg).map(|(v, d)| v * d).sum::<f64>() / total;
        x.iter_mut().for_each(|v| *v -= mean);
        let norm = x.iter().zip(deg).map(|(v, d)| v * v * d).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
    };

    // Fixed, non-symmetric seed vector.
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let h = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11;
            h as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    project(&mut x);

    let mut flow = vec![0.0; n];
    let mut lx = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.eig_max_iter {
        for &i in order.iter().rev() {
            flow[i] = deg[i] * x[i] + tree.children(i).iter().map(|&c| flow[c]).sum::<f64>();
        }
        let mut y = vec![0.0; n];
        for &i in &order[1..] {
            y[i] = y[parent[i]] + flow[i] / tree.parent_weight(i);
        }
        project(&mut y);
        if y.iter().zip(&x).map(|(a, b)| a * b).zip(deg).map(|(p, d)| p * d).sum::<f64>() < 0.0 {
            y.iter_mut().for_each(|v| *v = -*v);
        }
        x = y;

        sim.laplacian_apply(&x, &mut lx);
        let lambda: f64 = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
        residual = lx
            .iter()
            .zip(&x)
            .zip(deg)
            .map(|((l, v), d)| {
                let r = (l - lambda * d * v) / d.sqrt();
                r * r
            })
            .sum::<f64>()
            .sqrt();
        if residual <= cfg.eig_tol {
            let mut u: Vec<f64> = x.iter().zip(deg).map(|(v, d)| v * d.sqrt()).collect();
            normalize_sign(&mut u);
            return Ok(u);
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.eig_max_iter,
        residual,
    })
}

struct Candidate {
    mask: Vec<bool>,
    value: f64,
    min_foreground: usize,
    method: CutMethod,
}

/// Minimum normalized cut over the spectral sweep cuts and every single
/// tree-edge cut. The foreground is the side holding the largest-magnitude
/// entry of the Fiedler vector.
pub fn ncut_partition(sim: &SimilarityGraph, cfg: &HswConfig) -> Result<Partition> {
    let n = sim.node_count();
    if n < 2 {
        return Err(Error::Argument("partition needs at least two nodes".into()));
    }
    let fiedler = fiedler_vector(sim, cfg)?;
    let anchor = argmax_abs(&fiedler);

    let mut best: Option<Candidate> = None;
    let mut consider = |side: Vec<bool>, method: CutMethod| -> Result<()> {
        let mask: Vec<bool> = if side[anchor] {
            side
        } else {
            side.into_iter().map(|s| !s).collect()
        };
        let value = ncut_value(&mask, sim)?;
        let min_foreground = mask.iter().position(|&m| m).expect("nonempty side");
        let better = match &best {
            None => true,
            Some(b) => value < b.value || (value == b.value && min_foreground < b.min_foreground),
        };
        if better {
            best = Some(Candidate {
                mask,
                value,
                min_foreground,
                method,
            });
        }
        Ok(())
    };

    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by(|&a, &b| fiedler[a].total_cmp(&fiedler[b]).then(a.cmp(&b)));
    let mut side = vec![false; n];
    for &node in &sorted[..n - 1] {
        side[node] = true;
        consider(side.clone(), CutMethod::SpectralSweep)?;
    }

    let tree = &sim.tree;
    let mut pre = Vec::with_capacity(n);
    let mut stack = vec![tree.root()];
    while let Some(u) = stack.pop() {
        pre.push(u);
        stack.extend(tree.children(u).iter().rev());
    }
    let mut entry = vec![0; n];
    for (t, &u) in pre.iter().enumerate() {
        entry[u] = t;
    }
    let mut size = vec![1usize; n];
    for &u in pre.iter().rev() {
        for &c in tree.children(u) {
            size[u] += size[c];
        }
    }
    for &c in &pre[1..] {
        let range = entry[c]..entry[c] + size[c];
        let side: Vec<bool> = (0..n).map(|v| range.contains(&entry[v])).collect();
        consider(side, CutMethod::EdgeCut)?;
    }

    let best = best.expect("at least one candidate");
    Ok(Partition {
        mask: best.mask,
        ncut_value: best.value,
        method: best.method,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuppressionWeights {
    pub phi: Vec<f64>,
}

impl SuppressionWeights {
    pub fn ones(count: usize) -> Self {
        Self {
            phi: vec![1.0; count],
        }
    }

    /// `1` on foreground, `background` elsewhere, without range checks.
    pub fn from_mask(mask: &[bool], background: f64) -> Self {
        Self {
            phi: mask.iter().map(|&m| if m { 1.0 } else { background }).collect(),
        }
    }
}

pub fn suppression_weights(mask: &[bool], cfg: &HswConfig) -> Result<SuppressionWeights> {
    cfg.check()?;
    Ok(SuppressionWeights::from_mask(mask, cfg.background_phi))
}

/// Partition plus weights for a whole tree. A single-node tree has no cut,
/// so every weight stays 1.
pub fn hidden_state_weaken(
    tree: &SpanningTree,
    cfg: &HswConfig,
) -> Result<(Option<Partition>, SuppressionWeights)> {
    cfg.check()?;
    if tree.node_count() < 2 {
        return Ok((None, SuppressionWeights::ones(tree.node_count())));
    }
    let sim = cfg.kernel.similarity(tree)?;
    let partition = ncut_partition(&sim, cfg)?;
    let phi = suppression_weights(&partition.mask, cfg)?;
    Ok((Some(partition), phi))
}
