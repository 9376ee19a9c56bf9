//! Slow, independent reference computations and random fixtures. Used by the
//! `selfcheck` command and the test suites.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hsw::{ncut_value, SimilarityGraph};
use crate::mst::{build_lattice, Edge, EdgeWeightConfig, LatticeGraph, SpanningTree};
use crate::patchgrid::{
    extract_deformed_patches, predict_deformation, DeformationWeights, FeatureMap, PatchGridConfig,
};
use crate::ssm::{discretize_zoh, sequential_scan, ScanOutput, SsmParams};

/// Largest graph the exhaustive search accepts.
pub const EXHAUSTIVE_MAX_NODES: usize = 20;

/// Minimum Ncut over every bipartition with both sides nonempty. Node 0 is
/// pinned to the first side; ties keep the lowest bitmask.
pub fn exhaustive_ncut(sim: &SimilarityGraph) -> Result<(Vec<bool>, f64)> {
    let n = sim.node_count();
    if !(2..=EXHAUSTIVE_MAX_NODES).contains(&n) {
        return Err(Error::Argument(format!(
            "exhaustive search needs 2..={EXHAUSTIVE_MAX_NODES} nodes, got {n}"
        )));
    }
    let mut best: Option<(Vec<bool>, f64)> = None;
    // bit k set: node k + 1 joins node 0
    for bits in 0u32..(1 << (n - 1)) - 1 {
        let mut mask = vec![true; n];
        for (k, m) in mask.iter_mut().skip(1).enumerate() {
            *m = bits >> k & 1 == 1;
        }
        let value = ncut_value(&mask, sim)?;
        if best.as_ref().map_or(true, |(_, b)| value < *b) {
            best = Some((mask, value));
        }
    }
    Ok(best.expect("n ≥ 2 gives at least one bipartition"))
}

/// Hidden states of the causal scan written as an explicit sum,
/// `h_i = Σ_{j ≤ i} (Π_{j < k ≤ i} Ā_k) B̄_j x_j`, with no recurrence.
pub fn unrolled_sequential_hidden(features: &[Vec<f64>], params: &SsmParams) -> Result<Vec<f64>> {
    let steps = features
        .iter()
        .map(|x| discretize_zoh(params, x))
        .collect::<Result<Vec<_>>>()?;
    let (dn, ns) = (params.channels, params.state_size);
    let k = dn * ns;
    let mut hidden = vec![0.0; features.len() * k];
    for i in 0..features.len() {
        for j in 0..=i {
            for t in 0..k {
                let decay: f64 = (j + 1..=i).map(|m| steps[m].abar[t]).product();
                hidden[i * k + t] += decay * steps[j].bbar[t] * features[j][t / ns];
            }
        }
    }
    Ok(hidden)
}

/// Hidden states of an unsuppressed tree scan on the path `0 − 1 − … − L−1`,
/// assembled from two causal scans: the forward scan, the scan of the
/// reversed sequence mapped back, minus the node's own source counted twice.
pub fn bidirectional_chain_hidden(features: &[Vec<f64>], params: &SsmParams) -> Result<Vec<f64>> {
    let forward = sequential_scan(features, params)?;
    let reversed: Vec<Vec<f64>> = features.iter().rev().cloned().collect();
    let backward = sequential_scan(&reversed, params)?;
    let (len, ns) = (features.len(), params.state_size);
    let k = params.channels * ns;
    let mut hidden = vec![0.0; len * k];
    for i in 0..len {
        let step = discretize_zoh(params, &features[i])?;
        let back = backward.hidden(len - 1 - i);
        for t in 0..k {
            let own = step.bbar[t] * features[i][t / ns];
            hidden[i * k + t] = forward.hidden(i)[t] + back[t] - own;
        }
    }
    Ok(hidden)
}

/// Largest absolute elementwise difference; infinite on length mismatch.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Hidden-state difference between two scan results.
pub fn hidden_diff(a: &ScanOutput, b: &ScanOutput) -> f64 {
    max_abs_diff(&a.hidden, &b.hidden)
}

/// Random labelled tree: each node attaches to a uniformly chosen earlier
/// node of a random permutation. Weights are uniform in `[0, 1)`.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, node_count: usize, root: usize) -> Result<SpanningTree> {
    let mut perm: Vec<usize> = (0..node_count).collect();
    perm.shuffle(rng);
    let edges: Vec<Edge> = (1..node_count)
        .map(|i| Edge::new(perm[i], perm[rng.gen_range(0..i)], rng.gen::<f64>()))
        .collect();
    SpanningTree::from_edges(node_count, &edges, root)
}

/// Path `0 − 1 − … − n−1` rooted at `root`.
pub fn path_tree(node_count: usize, root: usize) -> Result<SpanningTree> {
    let edges: Vec<Edge> = (1..node_count).map(|i| Edge::new(i - 1, i, 1.0)).collect();
    SpanningTree::from_edges(node_count, &edges, root)
}

/// Tree-shaped similarity graph with similarities uniform in `[0.05, 1]`.
pub fn random_similarity<R: Rng + ?Sized>(rng: &mut R, node_count: usize) -> Result<SimilarityGraph> {
    let tree = random_tree(rng, node_count, 0)?;
    let edges: Vec<Edge> = tree
        .edges()
        .iter()
        .map(|e| Edge::new(e.a, e.b, rng.gen_range(0.05..=1.0)))
        .collect();
    SimilarityGraph::new(node_count, &edges)
}

/// Grid lattice with i.i.d. uniform weights; distinct with probability one.
pub fn random_lattice<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Result<LatticeGraph> {
    LatticeGraph::grid(rows, cols, |_, _| rng.gen::<f64>())
}

/// Lattice weighted from deformed patches of a random feature map: random
/// pitch in `1..=3`, four channels, deformation weights uniform in `±1`,
/// `alpha` uniform in `[0, 1]`.
pub fn random_deformed_lattice<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Result<LatticeGraph> {
    let pitch = rng.gen_range(1..=3);
    let fmap = FeatureMap::random(rng, rows * pitch, cols * pitch, 4);
    let grid = PatchGridConfig::for_map(&fmap, pitch, 2)?;
    let weights = DeformationWeights::random(rng, 4, 1.0);
    let field = predict_deformation(&fmap, &grid, &weights)?;
    let nodes = extract_deformed_patches(&fmap, &grid, &field)?;
    let cfg = EdgeWeightConfig::new(rng.gen_range(0.0..=1.0), pitch as f64)?;
    build_lattice(&nodes, rows, cols, &cfg)
}

pub fn random_features<R: Rng + ?Sized>(rng: &mut R, count: usize, channels: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..channels).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}
