use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hsw::{ncut_partition, ncut_value, HswConfig, SimilarityGraph};
use crate::mst::{boruvka_mst, kruskal_mst, Edge};
use crate::oracle;
use crate::patchgrid::{
    extract_deformed_patches, pool_fixed_patches, predict_deformation, DeformationWeights, FeatureMap,
    PatchGridConfig,
};
use crate::ssm::{tree_scan, tree_scan_bruteforce, tree_scan_unweakened, ScanOptions, SsmParams};

pub const TREE_NODES_CAP: usize = 64;
pub const NCUT_NODES_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Mst,
    TreeScan,
    Chain,
    Root,
    Ncut,
    Suppression,
    Deform,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Mst,
        Suite::TreeScan,
        Suite::Chain,
        Suite::Root,
        Suite::Ncut,
        Suite::Suppression,
        Suite::Deform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Mst => "mst",
            Suite::TreeScan => "tree-scan",
            Suite::Chain => "chain",
            Suite::Root => "root",
            Suite::Ncut => "ncut",
            Suite::Suppression => "suppression",
            Suite::Deform => "deform",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            Suite::Mst => 1e-12,
            Suite::TreeScan | Suite::Root => 1e-9,
            Suite::Chain | Suite::Suppression => 1e-10,
            Suite::Ncut => 0.05,
            Suite::Deform => 1e-12,
        }
    }

    fn trials(self) -> u64 {
        match self {
            Suite::Mst | Suite::Ncut | Suite::Deform => 100,
            Suite::TreeScan => 200,
            Suite::Chain | Suite::Root | Suite::Suppression => 50,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SelfcheckOptions {
    pub seed: u64,
    pub tolerance: Option<f64>,
    pub tree_nodes: usize,
    pub ncut_nodes: usize,
}

impl Default for SelfcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tolerance: None,
            tree_nodes: TREE_NODES_CAP,
            ncut_nodes: NCUT_NODES_CAP,
        }
    }
}

impl SelfcheckOptions {
    pub fn check(&self) -> Result<()> {
        if !(1..=TREE_NODES_CAP).contains(&self.tree_nodes) {
            return Err(Error::Config(format!("tree nodes must be in 1..={TREE_NODES_CAP}")));
        }
        if !(2..=NCUT_NODES_CAP).contains(&self.ncut_nodes) {
            return Err(Error::Config(format!("ncut nodes must be in 2..={NCUT_NODES_CAP}")));
        }
        if let Some(t) = self.tolerance {
            if !(t >= 0.0) {
                return Err(Error::Config(format!("tolerance {t} must be non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub suite: Suite,
    pub trials: u64,
    pub max_error: f64,
    pub worst_seed: u64,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

/// Runs one suite. Trial `t` uses seed `opts.seed + t`.
pub fn run_suite(suite: Suite, opts: &SelfcheckOptions) -> Result<SuiteResult> {
    opts.check()?;
    let mut result = SuiteResult {
        suite,
        trials: suite.trials(),
        max_error: 0.0,
        worst_seed: opts.seed,
        tolerance: opts.tolerance.unwrap_or(suite.default_tolerance()),
    };
    for t in 0..suite.trials() {
        let seed = opts.seed.wrapping_add(t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let err = match suite {
            Suite::Mst => mst_trial(&mut rng)?,
            Suite::TreeScan => tree_scan_trial(&mut rng, opts.tree_nodes)?,
            Suite::Chain => chain_trial(&mut rng, opts.tree_nodes)?,
            Suite::Root => root_trial(&mut rng, opts.tree_nodes)?,
            Suite::Ncut => ncut_trial(&mut rng, opts.ncut_nodes, t == 0)?,
            Suite::Suppression => suppression_trial(&mut rng, opts.tree_nodes)?,
            Suite::Deform => deform_trial(&mut rng)?,
        };
        // NaN counts as the worst possible error.
        if !(err <= result.max_error) {
            result.max_error = if err.is_nan() { f64::INFINITY } else { err };
            result.worst_seed = seed;
        }
    }
    Ok(result)
}

/// Relative total-weight gap between Borůvka and Kruskal; infinite if the
/// edge sets differ.
fn mst_trial(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (rows, cols) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
    let graph = oracle::random_deformed_lattice(rng, rows, cols)?;
    let (b, k) = (boruvka_mst(&graph)?, kruskal_mst(&graph)?);
    if b.edge_set() != k.edge_set() {
        return Ok(f64::INFINITY);
    }
    let (wb, wk) = (b.total_weight(), k.total_weight());
    Ok((wb - wk).abs() / wk.abs().max(f64::MIN_POSITIVE))
}

struct ScanFixture {
    tree: crate::mst::SpanningTree,
    features: Vec<Vec<f64>>,
    params: SsmParams,
    phi: Vec<f64>,
}

fn scan_fixture(rng: &mut ChaCha8Rng, max_nodes: usize) -> Result<ScanFixture> {
    let n = rng.gen_range(1..=max_nodes);
    let (d, ns) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
    let root = rng.gen_range(0..n);
    Ok(ScanFixture {
        tree: oracle::random_tree(rng, n, root)?,
        features: oracle::random_features(rng, n, d),
        params: SsmParams::random(rng, d, ns),
        phi: (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect(),
    })
}

fn scan_diff(a: &crate::ssm::ScanOutput, b: &crate::ssm::ScanOutput) -> f64 {
    oracle::max_abs_diff(&a.hidden, &b.hidden).max(a.max_abs_diff(b))
}

fn tree_scan_trial(rng: &mut ChaCha8Rng, max_nodes: usize) -> Result<f64> {
    let f = scan_fixture(rng, max_nodes)?;
    let opts = ScanOptions::default();
    let fast = tree_scan(&f.tree, &f.features, &f.params, &f.phi, opts)?;
    let slow = tree_scan_bruteforce(&f.tree, &f.features, &f.params, &f.phi, opts)?;
    Ok(scan_diff(&fast, &slow))
}

fn chain_trial(rng: &mut ChaCha8Rng, max_nodes: usize) -> Result<f64> {
    let len = rng.gen_range(1..=max_nodes);
    let (d, ns) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
    let tree = oracle::path_tree(len, rng.gen_range(0..len))?;
    let features = oracle::random_features(rng, len, d);
    let params = SsmParams::random(rng, d, ns);
    let opts = ScanOptions {
        normalize_hidden: false,
    };
    let scan = tree_scan_unweakened(&tree, &features, &params, opts)?;
    let reference = oracle::bidirectional_chain_hidden(&features, &params)?;
    Ok(oracle::max_abs_diff(&scan.hidden, &reference))
}

fn root_trial(rng: &mut ChaCha8Rng, max_nodes: usize) -> Result<f64> {
    let f = scan_fixture(rng, max_nodes)?;
    let other = f.tree.reroot(rng.gen_range(0..f.tree.node_count()))?;
    let opts = ScanOptions::default();
    let a = tree_scan(&f.tree, &f.features, &f.params, &f.phi, opts)?;
    let b = tree_scan(&other, &f.features, &f.params, &f.phi, opts)?;
    Ok(scan_diff(&a, &b))
}

/// Relative gap to the exhaustive optimum; infinite if some single-edge cut
/// beats the returned partition. The first trial is the three-node hand case.
fn ncut_trial(rng: &mut ChaCha8Rng, max_nodes: usize, hand_case: bool) -> Result<f64> {
    let sim = if hand_case {
        SimilarityGraph::new(3, &[Edge::new(0, 1, 1.0), Edge::new(1, 2, 0.1)])?
    } else {
        let n = rng.gen_range(2..=max_nodes);
        oracle::random_similarity(rng, n)?
    };
    let p = ncut_partition(&sim, &HswConfig::default())?;
    for e in sim.edges() {
        let mask = sim_side(&sim, e);
        if ncut_value(&mask, &sim)? < p.ncut_value {
            return Ok(f64::INFINITY);
        }
    }
    let (_, best) = oracle::exhaustive_ncut(&sim)?;
    Ok((p.ncut_value - best) / best)
}

/// Nodes on `e.a`'s side once `e` is removed.
fn sim_side(sim: &SimilarityGraph, e: &Edge) -> Vec<bool> {
    let n = sim.node_count();
    let mut adj = vec![Vec::new(); n];
    for f in sim.edges() {
        if (f.a, f.b) != (e.a, e.b) {
            adj[f.a].push(f.b);
            adj[f.b].push(f.a);
        }
    }
    let mut side = vec![false; n];
    let mut stack = vec![e.a];
    side[e.a] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !side[v] {
                side[v] = true;
                stack.push(v);
            }
        }
    }
    side
}

/// Midpoint defect of node `j`'s contribution at `φ_j ∈ {0, ½, 1}`, plus any
/// bit difference between `φ ≡ 1` and the unweakened scan.
fn suppression_trial(rng: &mut ChaCha8Rng, max_nodes: usize) -> Result<f64> {
    let mut f = scan_fixture(rng, max_nodes)?;
    let opts = ScanOptions {
        normalize_hidden: false,
    };
    let j = rng.gen_range(0..f.tree.node_count());
    let mut run = |v: f64| {
        f.phi[j] = v;
        tree_scan(&f.tree, &f.features, &f.params, &f.phi, opts)
    };
    let (h0, h_half, h1) = (run(0.0)?, run(0.5)?, run(1.0)?);
    let mut err: f64 = 0.0;
    for t in 0..h0.hidden.len() {
        err = err.max((h_half.hidden[t] - 0.5 * (h0.hidden[t] + h1.hidden[t])).abs());
    }
    let ones = vec![1.0; f.tree.node_count()];
    for normalize_hidden in [false, true] {
        let o = ScanOptions { normalize_hidden };
        let weak = tree_scan(&f.tree, &f.features, &f.params, &ones, o)?;
        let plain = tree_scan_unweakened(&f.tree, &f.features, &f.params, o)?;
        if weak.hidden != plain.hidden || weak.output != plain.output {
            return Ok(f64::INFINITY);
        }
    }
    Ok(err)
}

/// Identity weights against fixed pooling, with the sample lattice on the
/// cell centers, plus clamp violations under large random weights
/// (infinite error).
fn deform_trial(rng: &mut ChaCha8Rng) -> Result<f64> {
    let pitch = rng.gen_range(1..=4);
    let (rows, cols, c) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=6));
    let fmap = FeatureMap::random(rng, rows * pitch, cols * pitch, c);
    let grid = PatchGridConfig::for_map(&fmap, pitch, pitch)?;

    let wild = DeformationWeights::random(rng, c, 1e3);
    if !predict_deformation(&fmap, &grid, &wild)?.patches.iter().all(|d| d.in_range()) {
        return Ok(f64::INFINITY);
    }

    let field = predict_deformation(&fmap, &grid, &DeformationWeights::identity(c))?;
    let deformed = extract_deformed_patches(&fmap, &grid, &field)?;
    let fixed = pool_fixed_patches(&fmap, &grid)?;
    let mut err: f64 = 0.0;
    for (a, b) in deformed.iter().zip(&fixed) {
        err = err.max(oracle::max_abs_diff(&a.feature, &b.feature));
        err = err.max((a.center.0 - b.center.0).abs()).max((a.center.1 - b.center.1).abs());
    }
    Ok(err)
}
