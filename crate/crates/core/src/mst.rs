//! 4-connected patch lattice, hybrid spatial/semantic edge weights and
//! minimum spanning trees (contractive Borůvka plus a Kruskal reference).

use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patchgrid::PatchNode;

/// Undirected weighted edge with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(i: usize, j: usize, weight: f64) -> Self {
        Self {
            a: i.min(j),
            b: i.max(j),
            weight,
        }
    }

    /// Strict total order `(weight, a, b)` used by both MST routines.
    pub fn order(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }

    pub fn other(&self, node: usize) -> usize {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGraph {
    node_count: usize,
    edges: Vec<Edge>,
    /// Per node: `(neighbor, edge index)` sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl LatticeGraph {
    /// Builds a graph from an explicit edge list. Rejects self-loops,
    /// duplicate pairs, out-of-range endpoints and negative or non-finite
    /// weights.
    pub fn from_edges(node_count: usize, edges: Vec<Edge>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Argument("graph needs at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); node_count];
        for (k, e) in edges.iter().enumerate() {
            if e.a >= e.b || e.b >= node_count {
                return Err(Error::Argument(format!("invalid edge ({}, {})", e.a, e.b)));
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(Error::Argument(format!(
                    "edge ({}, {}) has weight {}",
                    e.a, e.b, e.weight
                )));
            }
            if !seen.insert((e.a, e.b)) {
                return Err(Error::Argument(format!("duplicate edge ({}, {})", e.a, e.b)));
            }
            adjacency[e.a].push((e.b, k));
            adjacency[e.b].push((e.a, k));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges,
            adjacency,
        })
    }

    /// Row-major `rows × cols` grid, horizontal edges first in each row.
    pub fn grid(rows: usize, cols: usize, mut weight: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut edges = Vec::with_capacity(lattice_edge_count(rows, cols));
        for r in 0..rows {
            for c in 0..cols {
                let id = r * cols + c;
                if c + 1 < cols {
                    edges.push(Edge::new(id, id + 1, weight(id, id + 1)));
                }
                if r + 1 < rows {
                    edges.push(Edge::new(id, id + cols, weight(id, id + cols)));
                }
            }
        }
        Self::from_edges(rows * cols, edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }
}

pub fn lattice_edge_count(rows: usize, cols: usize) -> usize {
    rows * cols.saturating_sub(1) + cols * rows.saturating_sub(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeightConfig {
    pub alpha: f64,
    pub distance_normalizer: f64,
}

impl EdgeWeightConfig {
    pub fn new(alpha: f64, distance_normalizer: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            distance_normalizer,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.distance_normalizer > 0.0 && self.distance_normalizer.is_finite()) {
            return Err(Error::Config(format!(
                "distance normalizer {} must be positive",
                self.distance_normalizer
            )));
        }
        Ok(())
    }
}

impl Default for EdgeWeightConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            distance_normalizer: 1.0,
        }
    }
}

/// Cosine similarity, defined as 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

/// `alpha · |c_a − c_b| / normalizer + (1 − alpha) · (1 − cos(f_a, f_b))`.
pub fn edge_dissimilarity(a: &PatchNode, b: &PatchNode, cfg: &EdgeWeightConfig) -> f64 {
    let dist = (a.center.0 - b.center.0).hypot(a.center.1 - b.center.1);
    cfg.alpha * (dist / cfg.distance_normalizer)
        + (1.0 - cfg.alpha) * (1.0 - cosine(&a.feature, &b.feature))
}

pub fn build_lattice(
    nodes: &[PatchNode],
    rows: usize,
    cols: usize,
    cfg: &EdgeWeightConfig,
) -> Result<LatticeGraph> {
    cfg.check()?;
    if nodes.len() != rows * cols {
        return Err(Error::Config(format!(
            "{} patch nodes for a {rows}x{cols} grid",
            nodes.len()
        )));
    }
    LatticeGraph::grid(rows, cols, |i, j| edge_dissimilarity(&nodes[i], &nodes[j], cfg))
}

/// Rooted spanning tree with parent pointers, child lists and a BFS order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    node_count: usize,
    root: usize,
    parent: Vec<usize>,
    /// Weight of the edge to the parent; 0 for the root.
    parent_weight: Vec<f64>,
    children: Vec<Vec<usize>>,
    /// Sorted by `(a, b)`.
    tree_edges: Vec<Edge>,
    /// Breadth-first order from the root; parents precede children.
    order: Vec<usize>,
}

impl SpanningTree {
    /// Roots an undirected edge list at `root`, checking that it is a tree
    /// spanning all `node_count` nodes (`n - 1` edges plus connectivity).
    pub fn from_edges(node_count: usize, edges: &[Edge], root: usize) -> Result<Self> {
        if node_count == 0 || root >= node_count {
            return Err(Error::Tree(format!(
                "root {root} invalid for {node_count} nodes"
            )));
        }
        if edges.len() + 1 != node_count {
            return Err(Error::Tree(format!(
                "{} edges cannot span {node_count} nodes",
                edges.len()
            )));
        }
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); node_count];
        for e in edges {
            if e.a == e.b || e.a >= node_count || e.b >= node_count {
                return Err(Error::Tree(format!("invalid edge ({}, {})", e.a, e.b)));
            }
            adjacency[e.a].push((e.b, e.weight));
            adjacency[e.b].push((e.a, e.weight));
        }
        for list in &mut adjacency {
            list.sort_by(|x, y| x.0.cmp(&y.0));
        }

        let mut parent = vec![usize::MAX; node_count];
        let mut parent_weight = vec![0.0; node_count];
        let mut children = vec![Vec::new(); node_count];
        let mut order = Vec::with_capacity(node_count);
        let mut queue = VecDeque::from([root]);
        parent[root] = root;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(v, w) in &adjacency[u] {
                if parent[v] == usize::MAX {
                    parent[v] = u;
                    parent_weight[v] = w;
                    children[u].push(v);
                    queue.push_back(v);
                }
            }
        }
        if let Some(unreached) = parent.iter().position(|&p| p == usize::MAX) {
            return Err(Error::Disconnected { unreached });
        }

        let mut tree_edges: Vec<Edge> = edges.iter().map(|e| Edge::new(e.a, e.b, e.weight)).collect();
        tree_edges.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
        Ok(Self {
            node_count,
            root,
            parent,
            parent_weight,
            children,
            tree_edges,
            order,
        })
    }

    /// Same undirected tree rooted elsewhere.
    pub fn reroot(&self, root: usize) -> Result<Self> {
        Self::from_edges(self.node_count, &self.tree_edges, root)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self) -> &[usize] {
        &self.parent
    }

    pub fn parent_weight(&self, node: usize) -> f64 {
        self.parent_weight[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.tree_edges
    }

    pub fn bfs_order(&self) -> &[usize] {
        &self.order
    }

    pub fn total_weight(&self) -> f64 {
        self.tree_edges.iter().map(|e| e.weight).sum()
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.tree_edges.iter().map(|e| (e.a, e.b)).collect()
    }

    /// Distance in edges from the root, per node.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.node_count];
        for &u in &self.order[1..] {
            depth[u] = depth[self.parent[u]] + 1;
        }
        depth
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

fn first_unreached(sets: &mut DisjointSets, n: usize) -> usize {
    let root = sets.find(0);
    (0..n).find(|&v| sets.find(v) != root).unwrap_or(0)
}

/// Contractive Borůvka: every round each component picks its cheapest
/// outgoing edge, the picks are merged, and edges internal to a merged
/// component are dropped from the working set.
pub fn boruvka_mst(graph: &LatticeGraph) -> Result<SpanningTree> {
    let n = graph.node_count;
    let edges = &graph.edges;
    let mut sets = DisjointSets::new(n);
    let mut live: Vec<usize> = (0..edges.len()).collect();
    let mut chosen: Vec<Edge> = Vec::with_capacity(n.saturating_sub(1));
    let mut components = n;
    let mut cheapest: Vec<Option<usize>> = vec![None; n];

    while components > 1 {
        cheapest.iter_mut().for_each(|c| *c = None);
        for &k in &live {
            let e = &edges[k];
            let (ca, cb) = (sets.find(e.a), sets.find(e.b));
            for comp in [ca, cb] {
                match cheapest[comp] {
                    Some(best) if edges[best].order(e) != Ordering::Greater => {}
                    _ => cheapest[comp] = Some(k),
                }
            }
        }

        let mut merged = false;
        for comp in 0..n {
            if let Some(k) = cheapest[comp] {
                let e = edges[k];
                if sets.union(e.a, e.b) {
                    chosen.push(e);
                    components -= 1;
                    merged = true;
                }
            }
        }
        if !merged {
            return Err(Error::Disconnected {
                unreached: first_unreached(&mut sets, n),
            });
        }
        live.retain(|&k| sets.find(edges[k].a) != sets.find(edges[k].b));
    }
    SpanningTree::from_edges(n, &chosen, 0)
}

/// Sorted-edge Kruskal with union-find; same ordering as [`boruvka_mst`].
pub fn kruskal_mst(graph: &LatticeGraph) -> Result<SpanningTree> {
    let n = graph.node_count;
    let mut sorted: Vec<Edge> = graph.edges.clone();
    sorted.sort_by(|x, y| x.order(y));
    let mut sets = DisjointSets::new(n);
    let mut chosen = Vec::with_capacity(n.saturating_sub(1));
    for e in sorted {
        if sets.union(e.a, e.b) {
            chosen.push(e);
            if chosen.len() + 1 == n {
                break;
            }
        }
    }
    if chosen.len() + 1 != n {
        return Err(Error::Disconnected {
            unreached: first_unreached(&mut sets, n),
        });
    }
    SpanningTree::from_edges(n, &chosen, 0)
}
