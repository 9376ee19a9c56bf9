use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::REPORT_VERSION;
use crate::error::{Error, Result};
use crate::mst::{boruvka_mst, kruskal_mst};
use crate::oracle;
use crate::ssm::{tree_scan, tree_scan_bruteforce, ScanOptions, SsmParams};

/// From this many nodes on the linear scan must beat the quadratic one.
pub const LINEAR_GATE_NODES: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub nodes: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub tree_scan_ms: f64,
    pub bruteforce_ms: f64,
    /// `bruteforce_ms / tree_scan_ms`.
    pub speedup: f64,
    pub boruvka_ms: f64,
    pub kruskal_ms: f64,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub spec_version: String,
    pub rows: Vec<BenchRow>,
    pub linear_beats_quadratic: bool,
}

/// Comma-separated node counts, each at least 2.
pub fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    let sizes = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .ok()
                .filter(|&n| n >= 2)
                .ok_or_else(|| Error::Config(format!("invalid size {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if sizes.is_empty() {
        return Err(Error::Config("empty size list".into()));
    }
    Ok(sizes)
}

/// Most nearly square `rows × cols = n` with `rows ≤ cols`.
pub fn grid_shape(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt() as usize;
    while rows > 1 && n % rows != 0 {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, n / rows)
}

fn millis<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

/// Times one size: MST construction on a random lattice, then both scans
/// over the resulting tree with one channel and one state.
pub fn bench_size(nodes: usize, seed: u64) -> Result<BenchRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ nodes as u64);
    let (rows, cols) = grid_shape(nodes);
    let graph = oracle::random_lattice(&mut rng, rows, cols)?;
    let (tree, boruvka_ms) = millis(|| boruvka_mst(&graph));
    let tree = tree?;
    let (kruskal, kruskal_ms) = millis(|| kruskal_mst(&graph));
    kruskal?;

    let features = oracle::random_features(&mut rng, nodes, 1);
    let params = SsmParams::random(&mut rng, 1, 1);
    let phi = vec![1.0; nodes];
    let opts = ScanOptions::default();
    let mut tree_scan_ms = f64::INFINITY;
    let mut fast = None;
    for _ in 0..5 {
        let (out, ms) = millis(|| tree_scan(&tree, &features, &params, &phi, opts));
        tree_scan_ms = tree_scan_ms.min(ms);
        fast = Some(out?);
    }
    let fast = fast.expect("at least one repetition");
    let (slow, bruteforce_ms) = millis(|| tree_scan_bruteforce(&tree, &features, &params, &phi, opts));
    let slow = slow?;
    Ok(BenchRow {
        nodes,
        grid_rows: rows,
        grid_cols: cols,
        tree_scan_ms,
        bruteforce_ms,
        speedup: bruteforce_ms / tree_scan_ms.max(1e-9),
        boruvka_ms,
        kruskal_ms,
        max_abs_diff: fast.max_abs_diff(&slow),
    })
}

pub fn run_bench(sizes: &[usize], seed: u64) -> Result<BenchReport> {
    if sizes.is_empty() {
        return Err(Error::Config("empty size list".into()));
    }
    let rows = sizes
        .iter()
        .map(|&n| bench_size(n, seed))
        .collect::<Result<Vec<_>>>()?;
    let linear_beats_quadratic = rows
        .iter()
        .filter(|r| r.nodes >= LINEAR_GATE_NODES)
        .all(|r| r.tree_scan_ms < r.bruteforce_ms);
    Ok(BenchReport {
        spec_version: REPORT_VERSION.to_string(),
        rows,
        linear_beats_quadratic,
    })
}

pub fn render_table(report: &BenchReport) -> String {
    let mut s = format!(
        "{:>7} {:>9} {:>12} {:>13} {:>9} {:>11} {:>11} {:>10}\n",
        "nodes", "grid", "scan ms", "brute ms", "speedup", "boruvka ms", "kruskal ms", "max diff"
    );
    for r in &report.rows {
        s.push_str(&format!(
            "{:>7} {:>9} {:>12.4} {:>13.3} {:>9.1} {:>11.4} {:>11.4} {:>10.2e}\n",
            r.nodes,
            format!("{}x{}", r.grid_rows, r.grid_cols),
            r.tree_scan_ms,
            r.bruteforce_ms,
            r.speedup,
            r.boruvka_ms,
            r.kruskal_ms,
            r.max_abs_diff
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_parsing() {
        assert_eq!(parse_sizes("256, 1024,4096").unwrap(), vec![256, 1024, 4096]);
        assert!(parse_sizes("").is_err());
        assert!(parse_sizes(",").is_err());
        assert!(parse_sizes("1").is_err());
        assert!(parse_sizes("12,x").is_err());
    }

    #[test]
    fn shapes() {
        assert_eq!(grid_shape(256), (16, 16));
        assert_eq!(grid_shape(12), (3, 4));
        assert_eq!(grid_shape(13), (1, 13));
    }

    #[test]
    fn small_bench_agrees() {
        let r = run_bench(&[16, 30], 1).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows.iter().all(|row| row.max_abs_diff < 1e-9));
        assert!(r.linear_beats_quadratic);
    }
}
