//! Command-line front end: `forward`, `selfcheck` and `bench`.
//!
//! Exit codes: 0 success, 1 check failure, 2 input error, 3 config or usage
//! error.

pub mod bench;
pub mod config;
pub mod forward;
pub mod selfcheck;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
use selfcheck::{SelfcheckOptions, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

pub const THREADS_ENV: &str = "TREESCAN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "treescan", version, about = "Dynamic tree-scan state space backbone, forward pass only")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the backbone on a binary PPM image and write mask.ppm, tree.svg
    /// and report.json.
    Forward {
        image: PathBuf,
        /// JSON run configuration; the tiny preset when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the fast paths against slow reference implementations.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated subset of: mst, tree-scan, chain, root, ncut,
        /// suppression, deform.
        #[arg(long, value_delimiter = ',')]
        suites: Option<Vec<String>>,
        /// Replaces every suite's own tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = selfcheck::TREE_NODES_CAP)]
        tree_nodes: usize,
        #[arg(long, default_value_t = selfcheck::NCUT_NODES_CAP)]
        ncut_nodes: usize,
    },
    /// Time the linear tree scan against the quadratic one, and Borůvka
    /// against Kruskal.
    Bench {
        #[arg(long, default_value = "256,1024,4096")]
        sizes: String,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Argument(_) => EXIT_USAGE,
        Error::Ppm(_) | Error::Io(_) | Error::ImageShape(_) => EXIT_INPUT,
        Error::NonFinite { .. } | Error::NoConvergence { .. } | Error::Disconnected { .. } | Error::Tree(_) => {
            EXIT_CHECK_FAILED
        }
    }
}

/// Reads the thread cap from the environment; `0` or unset means automatic.
pub fn thread_cap(value: Option<&str>) -> Result<usize, Error> {
    match value.map(str::trim) {
        None | Some("") => Ok(0),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a non-negative integer"))),
    }
}

fn configure_threads() -> Result<(), Error> {
    let cap = thread_cap(std::env::var(THREADS_ENV).ok().as_deref())?;
    if cap > 0 {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cap).build_global();
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        let _ = writeln!(err, "error: {e}");
        return exit_code(&e);
    }
    let result = match cli.command {
        Command::Forward { image, config, out: dir } => cmd_forward(&image, config.as_deref(), &dir, out),
        Command::Selfcheck {
            seed,
            suites,
            tol,
            tree_nodes,
            ncut_nodes,
        } => {
            let opts = SelfcheckOptions {
                seed,
                tolerance: tol,
                tree_nodes,
                ncut_nodes,
            };
            cmd_selfcheck(suites.as_deref(), &opts, out, err)
        }
        Command::Bench { sizes, json, seed } => cmd_bench(&sizes, json.as_deref(), seed, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_forward(
    image: &std::path::Path,
    config: Option<&std::path::Path>,
    dir: &std::path::Path,
    out: &mut dyn Write,
) -> Result<i32, Error> {
    let cfg = match config {
        Some(p) => config::RunConfig::load(p)?,
        None => config::RunConfig::default(),
    };
    let img = crate::ppm::read(image)?;
    let (artifacts, _) = forward::run_forward(&img, &cfg)?;
    artifacts.write_to(dir)?;
    let m = &artifacts.report.mask;
    let _ = writeln!(
        out,
        "{}x{} image, {} stages, {:.1} ms",
        img.width,
        img.height,
        artifacts.report.stages.len(),
        artifacts.report.timing_ms.total
    );
    let _ = writeln!(
        out,
        "stage 1 mask: {}x{} patches, foreground {:.3}, ncut {}",
        m.patch_rows,
        m.patch_cols,
        m.foreground_fraction,
        m.ncut_value.map_or("n/a".to_string(), |v| format!("{v:.6}"))
    );
    let _ = writeln!(out, "wrote {}", dir.display());
    Ok(EXIT_OK)
}

fn cmd_selfcheck(
    names: Option<&[String]>,
    opts: &SelfcheckOptions,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, Error> {
    let suites: Vec<Suite> = match names {
        None => Suite::ALL.to_vec(),
        Some(names) => {
            let mut suites = names
                .iter()
                .map(|n| Suite::parse(n.trim()).ok_or_else(|| Error::Config(format!("unknown suite {n:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            suites.sort();
            suites.dedup();
            if suites.is_empty() {
                return Err(Error::Config("no suites selected".into()));
            }
            suites
        }
    };
    opts.check()?;
    let mut failed = Vec::new();
    for suite in suites {
        let r = selfcheck::run_suite(suite, opts)?;
        let _ = writeln!(
            out,
            "{:<12} trials {:>4}  max error {:.3e}  tol {:.1e}  {}",
            suite.name(),
            r.trials,
            r.max_error,
            r.tolerance,
            if r.passed() { "ok" } else { "FAIL" }
        );
        if !r.passed() {
            failed.push(r);
        }
    }
    if failed.is_empty() {
        return Ok(EXIT_OK);
    }
    for r in &failed {
        let _ = writeln!(
            err,
            "suite {} failed: worst seed {} (error {:.3e} > {:.1e})",
            r.suite.name(),
            r.worst_seed,
            r.max_error,
            r.tolerance
        );
    }
    Ok(EXIT_CHECK_FAILED)
}

fn cmd_bench(
    sizes: &str,
    json: Option<&std::path::Path>,
    seed: u64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, Error> {
    let sizes = bench::parse_sizes(sizes)?;
    let report = bench::run_bench(&sizes, seed)?;
    let _ = write!(out, "{}", bench::render_table(&report));
    if let Some(path) = json {
        let mut text = serde_json::to_string_pretty(&report).expect("bench report serializes");
        text.push('\n');
        std::fs::write(path, text)?;
    }
    if !report.linear_beats_quadratic {
        let _ = writeln!(
            err,
            "linear tree scan did not beat the quadratic reference at {} nodes or more",
            bench::LINEAR_GATE_NODES
        );
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}
