use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use treescan::ppm;
use treescan::scene::synth_scene;

fn treescan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treescan"))
        .args(args)
        .env_remove("TREESCAN_THREADS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn scene_ppm(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join(format!("scene{seed}.ppm"));
    ppm::write(&path, &synth_scene(seed, 64, 64, 1).unwrap().to_ppm()).unwrap();
    path
}

fn forward(image: &Path, config: Option<&Path>, out: &Path) -> Output {
    let mut args = vec!["forward", image.to_str().unwrap(), "--out", out.to_str().unwrap()];
    if let Some(c) = config {
        args.extend(["--config", c.to_str().unwrap()]);
    }
    treescan(&args)
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

fn report_without_timing(dir: &Path) -> Value {
    let mut v: Value = serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timing_ms");
    v
}

#[test]
fn forward_writes_three_parseable_files() {
    let tmp = TempDir::new().unwrap();
    let image = scene_ppm(tmp.path(), 7);
    let config = tmp.path().join("cfg.json");
    std::fs::write(&config, r#"{"seed": 7, "background_phi": 0.7}"#).unwrap();
    let out = tmp.path().join("out");
    let run = forward(&image, Some(&config), &out);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(listing(&out), ["mask.ppm", "report.json", "tree.svg"]);

    let mask_bytes = std::fs::read(out.join("mask.ppm")).unwrap();
    assert!(mask_bytes.starts_with(b"P6"));
    let mask = image::load_from_memory_with_format(&mask_bytes, image::ImageFormat::Pnm)
        .unwrap()
        .to_rgb8();
    assert_eq!(mask.dimensions(), (64, 64));
    assert!(mask.pixels().all(|p| p.0 == [0, 0, 0] || p.0 == [255, 255, 255]));
    assert!(mask.pixels().any(|p| p.0 == [255, 255, 255]));

    let svg = std::fs::read_to_string(out.join("tree.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let count = |tag: &str| doc.descendants().filter(|n| n.has_tag_name(tag)).count();
    assert_eq!(count("line"), 255);
    assert_eq!(count("circle"), 256);

    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    let report: Value = serde_json::from_str(&text).unwrap();
    let again: Value = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(again, report);
    assert_eq!(report["spec_version"], "1.0.0");
    assert_eq!(report["image"]["width"], 64);
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["mask"]["patch_rows"], 16);
    assert_eq!(report["stages"].as_array().unwrap().len(), 4);
    assert_eq!(report["timing_ms"]["stages"].as_array().unwrap().len(), 4);
    for stage in report["stages"].as_array().unwrap() {
        assert_eq!(stage["sha256"].as_str().unwrap().len(), 64);
        for block in stage["blocks"].as_array().unwrap() {
            assert!(block["mst_total_weight"].as_f64().unwrap() >= 0.0);
            assert!(block["foreground_fraction"].as_f64().unwrap() > 0.0);
        }
    }
    let fg = report["mask"]["foreground_fraction"].as_f64().unwrap();
    assert!(fg > 0.0 && fg < 1.0);
    assert_eq!(
        report["artifacts"]["mask_sha256"],
        treescan::cli::forward::sha256_hex(&mask_bytes)
    );
}

#[test]
fn forward_reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let image = scene_ppm(tmp.path(), 3);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&forward(&image, None, &a)), 0);
    assert_eq!(code(&forward(&image, None, &b)), 0);
    for f in ["mask.ppm", "tree.svg"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    assert_eq!(report_without_timing(&a), report_without_timing(&b));
}

#[test]
fn forward_thread_count_does_not_change_outputs() {
    let tmp = TempDir::new().unwrap();
    let image = scene_ppm(tmp.path(), 4);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&forward(&image, None, &a)), 0);
    let single = Command::new(env!("CARGO_BIN_EXE_treescan"))
        .args(["forward", image.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .env("TREESCAN_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&single), 0);
    assert_eq!(report_without_timing(&a), report_without_timing(&b));
}

#[test]
fn forward_input_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let truncated = tmp.path().join("t.ppm");
    std::fs::write(&truncated, b"P6\n64 ").unwrap();
    let run = forward(&truncated, None, &out);
    assert_eq!(code(&run), 2);
    assert!(!run.stderr.is_empty());

    let short = tmp.path().join("s.ppm");
    std::fs::write(&short, b"P6\n4 4\n255\n\x00\x01").unwrap();
    assert_eq!(code(&forward(&short, None, &out)), 2);

    let ascii = tmp.path().join("a.ppm");
    std::fs::write(&ascii, b"P3\n1 1\n255\n0 0 0\n").unwrap();
    assert_eq!(code(&forward(&ascii, None, &out)), 2);

    assert_eq!(code(&forward(&tmp.path().join("missing.ppm"), None, &out)), 2);

    let odd = tmp.path().join("odd.ppm");
    ppm::write(&odd, &synth_scene(1, 60, 64, 1).unwrap().to_ppm()).unwrap();
    assert_eq!(code(&forward(&odd, None, &out)), 2);
}

#[test]
fn forward_config_errors_exit_three() {
    let tmp = TempDir::new().unwrap();
    let image = scene_ppm(tmp.path(), 1);
    let out = tmp.path().join("out");
    for (name, body) in [
        ("alpha", r#"{"alpha": 1.5}"#),
        ("phi", r#"{"background_phi": 1.0}"#),
        ("unknown", r#"{"sed": 1}"#),
        ("syntax", "{"),
        ("stages", r#"{"stages": []}"#),
    ] {
        let cfg = tmp.path().join(format!("{name}.json"));
        std::fs::write(&cfg, body).unwrap();
        assert_eq!(code(&forward(&image, Some(&cfg), &out)), 3, "{name}");
    }
    assert_eq!(code(&forward(&image, Some(&tmp.path().join("none.json")), &out)), 3);
    assert_eq!(code(&treescan(&["forward", image.to_str().unwrap()])), 3);
}

#[test]
fn selfcheck_exit_codes() {
    let run = treescan(&["selfcheck"]);
    assert_eq!(code(&run), 0);
    let text = String::from_utf8(run.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    let tree_line = text.lines().find(|l| l.starts_with("tree-scan")).unwrap();
    let err: f64 = tree_line.split_whitespace().nth(5).unwrap().parse().unwrap();
    assert!(err <= 1e-9);

    let run = treescan(&["selfcheck", "--tol", "0", "--suites", "tree-scan"]);
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("worst seed"));

    let run = treescan(&["selfcheck", "--suites", "mst"]);
    assert_eq!(code(&run), 0);
    let text = String::from_utf8(run.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("mst"));

    assert_eq!(code(&treescan(&["selfcheck", "--suites", "bogus"])), 3);
    assert_eq!(code(&treescan(&["selfcheck", "--ncut-nodes", "13"])), 3);
}

#[test]
fn bench_table_and_json() {
    let tmp = TempDir::new().unwrap();
    let json = tmp.path().join("bench.json");
    let run = treescan(&["bench", "--sizes", "256,1024,4096", "--json", json.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8(run.stdout).unwrap().lines().count(), 4);

    let report: Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(report["spec_version"], "1.0.0");
    assert_eq!(report["linear_beats_quadratic"], true);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let keys = [
        "nodes",
        "grid_rows",
        "grid_cols",
        "tree_scan_ms",
        "bruteforce_ms",
        "speedup",
        "boruvka_ms",
        "kruskal_ms",
        "max_abs_diff",
    ];
    for row in rows {
        let obj = row.as_object().unwrap();
        assert_eq!(obj.len(), keys.len());
        assert!(keys.iter().all(|k| obj[*k].is_number()));
        assert!(row["max_abs_diff"].as_f64().unwrap() <= 1e-9);
    }
    let speedups: Vec<f64> = rows.iter().map(|r| r["speedup"].as_f64().unwrap()).collect();
    assert!(speedups.windows(2).all(|w| w[0] < w[1]), "{speedups:?}");

    assert_eq!(code(&treescan(&["bench", "--sizes", ""])), 3);
    assert_eq!(code(&treescan(&["bench", "--sizes", "abc"])), 3);
}

#[test]
fn usage_and_env_errors() {
    assert_eq!(code(&treescan(&[])), 3);
    assert_eq!(code(&treescan(&["--help"])), 0);
    let run = Command::new(env!("CARGO_BIN_EXE_treescan"))
        .args(["selfcheck", "--suites", "mst"])
        .env("TREESCAN_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(code(&run), 3);
}
