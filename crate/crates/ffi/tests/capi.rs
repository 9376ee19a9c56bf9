use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use treescan::block::Backbone;
use treescan::cli::config::RunConfig;
use treescan::scene::synth_scene;
use treescan_ffi::*;

fn scene_bytes(seed: u64) -> Vec<u8> {
    let s = synth_scene(seed, 64, 64, 1).unwrap().to_ppm();
    s.samples.iter().map(|&v| v as u8).collect()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(treescan_last_error()) }.to_string_lossy().into_owned()
}

fn engine(config: Option<&str>) -> *mut TreescanEngine {
    let json = config.map(|c| CString::new(c).unwrap());
    let mut e = ptr::null_mut();
    let status = unsafe { treescan_engine_new(json.as_ref().map_or(ptr::null(), |c| c.as_ptr()), &mut e) };
    assert_eq!(status, TreescanStatus::Ok, "{}", last_error());
    e
}

fn forward(e: *const TreescanEngine, rgb: &[u8], w: usize, h: usize) -> (TreescanStatus, *mut TreescanResult) {
    let mut r = ptr::null_mut();
    let status = unsafe { treescan_engine_forward(e, rgb.as_ptr(), w, h, &mut r) };
    (status, r)
}

fn stage_data(r: *const TreescanResult, k: usize) -> Vec<f64> {
    let (mut data, mut len) = (ptr::null(), 0);
    assert_eq!(unsafe { treescan_result_stage_data(r, k, &mut data, &mut len) }, TreescanStatus::Ok);
    unsafe { std::slice::from_raw_parts(data, len) }.to_vec()
}

#[test]
fn forward_matches_library() {
    let e = engine(Some(r#"{"seed": 5}"#));
    let rgb = scene_bytes(3);
    let (status, r) = forward(e, &rgb, 64, 64);
    assert_eq!(status, TreescanStatus::Ok, "{}", last_error());

    let mut count = 0;
    assert_eq!(unsafe { treescan_result_stage_count(r, &mut count) }, TreescanStatus::Ok);
    assert_eq!(count, 4);

    let cfg = RunConfig::from_json(r#"{"seed": 5}"#).unwrap();
    let backbone = Backbone::seeded(cfg.backbone_config(), 3, 5).unwrap();
    let image = treescan::ppm::PpmImage::from_rgb8(64, 64, &rgb).unwrap();
    let expected = backbone.forward(&image.to_feature_map()).unwrap();

    for (k, fmap) in expected.stages.iter().enumerate() {
        let (mut h, mut w, mut c) = (0, 0, 0);
        assert_eq!(
            unsafe { treescan_result_stage_shape(r, k, &mut h, &mut w, &mut c) },
            TreescanStatus::Ok
        );
        assert_eq!((h, w, c), (fmap.height(), fmap.width(), fmap.channels()));
        assert_eq!(stage_data(r, k), fmap.data());
    }

    let (mut mask, mut rows, mut cols) = (ptr::null(), 0, 0);
    assert_eq!(unsafe { treescan_result_mask(r, &mut mask, &mut rows, &mut cols) }, TreescanStatus::Ok);
    let mask = unsafe { std::slice::from_raw_parts(mask, rows * cols) };
    let want: Vec<u8> = expected.diagnostics[0][0].mask().into_iter().map(u8::from).collect();
    assert_eq!((rows, cols), (16, 16));
    assert_eq!(mask, &want[..]);

    let (mut ncut, mut fg) = (0.0, 0.0);
    assert_eq!(unsafe { treescan_result_ncut(r, &mut ncut) }, TreescanStatus::Ok);
    assert_eq!(unsafe { treescan_result_foreground_fraction(r, &mut fg) }, TreescanStatus::Ok);
    assert_eq!(Some(ncut), expected.diagnostics[0][0].ncut_value());
    assert!(fg > 0.0 && fg < 1.0);

    unsafe {
        treescan_result_free(r);
        treescan_engine_free(e);
    }
}

#[test]
fn repeated_forward_is_identical() {
    let e = engine(None);
    let rgb = scene_bytes(11);
    let (_, a) = forward(e, &rgb, 64, 64);
    let (_, b) = forward(e, &rgb, 64, 64);
    for k in 0..4 {
        assert_eq!(stage_data(a, k), stage_data(b, k));
    }
    unsafe {
        treescan_result_free(a);
        treescan_result_free(b);
        treescan_engine_free(e);
    }
}

#[test]
fn error_codes_and_messages() {
    let mut e = ptr::null_mut();
    let bad = CString::new(r#"{"alpha": 2}"#).unwrap();
    assert_eq!(unsafe { treescan_engine_new(bad.as_ptr(), &mut e) }, TreescanStatus::Config);
    assert!(e.is_null());
    assert!(last_error().contains("alpha"), "{}", last_error());

    let garbage = CString::new("{").unwrap();
    assert_eq!(unsafe { treescan_engine_new(garbage.as_ptr(), &mut e) }, TreescanStatus::Config);
    assert_eq!(unsafe { treescan_engine_new(ptr::null(), ptr::null_mut()) }, TreescanStatus::NullPointer);

    let e = engine(None);
    let rgb = vec![0u8; 63 * 64 * 3];
    let (status, r) = forward(e, &rgb, 63, 64);
    assert_eq!(status, TreescanStatus::Image);
    assert!(r.is_null());
    assert_eq!(forward(e, &rgb, 0, 64).0, TreescanStatus::Image);
    assert_eq!(forward(e, &rgb, usize::MAX, 2).0, TreescanStatus::InvalidArgument);
    let mut r = ptr::null_mut();
    assert_eq!(
        unsafe { treescan_engine_forward(e, ptr::null(), 64, 64, &mut r) },
        TreescanStatus::NullPointer
    );
    assert_eq!(
        unsafe { treescan_engine_forward(ptr::null(), rgb.as_ptr(), 64, 64, &mut r) },
        TreescanStatus::NullPointer
    );

    let rgb = scene_bytes(0);
    let (_, r) = forward(e, &rgb, 64, 64);
    let (mut h, mut w, mut c) = (0, 0, 0);
    assert_eq!(
        unsafe { treescan_result_stage_shape(r, 4, &mut h, &mut w, &mut c) },
        TreescanStatus::OutOfRange
    );
    assert!(last_error().contains("stage 4"));
    let mut count = 0;
    assert_eq!(
        unsafe { treescan_result_stage_count(ptr::null(), &mut count) },
        TreescanStatus::NullPointer
    );
    unsafe {
        treescan_result_free(r);
        treescan_engine_free(e);
        treescan_result_free(ptr::null_mut());
        treescan_engine_free(ptr::null_mut());
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(treescan_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("treescan.h")
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(header_path()).unwrap();
    for item in [
        "#ifndef TREESCAN_H",
        "typedef struct TreescanEngine TreescanEngine;",
        "typedef struct TreescanResult TreescanResult;",
        "TREESCAN_STATUS_OK = 0",
        "TREESCAN_STATUS_PANIC = 7",
        "treescan_last_error(void)",
        "treescan_version(void)",
        "treescan_engine_new(",
        "treescan_engine_free(",
        "treescan_engine_forward(",
        "treescan_result_free(",
        "treescan_result_stage_count(",
        "treescan_result_stage_shape(",
        "treescan_result_stage_data(",
        "treescan_result_mask(",
        "treescan_result_ncut(",
        "treescan_result_foreground_fraction(",
    ] {
        assert!(header.contains(item), "header lacks {item}");
    }
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "treescan.h"

int main(void) {
    TreescanEngine *engine = NULL;
    if (treescan_engine_new("{\"seed\": 1}", &engine) != TREESCAN_STATUS_OK) return 10;
    static uint8_t rgb[32 * 32 * 3];
    for (size_t i = 0; i < sizeof rgb; i++) rgb[i] = (uint8_t)((i * 37) % 251);
    TreescanResult *result = NULL;
    if (treescan_engine_forward(engine, rgb, 32, 32, &result) != TREESCAN_STATUS_OK) return 11;
    size_t count = 0, h = 0, w = 0, c = 0, len = 0;
    treescan_result_stage_count(result, &count);
    if (count != 4) return 12;
    treescan_result_stage_shape(result, 0, &h, &w, &c);
    const double *data = NULL;
    treescan_result_stage_data(result, 0, &data, &len);
    if (len != h * w * c || h != 8) return 13;
    for (size_t i = 0; i < len; i++) if (!isfinite(data[i])) return 14;
    if (treescan_result_stage_shape(result, 9, &h, &w, &c) != TREESCAN_STATUS_OUT_OF_RANGE) return 15;
    if (strlen(treescan_last_error()) == 0) return 16;
    treescan_result_free(result);
    treescan_engine_free(engine);
    printf("ok %s\n", treescan_version());
    return 0;
}
"#;

/// Compiles a C client against the generated header and links it to the
/// shared library built next to this test binary.
#[test]
fn c_client_compiles_links_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let target_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = target_dir.join("libtreescan_ffi.so");
    assert!(lib.exists(), "{} missing", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    let bin = dir.path().join("client");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let include = header_path().parent().unwrap().to_path_buf();
    let status = Command::new(cc)
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg("-o")
        .arg(&bin)
        .arg(&lib)
        .arg(format!("-Wl,-rpath,{}", target_dir.display()))
        .arg("-lm")
        .status()
        .unwrap();
    assert!(status.success(), "C client failed to build");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "client exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
