//! C ABI over the treescan engine.
//!
//! Every fallible call returns a [`TreescanStatus`]; on failure a message is
//! available from [`treescan_last_error`] on the same thread. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use treescan::block::Backbone;
use treescan::cli::config::RunConfig;
use treescan::patchgrid::FeatureMap;
use treescan::ppm::PpmImage;
use treescan::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreescanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Image = 4,
    Compute = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// A seeded backbone ready to run forward passes.
pub struct TreescanEngine {
    backbone: Backbone,
}

/// Output of one forward pass.
pub struct TreescanResult {
    stages: Vec<FeatureMap>,
    mask: Vec<u8>,
    mask_rows: usize,
    mask_cols: usize,
    ncut_value: f64,
    foreground_fraction: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> TreescanStatus {
    match err {
        Error::Config(_) => TreescanStatus::Config,
        Error::Argument(_) | Error::Io(_) => TreescanStatus::InvalidArgument,
        Error::ImageShape(_) | Error::Ppm(_) => TreescanStatus::Image,
        Error::NonFinite { .. } | Error::NoConvergence { .. } | Error::Disconnected { .. } | Error::Tree(_) => {
            TreescanStatus::Compute
        }
    }
}

struct Failure {
    status: TreescanStatus,
    message: String,
}

fn fail(status: TreescanStatus, msg: impl Into<String>) -> Failure {
    Failure {
        status,
        message: msg.into(),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording the message of any failure or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TreescanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TreescanStatus::Ok,
        Ok(Err(f)) => {
            set_last_error(&f.message);
            f.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            TreescanStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(TreescanStatus::NullPointer, format!("{name} is null")))
}

unsafe fn in_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(TreescanStatus::NullPointer, format!("{name} is null")))
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn treescan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn treescan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an engine from a JSON run configuration (keys `seed`, `alpha`,
/// `background_phi`, `patch_pitch`, `samples_per_side`, `stages`). A null
/// `config_json` selects the tiny preset with seed 0.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be a
/// valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn treescan_engine_new(
    config_json: *const c_char,
    out: *mut *mut TreescanEngine,
) -> TreescanStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let cfg = if config_json.is_null() {
            RunConfig::default()
        } else {
            let text = CStr::from_ptr(config_json)
                .to_str()
                .map_err(|_| fail(TreescanStatus::Config, "config is not valid UTF-8"))?;
            RunConfig::from_json(text)?
        };
        let backbone = Backbone::seeded(cfg.backbone_config(), 3, cfg.seed)?;
        *out = Box::into_raw(Box::new(TreescanEngine { backbone }));
        Ok(())
    })
}

/// # Safety
/// `engine` must be null or a handle from [`treescan_engine_new`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn treescan_engine_free(engine: *mut TreescanEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Runs the backbone on an interleaved 8-bit RGB image of `width × height`
/// pixels (`3 · width · height` bytes, row-major).
///
/// # Safety
/// `engine` must be a live handle, `rgb` must point to `3 · width · height`
/// readable bytes, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn treescan_engine_forward(
    engine: *const TreescanEngine,
    rgb: *const u8,
    width: usize,
    height: usize,
    out: *mut *mut TreescanResult,
) -> TreescanStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let engine = in_ref(engine, "engine")?;
        if rgb.is_null() {
            return Err(fail(TreescanStatus::NullPointer, "rgb is null"));
        }
        let len = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(3))
            .ok_or_else(|| fail(TreescanStatus::InvalidArgument, "image dimensions overflow"))?;
        let bytes = std::slice::from_raw_parts(rgb, len);
        let image = PpmImage::from_rgb8(width, height, bytes)
            .map_err(|e| fail(TreescanStatus::Image, e.to_string()))?;
        let output = engine.backbone.forward(&image.to_feature_map())?;
        let first = &output.diagnostics[0][0];
        let mask: Vec<u8> = first.mask().into_iter().map(u8::from).collect();
        let fg = mask.iter().filter(|&&m| m == 1).count() as f64 / mask.len() as f64;
        let result = TreescanResult {
            mask_rows: first.grid.rows,
            mask_cols: first.grid.cols,
            ncut_value: first.ncut_value().unwrap_or(f64::NAN),
            foreground_fraction: fg,
            mask,
            stages: output.stages,
        };
        *out = Box::into_raw(Box::new(result));
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle from [`treescan_engine_forward`] that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn treescan_result_free(result: *mut TreescanResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be a live handle and `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn treescan_result_stage_count(
    result: *const TreescanResult,
    count: *mut usize,
) -> TreescanStatus {
    guard(|| {
        *out_ref(count, "count")? = in_ref(result, "result")?.stages.len();
        Ok(())
    })
}

unsafe fn stage<'a>(result: *const TreescanResult, index: usize) -> Result<&'a FeatureMap, Failure> {
    let r: &'a TreescanResult = in_ref(result, "result")?;
    r.stages.get(index).ok_or_else(|| {
        fail(
            TreescanStatus::OutOfRange,
            format!("stage {index} of {}", r.stages.len()),
        )
    })
}

/// Shape of stage `index` (0-based) as height, width, channels.
///
/// # Safety
/// `result` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn treescan_result_stage_shape(
    result: *const TreescanResult,
    index: usize,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> TreescanStatus {
    guard(|| {
        let (h, w, c) = (out_ref(height, "height")?, out_ref(width, "width")?, out_ref(channels, "channels")?);
        let s = stage(result, index)?;
        (*h, *w, *c) = (s.height(), s.width(), s.channels());
        Ok(())
    })
}

/// Borrowed view of stage `index` as row-major `height × width × channels`
/// doubles; valid until the result is freed.
///
/// # Safety
/// `result` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn treescan_result_stage_data(
    result: *const TreescanResult,
    index: usize,
    data: *mut *const f64,
    len: *mut usize,
) -> TreescanStatus {
    guard(|| {
        let (d, l) = (out_ref(data, "data")?, out_ref(len, "len")?);
        let s = stage(result, index)?;
        (*d, *l) = (s.data().as_ptr(), s.data().len());
        Ok(())
    })
}

/// Borrowed first-stage patch mask, row-major `rows × cols`, 1 for
/// foreground; valid until the result is freed.
///
/// # Safety
/// `result` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn treescan_result_mask(
    result: *const TreescanResult,
    mask: *mut *const u8,
    rows: *mut usize,
    cols: *mut usize,
) -> TreescanStatus {
    guard(|| {
        let (m, r, c) = (out_ref(mask, "mask")?, out_ref(rows, "rows")?, out_ref(cols, "cols")?);
        let res = in_ref(result, "result")?;
        (*m, *r, *c) = (res.mask.as_ptr(), res.mask_rows, res.mask_cols);
        Ok(())
    })
}

/// Normalized-cut value of the first-stage partition; NaN when the stage
/// has a single patch and therefore no cut.
///
/// # Safety
/// `result` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn treescan_result_ncut(result: *const TreescanResult, value: *mut f64) -> TreescanStatus {
    guard(|| {
        *out_ref(value, "value")? = in_ref(result, "result")?.ncut_value;
        Ok(())
    })
}

/// Fraction of first-stage patches labelled foreground.
///
/// # Safety
/// `result` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn treescan_result_foreground_fraction(
    result: *const TreescanResult,
    value: *mut f64,
) -> TreescanStatus {
    guard(|| {
        *out_ref(value, "value")? = in_ref(result, "result")?.foreground_fraction;
        Ok(())
    })
}
