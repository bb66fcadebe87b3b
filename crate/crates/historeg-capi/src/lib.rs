//! C ABI for the registration engine: opaque handles, status codes, and a
//! thread-local error message. The header `include/historeg.h` is generated
//! at build time.
//!
//! Ownership rules: constructors hand out pointers that must be released
//! with the matching `_free` function; accessors never take ownership. All
//! functions are safe to call from multiple threads as long as each handle
//! is used from one thread at a time.

use historeg::image::{preprocess_gray, Pyramid, LUMA_WEIGHTS};
use historeg::io::config::parse_config;
use historeg::io::transform_file::{write_transform, GridInfo, TransformFile};
use historeg::pipeline::{self, PipelineConfig, StepReport};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result of every fallible API call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum HistoregStatus {
    /// The call succeeded.
    Ok = 0,
    /// A pointer was null or a value was out of range.
    InvalidArgument = 1,
    /// A file could not be read, decoded, or written.
    IoError = 2,
    /// Registration itself failed or panicked.
    RuntimeError = 3,
}

/// Opaque preprocessed image pyramid.
pub struct HistoregImage {
    pyramid: Pyramid,
}

/// Opaque registration outcome: the composed transform, both image grids,
/// and per-step diagnostics.
pub struct HistoregResult {
    file: TransformFile,
    reports: Vec<StepReport>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: HistoregStatus, msg: &str) -> HistoregStatus {
    set_error(msg);
    status
}

/// Message describing the most recent failure on this thread. Valid until
/// the next failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn historeg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Runs `f` with panics converted to `RuntimeError`.
fn guarded(f: impl FnOnce() -> HistoregStatus) -> HistoregStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal panic".into());
            fail(HistoregStatus::RuntimeError, &msg)
        }
    }
}

fn finish_image(pyramid: Pyramid, out: *mut *mut HistoregImage) -> HistoregStatus {
    let handle = Box::new(HistoregImage { pyramid });
    unsafe { *out = Box::into_raw(handle) };
    HistoregStatus::Ok
}

/// Builds a registration-ready image from 8-bit grayscale pixels, row-major,
/// `width * height` bytes.
///
/// # Safety
/// `data` must point to `width * height` readable bytes and `out` must be a
/// valid location to store the new handle.
#[no_mangle]
pub unsafe extern "C" fn historeg_image_from_gray8(
    data: *const u8,
    width: usize,
    height: usize,
    out: *mut *mut HistoregImage,
) -> HistoregStatus {
    if data.is_null() || out.is_null() {
        return fail(HistoregStatus::InvalidArgument, "null pointer");
    }
    if width == 0 || height == 0 {
        return fail(HistoregStatus::InvalidArgument, "empty image");
    }
    let pixels = unsafe { std::slice::from_raw_parts(data, width * height) };
    guarded(|| {
        let gray: Vec<f64> = pixels.iter().map(|&v| v as f64 / 255.0).collect();
        match preprocess_gray(width, height, &gray) {
            Ok(img) => finish_image(Pyramid::build(img), out),
            Err(e) => fail(HistoregStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Builds a registration-ready image from interleaved 8-bit RGB pixels,
/// row-major, `width * height * 3` bytes.
///
/// # Safety
/// `data` must point to `width * height * 3` readable bytes and `out` must
/// be a valid location to store the new handle.
#[no_mangle]
pub unsafe extern "C" fn historeg_image_from_rgb8(
    data: *const u8,
    width: usize,
    height: usize,
    out: *mut *mut HistoregImage,
) -> HistoregStatus {
    if data.is_null() || out.is_null() {
        return fail(HistoregStatus::InvalidArgument, "null pointer");
    }
    if width == 0 || height == 0 {
        return fail(HistoregStatus::InvalidArgument, "empty image");
    }
    let pixels = unsafe { std::slice::from_raw_parts(data, width * height * 3) };
    guarded(|| {
        let gray: Vec<f64> = pixels
            .chunks_exact(3)
            .map(|p| {
                (LUMA_WEIGHTS[0] * p[0] as f64
                    + LUMA_WEIGHTS[1] * p[1] as f64
                    + LUMA_WEIGHTS[2] * p[2] as f64)
                    / 255.0
            })
            .collect();
        match preprocess_gray(width, height, &gray) {
            Ok(img) => finish_image(Pyramid::build(img), out),
            Err(e) => fail(HistoregStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Loads an image file (PNG/JPEG/TIFF or a pyramid cache written by the
/// `historeg` CLI) and preprocesses it.
///
/// # Safety
/// `path` must be a null-terminated UTF-8 string and `out` a valid location
/// to store the new handle.
#[no_mangle]
pub unsafe extern "C" fn historeg_image_from_file(
    path: *const c_char,
    out: *mut *mut HistoregImage,
) -> HistoregStatus {
    if path.is_null() || out.is_null() {
        return fail(HistoregStatus::InvalidArgument, "null pointer");
    }
    let path = match unsafe { CStr::from_ptr(path) }.to_str() {
        Ok(s) => s.to_owned(),
        Err(_) => return fail(HistoregStatus::InvalidArgument, "path is not UTF-8"),
    };
    guarded(|| match historeg::io::load_pyramid(Path::new(&path)) {
        Ok(pyramid) => finish_image(pyramid, out),
        Err(e) => fail(HistoregStatus::IoError, &e.to_string()),
    })
}

/// Releases an image handle. Null is ignored.
///
/// # Safety
/// `image` must be a handle from a `historeg_image_*` constructor that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn historeg_image_free(image: *mut HistoregImage) {
    if !image.is_null() {
        drop(unsafe { Box::from_raw(image) });
    }
}

fn grid_of(level: &historeg::image::Image) -> GridInfo {
    GridInfo {
        width: level.width(),
        height: level.height(),
        spacing: level.spacing(),
        origin: level.origin(),
    }
}

/// Registers `template` onto `reference` and returns a result handle.
///
/// `config_ini` is the text of a configuration file (defaults when null);
/// `steps` selects pipeline steps as an ascending subset of "123" (all
/// three when null).
///
/// # Safety
/// `reference` and `template_` must be live image handles; `config_ini` and
/// `steps` must be null or null-terminated UTF-8 strings; `out` must be a
/// valid location to store the new handle.
#[no_mangle]
pub unsafe extern "C" fn historeg_register(
    reference: *const HistoregImage,
    template_: *const HistoregImage,
    config_ini: *const c_char,
    steps: *const c_char,
    out: *mut *mut HistoregResult,
) -> HistoregStatus {
    if reference.is_null() || template_.is_null() || out.is_null() {
        return fail(HistoregStatus::InvalidArgument, "null pointer");
    }
    let mut cfg = if config_ini.is_null() {
        PipelineConfig::default()
    } else {
        let text = match unsafe { CStr::from_ptr(config_ini) }.to_str() {
            Ok(s) => s,
            Err(_) => return fail(HistoregStatus::InvalidArgument, "config is not UTF-8"),
        };
        match parse_config(text, Path::new("<config>")) {
            Ok(cfg) => cfg,
            Err(e) => return fail(HistoregStatus::InvalidArgument, &e.to_string()),
        }
    };
    if !steps.is_null() {
        let text = match unsafe { CStr::from_ptr(steps) }.to_str() {
            Ok(s) => s,
            Err(_) => return fail(HistoregStatus::InvalidArgument, "steps is not UTF-8"),
        };
        match pipeline::parse_step_selection(text) {
            Ok((s1, s2, s3)) => {
                cfg.step1.enabled &= s1;
                cfg.step2.enabled &= s2;
                cfg.step3.enabled &= s3;
            }
            Err(e) => return fail(HistoregStatus::InvalidArgument, &e.to_string()),
        }
    }
    let (reference, template_) = unsafe { (&*reference, &*template_) };
    guarded(|| {
        match pipeline::run(&reference.pyramid, &template_.pyramid, &cfg) {
            Ok(result) => {
                let file = TransformFile {
                    reference: grid_of(reference.pyramid.finest()),
                    template: grid_of(template_.pyramid.finest()),
                    rigid: result.rigid,
                    transform: result.transform,
                };
                let handle = Box::new(HistoregResult {
                    file,
                    reports: result.reports,
                });
                unsafe { *out = Box::into_raw(handle) };
                HistoregStatus::Ok
            }
            Err(e) => fail(HistoregStatus::RuntimeError, &e.to_string()),
        }
    })
}

/// Copies the rigid pre-alignment as `[angle, tx, ty, cx, cy]` into `out`.
/// Fails with `InvalidArgument` when step 1 did not run.
///
/// # Safety
/// `result` must be a live result handle and `out` must point to five
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn historeg_result_rigid(
    result: *const HistoregResult,
    out: *mut f64,
) -> HistoregStatus {
    if result.is_null() || out.is_null() {
        return fail(HistoregStatus::InvalidArgument, "null pointer");
    }
    let result = unsafe { &*result };
    match &result.file.rigid {
        Some(r) => {
            let values = [r.angle, r.translation.0, r.translation.1, r.center.0, r.center.1];
            unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), out, 5) };
            HistoregStatus::Ok
        }
        None => fail(
            HistoregStatus::InvalidArgument,
            "no rigid component: step 1 did not run",
        ),
    }
}

/// Copies the affine row-major coefficients `[a00, a01, b0, a10, a11, b1]`
/// (physical coordinates) into `out`.
///
/// # Safety
/// `result` must be a live result handle and `out` must point to six
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn historeg_result_affine(
    result: *const HistoregResult,
    out: *mut f64,
) -> HistoregStatus {
    if result.is_null() || out.is_null() {
        return fail(HistoregStatus::InvalidArgument, "null pointer");
    }
    let result = unsafe { &*result };
    unsafe {
        std::ptr::copy_nonoverlapping(result.file.transform.affine.a.as_ptr(), out, 6);
    }
    HistoregStatus::Ok
}

/// Number of pipeline steps that ran.
///
/// # Safety
/// `result` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn historeg_result_step_count(result: *const HistoregResult) -> usize {
    if result.is_null() {
        return 0;
    }
    unsafe { &*result }.reports.len()
}

/// Diagnostics of one executed step by index: which pipeline step it was
/// (1-3), the NGF distance before and after at that step's finest level, and
/// whether the step's result was discarded for not improving (1) or kept
/// (0). Null output pointers are skipped.
///
/// # Safety
/// `result` must be a live result handle; non-null output pointers must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn historeg_result_step_report(
    result: *const HistoregResult,
    index: usize,
    step: *mut u8,
    initial_ngf: *mut f64,
    final_ngf: *mut f64,
    reverted: *mut u8,
) -> HistoregStatus {
    if result.is_null() {
        return fail(HistoregStatus::InvalidArgument, "null pointer");
    }
    let result = unsafe { &*result };
    let Some(report) = result.reports.get(index) else {
        return fail(
            HistoregStatus::InvalidArgument,
            &format!("step index {index} out of range ({} steps ran)", result.reports.len()),
        );
    };
    unsafe {
        if !step.is_null() {
            *step = report.step;
        }
        if !initial_ngf.is_null() {
            *initial_ngf = report.initial_ngf;
        }
        if !final_ngf.is_null() {
            *final_ngf = report.final_ngf;
        }
        if !reverted.is_null() {
            *reverted = report.reverted as u8;
        }
    }
    HistoregStatus::Ok
}

/// Maps `count` landmarks from reference pixel coordinates into template
/// pixel coordinates. `xy_in` and `xy_out` are interleaved `[x0, y0, x1,
/// y1, ...]` arrays of `2 * count` doubles; they may alias.
///
/// # Safety
/// `result` must be a live result handle; `xy_in` must point to `2 * count`
/// readable doubles and `xy_out` to `2 * count` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn historeg_result_map_points(
    result: *const HistoregResult,
    xy_in: *const f64,
    count: usize,
    xy_out: *mut f64,
) -> HistoregStatus {
    if result.is_null() || (count > 0 && (xy_in.is_null() || xy_out.is_null())) {
        return fail(HistoregStatus::InvalidArgument, "null pointer");
    }
    let result = unsafe { &*result };
    for k in 0..count {
        let p = unsafe { (*xy_in.add(2 * k), *xy_in.add(2 * k + 1)) };
        let phys = result.file.reference.pixel_to_physical(p);
        let mapped = result.file.transform.apply(phys);
        let px = result.file.template.physical_to_pixel(mapped);
        unsafe {
            *xy_out.add(2 * k) = px.0;
            *xy_out.add(2 * k + 1) = px.1;
        }
    }
    HistoregStatus::Ok
}

/// Saves the result as a transform file readable by the `historeg` CLI.
///
/// # Safety
/// `result` must be a live result handle and `path` a null-terminated UTF-8
/// string.
#[no_mangle]
pub unsafe extern "C" fn historeg_result_save(
    result: *const HistoregResult,
    path: *const c_char,
) -> HistoregStatus {
    if result.is_null() || path.is_null() {
        return fail(HistoregStatus::InvalidArgument, "null pointer");
    }
    let path = match unsafe { CStr::from_ptr(path) }.to_str() {
        Ok(s) => s.to_owned(),
        Err(_) => return fail(HistoregStatus::InvalidArgument, "path is not UTF-8"),
    };
    let result = unsafe { &*result };
    guarded(|| match write_transform(Path::new(&path), &result.file) {
        Ok(()) => HistoregStatus::Ok,
        Err(e) => fail(HistoregStatus::IoError, &e.to_string()),
    })
}

/// Releases a result handle. Null is ignored.
///
/// # Safety
/// `result` must be a handle from `historeg_register` that has not been
/// freed yet.
#[no_mangle]
pub unsafe extern "C" fn historeg_result_free(result: *mut HistoregResult) {
    if !result.is_null() {
        drop(unsafe { Box::from_raw(result) });
    }
}
