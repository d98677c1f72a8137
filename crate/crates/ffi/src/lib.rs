//! C ABI over the oadx optoacoustic toolkit.
//!
//! Conventions:
//!
//! * every fallible call returns an [`OadxStatus`]; results come back through
//!   out-pointers;
//! * object handles (`OadxGeometry`, `OadxSignals`, ...) are opaque; create
//!   them with `oadx_*_new`-style constructors and release them with the
//!   matching `oadx_*_free`;
//! * data pointers returned by accessors borrow from their handle and stay
//!   valid until the handle is freed or mutated;
//! * [`oadx_last_error`] returns a thread-local message for the most recent
//!   failure on the calling thread.
//!
//! Pointer validity rules are the usual C ones: handles come from this
//! library, buffers must cover the documented lengths, and nothing here is
//! retained past the call unless stated.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ndarray::Array2;

use oadx_core::error::Error;
use oadx_core::forward::{simulate_signals, PhysicsConfig, PressureMap, SignalMatrix};
use oadx_core::geometry::{
    limited_view_mask, linear_part_mask, make_array, sparse_mask, ArrayGeometry, ArrayKind,
    ChannelMask,
};
use oadx_core::grid::ImageGrid;
use oadx_core::metrics;
use oadx_core::phantom::{generate_phantom, PhantomParams};
use oadx_core::recon::{normalize_clip, reconstruct, ReconConfig, ReconMode};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OadxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A numeric contract has no defined result (e.g. empty-mask boundary
    /// distance).
    Undefined = 3,
    Io = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Transducer array selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OadxArrayKind {
    SemiCircle = 0,
    Multisegment = 1,
    Linear = 2,
    VirtualCircle = 3,
}

impl From<OadxArrayKind> for ArrayKind {
    fn from(kind: OadxArrayKind) -> ArrayKind {
        match kind {
            OadxArrayKind::SemiCircle => ArrayKind::SemiCircle,
            OadxArrayKind::Multisegment => ArrayKind::Multisegment,
            OadxArrayKind::Linear => ArrayKind::Linear,
            OadxArrayKind::VirtualCircle => ArrayKind::VirtualCircle,
        }
    }
}

/// Reconstruction mode selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OadxReconMode {
    DelaySum = 0,
    DerivativeBp = 1,
}

/// Opaque transducer array geometry.
pub struct OadxGeometry(ArrayGeometry);

/// Opaque channel mask.
pub struct OadxMask(ChannelMask);

/// Opaque raw signal matrix with its physics constants.
pub struct OadxSignals(SignalMatrix);

/// Opaque square image (row-major f64).
pub struct OadxImage {
    n: usize,
    values: Array2<f64>,
}

/// Opaque phantom: pressure map plus label map.
pub struct OadxPhantom {
    n: usize,
    pressure: Array2<f64>,
    labels: Array2<u8>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> OadxStatus {
    match err {
        Error::UndefinedMetric(_) => OadxStatus::Undefined,
        Error::Io(_)
        | Error::Json(_)
        | Error::ContainerFormat(_)
        | Error::ChecksumMismatch { .. } => OadxStatus::Io,
        _ => OadxStatus::InvalidArgument,
    }
}

fn fail(err: &Error) -> OadxStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn null_pointer(what: &str) -> OadxStatus {
    set_error(&format!("null pointer: {what}"));
    OadxStatus::NullPointer
}

/// Run a closure, translating panics into [`OadxStatus::Panic`].
fn guarded<F: FnOnce() -> OadxStatus>(f: F) -> OadxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            OadxStatus::Panic
        }
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn oadx_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Construct one of the supported array geometries.
#[no_mangle]
pub unsafe extern "C" fn oadx_geometry_new(
    kind: OadxArrayKind,
    out: *mut *mut OadxGeometry,
) -> OadxStatus {
    if out.is_null() {
        return null_pointer("out");
    }
    guarded(|| {
        let geom = make_array(kind.into());
        *out = Box::into_raw(Box::new(OadxGeometry(geom)));
        OadxStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn oadx_geometry_free(geom: *mut OadxGeometry) {
    if !geom.is_null() {
        drop(Box::from_raw(geom));
    }
}

/// Element count; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn oadx_geometry_n_elements(geom: *const OadxGeometry) -> usize {
    if geom.is_null() {
        return 0;
    }
    (*geom).0.n_elements()
}

/// Copy element centers as interleaved (x0, y0, x1, y1, ...) meters into a
/// caller buffer of `len` doubles; `len` must be exactly 2·n_elements.
#[no_mangle]
pub unsafe extern "C" fn oadx_geometry_positions(
    geom: *const OadxGeometry,
    out_xy: *mut f64,
    len: usize,
) -> OadxStatus {
    if geom.is_null() || out_xy.is_null() {
        return null_pointer("geom/out_xy");
    }
    guarded(|| {
        let positions = (*geom).0.positions();
        if len != 2 * positions.len() {
            set_error(&format!(
                "positions buffer holds {len} doubles, need {}",
                2 * positions.len()
            ));
            return OadxStatus::InvalidArgument;
        }
        let out = std::slice::from_raw_parts_mut(out_xy, len);
        for (i, p) in positions.iter().enumerate() {
            out[2 * i] = p[0];
            out[2 * i + 1] = p[1];
        }
        OadxStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// Channel masks
// ---------------------------------------------------------------------------

/// Uniform-stride sparse mask keeping `keep` elements.
#[no_mangle]
pub unsafe extern "C" fn oadx_mask_sparse(
    geom: *const OadxGeometry,
    keep: usize,
    out: *mut *mut OadxMask,
) -> OadxStatus {
    if geom.is_null() || out.is_null() {
        return null_pointer("geom/out");
    }
    guarded(|| match sparse_mask(&(*geom).0, keep) {
        Ok(mask) => {
            *out = Box::into_raw(Box::new(OadxMask(mask)));
            OadxStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

/// Centered contiguous limited-view mask keeping `keep` elements.
#[no_mangle]
pub unsafe extern "C" fn oadx_mask_limited_view(
    geom: *const OadxGeometry,
    keep: usize,
    out: *mut *mut OadxMask,
) -> OadxStatus {
    if geom.is_null() || out.is_null() {
        return null_pointer("geom/out");
    }
    guarded(|| match limited_view_mask(&(*geom).0, keep) {
        Ok(mask) => {
            *out = Box::into_raw(Box::new(OadxMask(mask)));
            OadxStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

/// Mask selecting the 128 linear-part elements of the multisegment array.
#[no_mangle]
pub unsafe extern "C" fn oadx_mask_linear_part(
    geom: *const OadxGeometry,
    out: *mut *mut OadxMask,
) -> OadxStatus {
    if geom.is_null() || out.is_null() {
        return null_pointer("geom/out");
    }
    guarded(|| match linear_part_mask(&(*geom).0) {
        Ok(mask) => {
            *out = Box::into_raw(Box::new(OadxMask(mask)));
            OadxStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

#[no_mangle]
pub unsafe extern "C" fn oadx_mask_free(mask: *mut OadxMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Number of active channels; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn oadx_mask_popcount(mask: *const OadxMask) -> usize {
    if mask.is_null() {
        return 0;
    }
    (*mask).0.popcount()
}

// ---------------------------------------------------------------------------
// Phantom generation
// ---------------------------------------------------------------------------

/// Generate a synthetic forearm scene with default parameters at the given
/// image side and pixel pitch. Deterministic in the seed.
#[no_mangle]
pub unsafe extern "C" fn oadx_phantom_generate(
    seed: u64,
    image_n: usize,
    pitch_m: f64,
    out: *mut *mut OadxPhantom,
) -> OadxStatus {
    if out.is_null() {
        return null_pointer("out");
    }
    guarded(|| {
        let params = PhantomParams {
            image_n,
            pitch_m,
            ..PhantomParams::default()
        };
        match generate_phantom(seed, &params) {
            Ok((pressure, labels)) => {
                *out = Box::into_raw(Box::new(OadxPhantom {
                    n: image_n,
                    pressure: pressure.values,
                    labels: labels.values,
                }));
                OadxStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn oadx_phantom_free(phantom: *mut OadxPhantom) {
    if !phantom.is_null() {
        drop(Box::from_raw(phantom));
    }
}

#[no_mangle]
pub unsafe extern "C" fn oadx_phantom_image_n(phantom: *const OadxPhantom) -> usize {
    if phantom.is_null() {
        return 0;
    }
    (*phantom).n
}

/// Row-major n×n pressure values in [0, 1]; null for a null handle.
#[no_mangle]
pub unsafe extern "C" fn oadx_phantom_pressure(phantom: *const OadxPhantom) -> *const f64 {
    if phantom.is_null() {
        return std::ptr::null();
    }
    (*phantom).pressure.as_ptr()
}

/// Row-major n×n labels (0 background, 1 vessel, 2 skin).
#[no_mangle]
pub unsafe extern "C" fn oadx_phantom_labels(phantom: *const OadxPhantom) -> *const u8 {
    if phantom.is_null() {
        return std::ptr::null();
    }
    (*phantom).labels.as_ptr()
}

// ---------------------------------------------------------------------------
// Forward model
// ---------------------------------------------------------------------------

/// Simulate raw signals from a row-major grid_n×grid_n pressure map centered
/// on the array origin.
#[no_mangle]
pub unsafe extern "C" fn oadx_simulate(
    geom: *const OadxGeometry,
    pressure: *const f64,
    grid_n: usize,
    pitch_m: f64,
    sos_mps: f64,
    sampling_rate_hz: f64,
    n_samples: usize,
    grueneisen: f64,
    out: *mut *mut OadxSignals,
) -> OadxStatus {
    if geom.is_null() || pressure.is_null() || out.is_null() {
        return null_pointer("geom/pressure/out");
    }
    guarded(|| {
        let physics = PhysicsConfig {
            speed_of_sound: sos_mps,
            sampling_rate: sampling_rate_hz,
            n_samples,
            grueneisen,
        };
        let grid = match ImageGrid::centered(grid_n, pitch_m) {
            Ok(g) => g,
            Err(e) => return fail(&e),
        };
        let data = std::slice::from_raw_parts(pressure, grid_n * grid_n);
        let values = Array2::from_shape_fn((grid_n, grid_n), |(r, c)| data[r * grid_n + c]);
        let pmap = match PressureMap::new(values, grid) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        match simulate_signals(&pmap, &(*geom).0, &physics) {
            Ok(signals) => {
                *out = Box::into_raw(Box::new(OadxSignals(signals)));
                OadxStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn oadx_signals_free(signals: *mut OadxSignals) {
    if !signals.is_null() {
        drop(Box::from_raw(signals));
    }
}

#[no_mangle]
pub unsafe extern "C" fn oadx_signals_n_samples(signals: *const OadxSignals) -> usize {
    if signals.is_null() {
        return 0;
    }
    (*signals).0.n_samples()
}

#[no_mangle]
pub unsafe extern "C" fn oadx_signals_n_elements(signals: *const OadxSignals) -> usize {
    if signals.is_null() {
        return 0;
    }
    (*signals).0.n_elements()
}

/// Row-major (n_samples × n_elements) signal values.
#[no_mangle]
pub unsafe extern "C" fn oadx_signals_data(signals: *const OadxSignals) -> *const f64 {
    if signals.is_null() {
        return std::ptr::null();
    }
    (*signals).0.values.as_ptr()
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

/// Backprojection reconstruction onto a centered grid_n×grid_n grid.
///
/// `mask` may be null (all channels active). Pass `band_low_hz >= band_high_hz`
/// (e.g. both 0) to skip bandpass filtering.
#[no_mangle]
pub unsafe extern "C" fn oadx_reconstruct(
    signals: *const OadxSignals,
    geom: *const OadxGeometry,
    grid_n: usize,
    pitch_m: f64,
    mode: OadxReconMode,
    mask: *const OadxMask,
    band_low_hz: f64,
    band_high_hz: f64,
    out: *mut *mut OadxImage,
) -> OadxStatus {
    if signals.is_null() || geom.is_null() || out.is_null() {
        return null_pointer("signals/geom/out");
    }
    guarded(|| {
        let grid = match ImageGrid::centered(grid_n, pitch_m) {
            Ok(g) => g,
            Err(e) => return fail(&e),
        };
        let config = ReconConfig {
            grid,
            mode: match mode {
                OadxReconMode::DelaySum => ReconMode::DelaySum,
                OadxReconMode::DerivativeBp => ReconMode::DerivativeBp,
            },
            band: (band_low_hz < band_high_hz).then_some((band_low_hz, band_high_hz)),
            mask: (!mask.is_null()).then(|| (*mask).0.clone()),
            adjoint_weights: false,
        };
        match reconstruct(&(*signals).0, &(*geom).0, &config) {
            Ok(values) => {
                *out = Box::into_raw(Box::new(OadxImage { n: grid_n, values }));
                OadxStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn oadx_image_free(image: *mut OadxImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

#[no_mangle]
pub unsafe extern "C" fn oadx_image_n(image: *const OadxImage) -> usize {
    if image.is_null() {
        return 0;
    }
    (*image).n
}

/// Row-major n×n pixel values.
#[no_mangle]
pub unsafe extern "C" fn oadx_image_data(image: *const OadxImage) -> *const f64 {
    if image.is_null() {
        return std::ptr::null();
    }
    (*image).values.as_ptr()
}

/// Scale the image by its maximum and clip at −0.2, in place.
#[no_mangle]
pub unsafe extern "C" fn oadx_image_normalize_clip(image: *mut OadxImage) -> OadxStatus {
    if image.is_null() {
        return null_pointer("image");
    }
    guarded(|| match normalize_clip(&(*image).values) {
        Ok(values) => {
            (*image).values = values;
            OadxStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

// ---------------------------------------------------------------------------
// Metrics over raw buffers
// ---------------------------------------------------------------------------

unsafe fn image_pair(
    pred: *const f64,
    target: *const f64,
    rows: usize,
    cols: usize,
) -> (Array2<f64>, Array2<f64>) {
    let p = std::slice::from_raw_parts(pred, rows * cols);
    let t = std::slice::from_raw_parts(target, rows * cols);
    (
        Array2::from_shape_fn((rows, cols), |(r, c)| p[r * cols + c]),
        Array2::from_shape_fn((rows, cols), |(r, c)| t[r * cols + c]),
    )
}

unsafe fn label_pair(
    pred: *const u8,
    target: *const u8,
    rows: usize,
    cols: usize,
) -> (Array2<u8>, Array2<u8>) {
    let p = std::slice::from_raw_parts(pred, rows * cols);
    let t = std::slice::from_raw_parts(target, rows * cols);
    (
        Array2::from_shape_fn((rows, cols), |(r, c)| p[r * cols + c]),
        Array2::from_shape_fn((rows, cols), |(r, c)| t[r * cols + c]),
    )
}

macro_rules! metric_entry {
    ($pred:ident, $target:ident, $rows:ident, $cols:ident, $out:ident, $body:expr) => {{
        if $pred.is_null() || $target.is_null() || $out.is_null() {
            return null_pointer("pred/target/out");
        }
        if $rows == 0 || $cols == 0 {
            set_error("empty image");
            return OadxStatus::InvalidArgument;
        }
        guarded(|| match $body {
            Ok(v) => {
                *$out = v;
                OadxStatus::Ok
            }
            Err(e) => fail(&e),
        })
    }};
}

/// Mean absolute error between two row-major images.
#[no_mangle]
pub unsafe extern "C" fn oadx_mae(
    pred: *const f64,
    target: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> OadxStatus {
    metric_entry!(pred, target, rows, cols, out, {
        let (p, t) = image_pair(pred, target, rows, cols);
        metrics::mae(&p, &t)
    })
}

/// Root mean squared error between two row-major images.
#[no_mangle]
pub unsafe extern "C" fn oadx_rmse(
    pred: *const f64,
    target: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> OadxStatus {
    metric_entry!(pred, target, rows, cols, out, {
        let (p, t) = image_pair(pred, target, rows, cols);
        metrics::rmse(&p, &t)
    })
}

/// Peak signal-to-noise ratio in dB; +infinity for identical images.
#[no_mangle]
pub unsafe extern "C" fn oadx_psnr(
    pred: *const f64,
    target: *const f64,
    rows: usize,
    cols: usize,
    data_range: f64,
    out: *mut f64,
) -> OadxStatus {
    metric_entry!(pred, target, rows, cols, out, {
        let (p, t) = image_pair(pred, target, rows, cols);
        metrics::psnr(&p, &t, data_range)
    })
}

/// Structural similarity with a uniform `window`×`window` window.
#[no_mangle]
pub unsafe extern "C" fn oadx_ssim(
    pred: *const f64,
    target: *const f64,
    rows: usize,
    cols: usize,
    window: usize,
    k1: f64,
    k2: f64,
    data_range: f64,
    out: *mut f64,
) -> OadxStatus {
    metric_entry!(pred, target, rows, cols, out, {
        let (p, t) = image_pair(pred, target, rows, cols);
        metrics::ssim(
            &p,
            &t,
            &metrics::SsimOptions {
                window,
                k1,
                k2,
                data_range,
            },
        )
    })
}

/// Dice coefficient of one label class between two row-major label maps.
#[no_mangle]
pub unsafe extern "C" fn oadx_dice(
    pred: *const u8,
    target: *const u8,
    rows: usize,
    cols: usize,
    class_id: u8,
    out: *mut f64,
) -> OadxStatus {
    metric_entry!(pred, target, rows, cols, out, {
        let (p, t) = label_pair(pred, target, rows, cols);
        metrics::dice(&p, &t, class_id)
    })
}

/// Intersection-over-union of one label class.
#[no_mangle]
pub unsafe extern "C" fn oadx_iou(
    pred: *const u8,
    target: *const u8,
    rows: usize,
    cols: usize,
    class_id: u8,
    out: *mut f64,
) -> OadxStatus {
    metric_entry!(pred, target, rows, cols, out, {
        let (p, t) = label_pair(pred, target, rows, cols);
        metrics::iou(&p, &t, class_id)
    })
}

/// Symmetric 95-percentile Hausdorff boundary distance in pixels; returns
/// `OADX_STATUS_UNDEFINED` when either mask is empty.
#[no_mangle]
pub unsafe extern "C" fn oadx_hd95(
    pred: *const u8,
    target: *const u8,
    rows: usize,
    cols: usize,
    class_id: u8,
    out: *mut f64,
) -> OadxStatus {
    metric_entry!(pred, target, rows, cols, out, {
        let (p, t) = label_pair(pred, target, rows, cols);
        metrics::hd95(&p, &t, class_id)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_round_trip() {
        unsafe {
            let mut geom: *mut OadxGeometry = std::ptr::null_mut();
            assert_eq!(
                oadx_geometry_new(OadxArrayKind::SemiCircle, &mut geom),
                OadxStatus::Ok
            );
            assert_eq!(oadx_geometry_n_elements(geom), 256);
            let mut xy = vec![0.0f64; 512];
            assert_eq!(
                oadx_geometry_positions(geom, xy.as_mut_ptr(), xy.len()),
                OadxStatus::Ok
            );
            // First element at (R, 0).
            assert!((xy[0] - 0.040).abs() < 1e-12);
            assert!(xy[1].abs() < 1e-12);
            // Wrong buffer length is rejected with a message.
            assert_eq!(
                oadx_geometry_positions(geom, xy.as_mut_ptr(), 100),
                OadxStatus::InvalidArgument
            );
            let msg = std::ffi::CStr::from_ptr(oadx_last_error());
            assert!(!msg.to_str().unwrap().is_empty());
            oadx_geometry_free(geom);
        }
    }

    #[test]
    fn mask_constructors_and_errors() {
        unsafe {
            let mut geom: *mut OadxGeometry = std::ptr::null_mut();
            oadx_geometry_new(OadxArrayKind::VirtualCircle, &mut geom);

            let mut mask: *mut OadxMask = std::ptr::null_mut();
            assert_eq!(oadx_mask_sparse(geom, 64, &mut mask), OadxStatus::Ok);
            assert_eq!(oadx_mask_popcount(mask), 64);
            oadx_mask_free(mask);

            let mut lv: *mut OadxMask = std::ptr::null_mut();
            assert_eq!(oadx_mask_limited_view(geom, 128, &mut lv), OadxStatus::Ok);
            assert_eq!(oadx_mask_popcount(lv), 128);
            oadx_mask_free(lv);

            // Non-divisor sparse count and linear part of a circle fail.
            let mut bad: *mut OadxMask = std::ptr::null_mut();
            assert_eq!(
                oadx_mask_sparse(geom, 100, &mut bad),
                OadxStatus::InvalidArgument
            );
            assert_eq!(
                oadx_mask_linear_part(geom, &mut bad),
                OadxStatus::InvalidArgument
            );
            oadx_geometry_free(geom);
        }
    }

    #[test]
    fn full_pipeline_through_the_abi() {
        unsafe {
            let mut geom: *mut OadxGeometry = std::ptr::null_mut();
            oadx_geometry_new(OadxArrayKind::VirtualCircle, &mut geom);

            let mut phantom: *mut OadxPhantom = std::ptr::null_mut();
            assert_eq!(
                oadx_phantom_generate(11, 64, 0.4e-3, &mut phantom),
                OadxStatus::InvalidArgument,
                "64 px image cannot hold the default 40..90 skin band"
            );
            assert_eq!(
                oadx_phantom_generate(11, 256, 0.1e-3, &mut phantom),
                OadxStatus::Ok
            );
            let n = oadx_phantom_image_n(phantom);
            assert_eq!(n, 256);
            let pressure = oadx_phantom_pressure(phantom);
            let labels = oadx_phantom_labels(phantom);
            assert!(!pressure.is_null() && !labels.is_null());
            let labels_slice = std::slice::from_raw_parts(labels, n * n);
            assert!(labels_slice.iter().all(|&v| v <= 2));

            let mut signals: *mut OadxSignals = std::ptr::null_mut();
            assert_eq!(
                oadx_simulate(
                    geom,
                    pressure,
                    n,
                    0.1e-3,
                    1510.0,
                    40e6,
                    2030,
                    1.0,
                    &mut signals
                ),
                OadxStatus::Ok
            );
            assert_eq!(oadx_signals_n_samples(signals), 2030);
            assert_eq!(oadx_signals_n_elements(signals), 1024);

            let mut image: *mut OadxImage = std::ptr::null_mut();
            let mut mask: *mut OadxMask = std::ptr::null_mut();
            oadx_mask_sparse(geom, 128, &mut mask);
            assert_eq!(
                oadx_reconstruct(
                    signals,
                    geom,
                    n,
                    0.1e-3,
                    OadxReconMode::DerivativeBp,
                    mask,
                    0.0,
                    0.0,
                    &mut image
                ),
                OadxStatus::Ok
            );
            assert_eq!(oadx_image_n(image), n);
            assert_eq!(oadx_image_normalize_clip(image), OadxStatus::Ok);
            let data = std::slice::from_raw_parts(oadx_image_data(image), n * n);
            let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(max, 1.0);

            // Metrics over the ABI buffers.
            let mut v = 0.0f64;
            assert_eq!(
                oadx_psnr(
                    oadx_image_data(image),
                    oadx_image_data(image),
                    n,
                    n,
                    1.2,
                    &mut v
                ),
                OadxStatus::Ok
            );
            assert!(v.is_infinite());
            assert_eq!(oadx_dice(labels, labels, n, n, 1, &mut v), OadxStatus::Ok);
            assert_eq!(v, 1.0);
            let zeros = vec![0u8; n * n];
            assert_eq!(
                oadx_hd95(labels, zeros.as_ptr(), n, n, 1, &mut v),
                OadxStatus::Undefined
            );

            oadx_image_free(image);
            oadx_mask_free(mask);
            oadx_signals_free(signals);
            oadx_phantom_free(phantom);
            oadx_geometry_free(geom);
        }
    }

    #[test]
    fn null_pointers_are_reported() {
        unsafe {
            assert_eq!(
                oadx_geometry_new(OadxArrayKind::Linear, std::ptr::null_mut()),
                OadxStatus::NullPointer
            );
            let mut v = 0.0f64;
            assert_eq!(
                oadx_mae(std::ptr::null(), std::ptr::null(), 4, 4, &mut v),
                OadxStatus::NullPointer
            );
            assert_eq!(oadx_geometry_n_elements(std::ptr::null()), 0);
            oadx_geometry_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn header_is_generated() {
        let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("include")
            .join("oadx.h");
        let text = std::fs::read_to_string(header).expect("build.rs generates include/oadx.h");
        assert!(text.contains("OADX_H"));
        assert!(text.contains("oadx_reconstruct"));
        assert!(text.contains("OADX_STATUS_OK"));
    }
}
