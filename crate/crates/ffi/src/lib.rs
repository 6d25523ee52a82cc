//! C ABI over the `gaffine` detector.
//!
//! Images, configurations and feature lists are opaque handles created and
//! released through this interface. Fallible calls return a [`GaffineStatus`];
//! on failure a message describing the last error on the calling thread is
//! available from [`gaffine_last_error_message`]. Panics never cross the
//! boundary: they are caught and reported as `GAFFINE_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gaffine::affineshape::{k_from_r, r_from_k, solve_h, solve_k, AffineFeature};
use gaffine::config::{ConfigError, DetectorConfig};
use gaffine::featio::write_features;
use gaffine::imgio::{load_pgm, GrayImage, ImageError};
use gaffine::pipeline::detect_features;
use gaffine::scalespace::ScaleSpaceError;
use gaffine::synth::{render, GaussianSignalSpec};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaffineStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    ImageTooSmall = 5,
    Config = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Grayscale image handle.
pub struct GaffineImage(GrayImage);

/// Detector configuration handle.
pub struct GaffineConfig(DetectorConfig);

/// Detected feature list handle.
pub struct GaffineFeatures(Vec<AffineFeature>);

/// One detected feature, copied out of a [`GaffineFeatures`] list.
///
/// `(sm_x, sm_y, sm_z)` is the symmetric shape matrix `[[sm_x, sm_y], [sm_y, sm_z]]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GaffineFeature {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub c: f64,
    pub d: f64,
    pub dog_value: f64,
    pub sm_x: f64,
    pub sm_y: f64,
    pub sm_z: f64,
}

/// Parameters of a synthetic Gaussian blob.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GaffineSignalSpec {
    pub cx: f64,
    pub cy: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub c: f64,
    pub d: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(GaffineStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(GaffineStatus::NullPointer, format!("{what} is null"))
    }
}

impl From<ImageError> for Failure {
    fn from(e: ImageError) -> Self {
        let status = match e {
            ImageError::Io { .. } => GaffineStatus::Io,
            ImageError::InvalidDimensions { .. } => GaffineStatus::InvalidArgument,
            _ => GaffineStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let status = match e {
            ConfigError::Io { .. } => GaffineStatus::Io,
            _ => GaffineStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

impl From<ScaleSpaceError> for Failure {
    fn from(e: ScaleSpaceError) -> Self {
        let status = match e {
            ScaleSpaceError::ImageTooSmall { .. } => GaffineStatus::ImageTooSmall,
            _ => GaffineStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus a thread-local message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GaffineStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_last_error();
            GaffineStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            GaffineStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GaffineStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

/// Message of the last failed call on this thread, or null if the last call succeeded.
///
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn gaffine_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gaffine_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------- images

/// Creates an image from `width * height` row-major gray values.
///
/// # Safety
/// `pixels` must point to `width * height` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gaffine_image_new(
    width: usize,
    height: usize,
    pixels: *const f64,
    out: *mut *mut GaffineImage,
) -> GaffineStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if pixels.is_null() {
            return Err(Failure::null("pixels"));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Failure(GaffineStatus::InvalidArgument, "image size overflows".into()))?;
        let data = std::slice::from_raw_parts(pixels, n).to_vec();
        let img = GrayImage::new(width, height, data)?;
        *out = Box::into_raw(Box::new(GaffineImage(img)));
        Ok(())
    })
}

/// Loads a binary PGM file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gaffine_image_load_pgm(path: *const c_char, out: *mut *mut GaffineImage) -> GaffineStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let img = load_pgm(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(GaffineImage(img)));
        Ok(())
    })
}

/// Renders one synthetic Gaussian blob, quantized to integer gray levels.
///
/// # Safety
/// `spec` must point to a valid spec; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gaffine_image_render(
    spec: *const GaffineSignalSpec,
    width: usize,
    height: usize,
    out: *mut *mut GaffineImage,
) -> GaffineStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let s = ref_arg(spec, "spec")?;
        if width == 0 || height == 0 {
            return Err(Failure(GaffineStatus::InvalidArgument, "image size must be positive".into()));
        }
        let spec =
            GaussianSignalSpec { cx: s.cx, cy: s.cy, alpha: s.alpha, beta: s.beta, theta: s.theta, c: s.c, d: s.d };
        let img = render(&spec, width, height).map_err(|e| Failure(GaffineStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(GaffineImage(img)));
        Ok(())
    })
}

/// Width of an image, or 0 for a null handle.
///
/// # Safety
/// `img` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gaffine_image_width(img: *const GaffineImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.width())
}

/// Height of an image, or 0 for a null handle.
///
/// # Safety
/// `img` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gaffine_image_height(img: *const GaffineImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.height())
}

/// Pointer to the row-major pixel data, valid while the handle lives.
///
/// # Safety
/// `img` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gaffine_image_pixels(img: *const GaffineImage) -> *const f64 {
    img.as_ref().map_or(ptr::null(), |i| i.0.pixels().as_ptr())
}

/// Releases an image. Null is ignored.
///
/// # Safety
/// `img` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gaffine_image_free(img: *mut GaffineImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

// ---------------------------------------------------------------- configuration

/// Creates a configuration with default settings.
#[no_mangle]
pub extern "C" fn gaffine_config_new() -> *mut GaffineConfig {
    Box::into_raw(Box::new(GaffineConfig(DetectorConfig::default())))
}

/// Sets one option by name, e.g. `("r_max", "100")`.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gaffine_config_set(
    cfg: *mut GaffineConfig,
    key: *const c_char,
    value: *const c_char,
) -> GaffineStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        let mut next = cfg.0.clone();
        next.set(str_arg(key, "key")?, str_arg(value, "value")?, 1)?;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// Applies a `key = value` configuration file on top of the current settings.
///
/// On error the configuration is left unchanged.
///
/// # Safety
/// `cfg` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gaffine_config_load(cfg: *mut GaffineConfig, path: *const c_char) -> GaffineStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        let mut next = cfg.0.clone();
        next.apply_file(str_arg(path, "path")?)?;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// Releases a configuration. Null is ignored.
///
/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gaffine_config_free(cfg: *mut GaffineConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// ---------------------------------------------------------------- detection

/// Runs the detector. A null `cfg` uses the default settings.
///
/// # Safety
/// `img` must be a live handle, `cfg` null or a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gaffine_detect(
    img: *const GaffineImage,
    cfg: *const GaffineConfig,
    out: *mut *mut GaffineFeatures,
) -> GaffineStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let img = ref_arg(img, "img")?;
        let default_cfg;
        let cfg = match cfg.as_ref() {
            Some(c) => &c.0,
            None => {
                default_cfg = DetectorConfig::default();
                &default_cfg
            }
        };
        let feats = detect_features(&img.0, cfg)?;
        *out = Box::into_raw(Box::new(GaffineFeatures(feats)));
        Ok(())
    })
}

/// Number of features in a list, or 0 for a null handle.
///
/// # Safety
/// `feats` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gaffine_features_len(feats: *const GaffineFeatures) -> usize {
    feats.as_ref().map_or(0, |f| f.0.len())
}

/// Copies feature `index` into `out`.
///
/// # Safety
/// `feats` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gaffine_features_get(
    feats: *const GaffineFeatures,
    index: usize,
    out: *mut GaffineFeature,
) -> GaffineStatus {
    guard(|| {
        let feats = ref_arg(feats, "feats")?;
        let out = out_arg(out, "out")?;
        let f = feats.0.get(index).ok_or_else(|| {
            Failure(GaffineStatus::OutOfRange, format!("index {index} out of range for {} features", feats.0.len()))
        })?;
        let m = f.shape_matrix();
        *out = GaffineFeature {
            x: f.x,
            y: f.y,
            sigma: f.sigma,
            alpha: f.alpha,
            beta: f.beta,
            theta: f.theta,
            c: f.c,
            d: f.d,
            dog_value: f.dog_value,
            sm_x: m.x,
            sm_y: m.y,
            sm_z: m.z,
        };
        Ok(())
    })
}

/// Writes the list in the text feature-file format.
///
/// # Safety
/// `feats` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gaffine_features_write(feats: *const GaffineFeatures, path: *const c_char) -> GaffineStatus {
    guard(|| {
        let feats = ref_arg(feats, "feats")?;
        write_features(str_arg(path, "path")?, &feats.0).map_err(|e| Failure(GaffineStatus::Io, e.to_string()))
    })
}

/// Releases a feature list. Null is ignored.
///
/// # Safety
/// `feats` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gaffine_features_free(feats: *mut GaffineFeatures) {
    if !feats.is_null() {
        drop(Box::from_raw(feats));
    }
}

// ---------------------------------------------------------------- closed-form solver

/// `H = (α/σ)²` from the Hessian eigen ratio `r ≥ 1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gaffine_solve_h(r: f64, out: *mut f64) -> GaffineStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = solve_h(r).map_err(|e| Failure(GaffineStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// `K = (β/α)²` from the eigen ratio and `H`.
#[no_mangle]
pub extern "C" fn gaffine_solve_k(r: f64, h_sq: f64) -> f64 {
    solve_k(r, h_sq)
}

/// Aspect ratio admitted by an eigen-ratio threshold.
#[no_mangle]
pub extern "C" fn gaffine_k_from_r(r: f64) -> f64 {
    k_from_r(r)
}

/// Eigen-ratio threshold that admits aspect ratio `k`.
#[no_mangle]
pub extern "C" fn gaffine_r_from_k(k: f64) -> f64 {
    r_from_k(k)
}
