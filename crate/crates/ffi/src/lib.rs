//! C ABI for light-field super-resolution inference.
//!
//! Models are opaque handles created by [`lfsafa_model_load`] and released
//! with [`lfsafa_model_free`]. Every fallible call returns an
//! [`LfsafaStatus`]; on failure [`lfsafa_last_error`] describes the cause.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use lfsafa::adapt::AdaptationParams;
use lfsafa::backbone::BackboneParams;
use lfsafa::data::{ColorSpace, LightField};
use lfsafa::metrics;
use lfsafa::nn::Tensor;
use lfsafa::pipeline::{check_compatible, super_resolve};
use lfsafa::train::{load_adaptation, load_backbone};
use lfsafa::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LfsafaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Checkpoint = 4,
    Io = 5,
    Internal = 6,
    Panic = 7,
}

/// Opaque inference model.
pub struct LfsafaModel {
    backbone: BackboneParams,
    adapt: Option<AdaptationParams>,
}

/// Static properties of a loaded model.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LfsafaModelInfo {
    pub scale: usize,
    /// Channels the backbone processes (1 for luma models).
    pub channels: usize,
    /// Angular resolution required by the adaptation module, 0 without one.
    pub angular: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

fn status_of(err: &Error) -> LfsafaStatus {
    match err {
        Error::InvalidArgument(_) | Error::MissingView { .. } | Error::Protocol(_) => LfsafaStatus::InvalidArgument,
        Error::ShapeMismatch { .. } => LfsafaStatus::ShapeMismatch,
        Error::Checkpoint { .. } => LfsafaStatus::Checkpoint,
        Error::Io { .. } | Error::Image { .. } => LfsafaStatus::Io,
        _ => LfsafaStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (LfsafaStatus, String)>) -> LfsafaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LfsafaStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LfsafaStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (LfsafaStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LfsafaStatus, String) {
    (LfsafaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (LfsafaStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (LfsafaStatus::InvalidArgument, format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Loads a backbone checkpoint and, when `adapt_path` is non-null, an
/// adaptation checkpoint. On success `*out` owns a new model.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lfsafa_model_load(
    backbone_path: *const c_char,
    adapt_path: *const c_char,
    out: *mut *mut LfsafaModel,
) -> LfsafaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let bb_path = path_arg(backbone_path, "backbone_path")?;
        let (backbone, _) = load_backbone(&bb_path).map_err(lib_err)?;
        let adapt = if adapt_path.is_null() {
            None
        } else {
            let path = path_arg(adapt_path, "adapt_path")?;
            let (p, meta) = load_adaptation(&path, None).map_err(lib_err)?;
            if meta.scale != backbone.config.scale {
                return Err((
                    LfsafaStatus::InvalidArgument,
                    format!("adaptation is x{} but the backbone is x{}", meta.scale, backbone.config.scale),
                ));
            }
            check_compatible(&backbone, &p, p.config.angular).map_err(lib_err)?;
            Some(p)
        };
        *out = Box::into_raw(Box::new(LfsafaModel { backbone, adapt }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`lfsafa_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lfsafa_model_free(model: *mut LfsafaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lfsafa_model_info(model: *const LfsafaModel, out: *mut LfsafaModelInfo) -> LfsafaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = LfsafaModelInfo {
            scale: model.backbone.config.scale,
            channels: model.backbone.config.image_channels,
            angular: model.adapt.as_ref().map_or(0, |a| a.config.angular),
        };
        Ok(())
    })
}

/// Super-resolves an `angular x angular` light field.
///
/// `views` holds `[angular, angular, channels, height, width]` floats in
/// `[0, 1]`; `channels` is 1 (luma) or 3 (RGB). `out` receives the same
/// layout at `scale` times the spatial size and must hold exactly
/// `angular^2 * channels * (scale*height) * (scale*width)` floats.
///
/// # Safety
/// `views` must point to the declared number of floats and `out` to `out_len`.
#[no_mangle]
pub unsafe extern "C" fn lfsafa_super_resolve(
    model: *const LfsafaModel,
    views: *const f32,
    angular: usize,
    channels: usize,
    height: usize,
    width: usize,
    out: *mut f32,
    out_len: usize,
) -> LfsafaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if views.is_null() {
            return Err(null("views"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let space = match channels {
            1 => ColorSpace::Y,
            3 => ColorSpace::Rgb,
            c => return Err((LfsafaStatus::InvalidArgument, format!("channels must be 1 or 3, got {c}"))),
        };
        let len = angular
            .checked_mul(angular)
            .and_then(|n| n.checked_mul(channels * height))
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| (LfsafaStatus::InvalidArgument, "light field size overflows".to_string()))?;
        let s = model.backbone.config.scale;
        let expected = len * s * s;
        if out_len != expected {
            return Err((
                LfsafaStatus::ShapeMismatch,
                format!("out holds {out_len} floats but the result needs {expected}"),
            ));
        }
        let data = std::slice::from_raw_parts(views, len).to_vec();
        let tensor = Tensor::new(vec![angular, angular, channels, height, width], data).map_err(lib_err)?;
        let lf = LightField::new(tensor, space).map_err(lib_err)?;
        let sr = super_resolve(&model.backbone, model.adapt.as_ref(), &lf).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(out, expected).copy_from_slice(sr.tensor().data());
        Ok(())
    })
}

unsafe fn image_pair(
    reference: *const f32,
    test: *const f32,
    height: usize,
    width: usize,
) -> Result<(Tensor, Tensor), (LfsafaStatus, String)> {
    if reference.is_null() {
        return Err(null("reference"));
    }
    if test.is_null() {
        return Err(null("test"));
    }
    let n = height * width;
    let r = Tensor::new(vec![1, height, width], std::slice::from_raw_parts(reference, n).to_vec()).map_err(lib_err)?;
    let t = Tensor::new(vec![1, height, width], std::slice::from_raw_parts(test, n).to_vec()).map_err(lib_err)?;
    Ok((r, t))
}

/// PSNR in dB of two single-channel `height x width` images in `[0, 1]`.
/// Identical images give positive infinity.
///
/// # Safety
/// Both images must hold `height * width` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lfsafa_psnr(
    reference: *const f32,
    test: *const f32,
    height: usize,
    width: usize,
    out: *mut f64,
) -> LfsafaStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (r, t) = image_pair(reference, test, height, width)?;
        *out = metrics::psnr(&r, &t).map_err(lib_err)?;
        Ok(())
    })
}

/// SSIM of two single-channel `height x width` images in `[0, 1]`.
///
/// # Safety
/// Both images must hold `height * width` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lfsafa_ssim(
    reference: *const f32,
    test: *const f32,
    height: usize,
    width: usize,
    out: *mut f64,
) -> LfsafaStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (r, t) = image_pair(reference, test, height, width)?;
        *out = metrics::ssim(&r, &t).map_err(lib_err)?;
        Ok(())
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lfsafa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lfsafa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
