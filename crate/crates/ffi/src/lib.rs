//! C ABI over checkpoint inference, report labeling and the evaluation
//! metrics.
//!
//! Every fallible function returns an [`EdjStatus`]. On failure the message
//! is kept per thread and can be read with [`edj_last_error`]. Outputs are
//! written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::OnceLock;

use edemajoint::gradnet::Tensor;
use edemajoint::textlab::{label_text, Ruleset};
use edemajoint::trainkit::{infer_image, load_checkpoint, Checkpoint};
use edemajoint::{evalkit, Error};

/// Number of severity classes, and the length of every probability buffer.
pub const EDJ_NUM_CLASSES: usize = 4;

/// Level written by [`edj_label_report`] when no keyword matched.
pub const EDJ_UNLABELED: i32 = -1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdjStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Integrity = 4,
    UnsupportedVersion = 5,
    Shape = 6,
    InvalidArgument = 7,
    DegenerateInput = 8,
    EmptyDocument = 9,
    Numeric = 10,
    Panic = 11,
}

/// A loaded checkpoint. Only ever handled through a pointer.
pub struct EdjModel {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> EdjStatus {
    match err {
        Error::EmptyDocument => EdjStatus::EmptyDocument,
        Error::Config(_) | Error::Parameter(_) | Error::EmptyClassification => EdjStatus::InvalidArgument,
        Error::Shape { .. } => EdjStatus::Shape,
        Error::NumericOverflow(_) => EdjStatus::Numeric,
        Error::DegenerateInput(_) | Error::DegenerateLabels(_) => EdjStatus::DegenerateInput,
        Error::Integrity(_) | Error::Json(_) => EdjStatus::Integrity,
        Error::Version { .. } => EdjStatus::UnsupportedVersion,
        Error::File { .. } | Error::Io(_) => EdjStatus::Io,
    }
}

struct Failure(EdjStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EdjStatus::NullArgument, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EdjStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EdjStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EdjStatus::Panic
        }
    }
}

unsafe fn utf8<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| Failure(EdjStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn default_rules() -> &'static Ruleset {
    static RULES: OnceLock<Ruleset> = OnceLock::new();
    RULES.get_or_init(Ruleset::default_rules)
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn edj_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Static, nul-terminated library version.
#[no_mangle]
pub extern "C" fn edj_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file. On success `*out` owns a model that must be
/// released with [`edj_model_free`].
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn edj_model_load(path: *const c_char, out: *mut *mut EdjModel) -> EdjStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = utf8(path, "path")?;
        let checkpoint = load_checkpoint(Path::new(path))?;
        *out = Box::into_raw(Box::new(EdjModel { checkpoint }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`edj_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn edj_model_free(model: *mut EdjModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side length of the square images the model expects, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn edj_model_image_size(model: *const EdjModel) -> usize {
    model.as_ref().map_or(0, |m| m.checkpoint.config.model.image_size)
}

/// Severity probabilities for one grayscale image, row-major with values in
/// `[0, 1]`. Writes [`EDJ_NUM_CLASSES`] values to `out_probs`.
///
/// # Safety
/// `pixels` must hold `height * width` values and `out_probs` room for four.
#[no_mangle]
pub unsafe extern "C" fn edj_model_infer(
    model: *const EdjModel,
    pixels: *const f64,
    height: usize,
    width: usize,
    out_probs: *mut f64,
) -> EdjStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out_probs.is_null() {
            return Err(null("out_probs"));
        }
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Failure(EdjStatus::InvalidArgument, "image size overflows".into()))?;
        let data = slice(pixels, n, "pixels")?.to_vec();
        let image = Tensor::new(vec![1, height, width], data)?;
        let probs = infer_image(&model.checkpoint, &image)?;
        ptr::copy_nonoverlapping(probs.0.as_ptr(), out_probs, EDJ_NUM_CLASSES);
        Ok(())
    })
}

/// Labels one raw report with the built-in keyword rules. Writes the level
/// in `0..=3`, or [`EDJ_UNLABELED`] when nothing matched.
///
/// # Safety
/// `text` must be a nul-terminated string and `out_level` writable.
#[no_mangle]
pub unsafe extern "C" fn edj_label_report(text: *const c_char, out_level: *mut i32) -> EdjStatus {
    guard(|| {
        if out_level.is_null() {
            return Err(null("out_level"));
        }
        let text = utf8(text, "text")?;
        let result = label_text(text, default_rules())?;
        *out_level = result.level.map_or(EDJ_UNLABELED, i32::from);
        Ok(())
    })
}

/// Area under the ROC curve with tied scores counted as one half. A nonzero
/// label byte marks a positive.
///
/// # Safety
/// `scores` and `labels` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn edj_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> EdjStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scores = slice(scores, n, "scores")?;
        let labels: Vec<bool> = slice(labels, n, "labels")?.iter().map(|&b| b != 0).collect();
        *out = evalkit::auc(scores, &labels)?;
        Ok(())
    })
}

/// Unweighted mean of the per-class F1 over all four classes.
///
/// # Safety
/// `predicted` and `gold` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn edj_macro_f1(predicted: *const u8, gold: *const u8, n: usize, out: *mut f64) -> EdjStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let predicted = slice(predicted, n, "predicted")?;
        let gold = slice(gold, n, "gold")?;
        *out = evalkit::macro_f1(predicted, gold)?;
        Ok(())
    })
}
