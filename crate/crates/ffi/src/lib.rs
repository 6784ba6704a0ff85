//! C ABI over the stressbench core.
//!
//! Every function returns an [`SbStatus`]. On failure the message is kept
//! per thread and read with [`sb_last_error`]. Handles are opaque and owned
//! by the caller once returned; release them with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stressbench::audio::{read_wav, write_wav, Waveform};
use stressbench::degrade::{add_noise, NoiseCondition};
use stressbench::enhance::{enhance, Enhancer};
use stressbench::eval::{accuracy, postprocess};
use stressbench::model::Model;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numeric = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Mono audio signal.
pub struct SbWaveform(Waveform);

/// Trained classifier with its normalisation.
pub struct SbModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("no interior nul"));
}

fn fail(status: SbStatus, msg: impl Into<String>) -> SbStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning panics into `SbStatus::Panic`.
fn guard(f: impl FnOnce() -> SbStatus) -> SbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SbStatus::Panic, msg)
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<String, SbStatus> {
    if p.is_null() {
        return Err(fail(SbStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_string)
        .map_err(|_| fail(SbStatus::InvalidArgument, "path is not UTF-8"))
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> SbStatus {
    *out = Box::into_raw(Box::new(v));
    SbStatus::Ok
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn sb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static and nul-terminated.
#[no_mangle]
pub extern "C" fn sb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `len` samples into a new waveform.
///
/// # Safety
/// `samples` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_waveform_new(
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    out: *mut *mut SbWaveform,
) -> SbStatus {
    guard(|| {
        if out.is_null() || (samples.is_null() && len > 0) {
            return fail(SbStatus::NullPointer, "null argument");
        }
        let data = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(samples, len).to_vec()
        };
        match Waveform::new(data, sample_rate) {
            Ok(w) => put(out, SbWaveform(w)),
            Err(e) => fail(SbStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Reads a 16 kHz mono PCM16 WAV file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_waveform_read(path: *const c_char, out: *mut *mut SbWaveform) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return fail(SbStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_wav(&path) {
            Ok(w) => put(out, SbWaveform(w)),
            Err(e) => fail(SbStatus::Io, e.to_string()),
        }
    })
}

/// Writes the waveform as PCM16 WAV.
///
/// # Safety
/// `w` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sb_waveform_write(w: *const SbWaveform, path: *const c_char) -> SbStatus {
    guard(|| {
        let Some(w) = w.as_ref() else {
            return fail(SbStatus::NullPointer, "waveform is null");
        };
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match write_wav(&w.0, &path) {
            Ok(()) => SbStatus::Ok,
            Err(e) => fail(SbStatus::Io, e.to_string()),
        }
    })
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `w` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_waveform_len(w: *const SbWaveform) -> usize {
    w.as_ref().map_or(0, |w| w.0.len())
}

/// Sample rate in Hz; 0 for a null handle.
///
/// # Safety
/// `w` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_waveform_sample_rate(w: *const SbWaveform) -> u32 {
    w.as_ref().map_or(0, |w| w.0.sample_rate)
}

/// Copies the samples into `buf`, which must hold `sb_waveform_len(w)` doubles.
///
/// # Safety
/// `w` must be a live handle; `buf` must have room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sb_waveform_samples(w: *const SbWaveform, buf: *mut f64, cap: usize) -> SbStatus {
    guard(|| {
        let Some(w) = w.as_ref() else {
            return fail(SbStatus::NullPointer, "waveform is null");
        };
        if cap < w.0.len() {
            return fail(
                SbStatus::BufferTooSmall,
                format!("need {} samples, buffer holds {cap}", w.0.len()),
            );
        }
        if buf.is_null() && !w.0.is_empty() {
            return fail(SbStatus::NullPointer, "buffer is null");
        }
        if !w.0.is_empty() {
            ptr::copy_nonoverlapping(w.0.samples.as_ptr(), buf, w.0.len());
        }
        SbStatus::Ok
    })
}

/// # Safety
/// `w` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sb_waveform_free(w: *mut SbWaveform) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// White Gaussian noise at `snr_db` relative to the whole signal. Writes the
/// realised SNR to `measured_snr_db` when it is not null.
///
/// # Safety
/// `clean` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_add_noise(
    clean: *const SbWaveform,
    snr_db: f64,
    seed: u64,
    out: *mut *mut SbWaveform,
    measured_snr_db: *mut f64,
) -> SbStatus {
    guard(|| {
        let (Some(clean), false) = (clean.as_ref(), out.is_null()) else {
            return fail(SbStatus::NullPointer, "null argument");
        };
        match add_noise(&clean.0, NoiseCondition { snr_db, seed }) {
            Ok(mix) => {
                if !measured_snr_db.is_null() {
                    *measured_snr_db = mix.measured_snr_db();
                }
                put(out, SbWaveform(mix.mixed))
            }
            Err(e) => fail(SbStatus::InvalidArgument, e.to_string()),
        }
    })
}

unsafe fn run_enhancer(
    noisy: *const SbWaveform,
    enhancer: Enhancer,
    head_ms: f64,
    out: *mut *mut SbWaveform,
) -> SbStatus {
    guard(|| {
        let (Some(noisy), false) = (noisy.as_ref(), out.is_null()) else {
            return fail(SbStatus::NullPointer, "null argument");
        };
        if let Err(e) = enhancer.validate() {
            return fail(SbStatus::InvalidArgument, e.to_string());
        }
        match enhance(&noisy.0, &enhancer, head_ms) {
            Ok(w) => put(out, SbWaveform(w)),
            Err(e) => fail(SbStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Magnitude spectral subtraction with over-subtraction `alpha` and spectral
/// floor `beta`; the noise profile comes from the first `head_ms` ms.
///
/// # Safety
/// `noisy` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_enhance_spectral_subtraction(
    noisy: *const SbWaveform,
    alpha: f64,
    beta: f64,
    head_ms: f64,
    out: *mut *mut SbWaveform,
) -> SbStatus {
    run_enhancer(noisy, Enhancer::spectral_subtraction(alpha, beta), head_ms, out)
}

/// Decision-directed Wiener filter with a-priori SNR smoothing `smoothing`.
///
/// # Safety
/// `noisy` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_enhance_wiener(
    noisy: *const SbWaveform,
    smoothing: f64,
    head_ms: f64,
    out: *mut *mut SbWaveform,
) -> SbStatus {
    run_enhancer(noisy, Enhancer::wiener(smoothing), head_ms, out)
}

/// Loads a model checkpoint written by `stressbench train`.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_model_load(path: *const c_char, out: *mut *mut SbModel) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return fail(SbStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Model::load(std::path::Path::new(&path)) {
            Ok(m) => put(out, SbModel(m)),
            Err(stressbench::model::ModelError::Io { path, source }) => {
                fail(SbStatus::Io, format!("{path}: {source}"))
            }
            Err(e) => fail(SbStatus::Format, e.to_string()),
        }
    })
}

/// Feature count per row; 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_model_input_dim(m: *const SbModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.net.input_dim)
}

/// Stressed-class probabilities for `rows` row-major feature rows.
///
/// # Safety
/// `x` must hold `rows * sb_model_input_dim(m)` doubles and `probs` `rows`.
#[no_mangle]
pub unsafe extern "C" fn sb_model_predict(
    m: *const SbModel,
    x: *const f64,
    rows: usize,
    probs: *mut f64,
) -> SbStatus {
    guard(|| {
        let Some(m) = m.as_ref() else {
            return fail(SbStatus::NullPointer, "model is null");
        };
        if rows == 0 {
            return SbStatus::Ok;
        }
        if x.is_null() || probs.is_null() {
            return fail(SbStatus::NullPointer, "null buffer");
        }
        let x = std::slice::from_raw_parts(x, rows * m.0.net.input_dim);
        match m.0.predict_proba(x) {
            Ok(p) => {
                ptr::copy_nonoverlapping(p.as_ptr(), probs, rows);
                SbStatus::Ok
            }
            Err(e) => fail(SbStatus::Numeric, e.to_string()),
        }
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sb_model_free(m: *mut SbModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// One-stress-per-word labels for a word's syllable probabilities: 1 at the
/// most probable syllable (earliest on ties), 0 elsewhere.
///
/// # Safety
/// `probs` and `labels` must each hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn sb_postprocess(probs: *const f64, n: usize, labels: *mut u8) -> SbStatus {
    guard(|| {
        if probs.is_null() || labels.is_null() {
            return fail(SbStatus::NullPointer, "null buffer");
        }
        match postprocess(std::slice::from_raw_parts(probs, n)) {
            Ok(l) => {
                ptr::copy_nonoverlapping(l.as_ptr(), labels, n);
                SbStatus::Ok
            }
            Err(e) => fail(SbStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Percentage of positions where `predicted` equals `gold`.
///
/// # Safety
/// `predicted` and `gold` must hold `n` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_accuracy(
    predicted: *const u8,
    gold: *const u8,
    n: usize,
    out: *mut f64,
) -> SbStatus {
    guard(|| {
        if predicted.is_null() || gold.is_null() || out.is_null() {
            return fail(SbStatus::NullPointer, "null argument");
        }
        if n == 0 {
            return fail(SbStatus::InvalidArgument, "no labels");
        }
        let p = std::slice::from_raw_parts(predicted, n);
        let g = std::slice::from_raw_parts(gold, n);
        match accuracy(p, g) {
            Ok(a) => {
                *out = a;
                SbStatus::Ok
            }
            Err(e) => fail(SbStatus::InvalidArgument, e.to_string()),
        }
    })
}
