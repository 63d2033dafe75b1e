//! C interface to echomark.
//!
//! Objects cross the boundary as opaque handles (`EmClip`, `EmReport`) that
//! the caller releases with the matching `*_free` function. Every fallible
//! call returns an [`EmStatus`]; on failure [`em_last_error`] describes the
//! problem for the calling thread. Strings returned by the library are
//! released with [`em_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use echomark::audio::{load_audio, resample, save_audio, AudioClip, WavFormat};
use echomark::detect::{Band, DetectionReport, SingleEchoDetector, SpreadDetector};
use echomark::dsp::real_cepstrum;
use echomark::embed::{embed_single_echo, embed_spread, EchoKey, SpreadKey};
use echomark::eval::roc;
use echomark::patterns::{generate_pattern, Pattern};
use echomark::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ClipTooShort = 3,
    Io = 4,
    UnsupportedFormat = 5,
    InvalidKey = 6,
    CapacityExceeded = 7,
    /// The requested value does not exist, e.g. a z-score at a lag outside the band.
    NotAvailable = 8,
    Panic = 99,
}

/// Sample encoding for [`em_clip_save`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmWavFormat {
    Pcm16 = 0,
    Float32 = 1,
}

/// A mono audio clip.
pub struct EmClip(AudioClip);

/// The outcome of a detection.
pub struct EmReport(DetectionReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> EmStatus {
    match err {
        Error::ClipTooShort { .. } => EmStatus::ClipTooShort,
        Error::Read { .. } | Error::Write { .. } | Error::Io { .. } | Error::Json { .. } => EmStatus::Io,
        Error::UnsupportedFormat { .. } | Error::EmptyAudio { .. } => EmStatus::UnsupportedFormat,
        Error::InvalidKey(_) => EmStatus::InvalidKey,
        Error::CapacityExceeded { .. } => EmStatus::CapacityExceeded,
        _ => EmStatus::InvalidArgument,
    }
}

enum Failure {
    Status(EmStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(EmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EmStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            let status = status_of(&e);
            set_error(e.to_string());
            status
        }
        Ok(Err(Failure::Status(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            EmStatus::Panic
        }
    }
}

unsafe fn clip_ref<'a>(clip: *const EmClip) -> Result<&'a AudioClip, Failure> {
    clip.as_ref().map(|c| &c.0).ok_or_else(|| null("clip"))
}

unsafe fn report_ref<'a>(report: *const EmReport) -> Result<&'a DetectionReport, Failure> {
    report.as_ref().map(|r| &r.0).ok_or_else(|| null("report"))
}

unsafe fn path_arg(path: *const c_char) -> Result<String, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Status(EmStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn slice_arg<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_clip(out: *mut *mut EmClip, clip: AudioClip) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(Box::into_raw(Box::new(EmClip(clip))));
    Ok(())
}

unsafe fn put_report(out: *mut *mut EmReport, report: DetectionReport) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(Box::into_raw(Box::new(EmReport(report))));
    Ok(())
}

unsafe fn spread_key(bits: *const u8, len: usize, alpha: f64, delta: usize) -> Result<SpreadKey, Failure> {
    let pattern = Pattern::from_bits(slice_arg(bits, len, "bits")?)?;
    Ok(SpreadKey::new(pattern, alpha, delta)?)
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn em_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn em_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `len` samples into a new clip.
///
/// # Safety
/// `samples` must point to `len` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_clip_new(
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    out: *mut *mut EmClip,
) -> EmStatus {
    guard(|| {
        let data = slice_arg(samples, len, "samples")?;
        put_clip(out, AudioClip::new(data.to_vec(), sample_rate)?)
    })
}

/// Reads a WAV file as mono at its own rate.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn em_clip_load(path: *const c_char, out: *mut *mut EmClip) -> EmStatus {
    guard(|| put_clip(out, load_audio(path_arg(path)?)?))
}

/// Writes a clip as a mono WAV file. `clipped` (may be null) receives the
/// number of saturated samples.
///
/// # Safety
/// `clip` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn em_clip_save(
    clip: *const EmClip,
    path: *const c_char,
    format: EmWavFormat,
    clipped: *mut usize,
) -> EmStatus {
    guard(|| {
        let format = match format {
            EmWavFormat::Pcm16 => WavFormat::Pcm16,
            EmWavFormat::Float32 => WavFormat::Float32,
        };
        let report = save_audio(clip_ref(clip)?, path_arg(path)?, format)?;
        if !clipped.is_null() {
            clipped.write(report.clipped);
        }
        Ok(())
    })
}

/// Sample count, or 0 for a null clip.
///
/// # Safety
/// `clip` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn em_clip_len(clip: *const EmClip) -> usize {
    clip.as_ref().map_or(0, |c| c.0.len())
}

/// Sample rate in Hz, or 0 for a null clip.
///
/// # Safety
/// `clip` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn em_clip_sample_rate(clip: *const EmClip) -> u32 {
    clip.as_ref().map_or(0, |c| c.0.sample_rate())
}

/// Borrowed pointer to the samples, valid while the clip lives.
///
/// # Safety
/// `clip` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn em_clip_samples(clip: *const EmClip) -> *const f64 {
    clip.as_ref().map_or(ptr::null(), |c| c.0.samples().as_ptr())
}

/// # Safety
/// `clip` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn em_clip_free(clip: *mut EmClip) {
    if !clip.is_null() {
        drop(Box::from_raw(clip));
    }
}

/// # Safety
/// `clip` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn em_resample(clip: *const EmClip, target_rate: u32, out: *mut *mut EmClip) -> EmStatus {
    guard(|| put_clip(out, resample(clip_ref(clip)?, target_rate)?))
}

/// Adds `alpha` times the clip delayed by `delta` samples.
///
/// # Safety
/// `clip` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn em_embed_single(
    clip: *const EmClip,
    delta: usize,
    alpha: f64,
    out: *mut *mut EmClip,
) -> EmStatus {
    guard(|| put_clip(out, embed_single_echo(clip_ref(clip)?, &EchoKey::new(delta, alpha)?)?))
}

/// Embeds a time-spread echo keyed by `len` pattern bits (each 0 or 1).
///
/// # Safety
/// `bits` must point to `len` bytes; `clip` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn em_embed_spread(
    clip: *const EmClip,
    bits: *const u8,
    len: usize,
    alpha: f64,
    delta: usize,
    out: *mut *mut EmClip,
) -> EmStatus {
    guard(|| {
        let key = spread_key(bits, len, alpha, delta)?;
        put_clip(out, embed_spread(clip_ref(clip)?, &key)?)
    })
}

/// Single-echo detection over the inclusive band `[band_start, band_end]`.
/// A negative `key_lag` means no key.
///
/// # Safety
/// `clip` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn em_detect_single(
    clip: *const EmClip,
    band_start: usize,
    band_end: usize,
    key_lag: i64,
    out: *mut *mut EmReport,
) -> EmStatus {
    guard(|| {
        let band = Band::new(band_start, band_end)?;
        let lag = usize::try_from(key_lag).ok();
        put_report(out, SingleEchoDetector::with_band(band).detect(clip_ref(clip)?, lag)?)
    })
}

/// Spread-echo detection with the key's pattern, lag and strength.
///
/// # Safety
/// `bits` must point to `len` bytes; `clip` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn em_detect_spread(
    clip: *const EmClip,
    bits: *const u8,
    len: usize,
    alpha: f64,
    delta: usize,
    enhanced: bool,
    out: *mut *mut EmReport,
) -> EmStatus {
    guard(|| {
        let key = spread_key(bits, len, alpha, delta)?;
        put_report(out, SpreadDetector::new(enhanced).detect(clip_ref(clip)?, &key)?)
    })
}

/// Lag with the largest z-score.
///
/// # Safety
/// `report` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn em_report_argmax_lag(report: *const EmReport, out: *mut usize) -> EmStatus {
    guard(|| put(out, report_ref(report)?.argmax_lag))
}

/// z-score at the key lag; `NotAvailable` without a key or when degenerate.
///
/// # Safety
/// `report` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn em_report_z_at_key(report: *const EmReport, out: *mut f64) -> EmStatus {
    guard(|| match report_ref(report)?.z_at_key {
        Some(z) => put(out, z),
        None => Err(Failure::Status(EmStatus::NotAvailable, "no z-score at the key lag".into())),
    })
}

/// z-score at any lag inside the report's band.
///
/// # Safety
/// `report` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn em_report_z_at(report: *const EmReport, lag: usize, out: *mut f64) -> EmStatus {
    guard(|| match report_ref(report)?.profile.z_at(lag) {
        Some(z) => put(out, z),
        None => Err(Failure::Status(EmStatus::NotAvailable, format!("no z-score at lag {lag}"))),
    })
}

/// Serializes the report (with its full profile) to a JSON string that the
/// caller frees with [`em_string_free`].
///
/// # Safety
/// `report` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn em_report_to_json(report: *const EmReport, out: *mut *mut c_char) -> EmStatus {
    guard(|| {
        let text = serde_json::to_string(report_ref(report)?)
            .map_err(|e| Failure::Status(EmStatus::InvalidArgument, e.to_string()))?;
        put(out, CString::new(text).expect("JSON has no NUL").into_raw())
    })
}

/// # Safety
/// `report` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn em_report_free(report: *mut EmReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn em_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Writes the clip's real cepstrum into `out`, which must hold
/// `em_clip_len(clip)` doubles (`capacity` says how many it holds).
///
/// # Safety
/// `out` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn em_real_cepstrum(clip: *const EmClip, out: *mut f64, capacity: usize) -> EmStatus {
    guard(|| {
        let clip = clip_ref(clip)?;
        if capacity < clip.len() {
            return Err(Failure::Status(
                EmStatus::InvalidArgument,
                format!("buffer holds {capacity} values, need {}", clip.len()),
            ));
        }
        if out.is_null() {
            return Err(null("output buffer"));
        }
        let c = real_cepstrum(clip)?;
        std::slice::from_raw_parts_mut(out, c.len()).copy_from_slice(c.values());
        Ok(())
    })
}

/// Area under the ROC curve separating `true_scores` from `false_scores`.
///
/// # Safety
/// The score pointers must cover their lengths and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn em_roc_auc(
    true_scores: *const f64,
    n_true: usize,
    false_scores: *const f64,
    n_false: usize,
    out: *mut f64,
) -> EmStatus {
    guard(|| {
        let t = slice_arg(true_scores, n_true, "true_scores")?;
        let f = slice_arg(false_scores, n_false, "false_scores")?;
        put(out, roc(t, f)?.auroc)
    })
}

/// Fills `bits` with a seeded pattern of `len` bits (0 or 1) whose runs of
/// equal bits never exceed two.
///
/// # Safety
/// `bits` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn em_generate_pattern(len: usize, seed: u64, bits: *mut u8) -> EmStatus {
    guard(|| {
        if bits.is_null() {
            return Err(null("bits"));
        }
        let p = generate_pattern(len, seed)?;
        let out = std::slice::from_raw_parts_mut(bits, len);
        for (o, &b) in out.iter_mut().zip(p.bits()) {
            *o = b as u8;
        }
        Ok(())
    })
}
