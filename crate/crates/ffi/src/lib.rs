//! C ABI over the waveletae detector.
//!
//! Every entry point returns a [`WaeStatus`]. On failure the message is kept
//! per thread and can be read with [`wae_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use waveletae::data::MultiSeries;
use waveletae::metrics::compute_metrics;
use waveletae::streaming::{vote_decide, BlockVerdict, VoteConfig, VoteState};
use waveletae::training::DetectorState;
use waveletae::wavelet::{dwt_level, idwt_level, WaveletFamily};
use waveletae::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaeStatus {
    Ok = 0,
    Dimension = 1,
    Length = 2,
    Level = 3,
    Contract = 4,
    Domain = 5,
    Config = 6,
    Data = 7,
    Capability = 8,
    Ingestion = 9,
    Format = 10,
    Io = 11,
    NullPointer = 12,
    InvalidUtf8 = 13,
    Panic = 14,
}

impl From<&Error> for WaeStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Dimension(_) => WaeStatus::Dimension,
            Error::Length(_) => WaeStatus::Length,
            Error::Level(_) => WaeStatus::Level,
            Error::Contract(_) => WaeStatus::Contract,
            Error::Domain(_) => WaeStatus::Domain,
            Error::Config(_) => WaeStatus::Config,
            Error::Data(_) => WaeStatus::Data,
            Error::Capability(_) => WaeStatus::Capability,
            Error::Ingestion { .. } => WaeStatus::Ingestion,
            Error::Format(_) => WaeStatus::Format,
            Error::Io { .. } => WaeStatus::Io,
        }
    }
}

/// Wavelet family codes accepted by the transform entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaeWaveletFamily {
    Haar = 0,
    Db4 = 1,
}

// Taken as a plain integer so that an out-of-range value from C is an
// error rather than undefined behaviour.
fn family_from(code: u32) -> Result<WaveletFamily, Failure> {
    match code {
        c if c == WaeWaveletFamily::Haar as u32 => Ok(WaveletFamily::Haar),
        c if c == WaeWaveletFamily::Db4 as u32 => Ok(WaveletFamily::Daubechies4),
        other => Err(failure(WaeStatus::Config, format!("unknown wavelet family code {other}"))),
    }
}

/// What a push produced for the block leaving the window.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaeVerdictKind {
    /// No block left the window on this push.
    None = 0,
    /// The block collected every vote.
    Final = 1,
    /// The block left the window with a partial tally.
    Expired = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WaeBlockVerdict {
    pub block_index: usize,
    pub verdict: u8,
    pub votes_positive: usize,
    pub votes_total: usize,
}

impl From<BlockVerdict> for WaeBlockVerdict {
    fn from(v: BlockVerdict) -> Self {
        Self {
            block_index: v.block_index,
            verdict: v.verdict,
            votes_positive: v.votes_positive,
            votes_total: v.votes_total,
        }
    }
}

/// Confusion counts and derived metrics. A `degenerate_*` flag of 1 means
/// the metric had a zero denominator and is reported as 0.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WaeMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate_precision: u8,
    pub degenerate_recall: u8,
    pub degenerate_f1: u8,
}

/// A trained detector loaded from a container file.
pub struct WaeDetector {
    state: DetectorState,
}

/// Incremental sliding-window vote state for one stream.
pub struct WaeVoteStream {
    state: VoteState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: WaeStatus,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            status: WaeStatus::from(&e),
            message: e.to_string(),
        }
    }
}

fn failure(status: WaeStatus, message: impl Into<String>) -> Failure {
    Failure {
        status,
        message: message.into(),
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WaeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WaeStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_owned());
            set_last_error(format!("panic: {msg}"));
            WaeStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(failure(WaeStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null with `len == 0`, or point to `len` readable values.
unsafe fn slice_in<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must point to `len` writable values.
unsafe fn slice_out<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread, or null if none failed.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wae_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn wae_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a detector container from `path`.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn wae_detector_load(path: *const c_char, out: *mut *mut WaeDetector) -> WaeStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| failure(WaeStatus::InvalidUtf8, "path is not valid UTF-8"))?;
        let state = DetectorState::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(WaeDetector { state }));
        Ok(())
    })
}

/// Releases a detector. Null is ignored.
///
/// # Safety
/// `det` must come from [`wae_detector_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wae_detector_free(det: *mut WaeDetector) {
    if !det.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(det))));
    }
}

/// Channel count and fragment length the detector expects.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn wae_detector_info(
    det: *const WaeDetector,
    channels: *mut usize,
    fragment_length: *mut usize,
) -> WaeStatus {
    guard(|| {
        non_null(det, "det")?;
        non_null(channels, "channels")?;
        non_null(fragment_length, "fragment_length")?;
        let state = &(*det).state;
        *channels = state.channels();
        *fragment_length = state.fragment_length();
        Ok(())
    })
}

/// Labels one raw fragment of `channels × fragment_length` values laid out
/// channel-major. Writes the 0/1 label and the score it was cut from.
///
/// # Safety
/// `data` must hold `len` values; `label` and `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wae_detector_predict(
    det: *const WaeDetector,
    data: *const f64,
    len: usize,
    label: *mut u8,
    score: *mut f64,
) -> WaeStatus {
    guard(|| {
        non_null(det, "det")?;
        non_null(label, "label")?;
        non_null(score, "score")?;
        let state = &(*det).state;
        let values = slice_in(data, len, "data")?;
        let (c, t) = (state.channels(), state.fragment_length());
        if values.len() != c * t {
            return Err(failure(
                WaeStatus::Dimension,
                format!("fragment has {} values, expected {c} channels × {t}", values.len()),
            ));
        }
        let fragment = MultiSeries::anonymous(c, values.to_vec(), t)?;
        let (l, s) = state.predict_fragment(&fragment)?;
        *label = l;
        *score = s;
        Ok(())
    })
}

/// Creates a vote stream with window `window`, step `step` and vote
/// threshold `vote_threshold` for `channels`-channel blocks.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wae_vote_stream_new(
    window: usize,
    step: usize,
    vote_threshold: f64,
    channels: usize,
    out: *mut *mut WaeVoteStream,
) -> WaeStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let cfg = VoteConfig {
            window,
            step,
            vote_threshold,
        };
        let state = VoteState::new(cfg, channels)?;
        *out = Box::into_raw(Box::new(WaeVoteStream { state }));
        Ok(())
    })
}

/// Releases a vote stream. Null is ignored.
///
/// # Safety
/// `stream` must come from [`wae_vote_stream_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wae_vote_stream_free(stream: *mut WaeVoteStream) {
    if !stream.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(stream))));
    }
}

/// Pushes one block of `channels × step` values, channel-major, and
/// classifies the window once it is full. When a block leaves the window,
/// `kind` says whether its tally was complete and `verdict` holds it.
///
/// # Safety
/// `block` must hold `len` values; `verdict` and `kind` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wae_vote_stream_push(
    stream: *mut WaeVoteStream,
    det: *const WaeDetector,
    block: *const f64,
    len: usize,
    verdict: *mut WaeBlockVerdict,
    kind: *mut WaeVerdictKind,
) -> WaeStatus {
    guard(|| {
        non_null(stream, "stream")?;
        non_null(det, "det")?;
        non_null(verdict, "verdict")?;
        non_null(kind, "kind")?;
        let values = slice_in(block, len, "block")?;
        let outcome = (*stream).state.push_block(&(*det).state, values)?;
        let (k, v) = if let Some(v) = outcome.finals.first() {
            (WaeVerdictKind::Final, (*v).into())
        } else if let Some(v) = outcome.expired.first() {
            (WaeVerdictKind::Expired, (*v).into())
        } else {
            (WaeVerdictKind::None, WaeBlockVerdict::default())
        };
        *kind = k;
        *verdict = v;
        Ok(())
    })
}

/// Blocks pushed into the stream so far.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn wae_vote_stream_blocks_pushed(stream: *const WaeVoteStream, out: *mut usize) -> WaeStatus {
    guard(|| {
        non_null(stream, "stream")?;
        non_null(out, "out")?;
        *out = (*stream).state.blocks_pushed();
        Ok(())
    })
}

/// Majority decision: 1 when `positive / total >= vote_threshold`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wae_vote_decide(positive: usize, total: usize, vote_threshold: f64, out: *mut u8) -> WaeStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = vote_decide(positive, total, vote_threshold)?;
        Ok(())
    })
}

/// One analysis step of a length-`len` signal. `family` is a
/// [`WaeWaveletFamily`] value. `approx` and `detail` must
/// each hold `len / 2` values.
///
/// # Safety
/// Buffers must match the lengths above.
#[no_mangle]
pub unsafe extern "C" fn wae_dwt_level(
    signal: *const f64,
    len: usize,
    family: u32,
    approx: *mut f64,
    detail: *mut f64,
) -> WaeStatus {
    guard(|| {
        let x = slice_in(signal, len, "signal")?;
        let (a, d) = dwt_level(x, family_from(family)?)?;
        slice_out(approx, a.len(), "approx")?.copy_from_slice(&a);
        slice_out(detail, d.len(), "detail")?.copy_from_slice(&d);
        Ok(())
    })
}

/// Inverse of [`wae_dwt_level`]: `approx` and `detail` hold `half` values
/// each, `family` is a [`WaeWaveletFamily`] value and `out` receives `2 * half`.
///
/// # Safety
/// Buffers must match the lengths above.
#[no_mangle]
pub unsafe extern "C" fn wae_idwt_level(
    approx: *const f64,
    detail: *const f64,
    half: usize,
    family: u32,
    out: *mut f64,
) -> WaeStatus {
    guard(|| {
        let a = slice_in(approx, half, "approx")?;
        let d = slice_in(detail, half, "detail")?;
        let x = idwt_level(a, d, family_from(family)?)?;
        slice_out(out, x.len(), "out")?.copy_from_slice(&x);
        Ok(())
    })
}

/// Confusion counts and metrics of `n` 0/1 predictions against labels.
///
/// # Safety
/// `preds` and `labels` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wae_compute_metrics(
    preds: *const u8,
    labels: *const u8,
    n: usize,
    out: *mut WaeMetrics,
) -> WaeStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = slice_in(preds, n, "preds")?;
        let l = slice_in(labels, n, "labels")?;
        let m = compute_metrics(p, l)?;
        *out = WaeMetrics {
            tp: m.tp,
            fp: m.fp,
            tn: m.tn,
            fn_: m.fn_,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            degenerate_precision: u8::from(m.flags.precision),
            degenerate_recall: u8::from(m.flags.recall),
            degenerate_f1: u8::from(m.flags.f1),
        };
        Ok(())
    })
}
