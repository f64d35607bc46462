//! C ABI over the `dualpath` library.
//!
//! Objects are opaque handles created by `dp_*_new`/`dp_sample`/
//! `dp_reconstruct_*` and released with the matching `dp_*_free`. Every
//! fallible call returns a `DpStatus`; on failure `dp_last_error_message`
//! describes the most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dualpath::chain::{build_dual_path, build_single_path, ChainConfig, DetectionModel, LossPlacement};
use dualpath::entanglement::{negativity_gaussian, TwoModeCovariance};
use dualpath::estimate::estimate_moments_blocks;
use dualpath::gaussian::GaussianState;
use dualpath::reconstruction::{dpm_reconstruct, spm_reconstruct, AncillaPrior, ReconstructionResult, SpmOptions};
use dualpath::sampler::{sample, ShotBatch};
use dualpath::{Error, C64};
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DpStatus {
    DpOk = 0,
    DpErrNull = 1,
    DpErrInvalid = 2,
    DpErrUnphysical = 3,
    DpErrOrder = 4,
    DpErrMissing = 5,
    DpErrFormat = 6,
    DpErrIo = 7,
    DpErrBuffer = 8,
    DpErrPanic = 9,
}

pub const DP_INPUT_VACUUM: i32 = 0;
pub const DP_INPUT_THERMAL: i32 = 1;
pub const DP_INPUT_COHERENT: i32 = 2;
pub const DP_INPUT_SQUEEZED: i32 = 3;

pub const DP_LOSS_NONE: i32 = 0;
pub const DP_LOSS_BEFORE_AMP: i32 = 1;
pub const DP_LOSS_AFTER_AMP: i32 = 2;

/// Mirrors `ChainConfig`; `eta` is ignored when `loss_placement` is
/// `DP_LOSS_NONE`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DpChainConfig {
    pub g1: f64,
    pub g2: f64,
    pub n_amp1: f64,
    pub n_amp2: f64,
    pub n_anc: f64,
    pub n_iq1: f64,
    pub n_iq2: f64,
    pub eta: f64,
    pub loss_placement: i32,
    pub loss_n: f64,
    pub large_gain_approx: bool,
}

pub struct DpModel(DetectionModel);

pub struct DpShots(ShotBatch);

pub struct DpReconstruction(ReconstructionResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DpStatus {
    match e {
        Error::InvalidArgument(_) | Error::Fit(_) => DpStatus::DpErrInvalid,
        Error::Unphysical(_) | Error::NotSymmetric(_) | Error::NotPositiveSemidefinite(_) => DpStatus::DpErrUnphysical,
        Error::OrderTooHigh { .. } => DpStatus::DpErrOrder,
        Error::MissingMoment(_) => DpStatus::DpErrMissing,
        Error::Format(_) => DpStatus::DpErrFormat,
        Error::Io(_) => DpStatus::DpErrIo,
    }
}

/// Runs `f`, recording errors and panics for `dp_last_error_message`.
fn guard(f: impl FnOnce() -> Result<(), (DpStatus, String)>) -> DpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DpStatus::DpOk,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DpStatus::DpErrPanic
        }
    }
}

fn lib<T>(r: dualpath::Result<T>) -> Result<T, (DpStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (DpStatus, String) {
    (DpStatus::DpErrNull, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (DpStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), (DpStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn dp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn dp_chain_config_default() -> DpChainConfig {
    let c = ChainConfig::default();
    DpChainConfig {
        g1: c.g1,
        g2: c.g2,
        n_amp1: c.n_amp1,
        n_amp2: c.n_amp2,
        n_anc: c.n_anc,
        n_iq1: c.n_iq1,
        n_iq2: c.n_iq2,
        eta: 1.0,
        loss_placement: DP_LOSS_NONE,
        loss_n: c.loss_n,
        large_gain_approx: c.large_gain_approx,
    }
}

fn chain_config(c: &DpChainConfig) -> Result<ChainConfig, (DpStatus, String)> {
    let placement = match c.loss_placement {
        DP_LOSS_NONE => LossPlacement::None,
        DP_LOSS_BEFORE_AMP => LossPlacement::BeforeAmp,
        DP_LOSS_AFTER_AMP => LossPlacement::AfterAmp,
        p => return Err((DpStatus::DpErrInvalid, format!("unknown loss placement {p}"))),
    };
    Ok(ChainConfig {
        g1: c.g1,
        g2: c.g2,
        n_amp1: c.n_amp1,
        n_amp2: c.n_amp2,
        n_anc: c.n_anc,
        n_iq1: c.n_iq1,
        n_iq2: c.n_iq2,
        eta: (placement != LossPlacement::None).then_some(c.eta),
        loss_placement: placement,
        loss_n: c.loss_n,
        large_gain_approx: c.large_gain_approx,
    })
}

fn input_state(kind: i32, p0: f64, p1: f64) -> Result<GaussianState, (DpStatus, String)> {
    if !p0.is_finite() || !p1.is_finite() {
        return Err((DpStatus::DpErrInvalid, "input parameters must be finite".into()));
    }
    match kind {
        DP_INPUT_VACUUM => lib(GaussianState::vacuum(1)),
        DP_INPUT_THERMAL => lib(GaussianState::thermal(p0)),
        DP_INPUT_COHERENT => Ok(GaussianState::coherent(C64::new(p0, p1))),
        DP_INPUT_SQUEEZED => Ok(GaussianState::squeezed_vacuum(C64::new(p0, p1))),
        k => Err((DpStatus::DpErrInvalid, format!("unknown input kind {k}"))),
    }
}

/// Builds a detection model. `dual` selects the beam-splitter setup;
/// `(p0, p1)` is `n` for thermal input, or the real and imaginary parts of
/// the coherent amplitude or squeezing parameter.
///
/// # Safety
/// `config` must point to a valid `DpChainConfig` and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_model_new(input_kind: i32, p0: f64, p1: f64, config: *const DpChainConfig, dual: bool, out: *mut *mut DpModel) -> DpStatus {
    guard(|| {
        let cfg = chain_config(deref(config, "config")?)?;
        let input = input_state(input_kind, p0, p1)?;
        let model = lib(if dual { build_dual_path(&input, &cfg) } else { build_single_path(&input, &cfg) })?;
        put(out, Box::into_raw(Box::new(DpModel(model))), "out")
    })
}

/// # Safety
/// `model` must be null or a handle from `dp_model_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dp_model_free(model: *mut DpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Effective gain of chain `chain` (0 or 1).
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dp_model_gain(model: *const DpModel, chain: usize, out: *mut f64) -> DpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let g = *m.0.gains.get(chain).ok_or((DpStatus::DpErrInvalid, format!("chain {chain} out of range")))?;
        put(out, g, "out")
    })
}

/// Samples `n` shots; identical seeds give identical shots.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dp_sample(model: *const DpModel, n: usize, seed: u64, out: *mut *mut DpShots) -> DpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let batch = lib(sample(&m.0, n, seed))?;
        put(out, Box::into_raw(Box::new(DpShots(batch))), "out")
    })
}

/// Wraps caller data: `n_values` row-major values of `channels` (2 or 4)
/// columns, with one effective gain per chain.
///
/// # Safety
/// `data` must hold `n_values` doubles, `gains` `n_gains` doubles, and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dp_shots_new(channels: usize, data: *const f64, n_values: usize, gains: *const f64, n_gains: usize, out: *mut *mut DpShots) -> DpStatus {
    guard(|| {
        if data.is_null() || gains.is_null() {
            return Err(null("data or gains"));
        }
        let values = std::slice::from_raw_parts(data, n_values).to_vec();
        if values.iter().any(|v| !v.is_finite()) {
            return Err((DpStatus::DpErrInvalid, "shot values must be finite".into()));
        }
        let g = std::slice::from_raw_parts(gains, n_gains).to_vec();
        let batch = lib(ShotBatch::new(channels, values, g, None))?;
        put(out, Box::into_raw(Box::new(DpShots(batch))), "out")
    })
}

/// # Safety
/// `shots` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dp_shots_shape(shots: *const DpShots, n_shots: *mut usize, channels: *mut usize) -> DpStatus {
    guard(|| {
        let s = deref(shots, "shots")?;
        put(n_shots, s.0.n_shots(), "n_shots")?;
        put(channels, s.0.channels(), "channels")
    })
}

/// Copies the row-major data into `buf`, which must hold at least
/// `n_shots * channels` doubles (`len`).
///
/// # Safety
/// `shots` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dp_shots_copy(shots: *const DpShots, buf: *mut f64, len: usize) -> DpStatus {
    guard(|| {
        let s = deref(shots, "shots")?;
        let d = s.0.data();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < d.len() {
            return Err((DpStatus::DpErrBuffer, format!("buffer holds {len} values, need {}", d.len())));
        }
        ptr::copy_nonoverlapping(d.as_ptr(), buf, d.len());
        Ok(())
    })
}

/// # Safety
/// `shots` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dp_shots_free(shots: *mut DpShots) {
    if !shots.is_null() {
        drop(Box::from_raw(shots));
    }
}

/// Dual-path reconstruction to `order`, with standard errors from `blocks`
/// contiguous blocks (0 disables them). The ancilla is thermal with `n_anc`.
///
/// # Safety
/// `shots` must be a live 4-column handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dp_reconstruct_dpm(shots: *const DpShots, n_anc: f64, order: usize, blocks: usize, out: *mut *mut DpReconstruction) -> DpStatus {
    guard(|| {
        let s = deref(shots, "shots")?;
        if s.0.chains() != 2 {
            return Err((DpStatus::DpErrInvalid, "dual-path reconstruction needs 4-column shots".into()));
        }
        let env = lib(estimate_moments_blocks(&s.0, order, blocks.max(1)))?;
        let r = lib(dpm_reconstruct(&env, &AncillaPrior::thermal(n_anc), order))?;
        put(out, Box::into_raw(Box::new(DpReconstruction(r))), "out")
    })
}

/// Single-path reconstruction from a signal run and a vacuum reference run
/// through the same chain (2-column shots with gains attached).
///
/// # Safety
/// Both shot handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dp_reconstruct_spm(signal: *const DpShots, reference: *const DpShots, order: usize, blocks: usize, out: *mut *mut DpReconstruction) -> DpStatus {
    guard(|| {
        let (s, r) = (deref(signal, "signal")?, deref(reference, "reference")?);
        if s.0.chains() != 1 || r.0.chains() != 1 {
            return Err((DpStatus::DpErrInvalid, "single-path reconstruction needs 2-column shots".into()));
        }
        let g = *s.0.gains.first().ok_or((DpStatus::DpErrInvalid, "shots carry no gain".to_string()))?;
        let nb = blocks.max(1);
        let se = lib(estimate_moments_blocks(&s.0, order, nb))?;
        let re = lib(estimate_moments_blocks(&r.0, order, nb))?;
        let res = lib(spm_reconstruct(&se, &re, g, C64::new(0.0, 0.0), SpmOptions::default(), order))?;
        put(out, Box::into_raw(Box::new(DpReconstruction(res))), "out")
    })
}

/// Normally ordered signal moment `⟨a†^l a^m⟩`.
///
/// # Safety
/// `rec` must be a live handle; `re` and `im` writable.
#[no_mangle]
pub unsafe extern "C" fn dp_reconstruction_signal(rec: *const DpReconstruction, l: usize, m: usize, re: *mut f64, im: *mut f64) -> DpStatus {
    guard(|| {
        let v = lib(deref(rec, "rec")?.0.signal.value(l, m))?;
        put(re, v.re, "re")?;
        put(im, v.im, "im")
    })
}

/// Standard error of the signal moment; `DP_ERR_MISSING` without blocks.
///
/// # Safety
/// `rec` must be a live handle; `re` and `im` writable.
#[no_mangle]
pub unsafe extern "C" fn dp_reconstruction_signal_error(rec: *const DpReconstruction, l: usize, m: usize, re: *mut f64, im: *mut f64) -> DpStatus {
    guard(|| {
        let e = deref(rec, "rec")?.0.signal.error(l, m).ok_or((DpStatus::DpErrMissing, format!("no standard error for ({l},{m})")))?;
        put(re, e.re, "re")?;
        put(im, e.im, "im")
    })
}

/// Full result as JSON; release with `dp_string_free`.
///
/// # Safety
/// `rec` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dp_reconstruction_to_json(rec: *const DpReconstruction, out: *mut *mut c_char) -> DpStatus {
    guard(|| {
        let s = lib(dualpath::io::to_json(&deref(rec, "rec")?.0))?;
        let c = CString::new(s).map_err(|e| (DpStatus::DpErrFormat, e.to_string()))?;
        put(out, c.into_raw(), "out")
    })
}

/// # Safety
/// `rec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dp_reconstruction_free(rec: *mut DpReconstruction) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Negativity and kernel of a two-mode state from its row-major 4×4
/// covariance in `(x1, p1, x2, p2)` order, vacuum variance 1/2.
///
/// # Safety
/// `cov` must hold 16 doubles; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dp_negativity(cov: *const f64, negativity: *mut f64, kernel: *mut f64) -> DpStatus {
    guard(|| {
        if cov.is_null() {
            return Err(null("cov"));
        }
        let m = DMatrix::from_row_slice(4, 4, std::slice::from_raw_parts(cov, 16));
        let state = lib(GaussianState::new(DVector::zeros(4), m))?;
        let (n, k) = lib(TwoModeCovariance::new(state).and_then(|c| negativity_gaussian(&c)))?;
        put(negativity, n, "negativity")?;
        put(kernel, k, "kernel")
    })
}

/// Copies a message into a caller buffer, for bindings that cannot hold the
/// thread-local pointer. Returns the full message length.
///
/// # Safety
/// `buf` must be null or hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn dp_last_error_copy(buf: *mut c_char, len: usize) -> usize {
    let msg = dp_last_error_message();
    if msg.is_null() {
        return 0;
    }
    let bytes = CStr::from_ptr(msg).to_bytes();
    if !buf.is_null() && len > 0 {
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
        *buf.add(n) = 0;
    }
    bytes.len()
}
