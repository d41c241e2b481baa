//! C interface to `sdhawkes`.
//!
//! Models and sequences are opaque handles created and released through this
//! API. Every fallible function returns an [`SdhStatus`]; on failure the
//! message is available from [`sdh_last_error_message`] on the same thread.
//! Panics never cross the boundary and surface as `SDH_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sdhawkes::analysis::spectral_radius;
use sdhawkes::estimate::{fit, FitConfig};
use sdhawkes::intensity::intensity_at;
use sdhawkes::io::{model_from_json, model_to_json};
use sdhawkes::likelihood::log_likelihood;
use sdhawkes::simulate::{simulate, SimulationConfig};
use sdhawkes::{Dimensions, Error, MarkedSequence, SdHawkesModel};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    Parse = 4,
    Numerical = 5,
    Explosion = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque model handle.
pub struct SdhModel(SdHawkesModel);

/// Opaque marked sequence handle.
pub struct SdhSequence(MarkedSequence);

/// Log-likelihood terms.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SdhLogLikelihood {
    pub transition_term: f64,
    pub l_plus: f64,
    pub l_minus: f64,
    pub total: f64,
    /// Nonzero when the sequence contains a transition of probability zero.
    pub impossible_transition: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SdhStatus {
    match err {
        Error::InvalidInput(_) => SdhStatus::InvalidArgument,
        Error::InvalidModel(_) => SdhStatus::InvalidModel,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => SdhStatus::Parse,
        Error::Explosion { .. } => SdhStatus::Explosion,
        Error::Io(_) => SdhStatus::Io,
        _ => SdhStatus::Numerical,
    }
}

struct Failure(SdhStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SdhStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SdhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SdhStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SdhStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    unsafe { out.write(value) };
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sdh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn sdh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a model from its JSON document.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdh_model_from_json(json: *const c_char, out: *mut *mut SdhModel) -> SdhStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = unsafe { CStr::from_ptr(json) }
            .to_str()
            .map_err(|e| Failure(SdhStatus::Parse, format!("json is not UTF-8: {e}")))?;
        let model = model_from_json(text)?;
        unsafe { write_out(out, Box::into_raw(Box::new(SdhModel(model))), "out") }
    })
}

/// Serialises a model; free the string with [`sdh_string_free`].
///
/// # Safety
/// `model` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdh_model_to_json(model: *const SdhModel, out: *mut *mut c_char) -> SdhStatus {
    guard(|| {
        let m = unsafe { as_ref(model, "model") }?;
        let text = model_to_json(&m.0)?;
        let c = CString::new(text).map_err(|e| Failure(SdhStatus::Parse, e.to_string()))?;
        unsafe { write_out(out, c.into_raw(), "out") }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn sdh_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn sdh_model_free(model: *mut SdhModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdh_model_dims(
    model: *const SdhModel,
    n_events: *mut usize,
    n_states: *mut usize,
) -> SdhStatus {
    guard(|| {
        let m = unsafe { as_ref(model, "model") }?;
        unsafe {
            write_out(n_events, m.0.n_events(), "n_events")?;
            write_out(n_states, m.0.n_states(), "n_states")
        }
    })
}

/// Perron root of the kernel norm matrix in `state`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdh_spectral_radius(model: *const SdhModel, state: usize, out: *mut f64) -> SdhStatus {
    guard(|| {
        let m = unsafe { as_ref(model, "model") }?;
        let rho = spectral_radius(&m.0, state)?;
        unsafe { write_out(out, rho, "out") }
    })
}

/// Simulates on `(0, horizon]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdh_simulate(
    model: *const SdhModel,
    horizon: f64,
    seed: u64,
    initial_state: usize,
    out: *mut *mut SdhSequence,
) -> SdhStatus {
    guard(|| {
        let m = unsafe { as_ref(model, "model") }?;
        let seq = simulate(&m.0, &SimulationConfig::horizon(horizon, seed).with_initial_state(initial_state))?;
        unsafe { write_out(out, Box::into_raw(Box::new(SdhSequence(seq))), "out") }
    })
}

unsafe fn copy_array<T: Copy>(p: *const T, n: usize, what: &str) -> Result<Vec<T>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, n) }.to_vec())
}

/// Builds a sequence from `n` rows. Array pointers may be null when `n == 0`.
///
/// # Safety
/// Each array must hold `n` elements.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sdh_sequence_new(
    times: *const f64,
    events: *const usize,
    states: *const usize,
    n: usize,
    initial_state: usize,
    t0: f64,
    t_end: f64,
    out: *mut *mut SdhSequence,
) -> SdhStatus {
    guard(|| {
        let seq = MarkedSequence::new(
            unsafe { copy_array(times, n, "times") }?,
            unsafe { copy_array(events, n, "events") }?,
            unsafe { copy_array(states, n, "states") }?,
            initial_state,
            t0,
            t_end,
        )?;
        unsafe { write_out(out, Box::into_raw(Box::new(SdhSequence(seq))), "out") }
    })
}

/// Number of events; 0 for a null handle.
///
/// # Safety
/// `seq` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn sdh_sequence_len(seq: *const SdhSequence) -> usize {
    unsafe { seq.as_ref() }.map_or(0, |s| s.0.len())
}

/// Row `i` of the sequence.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdh_sequence_get(
    seq: *const SdhSequence,
    i: usize,
    time: *mut f64,
    event: *mut usize,
    state: *mut usize,
) -> SdhStatus {
    guard(|| {
        let s = &unsafe { as_ref(seq, "seq") }?.0;
        if i >= s.len() {
            return Err(Failure(
                SdhStatus::InvalidArgument,
                format!("index {i} out of range ({} events)", s.len()),
            ));
        }
        unsafe {
            write_out(time, s.times[i], "time")?;
            write_out(event, s.events[i], "event")?;
            write_out(state, s.states[i], "state")
        }
    })
}

/// # Safety
/// `seq` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn sdh_sequence_free(seq: *mut SdhSequence) {
    if !seq.is_null() {
        drop(unsafe { Box::from_raw(seq) });
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdh_log_likelihood(
    model: *const SdhModel,
    seq: *const SdhSequence,
    out: *mut SdhLogLikelihood,
) -> SdhStatus {
    guard(|| {
        let m = unsafe { as_ref(model, "model") }?;
        let s = unsafe { as_ref(seq, "seq") }?;
        let b = log_likelihood(&m.0, &s.0)?;
        let ll = SdhLogLikelihood {
            transition_term: b.transition_term,
            l_plus: b.l_plus,
            l_minus: b.l_minus,
            total: b.total,
            impossible_transition: i32::from(b.impossible_transition),
        };
        unsafe { write_out(out, ll, "out") }
    })
}

/// Left-limit intensities `lambda_e(t)` of all event types into `out[0..out_len]`;
/// `out_len` must equal the number of event types.
///
/// # Safety
/// `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdh_intensity_at(
    model: *const SdhModel,
    seq: *const SdhSequence,
    t: f64,
    out: *mut f64,
    out_len: usize,
) -> SdhStatus {
    guard(|| {
        let m = unsafe { as_ref(model, "model") }?;
        let s = unsafe { as_ref(seq, "seq") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len != m.0.n_events() {
            return Err(Failure(
                SdhStatus::InvalidArgument,
                format!("out_len {out_len} differs from {} event types", m.0.n_events()),
            ));
        }
        let values = intensity_at(&m.0, &s.0, t)?;
        unsafe { std::slice::from_raw_parts_mut(out, out_len) }.copy_from_slice(&values);
        Ok(())
    })
}

/// Maximum-likelihood fit with numbered dimensions. `log_likelihood` may be null.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdh_fit(
    seq: *const SdhSequence,
    n_events: usize,
    n_states: usize,
    random_starts: usize,
    seed: u64,
    out: *mut *mut SdhModel,
    log_likelihood: *mut f64,
) -> SdhStatus {
    guard(|| {
        let s = unsafe { as_ref(seq, "seq") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let dims = Dimensions::numbered(n_events, n_states)?;
        let config = FitConfig {
            n_random_starts: random_starts,
            seed,
            ..FitConfig::default()
        };
        let result = fit(&s.0, &dims, &config)?;
        if !log_likelihood.is_null() {
            unsafe { log_likelihood.write(result.log_likelihood) };
        }
        unsafe { write_out(out, Box::into_raw(Box::new(SdhModel(result.model))), "out") }
    })
}
