//! C ABI over `proxysynth`.
//!
//! Every function returns a [`PsStatus`]. On failure, [`ps_last_error_message`]
//! describes the most recent error on the calling thread. Objects cross the boundary
//! as opaque handles (`PsLibrary`, `PsTargets`, `PsProgram`) or as JSON documents.
//! Strings handed out by this library are NUL-terminated and must be released with
//! [`ps_string_free`]. Handles are released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use proxysynth::blockgen::{default_library, render_program, BlockLibrary};
use proxysynth::measure::export_counts;
use proxysynth::model::{builtin_metrics, predict_events, ProxyProgram, TargetMetrics};
use proxysynth::{align, build_report, AlignConfig, Error, NoiseModel, SimulatedMeasurer};

/// Result code of every `ps_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A JSON or counts document failed to parse.
    Parse = 3,
    /// Input parsed but violates a documented constraint.
    InvalidInput = 4,
    /// A quantity is mathematically undefined (zero denominator, zero variance).
    Undefined = 5,
    /// The solver or alignment loop could not produce a result.
    Solver = 6,
    Io = 7,
    /// A bug inside the library; the message carries the panic payload.
    Internal = 8,
}

/// A block library.
pub struct PsLibrary(BlockLibrary);

/// A validated set of target metrics.
pub struct PsTargets(TargetMetrics);

/// A proxy program: block ids with execution counts.
pub struct PsProgram(ProxyProgram);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn innermost(e: &Error) -> &Error {
    match e {
        Error::Round { source, .. } | Error::File { source, .. } => innermost(source),
        other => other,
    }
}

fn status_of(e: &Error) -> PsStatus {
    match innermost(e) {
        Error::Json(_) | Error::Parse { .. } | Error::DuplicateEvent { .. } => PsStatus::Parse,
        Error::UndefinedMetric { .. }
        | Error::UndefinedAccuracy { .. }
        | Error::UndefinedCorrelation(_)
        | Error::UndefinedError { .. } => PsStatus::Undefined,
        Error::InvalidSystem(_) | Error::EmptySelection { .. } => PsStatus::Solver,
        Error::Io(_) => PsStatus::Io,
        _ => PsStatus::InvalidInput,
    }
}

struct Failure(PsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PsStatus::NullArgument, format!("`{what}` is null"))
}

/// Runs `f`, converting errors and panics into a status plus the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PsStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal error: {msg}"));
            PsStatus::Internal
        }
    }
}

/// # Safety
/// `s` is null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Failure(PsStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

/// # Safety
/// `p` is null or points to a live `T`.
unsafe fn read_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `out` is null or valid for a pointer write.
unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn to_c(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| Failure(PsStatus::Internal, "output contains a NUL byte".into()))
}

/// Message for the last failed call on this thread, or the empty string after a
/// successful one. Valid until the next `ps_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or a string from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn ps_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The built-in calibrated library with synthetic profiles.
///
/// # Safety
/// `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ps_library_default(out: *mut *mut PsLibrary) -> PsStatus {
    guard(|| write_out(out, Box::into_raw(Box::new(PsLibrary(default_library()))), "out"))
}

/// Parses and validates a library document.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ps_library_from_json(json: *const c_char, out: *mut *mut PsLibrary) -> PsStatus {
    guard(|| {
        let lib = BlockLibrary::from_json(read_str(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(PsLibrary(lib))), "out")
    })
}

/// Serializes a library to its canonical JSON document.
///
/// # Safety
/// `library` is a live handle; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ps_library_to_json(library: *const PsLibrary, out: *mut *mut c_char) -> PsStatus {
    guard(|| {
        let lib = read_ref(library, "library")?;
        write_out(out, to_c(lib.0.to_json())?, "out")
    })
}

/// Number of blocks in the library.
///
/// # Safety
/// `library` is a live handle; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ps_library_len(library: *const PsLibrary, out: *mut usize) -> PsStatus {
    guard(|| write_out(out, read_ref(library, "library")?.0.len(), "out"))
}

/// # Safety
/// `library` is null or a live handle, which becomes invalid.
#[no_mangle]
pub unsafe extern "C" fn ps_library_free(library: *mut PsLibrary) {
    if !library.is_null() {
        drop(Box::from_raw(library));
    }
}

/// Parses a target document (`{"metrics": {"cpi": 1.2, ...}}`) against the builtin
/// metric set.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ps_targets_from_json(json: *const c_char, out: *mut *mut PsTargets) -> PsStatus {
    guard(|| {
        let t = TargetMetrics::from_json(read_str(json, "json")?, &builtin_metrics())?;
        write_out(out, Box::into_raw(Box::new(PsTargets(t))), "out")
    })
}

/// # Safety
/// `targets` is null or a live handle, which becomes invalid.
#[no_mangle]
pub unsafe extern "C" fn ps_targets_free(targets: *mut PsTargets) {
    if !targets.is_null() {
        drop(Box::from_raw(targets));
    }
}

/// # Safety
/// `json` is a NUL-terminated string; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ps_program_from_json(json: *const c_char, out: *mut *mut PsProgram) -> PsStatus {
    guard(|| {
        let p = ProxyProgram::from_json(read_str(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(PsProgram(p))), "out")
    })
}

/// # Safety
/// `program` is a live handle; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ps_program_to_json(program: *const PsProgram, out: *mut *mut c_char) -> PsStatus {
    guard(|| write_out(out, to_c(read_ref(program, "program")?.0.to_json())?, "out"))
}

/// # Safety
/// `program` is null or a live handle, which becomes invalid.
#[no_mangle]
pub unsafe extern "C" fn ps_program_free(program: *mut PsProgram) {
    if !program.is_null() {
        drop(Box::from_raw(program));
    }
}

/// Runs the alignment loop on the simulated machine.
///
/// `config_json` is an alignment config document (`{"rounds": 10, "growth": 0.2, ...}`,
/// missing fields take defaults) and `noise_json` a noise model document
/// (`{"noise": {"kind": "uniform", "epsilon": 0.03}, "seed": 1}`). Either may be null
/// for the defaults. On success `*out_program` receives the final program and, when
/// the pointers are non-null, `*out_report` the accuracy report and `*out_trace` the
/// full round trace as JSON.
///
/// # Safety
/// Handles are live; strings are null or NUL-terminated; out pointers are null
/// (optional ones) or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ps_align(
    library: *const PsLibrary,
    targets: *const PsTargets,
    config_json: *const c_char,
    noise_json: *const c_char,
    out_program: *mut *mut PsProgram,
    out_report: *mut *mut c_char,
    out_trace: *mut *mut c_char,
) -> PsStatus {
    guard(|| {
        let lib = &read_ref(library, "library")?.0;
        let targets = &read_ref(targets, "targets")?.0;
        if out_program.is_null() {
            return Err(null("out_program"));
        }
        let config: AlignConfig = match config_json.is_null() {
            true => AlignConfig::default(),
            false => AlignConfig::from_json(read_str(config_json, "config_json")?)?,
        };
        let model: NoiseModel = match noise_json.is_null() {
            true => NoiseModel::default(),
            false => NoiseModel::from_json(read_str(noise_json, "noise_json")?)?,
        };
        let defs = builtin_metrics();
        let (program, trace) = align(lib, targets, &defs, &config, &SimulatedMeasurer::new(model))?;
        let report = if out_report.is_null() {
            None
        } else {
            let mut r = build_report(targets, &trace, &defs)?;
            r.metadata.library_hash = Some(lib.content_hash());
            r.metadata.config = Some(config);
            Some(to_c(r.to_json())?)
        };
        let trace = if out_trace.is_null() { None } else { Some(to_c(trace.to_json())?) };
        out_program.write(Box::into_raw(Box::new(PsProgram(program))));
        if let Some(r) = report {
            out_report.write(r);
        }
        if let Some(t) = trace {
            out_trace.write(t);
        }
        Ok(())
    })
}

/// Renders a program as a C translation unit.
///
/// # Safety
/// Handles are live; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ps_render(library: *const PsLibrary, program: *const PsProgram, out: *mut *mut c_char) -> PsStatus {
    guard(|| {
        let src = render_program(&read_ref(program, "program")?.0, &read_ref(library, "library")?.0)?;
        write_out(out, to_c(src)?, "out")
    })
}

/// Noise-free predicted event counts of a program, in `.counts` text form.
///
/// # Safety
/// Handles are live; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ps_predict_counts(library: *const PsLibrary, program: *const PsProgram, out: *mut *mut c_char) -> PsStatus {
    guard(|| {
        let r = predict_events(&read_ref(program, "program")?.0, &read_ref(library, "library")?.0)?;
        write_out(out, to_c(export_counts(&r))?, "out")
    })
}

/// `1 - |real - proxy| / |real|`. `PS_STATUS_UNDEFINED` when `real` is zero.
///
/// # Safety
/// `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ps_accuracy(real: f64, proxy: f64, out: *mut f64) -> PsStatus {
    guard(|| write_out(out, proxysynth::accuracy(real, proxy)?, "out"))
}

/// # Safety
/// `ptr` is valid for `n` reads when non-null.
unsafe fn series<'a>(ptr: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, n))
}

/// Pearson correlation of `x[0..n]` and `y[0..n]`.
///
/// # Safety
/// `x` and `y` are valid for `n` reads; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ps_pearson(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> PsStatus {
    guard(|| write_out(out, proxysynth::pearson(series(x, n, "x")?, series(y, n, "y")?)?, "out"))
}

/// Mean of `|y_i - x_i| / |x_i|` over `n` pairs, `x` being the reference.
///
/// # Safety
/// `x` and `y` are valid for `n` reads; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ps_mean_abs_rel_error(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> PsStatus {
    guard(|| write_out(out, proxysynth::mean_abs_rel_error(series(x, n, "x")?, series(y, n, "y")?)?, "out"))
}
