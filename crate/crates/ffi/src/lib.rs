//! C interface over the trace simulator and attack suite.
//!
//! Every fallible call returns an [`EmsimStatus`]; on failure a message is
//! stored for the calling thread and stays readable through
//! [`emsim_last_error_message`] until the next failure on that thread.
//! Handles are opaque, are only written through their out-pointer on
//! success, and are released with the matching `_free` function. Attack and
//! assessment settings cross the boundary as TOML text with the same schema
//! the command-line tool reads.

use emsim_core::aes::AesArchitecture;
use emsim_core::attacks::cema::{self, CemaConfig};
use emsim_core::attacks::tvla::{self, TvlaConfig};
use emsim_core::config::{PowerMode, ScenarioConfig, FIXED_PLAINTEXT};
use emsim_core::em::ProbeSite;
use emsim_core::error::Error;
use emsim_core::pipeline::{GenerateOptions, PlaintextPolicy, ScenarioRunner};
use emsim_core::store;
use emsim_core::traceset::{ClassLabel, TraceSet};
use libc::c_char;
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Outcome of a library call.
#[repr(i32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmsimStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = -1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = -2,
    /// Rejected settings (bad TOML, unknown labels, out-of-range values).
    Config = -3,
    /// The power or measurement simulation failed.
    Simulation = -4,
    /// The statistical analysis could not run on the given data.
    Analysis = -5,
    /// Trace file reading or writing failed.
    Storage = -6,
    /// An internal invariant failed; the handle should be discarded.
    Panic = -7,
}

/// Campaign settings handle.
pub struct EmsimScenario {
    cfg: ScenarioConfig,
}

/// Recorded (or loaded) campaign handle.
pub struct EmsimTraceSet {
    set: TraceSet,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

fn status_of(e: &Error) -> EmsimStatus {
    match e {
        Error::Config(_)
        | Error::ByteIndex(_)
        | Error::ZeroLfsrState
        | Error::SampleRateTooLow { .. }
        | Error::UnknownPlacement(_) => EmsimStatus::Config,
        Error::EmptyWaveform
        | Error::NonFinite(_)
        | Error::GridMismatch(_)
        | Error::SettleFailed(_) => EmsimStatus::Simulation,
        Error::BandOutOfRange { .. }
        | Error::OffsetTooLarge { .. }
        | Error::MissingKey
        | Error::TraceSet(_)
        | Error::Calibration(_) => EmsimStatus::Analysis,
        Error::Store(_) | Error::Io(_) => EmsimStatus::Storage,
    }
}

fn fail(e: Error) -> EmsimStatus {
    set_error(&e.to_string());
    status_of(&e)
}

/// Runs a call body with panics converted into [`EmsimStatus::Panic`];
/// unwinding across the C boundary would otherwise be undefined behavior.
fn boundary(body: impl FnOnce() -> EmsimStatus) -> EmsimStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown internal panic".into());
            set_error(&format!("internal panic: {msg}"));
            EmsimStatus::Panic
        }
    }
}

macro_rules! require {
    ($ptr:expr) => {
        if $ptr.is_null() {
            set_error(concat!("argument `", stringify!($ptr), "` is null"));
            return EmsimStatus::NullPointer;
        }
    };
}

unsafe fn utf8_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, EmsimStatus> {
    if ptr.is_null() {
        set_error(&format!("argument `{what}` is null"));
        return Err(EmsimStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("argument `{what}` is not valid UTF-8"));
        EmsimStatus::InvalidUtf8
    })
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, EmsimStatus> {
    toml::from_str(text).map_err(|e| {
        set_error(&format!("invalid {what} settings: {e}"));
        EmsimStatus::Config
    })
}

/// Library version as a static string; never freed.
#[no_mangle]
pub extern "C" fn emsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn emsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Frees a string returned through a `char **` out-pointer.
#[no_mangle]
pub unsafe extern "C" fn emsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a scenario populated with the library defaults.
#[no_mangle]
pub unsafe extern "C" fn emsim_scenario_new(out: *mut *mut EmsimScenario) -> EmsimStatus {
    boundary(|| {
        require!(out);
        let handle = Box::new(EmsimScenario {
            cfg: ScenarioConfig::default(),
        });
        *out = Box::into_raw(handle);
        EmsimStatus::Ok
    })
}

/// Parses a scenario from TOML text (same schema as the CLI config files).
#[no_mangle]
pub unsafe extern "C" fn emsim_scenario_from_toml(
    text: *const c_char,
    out: *mut *mut EmsimScenario,
) -> EmsimStatus {
    boundary(|| {
        require!(out);
        let text = match utf8_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioConfig::from_toml_str(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(EmsimScenario { cfg }));
                EmsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Serializes the scenario to TOML; release the string with
/// `emsim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn emsim_scenario_to_toml(
    scenario: *const EmsimScenario,
    out: *mut *mut c_char,
) -> EmsimStatus {
    boundary(|| {
        require!(scenario);
        require!(out);
        match (*scenario).cfg.to_toml_string() {
            Ok(text) => match CString::new(text) {
                Ok(c) => {
                    *out = c.into_raw();
                    EmsimStatus::Ok
                }
                Err(_) => {
                    set_error("settings contain an interior NUL byte");
                    EmsimStatus::Config
                }
            },
            Err(e) => fail(e),
        }
    })
}

/// Power mode: 0 standalone, 1 baseline regulator, 2 randomized regulator.
#[no_mangle]
pub unsafe extern "C" fn emsim_scenario_set_mode(
    scenario: *mut EmsimScenario,
    mode: u8,
) -> EmsimStatus {
    boundary(|| {
        require!(scenario);
        match PowerMode::from_code(mode) {
            Ok(m) => {
                (*scenario).cfg.mode = m;
                EmsimStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                EmsimStatus::Config
            }
        }
    })
}

/// Crypto engine: 0 full-round-per-cycle, 1 byte-serial low-power.
#[no_mangle]
pub unsafe extern "C" fn emsim_scenario_set_engine(
    scenario: *mut EmsimScenario,
    engine: u8,
) -> EmsimStatus {
    boundary(|| {
        require!(scenario);
        match engine {
            0 => (*scenario).cfg.arch = AesArchitecture::HighPerformance,
            1 => (*scenario).cfg.arch = AesArchitecture::LowPower,
            other => {
                set_error(&format!("unknown engine code {other}"));
                return EmsimStatus::Config;
            }
        }
        EmsimStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn emsim_scenario_set_trace_count(
    scenario: *mut EmsimScenario,
    n_traces: u32,
) -> EmsimStatus {
    boundary(|| {
        require!(scenario);
        (*scenario).cfg.n_traces = n_traces as usize;
        EmsimStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn emsim_scenario_set_seed(
    scenario: *mut EmsimScenario,
    seed: u64,
) -> EmsimStatus {
    boundary(|| {
        require!(scenario);
        (*scenario).cfg.seed = seed;
        EmsimStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn emsim_scenario_set_noise_sigma(
    scenario: *mut EmsimScenario,
    sigma: f64,
) -> EmsimStatus {
    boundary(|| {
        require!(scenario);
        if !(sigma.is_finite() && sigma >= 0.0) {
            set_error("noise sigma must be finite and non-negative");
            return EmsimStatus::Config;
        }
        (*scenario).cfg.noise_sigma = sigma;
        EmsimStatus::Ok
    })
}

/// Probe placement label, e.g. "node_vss_aes" or "small_loop_loc1".
#[no_mangle]
pub unsafe extern "C" fn emsim_scenario_set_probe(
    scenario: *mut EmsimScenario,
    label: *const c_char,
) -> EmsimStatus {
    boundary(|| {
        require!(scenario);
        let label = match utf8_arg(label, "label") {
            Ok(l) => l,
            Err(s) => return s,
        };
        match ProbeSite::parse(label) {
            Ok(site) => {
                (*scenario).cfg.probe = site.label().into();
                EmsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn emsim_scenario_free(scenario: *mut EmsimScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Simulates a campaign. Policy: 0 random plaintexts, 1 interleaved
/// fixed-vs-random classes.
#[no_mangle]
pub unsafe extern "C" fn emsim_generate(
    scenario: *const EmsimScenario,
    policy: u8,
    out: *mut *mut EmsimTraceSet,
) -> EmsimStatus {
    boundary(|| {
        require!(scenario);
        require!(out);
        let policy = match policy {
            0 => PlaintextPolicy::Random,
            1 => PlaintextPolicy::FixedVsRandom,
            other => {
                set_error(&format!("unknown plaintext policy code {other}"));
                return EmsimStatus::Config;
            }
        };
        let runner = match ScenarioRunner::new((*scenario).cfg.clone()) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        match runner.generate(&GenerateOptions::new(policy)) {
            Ok(set) => {
                *out = Box::into_raw(Box::new(EmsimTraceSet { set }));
                EmsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn emsim_traceset_shape(
    set: *const EmsimTraceSet,
    n_traces: *mut u32,
    n_samples: *mut u32,
) -> EmsimStatus {
    boundary(|| {
        require!(set);
        require!(n_traces);
        require!(n_samples);
        *n_traces = (*set).set.n_traces() as u32;
        *n_samples = (*set).set.n_samples() as u32;
        EmsimStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn emsim_traceset_sample_rate(
    set: *const EmsimTraceSet,
    rate: *mut f64,
) -> EmsimStatus {
    boundary(|| {
        require!(set);
        require!(rate);
        *rate = (*set).set.sample_rate();
        EmsimStatus::Ok
    })
}

/// Borrows one trace row. The pointer is valid while the handle lives and
/// no mutating call (relabel, free) intervenes.
#[no_mangle]
pub unsafe extern "C" fn emsim_traceset_trace(
    set: *const EmsimTraceSet,
    index: u32,
    data: *mut *const f64,
    len: *mut usize,
) -> EmsimStatus {
    boundary(|| {
        require!(set);
        require!(data);
        require!(len);
        let s = &(*set).set;
        if index as usize >= s.n_traces() {
            set_error(&format!(
                "trace index {index} out of range ({} recorded)",
                s.n_traces()
            ));
            return EmsimStatus::Analysis;
        }
        let row = s.trace(index as usize);
        let slice = row.to_slice().expect("trace rows are contiguous");
        *data = slice.as_ptr();
        *len = slice.len();
        EmsimStatus::Ok
    })
}

unsafe fn copy_block(
    set: *const EmsimTraceSet,
    index: u32,
    out: *mut u8,
    pick: impl Fn(&TraceSet, usize) -> [u8; 16],
) -> EmsimStatus {
    require!(set);
    require!(out);
    let s = &(*set).set;
    if index as usize >= s.n_traces() {
        set_error(&format!(
            "trace index {index} out of range ({} recorded)",
            s.n_traces()
        ));
        return EmsimStatus::Analysis;
    }
    let block = pick(s, index as usize);
    std::ptr::copy_nonoverlapping(block.as_ptr(), out, 16);
    EmsimStatus::Ok
}

/// Copies the 16-byte plaintext of one trace into `out`.
#[no_mangle]
pub unsafe extern "C" fn emsim_traceset_plaintext(
    set: *const EmsimTraceSet,
    index: u32,
    out: *mut u8,
) -> EmsimStatus {
    boundary(|| copy_block(set, index, out, |s, i| s.plaintexts()[i]))
}

/// Copies the 16-byte ciphertext of one trace into `out`.
#[no_mangle]
pub unsafe extern "C" fn emsim_traceset_ciphertext(
    set: *const EmsimTraceSet,
    index: u32,
    out: *mut u8,
) -> EmsimStatus {
    boundary(|| copy_block(set, index, out, |s, i| s.ciphertexts()[i]))
}

/// Rebuilds fixed/random class labels by matching plaintexts against the
/// standard fixed input. Needed after loading an assessment campaign, since
/// trace files do not carry labels.
#[no_mangle]
pub unsafe extern "C" fn emsim_traceset_relabel_fixed(set: *mut EmsimTraceSet) -> EmsimStatus {
    boundary(|| {
        require!(set);
        let s = &mut (*set).set;
        let labels: Vec<ClassLabel> = s
            .plaintexts()
            .iter()
            .map(|pt| {
                if *pt == FIXED_PLAINTEXT {
                    ClassLabel::Fixed
                } else {
                    ClassLabel::Random
                }
            })
            .collect();
        let fixed = labels.iter().filter(|&&l| l == ClassLabel::Fixed).count();
        if fixed == 0 || fixed == labels.len() {
            set_error(&format!(
                "campaign is single-class ({fixed} of {} fixed)",
                labels.len()
            ));
            return EmsimStatus::Analysis;
        }
        match s.clone().with_labels(labels) {
            Ok(labeled) => {
                *s = labeled;
                EmsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes the campaign to a trace file. The probe label records where the
/// campaign was measured.
#[no_mangle]
pub unsafe extern "C" fn emsim_traceset_save(
    set: *const EmsimTraceSet,
    path: *const c_char,
    mode: u8,
    probe_label: *const c_char,
) -> EmsimStatus {
    boundary(|| {
        require!(set);
        let path = match utf8_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let label = match utf8_arg(probe_label, "probe_label") {
            Ok(l) => l,
            Err(s) => return s,
        };
        let mode = match PowerMode::from_code(mode) {
            Ok(m) => m,
            Err(e) => return fail(e),
        };
        let probe = match ProbeSite::parse(label) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match store::save(Path::new(path), &(*set).set, mode, probe) {
            Ok(()) => EmsimStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Reads a trace file. `mode_out` and `probe_label_out` may be null; a
/// returned label string is released with `emsim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn emsim_traceset_load(
    path: *const c_char,
    out: *mut *mut EmsimTraceSet,
    mode_out: *mut u8,
    probe_label_out: *mut *mut c_char,
) -> EmsimStatus {
    boundary(|| {
        require!(out);
        let path = match utf8_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match store::load(Path::new(path)) {
            Ok((set, mode, probe)) => {
                if !mode_out.is_null() {
                    *mode_out = mode.code();
                }
                if !probe_label_out.is_null() {
                    match CString::new(probe.label()) {
                        Ok(c) => *probe_label_out = c.into_raw(),
                        Err(_) => *probe_label_out = std::ptr::null_mut(),
                    }
                }
                *out = Box::into_raw(Box::new(EmsimTraceSet { set }));
                EmsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn emsim_traceset_free(set: *mut EmsimTraceSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Correlation key-recovery attack; writes the smallest trace count at which
/// the correct key byte locks into first rank, or -1 when the budget never
/// discloses it. `config_toml` may be null for the default attack settings.
#[no_mangle]
pub unsafe extern "C" fn emsim_cema_mtd(
    set: *const EmsimTraceSet,
    config_toml: *const c_char,
    mtd_out: *mut i64,
) -> EmsimStatus {
    boundary(|| {
        require!(set);
        require!(mtd_out);
        let cfg = if config_toml.is_null() {
            CemaConfig::default()
        } else {
            let text = match utf8_arg(config_toml, "config_toml") {
                Ok(t) => t,
                Err(s) => return s,
            };
            match parse_toml::<CemaConfig>(text, "attack") {
                Ok(c) => c,
                Err(s) => return s,
            }
        };
        match cema::mtd(&(*set).set, &cfg) {
            Ok(report) => {
                *mtd_out = report.reached.map_or(-1, |n| n as i64);
                EmsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Fixed-vs-random leakage assessment; writes the worst |t| over all cells
/// and whether any cell crossed the decision threshold. Labels must be
/// present (simulate with policy 1, or relabel after loading).
#[no_mangle]
pub unsafe extern "C" fn emsim_tvla(
    set: *const EmsimTraceSet,
    config_toml: *const c_char,
    max_abs_t: *mut f64,
    leaks: *mut u8,
) -> EmsimStatus {
    boundary(|| {
        require!(set);
        require!(max_abs_t);
        require!(leaks);
        let cfg = if config_toml.is_null() {
            TvlaConfig::default()
        } else {
            let text = match utf8_arg(config_toml, "config_toml") {
                Ok(t) => t,
                Err(s) => return s,
            };
            match parse_toml::<TvlaConfig>(text, "assessment") {
                Ok(c) => c,
                Err(s) => return s,
            }
        };
        match tvla::run(&(*set).set, &cfg) {
            Ok(report) => {
                *max_abs_t = report.max_abs_t();
                *leaks = report.leaks() as u8;
                EmsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    fn last_error() -> String {
        unsafe {
            CStr::from_ptr(emsim_last_error_message())
                .to_string_lossy()
                .into_owned()
        }
    }

    /// Scenario sized so simulation stays in the millisecond range.
    fn tiny_scenario(n: u32, policy_fixed: bool) -> (*mut EmsimScenario, *mut EmsimTraceSet) {
        unsafe {
            let mut scenario = ptr::null_mut();
            assert_eq!(emsim_scenario_new(&mut scenario), EmsimStatus::Ok);
            assert_eq!(emsim_scenario_set_engine(scenario, 0), EmsimStatus::Ok);
            assert_eq!(emsim_scenario_set_trace_count(scenario, n), EmsimStatus::Ok);
            assert_eq!(emsim_scenario_set_seed(scenario, 11), EmsimStatus::Ok);
            assert_eq!(
                emsim_scenario_set_noise_sigma(scenario, 1e-3),
                EmsimStatus::Ok
            );
            let mut set = ptr::null_mut();
            let policy = if policy_fixed { 1 } else { 0 };
            assert_eq!(emsim_generate(scenario, policy, &mut set), EmsimStatus::Ok);
            (scenario, set)
        }
    }

    #[test]
    fn version_is_a_static_string() {
        let v = unsafe { CStr::from_ptr(emsim_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn scenario_toml_round_trips_with_setters_applied() {
        unsafe {
            let mut scenario = ptr::null_mut();
            assert_eq!(emsim_scenario_new(&mut scenario), EmsimStatus::Ok);
            assert_eq!(emsim_scenario_set_mode(scenario, 2), EmsimStatus::Ok);
            assert_eq!(emsim_scenario_set_trace_count(scenario, 17), EmsimStatus::Ok);
            let probe = CString::new("small_loop_loc2").unwrap();
            assert_eq!(
                emsim_scenario_set_probe(scenario, probe.as_ptr()),
                EmsimStatus::Ok
            );

            let mut text = ptr::null_mut();
            assert_eq!(emsim_scenario_to_toml(scenario, &mut text), EmsimStatus::Ok);
            let toml_text = CStr::from_ptr(text).to_str().unwrap().to_owned();
            assert!(toml_text.contains("n_traces = 17"));
            assert!(toml_text.contains("small_loop_loc2"));

            let mut reparsed = ptr::null_mut();
            assert_eq!(
                emsim_scenario_from_toml(text, &mut reparsed),
                EmsimStatus::Ok
            );
            emsim_string_free(text);
            assert_eq!((*reparsed).cfg.n_traces, 17);
            assert_eq!((*reparsed).cfg.mode, PowerMode::RandomizedIvr);
            emsim_scenario_free(reparsed);
            emsim_scenario_free(scenario);
        }
    }

    #[test]
    fn null_and_invalid_arguments_are_reported() {
        unsafe {
            assert_eq!(
                emsim_scenario_new(ptr::null_mut()),
                EmsimStatus::NullPointer
            );
            assert!(last_error().contains("null"));

            let mut scenario = ptr::null_mut();
            assert_eq!(emsim_scenario_new(&mut scenario), EmsimStatus::Ok);
            assert_eq!(
                emsim_scenario_set_mode(scenario, 9),
                EmsimStatus::Config
            );
            let bad = CString::new("under_the_desk").unwrap();
            assert_eq!(
                emsim_scenario_set_probe(scenario, bad.as_ptr()),
                EmsimStatus::Config
            );
            assert!(last_error().contains("under_the_desk"));
            assert_eq!(
                emsim_scenario_set_noise_sigma(scenario, f64::NAN),
                EmsimStatus::Config
            );

            let garbage = CString::new("mode = ]").unwrap();
            let mut out = ptr::null_mut();
            assert_eq!(
                emsim_scenario_from_toml(garbage.as_ptr(), &mut out),
                EmsimStatus::Config
            );
            assert!(!last_error().is_empty());
            emsim_scenario_free(scenario);
        }
    }

    #[test]
    fn campaign_rows_and_crypto_data_are_readable() {
        let (scenario, set) = tiny_scenario(4, false);
        unsafe {
            let (mut n, mut t) = (0u32, 0u32);
            assert_eq!(emsim_traceset_shape(set, &mut n, &mut t), EmsimStatus::Ok);
            assert_eq!(n, 4);
            assert!(t > 0);

            let mut rate = 0.0;
            assert_eq!(emsim_traceset_sample_rate(set, &mut rate), EmsimStatus::Ok);
            assert_eq!(rate, 5e9);

            let mut data = ptr::null();
            let mut len = 0usize;
            assert_eq!(
                emsim_traceset_trace(set, 2, &mut data, &mut len),
                EmsimStatus::Ok
            );
            assert_eq!(len as u32, t);
            let row = std::slice::from_raw_parts(data, len);
            assert!(row.iter().all(|v| v.is_finite()));

            let mut pt = [0u8; 16];
            let mut ct = [0u8; 16];
            assert_eq!(
                emsim_traceset_plaintext(set, 2, pt.as_mut_ptr()),
                EmsimStatus::Ok
            );
            assert_eq!(
                emsim_traceset_ciphertext(set, 2, ct.as_mut_ptr()),
                EmsimStatus::Ok
            );
            let key = (*set).set.key().unwrap();
            assert_eq!(ct, emsim_core::aes::encrypt(&key, &pt));

            assert_eq!(
                emsim_traceset_trace(set, 99, &mut data, &mut len),
                EmsimStatus::Analysis
            );
            assert!(last_error().contains("out of range"));

            emsim_traceset_free(set);
            emsim_scenario_free(scenario);
        }
    }

    #[test]
    fn files_round_trip_and_relabel_for_assessment() {
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(
            dir.path().join("campaign.bsim").to_str().unwrap(),
        )
        .unwrap();
        let probe = CString::new("node_vss_aes").unwrap();
        let (scenario, set) = tiny_scenario(6, true);
        unsafe {
            assert_eq!(
                emsim_traceset_save(set, path.as_ptr(), 0, probe.as_ptr()),
                EmsimStatus::Ok
            );

            let mut loaded = ptr::null_mut();
            let mut mode = 0xffu8;
            let mut label = ptr::null_mut();
            assert_eq!(
                emsim_traceset_load(path.as_ptr(), &mut loaded, &mut mode, &mut label),
                EmsimStatus::Ok
            );
            assert_eq!(mode, 0);
            assert_eq!(CStr::from_ptr(label).to_str().unwrap(), "node_vss_aes");
            emsim_string_free(label);

            let (mut n, mut t) = (0u32, 0u32);
            assert_eq!(
                emsim_traceset_shape(loaded, &mut n, &mut t),
                EmsimStatus::Ok
            );
            assert_eq!(n, 6);
            let (mut a, mut b) = (ptr::null(), ptr::null());
            let (mut la, mut lb) = (0usize, 0usize);
            assert_eq!(emsim_traceset_trace(set, 3, &mut a, &mut la), EmsimStatus::Ok);
            assert_eq!(
                emsim_traceset_trace(loaded, 3, &mut b, &mut lb),
                EmsimStatus::Ok
            );
            assert_eq!(
                std::slice::from_raw_parts(a, la),
                std::slice::from_raw_parts(b, lb)
            );

            // Labels do not survive the file format; relabeling restores them.
            let toml = CString::new(
                r#"
                    orders = [1]
                    threshold = 4.5
                    filter_order = 4
                    [bank]
                    start_hz = 100e6
                    stop_hz = 100e6
                    step_hz = 50e6
                    bandwidth_hz = 40e6
                    order = 4
                    [window]
                    width_s = 100e-9
                    stride_s = 100e-9
                "#,
            )
            .unwrap();
            let mut max_t = 0.0;
            let mut leaks = 0u8;
            assert_eq!(
                emsim_tvla(loaded, toml.as_ptr(), &mut max_t, &mut leaks),
                EmsimStatus::Analysis
            );
            assert_eq!(
                emsim_traceset_relabel_fixed(loaded),
                EmsimStatus::Ok
            );
            assert_eq!(
                emsim_tvla(loaded, toml.as_ptr(), &mut max_t, &mut leaks),
                EmsimStatus::Ok
            );
            assert!(max_t.is_finite());
            assert!(leaks == 0 || leaks == 1);

            emsim_traceset_free(loaded);
            emsim_traceset_free(set);
            emsim_scenario_free(scenario);
        }
    }

    #[test]
    fn attack_runs_from_toml_settings() {
        let (scenario, set) = tiny_scenario(8, false);
        unsafe {
            let toml = CString::new(
                r#"
                    model = "hd_last_round"
                    byte_idx = 0
                    bands = []
                    filter_order = 4
                    checkpoints = [4, 8]
                "#,
            )
            .unwrap();
            let mut mtd = 0i64;
            assert_eq!(
                emsim_cema_mtd(set, toml.as_ptr(), &mut mtd),
                EmsimStatus::Ok
            );
            assert!(mtd == -1 || mtd > 0);

            let broken = CString::new("model = \"Telepathy\"").unwrap();
            assert_eq!(
                emsim_cema_mtd(set, broken.as_ptr(), &mut mtd),
                EmsimStatus::Config
            );
            assert!(last_error().contains("attack"));

            emsim_traceset_free(set);
            emsim_scenario_free(scenario);
        }
    }
}
