//! C ABI over the orblabel engine.
//!
//! Every function returns an [`OrblabelStatus`]; on failure a message is
//! kept per thread and read back with [`orblabel_last_error`]. Filter state
//! lives behind an opaque [`OrblabelImm`] handle owned by the caller until
//! [`orblabel_imm_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use chrono::{DateTime, Utc};
use orblabel::config::PipelineConfig;
use orblabel::filter::ImmFilter;
use orblabel::rules::{rule_outcome, RuleThresholds};
use orblabel::tle::{parse_tle_lines, tle_checksum};
use orblabel::{Source, TleRecord};

pub const ORBLABEL_MODE_COUNT: usize = 3;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrblabelStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidRecord = 4,
    InvalidConfig = 5,
    Rule = 6,
    Filter = 7,
    Panic = 8,
}

/// Element set in TLE units; `epoch_unix_s` is seconds since 1970-01-01 UTC.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrblabelRecord {
    pub norad_id: u32,
    pub epoch_unix_s: f64,
    pub mean_motion: f64,
    pub eccentricity: f64,
    pub inclination: f64,
    pub raan: f64,
    pub argp: f64,
    pub mean_anomaly: f64,
    pub bstar: f64,
    pub n_dot: f64,
    /// 0 = TLE, 1 = SUPGP.
    pub source: u8,
}

/// Opaque filter handle.
pub struct OrblabelImm {
    filter: ImmFilter,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

type FfiResult<T> = Result<T, (OrblabelStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> OrblabelStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OrblabelStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            OrblabelStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err((OrblabelStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (OrblabelStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| (OrblabelStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| (OrblabelStatus::NullPointer, format!("{name} is null")))
}

fn from_unix(s: f64) -> Option<DateTime<Utc>> {
    if !s.is_finite() {
        return None;
    }
    let secs = s.floor();
    let nanos = ((s - secs) * 1e9).round().min(999_999_999.0) as u32;
    DateTime::from_timestamp(secs as i64, nanos)
}

fn to_unix(t: &DateTime<Utc>) -> f64 {
    t.timestamp() as f64 + t.timestamp_subsec_nanos() as f64 * 1e-9
}

impl From<&TleRecord> for OrblabelRecord {
    fn from(r: &TleRecord) -> Self {
        Self {
            norad_id: r.norad_id,
            epoch_unix_s: to_unix(&r.epoch),
            mean_motion: r.mean_motion,
            eccentricity: r.eccentricity,
            inclination: r.inclination,
            raan: r.raan,
            argp: r.argp,
            mean_anomaly: r.mean_anomaly,
            bstar: r.bstar,
            n_dot: r.n_dot,
            source: match r.source {
                Source::Tle => 0,
                Source::Supgp => 1,
            },
        }
    }
}

impl TryFrom<&OrblabelRecord> for TleRecord {
    type Error = (OrblabelStatus, String);

    fn try_from(r: &OrblabelRecord) -> FfiResult<Self> {
        let bad = |m: &str| (OrblabelStatus::InvalidRecord, m.to_string());
        let epoch = from_unix(r.epoch_unix_s).ok_or_else(|| bad("epoch out of range"))?;
        let source = match r.source {
            0 => Source::Tle,
            1 => Source::Supgp,
            _ => return Err(bad("source must be 0 (TLE) or 1 (SUPGP)")),
        };
        Ok(TleRecord {
            norad_id: r.norad_id,
            epoch,
            mean_motion: r.mean_motion,
            eccentricity: r.eccentricity,
            inclination: r.inclination,
            raan: r.raan,
            argp: r.argp,
            mean_anomaly: r.mean_anomaly,
            bstar: r.bstar,
            n_dot: r.n_dot,
            source,
        })
    }
}

/// Message for the last failed call on this thread. Valid until the next
/// failing call on the same thread; empty if none failed.
#[no_mangle]
pub extern "C" fn orblabel_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Modulo-10 checksum of the first 68 columns of a TLE line.
///
/// # Safety
/// `line` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orblabel_tle_checksum(line: *const c_char, out: *mut u8) -> OrblabelStatus {
    guard(|| {
        let line = str_arg(line, "line")?;
        *out_arg(out, "out")? = tle_checksum(line);
        Ok(())
    })
}

/// Parses one two-line element set. The record is tagged TLE.
///
/// # Safety
/// `line1` and `line2` must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orblabel_parse_tle(
    line1: *const c_char,
    line2: *const c_char,
    out: *mut OrblabelRecord,
) -> OrblabelStatus {
    guard(|| {
        let (l1, l2) = (str_arg(line1, "line1")?, str_arg(line2, "line2")?);
        let out = out_arg(out, "out")?;
        let rec = parse_tle_lines(l1, l2).map_err(|e| (OrblabelStatus::Parse, e.to_string()))?;
        *out = OrblabelRecord::from(&rec);
        Ok(())
    })
}

/// Rule-tier label for `cur` given `prev`, with default thresholds.
/// `out_rule` receives the 1-based index of the rule that fired, 0 if none.
///
/// # Safety
/// Pointers must be valid; `out_label` and `out_rule` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orblabel_rule_label(
    prev: *const OrblabelRecord,
    cur: *const OrblabelRecord,
    out_label: *mut u8,
    out_rule: *mut u8,
) -> OrblabelStatus {
    guard(|| {
        let prev = TleRecord::try_from(ref_arg(prev, "prev")?)?;
        let cur = TleRecord::try_from(ref_arg(cur, "cur")?)?;
        let (label, rule) = (out_arg(out_label, "out_label")?, out_arg(out_rule, "out_rule")?);
        let o =
            rule_outcome(&prev, &cur, &RuleThresholds::default()).map_err(|e| (OrblabelStatus::Rule, e.to_string()))?;
        *label = o.label.as_byte();
        *rule = o.rule.unwrap_or(0);
        Ok(())
    })
}

/// New filter. `config_toml` is a pipeline configuration document, or null
/// for defaults. Returns null on error.
///
/// # Safety
/// `config_toml` must be null or a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn orblabel_imm_new(config_toml: *const c_char) -> *mut OrblabelImm {
    let mut handle = std::ptr::null_mut();
    let status = guard(|| {
        let cfg = if config_toml.is_null() {
            PipelineConfig::default()
        } else {
            let text = str_arg(config_toml, "config_toml")?;
            let cfg = PipelineConfig::from_toml(text).map_err(|e| (OrblabelStatus::InvalidConfig, e))?;
            cfg.validate().map_err(|e| (OrblabelStatus::InvalidConfig, e.to_string()))?;
            cfg
        };
        let filter = ImmFilter::new(cfg.filter_config()).map_err(|e| (OrblabelStatus::InvalidConfig, e.to_string()))?;
        handle = Box::into_raw(Box::new(OrblabelImm { filter }));
        Ok(())
    });
    if status == OrblabelStatus::Ok {
        handle
    } else {
        std::ptr::null_mut()
    }
}

/// Feeds one observation. Writes the mode posterior (nominal, maneuver,
/// decay) to `out_mu[0..3]` and the assigned label byte. On error the
/// handle keeps its previous state.
///
/// # Safety
/// `imm` must come from `orblabel_imm_new`; `out_mu` must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn orblabel_imm_step(
    imm: *mut OrblabelImm,
    obs: *const OrblabelRecord,
    out_mu: *mut f64,
    out_label: *mut u8,
) -> OrblabelStatus {
    guard(|| {
        let imm = out_arg(imm, "imm")?;
        let obs = TleRecord::try_from(ref_arg(obs, "obs")?)?;
        if out_mu.is_null() {
            return Err((OrblabelStatus::NullPointer, "out_mu is null".into()));
        }
        let label = out_arg(out_label, "out_label")?;
        let rec = imm.filter.step(&obs).map_err(|e| (OrblabelStatus::Filter, e.to_string()))?;
        std::slice::from_raw_parts_mut(out_mu, ORBLABEL_MODE_COUNT).copy_from_slice(&rec.mu);
        *label = rec.label.as_byte();
        Ok(())
    })
}

/// Forgets all filter state; the next step re-initializes.
///
/// # Safety
/// `imm` must come from `orblabel_imm_new`.
#[no_mangle]
pub unsafe extern "C" fn orblabel_imm_reset(imm: *mut OrblabelImm) -> OrblabelStatus {
    guard(|| {
        out_arg(imm, "imm")?.filter.reset();
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `imm` must be null or come from `orblabel_imm_new`, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn orblabel_imm_free(imm: *mut OrblabelImm) {
    if !imm.is_null() {
        drop(Box::from_raw(imm));
    }
}
