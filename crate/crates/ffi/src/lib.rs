//! C ABI over the `volstream` simulator.
//!
//! Objects cross the boundary as opaque handles made by the `vs_config_*`,
//! `vs_traces_*` and `vs_run_session` calls and released with the matching
//! `*_free`. Every fallible call returns a [`VsStatus`]; on failure
//! [`vs_last_error_message`] describes the problem. Panics never unwind into
//! the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use volstream::abr::Scheme;
use volstream::acuity::{AcuityModel, AcuityParams, DensityModel};
use volstream::io::{self, BandwidthProfile, Config, MotionProfile, SessionTraces, SyntheticParams};
use volstream::sim::{self, SessionConfig, SessionReport};
use volstream::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Io = 3,
    Invariant = 4,
    Panic = 5,
}

/// Simulation settings.
pub struct VsConfig {
    config: Config,
    session: SessionConfig,
}

/// Bandwidth and pose traces for one session.
pub struct VsTraces {
    traces: SessionTraces,
}

/// Per-chunk and per-session results of one run.
pub struct VsReport {
    report: SessionReport,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VsSummary {
    pub chunks: usize,
    pub truncated: bool,
    pub mean_q1: f64,
    pub total_q2: f64,
    pub mean_q3: f64,
    pub mean_q4: f64,
    pub total_qoe: f64,
    pub mean_qoe: f64,
    pub total_bytes: u64,
    pub startup_delay: f64,
    pub stall_chunks: usize,
    pub mean_d_t: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VsChunk {
    pub chunk: usize,
    pub request_time: f64,
    pub bytes: u64,
    pub tau: f64,
    pub buffer_before: f64,
    pub buffer_after: f64,
    pub wait: f64,
    pub d_t: f64,
    pub eta_star: f64,
    pub visible_tiles: usize,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    pub qoe: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Failure {
    Null(&'static str),
    Core(Error),
    Utf8(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VsStatus {
    let outcome = panic::catch_unwind(AssertUnwindSafe(f));
    let (status, msg) = match outcome {
        Ok(Ok(())) => (VsStatus::Ok, String::new()),
        Ok(Err(Failure::Null(what))) => (VsStatus::NullPointer, format!("{what} is null")),
        Ok(Err(Failure::Utf8(what))) => (VsStatus::InvalidInput, format!("{what} is not valid UTF-8")),
        Ok(Err(Failure::Core(e))) => {
            let status = match e {
                Error::Io { .. } => VsStatus::Io,
                Error::Invariant(_) => VsStatus::Invariant,
                _ => VsStatus::InvalidInput,
            };
            (status, e.to_string())
        }
        Err(p) => {
            let what = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (VsStatus::Panic, format!("internal panic: {what}"))
        }
    };
    set_error(&msg);
    status
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(what))
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn make_config(config: Config, base: &Path) -> Result<VsConfig, Failure> {
    let session = config.resolve(base)?;
    Ok(VsConfig { config, session })
}

/// Message for the most recent failed call on this thread; empty after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default settings.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn vs_config_default(out: *mut *mut VsConfig) -> VsStatus {
    guard(|| put(out, make_config(Config::default(), Path::new("."))?))
}

/// Settings parsed from TOML text. Relative trace paths resolve against the
/// working directory.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` as in [`vs_config_default`].
#[no_mangle]
pub unsafe extern "C" fn vs_config_from_toml(toml: *const c_char, out: *mut *mut VsConfig) -> VsStatus {
    guard(|| {
        let config = Config::from_toml_str(text(toml, "toml")?)?;
        put(out, make_config(config, Path::new("."))?)
    })
}

/// Settings loaded from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` as in [`vs_config_default`].
#[no_mangle]
pub unsafe extern "C" fn vs_config_load(path: *const c_char, out: *mut *mut VsConfig) -> VsStatus {
    guard(|| {
        let path = PathBuf::from(text(path, "path")?);
        let config = Config::load(&path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        put(out, make_config(config, &base)?)
    })
}

/// Switches between history-based (`false`) and oracle (`true`) prediction.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vs_config_set_oracle(config: *mut VsConfig, oracle: bool) -> VsStatus {
    guard(|| {
        let c = config.as_mut().ok_or(Failure::Null("config"))?;
        c.session.prediction = if oracle {
            volstream::predictor::PredictionMode::Oracle
        } else {
            volstream::predictor::PredictionMode::History
        };
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vs_config_free(config: *mut VsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Reads a `t_s,mbps` bandwidth CSV and a `t_s,x,y,z,qw,qx,qy,qz` pose CSV,
/// using the content volume from `config`.
///
/// # Safety
/// `config` must be a live handle, the paths NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn vs_traces_load(
    config: *const VsConfig,
    bandwidth_csv: *const c_char,
    pose_csv: *const c_char,
    out: *mut *mut VsTraces,
) -> VsStatus {
    guard(|| {
        let c = get(config, "config")?;
        let traces = SessionTraces {
            bandwidth: io::parse_bandwidth_trace(Path::new(text(bandwidth_csv, "bandwidth_csv")?))?,
            poses: io::parse_pose_trace(Path::new(text(pose_csv, "pose_csv")?))?,
            content: c.config.content_box()?,
        };
        put(out, VsTraces { traces })
    })
}

/// Generates synthetic traces. `motion` is `far-orbit`, `close-in` or
/// `crossing`; `bandwidth` is `low`, `mid` or `high`.
///
/// # Safety
/// `config` must be a live handle, the names NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn vs_traces_synthetic(
    config: *const VsConfig,
    motion: *const c_char,
    bandwidth: *const c_char,
    duration_s: f64,
    seed: u64,
    out: *mut *mut VsTraces,
) -> VsStatus {
    guard(|| {
        let c = get(config, "config")?;
        let motion: MotionProfile = text(motion, "motion")?.parse()?;
        let bandwidth: BandwidthProfile = text(bandwidth, "bandwidth")?.parse()?;
        let mut params = SyntheticParams::new(motion, bandwidth, duration_s);
        params.d0 = c.config.acuity.d0;
        params.content = c.config.content_box()?;
        let traces = io::generate_synthetic_traces(&params, seed)?;
        put(out, VsTraces { traces })
    })
}

/// Writes the traces as `bandwidth.csv` and `pose.csv` under `dir`.
///
/// # Safety
/// `traces` must be a live handle, `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vs_traces_write(traces: *const VsTraces, dir: *const c_char) -> VsStatus {
    guard(|| {
        let t = &get(traces, "traces")?.traces;
        let dir = Path::new(text(dir, "dir")?);
        io::write_bandwidth_trace(&dir.join("bandwidth.csv"), &t.bandwidth)?;
        io::write_pose_trace(&dir.join("pose.csv"), &t.poses)?;
        Ok(())
    })
}

/// # Safety
/// `traces` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vs_traces_free(traces: *mut VsTraces) {
    if !traces.is_null() {
        drop(Box::from_raw(traces));
    }
}

/// Simulates one session. `scheme` is `proposed`, `rate_utility`,
/// `viewport_utility` or `distance_tile`.
///
/// # Safety
/// `config` and `traces` must be live handles, `scheme` a NUL-terminated
/// string, `out` valid for writing a handle.
#[no_mangle]
pub unsafe extern "C" fn vs_run_session(
    config: *const VsConfig,
    traces: *const VsTraces,
    scheme: *const c_char,
    out: *mut *mut VsReport,
) -> VsStatus {
    guard(|| {
        let c = get(config, "config")?;
        let t = get(traces, "traces")?;
        let scheme: Scheme = text(scheme, "scheme")?.parse()?;
        let report = sim::run_session(&c.session, &t.traces, scheme)?;
        put(out, VsReport { report })
    })
}

/// # Safety
/// `report` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn vs_report_summary(report: *const VsReport, out: *mut VsSummary) -> VsStatus {
    guard(|| {
        let s = &get(report, "report")?.report.summary;
        let out = out.as_mut().ok_or(Failure::Null("output pointer"))?;
        *out = VsSummary {
            chunks: s.chunks,
            truncated: s.truncated,
            mean_q1: s.mean_q1,
            total_q2: s.total_q2,
            mean_q3: s.mean_q3,
            mean_q4: s.mean_q4,
            total_qoe: s.total_qoe,
            mean_qoe: s.mean_qoe,
            total_bytes: s.total_bytes,
            startup_delay: s.startup_delay,
            stall_chunks: s.stall_chunks,
            mean_d_t: s.mean_d_t,
        };
        Ok(())
    })
}

/// Number of chunks in the report; 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vs_report_chunk_count(report: *const VsReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.chunks.len())
}

/// # Safety
/// `report` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn vs_report_chunk(report: *const VsReport, index: usize, out: *mut VsChunk) -> VsStatus {
    guard(|| {
        let chunks = &get(report, "report")?.report.chunks;
        let c = chunks.get(index).ok_or_else(|| {
            Failure::Core(Error::InvalidInput(format!(
                "chunk {index} out of range for {} chunks",
                chunks.len()
            )))
        })?;
        let out = out.as_mut().ok_or(Failure::Null("output pointer"))?;
        *out = VsChunk {
            chunk: c.chunk,
            request_time: c.request_time,
            bytes: c.bytes,
            tau: c.tau,
            buffer_before: c.buffer_before,
            buffer_after: c.buffer_after,
            wait: c.wait,
            d_t: c.d_t,
            eta_star: c.eta_star,
            visible_tiles: c.visible_tiles,
            q1: c.qoe.q1,
            q2: c.qoe.q2,
            q3: c.qoe.q3,
            q4: c.qoe.q4,
            qoe: c.qoe.total,
        };
        Ok(())
    })
}

/// Writes `chunks.csv` (or `chunks.json`) and `summary.json` under `dir`.
///
/// # Safety
/// `report` must be a live handle, `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vs_report_write(report: *const VsReport, dir: *const c_char, json: bool) -> VsStatus {
    guard(|| {
        let r = &get(report, "report")?.report;
        let dir = Path::new(text(dir, "dir")?);
        if json {
            io::write_json(&dir.join("chunks.json"), &r.chunks)?;
        } else {
            io::write_chunks_csv(&dir.join("chunks.csv"), &r.chunks)?;
        }
        io::write_summary_json(&dir.join("summary.json"), &r.summary)?;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vs_report_free(report: *mut VsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Boundary point density at `distance` meters under the parametric
/// density model `eta = (v0 / v)^alpha`.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn vs_acuity_boundary_pld(
    d0: f64,
    v0: f64,
    ppi_device: f64,
    theta_arcmin: f64,
    alpha: f64,
    distance: f64,
    out: *mut f64,
) -> VsStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Failure::Null("output pointer"))?;
        let params = AcuityParams {
            d0,
            v0,
            ppi_device,
            theta_arcmin,
        };
        let model = AcuityModel::new(params, DensityModel::parametric(v0, alpha)?)?;
        *out = model.boundary_for_distance(distance)?.eta;
        Ok(())
    })
}
