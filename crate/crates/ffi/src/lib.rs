//! C ABI for gcc-core.
//!
//! Every entry point returns a [`GccStatus`]; results go through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`gcc_last_error_message`]. Panics never cross the boundary.
//!
//! Configs and finished runs are opaque handles owned by the caller and
//! released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gcc_core::metrics::{compression_ratio_of, macs, mode_coverage, psnr, ssim, Image};
use gcc_core::model_zoo::zoo::reference_models;
use gcc_core::selective_activation::EquilibriumState;
use gcc_core::trainer::{run_experiment, ExperimentConfig, RunRecord, Task};
use gcc_core::GccError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GccStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Runtime = 4,
    Panic = 5,
}

/// Experiment configuration handle.
pub struct GccConfig {
    inner: ExperimentConfig,
}

/// Finished training run handle.
pub struct GccRun {
    record: RunRecord,
}

/// Final metrics of a run. Ring-task fields are -1 (counts) or NaN when the
/// task has none.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GccMetrics {
    pub teacher_macs: u64,
    pub student_macs: u64,
    pub compression_ratio: f64,
    pub d_full_macs: u64,
    pub d_active_macs: u64,
    pub covered_modes: i64,
    pub teacher_covered_modes: i64,
    pub high_quality: f64,
    pub mmd: f64,
    pub mean_gap_difference: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(GccStatus, String);

impl From<GccError> for Failure {
    fn from(e: GccError) -> Self {
        let status = match e {
            GccError::Config(_) | GccError::UnknownKeys(_) | GccError::TomlDe(_) => GccStatus::Config,
            GccError::InvalidInput(_)
            | GccError::Shape(_)
            | GccError::Spec { .. }
            | GccError::UnachievableBudget { .. }
            | GccError::PlanMismatch(_) => GccStatus::InvalidArgument,
            _ => GccStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GccStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(GccStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GccStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GccStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GccStatus::Panic
        }
    }
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

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call or [`gcc_clear_last_error`] on the same
/// thread.
#[no_mangle]
pub extern "C" fn gcc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn gcc_clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Static version string.
#[no_mangle]
pub extern "C" fn gcc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gcc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn image(p: *const f64, channels: usize, height: usize, width: usize, what: &str) -> Result<Image, Failure> {
    let n = channels * height * width;
    if n == 0 {
        return Err(invalid("image has no pixels"));
    }
    Ok(Image::new(channels, height, width, slice(p, n, what)?.to_vec())?)
}

/// PSNR in dB between two channel-major images of equal shape.
///
/// # Safety
/// `a` and `b` must each point to `channels * height * width` doubles.
#[no_mangle]
pub unsafe extern "C" fn gcc_psnr(
    a: *const f64,
    b: *const f64,
    channels: usize,
    height: usize,
    width: usize,
    max_value: f64,
    out_db: *mut f64,
) -> GccStatus {
    guard(|| {
        let o = out(out_db, "out_db")?;
        *o = psnr(&image(a, channels, height, width, "a")?, &image(b, channels, height, width, "b")?, max_value)?;
        Ok(())
    })
}

/// Mean SSIM over channels, Gaussian window, pixel range [0, 1].
///
/// # Safety
/// `a` and `b` must each point to `channels * height * width` doubles.
#[no_mangle]
pub unsafe extern "C" fn gcc_ssim(
    a: *const f64,
    b: *const f64,
    channels: usize,
    height: usize,
    width: usize,
    out_ssim: *mut f64,
) -> GccStatus {
    guard(|| {
        let o = out(out_ssim, "out_ssim")?;
        *o = ssim(&image(a, channels, height, width, "a")?, &image(b, channels, height, width, "b")?)?;
        Ok(())
    })
}

/// Mode coverage of `n` row-major samples of dimension `dim` against `k`
/// centers of the same dimension.
///
/// # Safety
/// `samples` holds `n * dim` doubles, `centers` holds `k * dim`.
#[no_mangle]
pub unsafe extern "C" fn gcc_mode_coverage(
    samples: *const f64,
    n: usize,
    centers: *const f64,
    k: usize,
    dim: usize,
    radius: f64,
    min_count: usize,
    out_covered: *mut usize,
    out_high_quality: *mut f64,
) -> GccStatus {
    guard(|| {
        if dim == 0 {
            return Err(invalid("dim must be ≥ 1"));
        }
        let rows = |p, m, what| -> Result<Vec<Vec<f64>>, Failure> {
            Ok(slice(p, m * dim, what)?.chunks(dim).map(<[f64]>::to_vec).collect())
        };
        let cov = mode_coverage(&rows(samples, n, "samples")?, &rows(centers, k, "centers")?, radius, min_count)?;
        *out(out_covered, "out_covered")? = cov.covered;
        *out(out_high_quality, "out_high_quality")? = cov.high_quality;
        Ok(())
    })
}

/// One update of the equilibrium target with β = epoch / epoch_total.
///
/// # Safety
/// `out_target` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcc_ema_update(
    target: f64,
    gap: f64,
    epoch: usize,
    epoch_total: usize,
    out_target: *mut f64,
) -> GccStatus {
    guard(|| {
        let o = out(out_target, "out_target")?;
        let mut s = EquilibriumState::new(epoch_total)?;
        s.set_epoch(epoch)?;
        s.l_target = target;
        *o = s.ema_update(gap)?;
        Ok(())
    })
}

/// Binary gates `alpha >= tau`, written as 0/1 bytes.
///
/// # Safety
/// `alpha` holds `n` doubles and `out_gates` has room for `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn gcc_gate_mask(alpha: *const f64, n: usize, tau: f64, out_gates: *mut u8) -> GccStatus {
    guard(|| {
        if !(0.0..=1.0).contains(&tau) {
            return Err(invalid(format!("tau {tau} outside [0, 1]")));
        }
        let a = slice(alpha, n, "alpha")?;
        if n > 0 && out_gates.is_null() {
            return Err(null("out_gates"));
        }
        for (i, v) in a.iter().enumerate() {
            *out_gates.add(i) = u8::from(*v >= tau);
        }
        Ok(())
    })
}

/// Percentage of MACs removed going from `original` to `compressed`.
///
/// # Safety
/// `out_percent` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcc_compression_ratio(original: f64, compressed: f64, out_percent: *mut f64) -> GccStatus {
    guard(|| {
        *out(out_percent, "out_percent")? = compression_ratio_of(original, compressed)?;
        Ok(())
    })
}

/// MACs of a reference generator: "cyclegan", "pix2pix", "sagan" or "srgan".
///
/// # Safety
/// `key` is a NUL-terminated string; `out_macs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcc_reference_macs(key: *const c_char, out_macs: *mut u64) -> GccStatus {
    guard(|| {
        let key = str_arg(key, "key")?;
        let o = out(out_macs, "out_macs")?;
        let m = reference_models()
            .into_iter()
            .find(|m| m.key == key)
            .ok_or_else(|| invalid(format!("unknown reference model `{key}`")))?;
        *o = macs(&m.spec, &m.measure_input)?.total;
        Ok(())
    })
}

fn boxed<T>(value: T, slot: *mut *mut T, what: &str) -> Result<(), Failure> {
    if slot.is_null() {
        return Err(null(what));
    }
    unsafe { *slot = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Defaults for a task name ("ring8", "blobs", "sagan", ...).
///
/// # Safety
/// `task` is a NUL-terminated string; `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcc_config_default(task: *const c_char, out_config: *mut *mut GccConfig) -> GccStatus {
    guard(|| {
        let task: Task = str_arg(task, "task")?.parse()?;
        boxed(GccConfig { inner: ExperimentConfig::defaults(task) }, out_config, "out_config")
    })
}

/// Parses and validates TOML config text.
///
/// # Safety
/// `text` is a NUL-terminated string; `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcc_config_from_toml(text: *const c_char, out_config: *mut *mut GccConfig) -> GccStatus {
    guard(|| {
        let inner = ExperimentConfig::from_toml_str(str_arg(text, "text")?)?;
        boxed(GccConfig { inner }, out_config, "out_config")
    })
}

/// Loads a config file, resolving a relative output directory against
/// `GCC_OUTPUT_ROOT`.
///
/// # Safety
/// `path` is a NUL-terminated string; `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcc_config_load(path: *const c_char, out_config: *mut *mut GccConfig) -> GccStatus {
    guard(|| {
        let inner = gcc_core::cli_reporting::load_config(Path::new(str_arg(path, "path")?))?;
        boxed(GccConfig { inner }, out_config, "out_config")
    })
}

/// Serializes a config to TOML. Free the string with [`gcc_string_free`].
///
/// # Safety
/// `config` is a live handle; `out_text` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcc_config_to_toml(config: *const GccConfig, out_text: *mut *mut c_char) -> GccStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        let o = out(out_text, "out_text")?;
        let text = c.inner.to_toml_string()?;
        *o = CString::new(text).map_err(|_| invalid("config contains NUL"))?.into_raw();
        Ok(())
    })
}

/// Replaces the seed and the epoch schedule, then revalidates.
///
/// # Safety
/// `config` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn gcc_config_set_schedule(
    config: *mut GccConfig,
    seed: u64,
    epochs_const: usize,
    epochs_decay: usize,
    steps_per_epoch: usize,
) -> GccStatus {
    guard(|| {
        let c = config.as_mut().ok_or_else(|| null("config"))?;
        let mut next = c.inner.clone();
        next.seed = seed;
        next.epochs_const = epochs_const;
        next.epochs_decay = epochs_decay;
        next.steps_per_epoch = steps_per_epoch;
        next.validate()?;
        c.inner = next;
        Ok(())
    })
}

/// # Safety
/// `config` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gcc_config_free(config: *mut GccConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs pruning and joint training. With a non-NULL `out_dir` the record,
/// logs and checkpoints are written there.
///
/// # Safety
/// `config` is a live handle, `out_dir` is NULL or a NUL-terminated string,
/// `out_run` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcc_train(config: *const GccConfig, out_dir: *const c_char, out_run: *mut *mut GccRun) -> GccStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        if out_run.is_null() {
            return Err(null("out_run"));
        }
        let dir = if out_dir.is_null() {
            None
        } else {
            Some(Path::new(str_arg(out_dir, "out_dir")?))
        };
        let (_, record) = run_experiment(&c.inner, dir)?;
        boxed(GccRun { record }, out_run, "out_run")
    })
}

/// Loads a run directory written by training.
///
/// # Safety
/// `run_dir` is a NUL-terminated string; `out_run` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcc_run_load(run_dir: *const c_char, out_run: *mut *mut GccRun) -> GccStatus {
    guard(|| {
        let record = RunRecord::load(Path::new(str_arg(run_dir, "run_dir")?))?;
        boxed(GccRun { record }, out_run, "out_run")
    })
}

/// # Safety
/// `run` is a live handle; `out_metrics` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcc_run_metrics(run: *const GccRun, out_metrics: *mut GccMetrics) -> GccStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        let o = out(out_metrics, "out_metrics")?;
        let m = r
            .record
            .final_metrics
            .as_ref()
            .ok_or_else(|| Failure(GccStatus::Runtime, "run has no final metrics".into()))?;
        let count = |c: Option<usize>| c.map_or(-1, |v| v as i64);
        *o = GccMetrics {
            teacher_macs: m.teacher_macs,
            student_macs: m.student_macs,
            compression_ratio: m.compression_ratio,
            d_full_macs: m.d_full_macs,
            d_active_macs: m.d_active_macs,
            covered_modes: count(m.covered_modes),
            teacher_covered_modes: count(m.teacher_covered_modes),
            high_quality: m.high_quality.unwrap_or(f64::NAN),
            mmd: m.mmd.unwrap_or(f64::NAN),
            mean_gap_difference: m.mean_gap_difference,
        };
        Ok(())
    })
}

/// Number of logged training iterations.
///
/// # Safety
/// `run` is a live handle; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcc_run_iterations(run: *const GccRun, out_count: *mut usize) -> GccStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        *out(out_count, "out_count")? = r.record.iterations.len();
        Ok(())
    })
}

/// # Safety
/// `run` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gcc_run_free(run: *mut GccRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
