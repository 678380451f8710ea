//! C ABI over `msgate`.
//!
//! Every function returns an [`MsgateStatus`]; results are written through out-pointers.
//! On failure a message is kept per thread and can be read with [`msgate_last_error`].
//! Tables are opaque handles created by `msgate_table_*` and released with [`msgate_table_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use msgate::experiment::{estimate_lambda, fit_fringe, FringeSample};
use msgate::hilbert::{displacement_element, thermal_probabilities, FockCutoff, QubitPair, C64};
use msgate::ideal::{DimensionlessGateParams, PulseShape};
use msgate::magnus::{CoefficientTable, InitialMotion, Normalization, PredictionReport, QuadratureConfig};
use msgate::oracle::{fock_observables, IntegratorConfig};
use msgate::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgateStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgatePair {
    Gg = 0,
    Ge = 1,
    Eg = 2,
    Ee = 3,
}

impl From<MsgatePair> for QubitPair {
    fn from(p: MsgatePair) -> Self {
        match p {
            MsgatePair::Gg => QubitPair::GG,
            MsgatePair::Ge => QubitPair::GE,
            MsgatePair::Eg => QubitPair::EG,
            MsgatePair::Ee => QubitPair::EE,
        }
    }
}

/// Initial motional state: a Fock state `n` when `thermal` is false, otherwise a thermal state of mean `n_bar`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MsgateMotion {
    pub thermal: bool,
    pub n: u32,
    pub n_bar: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MsgateScalars {
    pub a: f64,
    pub b_re: f64,
    pub b_im: f64,
    pub c_gg: f64,
    pub c_ee: f64,
    pub c_eg: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MsgatePrediction {
    pub phase: f64,
    /// gg, ge, eg, ee.
    pub populations: [f64; 4],
    pub fidelity: f64,
    pub purity: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MsgateObservables {
    pub populations: [f64; 4],
    pub relative_phase: f64,
    pub coherence_magnitude: f64,
    pub phase_reliable: bool,
    pub fidelity: f64,
    pub purity: f64,
    pub norm_drift: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MsgateCalibration {
    pub amplitude: f64,
    pub offset: f64,
    pub phi_seq: f64,
    pub sigma_phi: f64,
    pub residual: f64,
    pub reliable: bool,
    pub lambda_hat: f64,
    pub lambda_sigma: f64,
}

/// Opaque coefficient table.
pub struct MsgateTable(CoefficientTable);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> MsgateStatus {
    match err {
        Error::Io(_) => MsgateStatus::Io,
        e if e.is_config_error() => MsgateStatus::InvalidArgument,
        _ => MsgateStatus::Numerical,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MsgateStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MsgateStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            MsgateStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            MsgateStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MsgateStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn table<'a>(p: *const MsgateTable) -> Result<&'a CoefficientTable, Failure> {
    p.as_ref().map(|t| &t.0).ok_or(Failure::Null("table"))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p).to_str().map(PathBuf::from).map_err(|_| Failure::Invalid("path is not valid UTF-8".into()))
}

fn motion(m: &MsgateMotion, table: &CoefficientTable) -> Result<InitialMotion, Failure> {
    if m.thermal {
        Ok(InitialMotion::Thermal(thermal_probabilities(m.n_bar, FockCutoff::new(table.n_max()))?))
    } else {
        Ok(InitialMotion::Fock(m.n as usize))
    }
}

fn boxed(t: CoefficientTable) -> *mut MsgateTable {
    Box::into_raw(Box::new(MsgateTable(t)))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated, truncated to `len`).
/// Returns the full message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn msgate_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// ⟨m|D(α)|n⟩ with α = alpha_re + i alpha_im.
///
/// # Safety
/// `out_re` and `out_im` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msgate_displacement_element(m: u32, n: u32, alpha_re: f64, alpha_im: f64, out_re: *mut f64, out_im: *mut f64) -> MsgateStatus {
    guard(|| {
        let re = out(out_re, "out_re")?;
        let im = out(out_im, "out_im")?;
        let d = displacement_element(m as usize, n as usize, C64::new(alpha_re, alpha_im))?;
        *re = d.re;
        *im = d.im;
        Ok(())
    })
}

/// Computes the table for the given gate with the default quadrature settings.
///
/// # Safety
/// `table_out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msgate_table_compute(omega_tilde: f64, tau_g: f64, n_max: u32, table_out: *mut *mut MsgateTable) -> MsgateStatus {
    guard(|| {
        let slot = out(table_out, "table_out")?;
        let params = DimensionlessGateParams { omega_tilde, tau_g, ..DimensionlessGateParams::calibrated() };
        let t = CoefficientTable::compute(&params, &PulseShape::Square, FockCutoff::new(n_max as usize), &QuadratureConfig::default())?;
        *slot = boxed(t);
        Ok(())
    })
}

/// Computes the table for the calibrated gate (Ω̃ = 1/2, τ_g = 2π, n_max = 40).
///
/// # Safety
/// `table_out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msgate_table_compute_default(table_out: *mut *mut MsgateTable) -> MsgateStatus {
    guard(|| {
        let slot = out(table_out, "table_out")?;
        *slot = boxed(CoefficientTable::calibrated_default()?);
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `table_out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msgate_table_load(path_: *const c_char, table_out: *mut *mut MsgateTable) -> MsgateStatus {
    guard(|| {
        let slot = out(table_out, "table_out")?;
        *slot = boxed(CoefficientTable::load(&path(path_)?, None)?);
        Ok(())
    })
}

/// # Safety
/// `table` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn msgate_table_save(table_: *const MsgateTable, path_: *const c_char) -> MsgateStatus {
    guard(|| {
        table(table_)?.save(&path(path_)?)?;
        Ok(())
    })
}

/// Releases a table. Null is ignored.
///
/// # Safety
/// `table` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msgate_table_free(table_: *mut MsgateTable) {
    if !table_.is_null() {
        drop(Box::from_raw(table_));
    }
}

/// Fock cutoff of the table and the largest n with derived scalars.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn msgate_table_range(table_: *const MsgateTable, n_max: *mut u32, scalar_n_max: *mut u32) -> MsgateStatus {
    guard(|| {
        let t = table(table_)?;
        *out(n_max, "n_max")? = t.n_max() as u32;
        *out(scalar_n_max, "scalar_n_max")? = t.scalar_n_max() as u32;
        Ok(())
    })
}

/// a_n, b_n and c_n.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn msgate_table_scalars(table_: *const MsgateTable, n: u32, scalars_out: *mut MsgateScalars) -> MsgateStatus {
    guard(|| {
        let t = table(table_)?;
        let slot = out(scalars_out, "scalars_out")?;
        let n = n as usize;
        let b = t.b(n)?;
        let (c_gg, c_ee, c_eg) = t.c(n)?;
        *slot = MsgateScalars { a: t.a(n)?, b_re: b.re, b_im: b.im, c_gg, c_ee, c_eg };
        Ok(())
    })
}

/// Closed-form prediction at λ̃ for the given input; `order` (1 or 2) applies to the phase only.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn msgate_predict(
    table_: *const MsgateTable,
    pair: MsgatePair,
    motion_: MsgateMotion,
    lambda_tilde: f64,
    order: u32,
    renormalized: bool,
    prediction_out: *mut MsgatePrediction,
) -> MsgateStatus {
    guard(|| {
        let t = table(table_)?;
        let slot = out(prediction_out, "prediction_out")?;
        let norm = if renormalized { Normalization::Renormalized } else { Normalization::Raw };
        let r = PredictionReport::compute(pair.into(), &motion(&motion_, t)?, lambda_tilde, order as usize, norm, t)?;
        *slot = MsgatePrediction { phase: r.phase, populations: r.populations, fidelity: r.fidelity, purity: r.purity };
        Ok(())
    })
}

/// Numerical gate for a Fock input on the calibrated gate, RK4 with `steps` steps (0 selects the default).
///
/// # Safety
/// `observables_out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msgate_oracle_observables(pair: MsgatePair, n: u32, lambda_tilde: f64, steps: u32, observables_out: *mut MsgateObservables) -> MsgateStatus {
    guard(|| {
        let slot = out(observables_out, "observables_out")?;
        let params = DimensionlessGateParams::calibrated().with_lambda(lambda_tilde);
        let config = if steps == 0 { IntegratorConfig::default() } else { IntegratorConfig::default().with_steps(steps as usize) };
        let o = fock_observables(pair.into(), n as usize, &params, &PulseShape::Square, &config)?;
        *slot = MsgateObservables {
            populations: o.populations,
            relative_phase: o.relative_phase,
            coherence_magnitude: o.coherence_magnitude,
            phase_reliable: o.phase_reliable,
            fidelity: o.fidelity,
            purity: o.purity,
            norm_drift: o.norm_drift,
        };
        Ok(())
    })
}

/// Fits P_ee(φ_d) = A cos(2φ_d + φ_seq) + B and converts φ_seq into λ̂.
/// `shots` may be null, in which case all points are weighted equally.
///
/// # Safety
/// `phi_d` and `p_ee` (and `shots` when non-null) must point to `len` elements.
#[no_mangle]
pub unsafe extern "C" fn msgate_calibrate(
    table_: *const MsgateTable,
    phi_d: *const f64,
    p_ee: *const f64,
    shots: *const u32,
    len: usize,
    motion_: MsgateMotion,
    epsilon: f64,
    calibration_out: *mut MsgateCalibration,
) -> MsgateStatus {
    guard(|| {
        let t = table(table_)?;
        let slot = out(calibration_out, "calibration_out")?;
        if phi_d.is_null() || p_ee.is_null() {
            return Err(Failure::Null("fringe data"));
        }
        let phi = std::slice::from_raw_parts(phi_d, len);
        let p = std::slice::from_raw_parts(p_ee, len);
        let k = (!shots.is_null()).then(|| std::slice::from_raw_parts(shots, len));
        let samples: Vec<FringeSample> = (0..len).map(|i| FringeSample { phi_d: phi[i], p_ee: p[i], shots: k.map(|k| k[i]) }).collect();
        let fit = fit_fringe(&samples)?;
        let est = estimate_lambda(&fit, &motion(&motion_, t)?, epsilon, t)?;
        *slot = MsgateCalibration {
            amplitude: fit.amplitude,
            offset: fit.offset,
            phi_seq: fit.phi_seq,
            sigma_phi: fit.sigma_phi(),
            residual: fit.residual,
            reliable: fit.reliable,
            lambda_hat: est.lambda_hat,
            lambda_sigma: est.lambda_sigma,
        };
        Ok(())
    })
}
