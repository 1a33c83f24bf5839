//! C ABI over `uavlasov`.
//!
//! Objects are opaque handles created by `*_new` functions and released by
//! the matching `*_free`. Every fallible call returns a [`UavStatus`]; the
//! message of the last failure on the calling thread is available through
//! [`uav_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use uavlasov::fields::{make_field, FieldCatalogEntry, FieldSet};
use uavlasov::harness::{self, ExperimentConfig, Scheme};
use uavlasov::micromacro::StartRule;
use uavlasov::mrc::plan_mrc;
use uavlasov::pic::{self, Mesh, ParticleEnsemble, RingParams};
use uavlasov::{Error, ParticleState};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UavStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Precondition = 4,
    Domain = 5,
    Range = 6,
    IterationLimit = 7,
    Io = 8,
    Panic = 9,
    BufferTooSmall = 10,
}

/// Integrators reachable through [`uav_integrate`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UavScheme {
    Mrc = 0,
    Tsf = 1,
    Mm = 2,
    Rk4 = 3,
    Limit = 4,
}

impl From<UavScheme> for Scheme {
    fn from(s: UavScheme) -> Self {
        match s {
            UavScheme::Mrc => Scheme::Mrc,
            UavScheme::Tsf => Scheme::Tsf,
            UavScheme::Mm => Scheme::Mm,
            UavScheme::Rk4 => Scheme::Rk4,
            UavScheme::Limit => Scheme::Limit,
        }
    }
}

/// A magnetic/electric field configuration.
pub struct UavField(FieldSet);

/// An experiment configuration.
pub struct UavConfig(ExperimentConfig);

/// A weighted particle ensemble on a periodic mesh.
pub struct UavEnsemble {
    mesh: Mesh,
    ens: ParticleEnsemble,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> UavStatus {
    match e {
        Error::Config(_) => UavStatus::Config,
        Error::Precondition(_) => UavStatus::Precondition,
        Error::Domain { .. } => UavStatus::Domain,
        Error::Range { .. } => UavStatus::Range,
        Error::IterationLimit { .. } => UavStatus::IterationLimit,
        Error::Io(_) => UavStatus::Io,
    }
}

enum Failure {
    Status(UavStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UavStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            UavStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(UavStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(UavStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn state_from(p: *const f64) -> Result<ParticleState, Failure> {
    if p.is_null() {
        return Err(null("state"));
    }
    let s = std::slice::from_raw_parts(p, 6);
    Ok(ParticleState::from_array([s[0], s[1], s[2], s[3], s[4], s[5]]))
}

unsafe fn state_to(p: *mut f64, st: &ParticleState) {
    std::ptr::copy_nonoverlapping(st.to_array().as_ptr(), p, 6);
}

/// Copies a string into `buf` with a terminating NUL. Returns
/// `BufferTooSmall` when `len` cannot hold it; `*needed` (if non-null)
/// receives the required size including the NUL.
unsafe fn copy_out(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Failure> {
    if !needed.is_null() {
        *needed = s.len() + 1;
    }
    if buf.is_null() || len < s.len() + 1 {
        return Err(Failure::Status(UavStatus::BufferTooSmall, format!("buffer needs {} bytes", s.len() + 1)));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr() as *const c_char, buf, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Writes the last error message of this thread into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn uav_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> UavStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match copy_out(&msg, buf, len, needed) {
        Ok(()) => UavStatus::Ok,
        Err(_) => UavStatus::BufferTooSmall,
    }
}

/// Builds a field from a catalog name: `example1`, `example2`, `uniform`,
/// `screw-pinch` or `screw-pinch:<alpha>`.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn uav_field_new(spec: *const c_char, out: *mut *mut UavField) -> UavStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let fs = make_field(FieldCatalogEntry::parse(string(spec, "spec")?)?)?;
        *out = Box::into_raw(Box::new(UavField(fs)));
        Ok(())
    })
}

/// # Safety
/// `field` must come from [`uav_field_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn uav_field_free(field: *mut UavField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Evaluates `E(t, x)` and `B(x)`.
///
/// # Safety
/// `x` must point to 3 doubles; `e` and `b` to 3 writable doubles each.
#[no_mangle]
pub unsafe extern "C" fn uav_field_eval(
    field: *const UavField,
    t: f64,
    x: *const f64,
    e: *mut f64,
    b: *mut f64,
) -> UavStatus {
    guard(|| {
        let f = &borrow(field, "field")?.0;
        if x.is_null() || e.is_null() || b.is_null() {
            return Err(null("vector argument"));
        }
        let xs = std::slice::from_raw_parts(x, 3);
        let s = f.eval_all(t, &uavlasov::Vec3::new(xs[0], xs[1], xs[2]));
        std::ptr::copy_nonoverlapping(s.e.as_ptr(), e, 3);
        std::ptr::copy_nonoverlapping(s.b.as_ptr(), b, 3);
        Ok(())
    })
}

/// Advances `state = (x, v)` from `0` to `t_final` with `steps` steps.
/// `n_tau` is ignored by MRC, RK4 and the averaged model.
///
/// # Safety
/// `state` must point to 6 doubles, read as input and overwritten.
#[no_mangle]
pub unsafe extern "C" fn uav_integrate(
    field: *const UavField,
    scheme: UavScheme,
    eps: f64,
    t_final: f64,
    steps: usize,
    n_tau: usize,
    state: *mut f64,
) -> UavStatus {
    guard(|| {
        let f = &borrow(field, "field")?.0;
        let p0 = state_from(state)?;
        let p = harness::run_scheme(scheme.into(), &p0, f, f, eps, t_final, steps, n_tau, None, StartRule::default())?;
        state_to(state, &p);
        Ok(())
    })
}

/// Reference solution of the full characteristics with `per_period`
/// extrapolation steps per gyro-period.
///
/// # Safety
/// `state` must point to 6 doubles, read as input and overwritten.
#[no_mangle]
pub unsafe extern "C" fn uav_reference(
    field: *const UavField,
    eps: f64,
    t_final: f64,
    per_period: usize,
    state: *mut f64,
) -> UavStatus {
    guard(|| {
        let f = &borrow(field, "field")?.0;
        let p0 = state_from(state)?;
        let p = harness::extrapolated_reference(&p0, f, f, eps, t_final, per_period)?;
        state_to(state, &p);
        Ok(())
    })
}

/// Default experiment configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn uav_config_new(out: *mut *mut UavConfig) -> UavStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(UavConfig(ExperimentConfig::default())));
        Ok(())
    })
}

/// Parses a `key = value` configuration text.
///
/// # Safety
/// `text` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn uav_config_parse(text: *const c_char, out: *mut *mut UavConfig) -> UavStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = ExperimentConfig::parse_str(string(text, "text")?)?;
        *out = Box::into_raw(Box::new(UavConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`uav_config_new`]/[`uav_config_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn uav_config_free(cfg: *mut UavConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Applies one setting, as in a configuration file.
///
/// # Safety
/// `key` and `value` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn uav_config_set(cfg: *mut UavConfig, key: *const c_char, value: *const c_char) -> UavStatus {
    guard(|| {
        let c = &mut borrow_mut(cfg, "cfg")?.0;
        c.set(string(key, "key")?, string(value, "value")?)?;
        Ok(())
    })
}

/// Writes the 16-hex-digit configuration hash.
///
/// # Safety
/// `buf` must hold `len` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn uav_config_hash(
    cfg: *const UavConfig,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> UavStatus {
    guard(|| copy_out(&borrow(cfg, "cfg")?.0.hash(), buf, len, needed))
}

/// Runs the convergence sweep of the configuration and writes the error
/// table as CSV. A reparametrized scheme is rejected.
///
/// # Safety
/// `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn uav_sweep_csv(cfg: *const UavConfig, path: *const c_char) -> UavStatus {
    guard(|| {
        let c = &borrow(cfg, "cfg")?.0;
        let recs = harness::convergence_sweep(c)?;
        harness::write_error_records(Path::new(string(path, "path")?), &recs, &c.hash())?;
        Ok(())
    })
}

/// Samples `n_p` particles of the perturbed ring on `[-8, 8]² × [0, 1]`
/// with `nodes[3]` mesh nodes.
///
/// # Safety
/// `nodes` must point to 3 values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn uav_ensemble_new(
    nodes: *const usize,
    n0: f64,
    eta: f64,
    k: u32,
    seed: u64,
    n_p: usize,
    out: *mut *mut UavEnsemble,
) -> UavStatus {
    guard(|| {
        if nodes.is_null() || out.is_null() {
            return Err(null("nodes or out"));
        }
        let n = std::slice::from_raw_parts(nodes, 3);
        let mesh = Mesh::ring_box([n[0], n[1], n[2]])?;
        let ens = pic::sample_initial(&RingParams { n0, eta, k, seed }, &mesh, n_p)?;
        *out = Box::into_raw(Box::new(UavEnsemble { mesh, ens }));
        Ok(())
    })
}

/// # Safety
/// `ens` must come from [`uav_ensemble_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn uav_ensemble_free(ens: *mut UavEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}

/// Number of particles, 0 for a null handle.
///
/// # Safety
/// `ens` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn uav_ensemble_len(ens: *const UavEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.ens.len())
}

/// Copies particle `i` into `state[6]` and its weight into `*weight`.
///
/// # Safety
/// `state` must hold 6 doubles; `weight` may be null.
#[no_mangle]
pub unsafe extern "C" fn uav_ensemble_get(
    ens: *const UavEnsemble,
    i: usize,
    state: *mut f64,
    weight: *mut f64,
) -> UavStatus {
    guard(|| {
        let e = &borrow(ens, "ens")?.ens;
        if state.is_null() {
            return Err(null("state"));
        }
        let p = e.states.get(i).ok_or_else(|| {
            Failure::Status(UavStatus::Range, format!("particle {i} out of range (len {})", e.len()))
        })?;
        state_to(state, p);
        if !weight.is_null() {
            *weight = e.weights[i];
        }
        Ok(())
    })
}

/// Advances the ensemble self-consistently to `t_final` with `macro_steps`
/// MRC steps. `*max_energy_error` receives the largest relative change of
/// the total energy.
///
/// # Safety
/// Handles must be valid; `max_energy_error` may be null.
#[no_mangle]
pub unsafe extern "C" fn uav_vp_run(
    ens: *mut UavEnsemble,
    field: *const UavField,
    eps: f64,
    t_final: f64,
    macro_steps: usize,
    max_energy_error: *mut f64,
) -> UavStatus {
    guard(|| {
        let e = borrow_mut(ens, "ens")?;
        let f = &borrow(field, "field")?.0;
        let plan = plan_mrc(t_final, eps, macro_steps)?;
        let rep = pic::vp_run(&mut e.ens, &e.mesh, f, &plan, &mut |_| Ok(()))?;
        if !max_energy_error.is_null() {
            *max_energy_error = rep.max_rel_energy_error;
        }
        Ok(())
    })
}
