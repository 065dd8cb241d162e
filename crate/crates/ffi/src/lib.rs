//! C interface to the chemostat toolkit.
//!
//! Every function returns a [`ChemostatStatus`]; on anything but
//! `CHEMOSTAT_STATUS_OK` the message is available from
//! [`chemostat_last_error`] on the calling thread. Handles are opaque and must
//! be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chemostat::asymptotics::stage5_zbar;
use chemostat::deterministic::{classify_final, integrate_ode, rhs, IntegrationControls, State, SurvivorLabel};
use chemostat::sde::{simulate_path, Scheme, SdeControls};
use chemostat::{ChemostatParams, Error, GrowthCurve, NoiseSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChemostatStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChemostatScheme {
    EulerMaruyama = 0,
    Milstein = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChemostatSurvivor {
    X = 0,
    Y = 1,
    BothWashout = 2,
    Coexist = 3,
    Undetermined = 4,
    NumericalFailure = 5,
}

impl From<SurvivorLabel> for ChemostatSurvivor {
    fn from(l: SurvivorLabel) -> Self {
        match l {
            SurvivorLabel::X => ChemostatSurvivor::X,
            SurvivorLabel::Y => ChemostatSurvivor::Y,
            SurvivorLabel::BothWashout => ChemostatSurvivor::BothWashout,
            SurvivorLabel::Coexist => ChemostatSurvivor::Coexist,
            SurvivorLabel::Undetermined => ChemostatSurvivor::Undetermined,
            SurvivorLabel::NumericalFailure => ChemostatSurvivor::NumericalFailure,
        }
    }
}

/// Model parameters and noise.
pub struct ChemostatModel {
    params: ChemostatParams,
}

/// Sampled path of `(x, y, z)`.
pub struct ChemostatTrajectory {
    times: Vec<f64>,
    states: Vec<[f64; 3]>,
    survivor: SurvivorLabel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Fail(ChemostatStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidParameter { .. } | Error::Precondition(_) | Error::Config(_) => {
                ChemostatStatus::InvalidArgument
            }
            Error::Domain(_)
            | Error::Singularity { .. }
            | Error::NoPhysicalRoot { .. }
            | Error::SteadyStateAbsent(_) => ChemostatStatus::Domain,
            _ => ChemostatStatus::Numerical,
        };
        Fail(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ChemostatStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ChemostatStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            ChemostatStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(ChemostatStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn read<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn read_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn read3(p: *const f64, what: &str) -> Result<[f64; 3], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok([*p, *p.add(1), *p.add(2)])
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chemostat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf`, truncating to
/// `len - 1` bytes. Returns the full message length without the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn chemostat_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// The `table1` preset (no death rates) at dilution rate `theta`, without noise.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn chemostat_model_table1(theta: f64, out: *mut *mut ChemostatModel) -> ChemostatStatus {
    guard(|| emit(out, ChemostatModel { params: ChemostatParams::table1(theta, NoiseSpec::None)? }))
}

/// The `table3` preset (with death rates) at dilution rate `theta`, without noise.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn chemostat_model_table3(theta: f64, out: *mut *mut ChemostatModel) -> ChemostatStatus {
    guard(|| emit(out, ChemostatModel { params: ChemostatParams::table3(theta, NoiseSpec::None)? }))
}

/// Custom model; `curve_x` and `curve_y` hold `(a, b, gamma)`.
///
/// # Safety
/// `curve_x` and `curve_y` must point to three doubles; `out` to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn chemostat_model_new(
    theta: f64,
    z_f: f64,
    curve_x: *const f64,
    curve_y: *const f64,
    out: *mut *mut ChemostatModel,
) -> ChemostatStatus {
    guard(|| {
        let [ax, bx, gx] = read3(curve_x, "curve_x")?;
        let [ay, by, gy] = read3(curve_y, "curve_y")?;
        let params = ChemostatParams::new(
            theta,
            z_f,
            GrowthCurve::new(ax, bx, gx)?,
            GrowthCurve::new(ay, by, gy)?,
            NoiseSpec::None,
        )?;
        emit(out, ChemostatModel { params })
    })
}

/// # Safety
/// `model` must be null or a handle from a `chemostat_model_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn chemostat_model_free(model: *mut ChemostatModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chemostat_model_set_theta(model: *mut ChemostatModel, theta: f64) -> ChemostatStatus {
    guard(|| {
        let m = read_mut(model, "model")?;
        m.params = m.params.with_theta(theta)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chemostat_model_set_z_f(model: *mut ChemostatModel, z_f: f64) -> ChemostatStatus {
    guard(|| {
        let m = read_mut(model, "model")?;
        m.params = m.params.with_z_f(z_f)?;
        Ok(())
    })
}

/// Independent multiplicative noise on each component.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chemostat_model_set_general_noise(
    model: *mut ChemostatModel,
    sigma1: f64,
    sigma2: f64,
    sigma3: f64,
) -> ChemostatStatus {
    guard(|| {
        let m = read_mut(model, "model")?;
        m.params = m.params.with_noise(NoiseSpec::General { sigma1, sigma2, sigma3 })?;
        Ok(())
    })
}

/// Noise on the dilution rate.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chemostat_model_set_dilution_noise(model: *mut ChemostatModel, sigma: f64) -> ChemostatStatus {
    guard(|| {
        let m = read_mut(model, "model")?;
        m.params = m.params.with_noise(NoiseSpec::DilutionRate { sigma })?;
        Ok(())
    })
}

/// Deterministic right-hand side at `state = (x, y, z)`.
///
/// # Safety
/// `state` must point to three doubles and `out` to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn chemostat_model_rhs(
    model: *const ChemostatModel,
    state: *const f64,
    out: *mut f64,
) -> ChemostatStatus {
    guard(|| {
        let m = read(model, "model")?;
        let s = read3(state, "state")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = rhs(&m.params, &State::from_array(s));
        ptr::copy_nonoverlapping(d.as_ptr(), out, 3);
        Ok(())
    })
}

/// Scaled quasi-steady substrate for scaled populations `(x_bar, y_bar)`.
///
/// # Safety
/// `model` must be a live handle and `out` a writable double.
#[no_mangle]
pub unsafe extern "C" fn chemostat_stage5_zbar(
    model: *const ChemostatModel,
    x_bar: f64,
    y_bar: f64,
    out: *mut f64,
) -> ChemostatStatus {
    guard(|| {
        let m = read(model, "model")?;
        let out = read_mut(out, "out")?;
        *out = stage5_zbar(&m.params, x_bar, y_bar)?;
        Ok(())
    })
}

/// Adaptive integration of the deterministic system on `n_out` uniform
/// intervals of `[0, t_end]`.
///
/// # Safety
/// `s0` must point to three doubles and `out` to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn chemostat_integrate_ode(
    model: *const ChemostatModel,
    s0: *const f64,
    t_end: f64,
    n_out: usize,
    out: *mut *mut ChemostatTrajectory,
) -> ChemostatStatus {
    guard(|| {
        let m = read(model, "model")?;
        let s0 = State::from_array(read3(s0, "s0")?);
        let controls = IntegrationControls { n_out, ..Default::default() };
        let traj = integrate_ode(&m.params, s0, t_end, &controls)?;
        let survivor = classify_final(&m.params, &traj.last());
        emit(
            out,
            ChemostatTrajectory {
                times: traj.times,
                states: traj.states.iter().map(|s| s.to_array()).collect(),
                survivor,
            },
        )
    })
}

/// One stochastic path with Wiener increments addressed by `(seed, path)`.
/// A non-positive `dt` selects the default step.
///
/// # Safety
/// `s0` must point to three doubles and `out` to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn chemostat_simulate_sde(
    model: *const ChemostatModel,
    s0: *const f64,
    dt: f64,
    t_end: f64,
    seed: u64,
    path: u32,
    scheme: ChemostatScheme,
    out: *mut *mut ChemostatTrajectory,
) -> ChemostatStatus {
    guard(|| {
        let m = read(model, "model")?;
        let s0 = State::from_array(read3(s0, "s0")?);
        let mut controls = SdeControls::new(&m.params, t_end);
        if dt > 0.0 {
            controls.dt = dt;
            controls.record_every = (((t_end / dt).round() as u64) / 1000).max(1);
        }
        controls.scheme = match scheme {
            ChemostatScheme::EulerMaruyama => Scheme::EulerMaruyama,
            ChemostatScheme::Milstein => Scheme::Milstein,
        };
        let traj = simulate_path(&m.params, s0, &controls, seed, path)?;
        let survivor = traj.survivor();
        emit(
            out,
            ChemostatTrajectory {
                times: traj.times,
                states: traj.states.iter().map(|s| s.to_array()).collect(),
                survivor,
            },
        )
    })
}

/// Number of recorded samples; 0 for a null handle.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chemostat_trajectory_len(traj: *const ChemostatTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.times.len())
}

/// Copies the samples: `times[capacity]` and row-major `states[3 * capacity]`.
/// Either buffer may be null to skip it.
///
/// # Safety
/// Non-null buffers must hold `capacity` (times) or `3 * capacity` (states) doubles.
#[no_mangle]
pub unsafe extern "C" fn chemostat_trajectory_copy(
    traj: *const ChemostatTrajectory,
    times: *mut f64,
    states: *mut f64,
    capacity: usize,
) -> ChemostatStatus {
    guard(|| {
        let t = read(traj, "traj")?;
        let n = t.times.len();
        if capacity < n {
            return Err(Fail(ChemostatStatus::BufferTooSmall, format!("need {n} samples, capacity is {capacity}")));
        }
        if !times.is_null() {
            ptr::copy_nonoverlapping(t.times.as_ptr(), times, n);
        }
        if !states.is_null() {
            ptr::copy_nonoverlapping(t.states.as_ptr().cast::<f64>(), states, 3 * n);
        }
        Ok(())
    })
}

/// Survivor label of the path.
///
/// # Safety
/// `traj` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn chemostat_trajectory_survivor(
    traj: *const ChemostatTrajectory,
    out: *mut ChemostatSurvivor,
) -> ChemostatStatus {
    guard(|| {
        let t = read(traj, "traj")?;
        *read_mut(out, "out")? = t.survivor.into();
        Ok(())
    })
}

/// # Safety
/// `traj` must be null or a handle from a simulation function.
#[no_mangle]
pub unsafe extern "C" fn chemostat_trajectory_free(traj: *mut ChemostatTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        let n = unsafe { chemostat_last_error(buf.as_mut_ptr(), buf.len()) };
        let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
        String::from_utf8(bytes).unwrap()
    }

    #[test]
    fn error_maps_to_status() {
        assert!(matches!(Fail::from(Error::Config("x".into())).0, ChemostatStatus::InvalidArgument));
        assert!(matches!(Fail::from(Error::NoPhysicalRoot { x_bar: 0.0, y_bar: 0.0 }).0, ChemostatStatus::Domain));
        assert!(matches!(Fail::from(Error::StepSizeUnderflow { t: 1.0 }).0, ChemostatStatus::Numerical));
    }

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, ChemostatStatus::Panic);
        assert!(last_error().contains("boom"));
    }

    #[test]
    fn error_message_truncates() {
        set_error("abcdef");
        let mut buf = [0 as c_char; 4];
        let n = unsafe { chemostat_last_error(buf.as_mut_ptr(), 4) };
        assert_eq!(n, 6);
        assert_eq!(buf.map(|c| c as u8), *b"abc\0");
    }
}
