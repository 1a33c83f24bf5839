//! Reference solutions of the unfiltered characteristics
//! `ẋ = v`, `v̇ = E(t, x) + v × B(x)/ε`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fields::{ElectricField, FieldSet};
use crate::{ParticleState, Vec3};

type State = [f64; 6];

fn rhs(fs: &FieldSet, efield: &dyn ElectricField, eps: f64, t: f64, u: &State) -> State {
    let x = Vec3::new(u[0], u[1], u[2]);
    let v = Vec3::new(u[3], u[4], u[5]);
    let a = efield.electric(t, &x) + v.cross(&fs.magnetic(&x)) / eps;
    [v[0], v[1], v[2], a[0], a[1], a[2]]
}

fn axpy(y: &State, a: f64, x: &State) -> State {
    std::array::from_fn(|i| y[i] + a * x[i])
}

/// Classical RK4 from `0` to `t_final` with step `dt` (the last step is
/// shortened). Logs a warning when `dt > ε/10`, where the result is not
/// trustworthy as a reference.
pub fn rk4_reference(
    p0: &ParticleState,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    eps: f64,
    t_final: f64,
    dt: f64,
) -> Result<ParticleState> {
    rk4_observed(p0, fs, efield, eps, t_final, dt, &mut |_, _| Ok(()))
}

/// [`rk4_reference`] with a callback after each step.
pub fn rk4_observed(
    p0: &ParticleState,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    eps: f64,
    t_final: f64,
    dt: f64,
    observer: &mut dyn FnMut(f64, &ParticleState) -> Result<()>,
) -> Result<ParticleState> {
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(Error::Config(format!("invalid RK4 window: T = {t_final}, dt = {dt}")));
    }
    if dt > eps / 10.0 {
        log::warn!("RK4 reference step {dt} exceeds eps/10 = {}; oscillation under-resolved", eps / 10.0);
    }
    let mut u = p0.to_array();
    let steps = (t_final / dt - 1e-9).ceil().max(0.0) as usize;
    let mut t = 0.0;
    for k in 0..steps {
        let h = if k + 1 == steps { t_final - t } else { dt };
        let k1 = rhs(fs, efield, eps, t, &u);
        let k2 = rhs(fs, efield, eps, t + h / 2.0, &axpy(&u, h / 2.0, &k1));
        let k3 = rhs(fs, efield, eps, t + h / 2.0, &axpy(&u, h / 2.0, &k2));
        let k4 = rhs(fs, efield, eps, t + h, &axpy(&u, h, &k3));
        for i in 0..6 {
            u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t = if k + 1 == steps { t_final } else { (k + 1) as f64 * dt };
        observer(t, &ParticleState::from_array(u))?;
    }
    Ok(ParticleState::from_array(u))
}

const GBS_SEQUENCE: [usize; 8] = [2, 4, 6, 8, 10, 12, 14, 16];

/// One extrapolated modified-midpoint step of size `big_h`.
fn gbs_step(fs: &FieldSet, efield: &dyn ElectricField, eps: f64, t: f64, u: &State, big_h: f64) -> State {
    let f0 = rhs(fs, efield, eps, t, u);
    let mut table: Vec<State> = Vec::with_capacity(GBS_SEQUENCE.len());
    for (k, &n) in GBS_SEQUENCE.iter().enumerate() {
        let h = big_h / n as f64;
        let mut z0 = *u;
        let mut z1 = axpy(u, h, &f0);
        for m in 1..n {
            let f = rhs(fs, efield, eps, t + m as f64 * h, &z1);
            let z2 = axpy(&z0, 2.0 * h, &f);
            z0 = z1;
            z1 = z2;
        }
        let f_end = rhs(fs, efield, eps, t + big_h, &z1);
        let mut cur: State = std::array::from_fn(|i| 0.5 * (z1[i] + z0[i] + h * f_end[i]));
        // Neville recursion in h²
        for j in 1..=k {
            let prev = table[j - 1];
            let r = (n as f64 / GBS_SEQUENCE[k - j] as f64).powi(2) - 1.0;
            let next: State = std::array::from_fn(|i| cur[i] + (cur[i] - prev[i]) / r);
            table[j - 1] = cur;
            cur = next;
        }
        table.push(cur);
    }
    *table.last().unwrap()
}

/// High-accuracy reference by Gragg–Bulirsch–Stoer extrapolation with a
/// fixed macro step of `1/per_period` of the shortest gyro-period.
pub fn extrapolated_reference(
    p0: &ParticleState,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    eps: f64,
    t_final: f64,
    per_period: usize,
) -> Result<ParticleState> {
    extrapolated_observed(p0, fs, efield, eps, t_final, per_period, &mut |_, _| Ok(()))
}

/// [`extrapolated_reference`] with a callback after each macro step.
pub fn extrapolated_observed(
    p0: &ParticleState,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    eps: f64,
    t_final: f64,
    per_period: usize,
    observer: &mut dyn FnMut(f64, &ParticleState) -> Result<()>,
) -> Result<ParticleState> {
    extrapolated_between(p0, fs, efield, eps, 0.0, t_final, per_period, observer)
}

/// Extrapolated reference from `t0` to `t1`.
#[allow(clippy::too_many_arguments)]
pub fn extrapolated_between(
    p0: &ParticleState,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    eps: f64,
    t0: f64,
    t1: f64,
    per_period: usize,
    observer: &mut dyn FnMut(f64, &ParticleState) -> Result<()>,
) -> Result<ParticleState> {
    if !(t1 >= t0) || per_period == 0 {
        return Err(Error::Config("invalid extrapolated reference window".into()));
    }
    if t1 == t0 {
        return Ok(*p0);
    }
    let period = 2.0 * PI * eps / fs.intensity_upper_bound();
    let target = (period / per_period as f64).min(0.05);
    let steps = (((t1 - t0) / target).ceil() as usize).max(1);
    let big_h = (t1 - t0) / steps as f64;
    let mut u = p0.to_array();
    for k in 0..steps {
        u = gbs_step(fs, efield, eps, t0 + k as f64 * big_h, &u, big_h);
        let t = if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * big_h };
        observer(t, &ParticleState::from_array(u))?;
    }
    Ok(ParticleState::from_array(u))
}
