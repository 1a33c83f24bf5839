//! Multi-revolution composition (MRC).
//!
//! In the fast time `s = t/ε` the characteristics read
//! `x' = εv`, `v' = εE + v×B`, whose stiff part is 2π-periodic. A macro step
//! `E_β(-2π) ∘ E_α(2π)` advances `M₀` gyro-periods at once, where `E_α(2π)`
//! is the period flow of `x' = αHv`, `v' = αHE + v×B`, and `E_β(-2π)` is the
//! backward period flow with slow coefficient `-βH`. Each period flow is
//! computed with Strang steps of two exactly solvable, volume-preserving
//! sub-flows.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{ElectricField, FieldSet};
use crate::rotation::rotate;
use crate::{ParticleState, Vec3};

/// Ensembles at least this large are pushed in parallel.
const PAR_THRESHOLD: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MrcMode {
    Composition,
    StrangFallback,
}

/// Macro/micro step layout for a run on `[0, T_f]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MrcPlan {
    pub eps: f64,
    pub t_final: f64,
    /// Whole gyro-periods in `T_f/ε`.
    pub m_f: u64,
    /// Leftover fast time, `T_f/ε - 2πM_f ∈ [0, 2π)`.
    pub t_r: f64,
    pub m: usize,
    /// Periods per macro step, `M_f/M`.
    pub m0: f64,
    pub h_coef: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Strang steps per period flow.
    pub micro: usize,
    pub mode: MrcMode,
}

impl MrcPlan {
    /// Micro step `2π/M_micro`.
    pub fn micro_step(&self) -> f64 {
        2.0 * PI / self.micro as f64
    }

    pub fn with_micro_steps(mut self, micro: usize) -> Result<Self> {
        if micro == 0 {
            return Err(Error::Config("micro step count must be at least 1".into()));
        }
        self.micro = micro;
        Ok(self)
    }

    /// Physical time reached after `n` macro steps.
    pub fn macro_time(&self, n: usize) -> f64 {
        2.0 * PI * self.h_coef * n as f64
    }

    /// Number of Strang steps and their size in fast time for the fallback
    /// mode.
    pub fn fallback_steps(&self) -> (usize, f64) {
        let len = self.t_final / self.eps;
        let h = 2.0 * PI / self.m as f64;
        let steps = ((len / h).ceil() as usize).max(1);
        (steps, len / steps as f64)
    }

    /// Micro steps for the remainder flow.
    pub fn remainder_steps(&self) -> usize {
        ((self.micro as f64 * self.t_r / (2.0 * PI)).ceil() as usize).max(1)
    }
}

/// Builds the plan for `M` macro steps on `[0, T_f]`. The micro count
/// defaults to `M`.
pub fn plan_mrc(t_final: f64, eps: f64, m: usize) -> Result<MrcPlan> {
    if m == 0 {
        return Err(Error::Config("MRC needs at least one macro step".into()));
    }
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::Config(format!("final time must be positive, got {t_final}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Config(format!("eps must lie in (0, 1], got {eps}")));
    }
    let fast = t_final / eps;
    let mut m_f = (t_final / (2.0 * PI * eps)).floor();
    let mut t_r = fast - 2.0 * PI * m_f;
    if t_r < 0.0 {
        if t_r > -1e-9 * fast.max(1.0) {
            t_r = 0.0;
        } else {
            m_f -= 1.0;
            t_r += 2.0 * PI;
        }
    } else if t_r >= 2.0 * PI {
        m_f += 1.0;
        t_r -= 2.0 * PI;
    }
    let m0 = m_f / m as f64;
    let mode = if m0 < 1.0 {
        MrcMode::StrangFallback
    } else {
        MrcMode::Composition
    };
    Ok(MrcPlan {
        eps,
        t_final,
        m_f: m_f as u64,
        t_r,
        m,
        m0,
        h_coef: eps * m0,
        alpha: 0.5 * (1.0 + 1.0 / m0),
        beta: 0.5 * (1.0 - 1.0 / m0),
        micro: m,
        mode,
    })
}

/// `x' = cv` for fast time `t`.
pub fn exact_position_subflow(x: &Vec3, v: &Vec3, c: f64, t: f64) -> (Vec3, Vec3) {
    (x + v * (t * c), *v)
}

/// `v' = cE + v×B` for fast time `t` (either sign), `x` and `E` frozen.
pub fn exact_velocity_subflow(
    x: &Vec3,
    v: &Vec3,
    e: &Vec3,
    b: &Vec3,
    c: f64,
    t: f64,
) -> Result<(Vec3, Vec3)> {
    let n = b.norm();
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!(
            "velocity sub-flow needs a unit field, |B| = {n}"
        )));
    }
    Ok((*x, velocity_kick(v, e, b, c, t)))
}

#[inline]
fn velocity_kick(v: &Vec3, e: &Vec3, b: &Vec3, c: f64, t: f64) -> Vec3 {
    let (s, co) = t.sin_cos();
    // homogeneous part rotates v by -t about B
    rotate(v, b, -t) + e * (c * s) + b * (c * (t - s) * b.dot(e)) + e.cross(b) * (c * (1.0 - co))
}

/// Supplier of the electric field seen by an ensemble. Self-consistent
/// sources recompute their field from the particle positions in
/// [`ElectricSource::refresh`], which is called before every velocity kick.
pub trait ElectricSource: Sync {
    fn refresh(&mut self, _t: f64, _particles: &[ParticleState]) -> Result<()> {
        Ok(())
    }
    fn electric(&self, t: f64, x: &Vec3) -> Vec3;
    /// Whether [`ElectricSource::refresh`] does any work.
    fn self_consistent(&self) -> bool {
        false
    }
}

/// Adapter for a prescribed field `E(t, x)`.
pub struct ExternalSource<'a>(pub &'a dyn ElectricField);

impl ElectricSource for ExternalSource<'_> {
    fn electric(&self, t: f64, x: &Vec3) -> Vec3 {
        self.0.electric(t, x)
    }
}

/// One Strang step `X(h/2) V(h) X(h/2)` of a single particle with a fixed
/// field provider.
pub fn strang_step(
    p: &ParticleState,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    c: f64,
    h: f64,
    t_mid: f64,
) -> ParticleState {
    let x = p.x + p.v * (0.5 * h * c);
    let v = velocity_kick(&p.v, &efield.electric(t_mid, &x), &fs.magnetic(&x), c, h);
    ParticleState::new(x + v * (0.5 * h * c), v)
}

fn for_each_particle(states: &mut [ParticleState], f: impl Fn(&mut ParticleState) + Sync + Send) {
    if states.len() >= PAR_THRESHOLD {
        states.par_iter_mut().for_each(f);
    } else {
        states.iter_mut().for_each(f);
    }
}

/// `n` Strang steps of size `h` (signed fast time) for the sub-flow pair
/// with slow coefficient `c`. `clock` is the physical time at the start and
/// is returned advanced by `c·n·h`.
fn strang_flow(
    states: &mut [ParticleState],
    fs: &FieldSet,
    source: &mut dyn ElectricSource,
    c: f64,
    h: f64,
    n: usize,
    clock: f64,
) -> Result<f64> {
    let half = 0.5 * h * c;
    for k in 0..n {
        let t_mid = clock + c * h * (k as f64 + 0.5);
        for_each_particle(states, |p| p.x += p.v * half);
        if source.self_consistent() {
            source.refresh(t_mid, states)?;
        }
        let src = &*source;
        for_each_particle(states, |p| {
            let e = src.electric(t_mid, &p.x);
            p.v = velocity_kick(&p.v, &e, &fs.magnetic(&p.x), c, h);
            p.x += p.v * half;
        });
    }
    Ok(clock + c * h * n as f64)
}

/// One macro step `E_β(-2π) ∘ E_α(2π)` starting at physical time `clock`.
pub fn mrc_macro_step(
    states: &mut [ParticleState],
    plan: &MrcPlan,
    fs: &FieldSet,
    source: &mut dyn ElectricSource,
    clock: f64,
) -> Result<f64> {
    let h = plan.micro_step();
    let mut t = strang_flow(states, fs, source, plan.alpha * plan.h_coef, h, plan.micro, clock)?;
    if plan.beta != 0.0 {
        t = strang_flow(states, fs, source, -plan.beta * plan.h_coef, -h, plan.micro, t)?;
    }
    Ok(t)
}

/// Runs the plan on an ensemble in place. `observer` is called after every
/// macro step (or every Strang step in fallback mode) with the step index
/// and physical time; the remainder flow is not observed separately, the
/// final state is.
pub fn mrc_integrate_observed(
    states: &mut [ParticleState],
    plan: &MrcPlan,
    fs: &FieldSet,
    source: &mut dyn ElectricSource,
    observer: &mut dyn FnMut(usize, f64, &[ParticleState]) -> Result<()>,
) -> Result<()> {
    fs.require_constant_intensity()?;
    match plan.mode {
        MrcMode::Composition => {
            let mut clock = 0.0;
            for n in 0..plan.m {
                clock = mrc_macro_step(states, plan, fs, source, clock)?;
                if n + 1 < plan.m || plan.t_r == 0.0 {
                    observer(n + 1, clock, states)?;
                }
            }
            if plan.t_r > 0.0 {
                let steps = plan.remainder_steps();
                strang_flow(states, fs, source, plan.eps, plan.t_r / steps as f64, steps, clock)?;
                observer(plan.m, plan.t_final, states)?;
            }
        }
        MrcMode::StrangFallback => {
            let (steps, h) = plan.fallback_steps();
            for k in 0..steps {
                let clock = plan.eps * h * k as f64;
                strang_flow(states, fs, source, plan.eps, h, 1, clock)?;
                let t = if k + 1 == steps {
                    plan.t_final
                } else {
                    plan.eps * h * (k + 1) as f64
                };
                observer(k + 1, t, states)?;
            }
        }
    }
    Ok(())
}

pub fn mrc_integrate(
    states: &mut [ParticleState],
    plan: &MrcPlan,
    fs: &FieldSet,
    source: &mut dyn ElectricSource,
) -> Result<()> {
    mrc_integrate_observed(states, plan, fs, source, &mut |_, _, _| Ok(()))
}

/// Single-particle convenience wrapper with a prescribed electric field.
pub fn mrc_single(
    p0: &ParticleState,
    plan: &MrcPlan,
    fs: &FieldSet,
    efield: &dyn ElectricField,
) -> Result<ParticleState> {
    let mut s = [*p0];
    mrc_integrate(&mut s, plan, fs, &mut ExternalSource(efield))?;
    Ok(s[0])
}
