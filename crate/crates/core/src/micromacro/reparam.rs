//! Micro-macro integration for fields of varying intensity.
//!
//! Each particle runs on its own clock `s` with `ds/dt = b(x) = |B(x)|`, so
//! the gyration has unit frequency in `s`. The filtered state is extended
//! with the physical time: `u = (x̃, ỹ, t)` and
//!
//! ```text
//! x̃' = F_x/b,   ỹ' = F_y[B/b, E/b],   t' = 1/b
//! ```
//!
//! Outputs at a common physical time `T` are obtained by interpolating the
//! step that brackets `T`.

use super::{MicroMacro, MmSnapshot, Restart, StartRule};
use crate::error::{Error, Result};
use crate::fields::{ElectricField, FieldSet};
use crate::rotation::{filtered_rhs, PeriodicSystem, TauGrid};
use crate::{Mat3, Vec3};

/// Unit field `B̃ = B/b`, its gradient `∂_iB̃ = ∂_iB/b - B(B·∂_iB)/b³`, and
/// `b`.
pub fn normalized_field(fs: &FieldSet, x: &Vec3) -> (Vec3, Mat3, f64) {
    let (b, g) = fs.magnetic_with_gradient(x);
    let n = b.norm();
    let bt = b / n;
    let corr = b * (b.transpose() * g) / (n * n * n);
    (bt, g / n - corr, n)
}

/// The extended seven-dimensional filtered system in fictitious time.
pub struct ReparamSystem<'a> {
    pub fields: &'a FieldSet,
    pub efield: &'a dyn ElectricField,
}

impl PeriodicSystem for ReparamSystem<'_> {
    fn dim(&self) -> usize {
        7
    }

    fn rhs(&self, _s: f64, tau: f64, u: &[f64], out: &mut [f64]) {
        let x = Vec3::new(u[0], u[1], u[2]);
        let y = Vec3::new(u[3], u[4], u[5]);
        let (bt, gt, b) = normalized_field(self.fields, &x);
        let e = self.efield.electric(u[6], &x) / b;
        let (fx, fy) = filtered_rhs(tau, &y, &e, &bt, &gt, 1.0 / b);
        let fx = fx / b;
        out[..3].copy_from_slice(fx.as_slice());
        out[3..6].copy_from_slice(fy.as_slice());
        out[6] = 1.0 / b;
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ReparamOptions {
    pub eps: f64,
    pub t_final: f64,
    pub ds: f64,
    pub n_tau: usize,
    pub restart: Restart,
    pub start: StartRule,
}

/// State after one accepted step.
#[derive(Clone, Copy, Debug)]
pub struct ReparamSample {
    pub step: usize,
    pub s: f64,
    pub t: f64,
    pub x: Vec3,
    /// Filtered velocity; `|ỹ| = |v|`.
    pub y: Vec3,
}

impl ReparamSample {
    /// `(B̃·ỹ)B̃`.
    pub fn parallel_velocity(&self, fs: &FieldSet) -> Vec3 {
        let bt = fs.magnetic(&self.x).normalize();
        bt * bt.dot(&self.y)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ReparamResult {
    pub x: Vec3,
    pub v_par: Vec3,
    pub speed: f64,
    /// Fictitious time at which `t = T`.
    pub s_star: f64,
    pub steps: usize,
    /// Whether `t^{n+1} > t^n` held for every step.
    pub monotone: bool,
}

/// Integrates to physical time `T` and synchronizes there. `observer`
/// receives every accepted step.
pub fn reparam_integrate(
    x0: &Vec3,
    v0: &Vec3,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    opts: &ReparamOptions,
    observer: &mut dyn FnMut(&ReparamSample) -> Result<()>,
) -> Result<ReparamResult> {
    if !(opts.t_final >= 0.0) || !(opts.ds > 0.0) {
        return Err(Error::Config(format!(
            "invalid reparametrized window: T = {}, ds = {}",
            opts.t_final, opts.ds
        )));
    }
    let c0 = fs.intensity_lower_bound();
    let check = |x: &Vec3| -> Result<()> {
        let b = fs.intensity(x);
        if b < c0 * (1.0 - 1e-9) {
            Err(Error::Domain { intensity: b, lower: c0, x: [x[0], x[1], x[2]] })
        } else {
            Ok(())
        }
    };
    check(x0)?;
    let sys = ReparamSystem { fields: fs, efield };
    let mm = MicroMacro::new(TauGrid::new(opts.n_tau)?, opts.eps, opts.ds)?.with_start(opts.start);
    let u0 = [x0[0], x0[1], x0[2], v0[0], v0[1], v0[2], 0.0];
    if opts.t_final == 0.0 {
        let bt = fs.magnetic(x0).normalize();
        return Ok(ReparamResult {
            x: *x0,
            v_par: bt * bt.dot(v0),
            speed: v0.norm(),
            s_star: 0.0,
            steps: 0,
            monotone: true,
        });
    }
    let mut st = mm.init(&sys, &u0, 0.0, 0.0)?;
    let cap = (fs.intensity_upper_bound() * opts.t_final / opts.ds).ceil() as usize + 8;
    let mut t_prev = 0.0;
    let mut monotone = true;
    for k in 0..cap {
        if opts.restart.due(k) {
            mm.restart(&sys, &mut st)?;
        }
        let a: MmSnapshot = mm.snapshot(&st);
        mm.step(&sys, &mut st)?;
        let u = mm.reconstruct(&st);
        let x = Vec3::new(u[0], u[1], u[2]);
        check(&x)?;
        let t_new = u[6];
        monotone &= t_new > t_prev;
        observer(&ReparamSample {
            step: k + 1,
            s: mm.time(&st),
            t: t_new,
            x,
            y: Vec3::new(u[3], u[4], u[5]),
        })?;
        if t_new >= opts.t_final {
            let b = mm.snapshot(&st);
            let theta = (opts.t_final - t_new) / (t_prev - t_new);
            let s_star = theta * a.t + (1.0 - theta) * b.t;
            let us = mm.interpolate(&sys, &a, &b, s_star)?;
            let xs = Vec3::new(us[0], us[1], us[2]);
            let ys = Vec3::new(us[3], us[4], us[5]);
            let bt = fs.magnetic(&xs).normalize();
            return Ok(ReparamResult {
                x: xs,
                v_par: bt * bt.dot(&ys),
                speed: ys.norm(),
                s_star,
                steps: k + 1,
                monotone,
            });
        }
        t_prev = t_new;
    }
    Err(Error::IterationLimit { target: opts.t_final, reached: t_prev, steps: cap })
}

/// `I = ½|v_⊥|²/b(x)` from the parallel velocity and the speed.
pub fn magnetic_moment_particle(x: &Vec3, v_par: &Vec3, speed: f64, fs: &FieldSet) -> f64 {
    let perp2 = (speed * speed - v_par.norm_squared()).max(0.0);
    0.5 * perp2 / fs.intensity(x)
}
