//! Micro-macro (MM) decomposition `u(t) = Θ(t/ε, r(t)) + w(t)` with
//! `Θ(τ, r) = r + εAF(τ, r)`.
//!
//! The macro part `r` follows the averaged field `ΠF(·, Θ(·, r))` by
//! leapfrog; the small defect `w` is advanced by an exponential quadrature
//! of `H(τ) = F(τ, Θ(τ, r) + w)`. A restart re-derives `(r, w)` from the
//! current state, with the fast phase carried over as an offset `σ`.

mod reparam;

pub use reparam::{
    magnetic_moment_particle, reparam_integrate, ReparamOptions, ReparamResult, ReparamSample,
    ReparamSystem,
};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{ElectricField, FieldSet};
use crate::rotation::{
    phi1, phi2, reduce_phase, sample_rhs, unfilter, FilteredCharacteristics, PeriodicSystem,
    Spectrum, TauGrid,
};
use crate::{ParticleState, Vec3};

/// `α_l = ∫_0^Δt e^{ilt/ε} dt` and `β_l = ∫_0^Δt t e^{ilt/ε} dt`.
#[derive(Clone, Debug)]
pub struct MicroCoefficients {
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
}

pub fn micro_coefficients(dt: f64, eps: f64, grid: &TauGrid) -> Result<MicroCoefficients> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let mut alpha = Vec::with_capacity(grid.len());
    let mut beta = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let z = Complex64::new(0.0, grid.mode(j) as f64 * dt / eps);
        let p1 = phi1(z);
        alpha.push(p1 * dt);
        beta.push((p1 - phi2(z)) * (dt * dt));
    }
    Ok(MicroCoefficients { alpha, beta })
}

/// Macro part, defect and the history the two-step formulas need.
#[derive(Clone, Debug)]
pub struct MmState {
    pub r: Vec<f64>,
    pub w: Vec<f64>,
    /// Steps since the last (re)start.
    pub n: usize,
    /// Phase at the last (re)start, in `[0, 2π)`.
    pub sigma: f64,
    /// Physical time of the last (re)start.
    pub t0: f64,
    r_prev: Option<Vec<f64>>,
    h_prev: Option<Spectrum>,
    /// `εAF(·, r)` for the current `r`.
    af: Spectrum,
    restarted: bool,
}

/// `(t, r, w)` at one step, with the window data needed to evaluate `Θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MmSnapshot {
    pub t: f64,
    pub r: Vec<f64>,
    pub w: Vec<f64>,
    pub sigma: f64,
    pub t0: f64,
}

/// Fixed-step MM driver for one `(Δt, ε, N_τ)` choice.
pub struct MicroMacro {
    pub grid: TauGrid,
    pub eps: f64,
    pub dt: f64,
    pub coeffs: MicroCoefficients,
    pub start: StartRule,
}

/// How the first step of a window is taken, where no history exists.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StartRule {
    /// Euler macro step and `α`-only micro quadrature in every window.
    /// Frequent restarts degrade the scheme to first order.
    Euler,
    /// Euler predictor, then a trapezoidal macro step and the full `α/β`
    /// quadrature with the predicted slope, in every window.
    Heun,
    /// Euler in the initial window, Heun in windows opened by a restart.
    #[default]
    HeunOnRestart,
}

impl StartRule {
    pub fn name(&self) -> &'static str {
        match self {
            StartRule::Euler => "euler",
            StartRule::Heun => "heun",
            StartRule::HeunOnRestart => "heun-on-restart",
        }
    }

    fn heun(self, restarted: bool) -> bool {
        match self {
            StartRule::Euler => false,
            StartRule::Heun => true,
            StartRule::HeunOnRestart => restarted,
        }
    }
}

impl MicroMacro {
    pub fn new(grid: TauGrid, eps: f64, dt: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::Config(format!("eps must be non-negative, got {eps}")));
        }
        let coeffs = micro_coefficients(dt, eps.max(f64::MIN_POSITIVE), &grid)?;
        Ok(Self { grid, eps, dt, coeffs, start: StartRule::default() })
    }

    pub fn with_start(mut self, start: StartRule) -> Self {
        self.start = start;
        self
    }

    /// `εAF(·, r)` as a spectrum.
    fn eps_af<S: PeriodicSystem + ?Sized>(&self, sys: &S, t: f64, r: &[f64]) -> Result<Spectrum> {
        let f = sample_rhs(sys, &self.grid, t, |_, u| u.copy_from_slice(r));
        let mut s = self.grid.transform(&f)?;
        self.grid.antiderivative_in_place(&mut s);
        for c in s.coeffs_mut() {
            *c *= self.eps;
        }
        Ok(s)
    }

    /// `Θ(τ, r) = r + εAF(τ, r)` at an arbitrary phase.
    pub fn theta<S: PeriodicSystem + ?Sized>(&self, sys: &S, t: f64, tau: f64, r: &[f64]) -> Result<Vec<f64>> {
        let af = self.eps_af(sys, t, r)?;
        Ok(add(r, &self.grid.evaluate(&af, tau)))
    }

    /// Decomposes `u0` at physical time `t0` and phase `sigma`:
    /// `r⁰ = u0 - εAF(σ, u0)`, `w⁰ = εA[F(·, u0) - F(·, r⁰)](σ)`.
    pub fn init<S: PeriodicSystem + ?Sized>(&self, sys: &S, u0: &[f64], t0: f64, sigma: f64) -> Result<MmState> {
        if u0.len() != sys.dim() {
            return Err(Error::Precondition(format!(
                "state has {} components, expected {}",
                u0.len(),
                sys.dim()
            )));
        }
        let sigma = reduce_phase(sigma);
        let af_u = self.grid.evaluate(&self.eps_af(sys, t0, u0)?, sigma);
        let r = sub(u0, &af_u);
        let af = self.eps_af(sys, t0, &r)?;
        let af_r = self.grid.evaluate(&af, sigma);
        let w = sub(&af_u, &af_r);
        Ok(MmState {
            r,
            w,
            n: 0,
            sigma,
            t0,
            r_prev: None,
            h_prev: None,
            af,
            restarted: false,
        })
    }

    /// Phase `σ + nΔt/ε` reduced to `[0, 2π)`.
    pub fn phase(&self, state: &MmState, n: usize) -> f64 {
        reduce_phase(state.sigma + reduce_phase(n as f64 * self.dt / self.eps))
    }

    pub fn time(&self, state: &MmState) -> f64 {
        state.t0 + state.n as f64 * self.dt
    }

    /// `u^n = Θ(φ_n, r^n) + w^n`.
    pub fn reconstruct(&self, state: &MmState) -> Vec<f64> {
        let th = self.grid.evaluate(&state.af, self.phase(state, state.n));
        let mut u = add(&state.r, &th);
        for (a, b) in u.iter_mut().zip(&state.w) {
            *a += b;
        }
        u
    }

    pub fn snapshot(&self, state: &MmState) -> MmSnapshot {
        MmSnapshot {
            t: self.time(state),
            r: state.r.clone(),
            w: state.w.clone(),
            sigma: state.sigma,
            t0: state.t0,
        }
    }

    /// One step: leapfrog and the two-point quadrature, or the configured
    /// start rule on the first step of a window.
    pub fn step<S: PeriodicSystem + ?Sized>(&self, sys: &S, state: &mut MmState) -> Result<()> {
        let d = sys.dim();
        let t = self.time(state);
        let (pif, h) = self.sample_h(sys, t, &state.r, &state.w, &state.af)?;
        let phi_n = self.phase(state, state.n);
        let phi_next = self.phase(state, state.n + 1);
        let th_now = self.grid.evaluate(&state.af, phi_n);

        let heun = self.start.heun(state.restarted);
        let (r_next, af_next, h_slope) = match (&state.r_prev, &state.h_prev, heun) {
            (Some(rp), Some(hp), _) => {
                let r_next: Vec<f64> = (0..d).map(|c| rp[c] + 2.0 * self.dt * pif[c]).collect();
                let af_next = self.eps_af(sys, t + self.dt, &r_next)?;
                (r_next, af_next, Some(spectrum_diff(&h, hp)))
            }
            (_, _, false) => {
                let r_next: Vec<f64> = (0..d).map(|c| state.r[c] + self.dt * pif[c]).collect();
                let af_next = self.eps_af(sys, t + self.dt, &r_next)?;
                (r_next, af_next, None)
            }
            (_, _, true) => {
                // Euler predictor, then trapezoidal macro and linear micro quadrature
                let r_pred: Vec<f64> = (0..d).map(|c| state.r[c] + self.dt * pif[c]).collect();
                let af_pred = self.eps_af(sys, t + self.dt, &r_pred)?;
                let w_pred = self.micro_update(state, &h, None, phi_n, phi_next, &r_pred, &af_pred, &th_now);
                let (pif_pred, h_pred) = self.sample_h(sys, t + self.dt, &r_pred, &w_pred, &af_pred)?;
                let r_next: Vec<f64> =
                    (0..d).map(|c| state.r[c] + 0.5 * self.dt * (pif[c] + pif_pred[c])).collect();
                let af_next = self.eps_af(sys, t + self.dt, &r_next)?;
                (r_next, af_next, Some(spectrum_diff(&h_pred, &h)))
            }
        };
        let w_next = self.micro_update(state, &h, h_slope.as_ref(), phi_n, phi_next, &r_next, &af_next, &th_now);

        state.r_prev = Some(std::mem::replace(&mut state.r, r_next));
        state.w = w_next;
        state.h_prev = Some(h);
        state.af = af_next;
        state.n += 1;
        Ok(())
    }

    /// `ΠF(·, Θ(·, r))` and the spectrum of `H(τ) = F(τ, Θ(τ, r) + w)`.
    fn sample_h<S: PeriodicSystem + ?Sized>(
        &self,
        sys: &S,
        t: f64,
        r: &[f64],
        w: &[f64],
        af: &Spectrum,
    ) -> Result<(Vec<f64>, Spectrum)> {
        let d = sys.dim();
        let th_grid = self.grid.synthesize(af)?;
        let mut theta_j = vec![0.0; d];
        let mut fill = |j: usize, out: &mut [f64], with_w: bool| {
            th_grid.node_into(j, &mut theta_j);
            for c in 0..d {
                out[c] = r[c] + theta_j[c] + if with_w { w[c] } else { 0.0 };
            }
        };
        let f_theta = sample_rhs(sys, &self.grid, t, |j, out| fill(j, out, false));
        let pif = self.grid.pi_average(&f_theta)?;
        let h_grid = sample_rhs(sys, &self.grid, t, |j, out| fill(j, out, true));
        Ok((pif, self.grid.transform(&h_grid)?))
    }

    /// `w + Σ_l e^{ilφ_n}[α_l Ĥ_l + β_l/Δt · ΔĤ_l] - Θ(φ_{n+1}, r_next) + Θ(φ_n, r)`,
    /// the Nyquist mode excluded.
    #[allow(clippy::too_many_arguments)]
    fn micro_update(
        &self,
        state: &MmState,
        h: &Spectrum,
        slope: Option<&Spectrum>,
        phi_n: f64,
        phi_next: f64,
        r_next: &[f64],
        af_next: &Spectrum,
        th_now: &[f64],
    ) -> Vec<f64> {
        let n = self.grid.len();
        let inv_dt = 1.0 / self.dt;
        let rot: Vec<Complex64> = (0..n)
            .map(|j| Complex64::from_polar(1.0, self.grid.mode(j) as f64 * phi_n))
            .collect();
        let th_next = self.grid.evaluate(af_next, phi_next);
        let mut w = state.w.clone();
        for (c, wc) in w.iter_mut().enumerate() {
            let hc = h.component(c);
            let mut acc = 0.0;
            for j in 0..n {
                if self.grid.is_nyquist(j) {
                    continue;
                }
                let mut term = self.coeffs.alpha[j] * hc[j];
                if let Some(sl) = slope {
                    term += self.coeffs.beta[j] * inv_dt * sl.coeff(c, j);
                }
                acc += (rot[j] * term).re;
            }
            *wc += acc - (r_next[c] + th_next[c]) + (state.r[c] + th_now[c]);
        }
        w
    }

    /// Re-decomposes the current state, starting a new window at the current
    /// time and phase.
    pub fn restart<S: PeriodicSystem + ?Sized>(&self, sys: &S, state: &mut MmState) -> Result<()> {
        let u = self.reconstruct(state);
        let sigma = self.phase(state, state.n);
        let t = self.time(state);
        *state = self.init(sys, &u, t, sigma)?;
        state.restarted = true;
        Ok(())
    }

    /// Dense output `Θ(t/ε + σ, r_I(t)) + w_I(t)` from linear interpolation
    /// of `r` and `w` between two snapshots of the same window.
    pub fn interpolate<S: PeriodicSystem + ?Sized>(
        &self,
        sys: &S,
        a: &MmSnapshot,
        b: &MmSnapshot,
        t: f64,
    ) -> Result<Vec<f64>> {
        if !(t >= a.t && t <= b.t) {
            return Err(Error::Range { t, lo: a.t, hi: b.t });
        }
        if a.sigma != b.sigma || a.t0 != b.t0 {
            return Err(Error::Precondition("snapshots belong to different restart windows".into()));
        }
        let span = b.t - a.t;
        let lam = if span > 0.0 { (t - a.t) / span } else { 0.0 };
        let mix = |p: &[f64], q: &[f64]| -> Vec<f64> {
            p.iter().zip(q).map(|(x, y)| (1.0 - lam) * x + lam * y).collect()
        };
        let r = mix(&a.r, &b.r);
        let w = mix(&a.w, &b.w);
        let tau = reduce_phase(a.sigma + reduce_phase((t - a.t0) / self.eps));
        let mut u = self.theta(sys, t, tau, &r)?;
        for (x, y) in u.iter_mut().zip(&w) {
            *x += y;
        }
        Ok(u)
    }
}

fn spectrum_diff(a: &Spectrum, b: &Spectrum) -> Spectrum {
    let mut out = a.clone();
    for (o, x) in out.coeffs_mut().iter_mut().zip(b.coeffs()) {
        *o -= x;
    }
    out
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Restart schedule, in steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Restart {
    Never,
    Every(usize),
}

impl Restart {
    /// Period `T₀` rounded to a whole number of steps of size `dt`.
    pub fn from_period(t0: Option<f64>, dt: f64) -> Self {
        match t0 {
            Some(p) if p > 0.0 => Restart::Every(((p / dt).round() as usize).max(1)),
            _ => Restart::Never,
        }
    }

    fn due(&self, steps_done: usize) -> bool {
        matches!(self, Restart::Every(k) if steps_done > 0 && steps_done.is_multiple_of(*k))
    }
}

/// Unfiltered particle state from a filtered `u = (x, y)` at phase `tau`.
pub fn particle_from_filtered(u: &[f64], tau: f64, fs: &FieldSet) -> Result<ParticleState> {
    let x = Vec3::new(u[0], u[1], u[2]);
    let y = Vec3::new(u[3], u[4], u[5]);
    Ok(ParticleState::new(x, unfilter(tau, &x, &y, fs)?))
}

/// Grid size, restart schedule and start rule of a single-particle run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MmOptions {
    pub n_tau: usize,
    pub restart: Restart,
    pub start: StartRule,
}

impl MmOptions {
    pub fn new(n_tau: usize) -> Self {
        Self { n_tau, restart: Restart::Never, start: StartRule::default() }
    }

    pub fn restart(mut self, restart: Restart) -> Self {
        self.restart = restart;
        self
    }

    pub fn start(mut self, start: StartRule) -> Self {
        self.start = start;
        self
    }
}

/// Integrates one particle with MM to `t_final` in `steps` uniform steps.
/// `observer` receives `(n, t_n, state)` after every step.
#[allow(clippy::too_many_arguments)]
pub fn mm_run_observed(
    p0: &ParticleState,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    eps: f64,
    t_final: f64,
    steps: usize,
    opts: MmOptions,
    observer: &mut dyn FnMut(usize, f64, &ParticleState) -> Result<()>,
) -> Result<ParticleState> {
    if steps == 0 {
        return Err(Error::Config("MM needs at least one step".into()));
    }
    let sys = FilteredCharacteristics::new(fs, efield)?;
    let mm = MicroMacro::new(TauGrid::new(opts.n_tau)?, eps, t_final / steps as f64)?.with_start(opts.start);
    let mut st = mm.init(&sys, &p0.to_array(), 0.0, 0.0)?;
    let mut out = *p0;
    for n in 1..=steps {
        if opts.restart.due(n - 1) {
            mm.restart(&sys, &mut st)?;
        }
        mm.step(&sys, &mut st)?;
        out = particle_from_filtered(&mm.reconstruct(&st), mm.phase(&st, st.n), fs)?;
        observer(n, n as f64 * mm.dt, &out)?;
    }
    Ok(out)
}

pub fn mm_run(
    p0: &ParticleState,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    eps: f64,
    t_final: f64,
    steps: usize,
    opts: MmOptions,
) -> Result<ParticleState> {
    mm_run_observed(p0, fs, efield, eps, t_final, steps, opts, &mut |_, _, _| Ok(()))
}

/// Dense trajectory on `[0, t_final]`: `samples_per_step` interpolated
/// points per step (plus the end point), as `(t, state)`.
#[allow(clippy::too_many_arguments)]
pub fn mm_dense_output(
    p0: &ParticleState,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    eps: f64,
    t_final: f64,
    steps: usize,
    n_tau: usize,
    samples_per_step: usize,
) -> Result<Vec<(f64, ParticleState)>> {
    let sys = FilteredCharacteristics::new(fs, efield)?;
    let mm = MicroMacro::new(TauGrid::new(n_tau)?, eps, t_final / steps as f64)?;
    let mut st = mm.init(&sys, &p0.to_array(), 0.0, 0.0)?;
    let k = samples_per_step.max(1);
    let mut out = Vec::with_capacity(steps * k + 1);
    for _ in 0..steps {
        let a = mm.snapshot(&st);
        mm.step(&sys, &mut st)?;
        let b = mm.snapshot(&st);
        for i in 0..k {
            let t = a.t + (b.t - a.t) * i as f64 / k as f64;
            let u = mm.interpolate(&sys, &a, &b, t)?;
            out.push((t, particle_from_filtered(&u, reduce_phase(t / eps), fs)?));
        }
    }
    let u = mm.reconstruct(&st);
    out.push((mm.time(&st), particle_from_filtered(&u, mm.phase(&st, st.n), fs)?));
    Ok(out)
}
