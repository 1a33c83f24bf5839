//! Two-scale formulation (TSF).
//!
//! The filtered system `u̇ = F(t/ε, u)` is embedded into
//! `∂_t U + ε⁻¹ ∂_τ U = F(τ, U)` with `τ` periodic, started from first-order
//! Chapman–Enskog data, and integrated in Fourier space by a two-step
//! exponential integrator. The solution is read off at `τ = t/ε`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{ElectricField, FieldSet};
use crate::rotation::{
    fast_phase, phi1, phi2, sample_rhs, unfilter, FilteredCharacteristics, GridFunction,
    PeriodicSystem, Spectrum, TauGrid,
};
use crate::{ParticleState, Vec3};

/// Fourier coefficients of `U(t_n, ·)` plus the previous `F̂` needed by the
/// two-step update.
#[derive(Clone, Debug)]
pub struct TwoScaleState {
    pub coeffs: Spectrum,
    pub n: usize,
    prev_f: Option<Spectrum>,
}

impl TwoScaleState {
    pub fn dim(&self) -> usize {
        self.coeffs.dim()
    }
}

/// Per-mode factors of the exponential integrator: the free transport
/// `e^{-ilΔt/ε}` and the quadrature weights `p_l`, `q_l`.
#[derive(Clone, Debug)]
pub struct EiCoefficients {
    pub transport: Vec<Complex64>,
    pub p: Vec<Complex64>,
    pub q: Vec<Complex64>,
}

/// `p_l = ∫_0^Δt e^{-il(Δt-s)/ε} ds`, `q_l = ∫_0^Δt e^{-il(Δt-s)/ε} s ds`,
/// evaluated through `φ1`, `φ2` so small `lΔt/ε` does not cancel.
pub fn ei_coefficients(dt: f64, eps: f64, grid: &TauGrid) -> Result<EiCoefficients> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let n = grid.len();
    let mut c = EiCoefficients {
        transport: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
    };
    let ratio = dt / eps;
    for j in 0..n {
        let z = Complex64::new(0.0, -(grid.mode(j) as f64) * ratio);
        c.transport.push(z.exp());
        c.p.push(phi1(z) * dt);
        c.q.push(phi2(z) * (dt * dt));
    }
    Ok(c)
}

/// First-order prepared data `U⁰(τ) = u0 + εAF(τ, u0) - εAF(0, u0)`.
pub fn prepare_initial<S: PeriodicSystem + ?Sized>(
    u0: &[f64],
    sys: &S,
    grid: &TauGrid,
    eps: f64,
) -> Result<TwoScaleState> {
    let d = sys.dim();
    if u0.len() != d {
        return Err(Error::Precondition(format!("state has {} components, expected {d}", u0.len())));
    }
    let f = sample_rhs(sys, grid, 0.0, |_, u| u.copy_from_slice(u0));
    let mut h = grid.transform(&f)?;
    grid.antiderivative_in_place(&mut h);
    let h0 = grid.evaluate(&h, 0.0);
    for c in 0..d {
        let comp = h.component_mut(c);
        for v in comp.iter_mut() {
            *v *= eps;
        }
        comp[0] += u0[c] - eps * h0[c];
    }
    Ok(TwoScaleState {
        coeffs: h,
        n: 0,
        prev_f: None,
    })
}

/// Fixed-step TSF driver for one `(Δt, ε, N_τ)` choice.
pub struct TsfIntegrator {
    pub grid: TauGrid,
    pub eps: f64,
    pub dt: f64,
    pub coeffs: EiCoefficients,
}

impl TsfIntegrator {
    pub fn new(grid: TauGrid, eps: f64, dt: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
        let coeffs = ei_coefficients(dt, eps, &grid)?;
        Ok(Self { grid, eps, dt, coeffs })
    }

    fn rhs_spectrum<S: PeriodicSystem + ?Sized>(&self, sys: &S, t: f64, u: &Spectrum) -> Result<Spectrum> {
        let ug: GridFunction = self.grid.synthesize(u)?;
        let f = sample_rhs(sys, &self.grid, t, |j, out| ug.node_into(j, out));
        self.grid.transform(&f)
    }

    /// `e Û + p F̂ + (q/Δt) D`, with the Nyquist mode dropped.
    fn combine(&self, u: &Spectrum, f: &Spectrum, diff: Option<(&Spectrum, &Spectrum)>) -> Spectrum {
        let n = self.grid.len();
        let mut out = Spectrum::zeros(u.dim(), n);
        let inv_dt = 1.0 / self.dt;
        for c in 0..u.dim() {
            let (uc, fc) = (u.component(c), f.component(c));
            let dst = out.component_mut(c);
            for j in 0..n {
                if self.grid.is_nyquist(j) {
                    continue;
                }
                let mut v = self.coeffs.transport[j] * uc[j] + self.coeffs.p[j] * fc[j];
                if let Some((a, b)) = diff {
                    v += self.coeffs.q[j] * inv_dt * (a.coeff(c, j) - b.coeff(c, j));
                }
                dst[j] = v;
            }
        }
        out
    }

    /// Advances from `t_n` to `t_{n+1}`: predictor-corrector on the first
    /// step, two-step form afterwards.
    pub fn step<S: PeriodicSystem + ?Sized>(&self, sys: &S, state: &mut TwoScaleState) -> Result<()> {
        let t = state.n as f64 * self.dt;
        let f = self.rhs_spectrum(sys, t, &state.coeffs)?;
        let next = match &state.prev_f {
            None => {
                let star = self.combine(&state.coeffs, &f, None);
                let f_star = self.rhs_spectrum(sys, t + self.dt, &star)?;
                self.combine(&state.coeffs, &f, Some((&f_star, &f)))
            }
            Some(prev) => self.combine(&state.coeffs, &f, Some((&f, prev))),
        };
        state.coeffs = next;
        state.prev_f = Some(f);
        state.n += 1;
        Ok(())
    }

    /// Phase `t_n/ε` reduced modulo 2π.
    pub fn phase(&self, n: usize) -> f64 {
        fast_phase(n as f64 * self.dt, self.eps)
    }

    /// `U^n(t_n/ε)`.
    pub fn extract_u(&self, state: &TwoScaleState) -> Vec<f64> {
        self.grid.evaluate(&state.coeffs, self.phase(state.n))
    }
}

/// Position and unfiltered velocity at `t_n`.
pub fn tsf_extract(integrator: &TsfIntegrator, state: &TwoScaleState, fs: &FieldSet) -> Result<ParticleState> {
    let u = integrator.extract_u(state);
    let x = Vec3::new(u[0], u[1], u[2]);
    let y = Vec3::new(u[3], u[4], u[5]);
    Ok(ParticleState::new(x, unfilter(integrator.phase(state.n), &x, &y, fs)?))
}

/// Integrates one particle to `t_final` with `steps` uniform steps.
pub fn tsf_run(
    p0: &ParticleState,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    eps: f64,
    t_final: f64,
    steps: usize,
    n_tau: usize,
) -> Result<ParticleState> {
    tsf_run_observed(p0, fs, efield, eps, t_final, steps, n_tau, &mut |_, _, _| Ok(()))
}

/// [`tsf_run`] with a callback after every step `(n, t_n, state)`.
#[allow(clippy::too_many_arguments)]
pub fn tsf_run_observed(
    p0: &ParticleState,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    eps: f64,
    t_final: f64,
    steps: usize,
    n_tau: usize,
    observer: &mut dyn FnMut(usize, f64, &ParticleState) -> Result<()>,
) -> Result<ParticleState> {
    if steps == 0 {
        return Err(Error::Config("TSF needs at least one step".into()));
    }
    let sys = FilteredCharacteristics::new(fs, efield)?;
    let integ = TsfIntegrator::new(TauGrid::new(n_tau)?, eps, t_final / steps as f64)?;
    // y(0) = v(0) since the filter is the identity at τ = 0
    let mut st = prepare_initial(&p0.to_array(), &sys, &integ.grid, eps)?;
    let mut out = *p0;
    for n in 1..=steps {
        integ.step(&sys, &mut st)?;
        out = tsf_extract(&integ, &st, fs)?;
        observer(n, n as f64 * integ.dt, &out)?;
    }
    Ok(out)
}
