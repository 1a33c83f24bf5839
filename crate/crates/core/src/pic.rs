//! Particle-in-cell layer for the self-consistent Vlasov–Poisson system on
//! a periodic box: ring-shaped initial sampling, cubic B-spline deposition
//! and interpolation, a spectral Poisson solve and kinetic diagnostics.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::limitmodel::eval_averaged;
use crate::mrc::{mrc_integrate_observed, ElectricSource, MrcPlan};
use crate::{ParticleState, Vec3};

/// Particles per deposition chunk. Fixed so that the merge order, and hence
/// the rounding, does not depend on the worker count.
const DEPOSIT_CHUNK: usize = 4096;

/// Periodic box with `n[d]` nodes per direction at `lo[d] + j·h[d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub n: [usize; 3],
}

impl Mesh {
    pub fn new(lo: [f64; 3], hi: [f64; 3], n: [usize; 3]) -> Result<Self> {
        for d in 0..3 {
            if n[d] < 4 {
                return Err(Error::Config(format!("mesh needs at least 4 nodes per direction, got {}", n[d])));
            }
            if !(hi[d] > lo[d]) {
                return Err(Error::Config(format!("empty mesh extent in direction {d}")));
            }
        }
        Ok(Self { lo, hi, n })
    }

    /// `[-8, 8]² × [0, 1]`.
    pub fn ring_box(n: [usize; 3]) -> Result<Self> {
        Self::new([-8.0, -8.0, 0.0], [8.0, 8.0, 1.0], n)
    }

    pub fn length(&self, d: usize) -> f64 {
        self.hi[d] - self.lo[d]
    }

    pub fn spacing(&self, d: usize) -> f64 {
        self.length(d) / self.n[d] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..3).map(|d| self.spacing(d)).product()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.lo[0] + i as f64 * self.spacing(0),
            self.lo[1] + j as f64 * self.spacing(1),
            self.lo[2] + k as f64 * self.spacing(2),
        )
    }

    /// Signed mode number of FFT index `j` along `d`; `None` for Nyquist.
    fn mode(&self, d: usize, j: usize) -> Option<f64> {
        let n = self.n[d];
        if n.is_multiple_of(2) && j == n / 2 {
            None
        } else if j < n.div_ceil(2) {
            Some(j as f64)
        } else {
            Some(j as f64 - n as f64)
        }
    }

    fn wavenumber(&self, d: usize, j: usize) -> Option<f64> {
        self.mode(d, j).map(|m| 2.0 * PI * m / self.length(d))
    }

    /// Node indices and weights of the 4-point cubic stencil along `d`.
    fn stencil(&self, d: usize, x: f64) -> ([usize; 4], [f64; 4]) {
        let n = self.n[d];
        let s = (x - self.lo[d]).rem_euclid(self.length(d)) / self.spacing(d);
        let i0 = s.floor();
        let w = spline_weights(s - i0);
        let base = i0 as isize - 1;
        let idx = std::array::from_fn(|m| (base + m as isize).rem_euclid(n as isize) as usize);
        (idx, w)
    }
}

/// Cubic B-spline weights of the nodes `i-1, i, i+1, i+2` for a point at
/// fractional offset `f ∈ [0, 1)` past node `i`.
pub fn spline_weights(f: f64) -> [f64; 4] {
    let g = 1.0 - f;
    let f2 = f * f;
    let f3 = f2 * f;
    [
        g * g * g / 6.0,
        (4.0 - 6.0 * f2 + 3.0 * f3) / 6.0,
        (1.0 + 3.0 * f + 3.0 * f2 - 3.0 * f3) / 6.0,
        f3 / 6.0,
    ]
}

/// Weighted particles.
#[derive(Clone, Debug, Default)]
pub struct ParticleEnsemble {
    pub states: Vec<ParticleState>,
    pub weights: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Parameters of `f₀ = (n₀/2π)(1 + η cos kθ) e^{-5(r-5)²} e^{-|v|²/2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingParams {
    pub n0: f64,
    pub eta: f64,
    pub k: u32,
    pub seed: u64,
}

impl Default for RingParams {
    fn default() -> Self {
        Self { n0: 100.0, eta: 0.05, k: 4, seed: 0 }
    }
}

const RADIAL_TABLE: usize = 10_000;

/// Tabulated radial CDF of `r e^{-5(r-5)²}` on `[0, r_max]`, unnormalized.
struct RadialTable {
    r: Vec<f64>,
    cdf: Vec<f64>,
}

impl RadialTable {
    fn new(r_max: f64) -> Self {
        let dr = r_max / (RADIAL_TABLE - 1) as f64;
        let r: Vec<f64> = (0..RADIAL_TABLE).map(|i| i as f64 * dr).collect();
        let dens = |r: f64| r * (-5.0 * (r - 5.0).powi(2)).exp();
        let mut cdf = vec![0.0; RADIAL_TABLE];
        for i in 1..RADIAL_TABLE {
            cdf[i] = cdf[i - 1] + 0.5 * dr * (dens(r[i - 1]) + dens(r[i]));
        }
        Self { r, cdf }
    }

    fn total(&self) -> f64 {
        *self.cdf.last().unwrap()
    }

    fn invert(&self, u: f64) -> f64 {
        let target = u * self.total();
        let i = self.cdf.partition_point(|&c| c < target).clamp(1, RADIAL_TABLE - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let lam = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        self.r[i - 1] + lam * (self.r[i] - self.r[i - 1])
    }
}

/// Largest cylindrical radius fully inside the box cross-section, centred
/// at the origin.
fn inscribed_radius(mesh: &Mesh) -> f64 {
    [-mesh.lo[0], mesh.hi[0], -mesh.lo[1], mesh.hi[1]].into_iter().fold(f64::INFINITY, f64::min)
}

/// `∫ f₀ dx dv` over the box, with the radial integral from the same table
/// used for sampling. The angular perturbation integrates to zero.
pub fn ring_mass(params: &RingParams, mesh: &Mesh) -> f64 {
    let table = RadialTable::new(inscribed_radius(mesh));
    params.n0 / (2.0 * PI) * (2.0 * PI).powf(1.5) * 2.0 * PI * table.total() * mesh.length(2)
}

/// Draws `n_p` equal-weight particles from the ring distribution. Particle
/// `i` uses its own ChaCha stream, so the ensemble does not depend on the
/// worker count.
pub fn sample_initial(params: &RingParams, mesh: &Mesh, n_p: usize) -> Result<ParticleEnsemble> {
    if n_p == 0 {
        return Err(Error::Config("at least one particle is required".into()));
    }
    if !(0.0..1.0).contains(&params.eta) {
        return Err(Error::Config(format!("perturbation amplitude must lie in [0, 1), got {}", params.eta)));
    }
    let r_max = inscribed_radius(mesh);
    if !(r_max > 0.0) {
        return Err(Error::Config("the box cross-section must contain the origin".into()));
    }
    let table = RadialTable::new(r_max);
    let k = params.k as f64;
    let states: Vec<ParticleState> = (0..n_p)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(i as u64);
            let r = table.invert(rng.random::<f64>());
            let theta = loop {
                let th = 2.0 * PI * rng.random::<f64>();
                if rng.random::<f64>() * (1.0 + params.eta) < 1.0 + params.eta * (k * th).cos() {
                    break th;
                }
            };
            let x3 = mesh.lo[2] + mesh.length(2) * rng.random::<f64>();
            let v = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            ParticleState::new(Vec3::new(r * theta.cos(), r * theta.sin(), x3), v)
        })
        .collect();
    let w = ring_mass(params, mesh) / n_p as f64;
    Ok(ParticleEnsemble { states, weights: vec![w; n_p] })
}

/// Charge density `Σ ω_k S(x - x_k) / ΔV` on the nodes, without the
/// neutralizing background.
pub fn deposit_raw(states: &[ParticleState], weights: &[f64], mesh: &Mesh) -> Result<Vec<f64>> {
    if states.len() != weights.len() {
        return Err(Error::Precondition(format!(
            "{} particles but {} weights",
            states.len(),
            weights.len()
        )));
    }
    let inv_vol = 1.0 / mesh.cell_volume();
    let partials: Vec<Vec<f64>> = states
        .par_chunks(DEPOSIT_CHUNK)
        .zip(weights.par_chunks(DEPOSIT_CHUNK))
        .map(|(ps, ws)| {
            let mut grid = vec![0.0; mesh.len()];
            for (p, &w) in ps.iter().zip(ws) {
                let (ix, wx) = mesh.stencil(0, p.x[0]);
                let (iy, wy) = mesh.stencil(1, p.x[1]);
                let (iz, wz) = mesh.stencil(2, p.x[2]);
                for a in 0..4 {
                    for b in 0..4 {
                        let wab = w * wx[a] * wy[b];
                        let row = (ix[a] * mesh.n[1] + iy[b]) * mesh.n[2];
                        for c in 0..4 {
                            grid[row + iz[c]] += wab * wz[c];
                        }
                    }
                }
            }
            grid
        })
        .collect();
    let mut rho = vec![0.0; mesh.len()];
    for part in &partials {
        for (r, p) in rho.iter_mut().zip(part) {
            *r += p;
        }
    }
    for r in &mut rho {
        *r *= inv_vol;
    }
    Ok(rho)
}

/// Subtracts the mesh mean, which realizes a uniform ion background.
pub fn neutralize(rho: &mut [f64]) {
    let mean = rho.iter().sum::<f64>() / rho.len() as f64;
    for r in rho {
        *r -= mean;
    }
}

/// Neutralized charge density.
pub fn deposit(ensemble: &ParticleEnsemble, mesh: &Mesh) -> Result<Vec<f64>> {
    let mut rho = deposit_raw(&ensemble.states, &ensemble.weights, mesh)?;
    neutralize(&mut rho);
    Ok(rho)
}

/// Node-valued vector field.
#[derive(Clone, Debug, PartialEq)]
pub struct EField {
    pub comps: [Vec<f64>; 3],
}

impl EField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self { comps: std::array::from_fn(|_| vec![0.0; mesh.len()]) }
    }

    pub fn at(&self, i: usize) -> Vec3 {
        Vec3::new(self.comps[0][i], self.comps[1][i], self.comps[2][i])
    }
}

/// In-place 3D FFT of a mesh-shaped complex array.
struct Fft3 {
    plans: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
    n: [usize; 3],
}

impl Fft3 {
    fn new(mesh: &Mesh) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            plans: std::array::from_fn(|d| planner.plan_fft_forward(mesh.n[d])),
            inverse: std::array::from_fn(|d| planner.plan_fft_inverse(mesh.n[d])),
            n: mesh.n,
        }
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        let [n0, n1, n2] = self.n;
        let plans = if inverse { &self.inverse } else { &self.plans };
        // contiguous last axis
        for line in data.chunks_mut(n2) {
            plans[2].process(line);
        }
        let mut buf = vec![Complex64::default(); n0.max(n1)];
        for i in 0..n0 {
            for k in 0..n2 {
                for j in 0..n1 {
                    buf[j] = data[(i * n1 + j) * n2 + k];
                }
                plans[1].process(&mut buf[..n1]);
                for j in 0..n1 {
                    data[(i * n1 + j) * n2 + k] = buf[j];
                }
            }
        }
        for j in 0..n1 {
            for k in 0..n2 {
                for i in 0..n0 {
                    buf[i] = data[(i * n1 + j) * n2 + k];
                }
                plans[0].process(&mut buf[..n0]);
                for i in 0..n0 {
                    data[(i * n1 + j) * n2 + k] = buf[i];
                }
            }
        }
        if inverse {
            let s = 1.0 / (n0 * n1 * n2) as f64;
            for z in data.iter_mut() {
                *z *= s;
            }
        }
    }
}

/// Wave vector of spectral index `idx`, `None` when any component is a
/// Nyquist mode.
fn wave_vector(mesh: &Mesh, idx: usize) -> Option<[f64; 3]> {
    let k = idx % mesh.n[2];
    let j = (idx / mesh.n[2]) % mesh.n[1];
    let i = idx / (mesh.n[1] * mesh.n[2]);
    Some([mesh.wavenumber(0, i)?, mesh.wavenumber(1, j)?, mesh.wavenumber(2, k)?])
}

/// Solves `-Δφ = ρ`, `E = -∇φ` spectrally. `ρ` must have zero mean; its
/// Nyquist modes are discarded since a real spectral derivative cannot
/// represent them. Returns `(E, φ)`.
pub fn solve_poisson(rho: &[f64], mesh: &Mesh) -> Result<(EField, Vec<f64>)> {
    if rho.len() != mesh.len() {
        return Err(Error::Precondition(format!("density has {} nodes, mesh has {}", rho.len(), mesh.len())));
    }
    let sum: f64 = rho.iter().sum();
    let scale: f64 = rho.iter().map(|r| r.abs()).sum();
    if sum.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition(format!("density is not neutral: mesh sum {sum:e}")));
    }
    let fft = Fft3::new(mesh);
    let mut rho_hat: Vec<Complex64> = rho.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    fft.run(&mut rho_hat, false);
    let mut phi_hat = vec![Complex64::default(); mesh.len()];
    let mut e_hat: [Vec<Complex64>; 3] = std::array::from_fn(|_| vec![Complex64::default(); mesh.len()]);
    for idx in 0..mesh.len() {
        let Some(kv) = wave_vector(mesh, idx) else { continue };
        let k2 = kv.iter().map(|k| k * k).sum::<f64>();
        if k2 == 0.0 {
            continue;
        }
        let p = rho_hat[idx] / k2;
        phi_hat[idx] = p;
        for d in 0..3 {
            e_hat[d][idx] = Complex64::new(0.0, -kv[d]) * p;
        }
    }
    fft.run(&mut phi_hat, true);
    let mut field = EField::zeros(mesh);
    for d in 0..3 {
        fft.run(&mut e_hat[d], true);
        for (o, z) in field.comps[d].iter_mut().zip(&e_hat[d]) {
            *o = z.re;
        }
    }
    Ok((field, phi_hat.iter().map(|z| z.re).collect()))
}

/// Spectral divergence `Σ_d ∂_d E_d`, Nyquist modes dropped.
pub fn spectral_divergence(field: &EField, mesh: &Mesh) -> Vec<f64> {
    let fft = Fft3::new(mesh);
    let mut acc = vec![Complex64::default(); mesh.len()];
    for d in 0..3 {
        let mut c: Vec<Complex64> = field.comps[d].iter().map(|&r| Complex64::new(r, 0.0)).collect();
        fft.run(&mut c, false);
        for (idx, a) in acc.iter_mut().enumerate() {
            if let Some(kv) = wave_vector(mesh, idx) {
                *a += Complex64::new(0.0, kv[d]) * c[idx];
            }
        }
    }
    fft.run(&mut acc, true);
    acc.iter().map(|z| z.re).collect()
}

/// `ρ` with every Nyquist mode removed.
pub fn drop_nyquist(rho: &[f64], mesh: &Mesh) -> Vec<f64> {
    let fft = Fft3::new(mesh);
    let mut c: Vec<Complex64> = rho.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    fft.run(&mut c, false);
    for (idx, z) in c.iter_mut().enumerate() {
        if wave_vector(mesh, idx).is_none() {
            *z = Complex64::default();
        }
    }
    fft.run(&mut c, true);
    c.iter().map(|z| z.re).collect()
}

/// Cubic B-spline interpolation of a nodal field, the adjoint of
/// [`deposit_raw`].
pub fn interp_e(field: &EField, mesh: &Mesh, x: &Vec3) -> Vec3 {
    let (ix, wx) = mesh.stencil(0, x[0]);
    let (iy, wy) = mesh.stencil(1, x[1]);
    let (iz, wz) = mesh.stencil(2, x[2]);
    let mut e = Vec3::zeros();
    for a in 0..4 {
        for b in 0..4 {
            let wab = wx[a] * wy[b];
            let row = (ix[a] * mesh.n[1] + iy[b]) * mesh.n[2];
            for c in 0..4 {
                let w = wab * wz[c];
                let i = row + iz[c];
                e += Vec3::new(field.comps[0][i], field.comps[1][i], field.comps[2][i]) * w;
            }
        }
    }
    e
}

/// Self-consistent field supplier for the MRC driver: every refresh
/// deposits, neutralizes and solves.
pub struct PicSource {
    pub mesh: Mesh,
    pub weights: Vec<f64>,
    pub field: EField,
    pub refreshes: usize,
}

impl PicSource {
    pub fn new(mesh: Mesh, weights: Vec<f64>) -> Self {
        let field = EField::zeros(&mesh);
        Self { mesh, weights, field, refreshes: 0 }
    }
}

impl ElectricSource for PicSource {
    fn refresh(&mut self, _t: f64, particles: &[ParticleState]) -> Result<()> {
        let mut rho = deposit_raw(particles, &self.weights, &self.mesh)?;
        neutralize(&mut rho);
        self.field = solve_poisson(&rho, &self.mesh)?.0;
        self.refreshes += 1;
        Ok(())
    }

    fn electric(&self, _t: f64, x: &Vec3) -> Vec3 {
        interp_e(&self.field, &self.mesh, x)
    }

    fn self_consistent(&self) -> bool {
        true
    }
}

/// Energies and moments of an ensemble at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    pub kinetic: f64,
    pub field: f64,
    pub total: f64,
    /// `Σ ω_k |v_⊥,k|² / b(x_k)`.
    pub mu: f64,
}

/// Diagnostics with the field recomputed from the current positions.
pub fn diagnostics(t: f64, ensemble: &ParticleEnsemble, mesh: &Mesh, fs: &FieldSet) -> Result<(Diagnostics, Vec<f64>)> {
    if ensemble.is_empty() {
        return Ok((Diagnostics { t, ..Default::default() }, vec![0.0; mesh.len()]));
    }
    let raw = deposit_raw(&ensemble.states, &ensemble.weights, mesh)?;
    let mut rho = raw.clone();
    neutralize(&mut rho);
    let (field, _) = solve_poisson(&rho, mesh)?;
    let field_energy = 0.5 * mesh.cell_volume() * (0..mesh.len()).map(|i| field.at(i).norm_squared()).sum::<f64>();
    let (kinetic, mu) = ensemble
        .states
        .par_iter()
        .zip(&ensemble.weights)
        .map(|(p, &w)| {
            let b = fs.magnetic(&p.x);
            let bn = b.norm();
            let vpar = b.dot(&p.v) / bn;
            let perp2 = (p.v.norm_squared() - vpar * vpar).max(0.0);
            (0.5 * w * p.v.norm_squared(), w * perp2 / bn)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok((
        Diagnostics { t, kinetic, field: field_energy, total: kinetic + field_energy, mu },
        raw,
    ))
}

/// Average over the third direction, as an `n₀ × n₁` row-major slice.
pub fn x3_average(rho: &[f64], mesh: &Mesh) -> Vec<f64> {
    let n2 = mesh.n[2];
    rho.chunks(n2).map(|c| c.iter().sum::<f64>() / n2 as f64).collect()
}

/// Relative size of the part of a square slice that is not invariant under
/// a quarter turn about the box centre: `‖s - R s‖ / ‖s - mean‖`. Zero for
/// a four-fold symmetric slice.
pub fn quarter_turn_defect(slice: &[f64], mesh: &Mesh) -> Result<f64> {
    let n = mesh.n[0];
    if mesh.n[1] != n || mesh.lo[0] != -mesh.hi[0] || mesh.lo[1] != -mesh.hi[1] || mesh.length(0) != mesh.length(1) {
        return Err(Error::Precondition("quarter turns need a square cross-section centred at the origin".into()));
    }
    let mean = slice.iter().sum::<f64>() / slice.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for j in 0..n {
            // node (x, y) = (-L/2 + ih, -L/2 + jh) maps to (-y, x)
            let ri = (n - j) % n;
            let rj = i;
            let s = slice[i * n + j];
            num += (s - slice[ri * n + rj]).powi(2);
            den += (s - mean).powi(2);
        }
    }
    Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
}

/// One emitted frame of a PIC run.
pub struct VpFrame<'a> {
    pub step: usize,
    pub diag: Diagnostics,
    /// Deposited density before neutralization.
    pub rho: &'a [f64],
    pub states: &'a [ParticleState],
}

/// Summary of a PIC run.
#[derive(Clone, Debug)]
pub struct VpReport {
    pub initial: Diagnostics,
    pub last: Diagnostics,
    pub max_rel_energy_error: f64,
    pub field_solves: usize,
}

/// Advances the ensemble self-consistently with MRC. `observer` sees the
/// initial state and every macro step.
pub fn vp_run(
    ensemble: &mut ParticleEnsemble,
    mesh: &Mesh,
    fs: &FieldSet,
    plan: &MrcPlan,
    observer: &mut dyn FnMut(&VpFrame) -> Result<()>,
) -> Result<VpReport> {
    fs.require_constant_intensity()?;
    let (d0, rho0) = diagnostics(0.0, ensemble, mesh, fs)?;
    observer(&VpFrame { step: 0, diag: d0, rho: &rho0, states: &ensemble.states })?;
    let mut source = PicSource::new(mesh.clone(), ensemble.weights.clone());
    let mut last = d0;
    let mut max_err: f64 = 0.0;
    let weights = ensemble.weights.clone();
    mrc_integrate_observed(&mut ensemble.states, plan, fs, &mut source, &mut |step, t, states| {
        let view = ParticleEnsemble { states: states.to_vec(), weights: weights.clone() };
        let (d, rho) = diagnostics(t, &view, mesh, fs)?;
        max_err = max_err.max((d.total - d0.total).abs() / d0.total.abs());
        last = d;
        observer(&VpFrame { step, diag: d, rho: &rho, states })
    })?;
    Ok(VpReport { initial: d0, last, max_rel_energy_error: max_err, field_solves: source.refreshes })
}

/// Pushes the ensemble with the averaged (limit) characteristics and a
/// self-consistent field, RK4 with the field refreshed at every stage.
pub fn limit_pic_run(ensemble: &mut ParticleEnsemble, mesh: &Mesh, fs: &FieldSet, t_final: f64, dt: f64) -> Result<()> {
    fs.require_constant_intensity()?;
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(Error::Config(format!("invalid window: T = {t_final}, dt = {dt}")));
    }
    let steps = (t_final / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if steps > 0 { t_final / steps as f64 } else { 0.0 };
    let weights = ensemble.weights.clone();
    let rhs = |states: &[ParticleState]| -> Result<Vec<(Vec3, Vec3)>> {
        let mut rho = deposit_raw(states, &weights, mesh)?;
        neutralize(&mut rho);
        let (field, _) = solve_poisson(&rho, mesh)?;
        states
            .par_iter()
            .map(|p| eval_averaged(&p.x, &p.v, &interp_e(&field, mesh, &p.x), fs))
            .collect()
    };
    let shift = |base: &[ParticleState], k: &[(Vec3, Vec3)], a: f64| -> Vec<ParticleState> {
        base.iter().zip(k).map(|(p, d)| ParticleState::new(p.x + d.0 * a, p.v + d.1 * a)).collect()
    };
    for _ in 0..steps {
        let s0 = &ensemble.states;
        let k1 = rhs(s0)?;
        let k2 = rhs(&shift(s0, &k1, h / 2.0))?;
        let k3 = rhs(&shift(s0, &k2, h / 2.0))?;
        let k4 = rhs(&shift(s0, &k3, h))?;
        ensemble.states.par_iter_mut().enumerate().for_each(|(i, p)| {
            p.x += (k1[i].0 + k2[i].0 * 2.0 + k3[i].0 * 2.0 + k4[i].0) * (h / 6.0);
            p.v += (k1[i].1 + k2[i].1 * 2.0 + k3[i].1 * 2.0 + k4[i].1) * (h / 6.0);
        });
    }
    Ok(())
}

/// `max |a - b| / |a|` over the nodes where `a ≥ floor · max a`.
pub fn relative_sup_discrepancy(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let amax = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    a.iter()
        .zip(b)
        .filter(|(x, _)| **x >= floor * amax)
        .map(|(x, y)| (x - y).abs() / x.abs())
        .fold(0.0, f64::max)
}

/// Writes an `n₀ × n₁` slice as CSV with a commented header.
pub fn write_slice_csv(path: &Path, slice: &[f64], mesh: &Mesh, t: f64, eps: f64) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# nx1={} nx2={} t={t:e} eps={eps:e}", mesh.n[0], mesh.n[1])?;
    writeln!(out, "x1,x2,rho")?;
    for i in 0..mesh.n[0] {
        for j in 0..mesh.n[1] {
            let x = mesh.node(i, j, 0);
            writeln!(out, "{:e},{:e},{:e}", x[0], x[1], slice[i * mesh.n[1] + j])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_field, FieldCatalogEntry};
    use crate::mrc::plan_mrc;

    fn unit_mesh(n: [usize; 3]) -> Mesh {
        Mesh::new([0.0; 3], [1.0, 2.0, 0.5], n).unwrap()
    }

    #[test]
    fn knot_weights() {
        let w = spline_weights(0.0);
        assert_eq!(w, [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0, 0.0]);
        for f in [0.1, 0.5, 0.93] {
            assert!((spline_weights(f).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mesh_rejects_coarse_grids() {
        assert!(Mesh::new([0.0; 3], [1.0; 3], [3, 4, 4]).is_err());
        assert!(Mesh::new([0.0; 3], [0.0, 1.0, 1.0], [4, 4, 4]).is_err());
    }

    #[test]
    fn one_particle_per_node_is_neutral() {
        let mesh = unit_mesh([6, 4, 4]);
        let mut ens = ParticleEnsemble::default();
        for i in 0..6 {
            for j in 0..4 {
                for k in 0..4 {
                    ens.states.push(ParticleState::new(mesh.node(i, j, k), Vec3::zeros()));
                    ens.weights.push(0.3);
                }
            }
        }
        let rho = deposit(&ens, &mesh).unwrap();
        assert!(rho.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn non_neutral_density_is_rejected() {
        let mesh = unit_mesh([4, 4, 4]);
        assert!(matches!(solve_poisson(&vec![1.0; 64], &mesh), Err(Error::Precondition(_))));
        let (e, phi) = solve_poisson(&vec![0.0; 64], &mesh).unwrap();
        assert!(e.comps.iter().all(|c| c.iter().all(|&x| x == 0.0)) && phi.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_mode_solution() {
        let mesh = Mesh::new([0.0; 3], [3.0, 1.0, 1.0], [16, 4, 4]).unwrap();
        let l = mesh.length(0);
        let q = 2.0 * PI / l;
        let mut rho = vec![0.0; mesh.len()];
        for i in 0..16 {
            for j in 0..4 {
                for k in 0..4 {
                    rho[mesh.index(i, j, k)] = (q * mesh.node(i, j, k)[0]).cos();
                }
            }
        }
        let (e, phi) = solve_poisson(&rho, &mesh).unwrap();
        for i in 0..16 {
            let x = mesh.node(i, 0, 0)[0];
            let idx = mesh.index(i, 1, 2);
            assert!((phi[idx] - (q * x).cos() / (q * q)).abs() < 1e-12);
            assert!((e.comps[0][idx] - (q * x).sin() / q).abs() < 1e-12);
            assert!(e.comps[1][idx].abs() < 1e-12 && e.comps[2][idx].abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_field_interpolates_exactly() {
        let mesh = unit_mesh([5, 6, 4]);
        let mut f = EField::zeros(&mesh);
        for d in 0..3 {
            f.comps[d].fill(d as f64 + 0.5);
        }
        let e = interp_e(&f, &mesh, &Vec3::new(0.377, -1.2, 7.9));
        assert!((e - Vec3::new(0.5, 1.5, 2.5)).amax() < 1e-14);
    }

    #[test]
    fn empty_and_single_particle_diagnostics() {
        let mesh = unit_mesh([4, 4, 4]);
        let fs = make_field(FieldCatalogEntry::UniformBz).unwrap();
        let (d, _) = diagnostics(0.0, &ParticleEnsemble::default(), &mesh, &fs).unwrap();
        assert_eq!(d, Diagnostics::default());
        let ens = ParticleEnsemble {
            states: vec![ParticleState::new(Vec3::new(0.2, 0.3, 0.1), Vec3::new(1.0, 2.0, 2.0))],
            weights: vec![0.5],
        };
        let (d, _) = diagnostics(0.0, &ens, &mesh, &fs).unwrap();
        assert!((d.kinetic - 2.25).abs() < 1e-14);
        assert!((d.mu - 2.5).abs() < 1e-14);
    }

    #[test]
    fn sampling_is_reproducible_and_ring_shaped() {
        let mesh = Mesh::ring_box([16, 16, 4]).unwrap();
        let p = RingParams { seed: 7, ..Default::default() };
        let a = sample_initial(&p, &mesh, 20_000).unwrap();
        let b = sample_initial(&p, &mesh, 20_000).unwrap();
        assert_eq!(a.states, b.states);
        let n = a.len() as f64;
        let mean_r = a.states.iter().map(|s| s.x.xy().norm()).sum::<f64>() / n;
        let v2 = a.states.iter().map(|s| s.v.norm_squared()).sum::<f64>() / n;
        // E r = 5 + 1/(10·5) to leading order for the r-weighted Gaussian
        assert!((mean_r - 5.02).abs() < 0.01, "{mean_r}");
        // |v|² has variance 6
        assert!((v2 - 3.0).abs() < 3.0 * (6.0 / n).sqrt(), "{v2}");
        assert!((a.total_weight() - ring_mass(&p, &mesh)).abs() < 1e-9 * a.total_weight());
    }

    #[test]
    fn free_rotation_keeps_speeds() {
        let mesh = Mesh::ring_box([8, 8, 4]).unwrap();
        let fs = make_field(FieldCatalogEntry::UniformBz).unwrap();
        let mut ens = sample_initial(&RingParams::default(), &mesh, 300).unwrap();
        let speeds: Vec<f64> = ens.states.iter().map(|s| s.v.norm()).collect();
        let plan = plan_mrc(2.0 * PI, 1.0 / 16.0, 4).unwrap();
        crate::mrc::mrc_integrate(&mut ens.states, &plan, &fs, &mut crate::mrc::ExternalSource(&fs)).unwrap();
        for (s, v0) in ens.states.iter().zip(speeds) {
            assert!((s.v.norm() - v0).abs() < 1e-10);
        }
    }

    #[test]
    fn quarter_turn_defect_detects_symmetry() {
        let mesh = Mesh::ring_box([8, 8, 4]).unwrap();
        let mut s = vec![0.0; 64];
        for i in 0..8 {
            for j in 0..8 {
                let x = mesh.node(i, j, 0);
                s[i * 8 + j] = (x[0] * x[0] + x[1] * x[1]).sqrt() + (4.0 * x[1].atan2(x[0])).cos();
            }
        }
        assert!(quarter_turn_defect(&s, &mesh).unwrap() < 1e-12);
        s[9] += 1.0;
        assert!(quarter_turn_defect(&s, &mesh).unwrap() > 1e-3);
    }
}
