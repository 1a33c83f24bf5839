//! Uniform grid over the fast phase `τ ∈ [0, 2π)` and the spectral
//! operators on it: the average `Π`, the zero-mean antiderivative
//! `A = ∂_τ^{-1}(I - Π)`, and series evaluation at arbitrary phases.
//!
//! Coefficients are stored in FFT order and normalized so that
//! `u(τ_j) = Σ_l û_l e^{ilτ_j}`. The Nyquist mode `l = -N/2` is not
//! resolved: `A` maps it to zero and [`TauGrid::evaluate`] ignores it.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Grid values of a `dim`-component function of `τ`, component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    dim: usize,
    n: usize,
    data: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(dim: usize, n: usize) -> Self {
        Self {
            dim,
            n,
            data: vec![0.0; dim * n],
        }
    }

    /// Builds from `samples[j]` = value at node `j`.
    pub fn from_nodes(samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        let dim = samples.first().map_or(0, Vec::len);
        let mut g = Self::zeros(dim, n);
        for (j, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::Precondition("ragged grid samples".into()));
            }
            g.set_node(j, s);
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    pub fn component(&self, c: usize) -> &[f64] {
        &self.data[c * self.n..(c + 1) * self.n]
    }
    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.n..(c + 1) * self.n]
    }
    pub fn get(&self, c: usize, j: usize) -> f64 {
        self.data[c * self.n + j]
    }
    pub fn node(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|c| self.get(c, j)).collect()
    }
    pub fn node_into(&self, j: usize, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.data[c * self.n + j];
        }
    }
    pub fn set_node(&mut self, j: usize, v: &[f64]) {
        for (c, &x) in v.iter().enumerate().take(self.dim) {
            self.data[c * self.n + j] = x;
        }
    }
}

/// Fourier coefficients of a `dim`-component function, FFT order.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    dim: usize,
    n: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(dim: usize, n: usize) -> Self {
        Self {
            dim,
            n,
            data: vec![Complex64::new(0.0, 0.0); dim * n],
        }
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    pub fn component(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.n..(c + 1) * self.n]
    }
    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.data[c * self.n..(c + 1) * self.n]
    }
    pub fn coeff(&self, c: usize, j: usize) -> Complex64 {
        self.data[c * self.n + j]
    }
    pub fn coeffs(&self) -> &[Complex64] {
        &self.data
    }
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Largest violation of `û_{-l} = conj(û_l)` over the resolved modes.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for c in 0..self.dim {
            let s = self.component(c);
            worst = worst.max(s[0].im.abs());
            for j in 1..n / 2 {
                worst = worst.max((s[j] - s[n - j].conj()).norm());
            }
        }
        worst
    }
}

/// Uniform grid `τ_j = 2πj/N` with cached transform plans. `N` must be an
/// even power of two.
#[derive(Clone)]
pub struct TauGrid {
    n: usize,
    nodes: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TauGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TauGrid").field("n", &self.n).finish()
    }
}

impl TauGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::Config(format!("N_tau must be a positive even integer, got {n}")));
        }
        if !n.is_power_of_two() {
            return Err(Error::Config(format!("N_tau must be a power of two, got {n}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            nodes: (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect(),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn node(&self, j: usize) -> f64 {
        self.nodes[j]
    }

    /// Wavenumber of FFT index `j`; the Nyquist index maps to `-N/2`.
    pub fn mode(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.n / 2
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.n {
            Err(Error::Precondition(format!(
                "expected {} grid samples, got {n}",
                self.n
            )))
        } else {
            Ok(())
        }
    }

    pub fn transform(&self, g: &GridFunction) -> Result<Spectrum> {
        self.check(g.len())?;
        let mut s = Spectrum::zeros(g.dim(), self.n);
        let scale = 1.0 / self.n as f64;
        for c in 0..g.dim() {
            let buf = s.component_mut(c);
            for (b, &x) in buf.iter_mut().zip(g.component(c)) {
                *b = Complex64::new(x, 0.0);
            }
            self.forward.process(buf);
            for b in buf.iter_mut() {
                *b *= scale;
            }
        }
        Ok(s)
    }

    /// Grid values of a spectrum (real part).
    pub fn synthesize(&self, s: &Spectrum) -> Result<GridFunction> {
        self.check(s.len())?;
        let mut g = GridFunction::zeros(s.dim(), self.n);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for c in 0..s.dim() {
            buf.copy_from_slice(s.component(c));
            self.inverse.process(&mut buf);
            for (o, b) in g.component_mut(c).iter_mut().zip(&buf) {
                *o = b.re;
            }
        }
        Ok(g)
    }

    /// `Π`: the grid mean of each component (the trapezoid rule on a periodic
    /// grid).
    pub fn pi_average(&self, g: &GridFunction) -> Result<Vec<f64>> {
        self.check(g.len())?;
        Ok((0..g.dim())
            .map(|c| g.component(c).iter().sum::<f64>() / self.n as f64)
            .collect())
    }

    /// `A` applied in place to coefficients: `û_l → û_l/(il)` for resolved
    /// `l ≠ 0`, zero for `l = 0` and the Nyquist mode.
    pub fn antiderivative_in_place(&self, s: &mut Spectrum) {
        for c in 0..s.dim() {
            let buf = s.component_mut(c);
            for (j, b) in buf.iter_mut().enumerate() {
                let l = self.mode(j);
                if l == 0 || j == self.n / 2 {
                    *b = Complex64::new(0.0, 0.0);
                } else {
                    *b /= Complex64::new(0.0, l as f64);
                }
            }
        }
    }

    /// `A = L^{-1}(I - Π)` on grid samples.
    pub fn a_operator(&self, g: &GridFunction) -> Result<GridFunction> {
        let mut s = self.transform(g)?;
        self.antiderivative_in_place(&mut s);
        self.synthesize(&s)
    }

    /// Spectral derivative `∂_τ` on the resolved modes.
    pub fn derivative(&self, g: &GridFunction) -> Result<GridFunction> {
        let mut s = self.transform(g)?;
        for c in 0..s.dim() {
            let buf = s.component_mut(c);
            for (j, b) in buf.iter_mut().enumerate() {
                if j == self.n / 2 {
                    *b = Complex64::new(0.0, 0.0);
                } else {
                    *b *= Complex64::new(0.0, self.mode(j) as f64);
                }
            }
        }
        self.synthesize(&s)
    }

    /// Evaluates the truncated series `Σ_{|l|<N/2} û_l e^{ilτ}` (real part)
    /// at an arbitrary phase.
    pub fn evaluate_into(&self, s: &Spectrum, tau: f64, out: &mut [f64]) {
        let n = self.n;
        let half = n / 2;
        let mut cis = Vec::with_capacity(half);
        for l in 1..half {
            let (sn, cs) = (l as f64 * tau).sin_cos();
            cis.push(Complex64::new(cs, sn));
        }
        for (c, o) in out.iter_mut().enumerate().take(s.dim()) {
            let comp = s.component(c);
            let mut acc = comp[0].re;
            for l in 1..half {
                let e = cis[l - 1];
                // û_l e^{ilτ} + û_{-l} e^{-ilτ}
                acc += (comp[l] * e).re + (comp[n - l] * e.conj()).re;
            }
            *o = acc;
        }
    }

    pub fn evaluate(&self, s: &Spectrum, tau: f64) -> Vec<f64> {
        let mut out = vec![0.0; s.dim()];
        self.evaluate_into(s, tau, &mut out);
        out
    }
}

const PHI_SERIES_RADIUS: f64 = 0.25;

/// `φ1(z) = (e^z - 1)/z`, with `φ1(0) = 1`.
pub fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < PHI_SERIES_RADIUS {
        // Σ z^k/(k+1)!
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 1..20 {
            term *= z / (k as f64 + 1.0);
            sum += term;
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// `φ2(z) = (e^z - 1 - z)/z²`, with `φ2(0) = 1/2`.
pub fn phi2(z: Complex64) -> Complex64 {
    if z.norm() < PHI_SERIES_RADIUS {
        // Σ z^k/(k+2)!
        let mut term = Complex64::new(0.5, 0.0);
        let mut sum = term;
        for k in 1..20 {
            term *= z / (k as f64 + 2.0);
            sum += term;
        }
        sum
    } else {
        (z.exp() - 1.0 - z) / (z * z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_of(n: usize, f: impl Fn(f64) -> f64) -> GridFunction {
        let g = TauGrid::new(n).unwrap();
        GridFunction::from_nodes(&g.nodes().iter().map(|&t| vec![f(t)]).collect::<Vec<_>>()).unwrap()
    }

    /// Random real band-limited samples (modes |l| < N/2) with `dim`
    /// components.
    fn random_resolved(grid: &TauGrid, dim: usize, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.len();
        let mut g = GridFunction::zeros(dim, n);
        for c in 0..dim {
            let mean: f64 = rng.random_range(-1.0..1.0);
            let modes: Vec<(f64, f64)> = (1..n / 2)
                .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            for (j, &t) in grid.nodes().iter().enumerate() {
                let mut v = mean;
                for (l, (a, b)) in modes.iter().enumerate() {
                    let k = (l + 1) as f64;
                    v += a * (k * t).cos() + b * (k * t).sin();
                }
                g.component_mut(c)[j] = v;
            }
        }
        g
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(matches!(TauGrid::new(7), Err(Error::Config(_))));
        assert!(matches!(TauGrid::new(12), Err(Error::Config(_))));
        assert!(matches!(TauGrid::new(0), Err(Error::Config(_))));
        let g = TauGrid::new(8).unwrap();
        assert!(g.pi_average(&GridFunction::zeros(1, 4)).is_err());
    }

    #[test]
    fn constant_samples() {
        let g = TauGrid::new(16).unwrap();
        let s = grid_of(16, |_| 2.5);
        assert!((g.pi_average(&s).unwrap()[0] - 2.5).abs() < 1e-15);
        let a = g.a_operator(&s).unwrap();
        assert!(a.component(0).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn antiderivative_of_cosine() {
        let g = TauGrid::new(16).unwrap();
        let a = g.a_operator(&grid_of(16, f64::cos)).unwrap();
        for (j, &t) in g.nodes().iter().enumerate() {
            assert!((a.get(0, j) - t.sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn antiderivative_of_two_modes() {
        let g = TauGrid::new(32).unwrap();
        let s = grid_of(32, |t| t.cos() + (2.0 * t).sin());
        assert!(g.pi_average(&s).unwrap()[0].abs() < 1e-15);
        let a = g.a_operator(&s).unwrap();
        for (j, &t) in g.nodes().iter().enumerate() {
            let exact = t.sin() - (2.0 * t).cos() / 2.0;
            assert!((a.get(0, j) - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn operator_identities_on_random_samples() {
        for (n, seed) in [(8, 1), (16, 2), (32, 3), (128, 4)] {
            let grid = TauGrid::new(n).unwrap();
            let s = random_resolved(&grid, 3, seed);
            let a = grid.a_operator(&s).unwrap();
            for m in grid.pi_average(&a).unwrap() {
                assert!(m.abs() <= 1e-12);
            }
            let da = grid.derivative(&a).unwrap();
            let mean = grid.pi_average(&s).unwrap();
            for c in 0..3 {
                for j in 0..n {
                    assert!((da.get(c, j) - (s.get(c, j) - mean[c])).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn series_evaluation_matches_grid_and_off_grid() {
        let grid = TauGrid::new(16).unwrap();
        let f = |t: f64| 0.3 + t.cos() - 0.2 * (3.0 * t).sin() + 0.05 * (7.0 * t).cos();
        let s = grid.transform(&grid_of(16, f)).unwrap();
        for &t in &[0.0, 0.1, 1.7, 3.3, 6.2] {
            assert!((grid.evaluate(&s, t)[0] - f(t)).abs() < 1e-14);
        }
        assert!(s.hermitian_defect() < 1e-15);
    }

    #[test]
    fn phi_functions_are_continuous_across_the_series_switch() {
        for &x in &[1e-9, 1e-3, 0.2499, 0.2501, 1.0, 40.0] {
            for z in [Complex64::new(0.0, x), Complex64::new(0.0, -x)] {
                let exact1: Complex64 = if x > 1e-3 { (z.exp() - 1.0) / z } else { phi1(z) };
                assert!((phi1(z) - exact1).norm() < 1e-14);
            }
        }
        assert_eq!(phi1(Complex64::new(0.0, 0.0)), Complex64::new(1.0, 0.0));
        assert_eq!(phi2(Complex64::new(0.0, 0.0)), Complex64::new(0.5, 0.0));
        // quadrature: φ2(z) = ∫_0^1 (1-s) e^{sz} ds
        let z = Complex64::new(0.0, 0.2);
        let m = 2000;
        let mut q = Complex64::new(0.0, 0.0);
        for k in 0..m {
            let s = (k as f64 + 0.5) / m as f64;
            q += (z * s).exp() * (1.0 - s) / m as f64;
        }
        assert!((phi2(z) - q).norm() < 1e-7);
    }
}
