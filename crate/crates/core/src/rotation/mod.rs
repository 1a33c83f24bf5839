//! The oscillation kernel: Rodrigues rotations about the local field line,
//! the filter that removes the gyration from the velocity, and the filtered
//! vector field `F = (F_x, F_y)` of the characteristics.

mod tau;

pub use tau::{phi1, phi2, GridFunction, Spectrum, TauGrid};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fields::{ElectricField, FieldSet};
use crate::{Mat3, Vec3};

const UNIT_TOL: f64 = 1e-10;

const TWO_PI_HI: f64 = 2.0 * PI;
// 2π - TWO_PI_HI
const TWO_PI_LO: f64 = 2.449_293_598_294_706_4e-16;

/// Reduces a phase to `[0, 2π)` with a two-constant Cody–Waite step, so that
/// `t/ε ≈ 1e6` keeps its fractional turn accurate.
pub fn reduce_phase(theta: f64) -> f64 {
    let k = (theta / TWO_PI_HI).floor();
    let r = (-k).mul_add(TWO_PI_HI, theta);
    let r = (-k).mul_add(TWO_PI_LO, r);
    if r < 0.0 {
        r + TWO_PI_HI
    } else if r >= TWO_PI_HI {
        r - TWO_PI_HI
    } else {
        r
    }
}

/// Fast phase `t/ε` reduced modulo 2π.
pub fn fast_phase(t: f64, eps: f64) -> f64 {
    reduce_phase(t / eps)
}

fn check_unit(b: &Vec3) -> Result<()> {
    let n = b.norm();
    if (n - 1.0).abs() > UNIT_TOL {
        Err(Error::Precondition(format!(
            "rotation axis must be a unit vector, |B| = {n}"
        )))
    } else {
        Ok(())
    }
}

/// `cos θ v + (1 - cos θ)(B·v)B - sin θ v×B`: right-handed rotation of `v`
/// by `θ` about the unit axis `B`.
pub fn rodrigues_rotate(v: &Vec3, b: &Vec3, theta: f64) -> Result<Vec3> {
    check_unit(b)?;
    Ok(rotate(v, b, theta))
}

#[inline]
pub(crate) fn rotate(v: &Vec3, b: &Vec3, theta: f64) -> Vec3 {
    let (s, c) = theta.sin_cos();
    v * c + b * ((1.0 - c) * b.dot(v)) - v.cross(b) * s
}

/// Filtered velocity `y` at phase `τ`.
pub fn filter(tau: f64, x: &Vec3, v: &Vec3, fs: &FieldSet) -> Result<Vec3> {
    rodrigues_rotate(v, &fs.magnetic(x), tau)
}

/// Inverse of [`filter`]: `v = cos τ y + (1 - cos τ)(B·y)B + sin τ y×B`.
pub fn unfilter(tau: f64, x: &Vec3, y: &Vec3, fs: &FieldSet) -> Result<Vec3> {
    rodrigues_rotate(y, &fs.magnetic(x), -tau)
}

/// Filtered vector field `(F_x, F_y)` from precomputed field values.
///
/// `drift_scale` multiplies `F_x` to obtain the actual position velocity used
/// in the `∇B` terms: `1` for the plain system, `1/b(x)` for the
/// time-reparametrized one (where `b`, `E` and `∇B` are the normalized ones).
pub fn filtered_rhs(
    tau: f64,
    y: &Vec3,
    e: &Vec3,
    b: &Vec3,
    grad_b: &Mat3,
    drift_scale: f64,
) -> (Vec3, Vec3) {
    let (s, c) = tau.sin_cos();
    let (s2, c2) = (2.0 * tau).sin_cos();
    let by = b.dot(y);
    let yb = b * by;
    let yx = y.cross(b);
    let fx = y * c + yb * (1.0 - c) + yx * s;

    let mut fy = e * c + b * ((1.0 - c) * b.dot(e)) - e.cross(b) * s;

    let delta = grad_b * (fx * drift_scale);
    if delta != Vec3::zeros() {
        let p = |z: &Vec3| b * delta.dot(z) + delta * b.dot(z);
        let q = |z: &Vec3| z.cross(&delta);
        fy -= q(y) * (0.5 * s2);
        fy -= q(&yb) * (0.5 * (2.0 * s - s2));
        fy -= q(&yx) * (0.5 * (1.0 - c2));
        fy += p(y) * (0.5 * (2.0 * c - c2 - 1.0));
        fy += p(&yb) * (0.5 * (3.0 - 4.0 * c + c2));
        fy += p(&yx) * (0.5 * (2.0 * s - s2));
    }
    (fx, fy)
}

/// `(F_x, F_y)` at `(τ, x, y)` for a unit-intensity field, with `E` supplied
/// by the caller.
pub fn eval_f(tau: f64, x: &Vec3, y: &Vec3, e: &Vec3, fs: &FieldSet) -> Result<(Vec3, Vec3)> {
    let (b, grad_b) = fs.magnetic_with_gradient(x);
    check_unit(&b)?;
    Ok(filtered_rhs(tau, y, e, &b, &grad_b, 1.0))
}

/// A vector field `F(τ, u)`, 2π-periodic in `τ`, as consumed by the
/// two-scale and micro-macro integrators. `t` is the physical time, used
/// only by non-autonomous electric fields.
pub trait PeriodicSystem: Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, tau: f64, u: &[f64], out: &mut [f64]);
}

/// The filtered characteristics `u = (x, y)` for a unit-intensity field.
pub struct FilteredCharacteristics<'a> {
    pub fields: &'a FieldSet,
    pub efield: &'a dyn ElectricField,
}

impl<'a> FilteredCharacteristics<'a> {
    pub fn new(fields: &'a FieldSet, efield: &'a dyn ElectricField) -> Result<Self> {
        fields.require_constant_intensity()?;
        Ok(Self { fields, efield })
    }
}

impl PeriodicSystem for FilteredCharacteristics<'_> {
    fn dim(&self) -> usize {
        6
    }

    fn rhs(&self, t: f64, tau: f64, u: &[f64], out: &mut [f64]) {
        let x = Vec3::new(u[0], u[1], u[2]);
        let y = Vec3::new(u[3], u[4], u[5]);
        let (b, grad_b) = self.fields.magnetic_with_gradient(&x);
        let e = self.efield.electric(t, &x);
        let (fx, fy) = filtered_rhs(tau, &y, &e, &b, &grad_b, 1.0);
        out[..3].copy_from_slice(fx.as_slice());
        out[3..6].copy_from_slice(fy.as_slice());
    }
}

/// Samples `F(τ_j, u_j)` on the grid, `u_j` produced by `state_at`.
pub fn sample_rhs<S: PeriodicSystem + ?Sized>(
    sys: &S,
    grid: &TauGrid,
    t: f64,
    mut state_at: impl FnMut(usize, &mut [f64]),
) -> GridFunction {
    let d = sys.dim();
    let n = grid.len();
    let mut out = GridFunction::zeros(d, n);
    let mut u = vec![0.0; d];
    let mut f = vec![0.0; d];
    for j in 0..n {
        state_at(j, &mut u);
        sys.rhs(t, grid.node(j), &u, &mut f);
        out.set_node(j, &f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_field, FieldCatalogEntry};
    use proptest::prelude::*;

    fn unit(v: [f64; 3]) -> Vec3 {
        Vec3::from(v).normalize()
    }

    #[test]
    fn rotation_examples() {
        let v = Vec3::new(0.3, -1.2, 2.0);
        let b = unit([1.0, 2.0, -0.5]);
        assert_eq!(rodrigues_rotate(&v, &b, 0.0).unwrap(), v);
        let par = b * 2.5;
        assert!((rodrigues_rotate(&par, &b, 1.234).unwrap() - par).amax() < 1e-15);
        let r = rodrigues_rotate(&Vec3::x(), &Vec3::z(), PI / 2.0).unwrap();
        assert!((r - Vec3::y()).amax() < 1e-15);
        assert!(matches!(
            rodrigues_rotate(&v, &Vec3::new(0.0, 0.0, 2.0), 1.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn filter_examples() {
        let fs = make_field(FieldCatalogEntry::Example1).unwrap();
        let x = Vec3::new(0.3, -0.4, 1.1);
        let v = Vec3::new(0.5, 0.2, -0.7);
        assert_eq!(filter(0.0, &x, &v, &fs).unwrap(), v);
        assert!((filter(2.0 * PI, &x, &v, &fs).unwrap() - v).amax() < 1e-15);
        let y = filter(PI / 2.0, &Vec3::zeros(), &Vec3::x(), &fs).unwrap();
        assert!((y - Vec3::y()).amax() < 1e-15);
        let e2 = make_field(FieldCatalogEntry::Example2).unwrap();
        assert!(filter(0.3, &x, &v, &e2).is_err());
    }

    /// The filter is the flow of `v' = v × B` run backwards by `τ`; checked
    /// against RK4 on the rotation ODE.
    #[test]
    fn filter_inverts_gyration_flow() {
        let b = unit([0.2, -0.7, 0.4]);
        let v0 = Vec3::new(0.5, 0.9, -0.3);
        let tau = 1.3;
        let steps = 20_000;
        let h = tau / steps as f64;
        let f = |v: &Vec3| v.cross(&b);
        let mut v = v0;
        for _ in 0..steps {
            let k1 = f(&v);
            let k2 = f(&(v + k1 * (h / 2.0)));
            let k3 = f(&(v + k2 * (h / 2.0)));
            let k4 = f(&(v + k3 * h));
            v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        // v(τ) = unfilter(τ, v0)
        assert!((v - rotate(&v0, &b, -tau)).amax() < 1e-12);
    }

    #[test]
    fn phase_reduction() {
        assert_eq!(reduce_phase(0.0), 0.0);
        assert!((reduce_phase(-0.5) - (2.0 * PI - 0.5)).abs() < 1e-15);
        assert!((reduce_phase(7.0) - (7.0 - 2.0 * PI)).abs() < 1e-15);
        // 2^20 turns of the exact 2π leaves a small residual only
        let big = 2.0 * PI * (1u64 << 20) as f64 + 0.25;
        assert!((reduce_phase(big) - 0.25).abs() < 1e-9);
        // (π/2) / 2^-14 = 4096 full turns exactly
        let r = fast_phase(PI / 2.0, 2f64.powi(-14));
        assert!(r < 1e-9 || 2.0 * PI - r < 1e-9);
    }

    #[test]
    fn f_at_zero_phase_and_uniform_field() {
        let fs = make_field(FieldCatalogEntry::Example1).unwrap();
        let x = Vec3::new(0.4, 0.1, -0.9);
        let y = Vec3::new(0.2, -0.5, 0.8);
        let e = fs.electric(0.0, &x);
        let (fx, fy) = eval_f(0.0, &x, &y, &e, &fs).unwrap();
        assert!((fx - y).amax() < 1e-15);
        assert!((fy - e).amax() < 1e-15);

        let sp = make_field(FieldCatalogEntry::ScrewPinch { alpha: 0.0 }).unwrap();
        let e = Vec3::new(0.3, 0.1, -0.2);
        let tau = 0.77;
        let (_, fy) = eval_f(tau, &x, &y, &e, &sp).unwrap();
        assert!((fy - rotate(&e, &Vec3::z(), tau)).amax() < 1e-15);
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm(
            v in prop::array::uniform3(-5.0f64..5.0),
            b in prop::array::uniform3(-1.0f64..1.0),
            theta in -10.0f64..10.0,
        ) {
            prop_assume!(Vec3::from(b).norm() > 1e-3);
            let b = unit(b);
            let v = Vec3::from(v);
            let r = rodrigues_rotate(&v, &b, theta).unwrap();
            prop_assert!((r.norm() - v.norm()).abs() <= 1e-12 * (1.0 + v.norm()));
        }

        #[test]
        fn rotation_group_property(
            v in prop::array::uniform3(-5.0f64..5.0),
            b in prop::array::uniform3(-1.0f64..1.0),
            t1 in -7.0f64..7.0,
            t2 in -7.0f64..7.0,
        ) {
            prop_assume!(Vec3::from(b).norm() > 1e-3);
            let b = unit(b);
            let v = Vec3::from(v);
            let two = rotate(&rotate(&v, &b, t2), &b, t1);
            let one = rotate(&v, &b, t1 + t2);
            prop_assert!((two - one).amax() <= 1e-12 * (1.0 + v.norm()));
        }

        #[test]
        fn filter_round_trip(
            x in prop::array::uniform3(-8.0f64..8.0),
            v in prop::array::uniform3(-3.0f64..3.0),
            tau in 0.0f64..(2.0 * PI),
            alpha in 0.0f64..0.5,
        ) {
            let x = Vec3::from(x);
            let v = Vec3::from(v);
            for fs in [
                make_field(FieldCatalogEntry::Example1).unwrap(),
                make_field(FieldCatalogEntry::ScrewPinch { alpha }).unwrap(),
            ] {
                let y = filter(tau, &x, &v, &fs).unwrap();
                prop_assert!((y.norm() - v.norm()).abs() <= 1e-12 * (1.0 + v.norm()));
                let back = unfilter(tau, &x, &y, &fs).unwrap();
                prop_assert!((back - v).amax() <= 1e-12);
            }
        }
    }
}
