//! Leading-order averaged model of the characteristics as `ε → 0`:
//!
//! ```text
//! ẋ = (B·v)B,   v̇ = B_v(x, v, E)
//! ```
//!
//! for a unit-intensity magnetic field.

use crate::error::Result;
use crate::fields::{ElectricField, FieldSet};
use crate::{Mat3, ParticleState, Vec3};

/// `M = (B·v)∇B + B(vᵀ∇B)`, with `∇B` holding the columns `∂_iB`.
pub fn m_matrix(b: &Vec3, grad_b: &Mat3, v: &Vec3) -> Mat3 {
    grad_b * b.dot(v) + b * (v.transpose() * grad_b)
}

/// The matrix whose columns are `v × ∂_iB`.
fn v_cross_grad(v: &Vec3, grad_b: &Mat3) -> Mat3 {
    let col = |i: usize| -> Vec3 { v.cross(&grad_b.column(i).into_owned()) };
    Mat3::from_columns(&[col(0), col(1), col(2)])
}

/// Averaged vector field from precomputed field values.
pub fn averaged_rhs(v: &Vec3, e: &Vec3, b: &Vec3, grad_b: &Mat3) -> (Vec3, Vec3) {
    let bv = b.dot(v);
    let drift_x = b * bv;
    let m = m_matrix(b, grad_b, v);
    let vg = v_cross_grad(v, grad_b);
    let vxb = v.cross(b);

    let inner = e - vg * vxb * 0.5 + m * v - m * b * (2.5 * bv);
    let parallel = b * b.dot(&inner);
    let mirror = m * (v - b * (2.0 * bv)) * 0.5;
    let twist = b.cross(&(m * vxb + vg * b * bv)) * 0.5;
    (drift_x, parallel - mirror - twist)
}

/// `(drift_x, drift_v)` of the averaged model at `(x, v)` with electric
/// field `e`.
pub fn eval_averaged(x: &Vec3, v: &Vec3, e: &Vec3, fs: &FieldSet) -> Result<(Vec3, Vec3)> {
    fs.require_constant_intensity()?;
    let (b, grad_b) = fs.magnetic_with_gradient(x);
    Ok(averaged_rhs(v, e, &b, &grad_b))
}

/// The averaged field computed directly as the phase average of the pulled
/// back slow field, `Π (DΦ_τ)⁻¹ K∘Φ_τ`, with `Φ_τ` the gyration flow and
/// `K = (v, E)`. Uses `n` uniform nodes; serves as an independent reference
/// for [`averaged_rhs`].
pub fn averaged_by_quadrature(v: &Vec3, e: &Vec3, b: &Vec3, grad_b: &Mat3, n: usize) -> (Vec3, Vec3) {
    let m = m_matrix(b, grad_b, v);
    let vg = v_cross_grad(v, grad_b);
    let bb = b * b.transpose();
    let cross_b = Mat3::new(0.0, -b[2], b[1], b[2], 0.0, -b[0], -b[1], b[0], 0.0);
    let mut sx = Vec3::zeros();
    let mut sv = Vec3::zeros();
    for j in 0..n {
        let tau = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        let (s, c) = tau.sin_cos();
        // gyration v_τ = cos τ v + sin τ v×B + (1 - cos τ)(B·v)B and its
        // Jacobian blocks
        let n2 = Mat3::identity() * c - cross_b * s + bb * (1.0 - c);
        let n1 = vg * s + m * (1.0 - c);
        let v_tau = n2 * v;
        sx += v_tau;
        // N2 is a rotation, its inverse is its transpose
        sv += n2.transpose() * (e - n1 * v_tau);
    }
    (sx / n as f64, sv / n as f64)
}

/// RK4 trajectory of the averaged characteristics on `[0, t_final]` with
/// step `dt`; the last step is shortened to land on `t_final`.
pub fn integrate_limit(
    x0: &Vec3,
    v0: &Vec3,
    fs: &FieldSet,
    efield: &dyn ElectricField,
    t_final: f64,
    dt: f64,
) -> Result<Vec<(f64, ParticleState)>> {
    fs.require_constant_intensity()?;
    if dt <= 0.0 || t_final < 0.0 || !dt.is_finite() || !t_final.is_finite() {
        return Err(crate::Error::Config(format!(
            "invalid limit integration window: T = {t_final}, dt = {dt}"
        )));
    }
    let rhs = |t: f64, x: &Vec3, v: &Vec3| {
        let (b, g) = fs.magnetic_with_gradient(x);
        averaged_rhs(v, &efield.electric(t, x), &b, &g)
    };
    let mut out = vec![(0.0, ParticleState::new(*x0, *v0))];
    let (mut x, mut v, mut t) = (*x0, *v0, 0.0);
    let steps = (t_final / dt).ceil() as usize;
    for k in 0..steps {
        let h = if k + 1 == steps { t_final - t } else { dt };
        if h <= 0.0 {
            break;
        }
        let (k1x, k1v) = rhs(t, &x, &v);
        let (k2x, k2v) = rhs(t + h / 2.0, &(x + k1x * (h / 2.0)), &(v + k1v * (h / 2.0)));
        let (k3x, k3v) = rhs(t + h / 2.0, &(x + k2x * (h / 2.0)), &(v + k2v * (h / 2.0)));
        let (k4x, k4v) = rhs(t + h, &(x + k3x * h), &(v + k3v * h));
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        t = if k + 1 == steps { t_final } else { t + h };
        out.push((t, ParticleState::new(x, v)));
    }
    Ok(out)
}
