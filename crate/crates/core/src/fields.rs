//! Analytic electromagnetic field catalog.
//!
//! Every field set bundles an electric field `E(t, x)`, a magnetic field
//! `B(x)` together with its Jacobian (column `i` holds `∂B/∂x_i`), the
//! intensity `|B(x)|`, and optionally a potential `φ` with `E = -∇φ`.
//! Gradients are hand-differentiated; the finite-difference cross-checks live
//! in the tests.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::{Mat3, Vec3};

/// Electric field provider used by the integrators. Implemented by
/// [`FieldSet`] (external field) and by the PIC mesh field.
pub trait ElectricField: Sync {
    fn electric(&self, t: f64, x: &Vec3) -> Vec3;
}

/// A field model evaluated pointwise. Implementations must be pure.
pub trait FieldModel: Send + Sync {
    fn electric(&self, t: f64, x: &Vec3) -> Vec3;
    fn magnetic(&self, x: &Vec3) -> Vec3;
    /// Jacobian of `B`; column `i` is `∂B/∂x_i`.
    fn magnetic_gradient(&self, x: &Vec3) -> Mat3;
    fn potential(&self, _x: &Vec3) -> Option<f64> {
        None
    }
    fn magnetic_with_gradient(&self, x: &Vec3) -> (Vec3, Mat3) {
        (self.magnetic(x), self.magnetic_gradient(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldFlags {
    pub constant_intensity: bool,
    pub divergence_free: bool,
    pub time_dependent_e: bool,
}

/// Single-call bundle of every field quantity at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub e: Vec3,
    pub b: Vec3,
    pub grad_b: Mat3,
    pub intensity: f64,
}

type VecFn = dyn Fn(f64, &Vec3) -> Vec3 + Send + Sync;
type BFn = dyn Fn(&Vec3) -> Vec3 + Send + Sync;
type GradFn = dyn Fn(&Vec3) -> Mat3 + Send + Sync;
type PhiFn = dyn Fn(&Vec3) -> f64 + Send + Sync;

/// User-supplied field. The flags and intensity bounds are declared by the
/// caller, they are not detected.
pub struct CustomField {
    pub name: String,
    pub electric: Box<VecFn>,
    pub magnetic: Box<BFn>,
    pub magnetic_gradient: Box<GradFn>,
    pub potential: Option<Box<PhiFn>>,
    pub flags: FieldFlags,
    pub intensity_bounds: (f64, f64),
}

impl fmt::Debug for CustomField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomField")
            .field("name", &self.name)
            .field("flags", &self.flags)
            .field("intensity_bounds", &self.intensity_bounds)
            .finish_non_exhaustive()
    }
}

impl FieldModel for CustomField {
    fn electric(&self, t: f64, x: &Vec3) -> Vec3 {
        (self.electric)(t, x)
    }
    fn magnetic(&self, x: &Vec3) -> Vec3 {
        (self.magnetic)(x)
    }
    fn magnetic_gradient(&self, x: &Vec3) -> Mat3 {
        (self.magnetic_gradient)(x)
    }
    fn potential(&self, x: &Vec3) -> Option<f64> {
        self.potential.as_ref().map(|p| p(x))
    }
}

#[derive(Clone, Debug)]
pub enum FieldCatalogEntry {
    /// Unit-intensity field with varying direction and the sinusoidal potential.
    Example1,
    /// Divergence-free field with varying intensity, same electric field.
    Example2,
    /// Screw-pinch field of twist `alpha`, unit intensity, no external E.
    ScrewPinch { alpha: f64 },
    /// `B = e3`, no external E.
    UniformBz,
    Custom(Arc<CustomField>),
}

impl FieldCatalogEntry {
    /// Parses `example1`, `example2`, `uniform`, `screw-pinch` or
    /// `screw-pinch:<alpha>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let s = spec.trim().to_ascii_lowercase();
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n.to_string(), Some(p.to_string())),
            None => (s.clone(), None),
        };
        match name.as_str() {
            "example1" | "ex1" => Ok(Self::Example1),
            "example2" | "ex2" => Ok(Self::Example2),
            "uniform" | "uniform-bz" => Ok(Self::UniformBz),
            "screw-pinch" | "screwpinch" => {
                let alpha = match param {
                    Some(p) => p
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad screw-pinch alpha '{p}'")))?,
                    None => 0.0,
                };
                Ok(Self::ScrewPinch { alpha })
            }
            _ => Err(Error::Config(format!("unknown field '{spec}'"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Example1 => "example1".into(),
            Self::Example2 => "example2".into(),
            Self::ScrewPinch { alpha } => format!("screw-pinch:{alpha}"),
            Self::UniformBz => "uniform".into(),
            Self::Custom(c) => c.name.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Example1;

fn example_electric(x: &Vec3) -> Vec3 {
    let (s1, c1) = (0.5 * x[0]).sin_cos();
    let (s2, c2) = x[1].sin_cos();
    let (s3, c3) = x[2].sin_cos();
    Vec3::new(0.5 * c1 * s2 * s3, s1 * c2 * s3, s1 * s2 * c3)
}

fn example_potential(x: &Vec3) -> f64 {
    -(0.5 * x[0]).sin() * x[1].sin() * x[2].sin()
}

impl FieldModel for Example1 {
    fn electric(&self, _t: f64, x: &Vec3) -> Vec3 {
        example_electric(x)
    }
    fn magnetic(&self, x: &Vec3) -> Vec3 {
        let (s, c) = (x[0] + x[1]).sin_cos();
        let (s3, c3) = x[2].sin_cos();
        Vec3::new(s, c * s3, c * c3)
    }
    fn magnetic_gradient(&self, x: &Vec3) -> Mat3 {
        self.magnetic_with_gradient(x).1
    }
    fn magnetic_with_gradient(&self, x: &Vec3) -> (Vec3, Mat3) {
        let (s, c) = (x[0] + x[1]).sin_cos();
        let (s3, c3) = x[2].sin_cos();
        let b = Vec3::new(s, c * s3, c * c3);
        let d12 = Vec3::new(c, -s * s3, -s * c3);
        let d3 = Vec3::new(0.0, c * c3, -c * s3);
        (b, Mat3::from_columns(&[d12, d12, d3]))
    }
    fn potential(&self, x: &Vec3) -> Option<f64> {
        Some(example_potential(x))
    }
}

#[derive(Clone, Copy, Debug)]
struct Example2;

impl FieldModel for Example2 {
    fn electric(&self, _t: f64, x: &Vec3) -> Vec3 {
        example_electric(x)
    }
    fn magnetic(&self, x: &Vec3) -> Vec3 {
        Vec3::new(
            1.0 - 0.5 * x[1].sin(),
            1.0 + 0.5 * x[2].cos(),
            1.0 + 0.5 * x[0].cos(),
        )
    }
    fn magnetic_gradient(&self, x: &Vec3) -> Mat3 {
        Mat3::from_columns(&[
            Vec3::new(0.0, 0.0, -0.5 * x[0].sin()),
            Vec3::new(-0.5 * x[1].cos(), 0.0, 0.0),
            Vec3::new(0.0, -0.5 * x[2].sin(), 0.0),
        ])
    }
    fn potential(&self, x: &Vec3) -> Option<f64> {
        Some(example_potential(x))
    }
}

#[derive(Clone, Copy, Debug)]
struct ScrewPinch {
    alpha: f64,
}

impl FieldModel for ScrewPinch {
    fn electric(&self, _t: f64, _x: &Vec3) -> Vec3 {
        Vec3::zeros()
    }
    fn magnetic(&self, x: &Vec3) -> Vec3 {
        let a = self.alpha;
        let g = 1.0 / (1.0 + a * a * (x[0] * x[0] + x[1] * x[1])).sqrt();
        Vec3::new(a * x[1] * g, -a * x[0] * g, g)
    }
    fn magnetic_gradient(&self, x: &Vec3) -> Mat3 {
        self.magnetic_with_gradient(x).1
    }
    fn magnetic_with_gradient(&self, x: &Vec3) -> (Vec3, Mat3) {
        let a = self.alpha;
        let g = 1.0 / (1.0 + a * a * (x[0] * x[0] + x[1] * x[1])).sqrt();
        let g3 = g * g * g;
        let dir = Vec3::new(a * x[1], -a * x[0], 1.0);
        let b = dir * g;
        // ∂_i g = -α² x_i g³ for i = 1, 2
        let d1 = Vec3::new(0.0, -a * g, 0.0) - dir * (a * a * x[0] * g3);
        let d2 = Vec3::new(a * g, 0.0, 0.0) - dir * (a * a * x[1] * g3);
        (b, Mat3::from_columns(&[d1, d2, Vec3::zeros()]))
    }
    fn potential(&self, _x: &Vec3) -> Option<f64> {
        Some(0.0)
    }
}

#[derive(Clone, Copy, Debug)]
struct UniformBz;

impl FieldModel for UniformBz {
    fn electric(&self, _t: f64, _x: &Vec3) -> Vec3 {
        Vec3::zeros()
    }
    fn magnetic(&self, _x: &Vec3) -> Vec3 {
        Vec3::z()
    }
    fn magnetic_gradient(&self, _x: &Vec3) -> Mat3 {
        Mat3::zeros()
    }
    fn potential(&self, _x: &Vec3) -> Option<f64> {
        Some(0.0)
    }
}

/// A field set ready for evaluation. Cheap to clone.
#[derive(Clone)]
pub struct FieldSet {
    entry: FieldCatalogEntry,
    model: Arc<dyn FieldModel>,
    flags: FieldFlags,
    /// `(c0, C_b)`: lower and upper bounds of `|B|` on the working domain.
    intensity_bounds: (f64, f64),
}

impl fmt::Debug for FieldSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSet")
            .field("entry", &self.entry.name())
            .field("flags", &self.flags)
            .field("intensity_bounds", &self.intensity_bounds)
            .finish()
    }
}

pub fn make_field(entry: FieldCatalogEntry) -> Result<FieldSet> {
    let unit = (1.0, 1.0);
    let (model, flags, bounds): (Arc<dyn FieldModel>, FieldFlags, (f64, f64)) = match &entry {
        FieldCatalogEntry::Example1 => (
            Arc::new(Example1),
            FieldFlags {
                constant_intensity: true,
                divergence_free: false,
                time_dependent_e: false,
            },
            unit,
        ),
        FieldCatalogEntry::Example2 => {
            let model = Example2;
            let period = 2.0 * std::f64::consts::PI;
            let bounds = scan_intensity_bounds(&model, [0.0; 3], [period; 3], 24);
            (
                Arc::new(model),
                FieldFlags {
                    constant_intensity: false,
                    divergence_free: true,
                    time_dependent_e: false,
                },
                bounds,
            )
        }
        FieldCatalogEntry::ScrewPinch { alpha } => {
            if !alpha.is_finite() || *alpha < 0.0 {
                return Err(Error::Config(format!(
                    "screw-pinch alpha must be finite and non-negative, got {alpha}"
                )));
            }
            (
                Arc::new(ScrewPinch { alpha: *alpha }),
                FieldFlags {
                    constant_intensity: true,
                    divergence_free: true,
                    time_dependent_e: false,
                },
                unit,
            )
        }
        FieldCatalogEntry::UniformBz => (
            Arc::new(UniformBz),
            FieldFlags {
                constant_intensity: true,
                divergence_free: true,
                time_dependent_e: false,
            },
            unit,
        ),
        FieldCatalogEntry::Custom(c) => {
            let (lo, hi) = c.intensity_bounds;
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Config(format!(
                    "custom field '{}' needs 0 < c0 <= C_b, got ({lo}, {hi})",
                    c.name
                )));
            }
            (c.clone() as Arc<dyn FieldModel>, c.flags, c.intensity_bounds)
        }
    };
    Ok(FieldSet {
        entry,
        model,
        flags,
        intensity_bounds: bounds,
    })
}

/// Coarse grid scan of `|B|` over a box followed by a shrinking pattern
/// search around the extremal grid points.
pub fn scan_intensity_bounds(
    model: &dyn FieldModel,
    lo: [f64; 3],
    hi: [f64; 3],
    n: usize,
) -> (f64, f64) {
    let n = n.max(2);
    let step: Vec<f64> = (0..3).map(|d| (hi[d] - lo[d]) / n as f64).collect();
    let point = |i: usize, j: usize, k: usize| {
        Vec3::new(
            lo[0] + i as f64 * step[0],
            lo[1] + j as f64 * step[1],
            lo[2] + k as f64 * step[2],
        )
    };
    let norm = |x: &Vec3| model.magnetic(x).norm();
    let (mut best_min, mut best_max) = ((f64::INFINITY, Vec3::zeros()), (0.0, Vec3::zeros()));
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                let x = point(i, j, k);
                let b = norm(&x);
                if b < best_min.0 {
                    best_min = (b, x);
                }
                if b > best_max.0 {
                    best_max = (b, x);
                }
            }
        }
    }
    let refine = |start: (f64, Vec3), sign: f64| {
        let (mut val, mut x) = start;
        let mut h = step.iter().cloned().fold(0.0, f64::max);
        while h > 1e-10 {
            let mut improved = false;
            for d in 0..3 {
                for dir in [-1.0, 1.0] {
                    let mut y = x;
                    y[d] += dir * h;
                    let b = norm(&y);
                    if sign * b < sign * val {
                        val = b;
                        x = y;
                        improved = true;
                    }
                }
            }
            if !improved {
                h *= 0.5;
            }
        }
        val
    };
    (refine(best_min, 1.0), refine(best_max, -1.0))
}

impl FieldSet {
    pub fn entry(&self) -> &FieldCatalogEntry {
        &self.entry
    }
    pub fn name(&self) -> String {
        self.entry.name()
    }
    pub fn flags(&self) -> FieldFlags {
        self.flags
    }
    /// `c0`, the stored lower bound of `|B|`.
    pub fn intensity_lower_bound(&self) -> f64 {
        self.intensity_bounds.0
    }
    /// `C_b`, the stored upper bound of `|B|`.
    pub fn intensity_upper_bound(&self) -> f64 {
        self.intensity_bounds.1
    }
    pub fn electric(&self, t: f64, x: &Vec3) -> Vec3 {
        self.model.electric(t, x)
    }
    pub fn magnetic(&self, x: &Vec3) -> Vec3 {
        self.model.magnetic(x)
    }
    pub fn magnetic_gradient(&self, x: &Vec3) -> Mat3 {
        self.model.magnetic_gradient(x)
    }
    pub fn magnetic_with_gradient(&self, x: &Vec3) -> (Vec3, Mat3) {
        self.model.magnetic_with_gradient(x)
    }
    pub fn intensity(&self, x: &Vec3) -> f64 {
        self.model.magnetic(x).norm()
    }
    pub fn potential(&self, x: &Vec3) -> Option<f64> {
        self.model.potential(x)
    }
    pub fn has_potential(&self) -> bool {
        self.model.potential(&Vec3::zeros()).is_some()
    }

    pub fn eval_all(&self, t: f64, x: &Vec3) -> FieldSample {
        let (b, grad_b) = self.model.magnetic_with_gradient(x);
        FieldSample {
            e: self.model.electric(t, x),
            b,
            grad_b,
            intensity: b.norm(),
        }
    }

    pub fn require_constant_intensity(&self) -> Result<()> {
        if self.flags.constant_intensity {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "field '{}' does not have constant intensity",
                self.name()
            )))
        }
    }
}

impl ElectricField for FieldSet {
    fn electric(&self, t: f64, x: &Vec3) -> Vec3 {
        self.model.electric(t, x)
    }
}

/// Identically zero electric field.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoElectricField;

impl ElectricField for NoElectricField {
    fn electric(&self, _t: f64, _x: &Vec3) -> Vec3 {
        Vec3::zeros()
    }
}
