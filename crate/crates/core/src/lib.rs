//! Uniformly accurate integrators for charged-particle dynamics in strong,
//! spatially varying magnetic fields.
//!
//! The solvers advance characteristics `ẋ = v`, `v̇ = E + v × B/ε` with
//! error bounds that do not degrade as `ε → 0`:
//!
//! * [`mrc`]: multiple-revolution composition splitting (volume preserving),
//! * [`tsf`]: second-order two-scale formulation with a spectral `τ`-grid,
//! * [`micromacro`]: micro-macro decomposition, with a time reparametrization
//!   for fields of varying intensity,
//! * [`limitmodel`]: the averaged `ε → 0` model,
//! * [`pic`]: a particle-in-cell Vlasov–Poisson driver built on [`mrc`],
//! * [`harness`]: reference solutions, convergence sweeps and diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fields;
pub mod harness;
pub mod limitmodel;
pub mod micromacro;
pub mod mrc;
pub mod pic;
pub mod rotation;
pub mod tsf;

pub use error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Position and velocity of one particle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParticleState {
    pub x: Vec3,
    pub v: Vec3,
}

impl ParticleState {
    pub fn new(x: Vec3, v: Vec3) -> Self {
        Self { x, v }
    }

    pub fn from_array(u: [f64; 6]) -> Self {
        Self {
            x: Vec3::new(u[0], u[1], u[2]),
            v: Vec3::new(u[3], u[4], u[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x[0], self.x[1], self.x[2], self.v[0], self.v[1], self.v[2]]
    }
}
