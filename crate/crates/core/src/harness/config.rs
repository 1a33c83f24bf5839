//! Experiment configuration: a `key = value` text format, overridable
//! key by key, with a stable content hash stamped on every output row.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{make_field, FieldCatalogEntry, FieldSet};
use crate::micromacro::StartRule;
use crate::{ParticleState, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Mrc,
    Tsf,
    Mm,
    MmReparam,
    Rk4,
    Limit,
}

impl Scheme {
    pub const ALL_UA: [Scheme; 3] = [Scheme::Mrc, Scheme::Tsf, Scheme::Mm];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Mrc => "mrc",
            Scheme::Tsf => "tsf",
            Scheme::Mm => "mm",
            Scheme::MmReparam => "mm-reparam",
            Scheme::Rk4 => "rk4",
            Scheme::Limit => "limit",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mrc" => Ok(Scheme::Mrc),
            "tsf" => Ok(Scheme::Tsf),
            "mm" => Ok(Scheme::Mm),
            "mm-reparam" | "mm_reparam" | "reparam" => Ok(Scheme::MmReparam),
            "rk4" => Ok(Scheme::Rk4),
            "limit" => Ok(Scheme::Limit),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    SingleParticle,
    VlasovPoisson,
}

/// Reference used to measure errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleKind {
    /// Classical RK4 with the given step.
    Rk4(f64),
    /// Extrapolated modified midpoint with the given macro steps per
    /// gyro-period.
    Extrapolated(usize),
}

impl FromStr for OracleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(rest) = s.strip_prefix("rk4") {
            let dt = match rest.strip_prefix(':') {
                Some(v) => parse_real(v)?,
                None => 1e-5,
            };
            return Ok(OracleKind::Rk4(dt));
        }
        if let Some(rest) = s.strip_prefix("gbs").or_else(|| s.strip_prefix("extrapolated")) {
            let n = match rest.strip_prefix(':') {
                Some(v) => v.parse().map_err(|_| Error::Config(format!("bad oracle resolution '{v}'")))?,
                None => 12,
            };
            return Ok(OracleKind::Extrapolated(n));
        }
        Err(Error::Config(format!("unknown oracle '{s}'")))
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleKind::Rk4(dt) => write!(f, "rk4:{dt:e}"),
            OracleKind::Extrapolated(n) => write!(f, "gbs:{n}"),
        }
    }
}

/// Parses a real number, also accepting `2^-k` / `2**-k`.
pub fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let pow = s.split_once("**").or_else(|| s.split_once('^'));
    let v = match pow {
        Some((b, e)) => {
            let b: f64 = b.trim().parse().map_err(|_| Error::Config(format!("bad number '{s}'")))?;
            let e: f64 = e.trim().parse().map_err(|_| Error::Config(format!("bad number '{s}'")))?;
            b.powf(e)
        }
        None => match s.to_ascii_lowercase().as_str() {
            "pi" => std::f64::consts::PI,
            other => {
                if let Some(k) = other.strip_suffix("pi") {
                    let k: f64 = k.trim_end_matches('*').parse().map_err(|_| Error::Config(format!("bad number '{s}'")))?;
                    k * std::f64::consts::PI
                } else if let Some(d) = other.strip_prefix("pi/") {
                    let d: f64 = d.parse().map_err(|_| Error::Config(format!("bad number '{s}'")))?;
                    std::f64::consts::PI / d
                } else {
                    other.parse().map_err(|_| Error::Config(format!("bad number '{s}'")))?
                }
            }
        },
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("non-finite number '{s}'")))
    }
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| f(p.trim())).collect()
}

fn parse_vec3(s: &str) -> Result<Vec3> {
    let v = parse_list(s, parse_real)?;
    if v.len() != 3 {
        return Err(Error::Config(format!("expected three components, got '{s}'")));
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Config(format!("bad integer '{s}'")))
}

/// Everything an experiment needs. Defaults reproduce the single-particle
/// accuracy test with the unit-intensity field.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub field: String,
    pub eps: Vec<f64>,
    pub steps: Vec<usize>,
    pub n_tau: usize,
    pub t_final: f64,
    pub restart_period: Option<f64>,
    pub x0: Vec3,
    pub v0: Vec3,
    pub seed: u64,
    pub mode: Mode,
    pub oracle: OracleKind,
    pub out: Option<PathBuf>,
    /// PIC mesh node counts.
    pub mesh: [usize; 3],
    pub particles_per_cell: usize,
    pub eta: f64,
    pub k_mode: u32,
    /// Dense-output samples per step for trajectory recovery.
    pub samples_per_step: usize,
    /// First step of each MM window.
    pub mm_start: StartRule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Mrc,
            field: "example1".into(),
            eps: vec![2f64.powi(-4)],
            steps: vec![8, 16, 32, 64],
            n_tau: 32,
            t_final: std::f64::consts::PI / 2.0,
            restart_period: None,
            x0: Vec3::new(1.0 / 3.0, -0.5, std::f64::consts::PI.sqrt() / 2.0),
            v0: Vec3::new(0.5, std::f64::consts::E / 4.0, -1.0 / 3.0),
            seed: 1,
            mode: Mode::SingleParticle,
            oracle: OracleKind::Extrapolated(12),
            out: None,
            mesh: [64, 64, 4],
            particles_per_cell: 10,
            eta: 0.05,
            k_mode: 4,
            samples_per_step: 8,
            mm_start: StartRule::default(),
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "scheme" => self.scheme = v.parse()?,
            "field" => {
                FieldCatalogEntry::parse(v)?;
                self.field = v.to_string();
            }
            "eps" => self.eps = parse_list(v, parse_real)?,
            "steps" => self.steps = parse_list(v, parse_usize)?,
            "ntau" | "n_tau" => self.n_tau = parse_usize(v)?,
            "tfinal" | "t_final" => self.t_final = parse_real(v)?,
            "restart_period" => {
                self.restart_period = match v {
                    "" | "none" | "off" => None,
                    _ => Some(parse_real(v)?),
                }
            }
            "x0" => self.x0 = parse_vec3(v)?,
            "v0" => self.v0 = parse_vec3(v)?,
            "seed" => self.seed = v.parse().map_err(|_| Error::Config(format!("bad seed '{v}'")))?,
            "mode" => {
                self.mode = match v {
                    "single" | "single-particle" => Mode::SingleParticle,
                    "vp" | "vlasov-poisson" => Mode::VlasovPoisson,
                    _ => return Err(Error::Config(format!("unknown mode '{v}'"))),
                }
            }
            "oracle" => self.oracle = v.parse()?,
            "out" => self.out = Some(PathBuf::from(v)),
            "mesh" => {
                let m = parse_list(v, parse_usize)?;
                if m.len() != 3 {
                    return Err(Error::Config(format!("mesh needs three counts, got '{v}'")));
                }
                self.mesh = [m[0], m[1], m[2]];
            }
            "ppc" | "particles_per_cell" => self.particles_per_cell = parse_usize(v)?,
            "eta" => self.eta = parse_real(v)?,
            "k_mode" | "kmode" => self.k_mode = v.parse().map_err(|_| Error::Config(format!("bad mode number '{v}'")))?,
            "samples_per_step" => self.samples_per_step = parse_usize(v)?,
            "mm_start" | "start" => {
                self.mm_start = match v {
                    "euler" => StartRule::Euler,
                    "heun" => StartRule::Heun,
                    "heun-on-restart" => StartRule::HeunOnRestart,
                    _ => return Err(Error::Config(format!("unknown start rule '{v}'"))),
                }
            }
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Canonical key-value rendering, also the input of [`Self::hash`].
    pub fn canonical(&self) -> String {
        let mut m = BTreeMap::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        m.insert("scheme", self.scheme.to_string());
        m.insert("field", self.field.clone());
        m.insert("eps", list(&self.eps));
        m.insert("steps", self.steps.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
        m.insert("ntau", self.n_tau.to_string());
        m.insert("tfinal", format!("{:e}", self.t_final));
        m.insert("restart_period", self.restart_period.map_or("none".into(), |p| format!("{p:e}")));
        m.insert("x0", list(self.x0.as_slice()));
        m.insert("v0", list(self.v0.as_slice()));
        m.insert("seed", self.seed.to_string());
        m.insert("mode", match self.mode {
            Mode::SingleParticle => "single",
            Mode::VlasovPoisson => "vp",
        }
        .to_string());
        m.insert("oracle", self.oracle.to_string());
        m.insert("mesh", format!("{},{},{}", self.mesh[0], self.mesh[1], self.mesh[2]));
        m.insert("ppc", self.particles_per_cell.to_string());
        m.insert("eta", format!("{:e}", self.eta));
        m.insert("k_mode", self.k_mode.to_string());
        m.insert("samples_per_step", self.samples_per_step.to_string());
        m.insert("mm_start", self.mm_start.name().into());
        m.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn field_set(&self) -> Result<FieldSet> {
        make_field(FieldCatalogEntry::parse(&self.field)?)
    }

    pub fn initial_state(&self) -> ParticleState {
        ParticleState::new(self.x0, self.v0)
    }

    /// Rejects scheme/field combinations the integrators cannot handle.
    pub fn validate(&self, fs: &FieldSet) -> Result<()> {
        let constant = fs.flags().constant_intensity;
        match self.scheme {
            Scheme::Mrc | Scheme::Tsf | Scheme::Mm | Scheme::Limit if !constant => Err(Error::Config(format!(
                "scheme {} needs a unit-intensity field, '{}' varies",
                self.scheme,
                fs.name()
            ))),
            Scheme::MmReparam if self.mode == Mode::VlasovPoisson => Err(Error::Config(
                "the reparametrized scheme runs with an external electric field only".into(),
            )),
            Scheme::Tsf | Scheme::Mm if self.mode == Mode::VlasovPoisson => Err(Error::Config(format!(
                "scheme {} is not coupled to the Poisson solver; use mrc",
                self.scheme
            ))),
            _ if self.n_tau < 2 || !self.n_tau.is_power_of_two() => {
                Err(Error::Config(format!("ntau must be a power of two, got {}", self.n_tau)))
            }
            _ if self.steps.contains(&0) => Err(Error::Config("step counts must be positive".into())),
            _ if self.eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) => {
                Err(Error::Config("every eps must lie in (0, 1]".into()))
            }
            _ => Ok(()),
        }
    }
}
