use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub paths: Paths,
    pub algorithm: Algorithm,
    pub sampling: Sampling,
    pub cvs: Cvs,
    pub exact: Exact,
    pub trotter: TrotterStudy,
    pub resources: Resources,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub fcidump: Option<PathBuf>,
    pub dipole: Option<PathBuf>,
    /// Precomputed factorization from `factorize`.
    pub cdf: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { fcidump: None, dipole: None, cdf: None, out: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Algorithm {
    /// Number of two-body fragments; defaults to the orbital count.
    pub fragments: Option<usize>,
    /// Trotter step in 1/Ha. When absent, Δ = sqrt(η/y3).
    pub delta: Option<f64>,
    pub y3: f64,
    pub order: u8,
    pub randomized: bool,
    pub merge_rotations: bool,
    pub double_phase: bool,
    /// Independent randomized trajectories averaged per series.
    pub trajectories: usize,
    pub max_iter: usize,
}

impl Default for Algorithm {
    fn default() -> Self {
        Algorithm {
            fragments: None,
            delta: None,
            y3: 1.0,
            order: 2,
            randomized: true,
            merge_rotations: true,
            double_phase: true,
            trajectories: 1,
            max_iter: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    Value(f64),
    Keyword(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sampling {
    pub shots: u64,
    /// Allocation exponent or "optimize".
    pub alpha: AlphaSetting,
    pub eta: f64,
    /// ‖H‖_ω in Ha.
    pub h_norm: f64,
    /// Sampling step; defaults to π/(2‖H‖_ω).
    pub tau: Option<f64>,
    /// Maximal evolution index; the series holds 2·j_max samples.
    pub j_max: Option<usize>,
    /// Truncation target used when j_max is absent.
    pub eps_trunc: f64,
    pub eps_meas: f64,
    pub components: Vec<String>,
    pub physical: bool,
    pub omega_min: f64,
    pub omega_max: Option<f64>,
    pub points: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            shots: 10_000,
            alpha: AlphaSetting::Value(1.0),
            eta: 0.05,
            h_norm: 3.0,
            tau: None,
            j_max: None,
            eps_trunc: 1e-3,
            eps_meas: 1e-3,
            components: vec!["x".into(), "y".into(), "z".into()],
            physical: false,
            omega_min: 0.0,
            omega_max: None,
            points: 512,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Cvs {
    /// 1-based core orbital indices; empty disables the transform.
    pub core: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Exact {
    /// Eigenvalues written to the JSON export.
    pub states: usize,
    /// Lanczos steps for the Krylov measure above the dense limit.
    pub krylov_steps: usize,
}

impl Default for Exact {
    fn default() -> Self {
        Exact { states: 25, krylov_steps: 600 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrotterStudy {
    /// Step sizes; each must divide 1 for the Y₃ estimator.
    pub deltas: Vec<f64>,
    pub state: usize,
    pub target: f64,
}

impl Default for TrotterStudy {
    fn default() -> Self {
        TrotterStudy { deltas: vec![0.5, 0.25, 0.125, 0.0625], state: 0, target: 0.05 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Resources {
    pub n: Vec<usize>,
    pub fragments: Option<usize>,
    pub determinants: f64,
    pub shots: f64,
    pub alpha: f64,
    pub eta: f64,
    pub h_norm: f64,
    pub delta: Option<f64>,
    pub y3: f64,
    pub j_max: usize,
    pub eps_rot: f64,
    pub eps_meas: f64,
    pub order: u8,
    pub double_phase: bool,
    pub merge_rotations: bool,
    pub bliss: bool,
    pub clock_hz: f64,
    /// Table rows used to calibrate the active-volume model.
    pub calibration_rows: Vec<usize>,
}

impl Default for Resources {
    fn default() -> Self {
        Resources {
            n: vec![6, 10, 12, 14, 16, 18, 20, 24, 28],
            fragments: None,
            determinants: 1e4,
            shots: 2500.0,
            alpha: 1.3384,
            eta: 0.05,
            h_norm: 2.0,
            delta: None,
            y3: 1.0,
            j_max: 100,
            eps_rot: 1e-3,
            eps_meas: 1e-3,
            order: 2,
            double_phase: true,
            merge_rotations: true,
            bliss: true,
            clock_hz: 1e6,
            calibration_rows: vec![10, 18],
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>().map_err(|e| usage(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.sampling;
        if !(s.eta > 0.0 && s.h_norm > 0.0 && s.eps_trunc > 0.0 && s.eps_meas > 0.0) {
            return Err(usage("sampling.eta, h_norm, eps_trunc and eps_meas must be positive"));
        }
        if s.tau.is_some_and(|t| !(t > 0.0)) || s.j_max == Some(0) || s.shots == 0 || s.points < 2 {
            return Err(usage("sampling.tau, j_max, shots must be positive and points ≥ 2"));
        }
        if let AlphaSetting::Keyword(k) = &s.alpha {
            if k != "optimize" {
                return Err(usage(format!("sampling.alpha must be a number or \"optimize\", got {k:?}")));
            }
        }
        let a = &self.algorithm;
        if a.order != 1 && a.order != 2 {
            return Err(usage(format!("algorithm.order must be 1 or 2, got {}", a.order)));
        }
        if a.delta.is_some_and(|d| !(d > 0.0)) || !(a.y3 > 0.0) || a.trajectories == 0 {
            return Err(usage("algorithm.delta, y3 and trajectories must be positive"));
        }
        if self.trotter.deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(usage("trotter.deltas must be positive"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the effective configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.out = Paths::default().out;
        let text = toml::to_string(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }

    pub fn tau(&self) -> f64 {
        self.sampling.tau.unwrap_or(std::f64::consts::PI / (2.0 * self.sampling.h_norm))
    }

    pub fn fcidump(&self) -> Result<&Path, CliError> {
        self.paths.fcidump.as_deref().ok_or_else(|| usage("paths.fcidump is required"))
    }

    pub fn dipole(&self) -> Result<&Path, CliError> {
        self.paths.dipole.as_deref().ok_or_else(|| usage("paths.dipole is required"))
    }
}

/// `section.key=value`, the value parsed as a TOML literal or else taken as a string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| usage(format!("override {spec:?} is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, sections) = parts.split_last().unwrap();
    let mut cur = table;
    for s in sections {
        cur = cur
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| usage(format!("{s} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
