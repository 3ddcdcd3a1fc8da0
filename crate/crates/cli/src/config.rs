//! JSON run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vmsrom::fom::NewtonConfig;
use vmsrom::operators::DEFAULT_C_INV;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Consistent,
    NonConsistent,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Consistent => "consistent",
            Variant::NonConsistent => "non-consistent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
}

fn default_halvings() -> usize {
    NewtonConfig::default().max_halvings
}

impl Default for NewtonSettings {
    fn default() -> Self {
        let n = NewtonConfig::default();
        NewtonSettings {
            abs_tol: n.abs_tol,
            rel_tol: n.rel_tol,
            max_iter: n.max_iter,
            max_halvings: n.max_halvings,
        }
    }
}

impl From<NewtonSettings> for NewtonConfig {
    fn from(s: NewtonSettings) -> Self {
        NewtonConfig {
            abs_tol: s.abs_tol,
            rel_tol: s.rel_tol,
            max_iter: s.max_iter,
            max_halvings: s.max_halvings,
        }
    }
}

fn one() -> usize {
    1
}
fn ten() -> usize {
    10
}
fn yes() -> bool {
    true
}
fn c_inv() -> f64 {
    DEFAULT_C_INV
}
fn consistent() -> Variant {
    Variant::Consistent
}

/// Settings shared by every pipeline stage. Relative paths are taken relative to
/// the directory holding the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: PathBuf,
    pub nu: f64,
    /// Peak of the parabolic inflow profile.
    pub inlet_peak: f64,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub record_from: usize,
    #[serde(default = "ten")]
    pub ramp_steps: usize,
    #[serde(default = "c_inv")]
    pub c_inv: f64,
    #[serde(default = "ten")]
    pub n: usize,
    #[serde(default = "consistent")]
    pub variant: Variant,
    #[serde(default = "yes")]
    pub with_supremizers: bool,
    pub output_dir: PathBuf,
    /// Snapshot file, `<output_dir>/snapshots.bin` when absent.
    #[serde(default)]
    pub snapshots: Option<PathBuf>,
    /// Basis file, `<output_dir>/basis.bin` when absent.
    #[serde(default)]
    pub basis: Option<PathBuf>,
    /// Reduced time step, the full-order one when absent.
    #[serde(default)]
    pub rom_dt: Option<f64>,
    /// Replace the POD basis by every free dof (small meshes only).
    #[serde(default)]
    pub identity_basis: bool,
    /// Same as `--serial`.
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub newton: NewtonSettings,
    /// Series name in the error tables.
    #[serde(default)]
    pub label: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path, allow_singular: bool) -> Result<(Self, String), CliError> {
        let (mut config, hash): (RunConfig, String) = read_json(path)?;
        config.validate(allow_singular)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.mesh);
        resolve(&mut config.output_dir);
        config.snapshots.as_mut().map(resolve);
        config.basis.as_mut().map(resolve);
        Ok((config, hash))
    }

    pub fn validate(&self, allow_singular: bool) -> Result<(), CliError> {
        let positive = [
            ("nu", self.nu),
            ("inlet_peak", self.inlet_peak),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("c_inv", self.c_inv),
            ("rom_dt", self.rom_dt.unwrap_or(1.0)),
            ("newton.abs_tol", self.newton.abs_tol),
            ("newton.rel_tol", self.newton.rel_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("stride", self.stride),
            ("n", self.n),
            ("newton.max_iter", self.newton.max_iter),
        ] {
            if v == 0 {
                return Err(CliError::Config(format!("{name} must be positive")));
            }
        }
        if self.variant == Variant::NonConsistent && !self.with_supremizers && !allow_singular {
            return Err(CliError::Config(
                "the non-consistent ROM without supremizers is singular; pass --allow-singular to run it anyway"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.snapshots
            .clone()
            .unwrap_or_else(|| self.output_dir.join("snapshots.bin"))
    }

    pub fn basis_path(&self) -> PathBuf {
        self.basis
            .clone()
            .unwrap_or_else(|| self.output_dir.join("basis.bin"))
    }

    pub fn trajectory_path(&self) -> PathBuf {
        self.output_dir.join("trajectory.bin")
    }

    pub fn series_label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            let sup = if self.with_supremizers {
                "sup"
            } else {
                "nosup"
            };
            format!("{}-{sup}", self.variant)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRun {
    pub label: String,
    pub config: PathBuf,
}

/// Runs whose reduced trajectories are tabulated together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub output_dir: PathBuf,
    pub runs: Vec<CompareRun>,
}

impl CompareConfig {
    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let (mut config, hash): (CompareConfig, String) = read_json(path)?;
        if config.runs.is_empty() {
            return Err(CliError::Config("compare needs at least one run".into()));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        for r in &mut config.runs {
            if r.config.is_relative() {
                r.config = base.join(&r.config);
            }
        }
        Ok((config, hash))
    }
}

/// Parses `path` and hashes its normalized contents.
fn read_json<T: Serialize + for<'de> Deserialize<'de>>(
    path: &Path,
) -> Result<(T, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value: T = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let normalized = serde_json::to_string(&value).expect("config serializes");
    Ok((value, sha256_hex(normalized.as_bytes())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
