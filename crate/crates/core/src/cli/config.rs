//! Run configuration: JSON document, flag overrides and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classical::ClassicalOptions;
use crate::error::{Error, Result};
use crate::liouvillian::{SteadyStateOptions, TruncationPolicy};
use crate::params::ModelParams;
use crate::semiclassical::SdeConfig;
use crate::wigner::{PhaseGrid, DEFAULT_PROMINENCE};

pub const OUT_DIR_ENV: &str = "QVDP_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "qvdp-out";

/// Default coupling grid: 25 points, denser where the split state forms.
pub const DEFAULT_EPS_GRID: [f64; 25] = [
    0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.75, 1.8, 1.85, 1.9,
    1.95, 1.97, 1.99,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Quantum,
    Classical,
    Sde,
    Compare,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::Quantum => "quantum",
            Model::Classical => "classical",
            Model::Sde => "sde",
            Model::Compare => "compare",
        }
    }
}

/// Explicit list or inclusive `start:stop:count` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsGrid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Default for EpsGrid {
    fn default() -> Self {
        EpsGrid::List(DEFAULT_EPS_GRID.to_vec())
    }
}

impl EpsGrid {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            EpsGrid::List(ref v) => v.clone(),
            EpsGrid::Range { start, count: 1, .. } => vec![start],
            EpsGrid::Range { start, stop, count } => {
                (0..count).map(|i| start + (stop - start) * i as f64 / (count - 1) as f64).collect()
            }
        }
    }

    pub fn parse_range(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidConfig(format!("eps range must be start:stop:count, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start = parts[0].trim().parse().map_err(|_| bad())?;
        let stop = parts[1].trim().parse().map_err(|_| bad())?;
        let count = parts[2].trim().parse().map_err(|_| bad())?;
        Ok(EpsGrid::Range { start, stop, count })
    }
}

/// Square phase-space window `[min, max]²` sampled with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        let g = PhaseGrid::default();
        Self { min: g.x_min, max: g.x_max, n: g.nx }
    }
}

impl GridSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidConfig(format!("grid must be xmin:xmax:n, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Self {
            min: parts[0].trim().parse().map_err(|_| bad())?,
            max: parts[1].trim().parse().map_err(|_| bad())?,
            n: parts[2].trim().parse().map_err(|_| bad())?,
        })
    }

    pub fn phase_grid(&self) -> Result<PhaseGrid> {
        PhaseGrid::new(self.min, self.max, self.min, self.max, self.n, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    pub params: ModelParams,
    pub eps_grid: EpsGrid,
    /// Fock levels per mode for the master equation.
    pub fock_dim: usize,
    /// Upper bound when the truncation check asks for more levels; equal to
    /// `fock_dim` disables the increase.
    pub max_fock_dim: usize,
    pub grid: GridSpec,
    /// Steady-state residual target.
    pub tol: f64,
    pub sde: SdeConfig,
    pub classical: ClassicalOptions,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub wigner: bool,
    pub dump_samples: bool,
    /// Prominence for Wigner marginals and sample histograms.
    pub prominence: f64,
    pub gnuplot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sde = SdeConfig::default();
        Self {
            model: Model::Quantum,
            params: ModelParams::default(),
            eps_grid: EpsGrid::default(),
            fock_dim: TruncationPolicy::default().n_levels,
            max_fock_dim: TruncationPolicy::default().max_levels,
            grid: GridSpec::default(),
            tol: SteadyStateOptions::default().tol,
            sde,
            classical: ClassicalOptions::default(),
            seed: sde.seed,
            out_dir: None,
            jobs: None,
            wigner: false,
            dump_samples: false,
            prominence: DEFAULT_PROMINENCE,
            gnuplot: false,
        }
    }
}

/// Manifest files carry the resolved run configuration under `config`.
#[derive(Deserialize)]
struct ManifestShim {
    config: RunConfig,
}

impl RunConfig {
    /// Reads a configuration document, or the `config` section of a run
    /// manifest.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let parsed = if value.get("config").is_some() {
            serde_json::from_value::<ManifestShim>(value).map(|m| m.config)
        } else {
            serde_json::from_value::<RunConfig>(value)
        };
        parsed.map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn eps_values(&self) -> Vec<f64> {
        self.eps_grid.values()
    }

    pub fn policy(&self) -> TruncationPolicy {
        TruncationPolicy { n_levels: self.fock_dim, max_levels: self.max_fock_dim.max(self.fock_dim), step: 2 }
    }

    pub fn steady_options(&self) -> SteadyStateOptions {
        SteadyStateOptions { tol: self.tol, ..Default::default() }
    }

    /// SDE settings with the run seed applied.
    pub fn sde_config(&self) -> SdeConfig {
        SdeConfig { seed: self.seed, ..self.sde }
    }

    /// Output directory: configured, else `$QVDP_OUT_DIR`, else `qvdp-out`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// Checks everything that can be checked before any numerics run.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let eps = self.eps_values();
        if eps.is_empty() {
            return bad("empty eps grid".into());
        }
        if let Some(e) = eps.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return bad(format!("eps values must be finite and >= 0, got {e}"));
        }
        for &e in &eps {
            self.params.with_eps(e).validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        }
        if self.fock_dim < 2 {
            return bad(format!("fock_dim must be >= 2, got {}", self.fock_dim));
        }
        self.grid.phase_grid().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if !(self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if !(self.prominence > 0.0) {
            return bad(format!("prominence must be > 0, got {}", self.prominence));
        }
        if self.jobs == Some(0) {
            return bad("jobs must be >= 1".into());
        }
        let c = &self.classical;
        if !(c.dt > 0.0 && c.t_final > 0.0 && c.transient_fraction >= 0.0 && c.transient_fraction < 1.0) {
            return bad(format!("bad classical options {c:?}"));
        }
        if matches!(self.model, Model::Sde | Model::Compare) {
            let top = eps.iter().copied().fold(0.0, f64::max);
            self.sde_config()
                .validate(&self.params.with_eps(top))
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(EpsGrid::parse_range("0:1:3").unwrap().values(), vec![0.0, 0.5, 1.0]);
        assert_eq!(EpsGrid::parse_range("1.3:2:1").unwrap().values(), vec![1.3]);
        assert!(EpsGrid::parse_range("0:1:0").unwrap().values().is_empty());
        assert!(EpsGrid::parse_range("0:1").is_err());
        assert_eq!(EpsGrid::default().values().len(), 25);
        let g = GridSpec::parse("-3:3:101").unwrap();
        assert_eq!((g.min, g.max, g.n), (-3.0, 3.0, 101));
        assert!(GridSpec::parse("a:3:1").is_err());
    }

    #[test]
    fn json_roundtrip_and_partial_documents() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: RunConfig =
            serde_json::from_str(r#"{"model":"sde","eps_grid":{"start":0,"stop":1,"count":2}}"#).unwrap();
        assert_eq!(partial.model, Model::Sde);
        assert_eq!(partial.eps_values(), vec![0.0, 1.0]);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn validation_catches_usage_errors() {
        let ok = RunConfig::default();
        assert!(ok.validate().is_ok());
        let cases = [
            RunConfig { eps_grid: EpsGrid::List(vec![]), ..ok.clone() },
            RunConfig { eps_grid: EpsGrid::List(vec![-1.0]), ..ok.clone() },
            RunConfig { fock_dim: 1, ..ok.clone() },
            RunConfig { tol: 0.0, ..ok.clone() },
            RunConfig { jobs: Some(0), ..ok.clone() },
            RunConfig { grid: GridSpec { min: 1.0, max: -1.0, n: 50 }, ..ok.clone() },
        ];
        for c in cases {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))), "{c:?}");
        }
    }
}
