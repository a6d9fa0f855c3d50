//! Command-line front end of the `qvdp` binary.
//!
//! Exit codes: 0 success, 1 numerical or I/O failure, 2 usage error.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::Parser;

use crate::error::{Error, Result};

pub use commands::{join_compare, CompareRow, QuantumRow, Report};
pub use config::{EpsGrid, GridSpec, Model, RunConfig};
pub use output::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "qvdp", version, about = "Steady states and bifurcations of conjugately coupled quantum van der Pol oscillators")]
pub struct Cli {
    /// Which model to run.
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    /// JSON run configuration, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub k2: Option<f64>,
    /// Coupling values, comma separated or repeated.
    #[arg(long, value_delimiter = ',', num_args = 1.., conflicts_with = "eps_range")]
    pub eps: Option<Vec<f64>>,
    /// Inclusive range `start:stop:count`.
    #[arg(long)]
    pub eps_range: Option<String>,
    /// Fock levels per mode (disables the automatic increase).
    #[arg(long)]
    pub fock_dim: Option<usize>,
    /// Square phase-space grid `xmin:xmax:n`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Steady-state residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Time step of the classical and noisy integrators.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Integration horizon of the classical and noisy integrators.
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Number of noisy trajectories.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory (default: $QVDP_OUT_DIR, else ./qvdp-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-coupling Wigner grids, marginals and Fock populations.
    #[arg(long)]
    pub wigner: bool,
    /// Write pooled steady-window samples of the noisy model.
    #[arg(long)]
    pub dump_samples: bool,
    /// Minimum peak prominence as a fraction of the tallest point.
    #[arg(long)]
    pub prominence: Option<f64>,
    /// Also write a gnuplot script stub.
    #[arg(long)]
    pub gnuplot: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl Cli {
    /// Configuration file (if any) with every given flag applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.model {
            c.model = m;
        }
        if let Some(v) = self.omega {
            c.params.omega = v;
        }
        if let Some(v) = self.k1 {
            c.params.k1 = v;
        }
        if let Some(v) = self.k2 {
            c.params.k2 = v;
        }
        if let Some(v) = &self.eps {
            c.eps_grid = EpsGrid::List(v.clone());
        }
        if let Some(s) = &self.eps_range {
            c.eps_grid = EpsGrid::parse_range(s)?;
        }
        if let Some(n) = self.fock_dim {
            c.fock_dim = n;
            c.max_fock_dim = n;
        }
        if let Some(s) = &self.grid {
            c.grid = GridSpec::parse(s)?;
        }
        if let Some(v) = self.tol {
            c.tol = v;
        }
        if let Some(v) = self.dt {
            c.classical.dt = v;
            c.sde.dt = v;
        }
        if let Some(v) = self.t_final {
            c.classical.t_final = v;
            c.sde.t_final = v;
        }
        if let Some(v) = self.runs {
            c.sde.n_trajectories = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.sde.seed = c.seed;
        if let Some(v) = self.jobs {
            c.jobs = Some(v);
        }
        if let Some(v) = &self.out {
            c.out_dir = Some(v.clone());
        }
        c.wigner |= self.wigner;
        c.dump_samples |= self.dump_samples;
        c.gnuplot |= self.gnuplot;
        if let Some(v) = self.prominence {
            c.prominence = v;
        }
        c.out_dir = Some(c.resolved_out_dir());
        c.validate()?;
        Ok(c)
    }
}

/// Runs a resolved configuration and writes outputs plus the manifest.
pub fn execute(cfg: &RunConfig, command: Vec<String>) -> Result<RunManifest> {
    let started_at = output::now_rfc3339();
    let dir = cfg.resolved_out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::InvalidState(format!("{}: {e}", dir.display())))?;
    let mut report = Report::default();
    let mut work = || -> Result<()> {
        match cfg.model {
            Model::Quantum => commands::cmd_quantum_sweep(cfg, &dir, &mut report).map(drop),
            Model::Classical => commands::cmd_classical(cfg, &dir, &mut report).map(drop),
            Model::Sde => commands::cmd_sde(cfg, &dir, &mut report).map(drop),
            Model::Compare => commands::cmd_compare(cfg, &dir, &mut report).map(drop),
        }
    };
    match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    }
    if cfg.gnuplot {
        output::write_atomic(&dir.join("plot.gp"), commands::gnuplot_stub(cfg).as_bytes())?;
        report.outputs.push(PathBuf::from("plot.gp"));
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let manifest = RunManifest {
        tool: "qvdp",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config: cfg.clone(),
        started_at,
        finished_at: output::now_rfc3339(),
        outputs: report.outputs,
        warnings: report.warnings,
        residuals: report.residuals,
        extra: serde_json::Value::Object(report.extra),
    };
    manifest.write(&dir)?;
    Ok(manifest)
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::Empty(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let command = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = cli.resolve().and_then(|cfg| execute(&cfg, command));
    match result {
        Ok(m) => {
            let dir = m.config.resolved_out_dir();
            for o in &m.outputs {
                println!("{}", dir.join(o).display());
            }
            println!("{}", dir.join("manifest.json").display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("qvdp: error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("qvdp").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"model":"classical","params":{"omega":3.0},"seed":5,"eps_grid":[0.5]}"#).unwrap();
        let cli = parse(&["--config", path.to_str().unwrap(), "--seed", "9", "--k1", "0.8", "--out", "x"]);
        let c = cli.resolve().unwrap();
        assert_eq!(c.model, Model::Classical);
        assert_eq!((c.params.omega, c.params.k1, c.seed, c.sde.seed), (3.0, 0.8, 9, 9));
        assert_eq!(c.eps_values(), vec![0.5]);
        assert_eq!(c.out_dir, Some(PathBuf::from("x")));
    }

    #[test]
    fn usage_errors_map_to_exit_two() {
        assert_eq!(main_with_args(["qvdp", "--bogus"]), EXIT_USAGE);
        assert_eq!(main_with_args(["qvdp", "--eps-range", "0:1:0", "--out", "/nonexistent/never"]), EXIT_USAGE);
        assert_eq!(main_with_args(["qvdp", "--grid", "1:2"]), EXIT_USAGE);
        assert_eq!(main_with_args(["qvdp", "--eps", "1", "--eps-range", "0:1:2"]), EXIT_USAGE);
        let e = parse(&["--fock-dim", "1"]).resolve().unwrap_err();
        assert_eq!(exit_code(&e), EXIT_USAGE);
    }

    #[test]
    fn eps_list_and_fock_dim_flags() {
        let c = parse(&["--eps", "0.1,1.3", "--eps", "1.99", "--fock-dim", "6", "--out", "o"]).resolve().unwrap();
        assert_eq!(c.eps_values(), vec![0.1, 1.3, 1.99]);
        let g = parse(&["--grid", "-3:3:61", "--out", "o"]).resolve().unwrap().grid;
        assert_eq!((g.min, g.max, g.n), (-3.0, 3.0, 61));
        assert_eq!((c.fock_dim, c.max_fock_dim), (6, 6));
    }
}
