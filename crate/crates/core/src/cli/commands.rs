//! The four run modes. Each returns the rows it computed and writes its CSVs
//! into the output directory.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::classical::{bifurcation_diagram, hss_thresholds, BifurcationRow};
use crate::error::{Error, Result};
use crate::liouvillian::solve_point;
use crate::semiclassical::{run_ensemble, summarize, Histogram, NoisyRow};
use crate::wigner::{classify, wigner_transform_auto, StateLabel, WignerGrid};

use super::config::RunConfig;
use super::output::{eps_tag, ResidualEntry, Table};

/// What a command produced besides its rows.
#[derive(Debug, Default)]
pub struct Report {
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub residuals: Vec<ResidualEntry>,
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Report {
    fn write(&mut self, table: &Table, dir: &Path, name: &str) -> Result<()> {
        let path = dir.join(name);
        table.write(&path)?;
        self.outputs.push(PathBuf::from(name));
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantumRow {
    pub eps: f64,
    pub mean_n1: f64,
    pub mean_n2: f64,
    pub delta_y: f64,
    pub label: StateLabel,
    pub ambiguous: bool,
    pub residual: f64,
    pub top_level_pop: f64,
    pub n_levels: usize,
    /// Population of Fock levels `n ≤ 3` in the reduced state.
    pub pop_le3: f64,
    pub wigner_integral: f64,
    /// Mode-1 Fock populations.
    #[serde(skip)]
    pub populations: Vec<f64>,
}

struct QuantumPointOut {
    row: QuantumRow,
    wigner: WignerGrid,
    truncation_warning: bool,
}

fn quantum_point(cfg: &RunConfig, eps: f64) -> Result<QuantumPointOut> {
    let p = cfg.params.with_eps(eps);
    let q = solve_point(&p, &cfg.policy(), &cfg.steady_options())?;
    let w = wigner_transform_auto(&q.reduced, &cfg.grid.phase_grid()?, 2)?;
    let c = classify(&w, cfg.prominence)?;
    let m = q.reduced.matrix();
    let populations: Vec<f64> = (0..m.nrows()).map(|n| m[(n, n)].re).collect();
    let pop_le3 = populations.iter().take(4).sum();
    Ok(QuantumPointOut {
        row: QuantumRow {
            eps,
            mean_n1: q.mean_n1,
            mean_n2: q.mean_n2,
            delta_y: c.delta_y,
            label: c.label,
            ambiguous: c.ambiguous,
            residual: q.steady.residual,
            top_level_pop: q.steady.top_level_population,
            n_levels: q.n_levels,
            pop_le3,
            wigner_integral: w.integral(),
            populations,
        },
        truncation_warning: q.steady.truncation_warning,
        wigner: w,
    })
}

/// Steady states, Wigner classification and photon numbers over the grid.
pub fn quantum_sweep(cfg: &RunConfig, report: &mut Report) -> Result<(Vec<QuantumRow>, Vec<WignerGrid>)> {
    let eps = cfg.eps_values();
    if eps.is_empty() {
        return Err(Error::Empty("eps grid"));
    }
    let points: Vec<QuantumPointOut> = eps.par_iter().map(|&e| quantum_point(cfg, e)).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(points.len());
    let mut grids = Vec::with_capacity(points.len());
    for pt in points {
        let r = &pt.row;
        if pt.truncation_warning {
            report.warnings.push(format!(
                "eps={}: top Fock level holds {:.2e} at N={}",
                r.eps, r.top_level_pop, r.n_levels
            ));
        }
        if pt.wigner.boundary_warning() {
            report.warnings.push(format!("eps={}: Wigner function not negligible on the grid boundary", r.eps));
        }
        if r.ambiguous {
            report.warnings.push(format!("eps={}: classification {} is ambiguous", r.eps, r.label));
        }
        report.residuals.push(ResidualEntry { eps: r.eps, residual: r.residual, n_levels: r.n_levels });
        rows.push(pt.row);
        grids.push(pt.wigner);
    }
    Ok((rows, grids))
}

pub fn cmd_quantum_sweep(cfg: &RunConfig, dir: &Path, report: &mut Report) -> Result<Vec<QuantumRow>> {
    let (rows, grids) = quantum_sweep(cfg, report)?;
    let mut t = Table::new(
        "quantum_sweep",
        1,
        &[
            "eps",
            "mean_n1",
            "mean_n2",
            "delta_y",
            "label",
            "ambiguous",
            "residual",
            "top_level_pop",
            "n_levels",
            "pop_le3",
            "wigner_integral",
        ],
    );
    for r in &rows {
        t.push(vec![
            r.eps.into(),
            r.mean_n1.into(),
            r.mean_n2.into(),
            r.delta_y.into(),
            r.label.as_str().into(),
            r.ambiguous.into(),
            r.residual.into(),
            r.top_level_pop.into(),
            r.n_levels.into(),
            r.pop_le3.into(),
            r.wigner_integral.into(),
        ]);
    }
    report.write(&t, dir, "quantum_sweep.csv")?;
    if cfg.wigner {
        for (r, w) in rows.iter().zip(&grids) {
            write_wigner(w, dir, &eps_tag(r.eps), report)?;
            let mut f = Table::new("fock_populations", 1, &["n", "population"]);
            for (n, p) in r.populations.iter().enumerate() {
                f.push(vec![n.into(), (*p).into()]);
            }
            report.write(&f, dir, &format!("fock_{}.csv", eps_tag(r.eps)))?;
        }
    }
    Ok(rows)
}

fn write_wigner(w: &WignerGrid, dir: &Path, tag: &str, report: &mut Report) -> Result<()> {
    let (xs, ys) = (w.grid.xs(), w.grid.ys());
    let mut t = Table::new("wigner", 1, &["x", "y", "w"]);
    for (j, &y) in ys.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            t.push(vec![x.into(), y.into(), w.at(i, j).into()]);
        }
    }
    report.write(&t, dir, &format!("wigner_{tag}.csv"))?;
    let mut m = Table::new("wigner_marginals", 1, &["q", "proj_x", "proj_y"]);
    // the default grids are square, so one axis column serves both marginals
    for (k, q) in xs.iter().enumerate() {
        let py = w.proj_y.get(k).copied().unwrap_or(f64::NAN);
        m.push(vec![(*q).into(), w.proj_x[k].into(), py.into()]);
    }
    report.write(&m, dir, &format!("marginals_{tag}.csv"))
}

pub fn cmd_classical(cfg: &RunConfig, dir: &Path, report: &mut Report) -> Result<Vec<BifurcationRow>> {
    let eps = cfg.eps_values();
    let rows = bifurcation_diagram(&cfg.params, &eps, &cfg.classical)?;
    let th = hss_thresholds(&cfg.params, 2.0 * cfg.params.omega, 4000, 1e-7)?;
    report.extra.insert("eps_hopf_located".into(), serde_json::json!(th.hopf));
    report.extra.insert("eps_pitchfork_located".into(), serde_json::json!(th.pitchfork));
    report.extra.insert("eps_hopf_closed_form".into(), serde_json::json!(cfg.params.eps_hopf()));
    report.extra.insert("eps_pitchfork_closed_form".into(), serde_json::json!(cfg.params.eps_pitchfork()));
    let mut t = Table::new(
        "classical_bifurcation",
        1,
        &[
            "eps",
            "hss_stable",
            "ihss_exists",
            "ihss_stable",
            "x_star",
            "y_star",
            "osc_min_x1",
            "osc_max_x1",
            "regime",
            "near_singular",
        ],
    );
    for r in &rows {
        if r.near_singular {
            report.warnings.push(format!("eps={}: y* = {:.3e} is near the eps = omega singularity", r.eps, r.y_star));
        }
        t.push(vec![
            r.eps.into(),
            r.hss_stable.into(),
            r.ihss_exists.into(),
            r.ihss_stable.into(),
            r.x_star.into(),
            r.y_star.into(),
            r.osc_min_x1.into(),
            r.osc_max_x1.into(),
            r.regime.as_str().into(),
            r.near_singular.into(),
        ]);
    }
    report.write(&t, dir, "classical_bifurcation.csv")?;
    Ok(rows)
}

/// Ensemble summaries over the grid; optionally writes histograms and samples.
pub fn sde_sweep(cfg: &RunConfig, dir: Option<&Path>, report: &mut Report) -> Result<Vec<NoisyRow>> {
    let eps = cfg.eps_values();
    if eps.is_empty() {
        return Err(Error::Empty("eps grid"));
    }
    let sde = cfg.sde_config();
    let mut rows = Vec::with_capacity(eps.len());
    for &e in &eps {
        let ens = run_ensemble(&cfg.params.with_eps(e), &sde)?;
        let row = summarize(&ens, cfg.prominence)?;
        if row.ambiguous {
            report.warnings.push(format!("eps={e}: noisy classification {} is ambiguous", row.label));
        }
        if let Some(dir) = dir {
            let tag = eps_tag(e);
            let (hx, hy) = (Histogram::auto(&ens.x1())?, Histogram::auto(&ens.y1())?);
            let mut h = Table::new("sde_histogram", 1, &["axis", "center", "density"]);
            for (name, hist) in [("x1", &hx), ("y1", &hy)] {
                for (c, d) in hist.centers().into_iter().zip(hist.density()) {
                    h.push(vec![name.into(), c.into(), d.into()]);
                }
            }
            report.write(&h, dir, &format!("sde_hist_{tag}.csv"))?;
            if cfg.dump_samples {
                let mut s = Table::new("sde_samples", 1, &["x1", "y1", "x2", "y2"]);
                for p in &ens.samples {
                    s.push(vec![p.x1.into(), p.y1.into(), p.x2.into(), p.y2.into()]);
                }
                report.write(&s, dir, &format!("sde_samples_{tag}.csv"))?;
            }
        }
        rows.push(row);
    }
    report.extra.insert("sde_seed".into(), serde_json::json!(sde.seed));
    Ok(rows)
}

pub fn cmd_sde(cfg: &RunConfig, dir: &Path, report: &mut Report) -> Result<Vec<NoisyRow>> {
    let rows = sde_sweep(cfg, Some(dir), report)?;
    let mut t = Table::new(
        "sde_summary",
        1,
        &[
            "eps",
            "mean_amp_nc",
            "delta_y_nc",
            "n_traj",
            "dt",
            "label",
            "ambiguous",
            "traj_max_y1",
            "traj_min_y1",
            "hist_bin_width",
        ],
    );
    for r in &rows {
        t.push(vec![
            r.eps.into(),
            r.mean_amp_nc.into(),
            r.delta_y_nc.into(),
            r.n_traj.into(),
            r.dt.into(),
            r.label.as_str().into(),
            r.ambiguous.into(),
            r.traj_max_y1.into(),
            r.traj_min_y1.into(),
            r.hist_bin_width.into(),
        ]);
    }
    report.write(&t, dir, "sde_summary.csv")?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub eps: f64,
    pub mean_n1_quantum: f64,
    pub amp_nc: f64,
    pub delta_y_quantum: f64,
    pub delta_y_nc: f64,
    pub label_quantum: StateLabel,
    pub label_nc: StateLabel,
    /// `⟨a₁†a₁⟩ < amp_nc`.
    pub quantum_below: bool,
    pub labels_agree: bool,
}

/// Joins the two sweeps row by row; the couplings must coincide.
pub fn join_compare(quantum: &[QuantumRow], noisy: &[NoisyRow]) -> Result<Vec<CompareRow>> {
    if quantum.len() != noisy.len() {
        return Err(Error::DimensionMismatch { expected: quantum.len(), got: noisy.len() });
    }
    quantum
        .iter()
        .zip(noisy)
        .map(|(q, n)| {
            if q.eps != n.eps {
                return Err(Error::InvalidState(format!("grid mismatch: quantum eps {} vs noisy eps {}", q.eps, n.eps)));
            }
            Ok(CompareRow {
                eps: q.eps,
                mean_n1_quantum: q.mean_n1,
                amp_nc: n.mean_amp_nc,
                delta_y_quantum: q.delta_y,
                delta_y_nc: n.delta_y_nc,
                label_quantum: q.label,
                label_nc: n.label,
                quantum_below: q.mean_n1 < n.mean_amp_nc,
                labels_agree: q.label == n.label,
            })
        })
        .collect()
}

pub fn cmd_compare(cfg: &RunConfig, dir: &Path, report: &mut Report) -> Result<Vec<CompareRow>> {
    let quantum = cmd_quantum_sweep(cfg, dir, report)?;
    let noisy = cmd_sde(cfg, dir, report)?;
    let rows = join_compare(&quantum, &noisy)?;
    let mut t = Table::new(
        "compare",
        1,
        &[
            "eps",
            "mean_n1_quantum",
            "amp_nc",
            "delta_y_quantum",
            "delta_y_nc",
            "label_quantum",
            "label_nc",
            "quantum_below",
            "labels_agree",
        ],
    );
    for r in &rows {
        if !r.quantum_below {
            report.warnings.push(format!(
                "eps={}: quantum photon number {} is not below the noisy amplitude {}",
                r.eps, r.mean_n1_quantum, r.amp_nc
            ));
        }
        t.push(vec![
            r.eps.into(),
            r.mean_n1_quantum.into(),
            r.amp_nc.into(),
            r.delta_y_quantum.into(),
            r.delta_y_nc.into(),
            r.label_quantum.as_str().into(),
            r.label_nc.as_str().into(),
            r.quantum_below.into(),
            r.labels_agree.into(),
        ]);
    }
    report.write(&t, dir, "compare.csv")?;
    report.extra.insert("all_quantum_below".into(), serde_json::json!(rows.iter().all(|r| r.quantum_below)));
    Ok(rows)
}

/// Gnuplot script stub for the CSVs of one run.
pub fn gnuplot_stub(cfg: &RunConfig) -> String {
    let body = match cfg.model.as_str() {
        "quantum" => {
            "plot 'quantum_sweep.csv' using 1:2 with linespoints title '<n1>', \\\n     '' using 1:4 with linespoints title 'delta y'\n"
        }
        "classical" => {
            "plot 'classical_bifurcation.csv' using 1:7 with points title 'min x1', \\\n     '' using 1:8 with points title 'max x1', \\\n     '' using 1:5 with points title 'x*'\n"
        }
        "sde" => "plot 'sde_summary.csv' using 1:2 with linespoints title 'noisy amplitude', \\\n     '' using 1:3 with linespoints title 'delta y'\n",
        _ => "plot 'compare.csv' using 1:2 with linespoints title '<n1>', \\\n     '' using 1:3 with linespoints title 'noisy amplitude'\n",
    };
    format!("set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\nset xlabel 'eps / k1'\n{body}")
}
