//! Noisy classical model: truncated-Wigner drift and diagonal diffusion,
//! integrated as an Euler–Maruyama ensemble.
//!
//! Each trajectory `i` owns a `ChaCha8Rng` seeded from the master seed and
//! switched to stream `i`, so results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{ClassicalState, DIVERGENCE_NORM};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::wigner::{classify_profiles, StateLabel};

/// Half-width of the uniform box initial conditions are drawn from.
pub const INITIAL_BOX: f64 = 2.0;
/// Default histogram resolution.
pub const HISTOGRAM_BINS: usize = 101;
/// Below this many samples per bin the Freedman–Diaconis count is used.
pub const MIN_SAMPLES_PER_BIN: usize = 20;
/// `dt · max(ω, k1, ε)` may not exceed this.
pub const MAX_STEP_FRACTION: f64 = 0.1;

/// Drift of the noisy model:
/// `μ_x = ω y + [k1/2 − k2(r² − 1) − ε] x + ε y'`, `μ_y = −ω x + [k1/2 − k2(r² − 1)] y`.
pub fn drift(s: &ClassicalState, p: &ModelParams) -> ClassicalState {
    let (r1, r2) = s.radii_sq();
    let g = |r: f64| p.k1 / 2.0 - p.k2 * (r - 1.0);
    ClassicalState::new(
        p.omega * s.y1 + (g(r1) - p.eps) * s.x1 + p.eps * s.y2,
        -p.omega * s.x1 + g(r1) * s.y1,
        p.omega * s.y2 + (g(r2) - p.eps) * s.x2 + p.eps * s.y1,
        -p.omega * s.x2 + g(r2) * s.y2,
    )
}

/// `ν_j = k1/2 + k2(2 r_j² − 1) + ε/2` for both modes.
pub fn nu(s: &ClassicalState, p: &ModelParams) -> [f64; 2] {
    let (r1, r2) = s.radii_sq();
    let f = |r: f64| p.k1 / 2.0 + p.k2 * (2.0 * r - 1.0) + p.eps / 2.0;
    [f(r1), f(r2)]
}

/// Diagonal of `D = ½ diag(ν₁, ν₁, ν₂, ν₂)`. A negative `ν` is an error:
/// the diffusion has no real square root there.
pub fn diffusion(s: &ClassicalState, p: &ModelParams) -> Result<[f64; 4]> {
    let n = nu(s, p);
    for (mode, &v) in n.iter().enumerate() {
        if v < 0.0 {
            return Err(Error::NegativeDiffusion { mode: mode + 1, nu: v, state: s.to_array() });
        }
    }
    Ok([n[0] / 2.0, n[0] / 2.0, n[1] / 2.0, n[1] / 2.0])
}

/// Elementwise `σ = √D`.
pub fn noise_amplitude(s: &ClassicalState, p: &ModelParams) -> Result<[f64; 4]> {
    Ok(diffusion(s, p)?.map(f64::sqrt))
}

/// One Euler–Maruyama step `s + μ dt + σ √dt ξ`.
pub fn em_step(s: &ClassicalState, p: &ModelParams, dt: f64, noise: [f64; 4]) -> Result<ClassicalState> {
    em_step_scaled(s, p, dt, noise, 1.0)
}

/// [`em_step`] with the noise amplitude multiplied by `scale`.
pub fn em_step_scaled(s: &ClassicalState, p: &ModelParams, dt: f64, noise: [f64; 4], scale: f64) -> Result<ClassicalState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    let mu = drift(s, p).to_array();
    let x = s.to_array();
    let out = if scale == 0.0 {
        std::array::from_fn(|k| x[k] + mu[k] * dt)
    } else {
        let sigma = noise_amplitude(s, p)?;
        let sq = scale * dt.sqrt();
        std::array::from_fn(|k| x[k] + mu[k] * dt + sigma[k] * sq * noise[k])
    };
    let next = ClassicalState::from_array(out);
    if !next.is_finite() {
        return Err(Error::Divergence { time: f64::NAN, norm: f64::INFINITY });
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdeConfig {
    pub dt: f64,
    pub t_final: f64,
    pub n_trajectories: usize,
    /// Samples are kept for `t ≥ transient_fraction · t_final`.
    pub transient_fraction: f64,
    pub seed: u64,
    /// Spacing of kept samples within the steady window.
    pub sample_interval: f64,
    /// Multiplies σ; 0 gives the deterministic drift flow.
    pub noise_scale: f64,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 200.0,
            n_trajectories: 1000,
            transient_fraction: 0.5,
            seed: 20_211_005,
            sample_interval: 0.1,
            noise_scale: 1.0,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self, p: &ModelParams) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        let fastest = p.omega.max(p.k1).max(p.eps);
        if self.dt * fastest > MAX_STEP_FRACTION {
            return bad(format!(
                "dt = {} too coarse: dt * max(omega, k1, eps) = {:.3} > {MAX_STEP_FRACTION}",
                self.dt,
                self.dt * fastest
            ));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return bad(format!("t_final must be > 0, got {}", self.t_final));
        }
        if self.n_trajectories < 2 {
            return bad(format!("need at least 2 trajectories, got {}", self.n_trajectories));
        }
        if !(self.transient_fraction > 0.0 && self.transient_fraction < 1.0) {
            return bad(format!("transient_fraction must be in (0, 1), got {}", self.transient_fraction));
        }
        if !(self.sample_interval >= self.dt) || !self.sample_interval.is_finite() {
            return bad(format!("sample_interval must be >= dt, got {}", self.sample_interval));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return bad(format!("noise_scale must be >= 0, got {}", self.noise_scale));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    fn first_kept_step(&self) -> usize {
        (self.transient_fraction * self.t_final / self.dt).ceil() as usize
    }

    fn sample_stride(&self) -> usize {
        ((self.sample_interval / self.dt).round() as usize).max(1)
    }

    /// Number of kept samples per trajectory.
    pub fn samples_per_trajectory(&self) -> usize {
        let (n, first) = (self.steps(), self.first_kept_step());
        if first > n {
            0
        } else {
            (n - first) / self.sample_stride() + 1
        }
    }
}

/// RNG of trajectory `index`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeEnsemble {
    pub params: ModelParams,
    pub config: SdeConfig,
    pub samples_per_trajectory: usize,
    /// Steady-window samples, trajectory-major.
    pub samples: Vec<ClassicalState>,
    pub initial_states: Vec<ClassicalState>,
}

impl SdeEnsemble {
    pub fn n_trajectories(&self) -> usize {
        self.initial_states.len()
    }

    pub fn trajectory(&self, i: usize) -> &[ClassicalState] {
        let m = self.samples_per_trajectory;
        &self.samples[i * m..(i + 1) * m]
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &[ClassicalState]> {
        self.samples.chunks(self.samples_per_trajectory.max(1))
    }

    pub fn y1(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.y1).collect()
    }

    pub fn x1(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.x1).collect()
    }
}

fn run_trajectory(p: &ModelParams, cfg: &SdeConfig, index: usize) -> Result<(ClassicalState, Vec<ClassicalState>)> {
    let mut rng = trajectory_rng(cfg.seed, index);
    let s0 = ClassicalState::from_array(std::array::from_fn(|_| rng.random_range(-INITIAL_BOX..=INITIAL_BOX)));
    let (steps, first, stride) = (cfg.steps(), cfg.first_kept_step(), cfg.sample_stride());
    let mut kept = Vec::with_capacity(cfg.samples_per_trajectory());
    let mut s = s0;
    if first == 0 {
        kept.push(s);
    }
    for n in 1..=steps {
        let xi: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        s = em_step_scaled(&s, p, cfg.dt, xi, cfg.noise_scale).map_err(|e| match e {
            Error::Divergence { norm, .. } => Error::Divergence { time: n as f64 * cfg.dt, norm },
            other => other,
        })?;
        let norm = s.norm();
        if norm > DIVERGENCE_NORM {
            return Err(Error::Divergence { time: n as f64 * cfg.dt, norm });
        }
        if n >= first && (n - first) % stride == 0 {
            kept.push(s);
        }
    }
    Ok((s0, kept))
}

/// Independent trajectories from uniform initial conditions in
/// `[−2, 2]⁴`, run in parallel; bit-identical for a given seed and config.
pub fn run_ensemble(p: &ModelParams, cfg: &SdeConfig) -> Result<SdeEnsemble> {
    p.validate()?;
    cfg.validate(p)?;
    let runs: Vec<_> = (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|i| {
            run_trajectory(p, cfg, i).map_err(|e| Error::Trajectory {
                trajectory: i,
                stream: i as u64,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let m = cfg.samples_per_trajectory();
    let mut samples = Vec::with_capacity(m * runs.len());
    let mut initial_states = Vec::with_capacity(runs.len());
    for (s0, kept) in runs {
        debug_assert_eq!(kept.len(), m);
        initial_states.push(s0);
        samples.extend(kept);
    }
    Ok(SdeEnsemble { params: *p, config: *cfg, samples_per_trajectory: m, samples, initial_states })
}

/// Mean of `x₁² + y₁²` over trajectories and the steady window.
pub fn averaged_amplitude(ens: &SdeEnsemble) -> Result<f64> {
    if ens.samples.is_empty() {
        return Err(Error::Empty("steady window"));
    }
    let sum: f64 = ens.samples.iter().map(|s| s.x1 * s.x1 + s.y1 * s.y1).sum();
    Ok(sum / ens.samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Fixed-range histogram; the last bin is closed on the right.
    pub fn new(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("histogram samples"));
        }
        if bins == 0 || !(hi > lo) {
            return Err(Error::InvalidParameter(format!("bad histogram range [{lo}, {hi}] with {bins} bins")));
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0u64; bins];
        for &v in samples {
            if v >= lo && v <= hi {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
        }
        Ok(Self { lo, width, counts })
    }

    /// Histogram over the sample range with [`HISTOGRAM_BINS`] bins, or the
    /// Freedman–Diaconis count when that would leave fewer than
    /// [`MIN_SAMPLES_PER_BIN`] samples per bin on average.
    pub fn auto(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("histogram samples"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        if !(hi > lo) {
            let pad = lo.abs().max(1.0) * 1e-9;
            return Self::new(samples, lo - pad, hi + pad, HISTOGRAM_BINS);
        }
        let n = sorted.len();
        let bins = if n >= HISTOGRAM_BINS * MIN_SAMPLES_PER_BIN {
            HISTOGRAM_BINS
        } else {
            let q = |f: f64| sorted[((n - 1) as f64 * f).round() as usize];
            let iqr = q(0.75) - q(0.25);
            if iqr > 0.0 {
                let h = 2.0 * iqr / (n as f64).cbrt();
                (((hi - lo) / h).ceil() as usize).clamp(4, HISTOGRAM_BINS)
            } else {
                HISTOGRAM_BINS
            }
        };
        Self::new(samples, lo, hi, bins)
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|b| self.lo + (b as f64 + 0.5) * self.width).collect()
    }

    /// Counts normalized to unit area.
    pub fn density(&self) -> Vec<f64> {
        let total: u64 = self.counts.iter().sum();
        let norm = total as f64 * self.width;
        self.counts.iter().map(|&c| c as f64 / norm).collect()
    }
}

/// One row of the noisy bifurcation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyRow {
    pub eps: f64,
    pub mean_amp_nc: f64,
    /// Separation of the two tallest y₁-histogram maxima, 0 if unimodal.
    pub delta_y_nc: f64,
    pub label: StateLabel,
    pub ambiguous: bool,
    pub n_traj: usize,
    pub dt: f64,
    /// Ensemble mean of each trajectory's steady-window maximum of y₁.
    pub traj_max_y1: f64,
    /// Ensemble mean of each trajectory's steady-window minimum of y₁.
    pub traj_min_y1: f64,
    pub hist_bin_width: f64,
}

/// Histogram-based classification and amplitude of one ensemble.
pub fn summarize(ens: &SdeEnsemble, prominence: f64) -> Result<NoisyRow> {
    let (hx, hy) = (Histogram::auto(&ens.x1())?, Histogram::auto(&ens.y1())?);
    let c = classify_profiles(&hx.density(), &hx.centers(), &hy.density(), &hy.centers(), prominence)?;
    let n = ens.n_trajectories() as f64;
    let (mut tmax, mut tmin) = (0.0, 0.0);
    for tr in ens.trajectories() {
        tmax += tr.iter().map(|s| s.y1).fold(f64::NEG_INFINITY, f64::max);
        tmin += tr.iter().map(|s| s.y1).fold(f64::INFINITY, f64::min);
    }
    Ok(NoisyRow {
        eps: ens.params.eps,
        mean_amp_nc: averaged_amplitude(ens)?,
        delta_y_nc: c.delta_y,
        label: c.label,
        ambiguous: c.ambiguous,
        n_traj: ens.n_trajectories(),
        dt: ens.config.dt,
        traj_max_y1: tmax / n,
        traj_min_y1: tmin / n,
        hist_bin_width: hy.width,
    })
}

/// Ensemble summary over a coupling grid, rows in grid order.
pub fn noisy_bifurcation(p_base: &ModelParams, eps_grid: &[f64], cfg: &SdeConfig, prominence: f64) -> Result<Vec<NoisyRow>> {
    if eps_grid.is_empty() {
        return Err(Error::Empty("eps grid"));
    }
    eps_grid
        .iter()
        .map(|&e| {
            let ens = run_ensemble(&p_base.with_eps(e), cfg)?;
            summarize(&ens, prominence)
        })
        .collect()
}
