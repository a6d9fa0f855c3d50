//! Single-mode Wigner function on a phase-space grid, its axis projections and
//! the oscillating / amplitude-death / oscillation-death classification.
//!
//! Phase space uses `α = x + i y`, normalized so that the vacuum is
//! `W = (2/π) exp(−2|α|²)` and `∬ W dx dy = 1`. In the Fock basis
//!
//! ```text
//! W(α) = (2/π) Tr[ρ D(2α) Π] = (2/π) Σ_{m,n} ρ_mn (−1)^m ⟨n| D(2α) |m⟩
//! ⟨m+k| D(β) |m⟩ = √(m!/(m+k)!) β^k e^{−|β|²/2} L_m^{(k)}(|β|²)
//! ```
//!
//! and the associated Laguerre polynomials are generated by their three-term
//! recurrence in `m` for each offset `k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::DensityMatrix;
use crate::liouvillian::{solve_point, SteadyStateOptions, TruncationPolicy};
use crate::params::ModelParams;
use crate::C64;

/// Default peak-prominence threshold, as a fraction of the tallest value.
pub const DEFAULT_PROMINENCE: f64 = 0.02;

/// Boundary |W| above which the grid is considered too small.
pub const BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for PhaseGrid {
    fn default() -> Self {
        Self::symmetric(4.0, 201).unwrap()
    }
}

impl PhaseGrid {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 16 || ny < 16 {
            return Err(Error::InvalidParameter(format!("grid needs at least 16 points per axis, got {nx}x{ny}")));
        }
        if !(x_max > x_min && y_max > y_min) {
            return Err(Error::InvalidParameter("grid bounds must be increasing".into()));
        }
        Ok(Self { x_min, x_max, y_min, y_max, nx, ny })
    }

    /// `[−half_width, half_width]²` with `n` points per axis.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, -half_width, half_width, n, n)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x_min + i as f64 * self.dx()).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.y_min + j as f64 * self.dy()).collect()
    }

    /// Same spacing, bounds scaled by `factor`.
    pub fn expanded(&self, factor: f64) -> Self {
        let grow = |lo: f64, hi: f64, step: f64| {
            let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo) * factor);
            let n = ((2.0 * h) / step).round() as usize + 1;
            (c - h, c + h, n)
        };
        let (x_min, x_max, nx) = grow(self.x_min, self.x_max, self.dx());
        let (y_min, y_max, ny) = grow(self.y_min, self.y_max, self.dy());
        Self { x_min, x_max, y_min, y_max, nx, ny }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub grid: PhaseGrid,
    /// Row-major `ny × nx`: `w[j * nx + i] = W(x_i, y_j)`.
    pub w: Vec<f64>,
    /// `P(y_j) = Σ_i W(x_i, y_j) Δx`.
    pub proj_y: Vec<f64>,
    /// `P(x_i) = Σ_j W(x_i, y_j) Δy`.
    pub proj_x: Vec<f64>,
}

impl WignerGrid {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.w[iy * self.grid.nx + ix]
    }

    /// `Σ W Δx Δy`.
    pub fn integral(&self) -> f64 {
        self.w.iter().sum::<f64>() * self.grid.dx() * self.grid.dy()
    }

    /// Largest |W| on the outer edge of the grid.
    pub fn boundary_max(&self) -> f64 {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut m: f64 = 0.0;
        for i in 0..nx {
            m = m.max(self.at(i, 0).abs()).max(self.at(i, ny - 1).abs());
        }
        for j in 0..ny {
            m = m.max(self.at(0, j).abs()).max(self.at(nx - 1, j).abs());
        }
        m
    }

    /// Whether the state spills over the grid edge.
    pub fn boundary_warning(&self) -> bool {
        self.boundary_max() > BOUNDARY_TOL || (1.0 - self.integral()).abs() > 1e-4
    }
}

/// `√(m!/(m+k)!)` for all `m + k < n`, indexed `[m][k]`.
fn factorial_ratios(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|m| {
            let mut row = Vec::with_capacity(n - m);
            let mut r = 1.0;
            row.push(r);
            for k in 1..n - m {
                r /= ((m + k) as f64).sqrt();
                row.push(r);
            }
            row
        })
        .collect()
}

/// `W(α)` for a single-mode density matrix given as dense entries.
fn wigner_point(rho: &crate::fock::CMatrix, ratios: &[Vec<f64>], alpha: C64, laguerre: &mut Vec<f64>) -> f64 {
    let n = rho.nrows();
    let beta = 2.0 * alpha;
    let s = beta.norm_sqr();
    let mut acc = 0.0;
    let mut beta_k = C64::from(1.0);
    for k in 0..n {
        if k > 0 {
            beta_k *= beta;
        }
        let len = n - k;
        laguerre.clear();
        laguerre.push(1.0);
        if len > 1 {
            laguerre.push(1.0 + k as f64 - s);
        }
        for m in 1..len.saturating_sub(1) {
            let mf = m as f64;
            let next = ((2.0 * mf + 1.0 + k as f64 - s) * laguerre[m] - (mf + k as f64) * laguerre[m - 1]) / (mf + 1.0);
            laguerre.push(next);
        }
        let weight = if k == 0 { 1.0 } else { 2.0 };
        for m in 0..len {
            // ρ[m+k, m] pairs with (−1)^{m+k} ⟨m| D(β) |m+k⟩ = (−1)^m √(m!/(m+k)!) β*^k e^{−s/2} L
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let elem = beta_k.conj() * (ratios[m][k] * laguerre[m]);
            acc += weight * sign * (rho[(m + k, m)] * elem).re;
        }
    }
    acc * (-0.5 * s).exp() * std::f64::consts::FRAC_2_PI
}

/// Wigner function of a single-mode state on `grid`.
pub fn wigner_transform(rho: &DensityMatrix, grid: &PhaseGrid) -> Result<WignerGrid> {
    if rho.config().n_modes() != 1 {
        return Err(Error::InvalidConfig("Wigner transform needs a single-mode state".into()));
    }
    let m = rho.matrix();
    let ratios = factorial_ratios(rho.dim());
    let xs = grid.xs();
    let ys = grid.ys();
    let w: Vec<f64> = ys
        .par_iter()
        .flat_map_iter(|&y| {
            let mut buf = Vec::with_capacity(rho.dim());
            xs.iter().map(|&x| wigner_point(m, &ratios, C64::new(x, y), &mut buf)).collect::<Vec<_>>()
        })
        .collect();
    let mut out = WignerGrid { grid: *grid, w, proj_y: Vec::new(), proj_x: Vec::new() };
    out.proj_y = project_y(&out);
    out.proj_x = project_x(&out);
    if out.boundary_warning() {
        log::warn!("Wigner grid too small: boundary |W| = {:e}, integral {}", out.boundary_max(), out.integral());
    }
    Ok(out)
}

/// Evaluates on `grid`, enlarging it by half its width up to `max_expansions`
/// times while the state reaches the boundary.
pub fn wigner_transform_auto(rho: &DensityMatrix, grid: &PhaseGrid, max_expansions: usize) -> Result<WignerGrid> {
    let mut g = *grid;
    let mut w = wigner_transform(rho, &g)?;
    for _ in 0..max_expansions {
        if !w.boundary_warning() {
            break;
        }
        g = g.expanded(1.5);
        w = wigner_transform(rho, &g)?;
    }
    Ok(w)
}

/// Marginal on the y axis, `P(y_j) = Σ_i W(x_i, y_j) Δx`.
pub fn project_y(w: &WignerGrid) -> Vec<f64> {
    let (nx, dx) = (w.grid.nx, w.grid.dx());
    w.w.chunks(nx).map(|row| row.iter().sum::<f64>() * dx).collect()
}

/// Marginal on the x axis, `P(x_i) = Σ_j W(x_i, y_j) Δy`.
pub fn project_x(w: &WignerGrid) -> Vec<f64> {
    let (nx, dy) = (w.grid.nx, w.grid.dy());
    let mut p = vec![0.0; nx];
    for row in w.w.chunks(nx) {
        for (acc, v) in p.iter_mut().zip(row) {
            *acc += v;
        }
    }
    p.iter_mut().for_each(|v| *v *= dy);
    p
}

/// A detected interior maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub position: f64,
    pub height: f64,
    pub prominence: f64,
}

/// Strictly interior local maxima of `p` whose topographic prominence is at
/// least `prominence · max(p)`, tallest first. A flat top counts once, at its
/// middle. Between maxima of equal height the leftmost is taken as the higher
/// one, so a symmetric pair gets one full and one saddle-limited prominence.
pub fn find_maxima(p: &[f64], axis: &[f64], prominence: f64) -> Result<Vec<Peak>> {
    if p.is_empty() {
        return Err(Error::Empty("profile"));
    }
    if p.len() != axis.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), got: axis.len() });
    }
    if !(prominence > 0.0) {
        return Err(Error::InvalidParameter(format!("prominence must be > 0, got {prominence}")));
    }
    let n = p.len();
    let top = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = prominence * top.abs();
    let tie = 1e-12 * top.abs();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if p[i] > p[i - 1] {
            // walk across a plateau
            let mut j = i;
            while j + 1 < n && p[j + 1] == p[i] {
                j += 1;
            }
            if j + 1 < n && p[j + 1] < p[i] {
                let idx = (i + j) / 2;
                let h = p[idx];
                let mut left_min = h;
                let mut k = i;
                while k > 0 {
                    k -= 1;
                    if p[k] > h + tie || (p[k] >= h - tie && left_min < h - tie) {
                        break;
                    }
                    left_min = left_min.min(p[k]);
                }
                let mut right_min = h;
                let mut k = j;
                while k + 1 < n {
                    k += 1;
                    if p[k] > h + tie {
                        break;
                    }
                    right_min = right_min.min(p[k]);
                }
                let prom = h - left_min.max(right_min);
                if prom >= threshold {
                    peaks.push(Peak { index: idx, position: axis[idx], height: h, prominence: prom });
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.index.cmp(&b.index)));
    Ok(peaks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateLabel {
    /// Ring in phase space: both marginals bimodal.
    Osc,
    /// Single lobe at the origin.
    Qad,
    /// Two lobes split along y.
    Qod,
}

impl StateLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            StateLabel::Osc => "Osc",
            StateLabel::Qad => "QAD",
            StateLabel::Qod => "QOD",
        }
    }
}

impl std::fmt::Display for StateLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateClass {
    pub label: StateLabel,
    /// Separation of the two tallest maxima of the y marginal, 0 if unimodal.
    pub delta_y: f64,
    /// Set when only the x marginal is bimodal (labelled `Osc`), or when a
    /// `QAD` label sits on a Wigner function with a central dip.
    pub ambiguous: bool,
    pub peaks_x: Vec<Peak>,
    pub peaks_y: Vec<Peak>,
}

/// Label from the modality of two marginals. Shared with the noisy model,
/// which applies it to sample histograms.
pub fn classify_profiles(
    proj_x: &[f64],
    axis_x: &[f64],
    proj_y: &[f64],
    axis_y: &[f64],
    prominence: f64,
) -> Result<StateClass> {
    let peaks_x = find_maxima(proj_x, axis_x, prominence)?;
    let peaks_y = find_maxima(proj_y, axis_y, prominence)?;
    let (bi_x, bi_y) = (peaks_x.len() >= 2, peaks_y.len() >= 2);
    let (label, ambiguous) = match (bi_x, bi_y) {
        (true, true) => (StateLabel::Osc, false),
        (false, true) => (StateLabel::Qod, false),
        (false, false) => (StateLabel::Qad, false),
        (true, false) => (StateLabel::Osc, true),
    };
    let delta_y = if bi_y { (peaks_y[0].position - peaks_y[1].position).abs() } else { 0.0 };
    Ok(StateClass { label, delta_y, ambiguous, peaks_x, peaks_y })
}

/// Heuristic classification of a Wigner function from its marginals.
pub fn classify(w: &WignerGrid, prominence: f64) -> Result<StateClass> {
    let mut c = classify_profiles(&w.proj_x, &w.grid.xs(), &w.proj_y, &w.grid.ys(), prominence)?;
    if c.label == StateLabel::Qad && central_dip(w, prominence) {
        c.ambiguous = true;
    }
    Ok(c)
}

/// Whether W at the grid point nearest the origin is clearly below its
/// maximum, i.e. a thick ring whose marginals have filled in.
pub fn central_dip(w: &WignerGrid, prominence: f64) -> bool {
    let nearest = |lo: f64, step: f64, n: usize| ((-lo / step).round().max(0.0) as usize).min(n - 1);
    let g = &w.grid;
    let ix = nearest(g.x_min, g.dx(), g.nx);
    let iy = nearest(g.y_min, g.dy(), g.ny);
    let top = w.w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    w.at(ix, iy) < (1.0 - prominence) * top
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaYRow {
    pub eps: f64,
    pub delta_y: f64,
    pub label: StateLabel,
    pub ambiguous: bool,
}

/// Steady-state classification over a parameter grid, points solved in
/// parallel.
pub fn delta_y_sweep(
    policy: &TruncationPolicy,
    params_grid: &[ModelParams],
    grid: &PhaseGrid,
    opts: &SteadyStateOptions,
    prominence: f64,
) -> Result<Vec<DeltaYRow>> {
    if params_grid.is_empty() {
        return Err(Error::Empty("parameter grid"));
    }
    params_grid
        .par_iter()
        .map(|p| {
            let q = solve_point(p, policy, opts)?;
            let w = wigner_transform_auto(&q.reduced, grid, 2)?;
            let c = classify(&w, prominence)?;
            Ok(DeltaYRow { eps: p.eps, delta_y: c.delta_y, label: c.label, ambiguous: c.ambiguous })
        })
        .collect()
}
