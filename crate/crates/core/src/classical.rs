//! Deterministic coupled van der Pol equations, the harmonic amplitude
//! equation, fixed points, linear stability and the bifurcation diagram.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::linalg::Schur;
use nalgebra::Matrix4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::C64;

/// Fixed points must satisfy the ODE to this residual norm.
pub const FIXED_POINT_TOL: f64 = 1e-10;
/// Trajectories are aborted once the state norm exceeds this.
pub const DIVERGENCE_NORM: f64 = 1e6;
/// `|ε − ω|` below which the inhomogeneous branch formula is singular.
pub const SINGULAR_GAP: f64 = 1e-9;
/// Relative distance `|ε − ω| / ω` under which rows are flagged near-singular.
pub const NEAR_SINGULAR_FRACTION: f64 = 0.05;

/// Phase-space point `(x₁, y₁, x₂, y₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassicalState {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl ClassicalState {
    pub const ORIGIN: Self = Self { x1: 0.0, y1: 0.0, x2: 0.0, y2: 0.0 };

    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Exchange the two oscillators.
    pub fn swapped(self) -> Self {
        Self::new(self.x2, self.y2, self.x1, self.y1)
    }

    /// `|α₁|²`, `|α₂|²`.
    pub fn radii_sq(&self) -> (f64, f64) {
        (self.x1 * self.x1 + self.y1 * self.y1, self.x2 * self.x2 + self.y2 * self.y2)
    }

    pub fn alphas(&self) -> (C64, C64) {
        (C64::new(self.x1, self.y1), C64::new(self.x2, self.y2))
    }

    pub fn from_alphas(a1: C64, a2: C64) -> Self {
        Self::new(a1.re, a1.im, a2.re, a2.im)
    }
}

impl Add for ClassicalState {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x1 + o.x1, self.y1 + o.y1, self.x2 + o.x2, self.y2 + o.y2)
    }
}

impl Sub for ClassicalState {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for ClassicalState {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x1, -self.y1, -self.x2, -self.y2)
    }
}

impl Mul<f64> for ClassicalState {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        Self::new(c * self.x1, c * self.y1, c * self.x2, c * self.y2)
    }
}

/// Right-hand side of the coupled van der Pol equations:
/// `ẋⱼ = ω yⱼ + ε(y_{j'} − xⱼ)`, `ẏⱼ = −ω xⱼ + (k1 − 8k2 xⱼ²) yⱼ`.
pub fn vdp_rhs(s: &ClassicalState, p: &ModelParams) -> ClassicalState {
    let (w, e) = (p.omega, p.eps);
    let damp = |x: f64| p.k1 - 8.0 * p.k2 * x * x;
    ClassicalState::new(
        w * s.y1 + e * (s.y2 - s.x1),
        -w * s.x1 + damp(s.x1) * s.y1,
        w * s.y2 + e * (s.y1 - s.x2),
        -w * s.x2 + damp(s.x2) * s.y2,
    )
}

/// Harmonic amplitude equation for `αⱼ = xⱼ + i yⱼ`.
pub fn amplitude_rhs(a1: C64, a2: C64, p: &ModelParams) -> (C64, C64) {
    let i = C64::i();
    let f = |a: C64, b: C64| {
        -i * p.omega * a + (p.k1 / 2.0 - p.k2 * a.norm_sqr()) * a
            - p.eps / 2.0 * ((a + a.conj()) + i * (b - b.conj()))
    };
    (f(a1, a2), f(a2, a1))
}

/// [`amplitude_rhs`] acting on Cartesian coordinates.
pub fn amplitude_rhs_cartesian(s: &ClassicalState, p: &ModelParams) -> ClassicalState {
    let (a1, a2) = s.alphas();
    let (d1, d2) = amplitude_rhs(a1, a2, p);
    ClassicalState::from_alphas(d1, d2)
}

/// Analytic Jacobian of [`vdp_rhs`], rows and columns ordered `(x₁,y₁,x₂,y₂)`.
pub fn jacobian(s: &ClassicalState, p: &ModelParams) -> Matrix4<f64> {
    let (w, e, k1, k2) = (p.omega, p.eps, p.k1, p.k2);
    #[rustfmt::skip]
    let j = Matrix4::new(
        -e, w, 0.0, e,
        -w - 16.0 * k2 * s.x1 * s.y1, k1 - 8.0 * k2 * s.x1 * s.x1, 0.0, 0.0,
        0.0, e, -e, w,
        0.0, 0.0, -w - 16.0 * k2 * s.x2 * s.y2, k1 - 8.0 * k2 * s.x2 * s.x2,
    );
    j
}

/// Eigenvalues of a real 4×4 matrix. The unshifted real Schur iteration
/// occasionally stalls on these Jacobians, so the transpose and a few shifted
/// copies are tried before the unbounded iteration.
fn eigenvalues4(m: Matrix4<f64>) -> [C64; 4] {
    let cap = 1000;
    let ev = if let Some(s) = Schur::try_new(m, f64::EPSILON, cap) {
        s.complex_eigenvalues()
    } else if let Some(s) = Schur::try_new(m.transpose(), f64::EPSILON, cap) {
        s.complex_eigenvalues()
    } else {
        let scale = m.amax().max(1.0);
        [0.37, -0.61, 1.13]
            .iter()
            .find_map(|&f| {
                let shift = f * scale;
                Schur::try_new(m + Matrix4::identity() * shift, f64::EPSILON, cap)
                    .map(|s| s.complex_eigenvalues().map(|z| z - shift))
            })
            .unwrap_or_else(|| Schur::new(m).complex_eigenvalues())
    };
    [ev[0], ev[1], ev[2], ev[3]]
}

/// Jacobian eigenvalues sorted by real part, largest first.
pub fn jacobian_eigs(s: &ClassicalState, p: &ModelParams) -> [C64; 4] {
    let mut out = eigenvalues4(jacobian(s, p));
    out.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    out
}

/// Largest real part of the spectrum; negative means linearly stable.
pub fn max_growth_rate(s: &ClassicalState, p: &ModelParams) -> f64 {
    jacobian_eigs(s, p)[0].re
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSet {
    pub hss: ClassicalState,
    pub ihss_plus: Option<ClassicalState>,
    pub ihss_minus: Option<ClassicalState>,
    pub exists_ihss: bool,
}

/// Homogeneous steady state and, when it exists, the inhomogeneous pair
/// `±(x*, y*, −x*, −y*)`.
pub fn fixed_points(p: &ModelParams) -> Result<FixedPointSet> {
    p.validate()?;
    let (w, e) = (p.omega, p.eps);
    if e == 0.0 {
        return Err(Error::InvalidParameter("inhomogeneous branch is undefined at eps = 0".into()));
    }
    if (e - w).abs() < SINGULAR_GAP {
        return Err(Error::Singular(format!(
            "inhomogeneous branch diverges at eps = omega = {w} (y* ~ 1/(1 - omega/eps))"
        )));
    }
    let disc = p.k1 - w * (w - e) / e;
    let hss = ClassicalState::ORIGIN;
    if !(disc > 0.0) || p.k2 == 0.0 {
        return Ok(FixedPointSet { hss, ihss_plus: None, ihss_minus: None, exists_ihss: false });
    }
    let y = disc.sqrt() / ((8.0 * p.k2).sqrt() * (1.0 - w / e));
    let x = (w - e) / e * y;
    let plus = ClassicalState::new(x, y, -x, -y);
    for s in [plus, -plus] {
        let r = vdp_rhs(&s, p).norm();
        if !(r < FIXED_POINT_TOL) {
            return Err(Error::Singular(format!("fixed point residual {r:.3e} at eps = {e}")));
        }
    }
    Ok(FixedPointSet { hss, ihss_plus: Some(plus), ihss_minus: Some(-plus), exists_ihss: true })
}

fn rk4<F: Fn(&ClassicalState) -> ClassicalState>(f: &F, s: &ClassicalState, dt: f64) -> ClassicalState {
    let k1 = f(s);
    let k2 = f(&(*s + k1 * (dt / 2.0)));
    let k3 = f(&(*s + k2 * (dt / 2.0)));
    let k4 = f(&(*s + k3 * dt));
    *s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Fixed-step RK4 of a vector field, calling `observe(t, s)` after every
/// step (and once at `t = 0`).
pub fn integrate_field<F, O>(field: F, s0: ClassicalState, t_final: f64, dt: f64, mut observe: O) -> Result<ClassicalState>
where
    F: Fn(&ClassicalState) -> ClassicalState,
    O: FnMut(f64, &ClassicalState),
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!("t_final must be >= 0, got {t_final}")));
    }
    if !s0.is_finite() {
        return Err(Error::InvalidState(format!("non-finite initial state {s0:?}")));
    }
    let steps = (t_final / dt).round() as usize;
    let mut s = s0;
    observe(0.0, &s);
    for n in 1..=steps {
        s = rk4(&field, &s, dt);
        let t = n as f64 * dt;
        let norm = s.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { time: t, norm });
        }
        observe(t, &s);
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<ClassicalState>,
}

impl Trajectory {
    pub fn last(&self) -> ClassicalState {
        *self.states.last().expect("trajectory holds the initial state")
    }
}

/// RK4 integration of the van der Pol equations, keeping every step.
pub fn integrate(s0: ClassicalState, p: &ModelParams, t_final: f64, dt: f64) -> Result<Trajectory> {
    let mut traj = Trajectory { t: Vec::new(), states: Vec::new() };
    integrate_field(|s| vdp_rhs(s, p), s0, t_final, dt, |t, s| {
        traj.t.push(t);
        traj.states.push(*s);
    })?;
    Ok(traj)
}

/// Sign changes of a scalar function on a uniform scan, refined by bisection.
fn scan_roots<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n_scan: usize, tol: f64) -> Vec<(f64, f64)> {
    let xs: Vec<f64> = (0..=n_scan).map(|i| lo + (hi - lo) * i as f64 / n_scan as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for i in 0..n_scan {
        let (fa, fb) = (vals[i], vals[i + 1]);
        if fa == 0.0 || fa.signum() == fb.signum() {
            continue;
        }
        let (mut a, mut b, mut fa) = (xs[i], xs[i + 1], fa);
        while b - a > tol {
            let m = 0.5 * (a + b);
            let fm = f(m);
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        roots.push((0.5 * (a + b), fb - vals[i]));
    }
    roots
}

/// Coupling strengths where the homogeneous state changes stability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Stabilization by a complex pair crossing (inverse Hopf).
    pub hopf: Option<f64>,
    /// Destabilization by a real eigenvalue crossing (pitchfork).
    pub pitchfork: Option<f64>,
}

/// Locates the stability changes of the origin for `ε ∈ (0, eps_max]` by
/// scanning the leading growth rate and bisecting to `tol`.
pub fn hss_thresholds(p: &ModelParams, eps_max: f64, n_scan: usize, tol: f64) -> Result<Thresholds> {
    p.validate()?;
    if !(eps_max > 0.0) || n_scan < 2 || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bad scan: eps_max = {eps_max}, n_scan = {n_scan}, tol = {tol}"
        )));
    }
    let growth = |e: f64| max_growth_rate(&ClassicalState::ORIGIN, &p.with_eps(e));
    let lo = eps_max * 1e-6;
    let mut out = Thresholds { hopf: None, pitchfork: None };
    for (eps, slope) in scan_roots(growth, lo, eps_max, n_scan, tol) {
        let lead = jacobian_eigs(&ClassicalState::ORIGIN, &p.with_eps(eps))[0];
        if slope < 0.0 && out.hopf.is_none() && lead.im.abs() > 1e-6 {
            out.hopf = Some(eps);
        } else if slope > 0.0 && out.pitchfork.is_none() {
            out.pitchfork = Some(eps);
        }
    }
    Ok(out)
}

/// Qualitative state of one diagram row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Unstable origin, sustained oscillation.
    Osc,
    /// Stable origin.
    Ad,
    /// Stable inhomogeneous pair.
    Od,
    /// None of the above resolved.
    Unresolved,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Osc => "Osc",
            Regime::Ad => "AD",
            Regime::Od => "OD",
            Regime::Unresolved => "unresolved",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassicalOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Extrema are taken over `t ≥ transient_fraction · t_final`.
    pub transient_fraction: f64,
    /// Initial condition of the extrema run.
    pub start: ClassicalState,
}

impl Default for ClassicalOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 500.0,
            transient_fraction: 0.8,
            start: ClassicalState::new(0.1, 0.05, -0.07, 0.02),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationRow {
    pub eps: f64,
    pub hss_stable: bool,
    pub ihss_exists: bool,
    pub ihss_stable: bool,
    /// NaN when the inhomogeneous pair does not exist.
    pub x_star: f64,
    pub y_star: f64,
    pub osc_min_x1: f64,
    pub osc_max_x1: f64,
    pub regime: Regime,
    /// `|ε − ω|` is small and `y*` correspondingly large.
    pub near_singular: bool,
}

/// Amplitude below which the post-transient `x₁` range counts as stationary.
const OSC_RANGE_TOL: f64 = 1e-3;

/// Stability, fixed-point and limit-cycle data at one coupling.
pub fn bifurcation_row(p: &ModelParams, opts: &ClassicalOptions) -> Result<BifurcationRow> {
    if !(opts.transient_fraction >= 0.0 && opts.transient_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "transient_fraction must be in [0, 1), got {}",
            opts.transient_fraction
        )));
    }
    let hss_stable = max_growth_rate(&ClassicalState::ORIGIN, p) < 0.0;
    let (ihss_exists, ihss_stable, x_star, y_star) = if p.eps == 0.0 {
        (false, false, f64::NAN, f64::NAN)
    } else {
        let fp = fixed_points(p)?;
        match fp.ihss_plus {
            Some(s) => (true, max_growth_rate(&s, p) < 0.0, s.x1, s.y1),
            None => (false, false, f64::NAN, f64::NAN),
        }
    };
    let t_cut = opts.transient_fraction * opts.t_final;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    integrate_field(|s| vdp_rhs(s, p), opts.start, opts.t_final, opts.dt, |t, s| {
        if t >= t_cut {
            lo = lo.min(s.x1);
            hi = hi.max(s.x1);
        }
    })?;
    let regime = if hss_stable {
        Regime::Ad
    } else if ihss_stable {
        Regime::Od
    } else if hi - lo > OSC_RANGE_TOL {
        Regime::Osc
    } else {
        Regime::Unresolved
    };
    let near_singular = ihss_exists && (p.eps - p.omega).abs() < NEAR_SINGULAR_FRACTION * p.omega;
    Ok(BifurcationRow {
        eps: p.eps,
        hss_stable,
        ihss_exists,
        ihss_stable,
        x_star,
        y_star,
        osc_min_x1: lo,
        osc_max_x1: hi,
        regime,
        near_singular,
    })
}

/// [`bifurcation_row`] over a coupling grid, rows in grid order.
pub fn bifurcation_diagram(p_base: &ModelParams, eps_grid: &[f64], opts: &ClassicalOptions) -> Result<Vec<BifurcationRow>> {
    if eps_grid.is_empty() {
        return Err(Error::Empty("eps grid"));
    }
    p_base.validate()?;
    eps_grid.par_iter().map(|&e| bifurcation_row(&p_base.with_eps(e), opts)).collect()
}
