//! Lindblad generator of the conjugately coupled quantum van der Pol pair,
//! time evolution and steady states.
//!
//! The generator acts on column-stacked density matrices, `vec(ρ)[c·D + r] =
//! ρ[r, c]`, so that `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)` and
//!
//! ```text
//! L = −i (I ⊗ H − Hᵀ ⊗ I) + Σ_k γ_k [ conj(L_k) ⊗ L_k − ½ I ⊗ L_k†L_k − ½ (L_k†L_k)ᵀ ⊗ I ].
//! ```
//!
//! The coupled model has
//!
//! ```text
//! H = ω(n1 + n2) + ε/2 (a1†a2 + a2†a1) − ε/2 (a1†a2† + a1a2) − iε/4 (a1†² + a2†² − a1² − a2²)
//! ```
//!
//! and collapse channels `√k1 a_j†`, `√k2 a_j²`, `√ε a_j` on both modes.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    annihilation, creation, expectation, number, on_mode, partial_trace, CMatrix, DensityMatrix, FockConfig,
    OperatorMatrix,
};
use crate::params::ModelParams;
use crate::sparse::{CsrMatrix, Triplet};
use crate::C64;

/// Default cap on stored superoperator entries (about 1 GB of triplets).
pub const DEFAULT_NNZ_BUDGET: usize = 30_000_000;

/// Largest superoperator dimension handed to the dense null-space solver.
pub const MAX_DENSE_DIM: usize = 1296;

/// A collapse channel `rate · D[op]`.
#[derive(Debug, Clone)]
pub struct Channel {
    pub rate: f64,
    pub op: OperatorMatrix,
}

#[derive(Debug, Clone)]
pub struct Liouvillian {
    config: FockConfig,
    params: ModelParams,
    hamiltonian: OperatorMatrix,
    channels: Vec<Channel>,
    superop: CsrMatrix,
    /// Vectorized indices whose row and column photon numbers have equal
    /// parity, with the generator restricted to them. `None` when the
    /// generator couples the two parity sectors.
    even_sector: Option<(Vec<usize>, CsrMatrix)>,
}

/// Coupled-oscillator Hamiltonian on the two-mode space.
pub fn build_hamiltonian(config: FockConfig, params: &ModelParams) -> Result<OperatorMatrix> {
    if config.n_modes() != 2 {
        return Err(Error::InvalidConfig("Hamiltonian needs a two-mode configuration".into()));
    }
    let single = config.single_mode();
    let a = annihilation(single)?;
    let (a1, a2) = (on_mode(&a, 1)?, on_mode(&a, 2)?);
    let (a1d, a2d) = (a1.dag(), a2.dag());
    let n = number(single)?;
    let (n1, n2) = (on_mode(&n, 1)?, on_mode(&n, 2)?);
    let eps = params.eps;

    let free = n1.add(&n2)?.scale(C64::from(params.omega));
    let hop = a1d.compose(&a2)?.add(&a2d.compose(&a1)?)?.scale(C64::from(eps / 2.0));
    let pair = a1d.compose(&a2d)?.add(&a1.compose(&a2)?)?.scale(C64::from(-eps / 2.0));
    let sq = a1d
        .compose(&a1d)?
        .add(&a2d.compose(&a2d)?)?
        .add(&a1.compose(&a1)?.scale(C64::from(-1.0)))?
        .add(&a2.compose(&a2)?.scale(C64::from(-1.0)))?
        .scale(C64::new(0.0, -eps / 4.0));
    free.add(&hop)?.add(&pair)?.add(&sq)
}

/// Collapse channels of the coupled model: gain `k1 D[a_j†]`, two-photon loss
/// `k2 D[a_j²]` and coupling-induced loss `ε D[a_j]`. Zero-rate channels are
/// omitted.
pub fn collapse_channels(config: FockConfig, params: &ModelParams) -> Result<Vec<Channel>> {
    let single = config.single_mode();
    let a = annihilation(single)?;
    let ad = creation(single)?;
    let a_sq = a.compose(&a)?;
    let modes: Vec<usize> = (1..=config.n_modes()).collect();
    let embed = |op: &OperatorMatrix, mode: usize| -> Result<OperatorMatrix> {
        if config.n_modes() == 1 {
            Ok(op.clone())
        } else {
            on_mode(op, mode)
        }
    };
    let mut out = Vec::new();
    for (rate, op) in [(params.k1, &ad), (params.k2, &a_sq), (params.eps, &a)] {
        if rate == 0.0 {
            continue;
        }
        for &m in &modes {
            out.push(Channel { rate, op: embed(op, m)? });
        }
    }
    Ok(out)
}

/// `D[L](ρ) = LρL† − ½{L†L, ρ}` by direct matrix arithmetic.
pub fn lindblad_dissipator(l: &OperatorMatrix, rho: &DensityMatrix) -> Result<CMatrix> {
    dissipator_matrix(l.matrix(), rho.matrix())
}

fn dissipator_matrix(l: &CMatrix, rho: &CMatrix) -> Result<CMatrix> {
    if l.nrows() != rho.nrows() {
        return Err(Error::DimensionMismatch { expected: rho.nrows(), got: l.nrows() });
    }
    let ld = l.adjoint();
    let ldl = &ld * l;
    Ok(l * rho * &ld - (&ldl * rho + rho * &ldl) * C64::from(0.5))
}

impl Liouvillian {
    /// Assembles the generator from a Hamiltonian and collapse channels.
    /// Fails before allocating if the superoperator would exceed `nnz_budget`
    /// stored entries.
    pub fn from_parts(
        config: FockConfig,
        params: ModelParams,
        hamiltonian: OperatorMatrix,
        channels: Vec<Channel>,
        nnz_budget: usize,
    ) -> Result<Self> {
        let d = config.dim();
        if hamiltonian.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: hamiltonian.dim() });
        }
        let h = CsrMatrix::from_dense(hamiltonian.matrix());
        let id = CsrMatrix::identity(d);
        let mut sparse_channels = Vec::with_capacity(channels.len());
        for ch in &channels {
            if ch.op.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: ch.op.dim() });
            }
            let l = CsrMatrix::from_dense(ch.op.matrix());
            let ldl = CsrMatrix::from_dense(&(ch.op.matrix().adjoint() * ch.op.matrix()));
            sparse_channels.push((ch.rate, l, ldl));
        }

        let required = 2 * d * h.nnz()
            + sparse_channels.iter().map(|(_, l, ldl)| l.nnz() * l.nnz() + 2 * d * ldl.nnz()).sum::<usize>();
        if required > nnz_budget {
            return Err(Error::MemoryBudget { required, budget: nnz_budget });
        }

        let mut trip: Vec<Triplet> = Vec::with_capacity(required);
        let mi = C64::new(0.0, -1.0);
        CsrMatrix::kron_into(&id, &h, mi, &mut trip);
        CsrMatrix::kron_into(&h.transpose(), &id, -mi, &mut trip);
        for (rate, l, ldl) in &sparse_channels {
            let g = C64::from(*rate);
            CsrMatrix::kron_into(&l.conj(), l, g, &mut trip);
            CsrMatrix::kron_into(&id, ldl, -0.5 * g, &mut trip);
            CsrMatrix::kron_into(&ldl.transpose(), &id, -0.5 * g, &mut trip);
        }
        let superop = CsrMatrix::from_triplets(d * d, d * d, trip);

        let even = parity_even_indices(config);
        let (sub, leaked) = superop.principal_submatrix(&even);
        let even_sector = (leaked == 0).then_some((even, sub));

        Ok(Self { config, params, hamiltonian, channels, superop, even_sector })
    }

    pub fn config(&self) -> FockConfig {
        self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn hamiltonian(&self) -> &OperatorMatrix {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn superop(&self) -> &CsrMatrix {
        &self.superop
    }

    /// True when the generator does not couple the two parity sectors.
    pub fn preserves_parity(&self) -> bool {
        self.even_sector.is_some()
    }

    /// `unvec(L · vec(ρ))`.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        let d = self.config.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: rho.nrows() });
        }
        let out = self.superop.mul_vec(rho.as_slice());
        Ok(CMatrix::from_column_slice(d, d, &out))
    }

    /// `−i[H, ρ] + Σ γ D[L](ρ)` evaluated with dense products, independent of
    /// the vectorized superoperator.
    pub fn apply_direct(&self, rho: &CMatrix) -> Result<CMatrix> {
        let h = self.hamiltonian.matrix();
        if rho.nrows() != h.nrows() {
            return Err(Error::DimensionMismatch { expected: h.nrows(), got: rho.nrows() });
        }
        let mut out = (h * rho - rho * h) * C64::new(0.0, -1.0);
        for ch in &self.channels {
            out += dissipator_matrix(ch.op.matrix(), rho)? * C64::from(ch.rate);
        }
        Ok(out)
    }

    /// `‖L vec(ρ)‖∞`.
    pub fn residual(&self, rho: &DensityMatrix) -> Result<f64> {
        Ok(self.apply(rho.matrix())?.iter().map(|z| z.norm()).fold(0.0, f64::max))
    }
}

/// Generator of the coupled pair on the two-mode space.
pub fn build_liouvillian(config: FockConfig, params: &ModelParams) -> Result<Liouvillian> {
    build_liouvillian_with_budget(config, params, DEFAULT_NNZ_BUDGET)
}

pub fn build_liouvillian_with_budget(
    config: FockConfig,
    params: &ModelParams,
    nnz_budget: usize,
) -> Result<Liouvillian> {
    params.validate()?;
    let h = build_hamiltonian(config, params)?;
    let channels = collapse_channels(config, params)?;
    Liouvillian::from_parts(config, *params, h, channels, nnz_budget)
}

/// A single uncoupled quantum van der Pol oscillator, `H = ω a†a` with
/// `k1 D[a†] + k2 D[a²]`. The coupling parameter is ignored.
pub fn build_single_mode_liouvillian(config: FockConfig, params: &ModelParams) -> Result<Liouvillian> {
    if config.n_modes() != 1 {
        return Err(Error::InvalidConfig("single-mode generator needs a one-mode configuration".into()));
    }
    let p = params.with_eps(0.0);
    p.validate()?;
    let h = number(config)?.scale(C64::from(p.omega));
    let channels = collapse_channels(config, &p)?;
    Liouvillian::from_parts(config, p, h, channels, DEFAULT_NNZ_BUDGET)
}

/// Vectorized indices `c·D + r` where the total photon numbers of row `r` and
/// column `c` have equal parity.
fn parity_even_indices(config: FockConfig) -> Vec<usize> {
    let n = config.n_levels();
    let d = config.dim();
    let parity = |i: usize| match config.n_modes() {
        1 => i % 2,
        _ => (i / n + i % n) % 2,
    };
    (0..d * d).filter(|&k| parity(k % d) == parity(k / d)).collect()
}

/// Vector representation used by the time stepper: either the full
/// vectorization or the even-parity sector.
struct Stepper<'a> {
    op: &'a CsrMatrix,
    /// Full vectorized index of each stored component.
    embed: Option<&'a [usize]>,
    /// Positions of the diagonal entries `ρ[i, i]` in the stored vector.
    diagonal: Vec<usize>,
    dim: usize,
    bufs: [Vec<C64>; 3],
}

impl<'a> Stepper<'a> {
    fn new(l: &'a Liouvillian, use_sector: bool) -> Self {
        let d = l.config.dim();
        let (op, embed) = match (&l.even_sector, use_sector) {
            (Some((idx, sub)), true) => (sub, Some(idx.as_slice())),
            _ => (&l.superop, None),
        };
        let diagonal = match embed {
            None => (0..d).map(|i| i * d + i).collect(),
            Some(idx) => idx.iter().enumerate().filter(|(_, &k)| k % d == k / d).map(|(p, _)| p).collect(),
        };
        let n = op.nrows();
        Self { op, embed, diagonal, dim: d, bufs: [vec![C64::from(0.0); n], vec![C64::from(0.0); n], vec![C64::from(0.0); n]] }
    }

    fn pack(&self, rho: &CMatrix) -> Vec<C64> {
        match self.embed {
            None => rho.as_slice().to_vec(),
            Some(idx) => idx.iter().map(|&k| rho.as_slice()[k]).collect(),
        }
    }

    /// Full matrix from a stored vector; components outside the sector are zero.
    fn unpack(&self, v: &[C64]) -> CMatrix {
        match self.embed {
            None => CMatrix::from_column_slice(self.dim, self.dim, v),
            Some(idx) => {
                let mut m = CMatrix::zeros(self.dim, self.dim);
                let s = m.as_mut_slice();
                for (p, &k) in idx.iter().enumerate() {
                    s[k] = v[p];
                }
                m
            }
        }
    }

    fn trace(&self, v: &[C64]) -> C64 {
        self.diagonal.iter().map(|&p| v[p]).sum()
    }

    fn residual(&mut self, v: &[C64]) -> f64 {
        let [k, _, _] = &mut self.bufs;
        self.op.matvec(v, k);
        k.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// One classical fourth-order Runge–Kutta step of `v̇ = L v`.
    fn rk4_step(&mut self, v: &mut [C64], h: f64) {
        let [k, tmp, acc] = &mut self.bufs;
        let half = C64::from(0.5 * h);
        let full = C64::from(h);
        self.op.matvec(v, k);
        acc.copy_from_slice(k);
        tmp.par_iter_mut().zip(v.par_iter()).zip(k.par_iter()).for_each(|((t, &x), &d)| *t = x + half * d);
        self.op.matvec(tmp, k);
        acc.par_iter_mut().zip(k.par_iter()).for_each(|(a, &d)| *a += 2.0 * d);
        tmp.par_iter_mut().zip(v.par_iter()).zip(k.par_iter()).for_each(|((t, &x), &d)| *t = x + half * d);
        self.op.matvec(tmp, k);
        acc.par_iter_mut().zip(k.par_iter()).for_each(|(a, &d)| *a += 2.0 * d);
        tmp.par_iter_mut().zip(v.par_iter()).zip(k.par_iter()).for_each(|((t, &x), &d)| *t = x + full * d);
        self.op.matvec(tmp, k);
        let sixth = C64::from(h / 6.0);
        v.par_iter_mut().zip(acc.par_iter()).zip(k.par_iter()).for_each(|((x, &a), &d)| *x += sixth * (a + d));
    }
}

/// Maximum trace drift tolerated before the final correction.
pub const MAX_TRACE_DRIFT: f64 = 1e-4;

/// Outcome of [`evolve`].
#[derive(Debug, Clone)]
pub struct Evolution {
    pub rho: DensityMatrix,
    pub steps: usize,
    pub dt: f64,
    /// `max |ρ − ρ†|` removed by the final symmetrization.
    pub hermiticity_correction: f64,
    /// `|Tr ρ − 1|` removed by the final renormalization.
    pub trace_correction: f64,
}

/// Integrates `ρ̇ = L ρ` from `rho0` to `t_final` with fixed-step RK4. The step
/// is shrunk so that an integer number of steps lands on `t_final`.
pub fn evolve(l: &Liouvillian, rho0: &DensityMatrix, t_final: f64, dt: f64) -> Result<Evolution> {
    if rho0.config() != l.config {
        return Err(Error::DimensionMismatch { expected: l.config.dim(), got: rho0.dim() });
    }
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(Error::InvalidParameter(format!("need dt > 0 and t_final >= 0, got dt={dt}, t_final={t_final}")));
    }
    if t_final == 0.0 {
        return Ok(Evolution { rho: rho0.clone(), steps: 0, dt, hermiticity_correction: 0.0, trace_correction: 0.0 });
    }
    let steps = (t_final / dt).ceil() as usize;
    let h = t_final / steps as f64;
    let mut st = Stepper::new(l, false);
    let mut v = st.pack(rho0.matrix());
    for step in 1..=steps {
        st.rk4_step(&mut v, h);
        if step % 64 == 0 || step == steps {
            check_trace(&st, &v, step as f64 * h)?;
        }
    }
    let raw = DensityMatrix::from_matrix_unchecked(l.config, st.unpack(&v))?;
    let (rho, herm, drift) = raw.symmetrized_normalized();
    Ok(Evolution { rho, steps, dt: h, hermiticity_correction: herm, trace_correction: drift })
}

fn check_trace(st: &Stepper<'_>, v: &[C64], time: f64) -> Result<()> {
    let tr = st.trace(v);
    let drift = (tr - C64::from(1.0)).norm();
    if !drift.is_finite() || drift > MAX_TRACE_DRIFT {
        return Err(Error::StepInstability { time, trace_drift: drift });
    }
    Ok(())
}

/// A stable RK4 step for the generator, from the Gershgorin bound on its
/// spectrum.
pub fn stable_dt(l: &Liouvillian) -> f64 {
    2.0 / l.superop.max_abs_row_sum().max(1e-12)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SteadyStateOptions {
    /// Target for `‖L vec(ρ)‖∞`.
    pub tol: f64,
    /// RK4 step; `None` picks [`stable_dt`].
    pub dt: Option<f64>,
    /// Length of the first evolution segment. Each later segment doubles the
    /// total horizon.
    pub initial_horizon: f64,
    pub max_horizon: f64,
    /// Time between residual checks inside a segment.
    pub check_interval: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self { tol: 1e-8, dt: None, initial_horizon: 20.0, max_horizon: 20_000.0, check_interval: 2.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    pub residual: f64,
    /// Total evolution time used.
    pub horizon: f64,
    pub dt: f64,
    pub top_level_population: f64,
    pub truncation_warning: bool,
}

/// Steady state by long-time evolution from the vacuum, doubling the horizon
/// until the residual drops below `opts.tol`.
pub fn steady_state(l: &Liouvillian, opts: &SteadyStateOptions) -> Result<SteadyState> {
    let d = l.config.dim();
    let dt = opts.dt.unwrap_or_else(|| stable_dt(l));
    let mut st = Stepper::new(l, true);
    let mut vac = CMatrix::zeros(d, d);
    vac[(0, 0)] = C64::from(1.0);
    let mut v = st.pack(&vac);

    let steps_per_check = ((opts.check_interval / dt).ceil() as usize).max(1);
    let mut t = 0.0;
    let mut segment_end = opts.initial_horizon.min(opts.max_horizon);
    let mut residual = st.residual(&v);
    loop {
        while t < segment_end && residual >= opts.tol {
            for _ in 0..steps_per_check {
                st.rk4_step(&mut v, dt);
            }
            t += steps_per_check as f64 * dt;
            check_trace(&st, &v, t)?;
            let tr = st.trace(&v);
            v.iter_mut().for_each(|z| *z /= tr);
            residual = st.residual(&v);
        }
        if residual < opts.tol {
            break;
        }
        if segment_end >= opts.max_horizon {
            return Err(Error::NotConverged { residual, tol: opts.tol, horizon: t });
        }
        segment_end = (2.0 * segment_end).min(opts.max_horizon);
    }

    let raw = DensityMatrix::from_matrix_unchecked(l.config, st.unpack(&v))?;
    let (rho, _, _) = raw.symmetrized_normalized();
    rho.validate()?;
    let residual = l.residual(&rho)?;
    let top = rho.top_level_population();
    let warn = rho.truncation_warning();
    if warn {
        log::warn!("truncation N = {}: top-level population {top:e}", l.config.n_levels());
    }
    Ok(SteadyState { rho, residual, horizon: t, dt, top_level_population: top, truncation_warning: warn })
}

/// Steady state from the dense kernel of the generator, for small spaces.
/// One diagonal row of the generator is replaced by the trace functional and
/// the resulting linear system is solved by LU.
pub fn null_space_steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    let d = l.config.dim();
    let (op, embed): (&CsrMatrix, Option<&[usize]>) = match &l.even_sector {
        Some((idx, sub)) => (sub, Some(idx.as_slice())),
        None => (&l.superop, None),
    };
    let m = op.nrows();
    if m > MAX_DENSE_DIM {
        return Err(Error::InvalidConfig(format!("dense null-space solve limited to dimension {MAX_DENSE_DIM}, got {m}")));
    }
    let full_index = |p: usize| embed.map_or(p, |idx| idx[p]);
    let is_diag = |p: usize| full_index(p) % d == full_index(p) / d;

    let mut a = op.to_dense();
    // the (0,0) entry of ρ is stored first in either representation
    for c in 0..m {
        a[(0, c)] = if is_diag(c) { C64::from(1.0) } else { C64::from(0.0) };
    }
    let mut b = DVector::<C64>::zeros(m);
    b[0] = C64::from(1.0);
    let x = a.lu().solve(&b).ok_or_else(|| Error::LinearSolve("singular generator".into()))?;

    let mut rho = CMatrix::zeros(d, d);
    for p in 0..m {
        rho.as_mut_slice()[full_index(p)] = x[p];
    }
    let raw = DensityMatrix::from_matrix_unchecked(l.config, rho)?;
    let (rho, _, _) = raw.symmetrized_normalized();
    rho.validate()?;
    Ok(rho)
}

/// Fock truncation used for the two-mode steady state, raised in steps while
/// the top retained level is too populated.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub n_levels: usize,
    pub max_levels: usize,
    pub step: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { n_levels: 14, max_levels: 20, step: 2 }
    }
}

impl TruncationPolicy {
    pub fn fixed(n_levels: usize) -> Self {
        Self { n_levels, max_levels: n_levels, step: 1 }
    }
}

/// Quantum steady state and its scalar observables at one parameter point.
#[derive(Debug, Clone)]
pub struct QuantumPoint {
    pub params: ModelParams,
    pub n_levels: usize,
    pub steady: SteadyState,
    /// Reduced state of mode 1.
    pub reduced: DensityMatrix,
    pub mean_n1: f64,
    pub mean_n2: f64,
}

pub fn solve_point(params: &ModelParams, policy: &TruncationPolicy, opts: &SteadyStateOptions) -> Result<QuantumPoint> {
    let mut n = policy.n_levels;
    loop {
        let config = FockConfig::two_mode(n)?;
        let l = build_liouvillian(config, params)?;
        let steady = steady_state(&l, opts)?;
        let next = n + policy.step.max(1);
        if steady.truncation_warning && next <= policy.max_levels {
            log::info!("eps = {}: raising truncation {n} -> {next}", params.eps);
            n = next;
            continue;
        }
        let single = config.single_mode();
        let num = number(single)?;
        let mean_n1 = expectation(&steady.rho, &on_mode(&num, 1)?)?.re;
        let mean_n2 = expectation(&steady.rho, &on_mode(&num, 2)?)?.re;
        let reduced = partial_trace(&steady.rho, 1)?;
        return Ok(QuantumPoint { params: *params, n_levels: n, steady, reduced, mean_n1, mean_n2 });
    }
}

/// One row of the mean-photon sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonRow {
    pub eps: f64,
    pub mean_n1: f64,
    pub mean_n2: f64,
    pub residual: f64,
    pub top_level_pop: f64,
    pub n_levels: usize,
}

impl From<&QuantumPoint> for PhotonRow {
    fn from(q: &QuantumPoint) -> Self {
        Self {
            eps: q.params.eps,
            mean_n1: q.mean_n1,
            mean_n2: q.mean_n2,
            residual: q.steady.residual,
            top_level_pop: q.steady.top_level_population,
            n_levels: q.n_levels,
        }
    }
}

/// Mean photon numbers of both modes over a parameter grid. Points are solved
/// independently in parallel.
pub fn mean_photon_sweep(
    policy: &TruncationPolicy,
    params_grid: &[ModelParams],
    opts: &SteadyStateOptions,
) -> Result<Vec<PhotonRow>> {
    if params_grid.is_empty() {
        return Err(Error::Empty("parameter grid"));
    }
    params_grid.par_iter().map(|p| solve_point(p, policy, opts).map(|q| PhotonRow::from(&q))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{max_abs_diff, swap_modes};

    fn p(eps: f64) -> ModelParams {
        ModelParams { omega: 2.0, k1: 1.0, k2: 0.2, eps }
    }

    /// Deterministic pseudo-random density matrix.
    pub(crate) fn random_rho(config: FockConfig, seed: u64) -> DensityMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim();
        let g = CMatrix::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = &g * g.adjoint();
        let tr = m.trace();
        DensityMatrix::new(config, m / tr).unwrap()
    }

    #[test]
    fn hamiltonian_uncoupled_is_diagonal() {
        let cfg = FockConfig::two_mode(4).unwrap();
        let h = build_hamiltonian(cfg, &p(0.0)).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let want = if i == j { 2.0 * ((i / 4) + (i % 4)) as f64 } else { 0.0 };
                assert!((h.matrix()[(i, j)] - C64::from(want)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        for eps in [0.3, 1.3, 1.99] {
            let h = build_hamiltonian(FockConfig::two_mode(5).unwrap(), &p(eps)).unwrap();
            assert!(h.hermiticity_error() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_matches_kronecker_assembly() {
        // assemble each term straight from nalgebra Kronecker products
        let n = 3;
        let (omega, eps) = (2.0, 1.0);
        let a = annihilation(FockConfig::single(n).unwrap()).unwrap().into_matrix();
        let ad = a.adjoint();
        let id = CMatrix::identity(n, n);
        let t_free = ((&ad * &a).kronecker(&id) + id.kronecker(&(&ad * &a))) * C64::from(omega);
        let t_hop = (ad.kronecker(&a) + a.kronecker(&ad)) * C64::from(eps / 2.0);
        let t_pair = (ad.kronecker(&ad) + a.kronecker(&a)) * C64::from(-eps / 2.0);
        let t_sq = ((&ad * &ad).kronecker(&id) + id.kronecker(&(&ad * &ad))
            - (&a * &a).kronecker(&id)
            - id.kronecker(&(&a * &a)))
            * C64::new(0.0, -eps / 4.0);
        let want = t_free + t_hop + t_pair + t_sq;
        let got = build_hamiltonian(FockConfig::two_mode(n).unwrap(), &ModelParams { omega, k1: 1.0, k2: 0.2, eps })
            .unwrap();
        assert!(max_abs_diff(got.matrix(), &want) < 1e-14);
    }

    #[test]
    fn dissipator_examples() {
        let cfg = FockConfig::single(5).unwrap();
        let a = annihilation(cfg).unwrap();
        let proj = |k: usize| DensityMatrix::fock(cfg, k).unwrap().into_matrix();

        let out = lindblad_dissipator(&a, &DensityMatrix::fock(cfg, 1).unwrap()).unwrap();
        assert!(max_abs_diff(&out, &(proj(0) - proj(1))) < 1e-15);

        let out = lindblad_dissipator(&a, &DensityMatrix::fock(cfg, 0).unwrap()).unwrap();
        assert!(out.iter().all(|z| z.norm() == 0.0));

        let a2 = a.compose(&a).unwrap();
        let out = lindblad_dissipator(&a2, &DensityMatrix::fock(cfg, 3).unwrap()).unwrap();
        let want = (proj(1) - proj(3)) * C64::from(6.0);
        assert!(max_abs_diff(&out, &want) < 1e-13);
    }

    #[test]
    fn dissipator_is_traceless_and_hermitian() {
        let cfg = FockConfig::single(6).unwrap();
        let ops = [creation(cfg).unwrap(), annihilation(cfg).unwrap(), {
            let a = annihilation(cfg).unwrap();
            a.compose(&a).unwrap()
        }];
        for seed in 0..5 {
            let rho = random_rho(cfg, seed);
            for op in &ops {
                let out = lindblad_dissipator(op, &rho).unwrap();
                assert!(out.trace().norm() < 1e-12);
                assert!(max_abs_diff(&out, &out.adjoint()) < 1e-12);
            }
        }
        let other = annihilation(FockConfig::single(4).unwrap()).unwrap();
        assert!(lindblad_dissipator(&other, &random_rho(cfg, 0)).is_err());
    }

    #[test]
    fn superop_matches_direct_rhs() {
        let cfg = FockConfig::two_mode(4).unwrap();
        let l = build_liouvillian(cfg, &p(1.3)).unwrap();
        for seed in 0..20 {
            let rho = random_rho(cfg, seed);
            let vec_path = l.apply(rho.matrix()).unwrap();
            let direct = l.apply_direct(rho.matrix()).unwrap();
            assert!(max_abs_diff(&vec_path, &direct) < 1e-10);
            assert!(vec_path.trace().norm() < 1e-12);
            assert!(max_abs_diff(&vec_path, &vec_path.adjoint()) < 1e-12);
        }
    }

    #[test]
    fn unitary_generator_is_a_commutator() {
        let cfg = FockConfig::two_mode(3).unwrap();
        let params = ModelParams { omega: 2.0, k1: 0.0, k2: 0.0, eps: 0.0 };
        let l = build_liouvillian(cfg, &params).unwrap();
        let rho = random_rho(cfg, 7);
        let h = build_hamiltonian(cfg, &params).unwrap().into_matrix();
        let want = (&h * rho.matrix() - rho.matrix() * &h) * C64::new(0.0, -1.0);
        assert!(max_abs_diff(&l.apply(rho.matrix()).unwrap(), &want) < 1e-13);
        let diag = DensityMatrix::product_fock(cfg, 1, 2).unwrap();
        assert!(l.residual(&diag).unwrap() < 1e-15);
    }

    #[test]
    fn generator_commutes_with_swap_and_parity() {
        let cfg = FockConfig::two_mode(4).unwrap();
        let l = build_liouvillian(cfg, &p(1.7)).unwrap();
        assert!(l.preserves_parity());
        for seed in 0..5 {
            let rho = random_rho(cfg, 100 + seed);
            let lhs = swap_modes(
                &DensityMatrix::from_matrix_unchecked(cfg, l.apply(rho.matrix()).unwrap()).unwrap(),
            )
            .unwrap();
            let rhs = l.apply(swap_modes(&rho).unwrap().matrix()).unwrap();
            assert!(max_abs_diff(lhs.matrix(), &rhs) < 1e-10);

            let parity = CMatrix::from_diagonal(&DVector::from_fn(16, |i, _| {
                C64::from(if (i / 4 + i % 4) % 2 == 0 { 1.0 } else { -1.0 })
            }));
            let lhs = &parity * l.apply(rho.matrix()).unwrap() * &parity;
            let rhs = l.apply(&(&parity * rho.matrix() * &parity)).unwrap();
            assert!(max_abs_diff(&lhs, &rhs) < 1e-10);
        }
    }

    #[test]
    fn budget_is_enforced_before_allocation() {
        let cfg = FockConfig::two_mode(6).unwrap();
        let err = build_liouvillian_with_budget(cfg, &p(1.0), 1000).unwrap_err();
        match err {
            Error::MemoryBudget { required, budget } => {
                assert!(required > budget);
                assert_eq!(budget, 1000);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn evolve_zero_time_is_identity() {
        let cfg = FockConfig::two_mode(3).unwrap();
        let l = build_liouvillian(cfg, &p(1.0)).unwrap();
        let rho = random_rho(cfg, 3);
        let out = evolve(&l, &rho, 0.0, 0.01).unwrap();
        assert_eq!(out.rho, rho);
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn unitary_evolution_conserves_purity() {
        let cfg = FockConfig::two_mode(4).unwrap();
        let params = ModelParams { omega: 2.0, k1: 0.0, k2: 0.0, eps: 0.0 };
        let l = build_liouvillian(cfg, &params).unwrap();
        let mut psi = DVector::<C64>::zeros(16);
        psi[1] = C64::new(0.6, 0.0);
        psi[6] = C64::new(0.0, 0.8);
        let rho = DensityMatrix::pure(cfg, &psi).unwrap();
        let out = evolve(&l, &rho, 10.0, 0.005).unwrap();
        assert!((out.rho.purity() - 1.0).abs() < 1e-8);
        assert!(out.trace_correction < 1e-10);
    }

    #[test]
    fn evolution_stays_positive() {
        let cfg = FockConfig::two_mode(4).unwrap();
        let l = build_liouvillian(cfg, &p(0.8)).unwrap();
        let dt = stable_dt(&l);
        let mut rho = random_rho(cfg, 11);
        for _ in 0..5 {
            rho = evolve(&l, &rho, 1.0, dt).unwrap().rho;
            assert!(rho.min_eigenvalue() > -1e-6);
        }
    }

    #[test]
    fn unstable_step_is_reported() {
        let cfg = FockConfig::two_mode(4).unwrap();
        let l = build_liouvillian(cfg, &p(1.0)).unwrap();
        let rho = random_rho(cfg, 1);
        let err = evolve(&l, &rho, 20.0, 50.0 * stable_dt(&l)).unwrap_err();
        assert!(matches!(err, Error::StepInstability { .. }), "{err}");
    }

    #[test]
    fn pure_loss_decays_to_vacuum() {
        let cfg = FockConfig::two_mode(4).unwrap();
        let params = ModelParams { omega: 2.0, k1: 0.0, k2: 0.0, eps: 1.0 };
        let single = cfg.single_mode();
        let h = on_mode(&number(single).unwrap(), 1)
            .unwrap()
            .add(&on_mode(&number(single).unwrap(), 2).unwrap())
            .unwrap()
            .scale(C64::from(params.omega));
        let a = annihilation(single).unwrap();
        let channels = (1..=2).map(|m| Channel { rate: params.eps, op: on_mode(&a, m).unwrap() }).collect();
        let l = Liouvillian::from_parts(cfg, params, h, channels, DEFAULT_NNZ_BUDGET).unwrap();
        let start = random_rho(cfg, 5);
        let vac = DensityMatrix::product_fock(cfg, 0, 0).unwrap();
        let out = evolve(&l, &start, 40.0, stable_dt(&l)).unwrap();
        assert!(out.rho.trace_distance(&vac).unwrap() < 1e-8);
        let dense = null_space_steady_state(&l).unwrap();
        assert!(dense.trace_distance(&vac).unwrap() < 1e-10);
    }

    #[test]
    fn coupling_terms_keep_lossy_state_away_from_vacuum() {
        // with k1 = k2 = 0 the coupling Hamiltonian still squeezes and creates
        // pairs, so the coupled model does not relax to the vacuum
        let cfg = FockConfig::two_mode(6).unwrap();
        let params = ModelParams { omega: 2.0, k1: 0.0, k2: 0.0, eps: 1.0 };
        let l = build_liouvillian(cfg, &params).unwrap();
        let ss = steady_state(&l, &SteadyStateOptions::default()).unwrap();
        let dense = null_space_steady_state(&l).unwrap();
        assert!(ss.rho.trace_distance(&dense).unwrap() < 1e-6);
        let vac = DensityMatrix::product_fock(cfg, 0, 0).unwrap();
        assert!(dense.trace_distance(&vac).unwrap() > 1e-2);
    }

    #[test]
    fn single_mode_evolution_reaches_kernel() {
        let cfg = FockConfig::single(16).unwrap();
        let l = build_single_mode_liouvillian(cfg, &p(0.0)).unwrap();
        let kernel = null_space_steady_state(&l).unwrap();
        let out = evolve(&l, &DensityMatrix::fock(cfg, 0).unwrap(), 150.0, stable_dt(&l)).unwrap();
        assert!(out.rho.trace_distance(&kernel).unwrap() < 1e-6);
        // the uncoupled oscillator's steady state is diagonal in the Fock basis
        let off: f64 = (0..16).flat_map(|i| (0..16).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| kernel.matrix()[(i, j)].norm())
            .fold(0.0, f64::max);
        assert!(off < 1e-12);
    }

    #[test]
    fn parity_sector_matches_full_space_evolution() {
        let cfg = FockConfig::two_mode(4).unwrap();
        let l = build_liouvillian(cfg, &p(1.3)).unwrap();
        assert!(l.preserves_parity());
        let ss = steady_state(&l, &SteadyStateOptions { tol: 1e-10, ..Default::default() }).unwrap();
        let full = evolve(&l, &DensityMatrix::product_fock(cfg, 0, 0).unwrap(), 300.0, stable_dt(&l)).unwrap();
        assert!(ss.rho.trace_distance(&full.rho).unwrap() < 1e-6);
    }

    #[test]
    fn steady_state_is_swap_symmetric() {
        let cfg = FockConfig::two_mode(5).unwrap();
        let l = build_liouvillian(cfg, &p(1.3)).unwrap();
        let ss = steady_state(&l, &SteadyStateOptions::default()).unwrap();
        let sw = swap_modes(&ss.rho).unwrap();
        assert!(max_abs_diff(ss.rho.matrix(), sw.matrix()) < 1e-8);
        assert!(ss.residual < 1e-8);
    }

    #[test]
    fn sweep_rejects_empty_grid() {
        let err = mean_photon_sweep(&TruncationPolicy::fixed(4), &[], &SteadyStateOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Empty(_)));
    }

    #[test]
    fn non_convergence_is_reported() {
        let cfg = FockConfig::two_mode(4).unwrap();
        let l = build_liouvillian(cfg, &p(1.0)).unwrap();
        let opts = SteadyStateOptions { tol: 1e-14, initial_horizon: 1.0, max_horizon: 2.0, ..Default::default() };
        assert!(matches!(steady_state(&l, &opts), Err(Error::NotConverged { .. })));
    }
}
