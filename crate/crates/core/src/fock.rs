//! Operator algebra on a truncated Fock space.
//!
//! Basis states are `|0⟩ … |N−1⟩` per mode. Two-mode objects are ordered
//! mode 1 ⊗ mode 2, i.e. the basis index of `|n1, n2⟩` is `n1 * N + n2`,
//! so `a1 = a ⊗ I` and `a2 = I ⊗ a`. This ordering is fixed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

pub type CMatrix = DMatrix<C64>;

/// Tolerances of the density-matrix invariants.
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const EIGEN_TOL: f64 = 1e-8;

/// Population of the highest retained level above which truncation is
/// considered inadequate.
pub const TRUNCATION_WARN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockConfig {
    n_levels: usize,
    n_modes: usize,
}

impl FockConfig {
    pub fn new(n_levels: usize, n_modes: usize) -> Result<Self> {
        if n_levels < 2 {
            return Err(Error::InvalidConfig(format!("n_levels must be >= 2, got {n_levels}")));
        }
        if !(1..=2).contains(&n_modes) {
            return Err(Error::InvalidConfig(format!("n_modes must be 1 or 2, got {n_modes}")));
        }
        Ok(Self { n_levels, n_modes })
    }

    pub fn single(n_levels: usize) -> Result<Self> {
        Self::new(n_levels, 1)
    }

    pub fn two_mode(n_levels: usize) -> Result<Self> {
        Self::new(n_levels, 2)
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Total Hilbert-space dimension, `n_levels ^ n_modes`.
    pub fn dim(&self) -> usize {
        self.n_levels.pow(self.n_modes as u32)
    }

    pub fn single_mode(&self) -> Self {
        Self { n_levels: self.n_levels, n_modes: 1 }
    }

    fn require_modes(&self, n_modes: usize) -> Result<()> {
        if self.n_modes != n_modes {
            return Err(Error::InvalidConfig(format!(
                "expected a {n_modes}-mode configuration, got {} modes",
                self.n_modes
            )));
        }
        Ok(())
    }
}

/// A square operator on the space described by its [`FockConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    config: FockConfig,
    data: CMatrix,
}

impl OperatorMatrix {
    pub fn from_matrix(config: FockConfig, data: CMatrix) -> Result<Self> {
        check_square(&data, config.dim())?;
        Ok(Self { config, data })
    }

    pub fn identity(config: FockConfig) -> Self {
        let d = config.dim();
        Self { config, data: CMatrix::identity(d, d) }
    }

    pub fn zeros(config: FockConfig) -> Self {
        let d = config.dim();
        Self { config, data: CMatrix::zeros(d, d) }
    }

    pub fn config(&self) -> FockConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn dag(&self) -> Self {
        Self { config: self.config, data: self.data.adjoint() }
    }

    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        self.same_space(rhs)?;
        Ok(Self { config: self.config, data: &self.data * &rhs.data })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.same_space(rhs)?;
        Ok(Self { config: self.config, data: &self.data + &rhs.data })
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self { config: self.config, data: &self.data * factor }
    }

    pub fn commutator(&self, rhs: &Self) -> Result<Self> {
        self.same_space(rhs)?;
        Ok(Self { config: self.config, data: &self.data * &rhs.data - &rhs.data * &self.data })
    }

    /// Largest elementwise deviation `max |A − A†|`.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs_diff(&self.data, &self.data.adjoint())
    }

    fn same_space(&self, rhs: &Self) -> Result<()> {
        if self.config != rhs.config {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: rhs.dim() });
        }
        Ok(())
    }
}

/// A Hermitian, unit-trace, positive semidefinite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    config: FockConfig,
    data: CMatrix,
}

impl DensityMatrix {
    /// Wraps `data` after checking every density-matrix invariant.
    pub fn new(config: FockConfig, data: CMatrix) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(config, data)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps `data`, checking only the shape. Used for intermediate iterates
    /// that are validated later.
    pub fn from_matrix_unchecked(config: FockConfig, data: CMatrix) -> Result<Self> {
        check_square(&data, config.dim())?;
        Ok(Self { config, data })
    }

    pub fn pure(config: FockConfig, psi: &DVector<C64>) -> Result<Self> {
        if psi.len() != config.dim() {
            return Err(Error::DimensionMismatch { expected: config.dim(), got: psi.len() });
        }
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let psi = psi / C64::from(norm);
        Ok(Self { config, data: &psi * psi.adjoint() })
    }

    /// `|n⟩⟨n|` on a single mode.
    pub fn fock(config: FockConfig, n: usize) -> Result<Self> {
        config.require_modes(1)?;
        Self::basis_projector(config, n)
    }

    /// `|n1, n2⟩⟨n1, n2|` on two modes.
    pub fn product_fock(config: FockConfig, n1: usize, n2: usize) -> Result<Self> {
        config.require_modes(2)?;
        let n = config.n_levels();
        if n1 >= n || n2 >= n {
            return Err(Error::InvalidState(format!("|{n1},{n2}⟩ outside truncation {n}")));
        }
        Self::basis_projector(config, n1 * n + n2)
    }

    fn basis_projector(config: FockConfig, index: usize) -> Result<Self> {
        let d = config.dim();
        if index >= d {
            return Err(Error::InvalidState(format!("basis index {index} outside dimension {d}")));
        }
        let mut data = CMatrix::zeros(d, d);
        data[(index, index)] = C64::from(1.0);
        Ok(Self { config, data })
    }

    pub fn maximally_mixed(config: FockConfig) -> Self {
        let d = config.dim();
        Self { config, data: CMatrix::identity(d, d) / C64::from(d as f64) }
    }

    /// Truncated coherent state `|β⟩`, built from the exponential series and
    /// renormalized on the retained levels.
    pub fn coherent(config: FockConfig, beta: C64) -> Result<Self> {
        config.require_modes(1)?;
        let n = config.n_levels();
        let mut psi = DVector::<C64>::zeros(n);
        let mut amp = C64::from(1.0);
        for k in 0..n {
            if k > 0 {
                amp *= beta / (k as f64).sqrt();
            }
            psi[k] = amp;
        }
        Self::pure(config, &psi)
    }

    pub fn config(&self) -> FockConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_abs_diff(&self.data, &self.data.adjoint())
    }

    pub fn purity(&self) -> f64 {
        // Tr(ρ²) = Σ |ρ_ij|² for Hermitian ρ
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.data + self.data.adjoint()) * C64::from(0.5);
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian: max|ρ−ρ†| = {herm:e}")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let min_ev = self.min_eigenvalue();
        if min_ev < -EIGEN_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_ev:e}")));
        }
        Ok(())
    }

    /// `(ρ + ρ†)/2` divided by its trace. Returns the corrected state with the
    /// hermiticity error and trace drift that were removed.
    pub fn symmetrized_normalized(&self) -> (Self, f64, f64) {
        let herm = self.hermiticity_error();
        let sym = (&self.data + self.data.adjoint()) * C64::from(0.5);
        let tr = sym.trace().re;
        let drift = (tr - 1.0).abs();
        (Self { config: self.config, data: sym / C64::from(tr) }, herm, drift)
    }

    /// Trace distance `½ ‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        if self.config != other.config {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let diff = &self.data - &other.data;
        let herm = (&diff + diff.adjoint()) * C64::from(0.5);
        Ok(0.5 * herm.symmetric_eigenvalues().iter().map(|v| v.abs()).sum::<f64>())
    }

    /// Population of the highest retained Fock level, maximized over modes.
    pub fn top_level_population(&self) -> f64 {
        match self.config.n_modes() {
            1 => self.data[(self.dim() - 1, self.dim() - 1)].re,
            _ => {
                let n = self.config.n_levels();
                let (mut p1, mut p2) = (0.0, 0.0);
                for k in 0..n {
                    p1 += self.data[((n - 1) * n + k, (n - 1) * n + k)].re;
                    p2 += self.data[(k * n + n - 1, k * n + n - 1)].re;
                }
                f64::max(p1, p2)
            }
        }
    }

    pub fn truncation_warning(&self) -> bool {
        self.top_level_population() > TRUNCATION_WARN
    }
}

fn check_square(data: &CMatrix, dim: usize) -> Result<()> {
    if data.nrows() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: data.nrows() });
    }
    if data.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: data.ncols() });
    }
    Ok(())
}

pub(crate) fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Single-mode annihilation operator: `a|n⟩ = √n |n−1⟩`.
pub fn annihilation(config: FockConfig) -> Result<OperatorMatrix> {
    config.require_modes(1)?;
    let n = config.n_levels();
    let mut data = CMatrix::zeros(n, n);
    for k in 1..n {
        data[(k - 1, k)] = C64::from((k as f64).sqrt());
    }
    Ok(OperatorMatrix { config, data })
}

pub fn creation(config: FockConfig) -> Result<OperatorMatrix> {
    Ok(annihilation(config)?.dag())
}

/// `a†a`, built directly as `diag(0, 1, …, N−1)`.
pub fn number(config: FockConfig) -> Result<OperatorMatrix> {
    config.require_modes(1)?;
    let n = config.n_levels();
    let data = CMatrix::from_diagonal(&DVector::from_fn(n, |k, _| C64::from(k as f64)));
    Ok(OperatorMatrix { config, data })
}

/// Kronecker product `A ⊗ B` of two single-mode operators; `A` acts on mode 1.
pub fn tensor(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    a.config.require_modes(1)?;
    b.config.require_modes(1)?;
    if a.config != b.config {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let config = FockConfig::two_mode(a.config.n_levels())?;
    Ok(OperatorMatrix { config, data: a.data.kronecker(&b.data) })
}

/// Embeds a single-mode operator on `mode` (1 or 2) of the two-mode space.
pub fn on_mode(op: &OperatorMatrix, mode: usize) -> Result<OperatorMatrix> {
    let id = OperatorMatrix::identity(op.config);
    match mode {
        1 => tensor(op, &id),
        2 => tensor(&id, op),
        _ => Err(Error::InvalidConfig(format!("mode must be 1 or 2, got {mode}"))),
    }
}

/// Reduced single-mode state keeping `keep_mode` (1 or 2).
pub fn partial_trace(rho: &DensityMatrix, keep_mode: usize) -> Result<DensityMatrix> {
    rho.config.require_modes(2)?;
    let n = rho.config.n_levels();
    if rho.dim() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, got: rho.dim() });
    }
    let m = &rho.data;
    let data = match keep_mode {
        1 => CMatrix::from_fn(n, n, |i, j| (0..n).map(|k| m[(i * n + k, j * n + k)]).sum()),
        2 => CMatrix::from_fn(n, n, |i, j| (0..n).map(|k| m[(k * n + i, k * n + j)]).sum()),
        _ => return Err(Error::InvalidConfig(format!("keep_mode must be 1 or 2, got {keep_mode}"))),
    };
    Ok(DensityMatrix { config: rho.config.single_mode(), data })
}

/// Exchanges the two modes of a two-mode state.
pub fn swap_modes(rho: &DensityMatrix) -> Result<DensityMatrix> {
    rho.config.require_modes(2)?;
    let n = rho.config.n_levels();
    let swap = |i: usize| (i % n) * n + i / n;
    let data = CMatrix::from_fn(rho.dim(), rho.dim(), |i, j| rho.data[(swap(i), swap(j))]);
    Ok(DensityMatrix { config: rho.config, data })
}

/// `Tr(ρ · op)`.
pub fn expectation(rho: &DensityMatrix, op: &OperatorMatrix) -> Result<C64> {
    if rho.config != op.config {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: op.dim() });
    }
    let (r, o) = (&rho.data, &op.data);
    let d = rho.dim();
    let mut acc = C64::from(0.0);
    for i in 0..d {
        for k in 0..d {
            acc += r[(i, k)] * o[(k, i)];
        }
    }
    Ok(acc)
}

/// Fock-level occupations of a single-mode state.
pub fn fock_populations(rho: &DensityMatrix) -> Result<Vec<f64>> {
    rho.config.require_modes(1)?;
    Ok(rho.data.diagonal().iter().map(|z| z.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    /// Random PSD, unit-trace matrix `G G† / Tr`.
    fn random_density(config: FockConfig, seed: &[f64]) -> DensityMatrix {
        let d = config.dim();
        let g = CMatrix::from_fn(d, d, |i, j| {
            let k = (i * d + j) % seed.len();
            C64::new(seed[k] * ((i + 2 * j) as f64).cos(), seed[(k + 1) % seed.len()] * ((3 * i + j) as f64).sin())
        });
        let m = &g * g.adjoint();
        let tr = m.trace();
        DensityMatrix::new(config, m / tr).unwrap()
    }

    #[test]
    fn annihilation_smallest() {
        let a = annihilation(FockConfig::single(2).unwrap()).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        assert_eq!(a.matrix(), &expected);
    }

    #[test]
    fn number_operator_from_ladder() {
        let cfg = FockConfig::single(3).unwrap();
        let a = annihilation(cfg).unwrap();
        let n = a.dag().compose(&a).unwrap();
        for (k, z) in n.matrix().diagonal().iter().enumerate() {
            assert!((z - c(k as f64)).norm() < 1e-15);
        }
        assert!(max_abs_diff(n.matrix(), number(cfg).unwrap().matrix()) < 1e-15);
    }

    #[test]
    fn ladder_entries_exact() {
        let cfg = FockConfig::single(7).unwrap();
        let a = annihilation(cfg).unwrap();
        for m in 0..7 {
            for n in 0..7 {
                let want = if m + 1 == n { (n as f64).sqrt() } else { 0.0 };
                assert_eq!(a.matrix()[(m, n)], c(want));
            }
        }
    }

    #[test]
    fn truncated_commutator_defect() {
        let n = 10;
        let a = annihilation(FockConfig::single(n).unwrap()).unwrap();
        let comm = a.commutator(&a.dag()).unwrap();
        for i in 0..n {
            for j in 0..n {
                let want = match (i == j, i == n - 1) {
                    (true, false) => 1.0,
                    (true, true) => 1.0 - n as f64,
                    _ => 0.0,
                };
                assert!((comm.matrix()[(i, j)] - c(want)).norm() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn tensor_identities() {
        let c2 = FockConfig::single(2).unwrap();
        let id = OperatorMatrix::identity(c2);
        let i4 = tensor(&id, &id).unwrap();
        assert_eq!(i4.matrix(), &CMatrix::identity(4, 4));

        let c3 = FockConfig::single(3).unwrap();
        let a = annihilation(c3).unwrap();
        let a1 = on_mode(&a, 1).unwrap();
        let a2 = on_mode(&a, 2).unwrap();
        let prod = a1.compose(&a2).unwrap();
        assert!(max_abs_diff(prod.matrix(), tensor(&a, &a).unwrap().matrix()) < 1e-15);
    }

    #[test]
    fn tensor_rejects_mismatch() {
        let a = annihilation(FockConfig::single(3).unwrap()).unwrap();
        let b = annihilation(FockConfig::single(4).unwrap()).unwrap();
        assert!(matches!(tensor(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn number_expectation_on_product_state() {
        let c3 = FockConfig::single(3).unwrap();
        let n1 = on_mode(&number(c3).unwrap(), 1).unwrap();
        let rho = DensityMatrix::product_fock(FockConfig::two_mode(3).unwrap(), 1, 2).unwrap();
        assert!((expectation(&rho, &n1).unwrap() - c(1.0)).norm() < 1e-14);
        let n2 = on_mode(&number(c3).unwrap(), 2).unwrap();
        assert!((expectation(&rho, &n2).unwrap() - c(2.0)).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_examples() {
        let c3 = FockConfig::single(3).unwrap();
        let sigma = random_density(c3, &[0.3, -1.2, 0.7, 2.0]);
        let tau = random_density(c3, &[1.1, 0.4, -0.5]);
        let prod = OperatorMatrix::from_matrix(
            FockConfig::two_mode(3).unwrap(),
            sigma.matrix().kronecker(tau.matrix()),
        )
        .unwrap();
        let rho = DensityMatrix::new(prod.config(), prod.into_matrix()).unwrap();
        let red1 = partial_trace(&rho, 1).unwrap();
        let red2 = partial_trace(&rho, 2).unwrap();
        assert!(max_abs_diff(red1.matrix(), sigma.matrix()) < 1e-14);
        assert!(max_abs_diff(red2.matrix(), tau.matrix()) < 1e-14);

        // swapping the modes and tracing gives the other factor
        let swapped = swap_modes(&rho).unwrap();
        assert!(max_abs_diff(partial_trace(&swapped, 1).unwrap().matrix(), tau.matrix()) < 1e-14);

        let mixed = DensityMatrix::maximally_mixed(FockConfig::two_mode(4).unwrap());
        let red = partial_trace(&mixed, 2).unwrap();
        let c4 = FockConfig::single(4).unwrap();
        assert!(max_abs_diff(red.matrix(), DensityMatrix::maximally_mixed(c4).matrix()) < 1e-15);
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let cfg = FockConfig::two_mode(3).unwrap();
        let mut psi = DVector::<C64>::zeros(9);
        psi[0] = c(1.0);
        psi[4] = c(1.0);
        let rho = DensityMatrix::pure(cfg, &psi).unwrap();
        let red = partial_trace(&rho, 1).unwrap();
        let mut want = CMatrix::zeros(3, 3);
        want[(0, 0)] = c(0.5);
        want[(1, 1)] = c(0.5);
        assert!(max_abs_diff(red.matrix(), &want) < 1e-15);
    }

    #[test]
    fn partial_trace_requires_two_modes() {
        let rho = DensityMatrix::fock(FockConfig::single(3).unwrap(), 0).unwrap();
        assert!(partial_trace(&rho, 1).is_err());
    }

    #[test]
    fn expectation_examples() {
        let cfg = FockConfig::single(5).unwrap();
        let rho = DensityMatrix::fock(cfg, 2).unwrap();
        let n = number(cfg).unwrap();
        assert!((expectation(&rho, &n).unwrap() - c(2.0)).norm() < 1e-15);

        let mixed = DensityMatrix::maximally_mixed(cfg);
        let id = OperatorMatrix::identity(cfg);
        assert!((expectation(&mixed, &id).unwrap() - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn coherent_state_mean_number() {
        // exp(−|β|²) Σ |β|^{2k}/k! over the retained levels approaches |β|²
        let beta = C64::new(1.2, -0.7);
        let cfg = FockConfig::single(40).unwrap();
        let rho = DensityMatrix::coherent(cfg, beta).unwrap();
        let n = expectation(&rho, &number(cfg).unwrap()).unwrap();
        assert!((n.re - beta.norm_sqr()).abs() < 1e-10);
        assert!(n.im.abs() < 1e-14);
    }

    #[test]
    fn populations() {
        let cfg = FockConfig::single(4).unwrap();
        let p = fock_populations(&DensityMatrix::fock(cfg, 0).unwrap()).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0]);
        let p = fock_populations(&DensityMatrix::maximally_mixed(cfg)).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn invariants_are_checked() {
        let cfg = FockConfig::single(2).unwrap();
        let bad = CMatrix::from_row_slice(2, 2, &[c(0.5), c(0.3), c(0.0), c(0.5)]);
        assert!(DensityMatrix::new(cfg, bad).is_err());
        let neg = CMatrix::from_row_slice(2, 2, &[c(1.5), c(0.0), c(0.0), c(-0.5)]);
        assert!(DensityMatrix::new(cfg, neg).is_err());
        assert!(FockConfig::single(1).is_err());
        assert!(FockConfig::new(3, 3).is_err());
    }

    #[test]
    fn top_level_population_per_mode() {
        let cfg = FockConfig::two_mode(3).unwrap();
        let rho = DensityMatrix::product_fock(cfg, 0, 2).unwrap();
        assert_eq!(rho.top_level_population(), 1.0);
        assert!(rho.truncation_warning());
        let vac = DensityMatrix::product_fock(cfg, 0, 0).unwrap();
        assert_eq!(vac.top_level_population(), 0.0);
    }

    fn arb_density(n: usize) -> impl Strategy<Value = DensityMatrix> {
        let d = n * n;
        proptest::collection::vec(-1.0f64..1.0, 2 * d * d).prop_map(move |v| {
            let g = CMatrix::from_fn(d, d, |i, j| C64::new(v[2 * (i * d + j)], v[2 * (i * d + j) + 1]));
            let m = &g * g.adjoint();
            let tr = m.trace();
            DensityMatrix::new(FockConfig::two_mode(n).unwrap(), m / tr).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn partial_trace_preserves_trace_and_positivity(rho in arb_density(3)) {
            for mode in [1, 2] {
                let red = partial_trace(&rho, mode).unwrap();
                prop_assert!((red.trace().re - 1.0).abs() < 1e-12);
                prop_assert!(red.min_eigenvalue() > -1e-12);
                prop_assert!(red.validate().is_ok());
            }
        }

        #[test]
        fn expectation_is_linear(
            r1 in arb_density(2),
            r2 in arb_density(2),
            w in 0.0f64..1.0,
            ops in proptest::collection::vec(-1.0f64..1.0, 2 * 16 * 2),
        ) {
            let cfg = r1.config();
            let mk = |off: usize| OperatorMatrix::from_matrix(
                cfg,
                CMatrix::from_fn(4, 4, |i, j| C64::new(ops[off + 2 * (i * 4 + j)], ops[off + 2 * (i * 4 + j) + 1])),
            ).unwrap();
            let (a, b) = (mk(0), mk(32));
            let mix = DensityMatrix::from_matrix_unchecked(
                cfg,
                r1.matrix() * C64::from(w) + r2.matrix() * C64::from(1.0 - w),
            ).unwrap();
            let lhs = expectation(&mix, &a).unwrap();
            let rhs = expectation(&r1, &a).unwrap() * w + expectation(&r2, &a).unwrap() * (1.0 - w);
            prop_assert!((lhs - rhs).norm() < 1e-12);

            let sum = a.add(&b.scale(C64::new(0.5, -2.0))).unwrap();
            let lhs = expectation(&r1, &sum).unwrap();
            let rhs = expectation(&r1, &a).unwrap() + expectation(&r1, &b).unwrap() * C64::new(0.5, -2.0);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
