//! Minimal compressed-sparse-row complex matrix: assembly from triplets,
//! Kronecker products and a row-parallel matrix–vector product.

use rayon::prelude::*;

use crate::fock::CMatrix;
use crate::C64;

/// `(row, col, value)` entry used during assembly.
pub type Triplet = (usize, usize, C64);

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    /// Builds a matrix from unsorted triplets. Duplicates are summed and exact
    /// zeros left after summation are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<Triplet>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            if let Some((lr, _)) = last {
                if values.last().is_some_and(|z| *z == C64::from(0.0)) {
                    values.pop();
                    indices.pop();
                    indptr[lr + 1] -= 1;
                }
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        if let Some((lr, _)) = last {
            if values.last().is_some_and(|z| *z == C64::from(0.0)) {
                values.pop();
                indices.pop();
                indptr[lr + 1] -= 1;
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn from_dense(m: &CMatrix) -> Self {
        let mut trip = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let v = m[(r, c)];
                if v != C64::from(0.0) {
                    trip.push((r, c, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), trip)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![C64::from(1.0); n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = Triplet> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn transpose(&self) -> Self {
        let trip = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, trip)
    }

    pub fn conj(&self) -> Self {
        Self { values: self.values.iter().map(|v| v.conj()).collect(), ..self.clone() }
    }

    pub fn adjoint(&self) -> Self {
        self.transpose().conj()
    }

    /// Appends `scale · (A ⊗ B)` to `out`.
    pub fn kron_into(a: &Self, b: &Self, scale: C64, out: &mut Vec<Triplet>) {
        out.reserve(a.nnz() * b.nnz());
        for (ra, ca, va) in a.triplets() {
            let v = va * scale;
            for (rb, cb, vb) in b.triplets() {
                out.push((ra * b.nrows + rb, ca * b.ncols + cb, v * vb));
            }
        }
    }

    pub fn kron(a: &Self, b: &Self) -> Self {
        let mut trip = Vec::new();
        Self::kron_into(a, b, C64::from(1.0), &mut trip);
        Self::from_triplets(a.nrows * b.nrows, a.ncols * b.ncols, trip)
    }

    /// `y = A x`, parallel over rows.
    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        y.par_iter_mut().with_min_len(4096).enumerate().for_each(|(r, out)| {
            let mut acc = C64::from(0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *out = acc;
        });
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::from(0.0); self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// Largest absolute row sum; bounds the spectral radius (Gershgorin).
    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Principal submatrix on `keep` (sorted, unique indices) and the number of
    /// dropped entries that coupled kept and discarded indices.
    pub fn principal_submatrix(&self, keep: &[usize]) -> (Self, usize) {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut trip = Vec::new();
        let mut leaked = 0;
        for (new_r, &old_r) in keep.iter().enumerate() {
            for (c, v) in self.row(old_r) {
                match map[c] {
                    usize::MAX => leaked += 1,
                    new_c => trip.push((new_r, new_c, v)),
                }
            }
        }
        (Self::from_triplets(keep.len(), keep.len(), trip), leaked)
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }
}
