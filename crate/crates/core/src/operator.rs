//! Sparse operators on the product space atom ⊗ mode 1 ⊗ mode 2.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{domain, Result};
use crate::level::{AtomicLevel, LevelScheme};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

/// Basis bookkeeping for |level⟩ ⊗ |n1⟩ ⊗ |n2⟩, with `fock` states per mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertSpace {
    scheme: LevelScheme,
    fock: usize,
}

/// Decomposed basis label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisState {
    pub level: usize,
    pub n1: usize,
    pub n2: usize,
}

impl HilbertSpace {
    pub fn new(scheme: LevelScheme, fock: usize) -> Self {
        Self { scheme, fock }
    }

    pub fn scheme(&self) -> &LevelScheme {
        &self.scheme
    }

    pub fn fock(&self) -> usize {
        self.fock
    }

    pub fn dim(&self) -> usize {
        self.scheme.len() * self.fock * self.fock
    }

    pub fn index(&self, level: usize, n1: usize, n2: usize) -> usize {
        debug_assert!(level < self.scheme.len() && n1 < self.fock && n2 < self.fock);
        (level * self.fock + n1) * self.fock + n2
    }

    pub fn state(&self, index: usize) -> BasisState {
        let n2 = index % self.fock;
        let rest = index / self.fock;
        BasisState {
            level: rest / self.fock,
            n1: rest % self.fock,
            n2,
        }
    }

    pub fn level_of(&self, index: usize) -> AtomicLevel {
        self.scheme.levels()[self.state(index).level]
    }

    /// All basis indices, with their decomposition.
    pub fn basis(&self) -> impl Iterator<Item = (usize, BasisState)> + '_ {
        (0..self.dim()).map(|i| (i, self.state(i)))
    }
}

/// A complex square matrix stored as sorted, duplicate-free triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl OperatorMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, C64::new(1.0, 0.0))))
    }

    /// Builds an operator, summing duplicates and dropping exact zeros.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut acc: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for (i, j, v) in triplets {
            assert!(i < dim && j < dim, "entry ({i}, {j}) outside dimension {dim}");
            *acc.entry((i, j)).or_insert(ZERO) += v;
        }
        let entries = acc
            .into_iter()
            .filter(|(_, v)| *v != ZERO)
            .map(|((i, j), v)| (i, j, v))
            .collect();
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries
            .binary_search_by(|&(r, c, _)| (r, c).cmp(&(i, j)))
            .map(|k| self.entries[k].2)
            .unwrap_or(ZERO)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.entries.iter().map(|&(i, j, v)| (j, i, v.conj())))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_triplets(self.dim, self.entries.iter().map(|&(i, j, v)| (i, j, v * s)))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self::from_triplets(
            self.dim,
            self.entries.iter().chain(other.entries.iter()).copied(),
        ))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut by_row: Vec<Vec<(usize, C64)>> = vec![Vec::new(); self.dim];
        for &(k, j, v) in &other.entries {
            by_row[k].push((j, v));
        }
        let mut out = Vec::new();
        for &(i, k, a) in &self.entries {
            for &(j, b) in &by_row[k] {
                out.push((i, j, a * b));
            }
        }
        Ok(Self::from_triplets(self.dim, out))
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
        }
        m
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.dim);
        for &(i, j, a) in &self.entries {
            out[i] += a * v[j];
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm()).fold(0.0, f64::max)
    }

    /// max |A - A†|.
    pub fn hermiticity_deviation(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| (v - self.get(j, i).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Hermitian to within `rel_tol · max|A|`.
    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermiticity_deviation() <= rel_tol * self.max_abs()
    }

    /// The block of this operator on the given basis indices, re-indexed
    /// to `0..indices.len()`. `indices` must be sorted.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        let mut position = vec![usize::MAX; self.dim];
        for (k, &i) in indices.iter().enumerate() {
            position[i] = k;
        }
        Self::from_triplets(
            indices.len(),
            self.entries.iter().filter_map(|&(i, j, v)| {
                let (pi, pj) = (position[i], position[j]);
                (pi != usize::MAX && pj != usize::MAX).then_some((pi, pj, v))
            }),
        )
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return domain(format!("dimension mismatch: {} vs {}", self.dim, other.dim));
        }
        Ok(())
    }
}
