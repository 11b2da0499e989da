//! Compressed-row complex matrices and vectorised Lindblad superoperators.
//!
//! Density matrices are column-stacked: `vec(ρ)[i + d·j] = ρ[i, j]`.

use std::collections::BTreeMap;

use crate::hilbert::{CMatrix, C64, I, ZERO};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from (row, col, value) triplets; duplicates are summed and exact
    /// zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut acc: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            *acc.entry((r, c)).or_insert(ZERO) += v;
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(acc.len());
        let mut values = Vec::with_capacity(acc.len());
        for ((r, c), v) in acc {
            if v == ZERO {
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(m: &CMatrix) -> Self {
        let mut t = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != ZERO {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), t)
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

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    /// `y += α A x`
    pub fn mul_vec_add(&self, alpha: C64, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr += alpha * acc;
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `A + s·I`
    pub fn shifted(&self, s: C64) -> Self {
        let diag = (0..self.nrows.min(self.ncols)).map(|i| (i, i, s));
        Self::from_triplets(self.nrows, self.ncols, self.iter().chain(diag))
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }
}

fn nonzeros(m: &CMatrix) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != ZERO {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// Triplets of `ρ ↦ A ρ` (left multiplication).
fn left_mul(a: &[(usize, usize, C64)], d: usize, scale: C64, out: &mut Vec<(usize, usize, C64)>) {
    for &(i, k, v) in a {
        for j in 0..d {
            out.push((i + d * j, k + d * j, scale * v));
        }
    }
}

/// Triplets of `ρ ↦ ρ A` (right multiplication).
fn right_mul(a: &[(usize, usize, C64)], d: usize, scale: C64, out: &mut Vec<(usize, usize, C64)>) {
    for &(k, j, v) in a {
        for i in 0..d {
            out.push((i + d * j, i + d * k, scale * v));
        }
    }
}

/// Superoperator of `ρ ↦ −i[H, ρ]`.
pub fn commutator_superop(h: &CMatrix) -> CsrMatrix {
    let d = h.nrows();
    let nz = nonzeros(h);
    let mut t = Vec::new();
    left_mul(&nz, d, -I, &mut t);
    right_mul(&nz, d, I, &mut t);
    CsrMatrix::from_triplets(d * d, d * d, t)
}

/// Superoperator of `ρ ↦ −i[H, ρ] + Σ_k (c ρ c† − ½{c†c, ρ})`.
pub fn lindblad_superop(h: &CMatrix, collapse: &[&CMatrix]) -> CsrMatrix {
    let d = h.nrows();
    let mut t = Vec::new();
    let nz = nonzeros(h);
    left_mul(&nz, d, -I, &mut t);
    right_mul(&nz, d, I, &mut t);
    let half = C64::new(-0.5, 0.0);
    for c in collapse {
        let cnz = nonzeros(c);
        // c ρ c†: (cρc†)_ij = Σ_kl c_ik ρ_kl conj(c_jl)
        for &(i, k, a) in &cnz {
            for &(j, l, b) in &cnz {
                t.push((i + d * j, k + d * l, a * b.conj()));
            }
        }
        let cdc = nonzeros(&(c.adjoint() * *c));
        left_mul(&cdc, d, half, &mut t);
        right_mul(&cdc, d, half, &mut t);
    }
    CsrMatrix::from_triplets(d * d, d * d, t)
}

/// Column-stacked vector of a matrix.
pub fn vectorize(m: &CMatrix) -> Vec<C64> {
    m.as_slice().to_vec()
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &[C64], d: usize) -> CMatrix {
    CMatrix::from_column_slice(d, d, v)
}

/// Weights `w` with `Tr(O ρ) = Σ_k w_k vec(ρ)_k`, as sparse (index, weight) pairs.
pub fn trace_functional(o: &CMatrix) -> Vec<(usize, C64)> {
    let d = o.nrows();
    let mut w = Vec::new();
    for j in 0..d {
        for i in 0..d {
            let v = o[(j, i)];
            if v != ZERO {
                w.push((i + d * j, v));
            }
        }
    }
    w
}

pub fn apply_functional(w: &[(usize, C64)], x: &[C64]) -> C64 {
    w.iter().map(|&(k, c)| c * x[k]).sum()
}
