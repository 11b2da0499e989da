//! Banded LU factorisation with partial pivoting.

use crate::hilbert::{C64, ZERO};

use super::sparse::CsrMatrix;

#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row stride: columns `i - kl ..= i + kl + ku` of row `i`.
    width: usize,
    data: Vec<C64>,
    pivots: Vec<usize>,
    /// Smallest pivot magnitude encountered.
    pub min_pivot: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularPivot {
    pub index: usize,
    pub magnitude: f64,
}

impl BandLu {
    /// Factorises a square sparse matrix, optionally with rows and columns
    /// renumbered by `perm` (`new = perm[old]`). Pivots below
    /// `pivot_floor` are reported as singular.
    pub fn factor(a: &CsrMatrix, perm: Option<&[usize]>, pivot_floor: f64) -> Result<Self, SingularPivot> {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let p = |k: usize| perm.map_or(k, |p| p[k]);
        let (mut kl, mut ku) = (0usize, 0usize);
        for (r, c, _) in a.iter() {
            let (r, c) = (p(r), p(c));
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data: vec![ZERO; n * width],
            pivots: vec![0; n],
            min_pivot: f64::INFINITY,
        };
        for (r, c, v) in a.iter() {
            *lu.at_mut(p(r), p(c)) += v;
        }
        lu.decompose(pivot_floor)?;
        Ok(lu)
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        let o = self.offset(i, j);
        &mut self.data[o]
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> C64 {
        self.data[self.offset(i, j)]
    }

    fn decompose(&mut self, pivot_floor: f64) -> Result<(), SingularPivot> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut piv = k;
            let mut best = self.at(k, k).norm();
            for i in k + 1..=last_row {
                let v = self.at(i, k).norm();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            self.min_pivot = self.min_pivot.min(best);
            if !(best > pivot_floor) {
                return Err(SingularPivot {
                    index: k,
                    magnitude: best,
                });
            }
            self.pivots[k] = piv;
            let last_col = (k + kl + ku).min(n - 1);
            if piv != k {
                for j in k..=last_col {
                    let a = self.offset(k, j);
                    let b = self.offset(piv, j);
                    self.data.swap(a, b);
                }
            }
            let inv = self.at(k, k).inv();
            for i in k + 1..=last_row {
                let m = self.at(i, k) * inv;
                if m == ZERO {
                    continue;
                }
                *self.at_mut(i, k) = m;
                let ri = self.offset(i, k);
                let rk = self.offset(k, k);
                for dj in 1..=(last_col - k) {
                    let v = self.data[rk + dj];
                    if v != ZERO {
                        self.data[ri + dj] -= m * v;
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` in the renumbered ordering.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.n;
        for k in 0..n {
            let piv = self.pivots[k];
            if piv != k {
                b.swap(k, piv);
            }
            let bk = b[k];
            if bk != ZERO {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.at(i, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..=(k + self.kl + self.ku).min(n - 1) {
                acc -= self.at(k, j) * b[j];
            }
            b[k] = acc / self.at(k, k);
        }
    }
}
