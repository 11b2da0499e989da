//! Operators and states on the emitter ⊗ phonon product space.
//!
//! Basis ordering is emitter-major everywhere: `|g,0>, |g,1>, …, |g,N-1>,
//! |e,0>, …, |e,N-1>`. The composite index of `|a,n>` is `a·N + n` with
//! `a = 0` for the ground state and `a = 1` for the excited state.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const STATE_TRACE_TOL: f64 = 1e-9;
pub const STATE_HERMITIAN_TOL: f64 = 1e-10;
pub const STATE_MIN_EIGENVALUE: f64 = -1e-8;

/// Truncated product space: a two-level emitter times `phonon_cutoff` Fock levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceDims {
    phonon_cutoff: usize,
}

impl SpaceDims {
    pub const EMITTER_LEVELS: usize = 2;

    pub fn new(phonon_cutoff: usize) -> Result<Self> {
        if phonon_cutoff < 2 {
            return Err(Error::InvalidDimension(format!(
                "phonon cutoff must be at least 2, got {phonon_cutoff}"
            )));
        }
        Ok(Self { phonon_cutoff })
    }

    pub fn phonon_cutoff(&self) -> usize {
        self.phonon_cutoff
    }

    /// Total Hilbert-space dimension `2N`.
    pub fn dim(&self) -> usize {
        Self::EMITTER_LEVELS * self.phonon_cutoff
    }

    pub fn index(&self, level: Level, n: usize) -> usize {
        debug_assert!(n < self.phonon_cutoff);
        level.index() * self.phonon_cutoff + n
    }

    /// Same space with the phonon cutoff doubled.
    pub fn doubled(&self) -> Self {
        Self {
            phonon_cutoff: 2 * self.phonon_cutoff,
        }
    }
}

/// Electronic level of the emitter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Ground,
    Excited,
}

impl Level {
    fn index(self) -> usize {
        match self {
            Level::Ground => 0,
            Level::Excited => 1,
        }
    }
}

/// Which factor of the product space an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    Emitter,
    Phonon(usize),
    Composite(SpaceDims),
}

impl Factor {
    pub fn dim(&self) -> usize {
        match self {
            Factor::Emitter => SpaceDims::EMITTER_LEVELS,
            Factor::Phonon(n) => *n,
            Factor::Composite(d) => d.dim(),
        }
    }
}

/// Immutable complex operator tagged with the space it acts on.
#[derive(Clone, Debug, PartialEq)]
pub struct QOperator {
    space: Factor,
    matrix: CMatrix,
    hermitian: bool,
}

impl QOperator {
    pub fn new(space: Factor, matrix: CMatrix) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidDimension(format!(
                "matrix is {}x{}, space requires {d}x{d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            space,
            matrix,
            hermitian: false,
        })
    }

    /// Like [`QOperator::new`] but sets the Hermitian flag after checking it
    /// to [`HERMITIAN_TOL`].
    pub fn new_hermitian(space: Factor, matrix: CMatrix) -> Result<Self> {
        let mut op = Self::new(space, matrix)?;
        let dev = hermitian_deviation(&op.matrix);
        if dev > HERMITIAN_TOL * (1.0 + op.matrix.norm()) {
            return Err(Error::InvalidParameter {
                name: "matrix",
                reason: format!("not Hermitian (deviation {dev:.3e})"),
            });
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn identity(space: Factor) -> Self {
        let d = space.dim();
        Self {
            space,
            matrix: CMatrix::identity(d, d),
            hermitian: true,
        }
    }

    pub fn space(&self) -> Factor {
        self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space,
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            space: self.space,
            matrix: &self.matrix * c,
            hermitian: self.hermitian && c.im == 0.0,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    /// Commutator `[self, other]`.
    pub fn commutator(&self, other: &QOperator) -> QOperator {
        self * other - other * self
    }

    pub fn apply(&self, ket: &DVector<C64>) -> DVector<C64> {
        &self.matrix * ket
    }

    /// Largest entry-wise deviation from Hermiticity.
    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.matrix)
    }
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    let mut dev = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn assert_same_space(a: &QOperator, b: &QOperator) {
    assert_eq!(a.space, b.space, "operators act on different spaces");
}

impl Mul for &QOperator {
    type Output = QOperator;

    /// # Panics
    /// If the operands act on different spaces.
    fn mul(self, rhs: &QOperator) -> QOperator {
        assert_same_space(self, rhs);
        QOperator {
            space: self.space,
            matrix: &self.matrix * &rhs.matrix,
            hermitian: false,
        }
    }
}

impl Add for &QOperator {
    type Output = QOperator;

    fn add(self, rhs: &QOperator) -> QOperator {
        assert_same_space(self, rhs);
        QOperator {
            space: self.space,
            matrix: &self.matrix + &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl Sub for &QOperator {
    type Output = QOperator;

    fn sub(self, rhs: &QOperator) -> QOperator {
        assert_same_space(self, rhs);
        QOperator {
            space: self.space,
            matrix: &self.matrix - &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl Add for QOperator {
    type Output = QOperator;
    fn add(self, rhs: QOperator) -> QOperator {
        &self + &rhs
    }
}

impl Sub for QOperator {
    type Output = QOperator;
    fn sub(self, rhs: QOperator) -> QOperator {
        &self - &rhs
    }
}

/// Phonon annihilation operator `b` on `N` Fock levels: `<n-1|b|n> = √n`.
pub fn annihilator(n: usize) -> Result<QOperator> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!(
            "phonon cutoff must be at least 2, got {n}"
        )));
    }
    let mut m = CMatrix::zeros(n, n);
    for k in 1..n {
        m[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    QOperator::new(Factor::Phonon(n), m)
}

/// Emitter lowering operator `σ = |g><e|`.
pub fn emitter_lowering() -> QOperator {
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 1)] = ONE;
    QOperator {
        space: Factor::Emitter,
        matrix: m,
        hermitian: false,
    }
}

/// Kronecker product `emitter ⊗ phonon` in emitter-major order.
pub fn embed_pair(emitter_op: &CMatrix, phonon_op: &CMatrix) -> Result<QOperator> {
    if emitter_op.nrows() != 2 || emitter_op.ncols() != 2 {
        return Err(Error::InvalidDimension(format!(
            "emitter factor must be 2x2, got {}x{}",
            emitter_op.nrows(),
            emitter_op.ncols()
        )));
    }
    if phonon_op.nrows() != phonon_op.ncols() {
        return Err(Error::InvalidDimension(format!(
            "phonon factor must be square, got {}x{}",
            phonon_op.nrows(),
            phonon_op.ncols()
        )));
    }
    let dims = SpaceDims::new(phonon_op.nrows())?;
    let matrix = emitter_op.kronecker(phonon_op);
    let hermitian = hermitian_deviation(&matrix) <= HERMITIAN_TOL * (1.0 + matrix.norm());
    Ok(QOperator {
        space: Factor::Composite(dims),
        matrix,
        hermitian,
    })
}

/// The operators every model needs, embedded in one product space.
#[derive(Clone, Debug)]
pub struct Ladder {
    pub dims: SpaceDims,
    /// `σ ⊗ 1`
    pub sigma: QOperator,
    /// `1 ⊗ b`
    pub b: QOperator,
    /// `σ†σ ⊗ 1`
    pub excited_projector: QOperator,
    /// `1 ⊗ b†b`
    pub phonon_number: QOperator,
    pub identity: QOperator,
}

impl Ladder {
    pub fn new(dims: SpaceDims) -> Self {
        let n = dims.phonon_cutoff();
        let s = emitter_lowering();
        let b = annihilator(n).expect("SpaceDims guarantees n >= 2");
        let id2 = CMatrix::identity(2, 2);
        let idn = CMatrix::identity(n, n);
        let sigma = embed_pair(s.matrix(), &idn).expect("shapes fixed");
        let bb = embed_pair(&id2, b.matrix()).expect("shapes fixed");
        let proj = embed_pair(&(s.matrix().adjoint() * s.matrix()), &idn).expect("shapes fixed");
        let num = embed_pair(&id2, &(b.matrix().adjoint() * b.matrix())).expect("shapes fixed");
        Self {
            dims,
            sigma,
            b: bb,
            excited_projector: proj,
            phonon_number: num,
            identity: QOperator::identity(Factor::Composite(dims)),
        }
    }
}

/// Density matrix on the composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dims: SpaceDims,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates trace, Hermiticity and positivity.
    pub fn new(dims: SpaceDims, matrix: CMatrix) -> Result<Self> {
        let state = Self::from_matrix_unchecked(dims, matrix)?;
        state.validate()?;
        Ok(state)
    }

    pub(crate) fn from_matrix_unchecked(dims: SpaceDims, matrix: CMatrix) -> Result<Self> {
        let d = dims.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: matrix.nrows(),
            });
        }
        Ok(Self { dims, matrix })
    }

    pub fn validate(&self) -> Result<()> {
        let tr = self.matrix.trace();
        if (tr - ONE).norm() > STATE_TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let dev = hermitian_deviation(&self.matrix);
        if dev > STATE_HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (deviation {dev:.3e})"
            )));
        }
        let min = self.min_eigenvalue();
        if min < STATE_MIN_EIGENVALUE {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }

    /// Pure state `|level, n><level, n|`.
    pub fn basis(dims: SpaceDims, level: Level, n: usize) -> Result<Self> {
        if n >= dims.phonon_cutoff() {
            return Err(Error::InvalidDimension(format!(
                "Fock level {n} outside cutoff {}",
                dims.phonon_cutoff()
            )));
        }
        let d = dims.dim();
        let mut m = CMatrix::zeros(d, d);
        let k = dims.index(level, n);
        m[(k, k)] = ONE;
        Ok(Self { dims, matrix: m })
    }

    /// `|ψ><ψ|` for a normalisable ket.
    pub fn pure(dims: SpaceDims, ket: &DVector<C64>) -> Result<Self> {
        if ket.len() != dims.dim() {
            return Err(Error::DimensionMismatch {
                expected: dims.dim(),
                found: ket.len(),
            });
        }
        let norm = ket.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("ket has zero or non-finite norm".into()));
        }
        let k = ket / C64::new(norm, 0.0);
        Self::new(dims, &k * k.adjoint())
    }

    pub fn maximally_mixed(dims: SpaceDims) -> Self {
        let d = dims.dim();
        Self {
            dims,
            matrix: CMatrix::identity(d, d) / C64::new(d as f64, 0.0),
        }
    }

    pub fn dims(&self) -> SpaceDims {
        self.dims
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Reduced phonon-number distribution `P(n)`, summed over the emitter.
    pub fn phonon_distribution(&self) -> Vec<f64> {
        let n = self.dims.phonon_cutoff();
        (0..n)
            .map(|k| self.matrix[(k, k)].re + self.matrix[(n + k, n + k)].re)
            .collect()
    }
}

/// `Tr(op · state)`.
pub fn expectation(state: &DensityMatrix, op: &QOperator) -> Result<C64> {
    if op.space() != Factor::Composite(state.dims) {
        return Err(Error::DimensionMismatch {
            expected: state.dims.dim(),
            found: op.dim(),
        });
    }
    Ok(trace_product(op.matrix(), state.matrix()))
}

pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let d = a.nrows();
    let mut acc = ZERO;
    for i in 0..d {
        for j in 0..d {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Displacement operator `D(α) = exp(α b† − α* b)` on `N` Fock levels.
///
/// Logs a warning when `|α|² > N/4`, where truncation starts to bite.
pub fn displacement_operator(alpha: C64, n: usize) -> Result<QOperator> {
    let b = annihilator(n)?;
    if alpha.norm_sqr() > n as f64 / 4.0 {
        log::warn!(
            "displacement |alpha|^2 = {:.3} exceeds N/4 = {:.3}; truncation error likely",
            alpha.norm_sqr(),
            n as f64 / 4.0
        );
    }
    let gen = b.matrix().adjoint() * alpha - b.matrix() * alpha.conj();
    QOperator::new(Factor::Phonon(n), gen.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn annihilator_lowers_fock_one() {
        let b = annihilator(3).unwrap();
        let mut ket = DVector::from_element(3, ZERO);
        ket[1] = ONE;
        let out = b.apply(&ket);
        assert_eq!(out[0], ONE);
        assert_eq!(out[1], ZERO);
        assert_eq!(out[2], ZERO);
    }

    #[test]
    fn annihilator_matrix_element() {
        let b = annihilator(4).unwrap();
        assert_abs_diff_eq!(b.get(2, 3).re, 1.7320508, epsilon = 1e-7);
    }

    #[test]
    fn truncated_commutator() {
        let b = annihilator(3).unwrap();
        let comm = b.commutator(&b.adjoint());
        let expect = [1.0, 1.0, -2.0];
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { expect[i] } else { 0.0 };
                assert_abs_diff_eq!(comm.get(i, j).re, want, epsilon = 1e-14);
                assert_abs_diff_eq!(comm.get(i, j).im, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn annihilator_rejects_small_cutoff() {
        assert!(matches!(annihilator(1), Err(Error::InvalidDimension(_))));
        assert!(SpaceDims::new(1).is_err());
    }

    #[test]
    fn lowering_action_and_completeness() {
        let s = emitter_lowering();
        let g = DVector::from_vec(vec![ONE, ZERO]);
        let e = DVector::from_vec(vec![ZERO, ONE]);
        assert_eq!(s.apply(&e), g);
        assert_eq!(s.apply(&g), DVector::from_element(2, ZERO));
        let sum = &s.adjoint() * &s + &s * &s.adjoint();
        assert_eq!(sum.matrix(), &CMatrix::identity(2, 2));
    }

    #[test]
    fn embed_pair_examples() {
        let s = emitter_lowering();
        let proj = s.matrix().adjoint() * s.matrix();
        let op = embed_pair(&proj, &CMatrix::identity(3, 3)).unwrap();
        let diag: Vec<f64> = (0..6).map(|k| op.get(k, k).re).collect();
        assert_eq!(diag, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);

        let b = annihilator(2).unwrap();
        let num = b.matrix().adjoint() * b.matrix();
        let op = embed_pair(&CMatrix::identity(2, 2), &num).unwrap();
        let diag: Vec<f64> = (0..4).map(|k| op.get(k, k).re).collect();
        assert_eq!(diag, vec![0.0, 1.0, 0.0, 1.0]);
        assert!(op.is_hermitian());
    }

    #[test]
    fn embedded_factors_commute_and_compose() {
        let n = 4;
        let s = emitter_lowering();
        let b = annihilator(n).unwrap();
        let id2 = CMatrix::identity(2, 2);
        let idn = CMatrix::identity(n, n);
        let sa = embed_pair(s.matrix(), &idn).unwrap();
        let bb = embed_pair(&id2, b.matrix()).unwrap();
        assert!(sa.commutator(&bb).matrix().norm() < 1e-15);
        let joint = embed_pair(s.matrix(), b.matrix()).unwrap();
        assert!((&sa * &bb).matrix() == joint.matrix());
    }

    #[test]
    fn embed_pair_rejects_bad_shapes() {
        let bad = CMatrix::identity(3, 3);
        assert!(embed_pair(&bad, &CMatrix::identity(2, 2)).is_err());
        let rect = CMatrix::zeros(2, 3);
        assert!(embed_pair(&CMatrix::identity(2, 2), &rect).is_err());
    }

    #[test]
    fn expectation_examples() {
        let dims = SpaceDims::new(2).unwrap();
        let l = Ladder::new(dims);
        let e0 = DensityMatrix::basis(dims, Level::Excited, 0).unwrap();
        assert_eq!(expectation(&e0, &l.excited_projector).unwrap(), c(1.0));
        let g1 = DensityMatrix::basis(dims, Level::Ground, 1).unwrap();
        assert_eq!(expectation(&g1, &l.phonon_number).unwrap(), c(1.0));
        let mixed = DensityMatrix::maximally_mixed(dims);
        assert_abs_diff_eq!(
            expectation(&mixed, &l.excited_projector).unwrap().re,
            0.5,
            epsilon = 1e-15
        );
        let other = Ladder::new(SpaceDims::new(3).unwrap());
        assert!(expectation(&mixed, &other.phonon_number).is_err());
    }

    #[test]
    fn displacement_examples() {
        let id = displacement_operator(ZERO, 5).unwrap();
        assert!((id.matrix() - CMatrix::identity(5, 5)).norm() < 1e-15);

        let n = 20;
        let d = displacement_operator(c(0.5), n).unwrap();
        let b = annihilator(n).unwrap();
        let mut vac = DVector::from_element(n, ZERO);
        vac[0] = ONE;
        let coh = d.apply(&vac);
        let num = b.matrix().adjoint() * b.matrix();
        let mean = (coh.adjoint() * &num * &coh)[(0, 0)].re;
        assert_abs_diff_eq!(mean, 0.25, epsilon = 1e-6);

        let back = displacement_operator(c(-0.5), n).unwrap();
        let prod = &d * &back;
        assert!((prod.matrix() - CMatrix::identity(n, n)).norm() < 1e-8);
    }

    #[test]
    fn density_matrix_validation() {
        let dims = SpaceDims::new(2).unwrap();
        let bad = CMatrix::identity(4, 4);
        assert!(DensityMatrix::new(dims, bad).is_err());
        let mut neg = CMatrix::zeros(4, 4);
        neg[(0, 0)] = c(1.5);
        neg[(1, 1)] = c(-0.5);
        assert!(DensityMatrix::new(dims, neg).is_err());
        let mut nh = CMatrix::zeros(4, 4);
        nh[(0, 0)] = c(1.0);
        nh[(0, 1)] = c(0.1);
        assert!(DensityMatrix::new(dims, nh).is_err());
    }
}
