use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, DensityMatrix, SpaceDims, C64, ONE, ZERO};

use super::banded::BandLu;
use super::generator::Generator;
use super::sparse::{unvectorize, CsrMatrix};

/// Relative residual bound `‖Lρ‖∞ ≤ RESIDUAL_BOUND · ‖L‖∞`.
pub const RESIDUAL_BOUND: f64 = 1e-10;
const PIVOT_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SteadyStateMethod {
    /// Banded LU in a phonon-interleaved ordering, dense LU if that fails.
    #[default]
    Auto,
    Banded,
    Dense,
}

/// Renumbering of vectorised indices that keeps the Liouvillian banded:
/// basis state `|a,n>` maps to `2n + a`, so `ρ[i,j]` maps to `p(i) + d·p(j)`.
pub fn interleaved_ordering(dims: SpaceDims) -> Vec<usize> {
    let n = dims.phonon_cutoff();
    let d = dims.dim();
    let p = |k: usize| 2 * (k % n) + k / n;
    let mut perm = vec![0; d * d];
    for j in 0..d {
        for i in 0..d {
            perm[i + d * j] = p(i) + d * p(j);
        }
    }
    perm
}

pub fn steady_state(gen: &Generator) -> Result<DensityMatrix> {
    steady_state_with(gen, SteadyStateMethod::Auto)
}

pub fn steady_state_with(gen: &Generator, method: SteadyStateMethod) -> Result<DensityMatrix> {
    if !gen.is_time_independent() {
        return Err(Error::TimeDependentGenerator);
    }
    let l = gen.static_superop();
    let dims = gen.dims();
    let x = match method {
        SteadyStateMethod::Banded => solve_banded(l, dims)?,
        SteadyStateMethod::Dense => solve_dense(l, dims)?,
        SteadyStateMethod::Auto => match solve_banded(l, dims) {
            Ok(x) => x,
            Err(e) => {
                log::debug!("banded steady-state solve failed ({e}); retrying densely");
                solve_dense(l, dims)?
            }
        },
    };
    finish(l, dims, x)
}

fn scale_of(l: &CsrMatrix) -> f64 {
    l.norm_inf().max(f64::MIN_POSITIVE)
}

/// Replaces the equation for `ρ[0,0]` by `ρ[0,0] = 1`, then renormalises.
fn solve_banded(l: &CsrMatrix, dims: SpaceDims) -> Result<Vec<C64>> {
    let n = l.nrows();
    let scale = scale_of(l);
    let triplets = l
        .iter()
        .filter(|&(r, _, _)| r != 0)
        .chain(std::iter::once((0, 0, C64::new(scale, 0.0))));
    let a = CsrMatrix::from_triplets(n, n, triplets);
    let perm = interleaved_ordering(dims);
    let lu = BandLu::factor(&a, Some(&perm), PIVOT_FLOOR * scale).map_err(|p| {
        Error::Multiplicity(format!(
            "pivot {:.3e} at index {} in banded factorisation",
            p.magnitude, p.index
        ))
    })?;
    let mut rhs = vec![ZERO; n];
    rhs[perm[0]] = C64::new(scale, 0.0);
    lu.solve_in_place(&mut rhs);
    let x: Vec<C64> = (0..n).map(|k| rhs[perm[k]]).collect();
    Ok(x)
}

/// Dense LU with the `ρ[0,0]` equation replaced by the trace condition.
fn solve_dense(l: &CsrMatrix, dims: SpaceDims) -> Result<Vec<C64>> {
    let n = l.nrows();
    let d = dims.dim();
    let scale = scale_of(l);
    let mut a = l.to_dense();
    for c in 0..n {
        a[(0, c)] = ZERO;
    }
    for k in 0..d {
        a[(0, k + d * k)] = C64::new(scale, 0.0);
    }
    let mut rhs = nalgebra::DVector::from_element(n, ZERO);
    rhs[0] = C64::new(scale, 0.0);
    let lu = a.lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if !(min_pivot > PIVOT_FLOOR * scale) {
        return Err(Error::Multiplicity(format!(
            "pivot {min_pivot:.3e} in dense factorisation"
        )));
    }
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Multiplicity("dense Liouvillian is singular".into()))?;
    Ok(x.iter().copied().collect())
}

fn finish(l: &CsrMatrix, dims: SpaceDims, x: Vec<C64>) -> Result<DensityMatrix> {
    let d = dims.dim();
    let m = unvectorize(&x, d);
    let tr = m.trace();
    if tr.norm() < 1e-300 || !tr.re.is_finite() {
        return Err(Error::Multiplicity("steady-state solution has zero trace".into()));
    }
    let m = &m / tr;
    let m: CMatrix = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let v: Vec<C64> = m.as_slice().to_vec();
    let residual = residual_norm(l, &v);
    let bound = RESIDUAL_BOUND * l.norm_inf();
    if residual > bound {
        return Err(Error::Residual { residual, bound });
    }
    let rho = DensityMatrix::from_matrix_unchecked(dims, m)?;
    if (rho.trace() - ONE).norm() > 1e-12 {
        return Err(Error::InvalidState("steady state trace not normalised".into()));
    }
    rho.validate()?;
    Ok(rho)
}

/// `‖L x‖∞`
pub fn residual_norm(l: &CsrMatrix, x: &[C64]) -> f64 {
    let mut y = vec![ZERO; x.len()];
    l.mul_vec(x, &mut y);
    y.iter().map(|v| v.norm()).fold(0.0, f64::max)
}
