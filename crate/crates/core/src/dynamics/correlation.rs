use nalgebra::linalg::Schur;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, DensityMatrix, QOperator, C64, ONE, ZERO};
use crate::records::SpectrumRecord;

use super::evolve::propagate_vector;
use super::generator::Generator;
use super::ode::Tolerance;
use super::sparse::{apply_functional, trace_functional, vectorize};

/// Largest Liouvillian dimension for which a dense propagator is built.
const DENSE_PROPAGATOR_LIMIT: usize = 400;

/// `C(τ)` sampled on a lag grid starting at 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationSeries {
    pub taus: Vec<f64>,
    pub values: Vec<C64>,
    /// Factorised long-lag limit `⟨A⟩⟨B⟩`.
    pub plateau: Option<C64>,
}

impl CorrelationSeries {
    pub fn conj(&self) -> Self {
        Self {
            taus: self.taus.clone(),
            values: self.values.iter().map(|v| v.conj()).collect(),
            plateau: self.plateau.map(|p| p.conj()),
        }
    }
}

fn check_lags(taus: &[f64]) -> Result<()> {
    if taus.first() != Some(&0.0) {
        return Err(Error::InvalidGrid("lag grid must start at tau = 0".into()));
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) || taus.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidGrid("lag grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

fn uniform_step(taus: &[f64]) -> Option<f64> {
    if taus.len() < 2 {
        return None;
    }
    let h = taus[1] - taus[0];
    taus.iter()
        .enumerate()
        .all(|(k, &t)| (t - k as f64 * h).abs() <= 1e-12 * t.abs().max(h))
        .then_some(h)
}

/// `C(τ) = Tr[A e^{Lτ}(B ρ_ss)] = ⟨A(τ) B(0)⟩` by the quantum regression
/// theorem.
///
/// Uniform lag grids on small spaces use a dense one-step propagator;
/// otherwise the deformed state is integrated with the adaptive solver.
pub fn two_time_correlation(
    gen: &Generator,
    rho_ss: &DensityMatrix,
    a: &QOperator,
    b: &QOperator,
    taus: &[f64],
) -> Result<CorrelationSeries> {
    two_time_correlation_with(
        gen,
        rho_ss,
        a,
        b,
        taus,
        Tolerance {
            rel: 1e-10,
            abs: 1e-13,
        },
    )
}

pub fn two_time_correlation_with(
    gen: &Generator,
    rho_ss: &DensityMatrix,
    a: &QOperator,
    b: &QOperator,
    taus: &[f64],
    tol: Tolerance,
) -> Result<CorrelationSeries> {
    if !gen.is_time_independent() {
        return Err(Error::TimeDependentGenerator);
    }
    check_lags(taus)?;
    let d = gen.dims().dim();
    for op in [a, b] {
        if op.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: op.dim(),
            });
        }
    }
    if rho_ss.dims() != gen.dims() {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: rho_ss.dims().dim(),
        });
    }
    let w = trace_functional(a.matrix());
    let mut x = vectorize(&(b.matrix() * rho_ss.matrix()));
    let plateau = Some(
        crate::hilbert::trace_product(a.matrix(), rho_ss.matrix())
            * crate::hilbert::trace_product(b.matrix(), rho_ss.matrix()),
    );
    let n = x.len();
    let mut values = Vec::with_capacity(taus.len());
    match uniform_step(taus) {
        Some(h) if n <= DENSE_PROPAGATOR_LIMIT => {
            let p = (gen.static_superop().to_dense() * C64::new(h, 0.0)).exp();
            let mut v = nalgebra::DVector::from_vec(x);
            values.push(apply_functional(&w, v.as_slice()));
            for _ in 1..taus.len() {
                v = &p * v;
                values.push(apply_functional(&w, v.as_slice()));
            }
        }
        _ => {
            propagate_vector(gen, 0.0, &mut x, taus, tol, |_, _, y| {
                values.push(apply_functional(&w, y));
                Ok(())
            })?;
        }
    }
    Ok(CorrelationSeries {
        taus: taus.to_vec(),
        values,
        plateau,
    })
}

/// `∫₀¹ e^{zt} dt` and `∫₀¹ t e^{zt} dt`.
fn filon_weights(z: C64) -> (C64, C64) {
    if z.norm() < 1e-2 {
        let mut j0 = ZERO;
        let mut j1 = ZERO;
        let mut zk = ONE;
        let mut fact = 1.0;
        for k in 0..8 {
            if k > 0 {
                zk *= z;
                fact *= k as f64;
            }
            j0 += zk / (fact * (k as f64 + 1.0));
            j1 += zk / (fact * (k as f64 + 2.0));
        }
        (j0, j1)
    } else {
        let ez = z.exp();
        let j0 = (ez - ONE) / z;
        let j1 = ez / z - (ez - ONE) / (z * z);
        (j0, j1)
    }
}

/// `S(ω) = 2 Re ∫₀^τmax C(τ) e^{iωτ} dτ` with `C` linear between samples
/// (exact for piecewise-linear data at every ω).
///
/// With `subtract_coherent` the long-lag plateau (or the last sample when no
/// plateau is known) is removed first. Logs a resolution warning when `C` has
/// not decayed by the end of the record.
pub fn spectrum_from_correlation(
    corr: &CorrelationSeries,
    omegas: &[f64],
    subtract_coherent: bool,
) -> Result<SpectrumRecord> {
    check_lags(&corr.taus)?;
    if corr.values.len() != corr.taus.len() {
        return Err(Error::DimensionMismatch {
            expected: corr.taus.len(),
            found: corr.values.len(),
        });
    }
    let offset = if subtract_coherent {
        corr.plateau.unwrap_or(*corr.values.last().expect("non-empty lag grid"))
    } else {
        ZERO
    };
    let c: Vec<C64> = corr.values.iter().map(|v| v - offset).collect();
    let c0 = c[0].norm();
    let tail = c.last().expect("non-empty").norm();
    let span = *corr.taus.last().expect("non-empty");
    if c0 > 0.0 && tail > 1e-3 * c0 {
        let decay = if tail < c0 { span / (c0 / tail).ln() } else { f64::INFINITY };
        log::warn!(
            "correlation has not decayed at tau = {span:.4e} (|C| ratio {:.2e}); \
             a span of about {:.3e} is needed for 1e-3 resolution",
            tail / c0,
            7.0 * decay
        );
    }
    let uniform = uniform_step(&corr.taus);
    let y = omegas
        .iter()
        .map(|&om| {
            let mut acc = ZERO;
            if let Some(h) = uniform {
                let (j0, j1) = filon_weights(C64::new(0.0, om * h));
                let step = C64::new(0.0, om * h).exp();
                let mut phase = ONE;
                for k in 0..c.len() - 1 {
                    acc += phase * (c[k] * (j0 - j1) + c[k + 1] * j1);
                    phase *= step;
                    if k % 1024 == 1023 {
                        // Re-anchor the recurrence against rounding drift.
                        phase = C64::new(0.0, om * corr.taus[k + 1]).exp();
                    }
                }
                return 2.0 * (acc * h).re;
            }
            for k in 0..c.len() - 1 {
                let ta = corr.taus[k];
                let h = corr.taus[k + 1] - ta;
                let (j0, j1) = filon_weights(C64::new(0.0, om * h));
                let phase = C64::new(0.0, om * ta).exp();
                acc += phase * h * (c[k] * (j0 - j1) + c[k + 1] * j1);
            }
            2.0 * acc.re
        })
        .collect();
    SpectrumRecord::new("omega_gamma", omegas.to_vec(), "spectrum", y)
}

/// Emission-type spectrum `S(ω) = 2 Re ∫₀^∞ ⟨B(0) A(τ)⟩ e^{iωτ} dτ` evaluated
/// through the resolvent of the Liouvillian, `−(L + iω)⁻¹`, in its Schur
/// basis. The coherent part `⟨B⟩⟨A⟩` (a δ-peak at ω = 0) is excluded.
pub struct ResolventSpectrum {
    q: CMatrix,
    t: CMatrix,
    /// Functional `Tr(A ·)` in the Schur basis.
    a_row: Vec<C64>,
    /// Trace functional in the Schur basis.
    trace_row: Vec<C64>,
    /// Incoherent initial vector in the Schur basis.
    y: Vec<C64>,
    zero_index: usize,
    scale: f64,
}

impl ResolventSpectrum {
    pub fn new(gen: &Generator, rho_ss: &DensityMatrix, a: &QOperator, b: &QOperator) -> Result<Self> {
        if !gen.is_time_independent() {
            return Err(Error::TimeDependentGenerator);
        }
        let d = gen.dims().dim();
        if a.dim() != d || b.dim() != d || rho_ss.dims() != gen.dims() {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: a.dim().max(b.dim()),
            });
        }
        let l = gen.static_superop().to_dense();
        let n = l.nrows();
        let scale = gen.static_superop().norm_inf();
        let schur = Schur::try_new(l, 1e-14 * scale.max(1.0), 10_000 * n)
            .ok_or_else(|| Error::Decomposition(format!("Schur form of {n}x{n} Liouvillian did not converge")))?;
        let (q, t) = schur.unpack();
        let rb = rho_ss.matrix() * b.matrix();
        let coherent = crate::hilbert::trace_product(b.matrix(), rho_ss.matrix());
        let x0 = vectorize(&(rb - rho_ss.matrix() * coherent));
        let y: Vec<C64> = (q.adjoint() * nalgebra::DVector::from_vec(x0)).iter().copied().collect();
        let row = |w: Vec<(usize, C64)>| -> Vec<C64> {
            (0..n)
                .map(|c| w.iter().map(|&(k, v)| v * q[(k, c)]).sum())
                .collect()
        };
        let a_row = row(trace_functional(a.matrix()));
        let trace_row = row(trace_functional(&CMatrix::identity(d, d)));
        let zero_index = (0..n)
            .min_by(|&i, &j| t[(i, i)].norm().total_cmp(&t[(j, j)].norm()))
            .expect("non-empty");
        Ok(Self {
            q,
            t,
            a_row,
            trace_row,
            y,
            zero_index,
            scale,
        })
    }

    /// Liouvillian eigenvalues (diagonal of the Schur form).
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.t.diagonal().iter().copied().collect()
    }

    pub fn schur_vectors(&self) -> &CMatrix {
        &self.q
    }

    pub fn evaluate(&self, omega: f64) -> f64 {
        let n = self.y.len();
        let shift = C64::new(0.0, omega);
        let tiny = 1e-10 * self.scale.max(1.0);
        let mut z = vec![ZERO; n];
        let mut singular = None;
        for k in (0..n).rev() {
            let mut acc = self.y[k];
            for j in k + 1..n {
                acc -= self.t[(k, j)] * z[j];
            }
            let diag = self.t[(k, k)] + shift;
            if k == self.zero_index && diag.norm() < tiny {
                singular = Some(k);
                z[k] = ZERO;
            } else {
                z[k] = acc / diag;
            }
        }
        if let Some(k) = singular {
            // Fix the free null-space component by requiring zero trace.
            let mut v = vec![ZERO; n];
            v[k] = ONE;
            for j in (0..k).rev() {
                let mut acc = ZERO;
                for m in j + 1..=k {
                    acc -= self.t[(j, m)] * v[m];
                }
                v[j] = acc / (self.t[(j, j)] + shift);
            }
            let tz: C64 = self.trace_row.iter().zip(&z).map(|(a, b)| a * b).sum();
            let tv: C64 = self.trace_row.iter().zip(&v).map(|(a, b)| a * b).sum();
            let c = -tz / tv;
            for (zi, vi) in z.iter_mut().zip(&v) {
                *zi += c * vi;
            }
        }
        let val: C64 = self.a_row.iter().zip(&z).map(|(a, b)| a * b).sum();
        -2.0 * val.re
    }

    pub fn spectrum(&self, omegas: &[f64]) -> Result<SpectrumRecord> {
        let y = omegas.iter().map(|&w| self.evaluate(w)).collect();
        SpectrumRecord::new("omega_gamma", omegas.to_vec(), "spectrum", y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::steady::steady_state;
    use crate::hilbert::Ladder;
    use crate::model::SystemConfig;

    fn lorentz_series(taus: &[f64]) -> CorrelationSeries {
        CorrelationSeries {
            taus: taus.to_vec(),
            values: taus.iter().map(|t| C64::new((-0.5 * t).exp(), 0.0)).collect(),
            plateau: Some(ZERO),
        }
    }

    #[test]
    fn exponential_gives_lorentzian() {
        let taus: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.01).collect();
        let corr = lorentz_series(&taus);
        let omegas: Vec<f64> = (-100..=100).map(|k| k as f64 / 50.0).collect();
        let s = spectrum_from_correlation(&corr, &omegas, false).unwrap();
        let peak = s.y[100];
        assert!((peak - 4.0).abs() < 0.04, "{peak}");
        // Half maximum at ±γ/2.
        let half = s.nearest(0.5).unwrap().1;
        assert!((half / peak - 0.5).abs() < 0.01);
    }

    #[test]
    fn normalization_sum_rule() {
        let taus: Vec<f64> = (0..=8000).map(|k| k as f64 * 0.005).collect();
        let corr = lorentz_series(&taus);
        let omegas: Vec<f64> = (-40000..=40000).map(|k| k as f64 * 0.02).collect();
        let s = spectrum_from_correlation(&corr, &omegas, false).unwrap();
        let integral: f64 = s.y.iter().sum::<f64>() * 0.02 / (2.0 * std::f64::consts::PI);
        assert!((integral - 1.0).abs() < 1e-2, "{integral}");
    }

    #[test]
    fn filon_series_matches_closed_form() {
        for z in [C64::new(0.0, 0.011), C64::new(0.0, -0.02), C64::new(0.0, 0.5)] {
            let (a0, a1) = filon_weights(z);
            let ez = z.exp();
            let b0 = (ez - ONE) / z;
            let b1 = ez / z - (ez - ONE) / (z * z);
            assert!((a0 - b0).norm() < 1e-12 && (a1 - b1).norm() < 1e-12);
        }
        let (s0, s1) = filon_weights(C64::new(0.0, 1e-4));
        assert!((s0 - ONE).norm() < 1e-4 && (s1 - C64::new(0.5, 0.0)).norm() < 1e-4);
    }

    #[test]
    fn lag_grid_must_start_at_zero() {
        let cfg = SystemConfig::cw(0.0, 3.0, 1.0, 1.0, 0.0, 2).unwrap();
        let gen = Generator::from_config(&cfg).unwrap();
        let rho = steady_state(&gen).unwrap();
        let l = Ladder::new(cfg.cutoff);
        let r = two_time_correlation(&gen, &rho, &l.sigma.adjoint(), &l.sigma, &[0.5, 1.0]);
        assert!(matches!(r, Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn regression_identity_and_long_lag() {
        let cfg = SystemConfig::cw(0.0, 3.0, 1.0, 0.2, 0.0, 2).unwrap();
        let gen = Generator::from_config(&cfg).unwrap();
        let rho = steady_state(&gen).unwrap();
        let l = Ladder::new(cfg.cutoff);
        let taus: Vec<f64> = (0..=400).map(|k| k as f64 * 0.1).collect();
        let c = two_time_correlation(&gen, &rho, &l.sigma.adjoint(), &l.sigma, &taus).unwrap();
        let pop = crate::hilbert::expectation(&rho, &l.excited_projector).unwrap();
        assert!((c.values[0] - pop).norm() < 1e-14);
        let s = crate::hilbert::expectation(&rho, &l.sigma).unwrap();
        assert!((c.values.last().unwrap() - s.norm_sqr()).norm() < 1e-4);
        assert!((c.plateau.unwrap() - s.norm_sqr()).norm() < 1e-14);
        // Non-uniform grid goes through the integrator and must agree.
        let mut irregular = taus.clone();
        irregular[3] += 0.01;
        let c2 = two_time_correlation(&gen, &rho, &l.sigma.adjoint(), &l.sigma, &irregular).unwrap();
        assert!((c2.values[100] - c.values[100]).norm() < 1e-9);
    }

    #[test]
    fn resolvent_matches_sampled_transform() {
        let cfg = SystemConfig::cw(0.5, 4.0, 0.8, 0.7, 0.3, 4).unwrap();
        let gen = Generator::from_config(&cfg).unwrap();
        let rho = steady_state(&gen).unwrap();
        let l = Ladder::new(cfg.cutoff);
        let taus: Vec<f64> = (0..=6000).map(|k| k as f64 * 0.005).collect();
        let corr = two_time_correlation(&gen, &rho, &l.sigma.adjoint(), &l.sigma, &taus)
            .unwrap()
            .conj();
        let omegas = [-8.0, -4.0, -1.0, 0.0, 0.4, 4.0];
        let sampled = spectrum_from_correlation(&corr, &omegas, true).unwrap();
        let res = ResolventSpectrum::new(&gen, &rho, &l.sigma, &l.sigma.adjoint()).unwrap();
        let exact = res.spectrum(&omegas).unwrap();
        for (a, b) in sampled.y.iter().zip(&exact.y) {
            assert!((a - b).abs() < 1e-4 * exact.y.iter().cloned().fold(0.0, f64::max), "{a} vs {b}");
        }
    }
}
