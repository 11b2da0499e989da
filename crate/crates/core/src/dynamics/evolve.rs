use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, DensityMatrix, QOperator, C64, ONE, ZERO};

use super::generator::Generator;
use super::ode::{Dop853, OdeSystem, StepStats, Tolerance};
use super::sparse::{apply_functional, trace_functional, unvectorize, vectorize};

/// Eigenvalues below this abort an evolution.
pub const POSITIVITY_ABORT: f64 = -1e-6;
pub const TRACE_DRIFT_BOUND: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub op: QOperator,
}

impl Observable {
    pub fn new(name: impl Into<String>, op: QOperator) -> Self {
        Self {
            name: name.into(),
            op,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub tol: Tolerance,
    pub max_step: Option<f64>,
    pub first_step: Option<f64>,
    /// Keep a density-matrix snapshot at every grid point.
    pub keep_states: bool,
    /// Running integrals `∫ Tr(O ρ) dt` from the first grid point.
    pub integrated: Vec<Observable>,
    /// Compute the minimum eigenvalue at every grid point.
    pub monitor_positivity: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tol: Tolerance::default(),
            max_step: None,
            first_step: None,
            keep_states: false,
            integrated: Vec::new(),
            monitor_positivity: true,
        }
    }
}

impl EvolveOptions {
    pub fn with_tol(tol: Tolerance) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EvolveDiagnostics {
    pub steps: StepStats,
    pub max_trace_drift: f64,
    pub max_hermitian_deviation: f64,
    /// `+∞` when positivity was not monitored.
    pub min_eigenvalue: f64,
}

impl EvolveDiagnostics {
    pub fn merge(&mut self, other: &EvolveDiagnostics) {
        self.steps.merge(&other.steps);
        self.max_trace_drift = self.max_trace_drift.max(other.max_trace_drift);
        self.max_hermitian_deviation = self.max_hermitian_deviation.max(other.max_hermitian_deviation);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
    }
}

/// Observables sampled on a time grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// `values[k][i]` is observable `k` at `times[i]`.
    pub values: Vec<Vec<f64>>,
    pub integrated_names: Vec<String>,
    pub integrated: Vec<Vec<f64>>,
    pub states: Option<Vec<DensityMatrix>>,
    pub final_state: DensityMatrix,
    pub diagnostics: EvolveDiagnostics,
}

impl Trajectory {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.values[k].as_slice())
    }

    pub fn get_integrated(&self, name: &str) -> Option<&[f64]> {
        self.integrated_names
            .iter()
            .position(|n| n == name)
            .map(|k| self.integrated[k].as_slice())
    }

    /// Appends `other`, dropping its first point when it repeats the last
    /// time here. Integrals in `other` are offset to continue from the last
    /// value here.
    pub fn append(&mut self, other: Trajectory) -> Result<()> {
        if self.names != other.names || self.integrated_names != other.integrated_names {
            return Err(Error::InvalidGrid("cannot join trajectories with different observables".into()));
        }
        let last = *self.times.last().ok_or_else(|| Error::InvalidGrid("empty trajectory".into()))?;
        let skip = usize::from(other.times.first() == Some(&last));
        if other.times.get(skip).is_some_and(|&t| t < last) {
            return Err(Error::InvalidGrid("appended trajectory starts before the end".into()));
        }
        self.times.extend_from_slice(&other.times[skip..]);
        for (mine, theirs) in self.values.iter_mut().zip(&other.values) {
            mine.extend_from_slice(&theirs[skip..]);
        }
        for (mine, theirs) in self.integrated.iter_mut().zip(&other.integrated) {
            let offset = mine.last().copied().unwrap_or(0.0) - theirs.first().copied().unwrap_or(0.0);
            mine.extend(theirs[skip..].iter().map(|v| v + offset));
        }
        match (&mut self.states, other.states) {
            (Some(a), Some(b)) => a.extend(b.into_iter().skip(skip)),
            _ => self.states = None,
        }
        self.final_state = other.final_state;
        self.diagnostics.merge(&other.diagnostics);
        Ok(())
    }
}

/// Vectorised master equation plus running integrals of linear functionals.
pub(crate) struct LindbladOde<'a> {
    pub gen: &'a Generator,
    pub functionals: Vec<Vec<(usize, C64)>>,
}

impl OdeSystem for LindbladOde<'_> {
    fn dim(&self) -> usize {
        self.gen.superdim() + self.functionals.len()
    }

    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        let n = self.gen.superdim();
        let x = &y[..n];
        let (dx, dacc) = dy.split_at_mut(n);
        self.gen.apply(t, x, dx);
        for (w, d) in self.functionals.iter().zip(dacc.iter_mut()) {
            *d = apply_functional(w, x);
        }
    }
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    (m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Integrates the master equation from `grid[0]`, where the state is `rho0`.
pub fn evolve(
    rho0: &DensityMatrix,
    gen: &Generator,
    grid: &[f64],
    observables: &[Observable],
    options: &EvolveOptions,
) -> Result<Trajectory> {
    let dims = gen.dims();
    if rho0.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims.dim(),
            found: rho0.dims().dim(),
        });
    }
    for o in observables.iter().chain(&options.integrated) {
        if o.op.dim() != dims.dim() {
            return Err(Error::DimensionMismatch {
                expected: dims.dim(),
                found: o.op.dim(),
            });
        }
    }
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty time grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("time grid must be strictly increasing".into()));
    }
    let d = dims.dim();
    let n = d * d;
    let obs_w: Vec<Vec<(usize, C64)>> = observables.iter().map(|o| trace_functional(o.op.matrix())).collect();
    let ode = LindbladOde {
        gen,
        functionals: options.integrated.iter().map(|o| trace_functional(o.op.matrix())).collect(),
    };
    let mut y = vectorize(rho0.matrix());
    y.extend(std::iter::repeat(ZERO).take(options.integrated.len()));
    let trace_w = trace_functional(&CMatrix::identity(d, d));
    let tr0 = apply_functional(&trace_w, &y[..n]);

    let mut values = vec![Vec::with_capacity(grid.len()); observables.len()];
    let mut integrated = vec![Vec::with_capacity(grid.len()); options.integrated.len()];
    let mut states = options.keep_states.then(Vec::new);
    let mut diag = EvolveDiagnostics {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };

    let mut solver = Dop853::new(options.tol).with_first_step(options.first_step);
    if let Some(h) = options.max_step {
        solver = solver.with_max_step(h);
    }
    let stats = solver.integrate(&ode, grid[0], &mut y, grid, |_, t, y| {
        let x = &y[..n];
        for (w, col) in obs_w.iter().zip(values.iter_mut()) {
            col.push(apply_functional(w, x).re);
        }
        for (k, col) in integrated.iter_mut().enumerate() {
            col.push(y[n + k].re);
        }
        let drift = (apply_functional(&trace_w, x) - tr0).norm();
        diag.max_trace_drift = diag.max_trace_drift.max(drift);
        let needs_matrix = options.monitor_positivity || states.is_some();
        if needs_matrix {
            let m = unvectorize(x, d);
            diag.max_hermitian_deviation = diag.max_hermitian_deviation.max(hermitian_deviation(&m));
            let h = hermitian_part(&m);
            if options.monitor_positivity {
                let min = h.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
                diag.min_eigenvalue = diag.min_eigenvalue.min(min);
                if min < POSITIVITY_ABORT {
                    return Err(Error::Positivity {
                        time: t,
                        min_eigenvalue: min,
                    });
                }
            }
            if let Some(s) = states.as_mut() {
                s.push(DensityMatrix::from_matrix_unchecked(dims, h)?);
            }
        }
        Ok(())
    })?;
    diag.steps = stats;
    if diag.max_trace_drift > TRACE_DRIFT_BOUND {
        log::warn!(
            "trace drifted by {:.3e} over the evolution (bound {TRACE_DRIFT_BOUND:.0e})",
            diag.max_trace_drift
        );
    }
    let final_state = DensityMatrix::from_matrix_unchecked(dims, hermitian_part(&unvectorize(&y[..n], d)))?;
    if (final_state.trace() - ONE).norm() > 1e-6 {
        return Err(Error::InvalidState(format!(
            "final trace {} after evolution",
            final_state.trace()
        )));
    }
    Ok(Trajectory {
        times: grid.to_vec(),
        names: observables.iter().map(|o| o.name.clone()).collect(),
        values,
        integrated_names: options.integrated.iter().map(|o| o.name.clone()).collect(),
        integrated,
        states,
        final_state,
        diagnostics: diag,
    })
}

/// Propagates an arbitrary vectorised operator `x` from `t0` under `gen`,
/// calling `on_output` on each grid point.
pub(crate) fn propagate_vector<F>(
    gen: &Generator,
    t0: f64,
    x: &mut [C64],
    grid: &[f64],
    tol: Tolerance,
    on_output: F,
) -> Result<StepStats>
where
    F: FnMut(usize, f64, &[C64]) -> Result<()>,
{
    let ode = LindbladOde {
        gen,
        functionals: Vec::new(),
    };
    Dop853::new(tol).integrate(&ode, t0, x, grid, on_output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{Ladder, Level, SpaceDims};
    use crate::model::SystemConfig;

    fn grid(t_end: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
    }

    #[test]
    fn emitter_decay() {
        let cfg = SystemConfig::cw(0.0, 177.15, 1.6, 0.0, 0.0, 3).unwrap();
        let gen = Generator::from_config(&cfg).unwrap();
        let l = Ladder::new(cfg.cutoff);
        let rho0 = DensityMatrix::basis(cfg.cutoff, Level::Excited, 0).unwrap();
        let obs = [Observable::new("pop_e", l.excited_projector.clone())];
        let traj = evolve(&rho0, &gen, &grid(5.0, 50), &obs, &EvolveOptions::default()).unwrap();
        for (t, p) in traj.times.iter().zip(traj.get("pop_e").unwrap()) {
            assert!((p - (-t).exp()).abs() < 1e-6);
        }
        assert!(traj.diagnostics.max_trace_drift < 1e-10);
    }

    #[test]
    fn phonon_decay() {
        let cfg = SystemConfig::cw(1.0, 177.15, 0.7, 0.0, 0.0, 3).unwrap();
        let gen = Generator::from_config(&cfg).unwrap();
        let l = Ladder::new(cfg.cutoff);
        let rho0 = DensityMatrix::basis(cfg.cutoff, Level::Ground, 1).unwrap();
        let obs = [Observable::new("pop_b", l.phonon_number.clone())];
        let traj = evolve(&rho0, &gen, &grid(3.0, 30), &obs, &EvolveOptions::default()).unwrap();
        for (t, p) in traj.times.iter().zip(traj.get("pop_b").unwrap()) {
            assert!((p - (-0.7 * t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn driven_two_level_relaxes_to_oracle() {
        let cfg = SystemConfig::cw(0.0, 177.15, 1.6, 1.0, 0.0, 2).unwrap();
        let gen = Generator::from_config(&cfg).unwrap();
        let l = Ladder::new(cfg.cutoff);
        let rho0 = DensityMatrix::basis(cfg.cutoff, Level::Ground, 0).unwrap();
        let obs = [Observable::new("pop_e", l.excited_projector.clone())];
        let opts = EvolveOptions {
            integrated: vec![Observable::new("int_e", l.excited_projector.clone())],
            ..Default::default()
        };
        let traj = evolve(&rho0, &gen, &grid(20.0, 200), &obs, &opts).unwrap();
        let p = *traj.get("pop_e").unwrap().last().unwrap();
        assert!((p - 1.0 / 2.25).abs() < 1e-3, "{p}");
        // Trapezoid check of the running integral.
        let pe = traj.get("pop_e").unwrap();
        let trap: f64 = pe.windows(2).map(|w| 0.5 * (w[0] + w[1]) * 0.1).sum();
        let acc = *traj.get_integrated("int_e").unwrap().last().unwrap();
        assert!((trap - acc).abs() < 1e-3 * acc);
    }

    #[test]
    fn rejects_mismatched_dims() {
        let cfg = SystemConfig::cw(0.0, 1.0, 1.0, 0.0, 0.0, 3).unwrap();
        let gen = Generator::from_config(&cfg).unwrap();
        let rho0 = DensityMatrix::basis(SpaceDims::new(2).unwrap(), Level::Ground, 0).unwrap();
        assert!(evolve(&rho0, &gen, &[0.0, 1.0], &[], &EvolveOptions::default()).is_err());
    }
}
