//! Lindblad dynamics: time evolution, steady states, two-time correlations
//! and emission spectra.

pub mod banded;
mod convergence;
mod correlation;
mod evolve;
mod generator;
pub mod ode;
pub mod sparse;
mod steady;

pub use evolve::{evolve, EvolveDiagnostics, EvolveOptions, Observable, Trajectory, POSITIVITY_ABORT, TRACE_DRIFT_BOUND};
pub use generator::{Coefficient, DriveTerm, Generator};
pub use ode::{StepStats, Tolerance};
pub use steady::{interleaved_ordering, residual_norm, steady_state, steady_state_with, SteadyStateMethod, RESIDUAL_BOUND};
pub use convergence::{check_cutoff, compare as compare_cutoffs, relative_change, ConvergenceEntry, ConvergenceReport, CUTOFF_TOLERANCE};
pub use correlation::{spectrum_from_correlation, two_time_correlation, two_time_correlation_with, CorrelationSeries, ResolventSpectrum};
