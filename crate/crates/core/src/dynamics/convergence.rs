use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SystemConfig;

/// Default bound on the relative change of any observable when the phonon
/// cutoff is doubled.
pub const CUTOFF_TOLERANCE: f64 = 1e-3;
/// Observables smaller than this in magnitude are compared absolutely.
const ABSOLUTE_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceEntry {
    pub name: String,
    pub value: f64,
    pub doubled_value: f64,
    pub relative_change: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub cutoff: usize,
    pub doubled_cutoff: usize,
    pub tolerance: f64,
    pub entries: Vec<ConvergenceEntry>,
    pub max_relative_change: f64,
}

impl ConvergenceReport {
    pub fn converged(&self) -> bool {
        self.max_relative_change < self.tolerance
    }

    pub fn worst(&self) -> Option<&ConvergenceEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.relative_change.total_cmp(&b.relative_change))
    }

    /// Turns a failed check into a non-convergence error.
    pub fn into_result(self) -> Result<Self> {
        if self.converged() {
            return Ok(self);
        }
        let worst = self.worst().cloned();
        Err(Error::NotConverged {
            cutoff: self.cutoff,
            observable: worst.as_ref().map(|w| w.name.clone()).unwrap_or_default(),
            relative_change: self.max_relative_change,
        })
    }
}

pub fn relative_change(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < ABSOLUTE_FLOOR {
        (a - b).abs() / ABSOLUTE_FLOOR
    } else {
        (a - b).abs() / scale
    }
}

/// Runs `observe` at the configured cutoff and at twice that cutoff and
/// compares the named outputs. A failed comparison is logged as a warning
/// (possible onset of self-sustained oscillation) and reported, not raised.
pub fn check_cutoff<F>(config: &SystemConfig, tolerance: f64, observe: F) -> Result<ConvergenceReport>
where
    F: Fn(&SystemConfig) -> Result<Vec<(String, f64)>> + Sync,
{
    let doubled = config.with_cutoff(config.cutoff.doubled());
    let (a, b) = rayon::join(|| observe(config), || observe(&doubled));
    let (a, b) = (a?, b?);
    compare(config.cutoff.phonon_cutoff(), doubled.cutoff.phonon_cutoff(), tolerance, &a, &b)
}

pub fn compare(
    cutoff: usize,
    doubled_cutoff: usize,
    tolerance: f64,
    a: &[(String, f64)],
    b: &[(String, f64)],
) -> Result<ConvergenceReport> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.0 != y.0) {
        return Err(Error::Inconsistent(
            "cutoff runs reported different observables".into(),
        ));
    }
    let entries: Vec<ConvergenceEntry> = a
        .iter()
        .zip(b)
        .map(|((name, v), (_, w))| ConvergenceEntry {
            name: name.clone(),
            value: *v,
            doubled_value: *w,
            relative_change: relative_change(*v, *w),
        })
        .collect();
    let max_relative_change = entries.iter().map(|e| e.relative_change).fold(0.0, f64::max);
    let report = ConvergenceReport {
        cutoff,
        doubled_cutoff,
        tolerance,
        entries,
        max_relative_change,
    };
    if !report.converged() {
        let w = report.worst().expect("non-empty when not converged");
        log::warn!(
            "phonon cutoff {cutoff} not converged: `{}` changed by {:.3e} relative on doubling \
             (possible self-sustained oscillation)",
            w.name,
            w.relative_change
        );
    }
    Ok(report)
}
