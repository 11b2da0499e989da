//! Parallel parameter sweeps.
//!
//! Points run on a dedicated thread pool and are merged in input order, so
//! the table is the same for any worker count. A failing point is recorded
//! in its row and does not stop the others unless `fail_fast` is set.

use std::sync::atomic::{AtomicBool, Ordering};

use molmech_core::analytics::{eta_read, eta_write, memory_constant};
use molmech_core::dynamics::{check_cutoff, CUTOFF_TOLERANCE};
use molmech_core::experiments::{memory_protocol_run, steady_populations, MemoryRunOptions, ParameterPath};
use molmech_core::model::SystemConfig;
use molmech_core::records::{Cell, Table};
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::meanfield_summary;
use crate::config::{RunConfig, SweepTarget};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    /// The physics did not converge (stiffness, positivity, cutoff, ...).
    Nonconverged,
    /// Invalid input for this point.
    Failed,
    /// Not run because an earlier point failed under `fail_fast`.
    Skipped,
}

impl PointStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::Nonconverged => "nonconverged",
            PointStatus::Failed => "failed",
            PointStatus::Skipped => "skipped",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointResult {
    pub status: PointStatus,
    pub values: Vec<f64>,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub workers: usize,
    pub fail_fast: bool,
    pub baselines: bool,
    pub check_cutoff: bool,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub table: Table,
    pub points: Vec<PointResult>,
}

impl SweepOutcome {
    pub fn all_ok(&self) -> bool {
        self.points.iter().all(|p| p.status == PointStatus::Ok)
    }

    pub fn count(&self, s: PointStatus) -> usize {
        self.points.iter().filter(|p| p.status == s).count()
    }
}

pub fn value_columns(target: SweepTarget) -> &'static [&'static str] {
    match target {
        SweepTarget::Steady => &["pop_e", "pop_b"],
        SweepTarget::Memory => &[
            "eta_write",
            "eta_read",
            "stored_phonons",
            "retrieved_photons",
            "peak_phonons",
            "control_only_ratio",
            "m_write",
            "m_read",
        ],
        SweepTarget::MemoryMeanfield => &["eta_write", "eta_read", "stored_phonons", "peak_phonons", "m_write", "m_read"],
        SweepTarget::MemoryAnalytic => &["m_write", "m_read", "eta_write", "eta_read"],
    }
}

fn has_physical_column(p: ParameterPath) -> bool {
    !matches!(p, ParameterPath::NThermal)
}

/// Values for one point; a `Some` note marks the point as not converged.
fn evaluate(
    run: &RunConfig,
    target: SweepTarget,
    cfg: &SystemConfig,
    opts: &SweepOptions,
) -> molmech_core::Result<(Vec<f64>, Option<String>)> {
    let schedule = || {
        run.memory
            .as_ref()
            .expect("memory targets are checked at load")
            .schedule(cfg)
    };
    match target {
        SweepTarget::Steady => {
            let (pe, pb) = steady_populations(cfg)?;
            let mut note = None;
            if opts.check_cutoff {
                let report = check_cutoff(cfg, CUTOFF_TOLERANCE, |c| {
                    let (a, b) = steady_populations(c)?;
                    Ok(vec![("pop_e".into(), a), ("pop_b".into(), b)])
                })?;
                if !report.converged() {
                    note = Some(format!("cutoff not converged (max relative change {:.3e})", report.max_relative_change));
                }
            }
            Ok((vec![pe, pb], note))
        }
        SweepTarget::Memory => {
            let options = MemoryRunOptions {
                tol: run.tolerance(),
                baselines: opts.baselines,
                check_cutoff: opts.check_cutoff,
            };
            let r = memory_protocol_run(cfg, &schedule()?, &options)?;
            let note = r
                .convergence
                .as_ref()
                .filter(|c| !c.converged())
                .map(|c| format!("cutoff not converged (max relative change {:.3e})", c.max_relative_change));
            let p = &r.report;
            Ok((
                vec![
                    p.eta_write,
                    if opts.baselines { p.eta_read } else { f64::NAN },
                    p.stored_phonons,
                    if opts.baselines { p.retrieved_photons } else { f64::NAN },
                    p.peak_phonons_full,
                    p.control_only_ratio().unwrap_or(f64::NAN),
                    p.m_write,
                    p.m_read,
                ],
                note,
            ))
        }
        SweepTarget::MemoryMeanfield => {
            let s = meanfield_summary(cfg, &schedule()?)?;
            Ok((
                vec![s.eta_write, s.eta_read, s.stored_phonons, s.peak_phonons, s.m_write, s.m_read],
                None,
            ))
        }
        SweepTarget::MemoryAnalytic => {
            let s = schedule()?;
            let tau = s.tau_p();
            let (g0, ob, gamma) = (cfg.coupling.g0, cfg.phonon.omega_b, cfg.molecule.gamma);
            let mw = memory_constant(g0, s.write.control.amplitude.norm(), tau, gamma, ob)?;
            let mr = memory_constant(g0, s.read.control.amplitude.norm(), tau, gamma, ob)?;
            Ok((vec![mw, mr, eta_write(mw), eta_read(mr)], None))
        }
    }
}

fn run_point(run: &RunConfig, k: usize, opts: &SweepOptions, stop: &AtomicBool) -> PointResult {
    let sweep = run.sweep.as_ref().expect("sweep settings present");
    let width = value_columns(sweep.target).len();
    if opts.fail_fast && stop.load(Ordering::SeqCst) {
        return PointResult {
            status: PointStatus::Skipped,
            values: vec![f64::NAN; width],
            message: "skipped after an earlier failure".into(),
        };
    }
    let result = sweep
        .spec
        .point(&run.system, k)
        .and_then(|cfg| evaluate(run, sweep.target, &cfg, opts));
    let out = match result {
        Ok((values, None)) => PointResult {
            status: PointStatus::Ok,
            values,
            message: String::new(),
        },
        Ok((values, Some(note))) => PointResult {
            status: PointStatus::Nonconverged,
            values,
            message: note,
        },
        Err(e) => PointResult {
            status: if e.is_physics_failure() { PointStatus::Nonconverged } else { PointStatus::Failed },
            values: vec![f64::NAN; width],
            message: e.to_string(),
        },
    };
    if out.status != PointStatus::Ok {
        log::warn!("sweep point {k}: {} ({})", out.status.as_str(), out.message);
        stop.store(true, Ordering::SeqCst);
    }
    out
}

/// Runs every point of the configured sweep on `opts.workers` threads.
pub fn run_sweep(run: &RunConfig, opts: &SweepOptions) -> anyhow::Result<SweepOutcome> {
    let sweep = run
        .sweep
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config has no [sweep] section"))?;
    sweep.spec.validate(&run.system)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()?;
    let stop = AtomicBool::new(false);
    let n = sweep.spec.values.len();
    let points: Vec<PointResult> = pool.install(|| (0..n).into_par_iter().map(|k| run_point(run, k, opts, &stop)).collect());

    let p = sweep.spec.parameter;
    let mut columns = vec!["index".to_string(), p.column()];
    if has_physical_column(p) {
        columns.push(p.column().replace("_gamma", "_MHz"));
    }
    columns.push("status".into());
    columns.extend(value_columns(sweep.target).iter().map(|s| s.to_string()));
    columns.push("message".into());
    let mut table = Table::new(columns);
    for (k, (pt, &v)) in points.iter().zip(&sweep.spec.values).enumerate() {
        let mut row = vec![Cell::from(k), Cell::Num(v)];
        if has_physical_column(p) {
            row.push(Cell::Num(run.units.gamma_to_mhz(v)));
        }
        row.push(Cell::from(pt.status.as_str()));
        row.extend(pt.values.iter().map(|&x| Cell::Num(x)));
        row.push(Cell::Text(pt.message.clone()));
        table.push(row)?;
    }
    Ok(SweepOutcome { table, points })
}
