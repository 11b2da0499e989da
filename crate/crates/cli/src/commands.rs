//! Subcommands and their output bundles.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use molmech_core::analytics::{self, eta_read, eta_write, memory_constant, meanfield_memory, retrieval_vs_delay};
use molmech_core::dynamics::{check_cutoff, ConvergenceReport, CUTOFF_TOLERANCE};
use molmech_core::experiments::{
    excitation_grid, excitation_sweep, fluorescence_grid, fluorescence_spectrum, memory_protocol_run, steady_populations,
    MemoryRunOptions, MemorySchedule,
};
use molmech_core::model::SystemConfig;
use molmech_core::records::{Cell, Table};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_config, RunConfig};
use crate::material::parse_material;
use crate::range::parse_range;
use crate::sweep::{run_sweep, PointStatus, SweepOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Spectrum,
    Fluorescence,
    Memory,
    Estimate,
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Fluorescence => "fluorescence",
            Command::Memory => "memory",
            Command::Estimate => "estimate",
            Command::Sweep => "sweep",
        }
    }
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct Flags {
    pub config: Option<PathBuf>,
    pub material: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub cutoff: Option<usize>,
    pub rtol: Option<f64>,
    pub baselines: bool,
    pub fail_fast: bool,
    pub check_cutoff: bool,
    pub detuning_range: Option<String>,
}

#[derive(Debug)]
pub struct Outcome {
    pub directory: PathBuf,
    pub files: Vec<PathBuf>,
    /// 0, or 2 if something did not converge.
    pub exit_code: i32,
    pub summary: String,
}

/// 2 for physics failures, 1 for everything else.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<molmech_core::Error>() {
            return if e.is_physics_failure() { 2 } else { 1 };
        }
    }
    1
}

struct Bundle {
    dir: PathBuf,
    files: Vec<PathBuf>,
    csv: bool,
    json: bool,
}

impl Bundle {
    fn new(dir: PathBuf, csv: bool, json: bool) -> anyhow::Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir,
            files: Vec::new(),
            csv,
            json,
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> anyhow::Result<()> {
        let p = self.dir.join(name);
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        self.files.push(p);
        Ok(())
    }

    fn table(&mut self, name: &str, t: &Table) -> anyhow::Result<()> {
        if self.csv {
            self.write(name, &t.to_csv())?;
        }
        Ok(())
    }

    fn json(&mut self, name: &str, v: &Value) -> anyhow::Result<()> {
        if self.json {
            let mut s = serde_json::to_string_pretty(v)?;
            s.push('\n');
            self.write(name, &s)?;
        }
        Ok(())
    }
}

fn load(flags: &Flags) -> anyhow::Result<RunConfig> {
    let path = flags
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("this command needs --config PATH"))?;
    let mut run = parse_config(path).map_err(anyhow::Error::new)?;
    if let Some(n) = flags.cutoff {
        run.with_cutoff(n)?;
    }
    if let Some(r) = flags.rtol {
        if !(r > 0.0 && r.is_finite()) {
            bail!("--rtol must be positive, got {r}");
        }
        run.simulation.rtol = r;
    }
    if let Some(r) = &flags.detuning_range {
        parse_range(r).with_context(|| format!("--detuning-range {r}"))?;
        run.simulation.detuning_range = Some(r.clone());
    }
    if flags.check_cutoff {
        run.simulation.check_cutoff = true;
    }
    Ok(run)
}

fn out_dir(flags: &Flags, run: Option<&RunConfig>) -> PathBuf {
    flags
        .out
        .clone()
        .or_else(|| run.and_then(|r| r.output.directory.clone()))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn convergence_json(r: &Option<ConvergenceReport>) -> Value {
    match r {
        None => Value::Null,
        Some(r) => json!({ "converged": r.converged(), "report": r }),
    }
}

fn metadata(command: Command, run: Option<&RunConfig>, started: Instant, extra: Value) -> Value {
    let mut m = json!({
        "tool": "molmech",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command.name(),
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    if let Some(run) = run {
        m["config"] = serde_json::to_value(run).unwrap_or(Value::Null);
        m["config_toml"] = Value::String(run.to_toml());
        m["physical"] = run.physical_echo();
    }
    if let (Value::Object(m), Value::Object(e)) = (&mut m, extra) {
        m.extend(e);
    }
    m
}

pub fn run_command(command: Command, flags: &Flags) -> anyhow::Result<Outcome> {
    let started = Instant::now();
    match command {
        Command::Estimate => estimate(flags, started),
        Command::Spectrum => spectrum(&load(flags)?, flags, started),
        Command::Fluorescence => fluorescence(&load(flags)?, flags, started),
        Command::Memory => memory(&load(flags)?, flags, started),
        Command::Sweep => sweep(&load(flags)?, flags, started),
    }
}

fn finish(bundle: Bundle, failure: Option<String>, summary: String) -> Outcome {
    if let Some(f) = &failure {
        log::error!("{f}");
    }
    Outcome {
        directory: bundle.dir,
        files: bundle.files,
        exit_code: if failure.is_some() { 2 } else { 0 },
        summary,
    }
}

fn estimate(flags: &Flags, started: Instant) -> anyhow::Result<Outcome> {
    let path = flags
        .material
        .as_ref()
        .ok_or_else(|| anyhow!("estimate needs --material PATH"))?;
    let material = parse_material(path).map_err(anyhow::Error::new)?;
    let table = material.estimate_table()?;
    let mut b = Bundle::new(out_dir(flags, None), true, true)?;
    b.table("estimate.csv", &table)?;
    b.json("metadata.json", &metadata(Command::Estimate, None, started, json!({ "material": material })))?;
    let summary = table.to_csv();
    Ok(finish(b, None, summary))
}

fn single_tone(run: &RunConfig) -> anyhow::Result<()> {
    if run.system.tones.len() != 1 {
        bail!("this command needs exactly one [[tones]] entry, found {}", run.system.tones.len());
    }
    Ok(())
}

fn grid_or(range: &Option<String>, default: impl FnOnce() -> molmech_core::Result<Vec<f64>>) -> anyhow::Result<Vec<f64>> {
    Ok(match range {
        Some(r) => parse_range(r)?,
        None => default()?,
    })
}

fn spectrum(run: &RunConfig, flags: &Flags, started: Instant) -> anyhow::Result<Outcome> {
    single_tone(run)?;
    let sys = &run.system;
    let grid = grid_or(&run.simulation.detuning_range, || excitation_grid(sys))?;
    let (pe, pb) = excitation_sweep(sys, &grid)?;
    let convergence = if run.simulation.check_cutoff {
        let peak = pb
            .x
            .iter()
            .zip(&pb.y)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(x, _)| *x)
            .unwrap_or(0.0);
        let mut probes = vec![0.0, -sys.phonon.omega_b, peak];
        probes.dedup();
        Some(check_cutoff(sys, CUTOFF_TOLERANCE, |c| {
            let mut out = Vec::new();
            for &d in &probes {
                let mut c = c.clone();
                c.tones[0].detuning = d;
                let (a, b) = steady_populations(&c)?;
                out.push((format!("pop_e({d})"), a));
                out.push((format!("pop_b({d})"), b));
            }
            Ok(out)
        })?)
    } else {
        None
    };
    let mut t = Table::new(["detuning_gamma", "detuning_MHz", "pop_e", "pop_b"]);
    for k in 0..grid.len() {
        t.push(vec![
            Cell::Num(grid[k]),
            Cell::Num(run.units.gamma_to_mhz(grid[k])),
            Cell::Num(pe.y[k]),
            Cell::Num(pb.y[k]),
        ])?;
    }
    let failure = convergence
        .as_ref()
        .filter(|c| !c.converged())
        .map(|c| format!("cutoff {} not converged: max relative change {:.3e}", c.cutoff, c.max_relative_change));
    let mut b = Bundle::new(out_dir(flags, Some(run)), run.output.csv(), run.output.json())?;
    b.table("spectrum.csv", &t)?;
    b.json(
        "metadata.json",
        &metadata(
            Command::Spectrum,
            Some(run),
            started,
            json!({ "rows": grid.len(), "convergence": convergence_json(&convergence) }),
        ),
    )?;
    let summary = format!("spectrum: {} detunings", grid.len());
    Ok(finish(b, failure, summary))
}

fn fluorescence(run: &RunConfig, flags: &Flags, started: Instant) -> anyhow::Result<Outcome> {
    single_tone(run)?;
    let sys = &run.system;
    let grid = grid_or(&run.simulation.omega_range, || fluorescence_grid(sys))?;
    let res = fluorescence_spectrum(sys, Some(&grid), run.simulation.check_cutoff)?;
    let u = &run.units;
    let mut t = Table::new(["omega_gamma", "omega_MHz", "spectrum"]);
    for (x, y) in res.record.x.iter().zip(&res.record.y) {
        t.push(vec![Cell::Num(*x), Cell::Num(u.gamma_to_mhz(*x)), Cell::Num(*y)])?;
    }
    let mut peaks = Table::new(["position_gamma", "position_MHz", "height", "prominence", "fwhm_gamma"]);
    for p in &res.peaks {
        peaks.push(vec![
            Cell::Num(p.position),
            Cell::Num(u.gamma_to_mhz(p.position)),
            Cell::Num(p.height),
            Cell::Num(p.prominence),
            Cell::Num(p.fwhm),
        ])?;
    }
    let failure = res
        .convergence
        .as_ref()
        .filter(|c| !c.converged())
        .map(|c| format!("cutoff {} not converged: max relative change {:.3e}", c.cutoff, c.max_relative_change));
    let mut b = Bundle::new(out_dir(flags, Some(run)), run.output.csv(), run.output.json())?;
    b.table("fluorescence.csv", &t)?;
    b.table("peaks.csv", &peaks)?;
    b.json(
        "metadata.json",
        &metadata(
            Command::Fluorescence,
            Some(run),
            started,
            json!({
                "rows": grid.len(),
                "peaks": res.peaks,
                "convergence": convergence_json(&res.convergence),
            }),
        ),
    )?;
    let summary = format!("fluorescence: {} frequencies, {} peaks", grid.len(), res.peaks.len());
    Ok(finish(b, failure, summary))
}

/// Mean-field efficiencies of one schedule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanFieldSummary {
    pub eta_write: f64,
    pub eta_read: f64,
    /// `|β|²` at the end of the write window.
    pub stored_phonons: f64,
    pub phonons_before_read: f64,
    pub retrieved_phonons: f64,
    pub peak_phonons: f64,
    pub saturated: bool,
    pub m_write: f64,
    pub m_read: f64,
}

fn nearest_phonons(traj: &analytics::MeanFieldTrajectory, t: f64) -> f64 {
    traj.states
        .iter()
        .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
        .map(|s| s.beta.norm_sqr())
        .unwrap_or(f64::NAN)
}

pub fn meanfield_summary(config: &SystemConfig, schedule: &MemorySchedule) -> molmech_core::Result<MeanFieldSummary> {
    let traj = meanfield_memory(config, schedule)?;
    summarize_meanfield(config, schedule, &traj)
}

fn summarize_meanfield(
    config: &SystemConfig,
    schedule: &MemorySchedule,
    traj: &analytics::MeanFieldTrajectory,
) -> molmech_core::Result<MeanFieldSummary> {
    let (_, we) = schedule.write_window();
    let (rs, re) = schedule.read_window();
    let gamma = config.molecule.gamma;
    let stored = nearest_phonons(traj, we);
    let before = nearest_phonons(traj, rs);
    let retrieved = before - nearest_phonons(traj, re);
    let tau = schedule.tau_p();
    let (g0, ob) = (config.coupling.g0, config.phonon.omega_b);
    Ok(MeanFieldSummary {
        eta_write: stored / schedule.n_signal(gamma),
        eta_read: retrieved / before,
        stored_phonons: stored,
        phonons_before_read: before,
        retrieved_phonons: retrieved,
        peak_phonons: traj.peak_phonons(),
        saturated: traj.saturated,
        m_write: memory_constant(g0, schedule.write.control.amplitude.norm(), tau, gamma, ob)?,
        m_read: memory_constant(g0, schedule.read.control.amplitude.norm(), tau, gamma, ob)?,
    })
}

fn memory(run: &RunConfig, flags: &Flags, started: Instant) -> anyhow::Result<Outcome> {
    let sys = &run.system;
    let schedule = run.schedule().ok_or_else(|| anyhow!("config has no [memory] section"))??;
    let options = MemoryRunOptions {
        tol: run.tolerance(),
        baselines: flags.baselines,
        check_cutoff: run.simulation.check_cutoff,
    };
    let me = memory_protocol_run(sys, &schedule, &options)?;
    let mf_traj = meanfield_memory(sys, &schedule)?;
    let mf = summarize_meanfield(sys, &schedule, &mf_traj)?;
    let u = &run.units;

    let full = &me.full;
    let col = |t: &molmech_core::dynamics::Trajectory, name: &str| -> anyhow::Result<Vec<f64>> {
        if t.times != full.times {
            bail!("baseline trajectory grid differs from the full run");
        }
        Ok(t.get(name).ok_or_else(|| anyhow!("missing observable {name}"))?.to_vec())
    };
    let mut columns = vec!["time_gamma", "time_us", "pop_e", "pop_b"];
    let mut data = vec![col(full, "pop_e")?, col(full, "pop_b")?];
    for (tag, traj) in [("control_only", &me.control_only), ("signal_only", &me.signal_only)] {
        if let Some(t) = traj {
            data.push(col(t, "pop_e")?);
            data.push(col(t, "pop_b")?);
            columns.push(if tag == "control_only" { "pop_e_control_only" } else { "pop_e_signal_only" });
            columns.push(if tag == "control_only" { "pop_b_control_only" } else { "pop_b_signal_only" });
        }
    }
    let mf_times: Vec<f64> = mf_traj.times();
    if mf_times == full.times {
        data.push(mf_traj.phonons());
        columns.push("pop_b_meanfield");
    } else {
        log::warn!("mean-field grid differs from the master-equation grid; meanfield column omitted");
    }
    let mut t = Table::new(columns);
    for (k, &time) in full.times.iter().enumerate() {
        let mut row = vec![Cell::Num(time), Cell::Num(u.gamma_time_to_us(time))];
        row.extend(data.iter().map(|c| Cell::Num(c[k])));
        t.push(row)?;
    }

    let retrieval = if run.memory.as_ref().is_some_and(|m| !m.delays.is_empty()) {
        let delays = &run.memory.as_ref().expect("checked").delays;
        let curve = retrieval_vs_delay(sys, &schedule, delays)?;
        let mut rt = Table::new([
            "delay_gamma",
            "delay_us",
            "phonons_before_read",
            "retrieved_phonons",
            "retrieved_over_stored",
        ]);
        for (k, &d) in curve.delays.iter().enumerate() {
            rt.push(vec![
                Cell::Num(d),
                Cell::Num(u.gamma_time_to_us(d)),
                Cell::Num(curve.before_read[k]),
                Cell::Num(curve.retrieved[k]),
                Cell::Num(curve.retrieved[k] / curve.stored),
            ])?;
        }
        Some(rt)
    } else {
        None
    };

    let r = &me.report;
    // Without the control-only run the read integral still contains the
    // control's own fluorescence.
    let eta_read_me = flags.baselines.then_some(r.eta_read);
    if !flags.baselines {
        log::warn!("eta_read needs the control-only baseline; rerun with --baselines");
    }
    let efficiency = json!({
        "master_equation": {
            "eta_write": r.eta_write,
            "eta_read": eta_read_me,
            "report": r,
            "control_only_ratio": r.control_only_ratio(),
            "baselines": flags.baselines,
            "diagnostics": full.diagnostics,
        },
        "meanfield": mf,
        "analytic": {
            "m_write": r.m_write,
            "m_read": r.m_read,
            "eta_write": eta_write(r.m_write),
            "eta_read": eta_read(r.m_read),
        },
        "convergence": convergence_json(&me.convergence),
    });
    let failure = me
        .convergence
        .as_ref()
        .filter(|c| !c.converged())
        .map(|c| format!("cutoff {} not converged: max relative change {:.3e}", c.cutoff, c.max_relative_change));
    let mut b = Bundle::new(out_dir(flags, Some(run)), run.output.csv(), run.output.json())?;
    b.table("trajectory.csv", &t)?;
    if let Some(rt) = &retrieval {
        b.table("retrieval.csv", rt)?;
    }
    b.json("efficiency.json", &efficiency)?;
    b.json(
        "metadata.json",
        &metadata(
            Command::Memory,
            Some(run),
            started,
            json!({ "rows": full.times.len(), "convergence": convergence_json(&me.convergence) }),
        ),
    )?;
    let summary = format!(
        "memory: eta_write = {:.4}, eta_read = {} (mean-field {:.4}, {:.4})",
        r.eta_write,
        eta_read_me.map_or("n/a (needs --baselines)".to_string(), |v| format!("{v:.4}")),
        mf.eta_write,
        mf.eta_read
    );
    Ok(finish(b, failure, summary))
}

/// Worker count from the flag, then `MOLMECH_WORKERS`, then the number of CPUs.
pub fn resolve_workers(flag: Option<usize>) -> anyhow::Result<usize> {
    if let Some(n) = flag {
        return if n > 0 { Ok(n) } else { Err(anyhow!("--workers must be at least 1")) };
    }
    match std::env::var("MOLMECH_WORKERS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow!("MOLMECH_WORKERS must be a positive integer, got `{s}`")),
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn sweep(run: &RunConfig, flags: &Flags, started: Instant) -> anyhow::Result<Outcome> {
    let settings = run.sweep.as_ref().ok_or_else(|| anyhow!("config has no [sweep] section"))?;
    let opts = SweepOptions {
        workers: resolve_workers(flags.workers)?,
        fail_fast: flags.fail_fast,
        baselines: flags.baselines,
        check_cutoff: run.simulation.check_cutoff,
    };
    let outcome = run_sweep(run, &opts)?;
    let mut b = Bundle::new(out_dir(flags, Some(run)), run.output.csv(), run.output.json())?;
    b.table("sweep.csv", &outcome.table)?;
    let counts = json!({
        "ok": outcome.count(PointStatus::Ok),
        "nonconverged": outcome.count(PointStatus::Nonconverged),
        "failed": outcome.count(PointStatus::Failed),
        "skipped": outcome.count(PointStatus::Skipped),
    });
    b.json(
        "metadata.json",
        &metadata(
            Command::Sweep,
            Some(run),
            started,
            json!({
                "rows": outcome.points.len(),
                "parameter": settings.spec.parameter.to_string(),
                "target": settings.target,
                "workers": opts.workers,
                "status_counts": counts,
            }),
        ),
    )?;
    let failure = (!outcome.all_ok()).then(|| format!("sweep finished with non-ok points: {counts}"));
    let summary = format!("sweep: {} points", outcome.points.len());
    Ok(finish(b, failure, summary))
}
