//! Raman write/read memory protocol on the phonon mode.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::Serialize;

use crate::analytics;
use crate::dynamics::sparse::{apply_functional, trace_functional, unvectorize, vectorize};
use crate::dynamics::{
    compare_cutoffs, evolve, steady_state, ConvergenceReport, EvolveDiagnostics, EvolveOptions, Generator, Observable,
    Tolerance, Trajectory, CUTOFF_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, DensityMatrix, Ladder, Level, C64, ZERO};
use crate::model::{Envelope, PulseTone, SystemConfig};

/// Differenced quantities below `-NEGATIVE_SLACK` are inconsistent.
pub const NEGATIVE_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WriteStep {
    pub signal: PulseTone,
    pub control: PulseTone,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReadStep {
    pub control: PulseTone,
}

/// Gaussian write pulses (signal plus control) followed by a read control
/// pulse `storage_delay` later. Each step is integrated over a window of
/// `±window_margin` pulse widths around its centre; the drive is neglected
/// outside the windows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MemorySchedule {
    pub write: WriteStep,
    pub read: ReadStep,
    /// Read centre minus write centre.
    pub storage_delay: f64,
    pub window_margin: f64,
    pub window_points: usize,
    pub gap_points: usize,
}

/// Inputs for [`MemorySchedule::calibrated`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MemoryTargets {
    pub tau_p: f64,
    /// Mean signal photon number.
    pub n_signal: f64,
    pub m_write: f64,
    pub m_read: f64,
    pub signal_detuning: f64,
    pub storage_delay: f64,
    pub window_margin: f64,
}

impl MemoryTargets {
    pub fn new(tau_p: f64, n_signal: f64, m_write: f64, m_read: f64) -> Self {
        Self {
            tau_p,
            n_signal,
            m_write,
            m_read,
            signal_detuning: 0.0,
            storage_delay: 8.0 * tau_p,
            window_margin: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub driven: bool,
    pub points: usize,
}

impl Segment {
    /// Uniform grid from `start` to `end` inclusive.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.points.max(2);
        let h = (self.end - self.start) / (n - 1) as f64;
        let mut g: Vec<f64> = (0..n).map(|k| self.start + h * k as f64).collect();
        g[n - 1] = self.end;
        g
    }
}

fn gaussian_parts(tone: &PulseTone) -> Option<(f64, f64)> {
    match tone.envelope {
        Envelope::Gaussian { center, width } => Some((center, width)),
        Envelope::Cw => None,
    }
}

/// Signal amplitude carrying `n_signal` photons in a Gaussian of width `tau_p`.
pub fn signal_amplitude(n_signal: f64, tau_p: f64, gamma: f64) -> f64 {
    (n_signal * gamma / (tau_p * (PI / 2.0).sqrt())).sqrt()
}

impl MemorySchedule {
    /// Schedule with the write step starting at `t = 0`.
    pub fn gaussian(
        tau_p: f64,
        signal: (C64, f64),
        write_control: (C64, f64),
        read_control: (C64, f64),
        storage_delay: f64,
        window_margin: f64,
    ) -> Self {
        let c = window_margin * tau_p;
        Self {
            write: WriteStep {
                signal: PulseTone::gaussian(signal.0, signal.1, c, tau_p),
                control: PulseTone::gaussian(write_control.0, write_control.1, c, tau_p),
            },
            read: ReadStep {
                control: PulseTone::gaussian(read_control.0, read_control.1, c + storage_delay, tau_p),
            },
            storage_delay,
            window_margin,
            window_points: 401,
            gap_points: 41,
        }
    }

    /// Amplitudes from a photon number and memory constants. The controls
    /// are detuned by `ω_b` from the signal, on two-photon resonance.
    pub fn calibrated(config: &SystemConfig, t: &MemoryTargets) -> Result<Self> {
        let gamma = config.molecule.gamma;
        let omega_b = config.phonon.omega_b;
        let g0 = config.coupling.g0;
        let ow = analytics::control_amplitude_for(t.m_write, g0, t.tau_p, gamma, omega_b)?;
        let or = analytics::control_amplitude_for(t.m_read, g0, t.tau_p, gamma, omega_b)?;
        let os = signal_amplitude(t.n_signal, t.tau_p, gamma);
        let dc = t.signal_detuning + omega_b + config.raman_detuning;
        let s = Self::gaussian(
            t.tau_p,
            (C64::new(os, 0.0), t.signal_detuning),
            (C64::new(ow, 0.0), dc),
            (C64::new(or, 0.0), dc),
            t.storage_delay,
            t.window_margin,
        );
        s.validate()?;
        Ok(s)
    }

    pub fn tau_p(&self) -> f64 {
        [self.write.signal, self.write.control, self.read.control]
            .iter()
            .filter_map(gaussian_parts)
            .map(|(_, w)| w)
            .fold(0.0, f64::max)
    }

    fn write_center(&self) -> f64 {
        gaussian_parts(&self.write.signal).map_or(0.0, |(c, _)| c)
    }

    pub fn write_window(&self) -> (f64, f64) {
        let m = self.window_margin;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (c, w) in [self.write.signal, self.write.control].iter().filter_map(gaussian_parts) {
            lo = lo.min(c - m * w);
            hi = hi.max(c + m * w);
        }
        (lo, hi)
    }

    pub fn read_window(&self) -> (f64, f64) {
        let (c, w) = gaussian_parts(&self.read.control).unwrap_or((f64::NAN, f64::NAN));
        let (_, we) = self.write_window();
        let mut rs = c - self.window_margin * w;
        // Windows that touch up to rounding share their boundary point.
        if (rs - we).abs() <= 1e-9 * we.abs().max(1.0) {
            rs = we;
        }
        (rs, c + self.window_margin * w)
    }

    /// Mean photon number of the signal pulse, `|Ω_s|² τ √(π/2) / γ`.
    pub fn n_signal(&self, gamma: f64) -> f64 {
        let (_, w) = gaussian_parts(&self.write.signal).unwrap_or((0.0, 0.0));
        self.write.signal.amplitude.norm_sqr() * w * (PI / 2.0).sqrt() / gamma
    }

    pub fn validate(&self) -> Result<()> {
        for (name, tone) in [
            ("write signal", &self.write.signal),
            ("write control", &self.write.control),
            ("read control", &self.read.control),
        ] {
            tone.validate()?;
            if gaussian_parts(tone).is_none() {
                return Err(Error::InvalidSchedule(format!("{name} must have a Gaussian envelope")));
            }
        }
        if !(self.window_margin > 0.0) || !self.window_margin.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "window margin must be positive, got {}",
                self.window_margin
            )));
        }
        if self.window_points < 2 || self.gap_points < 2 {
            return Err(Error::InvalidSchedule("windows need at least two grid points".into()));
        }
        let read_center = gaussian_parts(&self.read.control).map(|(c, _)| c).unwrap_or(f64::NAN);
        let delay = read_center - self.write_center();
        if (delay - self.storage_delay).abs() > 1e-9 * self.storage_delay.abs().max(1.0) {
            return Err(Error::InvalidSchedule(format!(
                "storage delay {} disagrees with pulse centres ({delay})",
                self.storage_delay
            )));
        }
        let (_, we) = self.write_window();
        let (rs, _) = self.read_window();
        if we > rs {
            return Err(Error::InvalidSchedule(format!(
                "write window ends at {we} after the read window starts at {rs}"
            )));
        }
        let ratio = self.write.signal.amplitude.norm() / self.write.control.amplitude.norm();
        if ratio > 0.1 {
            log::warn!("signal/control amplitude ratio {ratio:.3} exceeds 0.1; the weak-signal picture may not hold");
        }
        Ok(())
    }

    /// Write window, storage gap (omitted when empty), read window.
    pub fn segments(&self) -> Vec<Segment> {
        let (ws, we) = self.write_window();
        let (rs, re) = self.read_window();
        let mut out = vec![Segment {
            start: ws,
            end: we,
            driven: true,
            points: self.window_points,
        }];
        if rs > we {
            out.push(Segment {
                start: we,
                end: rs,
                driven: false,
                points: self.gap_points,
            });
        }
        out.push(Segment {
            start: rs,
            end: re,
            driven: true,
            points: self.window_points,
        });
        out
    }

    /// Same schedule with `gap` between the write and read windows.
    pub fn with_gap(&self, gap: f64) -> Result<Self> {
        if !(gap >= 0.0) {
            return Err(Error::InvalidSchedule(format!("gap must be non-negative, got {gap}")));
        }
        let (_, we) = self.write_window();
        let (c, w) = gaussian_parts(&self.read.control)
            .ok_or_else(|| Error::InvalidSchedule("read control must be Gaussian".into()))?;
        let new_center = we + gap + self.window_margin * w;
        let mut s = *self;
        s.read.control.envelope = Envelope::Gaussian {
            center: new_center,
            width: w,
        };
        s.storage_delay += new_center - c;
        s.validate()?;
        Ok(s)
    }

    /// Tones in the order signal, write control, read control. Omitted
    /// pulses keep their place with zero amplitude so the frame (the signal
    /// carrier) is unchanged.
    pub fn tones(&self, signal: bool, control: bool) -> Vec<PulseTone> {
        let mut t = vec![self.write.signal, self.write.control, self.read.control];
        if !signal {
            t[0].amplitude = ZERO;
        }
        if !control {
            t[1].amplitude = ZERO;
            t[2].amplitude = ZERO;
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub n_signal: f64,
    /// `⟨b†b⟩` at the end of the write window, control-only run subtracted.
    pub stored_phonons: f64,
    /// `⟨b†b⟩` of the full run at the start of the read window.
    pub phonons_before_read: f64,
    /// `γ ∫ ⟨σ†σ⟩ dt` over the read window, control-only run subtracted.
    pub retrieved_photons: f64,
    pub eta_write: f64,
    pub eta_read: f64,
    pub peak_phonons_full: f64,
    pub peak_phonons_control_only: Option<f64>,
    pub peak_phonons_signal_only: Option<f64>,
    /// Analytic memory constants for the schedule.
    pub m_write: f64,
    pub m_read: f64,
}

impl EfficiencyReport {
    /// Peak control-only phonon number over the full-run peak.
    pub fn control_only_ratio(&self) -> Option<f64> {
        self.peak_phonons_control_only.map(|c| c / self.peak_phonons_full)
    }
}

fn index_of(times: &[f64], t: f64) -> Result<usize> {
    times
        .iter()
        .position(|&x| x == t)
        .ok_or_else(|| Error::InvalidGrid(format!("time {t} is not on the trajectory grid")))
}

fn peak(traj: &Trajectory, name: &str) -> Result<f64> {
    Ok(series(traj, name)?.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

fn series<'a>(traj: &'a Trajectory, name: &str) -> Result<&'a [f64]> {
    traj.get(name)
        .or_else(|| traj.get_integrated(name))
        .ok_or_else(|| Error::InvalidParameter {
            name: "trajectory",
            reason: format!("missing observable `{name}`"),
        })
}

/// Write and read efficiencies from the full run and the baselines.
///
/// `η_w = [⟨b†b⟩_full − ⟨b†b⟩_ctrl](t_w⁺) / N_s` and
/// `η_r = γ ∫_read [⟨σ†σ⟩_full − ⟨σ†σ⟩_ctrl] dt / ⟨b†b⟩_full(t_r⁻)`.
/// A missing control-only run counts as zero.
pub fn write_read_efficiencies(
    full: &Trajectory,
    control_only: Option<&Trajectory>,
    signal_only: Option<&Trajectory>,
    schedule: &MemorySchedule,
    config: &SystemConfig,
) -> Result<EfficiencyReport> {
    let gamma = config.molecule.gamma;
    let (_, we) = schedule.write_window();
    let (rs, re) = schedule.read_window();
    let at = |traj: &Trajectory, name: &str, t: f64| -> Result<f64> { Ok(series(traj, name)?[index_of(&traj.times, t)?]) };
    let read_integral = |traj: &Trajectory| -> Result<f64> {
        Ok(gamma * (at(traj, INT_POP_E, re)? - at(traj, INT_POP_E, rs)?))
    };
    let (ctrl_b, ctrl_int) = match control_only {
        Some(c) => (at(c, POP_B, we)?, read_integral(c)?),
        None => (0.0, 0.0),
    };
    let stored = at(full, POP_B, we)? - ctrl_b;
    let retrieved = read_integral(full)? - ctrl_int;
    for (what, v) in [("stored phonon number", stored), ("retrieved photon number", retrieved)] {
        if v < -NEGATIVE_SLACK {
            return Err(Error::Inconsistent(format!("{what} is negative after subtracting the control-only run ({v:.3e})")));
        }
    }
    let before = at(full, POP_B, rs)?;
    let n_signal = schedule.n_signal(gamma);
    let tau = schedule.tau_p();
    let g0 = config.coupling.g0;
    let ob = config.phonon.omega_b;
    let report = EfficiencyReport {
        n_signal,
        stored_phonons: stored,
        phonons_before_read: before,
        retrieved_photons: retrieved,
        eta_write: stored / n_signal,
        eta_read: retrieved / before,
        peak_phonons_full: peak(full, POP_B)?,
        peak_phonons_control_only: control_only.map(|c| peak(c, POP_B)).transpose()?,
        peak_phonons_signal_only: signal_only.map(|c| peak(c, POP_B)).transpose()?,
        m_write: analytics::memory_constant(g0, schedule.write.control.amplitude.norm(), tau, gamma, ob)?,
        m_read: analytics::memory_constant(g0, schedule.read.control.amplitude.norm(), tau, gamma, ob)?,
    };
    Ok(report)
}

pub const POP_E: &str = "pop_e";
pub const POP_B: &str = "pop_b";
pub const INT_POP_E: &str = "int_pop_e";

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MemoryRunOptions {
    pub tol: Tolerance,
    /// Run the control-only and signal-only baselines.
    pub baselines: bool,
    /// Repeat at twice the phonon cutoff and compare the efficiencies.
    pub check_cutoff: bool,
}

impl Default for MemoryRunOptions {
    fn default() -> Self {
        Self {
            tol: Tolerance { rel: 1e-9, abs: 1e-12 },
            baselines: true,
            check_cutoff: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MemoryRun {
    pub full: Trajectory,
    pub control_only: Option<Trajectory>,
    pub signal_only: Option<Trajectory>,
    pub report: EfficiencyReport,
    pub convergence: Option<ConvergenceReport>,
}

fn initial_state(gen: &Generator, config: &SystemConfig) -> Result<DensityMatrix> {
    if config.phonon.n_thermal > 0.0 {
        steady_state(&gen.undriven()?)
    } else {
        DensityMatrix::basis(config.cutoff, Level::Ground, 0)
    }
}

/// Exact propagation across a drive-free interval. The running integral of
/// `⟨σ†σ⟩` is carried by exponentiating `[[L, 0], [w, 0]]`.
fn propagate_gap(
    gen: &Generator,
    rho: &DensityMatrix,
    seg: &Segment,
    observables: &[Observable],
    integrated: &Observable,
) -> Result<Trajectory> {
    let dims = gen.dims();
    let d = dims.dim();
    let n = d * d;
    let grid = seg.grid();
    let h = grid[1] - grid[0];
    let w = trace_functional(integrated.op.matrix());
    let l = gen.static_superop().to_dense();
    let mut m = CMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&l);
    for &(k, c) in &w {
        m[(n, k)] += c;
    }
    let p = (m * C64::new(h, 0.0)).exp();
    let obs_w: Vec<_> = observables.iter().map(|o| trace_functional(o.op.matrix())).collect();
    let mut v = DVector::from_vec(vectorize(rho.matrix()));
    v = v.push(ZERO);
    let mut values = vec![Vec::with_capacity(grid.len()); observables.len()];
    let mut acc = Vec::with_capacity(grid.len());
    let record = |v: &DVector<C64>, values: &mut Vec<Vec<f64>>, acc: &mut Vec<f64>| {
        for (wk, col) in obs_w.iter().zip(values.iter_mut()) {
            col.push(apply_functional(wk, &v.as_slice()[..n]).re);
        }
        acc.push(v[n].re);
    };
    record(&v, &mut values, &mut acc);
    for _ in 1..grid.len() {
        v = &p * v;
        record(&v, &mut values, &mut acc);
    }
    let mm = unvectorize(&v.as_slice()[..n], d);
    let herm = (&mm + mm.adjoint()) * C64::new(0.5, 0.0);
    let final_state = DensityMatrix::from_matrix_unchecked(dims, herm)?;
    Ok(Trajectory {
        times: grid,
        names: observables.iter().map(|o| o.name.clone()).collect(),
        values,
        integrated_names: vec![integrated.name.clone()],
        integrated: vec![acc],
        states: None,
        final_state,
        diagnostics: EvolveDiagnostics {
            min_eigenvalue: f64::INFINITY,
            ..Default::default()
        },
    })
}

/// `U ρ U†` with `U = exp(−iω_b b†b t)`.
fn rotate_mode(rho: &DensityMatrix, omega_b: f64, t: f64) -> Result<DensityMatrix> {
    let dims = rho.dims();
    let n = dims.phonon_cutoff();
    let mut m = rho.matrix().clone();
    for ((i, j), v) in m.iter_mut().enumerate().map(|(k, v)| ((k % dims.dim(), k / dims.dim()), v)) {
        let dn = (i % n) as f64 - (j % n) as f64;
        if dn != 0.0 {
            *v *= C64::new(0.0, -omega_b * dn * t).exp();
        }
    }
    DensityMatrix::from_matrix_unchecked(dims, m)
}

/// One pass through the schedule with the chosen pulses switched on.
pub fn run_schedule(
    config: &SystemConfig,
    schedule: &MemorySchedule,
    signal: bool,
    control: bool,
    tol: Tolerance,
) -> Result<Trajectory> {
    schedule.validate()?;
    let mut cfg = config.clone();
    cfg.tones = schedule.tones(signal, control);
    cfg.frame_reference_tone = 0;
    cfg.validate()?;
    let gen = Generator::mode_interaction_picture(&cfg)?;
    let undriven = Generator::from_config(&cfg)?.undriven()?;
    let ladder = Ladder::new(cfg.cutoff);
    let observables = [
        Observable::new(POP_E, ladder.excited_projector.clone()),
        Observable::new(POP_B, ladder.phonon_number.clone()),
    ];
    let integrated = Observable::new(INT_POP_E, ladder.excited_projector.clone());
    let options = EvolveOptions {
        tol,
        max_step: Some(schedule.tau_p() / 20.0),
        integrated: vec![integrated.clone()],
        ..EvolveOptions::default()
    };
    let mut rho = initial_state(&undriven, &cfg)?;
    let omega_b = cfg.phonon.omega_b;
    let mut out: Option<Trajectory> = None;
    for seg in schedule.segments() {
        let part = if seg.driven {
            let start = rotate_mode(&rho, omega_b, -seg.start)?;
            let mut part = evolve(&start, &gen, &seg.grid(), &observables, &options)?;
            part.final_state = rotate_mode(&part.final_state, omega_b, seg.end)?;
            part
        } else {
            propagate_gap(&undriven, &rho, &seg, &observables, &integrated)?
        };
        rho = part.final_state.clone();
        match out.as_mut() {
            Some(t) => t.append(part)?,
            None => out = Some(part),
        }
    }
    Ok(out.expect("schedule has at least one segment"))
}

fn run_once(config: &SystemConfig, schedule: &MemorySchedule, options: &MemoryRunOptions) -> Result<MemoryRun> {
    let tol = options.tol;
    let (full, (control_only, signal_only)) = if options.baselines {
        let (f, (c, s)) = rayon::join(
            || run_schedule(config, schedule, true, true, tol),
            || {
                rayon::join(
                    || run_schedule(config, schedule, false, true, tol),
                    || run_schedule(config, schedule, true, false, tol),
                )
            },
        );
        (f?, (Some(c?), Some(s?)))
    } else {
        (run_schedule(config, schedule, true, true, tol)?, (None, None))
    };
    let report = write_read_efficiencies(&full, control_only.as_ref(), signal_only.as_ref(), schedule, config)?;
    Ok(MemoryRun {
        full,
        control_only,
        signal_only,
        report,
        convergence: None,
    })
}

/// Full master-equation memory run with optional baselines and cutoff check.
pub fn memory_protocol_run(
    config: &SystemConfig,
    schedule: &MemorySchedule,
    options: &MemoryRunOptions,
) -> Result<MemoryRun> {
    config.validate()?;
    schedule.validate()?;
    if !options.check_cutoff {
        return run_once(config, schedule, options);
    }
    let doubled = config.with_cutoff(config.cutoff.doubled());
    let inner = MemoryRunOptions {
        check_cutoff: false,
        ..*options
    };
    let (run, big) = rayon::join(
        || run_once(config, schedule, &inner),
        || run_once(&doubled, schedule, &inner),
    );
    let (mut run, big) = (run?, big?);
    let obs = |r: &EfficiencyReport| {
        vec![
            ("eta_write".to_string(), r.eta_write),
            ("eta_read".to_string(), r.eta_read),
        ]
    };
    run.convergence = Some(compare_cutoffs(
        config.cutoff.phonon_cutoff(),
        doubled.cutoff.phonon_cutoff(),
        CUTOFF_TOLERANCE,
        &obs(&run.report),
        &obs(&big.report),
    )?);
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (SystemConfig, MemorySchedule) {
        let cfg = SystemConfig::cw(0.5, 8.0, 0.05, 0.0, 0.0, 3).unwrap();
        let s = MemorySchedule::gaussian(
            3.0,
            (C64::new(0.1, 0.0), 0.0),
            (C64::new(2.0, 0.0), 8.0),
            (C64::new(2.5, 0.0), 8.0),
            25.0,
            3.0,
        );
        (cfg, s)
    }

    /// Same protocol integrated directly in the signal frame.
    fn reference(cfg: &SystemConfig, s: &MemorySchedule) -> Trajectory {
        let mut cfg = cfg.clone();
        cfg.tones = s.tones(true, true);
        let gen = Generator::from_config(&cfg).unwrap();
        let free = gen.undriven().unwrap();
        let l = Ladder::new(cfg.cutoff);
        let obs = [
            Observable::new(POP_E, l.excited_projector.clone()),
            Observable::new(POP_B, l.phonon_number.clone()),
        ];
        let opts = EvolveOptions {
            tol: Tolerance { rel: 1e-11, abs: 1e-13 },
            integrated: vec![Observable::new(INT_POP_E, l.excited_projector.clone())],
            ..EvolveOptions::default()
        };
        let mut rho = DensityMatrix::basis(cfg.cutoff, Level::Ground, 0).unwrap();
        let mut out: Option<Trajectory> = None;
        for seg in s.segments() {
            let g = if seg.driven { &gen } else { &free };
            let part = evolve(&rho, g, &seg.grid(), &obs, &opts).unwrap();
            rho = part.final_state.clone();
            match out.as_mut() {
                Some(t) => t.append(part).unwrap(),
                None => out = Some(part),
            }
        }
        out.unwrap()
    }

    #[test]
    fn mode_frame_matches_direct_integration() {
        let (cfg, mut s) = small();
        s.window_points = 61;
        s.gap_points = 11;
        let tol = Tolerance { rel: 1e-11, abs: 1e-13 };
        let a = run_schedule(&cfg, &s, true, true, tol).unwrap();
        let b = reference(&cfg, &s);
        assert_eq!(a.times, b.times);
        for name in [POP_E, POP_B, INT_POP_E] {
            let (x, y) = (series(&a, name).unwrap(), series(&b, name).unwrap());
            let err = x.iter().zip(y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "{name}: {err}");
        }
        assert!(series(&a, POP_B).unwrap().iter().any(|&v| v > 1e-4));
    }

    #[test]
    fn schedule_checks() {
        let (_, s) = small();
        assert!(s.validate().is_ok());
        assert_eq!(s.segments().len(), 3);
        let mut overlap = s;
        overlap.storage_delay = 10.0;
        overlap.read.control.envelope = Envelope::Gaussian { center: 19.0, width: 3.0 };
        assert!(matches!(overlap.validate(), Err(Error::InvalidSchedule(_))));
        let mut mismatch = s;
        mismatch.storage_delay = 26.0;
        assert!(mismatch.validate().is_err());
        let mut cw = s;
        cw.read.control.envelope = Envelope::Cw;
        assert!(cw.validate().is_err());
        let touching = s.with_gap(0.0).unwrap();
        assert_eq!(touching.segments().len(), 2);
        assert_eq!(touching.read_window().0, touching.write_window().1);
        assert!(s.with_gap(-1.0).is_err());
    }

    #[test]
    fn photon_number_and_calibration() {
        let cfg = SystemConfig::cw(1.0, 177.15, 1.6e-6, 0.0, 0.0, 3).unwrap();
        let t = MemoryTargets::new(1331.9, 0.04, 1.0, 1.57);
        let s = MemorySchedule::calibrated(&cfg, &t).unwrap();
        assert!((s.n_signal(1.0) - 0.04).abs() < 1e-12);
        assert!((s.write.signal.amplitude.re - 4.895e-3).abs() < 1e-6);
        assert!((s.write.control.amplitude.re - 3.4324).abs() < 1e-4);
        assert!((s.read.control.amplitude.re - 4.3007).abs() < 1e-4);
        assert_eq!(s.write.control.detuning, 177.15);
    }

    #[test]
    fn efficiencies_and_phase_invariance() {
        let (cfg, mut s) = small();
        s.window_points = 41;
        s.gap_points = 5;
        let opts = MemoryRunOptions {
            tol: Tolerance { rel: 1e-10, abs: 1e-13 },
            ..Default::default()
        };
        let run = memory_protocol_run(&cfg, &s, &opts).unwrap();
        let r = &run.report;
        assert!(r.eta_write > 0.0 && r.eta_read > 0.0 && r.eta_read <= 1.0);
        assert!(r.peak_phonons_control_only.unwrap() < r.peak_phonons_full);

        let phase = C64::new(0.0, 0.7).exp();
        let mut rotated = s;
        rotated.write.signal.amplitude *= phase;
        rotated.write.control.amplitude *= phase;
        rotated.read.control.amplitude *= phase;
        let run2 = memory_protocol_run(&cfg, &rotated, &opts).unwrap();
        assert!((run2.report.eta_write - r.eta_write).abs() < 1e-6);
        assert!((run2.report.eta_read - r.eta_read).abs() < 1e-6);

        let ctrl = run.control_only.as_ref().unwrap();
        let zero = write_read_efficiencies(ctrl, Some(ctrl), None, &s, &cfg).unwrap();
        assert_eq!(zero.stored_phonons, 0.0);
    }
}
