//! Excitation and fluorescence spectra, and the memory protocol.

pub mod memory;
pub mod sweep;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{compare_cutoffs, steady_state, ConvergenceReport, Generator, ResolventSpectrum, CUTOFF_TOLERANCE};
use crate::error::{Error, Result};
use crate::hilbert::{expectation, Ladder};
use crate::model::SystemConfig;
use crate::records::SpectrumRecord;

pub use memory::{
    memory_protocol_run, run_schedule, signal_amplitude, write_read_efficiencies, EfficiencyReport, MemoryRun,
    MemoryRunOptions, MemorySchedule, MemoryTargets, ReadStep, Segment, WriteStep,
};
pub use sweep::{ParameterPath, SweepSpec};

fn single_cw(config: &SystemConfig) -> Result<()> {
    config.validate()?;
    if config.tones.len() != 1 || !config.is_time_independent() {
        return Err(Error::InvalidParameter {
            name: "tones",
            reason: "expected exactly one CW tone".into(),
        });
    }
    Ok(())
}

/// Excited-state and phonon populations of the steady state.
pub fn steady_populations(config: &SystemConfig) -> Result<(f64, f64)> {
    let gen = Generator::from_config(config)?;
    let rho = steady_state(&gen)?;
    let l = Ladder::new(config.cutoff);
    Ok((
        expectation(&rho, &l.excited_projector)?.re,
        expectation(&rho, &l.phonon_number)?.re,
    ))
}

/// Steady-state `⟨σ†σ⟩` and `⟨b†b⟩` versus the detuning of the single CW
/// tone. Points are solved independently and returned in input order.
pub fn excitation_sweep(config: &SystemConfig, detunings: &[f64]) -> Result<(SpectrumRecord, SpectrumRecord)> {
    single_cw(config)?;
    if detunings.is_empty() {
        return Err(Error::InvalidGrid("no detunings given".into()));
    }
    let ob = config.phonon.omega_b;
    let lo = detunings.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = detunings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo <= -ob && hi >= 0.0) {
        log::warn!("detuning range [{lo}, {hi}] does not cover both the zero-phonon line and the Stokes sideband");
    }
    let rows: Vec<Result<(f64, f64)>> = detunings
        .par_iter()
        .map(|&delta| {
            let mut cfg = config.clone();
            cfg.tones[0].detuning = delta;
            steady_populations(&cfg).map_err(|e| Error::AtDetuning {
                detuning: delta,
                source: Box::new(e),
            })
        })
        .collect();
    let mut pe = Vec::with_capacity(rows.len());
    let mut pb = Vec::with_capacity(rows.len());
    for r in rows {
        let (a, b) = r?;
        pe.push(a);
        pb.push(b);
    }
    Ok((
        SpectrumRecord::new("detuning_gamma", detunings.to_vec(), "pop_e", pe)?,
        SpectrumRecord::new("detuning_gamma", detunings.to_vec(), "pop_b", pb)?,
    ))
}

/// Uniform grid plus finer windows of half-width `half_width` around each
/// centre; sorted with duplicates removed.
pub fn composite_grid(lo: f64, hi: f64, step: f64, windows: &[(f64, f64, f64)]) -> Result<Vec<f64>> {
    if !(hi > lo) || !(step > 0.0) {
        return Err(Error::InvalidGrid(format!("bad range [{lo}, {hi}] with step {step}")));
    }
    let mut g = Vec::new();
    let n = ((hi - lo) / step).round() as usize;
    g.extend((0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64));
    for &(c, hw, s) in windows {
        if !(hw > 0.0 && s > 0.0) {
            return Err(Error::InvalidGrid(format!("bad window around {c}")));
        }
        let m = (2.0 * hw / s).round() as usize;
        g.extend((0..=m).map(|k| c - hw + 2.0 * hw * k as f64 / m as f64));
    }
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * (1.0 + b.abs()));
    Ok(g)
}

/// Default excitation grid: coarse over `[-1.5 ω_b, 1.5 ω_b]` with fine
/// `±3γ` windows at 0 and `±ω_b`.
pub fn excitation_grid(config: &SystemConfig) -> Result<Vec<f64>> {
    let ob = config.phonon.omega_b;
    let g = config.molecule.gamma;
    let w = 3.0 * g.max(config.phonon.kappa_b);
    let fine = (w / 120.0).min(config.phonon.kappa_b.max(1e-3 * g) / 4.0).max(w / 4000.0);
    composite_grid(-1.5 * ob, 1.5 * ob, 0.25 * g, &[(0.0, w, w / 120.0), (-ob, w, fine), (ob, w, fine)])
}

/// Default fluorescence grid: step `0.05γ` over `±2.5 ω_b` with windows of
/// `±max(20κ_b, 2γ)` sampled at `κ_b/20` (at most 4000 points each) around
/// `k ω_b`, `|k| ≤ 2`.
pub fn fluorescence_grid(config: &SystemConfig) -> Result<Vec<f64>> {
    let ob = config.phonon.omega_b;
    let g = config.molecule.gamma;
    let kb = config.phonon.kappa_b;
    let hw = (20.0 * kb).max(2.0 * g);
    let step = (kb / 20.0).max(2.0 * hw / 4000.0);
    let windows: Vec<(f64, f64, f64)> = (-2..=2).map(|k| (k as f64 * ob, hw, step)).collect();
    composite_grid(-2.5 * ob, 2.5 * ob, 0.05 * g, &windows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Peak {
    pub position: f64,
    pub height: f64,
    pub prominence: f64,
    /// Width at half prominence; NaN if a side never drops that far.
    pub fwhm: f64,
}

fn parabolic_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d2 - d1) / (x[2] - x[0]);
    if a >= 0.0 || !a.is_finite() {
        return x[1];
    }
    let v = 0.5 * (x[0] + x[1]) - d1 / (2.0 * a);
    v.clamp(x[0], x[2])
}

fn crossing(x: &[f64], y: &[f64], from: usize, level: f64, step: isize) -> f64 {
    let mut i = from as isize;
    loop {
        let j = i + step;
        if j < 0 || j as usize >= y.len() {
            return f64::NAN;
        }
        let (a, b) = (i as usize, j as usize);
        if y[b] <= level {
            let t = (y[a] - level) / (y[a] - y[b]);
            return x[a] + t * (x[b] - x[a]);
        }
        i = j;
    }
}

/// Local maxima whose prominence is at least `min_prominence` times the
/// largest value. Positions are refined by a parabola through the three
/// points around the maximum; widths are taken at half prominence with
/// linear interpolation.
pub fn find_peaks(record: &SpectrumRecord, min_prominence: f64) -> Vec<Peak> {
    let (x, y) = (&record.x, &record.y);
    let n = y.len();
    if n < 3 {
        return Vec::new();
    }
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = min_prominence * ymax.abs();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if !(y[i] > y[i - 1]) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        if j + 1 >= n || !(y[j + 1] < y[i]) {
            i = j + 1;
            continue;
        }
        let top = y[i];
        let mut left_min = top;
        let mut k = i;
        while k > 0 {
            k -= 1;
            if y[k] > top {
                break;
            }
            left_min = left_min.min(y[k]);
        }
        let mut right_min = top;
        let mut k = j;
        while k + 1 < n {
            k += 1;
            if y[k] > top {
                break;
            }
            right_min = right_min.min(y[k]);
        }
        let prominence = top - left_min.max(right_min);
        if prominence >= threshold && prominence > 0.0 {
            let c = (i + j) / 2;
            let position = if i == j {
                parabolic_vertex([x[i - 1], x[i], x[i + 1]], [y[i - 1], y[i], y[i + 1]])
            } else {
                0.5 * (x[i] + x[j])
            };
            let level = top - 0.5 * prominence;
            let fwhm = crossing(x, y, j, level, 1) - crossing(x, y, i, level, -1);
            peaks.push(Peak {
                position,
                height: y[c],
                prominence,
                fwhm,
            });
        }
        i = j + 1;
    }
    peaks
}

#[derive(Clone, Debug, Serialize)]
pub struct FluorescenceResult {
    pub record: SpectrumRecord,
    pub peaks: Vec<Peak>,
    pub convergence: Option<ConvergenceReport>,
}

/// Peaks reported in the fluorescence spectrum are those with prominence
/// above this fraction of the maximum.
pub const FLUORESCENCE_PEAK_FLOOR: f64 = 1e-9;

/// Incoherent resonance-fluorescence spectrum under one CW tone,
/// `S(ω) = 2 Re ∫₀^∞ [⟨σ†(0)σ(τ)⟩ − |⟨σ⟩|²] e^{iωτ} dτ`, with `ω` measured
/// from the laser (positive towards higher frequency).
pub fn fluorescence_spectrum(config: &SystemConfig, omegas: Option<&[f64]>, check: bool) -> Result<FluorescenceResult> {
    single_cw(config)?;
    if config.tones[0].detuning != 0.0 {
        log::warn!("fluorescence is usually taken under resonant drive; detuning is {}", config.tones[0].detuning);
    }
    let owned;
    let omegas = match omegas {
        Some(o) => o,
        None => {
            owned = fluorescence_grid(config)?;
            &owned
        }
    };
    let kb = config.phonon.kappa_b;
    let ob = config.phonon.omega_b;
    let local_step = omegas
        .windows(2)
        .filter(|w| (w[0] - ob).abs() < 5.0 * kb.max(1e-12) || (w[0] + ob).abs() < 5.0 * kb.max(1e-12))
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    if !(local_step <= kb / 5.0) {
        log::warn!("frequency grid is coarser than κ_b/5 near the sidebands; lines of width κ_b are unresolved");
    }
    let compute = |cfg: &SystemConfig| -> Result<SpectrumRecord> {
        let gen = Generator::from_config(cfg)?;
        let rho = steady_state(&gen)?;
        let l = Ladder::new(cfg.cutoff);
        let rs = ResolventSpectrum::new(&gen, &rho, &l.sigma, &l.sigma.adjoint())?;
        let mut rec = rs.spectrum(omegas)?;
        rec.x_label = "omega_gamma".into();
        Ok(rec)
    };
    let (record, convergence) = if check {
        let doubled = config.with_cutoff(config.cutoff.doubled());
        let (a, b) = rayon::join(|| compute(config), || compute(&doubled));
        let (a, b) = (a?, b?);
        let sample = |rec: &SpectrumRecord| -> Vec<(String, f64)> {
            [0.0, -ob, ob, -2.0 * ob]
                .iter()
                .filter_map(|&w| rec.nearest(w).map(|(x, y)| (format!("S({x:.4})"), y)))
                .collect()
        };
        let report = compare_cutoffs(
            config.cutoff.phonon_cutoff(),
            doubled.cutoff.phonon_cutoff(),
            CUTOFF_TOLERANCE,
            &sample(&a),
            &sample(&b),
        )?;
        (a, Some(report))
    } else {
        (compute(config)?, None)
    };
    let peaks = find_peaks(&record, FLUORESCENCE_PEAK_FLOOR);
    Ok(FluorescenceResult {
        record,
        peaks,
        convergence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lorentz(x: f64, x0: f64, fwhm: f64) -> f64 {
        let h = 0.5 * fwhm;
        h * h / ((x - x0).powi(2) + h * h)
    }

    #[test]
    fn lorentzian_peak() {
        let x: Vec<f64> = (-500..=500).map(|k| k as f64 / 50.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| lorentz(v, 0.013, 1.0)).collect();
        let r = SpectrumRecord::new("x", x, "y", y).unwrap();
        let p = find_peaks(&r, 0.1);
        assert_eq!(p.len(), 1);
        assert!((p[0].position - 0.013).abs() < 2e-3);
        assert!((p[0].fwhm - 1.0).abs() < 0.03);
    }

    #[test]
    fn two_peaks_and_prominence_floor() {
        let x: Vec<f64> = (0..=4000).map(|k| k as f64 / 100.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| lorentz(v, 10.0, 1.0) + 1e-3 * lorentz(v, 30.0, 0.5)).collect();
        let r = SpectrumRecord::new("x", x, "y", y).unwrap();
        assert_eq!(find_peaks(&r, 1e-4).len(), 2);
        assert_eq!(find_peaks(&r, 1e-2).len(), 1);
    }

    #[test]
    fn grid_windows() {
        let g = composite_grid(-10.0, 10.0, 1.0, &[(0.0, 0.5, 0.1)]).unwrap();
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g.contains(&0.0) && g.contains(&-10.0) && g.contains(&10.0));
        assert_eq!(g.len(), 21 + 11 - 1);
    }

    #[test]
    fn sweep_is_ordered_and_two_level_exact() {
        let cfg = SystemConfig::cw(0.0, 177.15, 1.6, 1.0, 0.0, 2).unwrap();
        let det = [3.0, -1.0, 0.0, 0.5];
        let (pe, pb) = excitation_sweep(&cfg, &det).unwrap();
        assert_eq!(pe.x, det.to_vec());
        for (d, p) in det.iter().zip(&pe.y) {
            assert!((p - 1.0 / (d * d + 0.25 + 2.0)).abs() < 1e-10);
        }
        assert!(pb.y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sweep_rejects_pulses() {
        let mut cfg = SystemConfig::cw(0.0, 177.15, 1.6, 1.0, 0.0, 2).unwrap();
        cfg.tones[0] = crate::model::PulseTone::gaussian(crate::hilbert::C64::new(1.0, 0.0), 0.0, 0.0, 1.0);
        assert!(excitation_sweep(&cfg, &[0.0]).is_err());
    }

    #[test]
    fn sweep_error_names_detuning() {
        let cfg = SystemConfig::cw(0.0, 3.0, 0.0, 1.0, 0.0, 3).unwrap();
        match excitation_sweep(&cfg, &[0.25]) {
            Err(Error::AtDetuning { detuning, .. }) => assert_eq!(detuning, 0.25),
            other => panic!("{other:?}"),
        }
    }
}
