//! Closed-form checks of the solvers.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use molmech_core::analytics::{control_amplitude_for, eta_read, eta_read_inverse, eta_write, memory_constant};
use molmech_core::dynamics::ode::{Dop853, OdeSystem};
use molmech_core::dynamics::{steady_state, Generator, ResolventSpectrum, Tolerance};
use molmech_core::experiments::{excitation_sweep, find_peaks, memory_protocol_run, steady_populations, MemoryRunOptions, MemorySchedule};
use molmech_core::hilbert::{expectation, Ladder, C64};
use molmech_core::model::{bose_occupation, decay_from_quality, estimate_g0, MaterialParams, SystemConfig};

fn two_level_pe(delta: f64, omega: f64) -> f64 {
    omega * omega / (delta * delta + 0.25 + 2.0 * omega * omega)
}

fn two_level_coherence_sq(delta: f64, omega: f64) -> f64 {
    let d = delta * delta + 0.25 + 2.0 * omega * omega;
    omega * omega * (delta * delta + 0.25) / (d * d)
}

#[test]
fn decoupled_emitter_matches_bloch_solution() {
    for &(delta, omega) in &[(0.0, 1.0), (1.3, 0.4), (-2.0, 2.5), (0.2, 0.05)] {
        let cfg = SystemConfig::cw(0.0, 7.0, 0.5, omega, delta, 3).unwrap();
        let (pe, pb) = steady_populations(&cfg).unwrap();
        assert_relative_eq!(pe, two_level_pe(delta, omega), max_relative = 1e-10);
        assert!(pb.abs() < 1e-12);
    }
}

#[test]
fn thermal_mode_occupation() {
    let mut cfg = SystemConfig::cw(0.0, 5.0, 0.2, 0.0, 0.0, 30).unwrap();
    cfg.phonon.n_thermal = 0.3;
    let (pe, pb) = steady_populations(&cfg).unwrap();
    assert!(pe.abs() < 1e-12);
    assert_relative_eq!(pb, 0.3, max_relative = 1e-9);
}

#[test]
fn bose_and_quality_conversions() {
    let h: f64 = 6.626_070_15e-34;
    let kb = 1.380_649e-23;
    let n = bose_occupation(7.02e9, 0.1).unwrap();
    assert_relative_eq!(n, 1.0 / ((h * 7.02e9 / (kb * 0.1)).exp() - 1.0), max_relative = 1e-8);
    let d = decay_from_quality(7.02e9, 1e8).unwrap();
    assert_relative_eq!(d.lifetime, 1e8 / (2.0 * PI * 7.02e9), max_relative = 1e-12);
}

#[test]
fn strain_coupling_scales_linearly() {
    let m = |s: f64| MaterialParams {
        deformation_potential_over_2pi_hbar: 1300e12,
        strain: s,
        young_modulus: 1e10,
        mode_volume: 2.5e-22,
        mode_freq_over_2pi: 7.02e9,
    };
    let a = estimate_g0(&m(0.04)).unwrap();
    let b = estimate_g0(&m(0.12)).unwrap();
    assert_relative_eq!(b / a, 3.0, max_relative = 1e-12);
    // D s √(ħω/2EV)/ħ, evaluated with ħ cancelled by hand.
    let hbar = 1.054_571_817e-34;
    let d = 1300e12 * 2.0 * PI * hbar;
    let x_zpf_strain = (hbar * 2.0 * PI * 7.02e9 / (2.0 * 1e10 * 2.5e-22)).sqrt();
    assert_relative_eq!(a, d * 0.04 * x_zpf_strain / hbar / (2.0 * PI), max_relative = 1e-12);
}

/// Incoherent emission integrates to `⟨σ†σ⟩ − |⟨σ⟩|²`.
#[test]
fn fluorescence_sum_rule() {
    let (delta, omega) = (0.0, 1.0);
    let cfg = SystemConfig::cw(0.0, 7.0, 0.5, omega, delta, 2).unwrap();
    let gen = Generator::from_config(&cfg).unwrap();
    let rho = steady_state(&gen).unwrap();
    let l = Ladder::new(cfg.cutoff);
    let s = expectation(&rho, &l.sigma).unwrap();
    assert_relative_eq!(s.norm_sqr(), two_level_coherence_sq(delta, omega), max_relative = 1e-9);
    let rs = ResolventSpectrum::new(&gen, &rho, &l.sigma, &l.sigma.adjoint()).unwrap();
    let h = 1e-3;
    let w_max = 400.0;
    let n = (2.0 * w_max / h) as usize;
    let mut total = 0.0;
    for k in 0..=n {
        let w = -w_max + h * k as f64;
        let weight = if k == 0 || k == n { 0.5 } else { 1.0 };
        total += weight * rs.evaluate(w);
    }
    total *= h / (2.0 * PI);
    // Lorentzian wings beyond ±w_max carry about 1e-3 of the weight.
    let expected = two_level_pe(delta, omega) - two_level_coherence_sq(delta, omega);
    assert_relative_eq!(total, expected, max_relative = 3e-3);
}

#[test]
fn mollow_sidebands_at_generalised_rabi_frequency() {
    let omega = 6.0;
    let cfg = SystemConfig::cw(0.0, 50.0, 0.5, omega, 0.0, 2).unwrap();
    let gen = Generator::from_config(&cfg).unwrap();
    let rho = steady_state(&gen).unwrap();
    let l = Ladder::new(cfg.cutoff);
    let rs = ResolventSpectrum::new(&gen, &rho, &l.sigma, &l.sigma.adjoint()).unwrap();
    let grid: Vec<f64> = (0..=4000).map(|k| -20.0 + 0.01 * k as f64).collect();
    let peaks = find_peaks(&rs.spectrum(&grid).unwrap(), 1e-3);
    let mut pos: Vec<f64> = peaks.iter().map(|p| p.position).collect();
    pos.sort_by(f64::total_cmp);
    assert_eq!(pos.len(), 3, "{pos:?}");
    // Strong-drive triplet: 0 and ±√(4Ω² − γ²/16) ≈ ±2Ω.
    let split = (4.0 * omega * omega - 1.0 / 16.0).sqrt();
    assert!((pos[1]).abs() < 1e-2);
    assert!((pos[2] - split).abs() < 0.05, "{pos:?}");
    assert!((pos[0] + split).abs() < 0.05, "{pos:?}");
}

/// The phonon sideband in excitation sits at `Δ = −ω_b + g0²/ω_b` with
/// weight `(g0/ω_b)²` relative to the zero-phonon line, in the weak-drive
/// limit and with width `γ + κ_b` instead of `γ`.
#[test]
fn sideband_position_and_weight() {
    let (g0, ob, kb) = (3.0, 20.0, 2.0);
    let shift = g0 * g0 / ob;
    let cfg = SystemConfig::cw(g0, ob, kb, 0.02, shift, 16).unwrap();
    let zpl = steady_populations(&cfg).unwrap().0;
    let grid: Vec<f64> = (0..=600).map(|k| -ob - 3.0 + 0.01 * k as f64).collect();
    let (pe, _) = excitation_sweep(&cfg, &grid).unwrap();
    let excess: Vec<f64> = grid
        .iter()
        .zip(&pe.y)
        .map(|(&d, &p)| p - zpl * 0.25 / ((d - shift).powi(2) + 0.25))
        .collect();
    let k = (0..excess.len()).max_by(|&a, &b| excess[a].total_cmp(&excess[b])).unwrap();
    // Interference with the zero-phonon wing pulls the maximum slightly.
    assert!((grid[k] - (shift - ob)).abs() < 0.05 * (1.0 + kb), "{}", grid[k]);
    let expected = zpl * (g0 / ob).powi(2) / (1.0 + kb);
    assert!((excess[k] / expected - 1.0).abs() < 0.1, "{} vs {}", excess[k], expected);
}

struct Oscillator {
    w: f64,
    damping: f64,
}

impl OdeSystem for Oscillator {
    fn dim(&self) -> usize {
        1
    }
    fn rhs(&self, _t: f64, y: &[C64], dy: &mut [C64]) {
        dy[0] = C64::new(-self.damping, -self.w) * y[0];
    }
}

#[test]
fn integrator_exact_exponential() {
    let sys = Oscillator { w: 37.0, damping: 0.3 };
    let outputs: Vec<f64> = (0..=20).map(|k| 0.25 * k as f64).collect();
    let mut y = vec![C64::new(1.0, 0.0)];
    let mut worst: f64 = 0.0;
    Dop853::new(Tolerance { rel: 1e-12, abs: 1e-14 })
        .integrate(&sys, 0.0, &mut y, &outputs, |_, t, y| {
            let exact = C64::new(-0.3 * t, -37.0 * t).exp();
            worst = worst.max((y[0] - exact).norm());
            Ok(())
        })
        .unwrap();
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn memory_constant_closed_forms() {
    let m = memory_constant(1.0, 2.0, 3.0, 1.0, 10.0).unwrap();
    assert_relative_eq!(m, 2.0 * 4.0 * 3.0 / (0.25 + 100.0), max_relative = 1e-14);
    let a = control_amplitude_for(m, 1.0, 3.0, 1.0, 10.0).unwrap();
    assert_relative_eq!(a, 2.0, max_relative = 1e-12);
    // η_w written out as the series of exponentials.
    for &mm in &[0.01, 0.5, 1.0, 4.0] {
        let direct = (8.0 / PI).sqrt() / mm
            * (0.5 - (-mm * (PI / 2.0).sqrt()).exp() + 0.5 * (-mm * (2.0 * PI).sqrt()).exp());
        assert_relative_eq!(eta_write(mm), direct, max_relative = 1e-10);
        assert_relative_eq!(eta_read_inverse(eta_read(mm)).unwrap(), mm, max_relative = 1e-10);
    }
}

#[test]
fn no_coupling_stores_nothing() {
    let cfg = SystemConfig::cw(0.0, 8.0, 0.05, 0.0, 0.0, 3).unwrap();
    let s = MemorySchedule::gaussian(
        3.0,
        (C64::new(0.1, 0.0), 0.0),
        (C64::new(2.0, 0.0), 8.0),
        (C64::new(2.5, 0.0), 8.0),
        25.0,
        3.0,
    );
    let opts = MemoryRunOptions {
        baselines: false,
        ..Default::default()
    };
    let mut s = s;
    s.window_points = 121;
    s.gap_points = 11;
    // g0 = 0 makes M = 0; the schedule itself stays valid.
    let run = memory_protocol_run(&cfg, &s, &opts).unwrap();
    assert!(run.report.stored_phonons.abs() <= 1e-8);
    assert_eq!(run.report.m_write, 0.0);
}
