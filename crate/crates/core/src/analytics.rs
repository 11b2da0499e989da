//! Closed-form memory theory, the coherent mean-field memory model, and a
//! weak-drive rate model for the excitation spectra.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::ode::{Dop853, OdeSystem, Tolerance};
use crate::error::{Error, Result};
use crate::experiments::memory::{MemorySchedule, Segment};
use crate::hilbert::{C64, I, ZERO};
use crate::model::SystemConfig;
use crate::records::SpectrumRecord;

const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_3;

fn non_negative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be non-negative, got {v}"),
        })
    }
}

/// `M = 2 g₀² |Ω_c|² τ_p / (γ |γ/2 + iω_b|²)` at zero Raman detuning.
pub fn memory_constant(g0: f64, omega_c_amp: f64, tau_p: f64, gamma: f64, omega_b: f64) -> Result<f64> {
    non_negative("g0", g0)?;
    non_negative("tau_p", tau_p)?;
    non_negative("omega_b", omega_b)?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("must be positive, got {gamma}"),
        });
    }
    let denom = gamma * (0.25 * gamma * gamma + omega_b * omega_b);
    Ok(2.0 * g0 * g0 * omega_c_amp * omega_c_amp * tau_p / denom)
}

/// Control amplitude giving memory constant `m`.
pub fn control_amplitude_for(m: f64, g0: f64, tau_p: f64, gamma: f64, omega_b: f64) -> Result<f64> {
    non_negative("M", m)?;
    if !(g0 > 0.0 && tau_p > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "control_amplitude",
            reason: "g0, tau_p and gamma must be positive".into(),
        });
    }
    let per_unit = memory_constant(g0, 1.0, tau_p, gamma, omega_b)?;
    Ok((m / per_unit).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MemoryConstants {
    pub m_write: f64,
    pub m_read: f64,
    pub g0: f64,
    pub omega_c_write: f64,
    pub omega_c_read: f64,
    pub tau_p: f64,
    pub gamma: f64,
    pub omega_b: f64,
    pub raman_detuning: f64,
}

impl MemoryConstants {
    pub fn new(
        g0: f64,
        omega_c_write: f64,
        omega_c_read: f64,
        tau_p: f64,
        gamma: f64,
        omega_b: f64,
    ) -> Result<Self> {
        Ok(Self {
            m_write: memory_constant(g0, omega_c_write, tau_p, gamma, omega_b)?,
            m_read: memory_constant(g0, omega_c_read, tau_p, gamma, omega_b)?,
            g0,
            omega_c_write,
            omega_c_read,
            tau_p,
            gamma,
            omega_b,
            raman_detuning: 0.0,
        })
    }
}

/// `η_w = √(8/π)/M · [½ − e^{−M√(π/2)} + ½ e^{−M√(2π)}]`, written as
/// `(1 − e^{−x})²/x` with `x = M√(π/2)` so that small `M` is exact.
pub fn eta_write(m: f64) -> f64 {
    if !(m > 0.0) {
        return 0.0;
    }
    let x = m * SQRT_HALF_PI;
    if x < 1e-6 {
        return x - x * x + 7.0 / 12.0 * x * x * x;
    }
    let a = -(-x).exp_m1();
    a * a / x
}

/// `η_r = 1 − e^{−M√(π/2)}`
pub fn eta_read(m: f64) -> f64 {
    if !(m > 0.0) {
        return 0.0;
    }
    -(-m * SQRT_HALF_PI).exp_m1()
}

/// Memory constant with `eta_read(M) = eta`.
pub fn eta_read_inverse(eta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParameter {
            name: "eta_read",
            reason: format!("must lie in [0, 1), got {eta}"),
        });
    }
    Ok(-(-eta).ln_1p() / SQRT_HALF_PI)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WriteOptimum {
    pub m_star: f64,
    pub eta_star: f64,
}

/// Golden-section maximisation of [`eta_write`] on `(0, 10]`.
pub fn eta_write_max() -> WriteOptimum {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1e-9, 10.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (eta_write(c), eta_write(d));
    while b - a > 1e-9 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = eta_write(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = eta_write(d);
        }
    }
    let m = 0.5 * (a + b);
    WriteOptimum {
        m_star: m,
        eta_star: eta_write(m),
    }
}

/// Coherent amplitudes `s = ⟨σ⟩`, `β = ⟨b⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanFieldState {
    pub s: C64,
    pub beta: C64,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanFieldTrajectory {
    pub states: Vec<MeanFieldState>,
    /// Set when `|s|` exceeded the weak-excitation guard.
    pub saturated: bool,
    pub max_s: f64,
}

impl MeanFieldTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }

    /// Coherent phonon population `|β|²`.
    pub fn phonons(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.beta.norm_sqr()).collect()
    }

    pub fn peak_phonons(&self) -> f64 {
        self.phonons().into_iter().fold(0.0, f64::max)
    }

    pub fn at(&self, t: f64) -> Option<&MeanFieldState> {
        self.states.iter().find(|s| s.time == t)
    }
}

/// Guard on `|s|` above which the weak-signal model is flagged.
pub const SATURATION_GUARD: f64 = 0.3;

struct MeanFieldOde<'a> {
    config: &'a SystemConfig,
    frame: f64,
}

impl OdeSystem for MeanFieldOde<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        let (s, beta) = (y[0], y[1]);
        let g0 = self.config.coupling.g0;
        let gamma = self.config.molecule.gamma;
        let ph = &self.config.phonon;
        let drive = self.config.drive_coefficient(t);
        // `y[1]` is `β e^{iω_b t}`.
        let rot = C64::new(0.0, ph.omega_b * t).exp();
        let beta_lab = beta * rot.conj();
        dy[0] = -(I * self.frame + 0.5 * gamma) * s - I * g0 * s * (2.0 * beta_lab.re) - I * drive;
        dy[1] = -0.5 * ph.kappa_b * beta - I * g0 * s.norm_sqr() * rot;
    }
}

/// Free evolution of the amplitudes over a drive-free interval. The
/// `g₀ s (β + β*)` term is dropped since `s` has decayed at rate `γ/2`.
fn free_evolution(config: &SystemConfig, st: MeanFieldState, dt: f64) -> MeanFieldState {
    let frame = config.frame_detuning();
    let gamma = config.molecule.gamma;
    let ph = &config.phonon;
    MeanFieldState {
        s: st.s * (-(I * frame + 0.5 * gamma) * dt).exp(),
        beta: st.beta * (-(I * ph.omega_b + 0.5 * ph.kappa_b) * dt).exp(),
        time: st.time + dt,
    }
}

fn mf_config(config: &SystemConfig, schedule: &MemorySchedule) -> Result<SystemConfig> {
    let mut cfg = config.clone();
    cfg.tones = schedule.tones(true, true);
    cfg.frame_reference_tone = 0;
    cfg.validate()?;
    Ok(cfg)
}

fn integrate_window(
    cfg: &SystemConfig,
    start: MeanFieldState,
    grid: &[f64],
    tol: Tolerance,
    max_step: f64,
    out: &mut Vec<MeanFieldState>,
) -> Result<MeanFieldState> {
    let ode = MeanFieldOde {
        config: cfg,
        frame: cfg.frame_detuning(),
    };
    let omega_b = cfg.phonon.omega_b;
    let mut y = [start.s, start.beta * C64::new(0.0, omega_b * start.time).exp()];
    Dop853::new(tol)
        .with_max_step(max_step)
        .integrate(&ode, start.time, &mut y, grid, |_, t, y| {
            out.push(MeanFieldState {
                s: y[0],
                beta: y[1] * C64::new(0.0, -omega_b * t).exp(),
                time: t,
            });
            Ok(())
        })?;
    Ok(*out.last().expect("window grid is non-empty"))
}

/// Integrates the coherent amplitudes through the schedule, starting from
/// `s = β = 0`:
///
/// `ds/dt = −(iΔ_s + γ/2)s − i g₀ s(β + β*) − i[Ω_s(t) + Ω_c(t) e^{i(Δ_c−Δ_s)t}]`,
/// `dβ/dt = −(iω_b + κ_b/2)β − i g₀ |s|²`.
pub fn meanfield_memory(config: &SystemConfig, schedule: &MemorySchedule) -> Result<MeanFieldTrajectory> {
    meanfield_memory_from(config, schedule, None)
}

fn meanfield_memory_from(
    config: &SystemConfig,
    schedule: &MemorySchedule,
    tol: Option<Tolerance>,
) -> Result<MeanFieldTrajectory> {
    schedule.validate()?;
    let cfg = mf_config(config, schedule)?;
    let tol = tol.unwrap_or(Tolerance {
        rel: 1e-10,
        abs: 1e-14,
    });
    let max_step = schedule.tau_p() / 20.0;
    let mut states = Vec::new();
    let mut cur = MeanFieldState {
        s: ZERO,
        beta: ZERO,
        time: schedule.segments()[0].start,
    };
    for seg in schedule.segments() {
        let grid = seg.grid();
        match seg.driven {
            true => {
                let mut out = Vec::with_capacity(grid.len());
                cur = integrate_window(&cfg, cur, &grid, tol, max_step, &mut out)?;
                states.extend(out.into_iter().skip(usize::from(!states.is_empty())));
            }
            false => {
                for &t in grid.iter().skip(1) {
                    cur = free_evolution(&cfg, cur, t - cur.time);
                    cur.time = t;
                    states.push(cur);
                }
            }
        }
    }
    let max_s = states.iter().map(|s| s.s.norm()).fold(0.0, f64::max);
    let saturated = max_s > SATURATION_GUARD;
    if saturated {
        log::warn!("mean-field |s| reached {max_s:.3}; weak-signal model is unreliable");
    }
    Ok(MeanFieldTrajectory {
        states,
        saturated,
        max_s,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RetrievalCurve {
    /// Time between the end of the write window and the start of the read window.
    pub delays: Vec<f64>,
    /// `|β|²` at the end of the write window.
    pub stored: f64,
    /// `|β|²` at the start of the read window.
    pub before_read: Vec<f64>,
    /// `|β|²` removed during the read window.
    pub retrieved: Vec<f64>,
}

impl RetrievalCurve {
    pub fn record(&self) -> Result<SpectrumRecord> {
        SpectrumRecord::new("delay_gamma", self.delays.clone(), "retrieved_phonons", self.retrieved.clone())
    }

    /// Retrieved over stored at each delay.
    pub fn ratios(&self) -> Vec<f64> {
        self.retrieved.iter().map(|r| r / self.stored).collect()
    }
}

/// Mean-field retrieval versus storage delay. The write step runs once; the
/// stored amplitude is carried through each delay analytically and the read
/// step is re-integrated per delay.
pub fn retrieval_vs_delay(config: &SystemConfig, schedule: &MemorySchedule, delays: &[f64]) -> Result<RetrievalCurve> {
    if delays.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
        return Err(Error::InvalidGrid("delays must be finite and non-negative".into()));
    }
    schedule.validate()?;
    let cfg = mf_config(config, schedule)?;
    let tol = Tolerance {
        rel: 1e-10,
        abs: 1e-14,
    };
    let max_step = schedule.tau_p() / 20.0;
    let segs = schedule.segments();
    let write = segs[0];
    let mut out = Vec::new();
    let start = MeanFieldState {
        s: ZERO,
        beta: ZERO,
        time: write.start,
    };
    let after_write = integrate_window(&cfg, start, &write.grid(), tol, max_step, &mut out)?;
    let stored = after_write.beta.norm_sqr();
    let read_len = schedule.read_window().1 - schedule.read_window().0;
    let rows: Vec<Result<(f64, f64)>> = delays
        .par_iter()
        .map(|&delay| {
            let shifted = schedule.with_gap(delay)?;
            let read = *shifted.segments().last().expect("read segment");
            let cfg = mf_config(config, &shifted)?;
            let mut st = free_evolution(&cfg, after_write, read.start - after_write.time);
            st.time = read.start;
            let before = st.beta.norm_sqr();
            let grid = Segment {
                start: read.start,
                end: read.start + read_len,
                driven: true,
                points: read.points,
            }
            .grid();
            let mut buf = Vec::new();
            let end = integrate_window(&cfg, st, &grid, tol, max_step, &mut buf)?;
            Ok((before, before - end.beta.norm_sqr()))
        })
        .collect();
    let mut before_read = Vec::with_capacity(delays.len());
    let mut retrieved = Vec::with_capacity(delays.len());
    for r in rows {
        let (b, r) = r?;
        before_read.push(b);
        retrieved.push(r);
    }
    Ok(RetrievalCurve {
        delays: delays.to_vec(),
        stored,
        before_read,
        retrieved,
    })
}

fn lorentzian(x: f64, half_width: f64) -> f64 {
    half_width / (x * x + half_width * half_width)
}

/// Weak-drive rate model for the excitation spectra.
///
/// Each drive channel pumps the emitter at `R = 2Ω² w/(δ² + w²)`: the
/// zero-phonon line (`δ = Δ`, `w = γ/2`) and the one-phonon sidebands
/// weighted by `λ² = (g₀/ω_b)²`, Stokes (`δ = Δ + ω_b`, factor `n + 1`) and
/// anti-Stokes (`δ = Δ − ω_b`, factor `n`) with `w = (γ + κ_b)/2`. The
/// excited population is `p = R/(γ + 2R)`. The phonon number `n` balances
/// sideband pumping and Stokes emission against decay,
/// `κ_b n = γ(R_S − R_aS)/(γ + 2R) + γ p λ²`, solved self-consistently.
/// Returns `p` and `⟨b†b⟩ = n + p λ²` (the displaced excited-state
/// contribution included).
pub fn weak_drive_spectrum_analytic(config: &SystemConfig, detunings: &[f64]) -> Result<(SpectrumRecord, SpectrumRecord)> {
    config.validate()?;
    if config.tones.len() != 1 || !config.is_time_independent() {
        return Err(Error::InvalidParameter {
            name: "tones",
            reason: "the weak-drive spectrum needs exactly one CW tone".into(),
        });
    }
    let omega = config.tones[0].amplitude.norm();
    let gamma = config.molecule.gamma;
    let ph = config.phonon;
    let lam2 = (config.coupling.g0 / ph.omega_b).powi(2);
    let mut pop_e = Vec::with_capacity(detunings.len());
    let mut pop_b = Vec::with_capacity(detunings.len());
    for &delta in detunings {
        let rc = 2.0 * omega * omega * lorentzian(delta, 0.5 * gamma);
        let w = 0.5 * (gamma + ph.kappa_b);
        let rs1 = 2.0 * omega * omega * lam2 * lorentzian(delta + ph.omega_b, w);
        let ra1 = 2.0 * omega * omega * lam2 * lorentzian(delta - ph.omega_b, w);
        let mut n = ph.n_thermal;
        let mut converged = false;
        let mut p = 0.0;
        for _ in 0..500 {
            let r = rc + rs1 * (n + 1.0) + ra1 * n;
            p = r / (gamma + 2.0 * r);
            let net = gamma * (rs1 * (n + 1.0) - ra1 * n) / (gamma + 2.0 * r) + gamma * p * lam2;
            let n_new = if ph.kappa_b > 0.0 {
                ph.n_thermal + net / ph.kappa_b
            } else {
                f64::INFINITY
            };
            if !n_new.is_finite() {
                break;
            }
            if (n_new - n).abs() <= 1e-13 * n_new.abs().max(1e-300) {
                n = n_new;
                converged = true;
                break;
            }
            n = n_new;
        }
        if !converged {
            return Err(Error::AtDetuning {
                detuning: delta,
                source: Box::new(Error::SelfConsistency(500)),
            });
        }
        let r = rc + rs1 * (n + 1.0) + ra1 * n;
        p = if r > 0.0 { r / (gamma + 2.0 * r) } else { p };
        pop_e.push(p);
        pop_b.push(n + p * lam2);
    }
    Ok((
        SpectrumRecord::new("detuning_gamma", detunings.to_vec(), "pop_e", pop_e)?,
        SpectrumRecord::new("detuning_gamma", detunings.to_vec(), "pop_b", pop_b)?,
    ))
}

/// `1/κ_b` converted to seconds for a given `γ/2π` in MHz.
pub fn storage_time_seconds(kappa_b: f64, gamma_over_2pi_mhz: f64) -> f64 {
    1.0 / (kappa_b * 2.0 * PI * gamma_over_2pi_mhz * 1e6)
}
