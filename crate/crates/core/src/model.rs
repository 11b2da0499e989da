//! Physical parameters, the molecule–phonon Hamiltonian and its collapse
//! operators, and closed-form estimators.
//!
//! Internal units: the electronic full-width decay rate is 1 (γ = 1), ħ = 1,
//! times in 1/γ. The drive convention is `Ω (σ† e^{-iω_L t} + h.c.)` with no
//! factor of two, so a resonant two-level emitter saturates as
//! `ρ_ee = Ω² / (Δ² + γ²/4 + 2Ω²)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Ladder, QOperator, SpaceDims, C64, ZERO};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_BOLTZMANN: f64 = 1.380_649e-23;

/// Electronic parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeParams {
    /// Full-width decay rate (γ-units, 1 internally).
    pub gamma: f64,
    /// Absolute zero-phonon-line frequency, bookkeeping only.
    pub omega0_ref: Option<f64>,
}

impl Default for MoleculeParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            omega0_ref: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhononModeParams {
    pub omega_b: f64,
    /// Full-width energy decay rate.
    pub kappa_b: f64,
    /// Mean thermal occupation of the bath.
    pub n_thermal: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub g0: f64,
}

/// Material constants entering the strain-coupling estimate of `g0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// `D / 2πħ` in Hz.
    pub deformation_potential_over_2pi_hbar: f64,
    pub strain: f64,
    /// Pa
    pub young_modulus: f64,
    /// m³
    pub mode_volume: f64,
    /// Hz
    pub mode_freq_over_2pi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Envelope {
    Cw,
    /// `exp(-(t - center)² / width²)`
    Gaussian { center: f64, width: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Cw => 1.0,
            Envelope::Gaussian { center, width } => {
                let x = (t - center) / width;
                (-x * x).exp()
            }
        }
    }
}

/// One coherent drive tone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseTone {
    /// Complex Rabi amplitude Ω.
    pub amplitude: C64,
    /// `Δ = ω0 − ω_L`.
    pub detuning: f64,
    pub envelope: Envelope,
}

impl PulseTone {
    pub fn cw(amplitude: f64, detuning: f64) -> Self {
        Self {
            amplitude: C64::new(amplitude, 0.0),
            detuning,
            envelope: Envelope::Cw,
        }
    }

    pub fn gaussian(amplitude: C64, detuning: f64, center: f64, width: f64) -> Self {
        Self {
            amplitude,
            detuning,
            envelope: Envelope::Gaussian { center, width },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Envelope::Gaussian { width, center } = self.envelope {
            if !(width > 0.0) || !width.is_finite() || !center.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "envelope.width",
                    reason: format!("Gaussian width must be positive, got {width}"),
                });
            }
        }
        if !self.amplitude.re.is_finite() || !self.amplitude.im.is_finite() || !self.detuning.is_finite() {
            return Err(Error::InvalidParameter {
                name: "tone",
                reason: "non-finite amplitude or detuning".into(),
            });
        }
        Ok(())
    }

    /// Complex coefficient of σ† at time `t` in the frame rotating with a
    /// carrier of detuning `frame_detuning`.
    pub fn coefficient(&self, t: f64, frame_detuning: f64) -> C64 {
        let env = self.envelope.value(t);
        if env == 0.0 {
            return ZERO;
        }
        let phase = (self.detuning - frame_detuning) * t;
        self.amplitude * env * C64::new(phase.cos(), phase.sin())
    }
}

/// Full parameter set for one simulation, in γ-units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub molecule: MoleculeParams,
    pub phonon: PhononModeParams,
    pub coupling: CouplingParams,
    pub tones: Vec<PulseTone>,
    pub cutoff: SpaceDims,
    /// Index into `tones` of the carrier defining the rotating frame.
    pub frame_reference_tone: usize,
    /// Two-photon detuning of the memory scheme; only 0 is used.
    pub raman_detuning: f64,
}

impl SystemConfig {
    /// Single CW tone at detuning `delta`, amplitude `omega`.
    pub fn cw(
        g0: f64,
        omega_b: f64,
        kappa_b: f64,
        omega: f64,
        delta: f64,
        cutoff: usize,
    ) -> Result<Self> {
        let cfg = Self {
            molecule: MoleculeParams::default(),
            phonon: PhononModeParams {
                omega_b,
                kappa_b,
                n_thermal: 0.0,
            },
            coupling: CouplingParams { g0 },
            tones: vec![PulseTone::cw(omega, delta)],
            cutoff: SpaceDims::new(cutoff)?,
            frame_reference_tone: 0,
            raman_detuning: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                })
            }
        };
        let non_negative = |name: &'static str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be non-negative, got {v}"),
                })
            }
        };
        positive("gamma", self.molecule.gamma)?;
        positive("omega_b", self.phonon.omega_b)?;
        non_negative("kappa_b", self.phonon.kappa_b)?;
        non_negative("n_thermal", self.phonon.n_thermal)?;
        non_negative("g0", self.coupling.g0)?;
        for t in &self.tones {
            t.validate()?;
        }
        if !self.tones.is_empty() && self.frame_reference_tone >= self.tones.len() {
            return Err(Error::InvalidParameter {
                name: "frame_reference_tone",
                reason: format!(
                    "index {} out of range for {} tones",
                    self.frame_reference_tone,
                    self.tones.len()
                ),
            });
        }
        Ok(())
    }

    /// Detuning of the rotating-frame carrier (0 with no tones).
    pub fn frame_detuning(&self) -> f64 {
        self.tones
            .get(self.frame_reference_tone)
            .map(|t| t.detuning)
            .unwrap_or(0.0)
    }

    pub fn with_cutoff(&self, cutoff: SpaceDims) -> Self {
        Self {
            cutoff,
            ..self.clone()
        }
    }

    /// Sum of all tone coefficients multiplying σ† at time `t`.
    pub fn drive_coefficient(&self, t: f64) -> C64 {
        let frame = self.frame_detuning();
        self.tones.iter().map(|tone| tone.coefficient(t, frame)).sum()
    }

    /// True if the rotating-frame Hamiltonian has no explicit time dependence.
    pub fn is_time_independent(&self) -> bool {
        let frame = self.frame_detuning();
        self.tones
            .iter()
            .all(|t| matches!(t.envelope, Envelope::Cw) && t.detuning == frame)
    }
}

/// The time-independent part of `H`: `Δ_ref σ†σ + ω_b b†b + g0 σ†σ (b + b†)`.
pub fn static_hamiltonian(config: &SystemConfig) -> QOperator {
    let l = Ladder::new(config.cutoff);
    let x = &l.b + &l.b.adjoint();
    let coupling = (&l.excited_projector * &x).scaled(C64::new(config.coupling.g0, 0.0));
    l.excited_projector
        .scaled(C64::new(config.frame_detuning(), 0.0))
        + l.phonon_number.scaled(C64::new(config.phonon.omega_b, 0.0))
        + coupling
}

/// `H(t)` in the frame rotating at the reference tone's carrier.
pub fn build_hamiltonian(config: &SystemConfig, t: f64) -> QOperator {
    let l = Ladder::new(config.cutoff);
    let c = config.drive_coefficient(t);
    let raising = l.sigma.adjoint();
    let drive = raising.scaled(c) + l.sigma.scaled(c.conj());
    let h = static_hamiltonian(config) + drive;
    QOperator::new_hermitian(h.space(), h.into_matrix()).expect("Hamiltonian is Hermitian by construction")
}

/// Lindblad jump operators `√γ σ`, `√(κ(n̄+1)) b`, `√(κ n̄) b†`; zero-rate
/// channels are omitted.
pub fn build_collapse_ops(config: &SystemConfig) -> Vec<QOperator> {
    let l = Ladder::new(config.cutoff);
    let mut ops = vec![l.sigma.scaled(C64::new(config.molecule.gamma.sqrt(), 0.0))];
    let kappa = config.phonon.kappa_b;
    let nth = config.phonon.n_thermal;
    if kappa > 0.0 {
        ops.push(l.b.scaled(C64::new((kappa * (nth + 1.0)).sqrt(), 0.0)));
        if nth > 0.0 {
            ops.push(l.b.adjoint().scaled(C64::new((kappa * nth).sqrt(), 0.0)));
        }
    }
    ops
}

/// Strain-coupling estimate `g0/2π = D s̃ √(ω_b / 2ħEV) / 2π`, in Hz.
pub fn estimate_g0(m: &MaterialParams) -> Result<f64> {
    let check = |name: &'static str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name,
                reason: format!("must be positive, got {v}"),
            })
        }
    };
    check("deformation_potential", m.deformation_potential_over_2pi_hbar)?;
    check("strain", m.strain)?;
    check("young_modulus", m.young_modulus)?;
    check("mode_volume", m.mode_volume)?;
    check("mode_freq", m.mode_freq_over_2pi)?;
    if m.strain > 1.0 {
        return Err(Error::InvalidParameter {
            name: "strain",
            reason: format!("must not exceed 1, got {}", m.strain),
        });
    }
    let d = 2.0 * PI * HBAR * m.deformation_potential_over_2pi_hbar;
    let omega_b = 2.0 * PI * m.mode_freq_over_2pi;
    let g0 = d * m.strain * (omega_b / (2.0 * HBAR * m.young_modulus * m.mode_volume)).sqrt();
    Ok(g0 / (2.0 * PI))
}

/// Debye–Waller factor `exp(-g0²/ω_b²)`.
pub fn debye_waller(g0: f64, omega_b: f64) -> Result<f64> {
    if !(omega_b > 0.0) {
        return Err(Error::InvalidParameter {
            name: "omega_b",
            reason: format!("must be positive, got {omega_b}"),
        });
    }
    Ok((-(g0 / omega_b).powi(2)).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Decay {
    /// Energy decay rate in rad/s.
    pub kappa: f64,
    /// `1/κ` in s.
    pub lifetime: f64,
}

/// `κ = 2πf/Q`, lifetime `1/κ`.
pub fn decay_from_quality(mode_freq_over_2pi: f64, q: f64) -> Result<Decay> {
    if !(mode_freq_over_2pi > 0.0) || !(q > 0.0) {
        return Err(Error::InvalidParameter {
            name: "quality",
            reason: format!("frequency and Q must be positive (f={mode_freq_over_2pi}, Q={q})"),
        });
    }
    let kappa = 2.0 * PI * mode_freq_over_2pi / q;
    Ok(Decay {
        kappa,
        lifetime: 1.0 / kappa,
    })
}

/// Bose–Einstein occupation at frequency `f` (Hz) and temperature `T` (K).
pub fn bose_occupation(freq_over_2pi: f64, temperature: f64) -> Result<f64> {
    if !(freq_over_2pi > 0.0) || !(temperature >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "bose_occupation",
            reason: format!("need f > 0 and T >= 0 (f={freq_over_2pi}, T={temperature})"),
        });
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    let x = HBAR * 2.0 * PI * freq_over_2pi / (K_BOLTZMANN * temperature);
    Ok(1.0 / x.exp_m1())
}

/// Unit conversions between γ-units and physical units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub gamma_over_2pi_mhz: f64,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            gamma_over_2pi_mhz: 40.0,
        }
    }
}

impl Units {
    /// γ in rad/s.
    pub fn gamma_rad_per_s(&self) -> f64 {
        2.0 * PI * self.gamma_over_2pi_mhz * 1e6
    }

    /// Frequency/2π in MHz → angular γ-units.
    pub fn mhz_to_gamma(&self, f_mhz: f64) -> f64 {
        f_mhz / self.gamma_over_2pi_mhz
    }

    pub fn gamma_to_mhz(&self, x: f64) -> f64 {
        x * self.gamma_over_2pi_mhz
    }

    pub fn us_to_gamma_time(&self, t_us: f64) -> f64 {
        t_us * 1e-6 * self.gamma_rad_per_s()
    }

    pub fn gamma_time_to_us(&self, t: f64) -> f64 {
        t / self.gamma_rad_per_s() * 1e6
    }

    pub fn gamma_time_to_s(&self, t: f64) -> f64 {
        t / self.gamma_rad_per_s()
    }

    /// Rate in rad/s → γ-units.
    pub fn rate_to_gamma(&self, rate: f64) -> f64 {
        rate / self.gamma_rad_per_s()
    }
}
