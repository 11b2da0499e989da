//! Parameter sweeps over a base configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::C64;
use crate::model::SystemConfig;

/// A scalar field of [`SystemConfig`], in γ-units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParameterPath {
    G0,
    OmegaB,
    KappaB,
    NThermal,
    ToneDetuning(usize),
    /// Modulus of the amplitude; the phase is kept.
    ToneAmplitude(usize),
}

impl ParameterPath {
    pub fn get(&self, config: &SystemConfig) -> Result<f64> {
        Ok(match *self {
            ParameterPath::G0 => config.coupling.g0,
            ParameterPath::OmegaB => config.phonon.omega_b,
            ParameterPath::KappaB => config.phonon.kappa_b,
            ParameterPath::NThermal => config.phonon.n_thermal,
            ParameterPath::ToneDetuning(i) => tone(config, i)?.detuning,
            ParameterPath::ToneAmplitude(i) => tone(config, i)?.amplitude.norm(),
        })
    }

    pub fn set(&self, config: &mut SystemConfig, value: f64) -> Result<()> {
        match *self {
            ParameterPath::G0 => config.coupling.g0 = value,
            ParameterPath::OmegaB => config.phonon.omega_b = value,
            ParameterPath::KappaB => config.phonon.kappa_b = value,
            ParameterPath::NThermal => config.phonon.n_thermal = value,
            ParameterPath::ToneDetuning(i) => {
                tone(config, i)?;
                config.tones[i].detuning = value;
            }
            ParameterPath::ToneAmplitude(i) => {
                let a = tone(config, i)?.amplitude;
                let phase = if a.norm() > 0.0 { a / a.norm() } else { C64::new(1.0, 0.0) };
                config.tones[i].amplitude = phase * value;
            }
        }
        Ok(())
    }

    /// Column label for CSV output.
    pub fn column(&self) -> String {
        format!("{}_gamma", self.to_string().replace(['.', '[', ']'], "_").replace("__", "_"))
    }
}

fn tone(config: &SystemConfig, i: usize) -> Result<&crate::model::PulseTone> {
    config.tones.get(i).ok_or_else(|| Error::InvalidParameter {
        name: "sweep.parameter",
        reason: format!("tone index {i} out of range ({} tones)", config.tones.len()),
    })
}

impl fmt::Display for ParameterPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParameterPath::G0 => write!(f, "coupling.g0"),
            ParameterPath::OmegaB => write!(f, "phonon.omega_b"),
            ParameterPath::KappaB => write!(f, "phonon.kappa_b"),
            ParameterPath::NThermal => write!(f, "phonon.n_thermal"),
            ParameterPath::ToneDetuning(i) => write!(f, "tones[{i}].detuning"),
            ParameterPath::ToneAmplitude(i) => write!(f, "tones[{i}].amplitude"),
        }
    }
}

impl FromStr for ParameterPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter {
            name: "sweep.parameter",
            reason: format!(
                "unknown parameter path `{s}` (expected coupling.g0, phonon.omega_b, phonon.kappa_b, \
                 phonon.n_thermal, tones[i].detuning or tones[i].amplitude)"
            ),
        };
        match s.trim() {
            "coupling.g0" => return Ok(ParameterPath::G0),
            "phonon.omega_b" => return Ok(ParameterPath::OmegaB),
            "phonon.kappa_b" => return Ok(ParameterPath::KappaB),
            "phonon.n_thermal" => return Ok(ParameterPath::NThermal),
            _ => {}
        }
        let rest = s.trim().strip_prefix("tones[").ok_or_else(bad)?;
        let (idx, field) = rest.split_once("].").ok_or_else(bad)?;
        let idx: usize = idx.parse().map_err(|_| bad())?;
        match field {
            "detuning" => Ok(ParameterPath::ToneDetuning(idx)),
            "amplitude" => Ok(ParameterPath::ToneAmplitude(idx)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for ParameterPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParameterPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One parameter stepped over `values`, with fixed `overrides` applied
/// to every point first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: ParameterPath,
    pub values: Vec<f64>,
    #[serde(default)]
    pub overrides: Vec<(ParameterPath, f64)>,
}

impl SweepSpec {
    pub fn validate(&self, base: &SystemConfig) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidGrid("sweep has no values".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("sweep values must be finite".into()));
        }
        self.parameter.get(base)?;
        for (p, _) in &self.overrides {
            p.get(base)?;
        }
        Ok(())
    }

    /// Configuration for point `k`.
    pub fn point(&self, base: &SystemConfig, k: usize) -> Result<SystemConfig> {
        let mut cfg = base.clone();
        for (p, v) in &self.overrides {
            p.set(&mut cfg, *v)?;
        }
        let v = *self.values.get(k).ok_or_else(|| Error::InvalidGrid(format!("no sweep point {k}")))?;
        self.parameter.set(&mut cfg, v)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
