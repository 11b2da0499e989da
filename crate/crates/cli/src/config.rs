//! Run configuration files.
//!
//! A config is TOML with the sections `[units]`, `[molecule]`, `[phonon]`,
//! `[coupling]`, `[[tones]]`, `[simulation]`, `[memory]`, `[output]` and
//! `[sweep]`. Unknown keys are rejected. Quantities may be given in γ-units
//! or in physical units, never both; everything is resolved to γ-units on
//! load. [`RunConfig::to_toml`] writes the resolved values back in γ-units,
//! and parsing that text again gives an identical [`RunConfig`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use molmech_core::analytics;
use molmech_core::experiments::{signal_amplitude, MemorySchedule, ParameterPath, SweepSpec};
use molmech_core::hilbert::{SpaceDims, C64};
use molmech_core::model::{
    bose_occupation, decay_from_quality, CouplingParams, Envelope, MoleculeParams, PhononModeParams, PulseTone,
    SystemConfig, Units,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::range::parse_range;

pub const DEFAULT_CUTOFF: usize = 10;
pub const DEFAULT_RTOL: f64 = 1e-8;
pub const DEFAULT_ATOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.origin, l, self.message),
            None => write!(f, "{}: {}", self.origin, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Signal,
    Control,
    #[default]
    Probe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeKind {
    #[default]
    Cw,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepTarget {
    /// Steady-state populations under the single CW tone.
    Steady,
    /// Master-equation memory run.
    Memory,
    /// Mean-field memory run.
    MemoryMeanfield,
    /// Closed-form efficiencies from the memory constants.
    MemoryAnalytic,
}

// Raw file layout.

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub units: Option<RawUnits>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub molecule: Option<RawMolecule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phonon: Option<RawPhonon>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling: Option<RawCoupling>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tones: Vec<RawTone>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<RawSimulation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub memory: Option<RawMemory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<RawOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<RawSweep>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawUnits {
    #[serde(rename = "gamma_over_2pi_MHz")]
    pub gamma_over_2pi_mhz: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMolecule {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0_in_gamma: Option<f64>,
    #[serde(rename = "zpl_THz", skip_serializing_if = "Option::is_none")]
    pub zpl_thz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPhonon {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_b_in_gamma: Option<f64>,
    #[serde(rename = "freq_GHz", skip_serializing_if = "Option::is_none")]
    pub freq_ghz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_b_in_gamma: Option<f64>,
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_thermal: Option<f64>,
    #[serde(rename = "temperature_K", skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCoupling {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g0_in_gamma: Option<f64>,
    #[serde(rename = "g0_MHz", skip_serializing_if = "Option::is_none")]
    pub g0_mhz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTone {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(rename = "amplitude_MHz", skip_serializing_if = "Option::is_none")]
    pub amplitude_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning: Option<f64>,
    #[serde(rename = "detuning_MHz", skip_serializing_if = "Option::is_none")]
    pub detuning_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_reference: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSimulation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning_range: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_range: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check_cutoff: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMemory {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_p_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_signal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_write: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_write_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_read: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_read_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal_detuning: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub storage_delay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub storage_delay_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delays: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delays_us: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub parameter: String,
    pub target: SweepTarget,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overrides: Option<BTreeMap<String, f64>>,
}

// Resolved configuration.

/// One tone as configured: real amplitude and phase kept separately so the
/// γ-unit text form reproduces it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToneSpec {
    pub role: Role,
    pub amplitude: f64,
    pub phase_rad: f64,
    pub detuning: f64,
    pub envelope: Envelope,
}

impl ToneSpec {
    pub fn tone(&self) -> PulseTone {
        let a = if self.phase_rad == 0.0 {
            C64::new(self.amplitude, 0.0)
        } else {
            C64::from_polar(self.amplitude, self.phase_rad)
        };
        PulseTone {
            amplitude: a,
            detuning: self.detuning,
            envelope: self.envelope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSettings {
    pub rtol: f64,
    pub atol: f64,
    pub detuning_range: Option<String>,
    pub omega_range: Option<String>,
    pub check_cutoff: bool,
}

/// Memory schedule with all amplitudes explicit, in γ-units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemorySettings {
    pub tau_p: f64,
    pub signal_amplitude: f64,
    pub control_write_amplitude: f64,
    pub control_read_amplitude: f64,
    pub signal_detuning: f64,
    pub storage_delay: f64,
    pub window_margin: f64,
    pub window_points: usize,
    pub gap_points: usize,
    /// Storage delays for the retrieval curve.
    pub delays: Vec<f64>,
}

impl MemorySettings {
    pub fn schedule(&self, system: &SystemConfig) -> molmech_core::Result<MemorySchedule> {
        let dc = self.signal_detuning + system.phonon.omega_b + system.raman_detuning;
        let mut s = MemorySchedule::gaussian(
            self.tau_p,
            (C64::new(self.signal_amplitude, 0.0), self.signal_detuning),
            (C64::new(self.control_write_amplitude, 0.0), dc),
            (C64::new(self.control_read_amplitude, 0.0), dc),
            self.storage_delay,
            self.window_margin,
        );
        s.window_points = self.window_points;
        s.gap_points = self.gap_points;
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSettings {
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl OutputSettings {
    pub fn csv(&self) -> bool {
        self.formats.contains(&Format::Csv)
    }

    pub fn json(&self) -> bool {
        self.formats.contains(&Format::Json)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSettings {
    pub spec: SweepSpec,
    pub target: SweepTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub units: Units,
    pub tones: Vec<ToneSpec>,
    pub system: SystemConfig,
    pub simulation: SimulationSettings,
    pub memory: Option<MemorySettings>,
    pub output: OutputSettings,
    pub sweep: Option<SweepSettings>,
}

struct Ctx<'a> {
    src: &'a str,
    origin: &'a str,
}

impl Ctx<'_> {
    fn err(&self, line: Option<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            origin: self.origin.to_string(),
            line,
            message: message.into(),
        }
    }

    fn at(&self, section: &str, index: Option<usize>, key: Option<&str>, message: impl Into<String>) -> ConfigError {
        self.err(locate(self.src, section, index, key), message)
    }

    fn one_of<A, B>(
        &self,
        section: &str,
        index: Option<usize>,
        a: (&str, Option<A>),
        b: (&str, Option<B>),
    ) -> Result<Option<Either<A, B>>, ConfigError> {
        match (a.1, b.1) {
            (Some(_), Some(_)) => Err(self.at(
                section,
                index,
                Some(b.0),
                format!("`{}` and `{}` both given in [{section}]; use one", a.0, b.0),
            )),
            (Some(x), None) => Ok(Some(Either::Left(x))),
            (None, Some(y)) => Ok(Some(Either::Right(y))),
            (None, None) => Ok(None),
        }
    }
}

enum Either<A, B> {
    Left(A),
    Right(B),
}

/// 1-based line of `key` in `[section]` (the `index`-th `[[section]]` for
/// arrays), or of the section header when `key` is `None`.
fn locate(src: &str, section: &str, index: Option<usize>, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut count: usize = 0;
    let mut header_line = None;
    for (k, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix("[[").and_then(|r| r.split("]]").next()) {
            current = h.trim().to_string();
            if current == section {
                count += 1;
            }
        } else if let Some(h) = line.strip_prefix('[').and_then(|r| r.split(']').next()) {
            current = h.trim().to_string();
            count = 1;
        } else {
            if current != section || index.map_or(false, |i| count != i + 1) {
                continue;
            }
            if let Some(key) = key {
                if let Some(rest) = line.strip_prefix(key) {
                    if rest.trim_start().starts_with('=') {
                        return Some(k + 1);
                    }
                }
            }
            continue;
        }
        if current == section && index.map_or(true, |i| count == i + 1) && header_line.is_none() {
            header_line = Some(k + 1);
        }
    }
    header_line
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let origin = path.display().to_string();
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
        origin: origin.clone(),
        line: None,
        message: format!("cannot read: {e}"),
    })?;
    parse_config_str(&src, &origin)
}

pub fn parse_config_str(src: &str, origin: &str) -> Result<RunConfig, ConfigError> {
    let ctx = Ctx { src, origin };
    let raw: RawConfig = toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(src, s.start));
        ctx.err(line, e.message().trim().to_string())
    })?;
    resolve(&ctx, raw)
}

fn check_finite(ctx: &Ctx, section: &str, index: Option<usize>, key: &str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(x) if !x.is_finite() => Err(ctx.at(section, index, Some(key), format!("`{key}` must be finite"))),
        _ => Ok(()),
    }
}

fn resolve(ctx: &Ctx, raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let units_raw = raw.units.as_ref().ok_or_else(|| ctx.err(None, "missing section [units]"))?;
    let g = units_raw.gamma_over_2pi_mhz;
    if !(g > 0.0 && g.is_finite()) {
        return Err(ctx.at("units", None, Some("gamma_over_2pi_MHz"), "gamma_over_2pi_MHz must be positive"));
    }
    let units = Units { gamma_over_2pi_mhz: g };

    let molecule = match &raw.molecule {
        None => MoleculeParams::default(),
        Some(m) => {
            check_finite(ctx, "molecule", None, "omega0_in_gamma", m.omega0_in_gamma)?;
            check_finite(ctx, "molecule", None, "zpl_THz", m.zpl_thz)?;
            let omega0 = match ctx.one_of("molecule", None, ("omega0_in_gamma", m.omega0_in_gamma), ("zpl_THz", m.zpl_thz))? {
                Some(Either::Left(x)) => Some(x),
                Some(Either::Right(thz)) => Some(units.mhz_to_gamma(thz * 1e6)),
                None => None,
            };
            MoleculeParams {
                gamma: 1.0,
                omega0_ref: omega0,
            }
        }
    };

    let p = raw.phonon.as_ref().ok_or_else(|| ctx.err(None, "missing section [phonon]"))?;
    for (k, v) in [
        ("omega_b_in_gamma", p.omega_b_in_gamma),
        ("freq_GHz", p.freq_ghz),
        ("kappa_b_in_gamma", p.kappa_b_in_gamma),
        ("Q", p.q),
        ("n_thermal", p.n_thermal),
        ("temperature_K", p.temperature_k),
    ] {
        check_finite(ctx, "phonon", None, k, v)?;
    }
    let omega_b = match ctx.one_of("phonon", None, ("omega_b_in_gamma", p.omega_b_in_gamma), ("freq_GHz", p.freq_ghz))? {
        Some(Either::Left(x)) => x,
        Some(Either::Right(ghz)) => units.mhz_to_gamma(ghz * 1e3),
        None => return Err(ctx.at("phonon", None, None, "[phonon] needs omega_b_in_gamma or freq_GHz")),
    };
    if !(omega_b > 0.0) {
        return Err(ctx.at("phonon", None, None, "phonon frequency must be positive"));
    }
    let freq_hz = units.gamma_to_mhz(omega_b) * 1e6;
    let kappa_b = match ctx.one_of("phonon", None, ("kappa_b_in_gamma", p.kappa_b_in_gamma), ("Q", p.q))? {
        Some(Either::Left(x)) => x,
        Some(Either::Right(q)) => {
            let d = decay_from_quality(freq_hz, q).map_err(|e| ctx.at("phonon", None, Some("Q"), e.to_string()))?;
            units.rate_to_gamma(d.kappa)
        }
        None => return Err(ctx.at("phonon", None, None, "[phonon] needs kappa_b_in_gamma or Q")),
    };
    let n_thermal = match ctx.one_of("phonon", None, ("n_thermal", p.n_thermal), ("temperature_K", p.temperature_k))? {
        Some(Either::Left(x)) => x,
        Some(Either::Right(t)) => {
            bose_occupation(freq_hz, t).map_err(|e| ctx.at("phonon", None, Some("temperature_K"), e.to_string()))?
        }
        None => 0.0,
    };

    let c = raw.coupling.as_ref().ok_or_else(|| ctx.err(None, "missing section [coupling]"))?;
    check_finite(ctx, "coupling", None, "g0_in_gamma", c.g0_in_gamma)?;
    check_finite(ctx, "coupling", None, "g0_MHz", c.g0_mhz)?;
    let g0 = match ctx.one_of("coupling", None, ("g0_in_gamma", c.g0_in_gamma), ("g0_MHz", c.g0_mhz))? {
        Some(Either::Left(x)) => x,
        Some(Either::Right(mhz)) => units.mhz_to_gamma(mhz),
        None => return Err(ctx.at("coupling", None, None, "[coupling] needs g0_in_gamma or g0_MHz")),
    };

    let mut tones = Vec::with_capacity(raw.tones.len());
    for (i, t) in raw.tones.iter().enumerate() {
        tones.push(resolve_tone(ctx, &units, i, t)?);
    }
    let flagged: Vec<usize> = raw
        .tones
        .iter()
        .enumerate()
        .filter(|(_, t)| t.frame_reference == Some(true))
        .map(|(i, _)| i)
        .collect();
    let frame_reference_tone = match (tones.len(), flagged.as_slice()) {
        (0, _) => 0,
        (1, []) => 0,
        (_, [i]) => *i,
        (_, []) => {
            return Err(ctx.at("tones", Some(0), None, "several tones given; mark exactly one with frame_reference = true"))
        }
        (_, [_, second, ..]) => {
            return Err(ctx.at(
                "tones",
                Some(*second),
                Some("frame_reference"),
                "more than one tone has frame_reference = true",
            ))
        }
    };

    let sim = raw.simulation.clone().unwrap_or_default();
    for (k, v) in [("rtol", sim.rtol), ("atol", sim.atol)] {
        check_finite(ctx, "simulation", None, k, v)?;
        if let Some(x) = v {
            if !(x > 0.0) {
                return Err(ctx.at("simulation", None, Some(k), format!("`{k}` must be positive")));
            }
        }
    }
    for (k, v) in [("detuning_range", &sim.detuning_range), ("omega_range", &sim.omega_range)] {
        if let Some(r) = v {
            parse_range(r).map_err(|e| ctx.at("simulation", None, Some(k), e.to_string()))?;
        }
    }
    let cutoff = SpaceDims::new(sim.cutoff.unwrap_or(DEFAULT_CUTOFF))
        .map_err(|e| ctx.at("simulation", None, Some("cutoff"), e.to_string()))?;
    let simulation = SimulationSettings {
        rtol: sim.rtol.unwrap_or(DEFAULT_RTOL),
        atol: sim.atol.unwrap_or(DEFAULT_ATOL),
        detuning_range: sim.detuning_range,
        omega_range: sim.omega_range,
        check_cutoff: sim.check_cutoff.unwrap_or(false),
    };

    let system = SystemConfig {
        molecule,
        phonon: PhononModeParams {
            omega_b,
            kappa_b,
            n_thermal,
        },
        coupling: CouplingParams { g0 },
        tones: tones.iter().map(ToneSpec::tone).collect(),
        cutoff,
        frame_reference_tone,
        raman_detuning: 0.0,
    };
    system.validate().map_err(|e| ctx.err(None, e.to_string()))?;

    let memory = match &raw.memory {
        Some(m) => Some(resolve_memory(ctx, &units, &system, m)?),
        None => None,
    };

    let output = match &raw.output {
        None => OutputSettings {
            directory: None,
            formats: vec![Format::Csv, Format::Json],
        },
        Some(o) => {
            let mut formats = o.formats.clone().unwrap_or_else(|| vec![Format::Csv, Format::Json]);
            formats.sort_by_key(|f| *f as u8);
            formats.dedup();
            if formats.is_empty() {
                return Err(ctx.at("output", None, Some("formats"), "no output formats selected"));
            }
            OutputSettings {
                directory: o.directory.as_ref().map(PathBuf::from),
                formats,
            }
        }
    };

    let sweep = match &raw.sweep {
        Some(s) => Some(resolve_sweep(ctx, &system, s)?),
        None => None,
    };
    if let Some(s) = &sweep {
        if matches!(s.target, SweepTarget::Memory | SweepTarget::MemoryMeanfield | SweepTarget::MemoryAnalytic)
            && memory.is_none()
        {
            return Err(ctx.at("sweep", None, Some("target"), "memory sweep targets need a [memory] section"));
        }
    }

    Ok(RunConfig {
        units,
        tones,
        system,
        simulation,
        memory,
        output,
        sweep,
    })
}

fn resolve_tone(ctx: &Ctx, units: &Units, i: usize, t: &RawTone) -> Result<ToneSpec, ConfigError> {
    let s = "tones";
    for (k, v) in [
        ("amplitude", t.amplitude),
        ("amplitude_MHz", t.amplitude_mhz),
        ("phase_rad", t.phase_rad),
        ("detuning", t.detuning),
        ("detuning_MHz", t.detuning_mhz),
        ("center", t.center),
        ("center_us", t.center_us),
        ("width", t.width),
        ("width_us", t.width_us),
    ] {
        check_finite(ctx, s, Some(i), k, v)?;
    }
    let amplitude = match ctx.one_of(s, Some(i), ("amplitude", t.amplitude), ("amplitude_MHz", t.amplitude_mhz))? {
        Some(Either::Left(x)) => x,
        Some(Either::Right(mhz)) => units.mhz_to_gamma(mhz),
        None => return Err(ctx.at(s, Some(i), None, format!("tone {i} needs amplitude or amplitude_MHz"))),
    };
    if amplitude < 0.0 {
        return Err(ctx.at(s, Some(i), Some("amplitude"), "amplitude must be non-negative; use phase_rad for sign"));
    }
    let detuning = match ctx.one_of(s, Some(i), ("detuning", t.detuning), ("detuning_MHz", t.detuning_mhz))? {
        Some(Either::Left(x)) => x,
        Some(Either::Right(mhz)) => units.mhz_to_gamma(mhz),
        None => 0.0,
    };
    let center = match ctx.one_of(s, Some(i), ("center", t.center), ("center_us", t.center_us))? {
        Some(Either::Left(x)) => Some(x),
        Some(Either::Right(us)) => Some(units.us_to_gamma_time(us)),
        None => None,
    };
    let width = match ctx.one_of(s, Some(i), ("width", t.width), ("width_us", t.width_us))? {
        Some(Either::Left(x)) => Some(x),
        Some(Either::Right(us)) => Some(units.us_to_gamma_time(us)),
        None => None,
    };
    let envelope = match t.envelope.unwrap_or_default() {
        EnvelopeKind::Cw => {
            if center.is_some() || width.is_some() {
                return Err(ctx.at(s, Some(i), Some("envelope"), "center and width apply only to gaussian envelopes"));
            }
            Envelope::Cw
        }
        EnvelopeKind::Gaussian => {
            let (Some(center), Some(width)) = (center, width) else {
                return Err(ctx.at(s, Some(i), Some("envelope"), "gaussian envelope needs center and width"));
            };
            if !(width > 0.0) {
                return Err(ctx.at(s, Some(i), Some("width"), "width must be positive"));
            }
            Envelope::Gaussian { center, width }
        }
    };
    Ok(ToneSpec {
        role: t.role.unwrap_or_default(),
        amplitude,
        phase_rad: t.phase_rad.unwrap_or(0.0),
        detuning,
        envelope,
    })
}

fn resolve_memory(ctx: &Ctx, units: &Units, system: &SystemConfig, m: &RawMemory) -> Result<MemorySettings, ConfigError> {
    let s = "memory";
    for (k, v) in [
        ("tau_p", m.tau_p),
        ("tau_p_us", m.tau_p_us),
        ("n_signal", m.n_signal),
        ("signal_amplitude", m.signal_amplitude),
        ("m_write", m.m_write),
        ("control_write_amplitude", m.control_write_amplitude),
        ("m_read", m.m_read),
        ("control_read_amplitude", m.control_read_amplitude),
        ("signal_detuning", m.signal_detuning),
        ("storage_delay", m.storage_delay),
        ("storage_delay_us", m.storage_delay_us),
        ("window_margin", m.window_margin),
    ] {
        check_finite(ctx, s, None, k, v)?;
    }
    let tau_p = match ctx.one_of(s, None, ("tau_p", m.tau_p), ("tau_p_us", m.tau_p_us))? {
        Some(Either::Left(x)) => x,
        Some(Either::Right(us)) => units.us_to_gamma_time(us),
        None => return Err(ctx.at(s, None, None, "[memory] needs tau_p or tau_p_us")),
    };
    if !(tau_p > 0.0) {
        return Err(ctx.at(s, None, None, "pulse width must be positive"));
    }
    let gamma = system.molecule.gamma;
    let g0 = system.coupling.g0;
    let ob = system.phonon.omega_b;
    let signal = match ctx.one_of(s, None, ("n_signal", m.n_signal), ("signal_amplitude", m.signal_amplitude))? {
        Some(Either::Left(n)) => {
            if !(n >= 0.0) {
                return Err(ctx.at(s, None, Some("n_signal"), "n_signal must be non-negative"));
            }
            signal_amplitude(n, tau_p, gamma)
        }
        Some(Either::Right(a)) => a,
        None => return Err(ctx.at(s, None, None, "[memory] needs n_signal or signal_amplitude")),
    };
    let control = |mk: &str, ak: &str, mv: Option<f64>, av: Option<f64>| -> Result<f64, ConfigError> {
        match ctx.one_of(s, None, (mk, mv), (ak, av))? {
            Some(Either::Left(mm)) => analytics::control_amplitude_for(mm, g0, tau_p, gamma, ob)
                .map_err(|e| ctx.at(s, None, Some(mk), e.to_string())),
            Some(Either::Right(a)) => Ok(a),
            None => Err(ctx.at(s, None, None, format!("[memory] needs {mk} or {ak}"))),
        }
    };
    let ow = control("m_write", "control_write_amplitude", m.m_write, m.control_write_amplitude)?;
    let or = control("m_read", "control_read_amplitude", m.m_read, m.control_read_amplitude)?;
    for (k, v) in [("signal_amplitude", signal), ("control_write_amplitude", ow), ("control_read_amplitude", or)] {
        if !(v >= 0.0) {
            return Err(ctx.at(s, None, Some(k), format!("`{k}` must be non-negative")));
        }
    }
    let storage_delay = match ctx.one_of(s, None, ("storage_delay", m.storage_delay), ("storage_delay_us", m.storage_delay_us))? {
        Some(Either::Left(x)) => x,
        Some(Either::Right(us)) => units.us_to_gamma_time(us),
        None => 8.0 * tau_p,
    };
    if let Some(d) = m.delays.iter().chain(m.delays_us.iter()).flatten().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(ctx.at(s, None, None, format!("delays must be finite and non-negative, got {d}")));
    }
    let delays = match ctx.one_of(s, None, ("delays", m.delays.as_ref()), ("delays_us", m.delays_us.as_ref()))? {
        Some(Either::Left(d)) => d.clone(),
        Some(Either::Right(us)) => us.iter().map(|&x| units.us_to_gamma_time(x)).collect(),
        None => Vec::new(),
    };
    let settings = MemorySettings {
        tau_p,
        signal_amplitude: signal,
        control_write_amplitude: ow,
        control_read_amplitude: or,
        signal_detuning: m.signal_detuning.unwrap_or(0.0),
        storage_delay,
        window_margin: m.window_margin.unwrap_or(3.0),
        window_points: m.window_points.unwrap_or(401),
        gap_points: m.gap_points.unwrap_or(41),
        delays,
    };
    settings.schedule(system).map_err(|e| ctx.at(s, None, None, e.to_string()))?;
    Ok(settings)
}

fn resolve_sweep(ctx: &Ctx, system: &SystemConfig, s: &RawSweep) -> Result<SweepSettings, ConfigError> {
    let sec = "sweep";
    let parameter: ParameterPath = s
        .parameter
        .parse()
        .map_err(|e: molmech_core::Error| ctx.at(sec, None, Some("parameter"), e.to_string()))?;
    let values = match ctx.one_of(sec, None, ("values", s.values.as_ref()), ("range", s.range.as_ref()))? {
        Some(Either::Left(v)) => v.clone(),
        Some(Either::Right(r)) => parse_range(r).map_err(|e| ctx.at(sec, None, Some("range"), e.to_string()))?,
        None => return Err(ctx.at(sec, None, None, "[sweep] needs values or range")),
    };
    let mut overrides = Vec::new();
    for (k, v) in s.overrides.iter().flatten() {
        let p: ParameterPath = k
            .parse()
            .map_err(|e: molmech_core::Error| ctx.at(sec, None, Some("overrides"), e.to_string()))?;
        overrides.push((p, *v));
    }
    let spec = SweepSpec {
        parameter,
        values,
        overrides,
    };
    spec.validate(system).map_err(|e| ctx.at(sec, None, None, e.to_string()))?;
    Ok(SweepSettings { spec, target: s.target })
}

impl RunConfig {
    /// The resolved configuration in γ-units, as a raw file.
    pub fn to_raw(&self) -> RawConfig {
        let sys = &self.system;
        let tones = self
            .tones
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let (envelope, center, width) = match t.envelope {
                    Envelope::Cw => (EnvelopeKind::Cw, None, None),
                    Envelope::Gaussian { center, width } => (EnvelopeKind::Gaussian, Some(center), Some(width)),
                };
                RawTone {
                    role: Some(t.role),
                    amplitude: Some(t.amplitude),
                    phase_rad: (t.phase_rad != 0.0).then_some(t.phase_rad),
                    detuning: Some(t.detuning),
                    envelope: Some(envelope),
                    center,
                    width,
                    frame_reference: (self.tones.len() > 1).then_some(i == sys.frame_reference_tone),
                    ..RawTone::default()
                }
            })
            .collect();
        RawConfig {
            units: Some(RawUnits {
                gamma_over_2pi_mhz: self.units.gamma_over_2pi_mhz,
            }),
            molecule: sys.molecule.omega0_ref.map(|w| RawMolecule {
                omega0_in_gamma: Some(w),
                zpl_thz: None,
            }),
            phonon: Some(RawPhonon {
                omega_b_in_gamma: Some(sys.phonon.omega_b),
                kappa_b_in_gamma: Some(sys.phonon.kappa_b),
                n_thermal: Some(sys.phonon.n_thermal),
                ..RawPhonon::default()
            }),
            coupling: Some(RawCoupling {
                g0_in_gamma: Some(sys.coupling.g0),
                g0_mhz: None,
            }),
            tones,
            simulation: Some(RawSimulation {
                cutoff: Some(sys.cutoff.phonon_cutoff()),
                rtol: Some(self.simulation.rtol),
                atol: Some(self.simulation.atol),
                detuning_range: self.simulation.detuning_range.clone(),
                omega_range: self.simulation.omega_range.clone(),
                check_cutoff: Some(self.simulation.check_cutoff),
            }),
            memory: self.memory.as_ref().map(|m| RawMemory {
                tau_p: Some(m.tau_p),
                signal_amplitude: Some(m.signal_amplitude),
                control_write_amplitude: Some(m.control_write_amplitude),
                control_read_amplitude: Some(m.control_read_amplitude),
                signal_detuning: Some(m.signal_detuning),
                storage_delay: Some(m.storage_delay),
                window_margin: Some(m.window_margin),
                window_points: Some(m.window_points),
                gap_points: Some(m.gap_points),
                delays: (!m.delays.is_empty()).then(|| m.delays.clone()),
                ..RawMemory::default()
            }),
            output: Some(RawOutput {
                directory: self.output.directory.as_ref().map(|d| d.display().to_string()),
                formats: Some(self.output.formats.clone()),
            }),
            sweep: self.sweep.as_ref().map(|s| RawSweep {
                parameter: s.spec.parameter.to_string(),
                target: s.target,
                values: Some(s.spec.values.clone()),
                range: None,
                overrides: (!s.spec.overrides.is_empty())
                    .then(|| s.spec.overrides.iter().map(|(p, v)| (p.to_string(), *v)).collect()),
            }),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("resolved configuration serialises")
    }

    pub fn with_cutoff(&mut self, n: usize) -> molmech_core::Result<()> {
        self.system.cutoff = SpaceDims::new(n)?;
        Ok(())
    }

    pub fn tolerance(&self) -> molmech_core::dynamics::Tolerance {
        molmech_core::dynamics::Tolerance {
            rel: self.simulation.rtol,
            abs: self.simulation.atol,
        }
    }

    pub fn schedule(&self) -> Option<molmech_core::Result<MemorySchedule>> {
        self.memory.as_ref().map(|m| m.schedule(&self.system))
    }

    /// The resolved parameters in physical units.
    pub fn physical_echo(&self) -> serde_json::Value {
        let u = &self.units;
        let sys = &self.system;
        let decay_rad_s = sys.phonon.kappa_b * u.gamma_rad_per_s();
        let tones: Vec<_> = self
            .tones
            .iter()
            .map(|t| {
                let (center_us, width_us) = match t.envelope {
                    Envelope::Cw => (None, None),
                    Envelope::Gaussian { center, width } => (Some(u.gamma_time_to_us(center)), Some(u.gamma_time_to_us(width))),
                };
                json!({
                    "role": t.role,
                    "amplitude_MHz": u.gamma_to_mhz(t.amplitude),
                    "detuning_MHz": u.gamma_to_mhz(t.detuning),
                    "center_us": center_us,
                    "width_us": width_us,
                })
            })
            .collect();
        let memory = self.memory.as_ref().map(|m| {
            json!({
                "tau_p_us": u.gamma_time_to_us(m.tau_p),
                "n_signal": m.signal_amplitude.powi(2) * m.tau_p * (PI / 2.0).sqrt() / sys.molecule.gamma,
                "signal_amplitude_MHz": u.gamma_to_mhz(m.signal_amplitude),
                "control_write_amplitude_MHz": u.gamma_to_mhz(m.control_write_amplitude),
                "control_read_amplitude_MHz": u.gamma_to_mhz(m.control_read_amplitude),
                "storage_delay_us": u.gamma_time_to_us(m.storage_delay),
                "delays_us": m.delays.iter().map(|&d| u.gamma_time_to_us(d)).collect::<Vec<_>>(),
            })
        });
        json!({
            "gamma_over_2pi_MHz": u.gamma_over_2pi_mhz,
            "omega_b_over_2pi_GHz": u.gamma_to_mhz(sys.phonon.omega_b) / 1e3,
            "kappa_b_rad_per_s": decay_rate_or_null(decay_rad_s),
            "phonon_lifetime_ms": decay_rate_or_null(1e3 / decay_rad_s),
            "quality_factor": decay_rate_or_null(sys.phonon.omega_b / sys.phonon.kappa_b),
            "n_thermal": sys.phonon.n_thermal,
            "g0_over_2pi_MHz": u.gamma_to_mhz(sys.coupling.g0),
            "tones": tones,
            "memory": memory,
        })
    }
}

fn decay_rate_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}
