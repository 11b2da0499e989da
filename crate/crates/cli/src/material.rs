//! Material files for `estimate`.
//!
//! ```toml
//! deformation_potential_over_2pi_THz = 1300.0
//! young_modulus_Pa = 1e10
//! mode_volume_um3 = 2.5e-4
//! mode_freq_GHz = 7.02
//! strain = [0.04, 0.08, 0.12]     # or strain_range = "0.04:0.12:9"
//! Q = 1e8
//! temperature_K = 0.1
//! ```

use molmech_core::model::{bose_occupation, debye_waller, decay_from_quality, estimate_g0, MaterialParams};
use molmech_core::records::{Cell, Table};
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::range::parse_range;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialFile {
    #[serde(rename = "deformation_potential_over_2pi_THz")]
    pub deformation_potential_over_2pi_thz: f64,
    #[serde(rename = "young_modulus_Pa")]
    pub young_modulus_pa: f64,
    pub mode_volume_um3: f64,
    #[serde(rename = "mode_freq_GHz")]
    pub mode_freq_ghz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strain: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strain_range: Option<String>,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "temperature_K", default)]
    pub temperature_k: f64,
}

/// A material with its strain values expanded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Material {
    pub file: MaterialFile,
    pub strains: Vec<f64>,
}

pub fn parse_material_str(src: &str, origin: &str) -> Result<Material, ConfigError> {
    let err = |line: Option<usize>, message: String| ConfigError {
        origin: origin.to_string(),
        line,
        message,
    };
    let file: MaterialFile = toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1);
        err(line, e.message().trim().to_string())
    })?;
    let strains = match (&file.strain, &file.strain_range) {
        (Some(_), Some(_)) => return Err(err(None, "`strain` and `strain_range` both given; use one".into())),
        (Some(v), None) => v.clone(),
        (None, Some(r)) => parse_range(r).map_err(|e| err(None, format!("strain_range: {e}")))?,
        (None, None) => return Err(err(None, "material needs `strain` or `strain_range`".into())),
    };
    if strains.is_empty() {
        return Err(err(None, "no strain values".into()));
    }
    let m = Material { file, strains };
    for s in &m.strains {
        estimate_g0(&m.params(*s)).map_err(|e| err(None, e.to_string()))?;
    }
    decay_from_quality(m.file.mode_freq_ghz * 1e9, m.file.q).map_err(|e| err(None, e.to_string()))?;
    bose_occupation(m.file.mode_freq_ghz * 1e9, m.file.temperature_k).map_err(|e| err(None, e.to_string()))?;
    Ok(m)
}

pub fn parse_material(path: &std::path::Path) -> Result<Material, ConfigError> {
    let origin = path.display().to_string();
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
        origin: origin.clone(),
        line: None,
        message: format!("cannot read: {e}"),
    })?;
    parse_material_str(&src, &origin)
}

impl Material {
    pub fn params(&self, strain: f64) -> MaterialParams {
        MaterialParams {
            deformation_potential_over_2pi_hbar: self.file.deformation_potential_over_2pi_thz * 1e12,
            strain,
            young_modulus: self.file.young_modulus_pa,
            mode_volume: self.file.mode_volume_um3 * 1e-18,
            mode_freq_over_2pi: self.file.mode_freq_ghz * 1e9,
        }
    }

    /// One row per strain value.
    pub fn estimate_table(&self) -> molmech_core::Result<Table> {
        let f = self.file.mode_freq_ghz * 1e9;
        let decay = decay_from_quality(f, self.file.q)?;
        let nth = bose_occupation(f, self.file.temperature_k)?;
        let mut t = Table::new([
            "strain",
            "g0_MHz",
            "debye_waller",
            "debye_waller_exponent",
            "kappa_per_s",
            "lifetime_ms",
            "n_thermal",
        ]);
        for &s in &self.strains {
            let g0 = estimate_g0(&self.params(s))?;
            t.push(vec![
                Cell::Num(s),
                Cell::Num(g0 / 1e6),
                Cell::Num(debye_waller(g0, f)?),
                Cell::Num((g0 / f).powi(2)),
                Cell::Num(decay.kappa),
                Cell::Num(decay.lifetime * 1e3),
                Cell::Num(nth),
            ])?;
        }
        Ok(t)
    }
}
