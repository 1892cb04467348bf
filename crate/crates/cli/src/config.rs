//! Plain-text configuration: one TOML table per spin system, bath
//! sub-ensemble and resonator. Unknown keys are rejected; built-in presets
//! cover the tabulated tensor sets without any file.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use spincoh::consts::PhysicalConstants;
use spincoh::decomodels::{ResonatorFilter, SubEnsemble};
use spincoh::presets;
use spincoh::spinham::SpinSystem;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub system: BTreeMap<String, SystemBlock>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ensemble: BTreeMap<String, EnsembleBlock>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub resonator: BTreeMap<String, ResonatorBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub electron_spin: f64,
    pub nuclear_spin: f64,
    /// Three rows of the g-matrix in the (D1, D2, b) frame.
    pub g_rows: [[f64; 3]; 3],
    /// Three rows of the hyperfine matrix in MHz, same frame.
    pub a_rows_mhz: [[f64; 3]; 3],
    #[serde(default)]
    pub g_n: f64,
    #[serde(default)]
    pub include_nuclear_zeeman: bool,
    /// Either a ppm figure (of all Y sites) or an absolute density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration_ppm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration_per_m3: Option<f64>,
    #[serde(default = "one")]
    pub abundance: f64,
    pub site: u8,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_ppm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_per_m3: Option<f64>,
    pub linewidth_hz: f64,
    pub matrix_element: f64,
    pub frequency_hz: f64,
    pub g_eff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorBlock {
    pub f0_hz: f64,
    /// Loaded quality factor; κ₀ = f0/2Q (half width).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa0_hz: Option<f64>,
    pub pulse_length_s: f64,
    pub line_fwhm_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df_db_hz_per_t: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_y89_hz_per_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_site_density_per_m3: Option<f64>,
}

impl SystemConfig {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(text).context("config syntax error")?;
        if cfg.system.is_empty() && cfg.ensemble.is_empty() && cfg.resonator.is_empty() {
            bail!("config defines no system, ensemble or resonator blocks");
        }
        // Validate every block by materialising it.
        for (name, block) in &cfg.system {
            block
                .to_spin_system(name)
                .with_context(|| format!("system.{name}"))?;
        }
        for (name, block) in &cfg.ensemble {
            block
                .to_subensemble(name)
                .with_context(|| format!("ensemble.{name}"))?;
        }
        for (name, block) in &cfg.resonator {
            block
                .to_filter()
                .with_context(|| format!("resonator.{name}"))?;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Named system from the config, falling back to the built-in presets.
    pub fn spin_system(&self, name: &str) -> Result<SpinSystem> {
        if let Some(block) = self.system.get(name) {
            return block.to_spin_system(name);
        }
        presets::by_name(name).ok_or_else(|| {
            anyhow::anyhow!(
                "unknown system '{name}'; config defines [{}], presets are {:?}",
                self.system.keys().cloned().collect::<Vec<_>>().join(", "),
                presets::PRESET_NAMES
            )
        })
    }

    pub fn subensembles(&self) -> Result<Vec<SubEnsemble>> {
        self.ensemble
            .iter()
            .map(|(name, block)| block.to_subensemble(name))
            .collect()
    }

    pub fn physical_constants(&self) -> PhysicalConstants {
        let mut c = PhysicalConstants::default();
        if let Some(overrides) = &self.constants {
            if let Some(g) = overrides.gamma_y89_hz_per_t {
                c.gamma_y89 = g;
            }
        }
        c
    }
}

impl SystemBlock {
    pub fn to_spin_system(&self, label: &str) -> Result<SpinSystem> {
        let concentration = match (self.concentration_per_m3, self.concentration_ppm) {
            (Some(n), None) => n,
            (None, Some(ppm)) => presets::ppm_to_per_m3(ppm),
            (None, None) => 0.0,
            (Some(_), Some(_)) => {
                bail!("specify concentration_per_m3 or concentration_ppm, not both")
            }
        };
        let sys = SpinSystem {
            label: label.to_string(),
            electron_spin: self.electron_spin,
            nuclear_spin: self.nuclear_spin,
            g_tensor: Matrix3::from_fn(|i, j| self.g_rows[i][j]),
            a_tensor_mhz: Matrix3::from_fn(|i, j| self.a_rows_mhz[i][j]),
            g_n: self.g_n,
            include_nuclear_zeeman: self.include_nuclear_zeeman,
            concentration_per_m3: concentration,
            abundance: self.abundance,
            site: self.site,
        };
        sys.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(sys)
    }
}

impl EnsembleBlock {
    pub fn to_subensemble(&self, label: &str) -> Result<SubEnsemble> {
        let density = match (self.density_per_m3, self.density_ppm) {
            (Some(n), None) => n,
            (None, Some(ppm)) => presets::ppm_to_per_m3(ppm),
            (None, None) => bail!("ensemble needs density_per_m3 or density_ppm"),
            (Some(_), Some(_)) => bail!("specify density_per_m3 or density_ppm, not both"),
        };
        let e = SubEnsemble {
            label: label.to_string(),
            density_per_m3: density,
            linewidth_hz: self.linewidth_hz,
            matrix_element: self.matrix_element,
            frequency_hz: self.frequency_hz,
            g_eff: self.g_eff,
        };
        e.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(e)
    }
}

impl ResonatorBlock {
    pub fn to_filter(&self) -> Result<ResonatorFilter> {
        let filter = ResonatorFilter {
            f0_hz: self.f0_hz,
            pulse_length_s: self.pulse_length_s,
            line_fwhm_hz: self.line_fwhm_hz,
            df_db_hz_per_t: self.df_db_hz_per_t.unwrap_or(0.0),
        };
        filter.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(filter)
    }

    pub fn kappa0_hz(&self) -> Result<f64> {
        match (self.kappa0_hz, self.q) {
            (Some(k), _) => Ok(k),
            (None, Some(q)) => Ok(self.f0_hz / (2.0 * q)),
            (None, None) => bail!("resonator needs kappa0_hz or q"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[system.custom]
electron_spin = 0.5
nuclear_spin = 0.5
g_rows = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]
a_rows_mhz = [[10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [0.0, 0.0, 10.0]]
site = 1
concentration_ppm = 5.0
abundance = 1.0

[ensemble.bath]
density_ppm = 17.5
linewidth_hz = 8.7e6
matrix_element = 1.0
frequency_hz = 5.04e9
g_eff = 0.4

[resonator.main]
f0_hz = 5.04e9
q = 31000.0
pulse_length_s = 15e-6
line_fwhm_hz = 8.7e6
"#;

    #[test]
    fn sample_parses_and_round_trips() {
        let cfg = SystemConfig::parse_str(SAMPLE).unwrap();
        let text = cfg.to_toml().unwrap();
        let again = SystemConfig::parse_str(&text).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn empty_config_is_an_error() {
        assert!(SystemConfig::parse_str("").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = SAMPLE.replace("abundance = 1.0", "abundance = 1.0\nbogus_key = 3");
        assert!(SystemConfig::parse_str(&bad).is_err());
    }

    #[test]
    fn duplicate_blocks_are_rejected() {
        let dup = format!("{SAMPLE}\n[ensemble.bath]\nlinewidth_hz = 1.0\nmatrix_element = 1.0\nfrequency_hz = 1.0\ng_eff = 1.0\ndensity_ppm = 1.0\n");
        assert!(SystemConfig::parse_str(&dup).is_err());
    }

    #[test]
    fn presets_resolve_without_a_config() {
        let cfg = SystemConfig::default();
        let sys = cfg.spin_system("Yb171_site2").unwrap();
        assert_eq!(sys.a_tensor_mhz[(2, 2)], 4.729e3);
        assert!(cfg.spin_system("nonsense").is_err());
    }

    #[test]
    fn q_converts_to_half_width() {
        let cfg = SystemConfig::parse_str(SAMPLE).unwrap();
        let res = cfg.resonator.get("main").unwrap();
        let kappa = res.kappa0_hz().unwrap();
        assert!((kappa - 5.04e9 / 62000.0).abs() < 1e-6);
    }
}
