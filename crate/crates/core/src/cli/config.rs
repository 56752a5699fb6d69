use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::DesignSpace;
use crate::emulator::FitSettings;
use crate::error::{Error, Result};
use crate::matcher::{Criterion, Retention, WaveSettings};
use crate::prior::HyperPriors;
use crate::simulator::{BundledConfig, BundledSimulator, ExternalSimulator, Simulator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriteriaConfig {
    pub p_target: f64,
    pub energy_target: f64,
    pub overheat_extra_variance: f64,
    pub energy_extra_variance: f64,
}

impl Default for CriteriaConfig {
    fn default() -> Self {
        CriteriaConfig {
            p_target: 0.01,
            energy_target: 15.0,
            overheat_extra_variance: 0.0,
            energy_extra_variance: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveConfig {
    pub points_per_wave: usize,
    pub replicates: usize,
    pub max_waves: usize,
    pub retain: Retention,
    pub min_active_fraction: f64,
}

impl Default for WaveConfig {
    fn default() -> Self {
        WaveConfig {
            points_per_wave: 250,
            replicates: 2,
            max_waves: 3,
            retain: Retention::ActiveOrRuledIn,
            min_active_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub grid_resolution: usize,
    pub histogram_bins: usize,
    /// Variable maximised by the final selection.
    pub preference: String,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            grid_resolution: 20,
            histogram_bins: 20,
            preference: "x4".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub k_sd: f64,
    pub nominal: f64,
    pub reference_samples: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            k_sd: 2.0,
            nominal: crate::diagnostics::NOMINAL_COVERAGE,
            reference_samples: 1000,
        }
    }
}

/// Everything a run depends on. Serialized as TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub candidates: usize,
    /// `bundled` or `external:<dir>`.
    pub simulator: String,
    pub criteria: CriteriaConfig,
    pub waves: WaveConfig,
    pub report: ReportConfig,
    pub validation: ValidationConfig,
    pub space: DesignSpace,
    pub fit: FitSettings,
    pub priors: HyperPriors,
    pub bundled: BundledConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            candidates: 1_000_000,
            simulator: "bundled".into(),
            criteria: CriteriaConfig::default(),
            waves: WaveConfig::default(),
            report: ReportConfig::default(),
            validation: ValidationConfig::default(),
            space: DesignSpace::building_retrofit(),
            fit: FitSettings::default(),
            priors: HyperPriors::default(),
            bundled: BundledConfig::default(),
        }
    }
}

pub enum SimulatorChoice {
    Bundled,
    External(PathBuf),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.candidates == 0 || self.waves.points_per_wave == 0 || self.waves.replicates == 0 || self.waves.max_waves == 0
        {
            return bad("candidates, points_per_wave, replicates and max_waves must be positive".into());
        }
        let c = &self.criteria;
        if !(c.p_target > 0.0 && c.p_target < 1.0) {
            return bad(format!("p_target must lie in (0, 1), got {}", c.p_target));
        }
        if !c.energy_target.is_finite() {
            return bad("energy_target must be finite".into());
        }
        if !(c.overheat_extra_variance >= 0.0 && c.energy_extra_variance >= 0.0) {
            return bad("extra variances must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.waves.min_active_fraction) {
            return bad("min_active_fraction must lie in [0, 1]".into());
        }
        if self.report.grid_resolution == 0 || self.report.histogram_bins == 0 {
            return bad("grid_resolution and histogram_bins must be positive".into());
        }
        if self.space.index_of(&self.report.preference).is_none() {
            return bad(format!("preference `{}` is not a design variable", self.report.preference));
        }
        if self.validation.reference_samples == 0 || !(self.validation.k_sd > 0.0) {
            return bad("validation needs positive k_sd and reference_samples".into());
        }
        match self.simulator_choice()? {
            SimulatorChoice::Bundled if self.space != DesignSpace::building_retrofit() => {
                bad("the bundled simulator only supports the default building design space".into())
            }
            _ => Ok(()),
        }
    }

    pub fn simulator_choice(&self) -> Result<SimulatorChoice> {
        if self.simulator == "bundled" {
            Ok(SimulatorChoice::Bundled)
        } else if let Some(dir) = self.simulator.strip_prefix("external:") {
            if dir.is_empty() {
                return Err(Error::Config("external simulator needs a directory".into()));
            }
            Ok(SimulatorChoice::External(PathBuf::from(dir)))
        } else {
            Err(Error::Config(format!(
                "simulator must be `bundled` or `external:<dir>`, got `{}`",
                self.simulator
            )))
        }
    }

    pub fn build_simulator(&self) -> Result<Box<dyn Simulator>> {
        Ok(match self.simulator_choice()? {
            SimulatorChoice::Bundled => Box::new(BundledSimulator::new(self.bundled.clone())),
            SimulatorChoice::External(dir) => Box::new(ExternalSimulator::from_env_or(self.space.clone(), dir)),
        })
    }

    pub fn criteria(&self) -> Result<Vec<Criterion>> {
        let c = &self.criteria;
        Ok(vec![
            Criterion::overheating(c.p_target)?.with_extra_variance(c.overheat_extra_variance),
            Criterion::energy(c.energy_target)?.with_extra_variance(c.energy_extra_variance),
        ])
    }

    pub fn wave_settings(&self) -> WaveSettings {
        WaveSettings {
            points_per_wave: self.waves.points_per_wave,
            replicates: self.waves.replicates,
            retention: self.waves.retain,
            min_active_fraction: self.waves.min_active_fraction,
            priors: self.priors.clone(),
            fit: self.fit.clone(),
            seed: self.seed,
        }
    }

    /// Hash of everything that determines the results of each wave. The
    /// wave budget is excluded so a finished run can be extended.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.waves.max_waves = 0;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }
}
