//! Scenario files. JSON with a `schema_version` field; unknown keys are
//! rejected and every section falls back to the published parameters.

use std::path::Path;

use anyhow::{bail, Context};
use qrcell_core::entangle::BellLabel;
use qrcell_core::noise::NoiseModelParams;
use qrcell_core::protocol::{EfficiencyBudget, HeraldFilters, ProtocolParams, ReadoutImperfections};
use qrcell_core::rates::{ChannelModel, RateScenario};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub schema_version: u32,
    /// Parameters of the sequence Monte Carlo.
    pub protocol: ProtocolParams,
    /// Derive the herald filters from `budget` instead of `protocol.filters`.
    pub postselect_from_budget: bool,
    pub budget: Budgets,
    pub readout: ReadoutImperfections,
    /// Atom-photon model; `n_max` is replaced by the scanned values.
    pub noise: NoiseModelParams,
    /// Photon-pair model per projection outcome.
    pub outcomes: Vec<OutcomeFit>,
    pub scan: ScanConfig,
    pub thresholds: ThresholdConfig,
    pub tomography: TomographyConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            protocol: ProtocolParams::default(),
            postselect_from_budget: false,
            budget: Budgets::default(),
            readout: ReadoutImperfections::default(),
            noise: NoiseModelParams::default(),
            outcomes: BellLabel::ALL.iter().map(|&l| OutcomeFit::published(l)).collect(),
            scan: ScanConfig::default(),
            thresholds: ThresholdConfig::default(),
            tomography: TomographyConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub atom1: EfficiencyBudget,
    pub atom2: EfficiencyBudget,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            atom1: EfficiencyBudget::measured_atom1(),
            atom2: EfficiencyBudget::measured_atom2(),
        }
    }
}

/// Gate fidelity and false-addressing probability fitted for one outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeFit {
    pub label: BellLabel,
    pub f_ms: f64,
    pub p_sia_false: f64,
}

impl OutcomeFit {
    pub fn published(label: BellLabel) -> Self {
        let p = NoiseModelParams::pp_fit(label);
        Self {
            label,
            f_ms: p.f_ms,
            p_sia_false: p.p_sia_false,
        }
    }

    /// `base` with this outcome's fitted values.
    pub fn params(&self, base: &NoiseModelParams) -> NoiseModelParams {
        NoiseModelParams {
            f_ms: self.f_ms,
            p_sia_false: self.p_sia_false,
            ..*base
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub n_max: Vec<u64>,
    pub transmissions: Vec<f64>,
    pub channel: ChannelModel,
    /// Monte Carlo repetitions per scan point and for `simulate`.
    pub reps: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            n_max: vec![1, 3, 10, 30, 100],
            transmissions: vec![1.0, 0.78, 0.48, 0.24],
            channel: ChannelModel::default(),
            reps: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedScenario {
    pub name: String,
    pub scenario: RateScenario,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    /// Fidelity below which a pair no longer counts.
    pub fidelity_target: f64,
    /// `p` used for the sensitivity rows.
    pub alternative_p: f64,
    pub scenarios: Vec<NamedScenario>,
    /// `n_max` values of the `rates` table.
    pub rate_n_max: Vec<u64>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            fidelity_target: 0.5,
            alternative_p: 0.00114,
            scenarios: vec![
                NamedScenario {
                    name: "reference".into(),
                    scenario: RateScenario::reference(),
                },
                NamedScenario {
                    name: "na-0.7".into(),
                    scenario: RateScenario::high_na(),
                },
            ],
            rate_n_max: vec![1, 10, 100, 200, 500, 1000, 2000, 5000],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographyConfig {
    pub n_bootstrap: usize,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        Self { n_bootstrap: 200 }
    }
}

impl Config {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let config: Config = serde_json::from_str(text).context("invalid scenario file")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schema_version == 0 {
            bail!("schema_version is missing (expected {SCHEMA_VERSION})");
        }
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        self.effective_protocol().validate()?;
        self.budget.atom1.validate()?;
        self.budget.atom2.validate()?;
        self.noise.validate()?;
        for o in &self.outcomes {
            o.params(&self.noise).validate()?;
        }
        self.scan.channel.validate()?;
        if self.scan.n_max.is_empty() || self.scan.n_max.contains(&0) {
            bail!("scan.n_max must be a non-empty list of positive integers");
        }
        for &t in &self.scan.transmissions {
            if !(t > 0.0 && t <= 1.0) {
                bail!("transmission {t} must lie in (0, 1]");
            }
        }
        if self.scan.reps == 0 {
            bail!("scan.reps must be at least 1");
        }
        for s in &self.thresholds.scenarios {
            s.scenario
                .validate()
                .with_context(|| format!("scenario `{}`", s.name))?;
        }
        Ok(())
    }

    /// Protocol parameters with the configured herald filters.
    pub fn effective_protocol(&self) -> ProtocolParams {
        let mut p = self.protocol;
        if self.postselect_from_budget {
            p.filters = HeraldFilters::from_budget(&self.budget.atom1, &self.budget.atom2);
        }
        p
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.protocol.rng_seed = seed;
        self
    }
}
