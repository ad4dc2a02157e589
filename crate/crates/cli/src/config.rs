//! Experiment configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mlmc_core::{
    make_model, BarrierKind, GreekMethod, GreekSampler, LevelSampler, ModelSpec, PayoffFamily, PayoffSpec,
    PricingSampler, Quantity, SchemeMode, TerminalFunction,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "one")]
    pub horizon: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    European,
    Asian,
    Lookback,
    Barrier,
    Digital,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum BarrierName {
    #[default]
    DownOut,
    UpOut,
    DownIn,
    UpIn,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum TerminalName {
    #[default]
    Call,
    Put,
    Identity,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PayoffSection {
    pub family: FamilyName,
    #[serde(default)]
    pub terminal: TerminalName,
    #[serde(default)]
    pub strike: f64,
    #[serde(default)]
    pub barrier: f64,
    #[serde(default)]
    pub barrier_kind: BarrierName,
    #[serde(default)]
    pub component: usize,
    #[serde(default = "one")]
    pub discount: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Euler,
    Milstein,
    Antithetic,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub mode: ModeName,
    /// Thinning of state-dependent jump rates uses the change of measure.
    #[serde(default = "yes")]
    pub measure_change: bool,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    Value,
    Delta,
    Vega,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    /// Plain pricing samplers for values; conditional expectation for sensitivities.
    #[default]
    Smoothed,
    Split,
    Vibrato,
}

#[derive(Clone, Debug, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default)]
    pub kind: EstimatorKind,
    #[serde(default)]
    pub method: MethodName,
    #[serde(default = "ten")]
    pub splits: usize,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub eps: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "two")]
    pub min_level: u32,
    #[serde(default = "twenty")]
    pub max_level: u32,
    #[serde(default = "hundred")]
    pub initial_samples: u64,
    #[serde(default = "half")]
    pub variance_fraction: f64,
    pub alpha: Option<f64>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    #[serde(default = "seven")]
    pub max_level: u32,
    #[serde(default = "rate_samples")]
    pub samples: u64,
    /// Lowest level used in the rate fit.
    #[serde(default = "two")]
    pub fit_from: u32,
}

impl Default for RatesSection {
    fn default() -> Self {
        Self { max_level: 7, samples: rate_samples(), fit_from: 2 }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    /// Constant `c` of the weak error bound `c T 2^-L` for the standard estimator.
    #[serde(default = "one")]
    pub weak_constant: f64,
    #[serde(default = "thousand")]
    pub pilot_samples: u64,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { weak_constant: 1.0, pilot_samples: 100 }
    }
}

/// A complete experiment description.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub payoff: PayoffSection,
    pub scheme: SchemeSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    pub run: RunSection,
    #[serde(default)]
    pub rates: RatesSection,
    #[serde(default)]
    pub compare: CompareSection,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn two() -> u32 {
    2
}
fn seven() -> u32 {
    7
}
fn twenty() -> u32 {
    20
}
fn ten() -> usize {
    10
}
fn hundred() -> u64 {
    100
}
fn thousand() -> u64 {
    1000
}
fn rate_samples() -> u64 {
    200_000
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every setting by building the samplers, before anything is sampled.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.run.eps.is_empty() {
            return bad("run.eps must list at least one tolerance".into());
        }
        if let Some(e) = self.run.eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return bad(format!("run.eps entries must be positive, got {e}"));
        }
        if !(self.run.variance_fraction > 0.0 && self.run.variance_fraction < 1.0) {
            return bad(format!("run.variance_fraction must lie in (0, 1), got {}", self.run.variance_fraction));
        }
        if self.run.initial_samples < 2 {
            return bad("run.initial_samples must be at least 2".into());
        }
        if self.run.min_level > self.run.max_level || self.run.max_level > 30 {
            return bad("need run.min_level <= run.max_level <= 30".into());
        }
        if self.rates.samples < 2 || self.rates.max_level > 30 || self.rates.fit_from + 1 > self.rates.max_level {
            return bad("rates needs samples >= 2, max_level <= 30 and at least two fitted levels".into());
        }
        if self.compare.weak_constant.is_nan() || self.compare.weak_constant <= 0.0 || self.compare.pilot_samples < 2 {
            return bad("compare needs weak_constant > 0 and pilot_samples >= 2".into());
        }
        if self.estimator.kind == EstimatorKind::Value && self.estimator.method != MethodName::Smoothed {
            self.greek_sampler(Quantity::Value)?;
        } else if self.estimator.kind != EstimatorKind::Value {
            self.greek_sampler(self.quantity())?;
        }
        self.pricing_sampler()?;
        Ok(())
    }

    pub fn model(&self) -> Result<ModelSpec, CliError> {
        make_model(&self.model.name, &self.model.params).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn payoff(&self) -> PayoffSpec {
        let p = &self.payoff;
        let family = match p.family {
            FamilyName::European => PayoffFamily::European,
            FamilyName::Asian => PayoffFamily::Asian,
            FamilyName::Lookback => PayoffFamily::Lookback,
            FamilyName::Digital => PayoffFamily::Digital,
            FamilyName::Barrier => PayoffFamily::Barrier(match p.barrier_kind {
                BarrierName::DownOut => BarrierKind::DownOut,
                BarrierName::UpOut => BarrierKind::UpOut,
                BarrierName::DownIn => BarrierKind::DownIn,
                BarrierName::UpIn => BarrierKind::UpIn,
            }),
        };
        let mode = match self.scheme.mode {
            ModeName::Euler => SchemeMode::Euler,
            ModeName::Milstein => SchemeMode::MilsteinSmoothed,
            ModeName::Antithetic => SchemeMode::Antithetic,
        };
        let terminal = match p.terminal {
            TerminalName::Call => TerminalFunction::Call,
            TerminalName::Put => TerminalFunction::Put,
            TerminalName::Identity => TerminalFunction::Identity,
        };
        PayoffSpec::new(family, mode)
            .with_strike(p.strike)
            .with_barrier(p.barrier)
            .with_terminal(terminal)
            .with_component(p.component)
            .with_discount(p.discount)
    }

    pub fn quantity(&self) -> Quantity {
        match self.estimator.kind {
            EstimatorKind::Value => Quantity::Value,
            EstimatorKind::Delta => Quantity::DELTA,
            EstimatorKind::Vega => Quantity::VEGA,
        }
    }

    fn method(&self) -> GreekMethod {
        match self.estimator.method {
            MethodName::Smoothed => GreekMethod::Smoothed,
            MethodName::Split => GreekMethod::SplitPathwise(self.estimator.splits),
            MethodName::Vibrato => GreekMethod::Vibrato(self.estimator.splits),
        }
    }

    pub fn pricing_sampler(&self) -> Result<PricingSampler, CliError> {
        PricingSampler::new(self.model()?, self.payoff(), self.model.horizon)
            .map(|s| s.with_measure_change(self.scheme.measure_change))
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn greek_sampler(&self, quantity: Quantity) -> Result<GreekSampler, CliError> {
        GreekSampler::new(self.model()?, self.payoff(), self.model.horizon, self.method(), quantity)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// The sampler for the configured estimator.
    pub fn sampler(&self) -> Result<Box<dyn LevelSampler + Send>, CliError> {
        Ok(match (self.estimator.kind, self.estimator.method) {
            (EstimatorKind::Value, MethodName::Smoothed) => Box::new(self.pricing_sampler()?),
            _ => Box::new(self.greek_sampler(self.quantity())?),
        })
    }
}
