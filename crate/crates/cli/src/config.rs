//! TOML configuration. Unknown keys are rejected; missing keys take defaults.
//! Command-line flags override the file, which overrides the defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use manip_core::bench::{BenchConfig, Condition};
use manip_core::integration::ExecutionConfig;
use manip_core::planner::LlmConfig;
use manip_core::rl::{Algo, PpoConfig, SacConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Backend {
    RuleBased,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Parent directory of run directories.
    pub out: PathBuf,
    /// `oracle` or a directory of `<skill>.ckpt` files.
    pub skills: String,
    pub train: TrainSection,
    pub run: RunSection,
    pub planner: PlannerSection,
    pub execution: ExecutionConfig,
    pub bench: BenchSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs"),
            skills: "oracle".into(),
            train: TrainSection::default(),
            run: RunSection::default(),
            planner: PlannerSection::default(),
            execution: ExecutionConfig::default(),
            bench: BenchSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub algo: Algo,
    pub episodes: usize,
    /// Scenario of the whole-task (`flat`) policy.
    pub scenario: String,
    pub ppo: PpoConfig,
    pub sac: SacConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self { algo: Algo::Ppo, episodes: 100, scenario: "pick_place".into(), ppo: t.ppo, sac: t.sac }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { ppo: self.ppo.clone(), sac: self.sac.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Built-in scenario name or path to a scenario file.
    pub scenario: String,
    /// Keep the scenario's scripted perturbations.
    pub perturbations: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { scenario: "pick_place".into(), perturbations: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub backend: Backend,
    pub llm: LlmConfig,
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self { backend: Backend::RuleBased, llm: LlmConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub scenarios: Vec<String>,
    pub conditions: Vec<Condition>,
    pub n_episodes: usize,
    pub displacement: f64,
    pub perturb_at_fraction: f64,
    /// Training episodes of the whole-task policy used by `rl_only`; 0 keeps it untrained.
    pub flat_episodes: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        let b = BenchConfig::default();
        Self {
            scenarios: vec!["pick_place".into()],
            conditions: vec![Condition::RlOnly, Condition::HybridRuleBased],
            n_episodes: b.n_episodes,
            displacement: b.displacement,
            perturb_at_fraction: b.perturb_at_fraction,
            flat_episodes: 0,
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| UsageError(format!("invalid configuration: {e}")).into())
    }

    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml_str(&text).with_context(|| format!("in {}", p.display()))
            }
        }
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            n_episodes: self.bench.n_episodes,
            seed: self.seed,
            displacement: self.bench.displacement,
            perturb_at_fraction: self.bench.perturb_at_fraction,
            execution: self.execution.clone(),
        }
    }

    /// Checks every section before anything runs.
    pub fn validate(&self) -> anyhow::Result<()> {
        let bad = |m: String| -> anyhow::Error { UsageError(format!("invalid configuration: {m}")).into() };
        self.train.ppo.validate().map_err(|e| bad(e.to_string()))?;
        self.train.sac.validate().map_err(|e| bad(e.to_string()))?;
        self.execution.validate().map_err(bad)?;
        self.bench_config().validate().map_err(|e| bad(e.to_string()))?;
        if self.bench.scenarios.is_empty() {
            return Err(bad("bench.scenarios is empty".into()));
        }
        if self.bench.conditions.is_empty() {
            return Err(bad("bench.conditions is empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = Config::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(Config::from_toml_str(&text).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::from_toml_str("sede = 3").is_err());
        assert!(Config::from_toml_str("[train]\nalgo = \"ppo\"\nlr = 1").is_err());
        assert!(Config::from_toml_str("[planner.llm]\napi_key = \"sk\"").is_err());
    }

    #[test]
    fn types_checked() {
        assert!(Config::from_toml_str("seed = \"three\"").is_err());
        assert!(Config::from_toml_str("[bench]\nconditions = [\"rl_only\", \"magic\"]").is_err());
        let c = Config::from_toml_str("[train.ppo]\nclip_eps = -1.0").unwrap();
        assert!(c.validate().is_err());
    }
}
