use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use etcomm::comm::CommSchedule;
use etcomm::envs::{EnvConfig, Scenario};
use etcomm::maddpg::TrainConfig;
use serde::{Deserialize, Serialize};

/// One training campaign: a scenario, its parameters, a schedule and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Number of independent trainings; must equal `seeds.len()`.
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Episodes between checkpoints.
    pub checkpoint_every: usize,
    pub schedule: CommSchedule,
    pub env: EnvConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            scenario,
            runs: 3,
            seeds: vec![0, 1, 2],
            output_dir: PathBuf::from(format!("runs/{scenario}")),
            checkpoint_every: 1000,
            schedule: CommSchedule::EventTriggered,
            env: EnvConfig::for_scenario(scenario),
            train: TrainConfig::for_scenario(scenario),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.env.scenario != self.scenario {
            bail!(
                "scenario is {} but the environment block describes {}",
                self.scenario,
                self.env.scenario
            );
        }
        if self.runs != self.seeds.len() {
            bail!("runs = {} but {} seeds are listed", self.runs, self.seeds.len());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            bail!("seeds must be distinct");
        }
        if self.checkpoint_every == 0 {
            bail!("checkpoint_every must be positive");
        }
        self.env.validate()?;
        self.train.validate()?;
        self.schedule.validate()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Campaign directory for this config's schedule inside a sweep root.
    pub fn with_schedule(&self, schedule: CommSchedule, root: &Path) -> Self {
        Self {
            schedule,
            output_dir: root.join(schedule.label()),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT_FILES: [(&str, Scenario); 2] = [
        (
            include_str!("../configs/rigid_transport.toml"),
            Scenario::RigidTransport,
        ),
        (
            include_str!("../configs/pushing_failure.toml"),
            Scenario::PushingFailure,
        ),
    ];

    #[test]
    fn default_files_match_built_in_defaults() {
        for (text, scenario) in DEFAULT_FILES {
            let parsed = ExperimentConfig::from_toml(text).unwrap();
            assert_eq!(parsed, ExperimentConfig::for_scenario(scenario));
        }
    }

    #[test]
    fn default_files_name_every_table_row() {
        let common = [
            "Control period [s]",
            "Time step size of dynamics [s]",
            "Number of steps per episode",
            "Number of episode",
            "Batch size",
            "Replay buffer",
            "Translational friction coefficient (payload vs floor)",
            "Rotational friction coefficient (payload vs floor)",
        ];
        let sim1_only = [
            "Number of hidden layers (critic)",
            "Number of hidden layers (actor)",
            "Number of units per layer",
            "Activation function of hidden layers",
            "Activation function of output layers (critic)",
            "Activation function of output layers (actor)",
            "Discount factor",
        ];
        let sim2_only = [
            "Spring constant (payload vs agent)",
            "Spring constant (agent vs agent)",
        ];
        let (rigid, pushing) = (DEFAULT_FILES[0].0, DEFAULT_FILES[1].0);
        for row in common.iter().chain(&sim1_only) {
            assert!(rigid.contains(row), "rigid_transport.toml lacks {row}");
        }
        for row in common.iter().chain(&sim2_only) {
            assert!(pushing.contains(row), "pushing_failure.toml lacks {row}");
        }
    }

    #[test]
    fn snapshot_round_trips() {
        for scenario in [Scenario::RigidTransport, Scenario::PushingFailure] {
            let cfg = ExperimentConfig::for_scenario(scenario);
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        let mut cfg = ExperimentConfig::for_scenario(Scenario::RigidTransport);
        cfg.env = EnvConfig::pushing_failure();
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::for_scenario(Scenario::RigidTransport);
        cfg.runs = 2;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::for_scenario(Scenario::RigidTransport);
        cfg.seeds = vec![1, 1, 2];
        assert!(cfg.validate().is_err());

        let text = ExperimentConfig::for_scenario(Scenario::RigidTransport)
            .to_toml()
            .unwrap()
            .replace("runs = 3", "runs = 3\nbogus = 1");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}

