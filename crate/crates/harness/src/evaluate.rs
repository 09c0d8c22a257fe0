use anyhow::{bail, ensure, Result};
use etcomm::comm::CommSchedule;
use etcomm::envs::{episode_performance, EnvConfig, EpisodeTraceRecord, TransportEnv};
use etcomm::maddpg::{episode_seed, ActionSpec, AgentLearner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub index: usize,
    pub reset_seed: u64,
    pub final_distance: f64,
    /// Transport performance `E`.
    pub performance: f64,
    /// Communication cost `C`.
    pub comm_cost: u64,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scenario: String,
    pub schedule: String,
    pub rollouts: usize,
    /// Success radius [m]; absent means every rollout succeeds.
    pub threshold: Option<f64>,
    pub success_rate: f64,
    pub mean_performance: f64,
    pub mean_comm_cost: f64,
    pub records: Vec<RolloutRecord>,
}

struct Summary {
    success_rate: f64,
    mean_performance: f64,
    mean_comm_cost: f64,
}

fn summarise(records: &[RolloutRecord]) -> Summary {
    let n = records.len().max(1) as f64;
    Summary {
        success_rate: records.iter().filter(|r| r.success).count() as f64 / n,
        mean_performance: records.iter().map(|r| r.performance).sum::<f64>() / n,
        mean_comm_cost: records.iter().map(|r| r.comm_cost as f64).sum::<f64>() / n,
    }
}

impl EvaluationReport {
    /// Recomputes every aggregate from the embedded records.
    pub fn check_consistency(&self) -> Result<()> {
        ensure!(
            self.records.len() == self.rollouts,
            "{} records for {} declared rollouts",
            self.records.len(),
            self.rollouts
        );
        ensure!((0.0..=1.0).contains(&self.success_rate), "success rate out of range");
        for r in &self.records {
            let expect = self.threshold.is_none_or(|t| r.final_distance < t);
            ensure!(r.success == expect, "rollout {} success flag disagrees with its distance", r.index);
        }
        let s = summarise(&self.records);
        ensure!(s.success_rate == self.success_rate, "success rate is not recomputable");
        ensure!(s.mean_performance == self.mean_performance, "mean E is not recomputable");
        ensure!(s.mean_comm_cost == self.mean_comm_cost, "mean C is not recomputable");
        Ok(())
    }
}

/// Checks that the learners were trained for this environment.
pub fn check_compatible(learners: &[AgentLearner], env: &EnvConfig) -> Result<()> {
    let spec = ActionSpec {
        n_agents: env.n_agents,
        n_categories: env.n_categories(),
        obs_dim: env.observation_dim(),
        control_limits: env.control_limits,
    };
    if learners.len() != env.n_agents {
        bail!(
            "dimension mismatch: checkpoint has {} agents, scenario has {}",
            learners.len(),
            env.n_agents
        );
    }
    for l in learners {
        if l.spec != spec {
            bail!(
                "dimension mismatch: agent {} was trained for {:?}, scenario needs {:?}",
                l.index,
                l.spec,
                spec
            );
        }
    }
    Ok(())
}

/// One noise-free episode. Returns the per-step trace when `keep_trace` is set.
pub fn rollout(
    env: &mut TransportEnv,
    learners: &[AgentLearner],
    schedule: &CommSchedule,
    reset_seed: u64,
    keep_trace: bool,
) -> Result<Vec<EpisodeTraceRecord>> {
    // Unused with zero noise, but `act` takes a generator.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut obs = env.reset(reset_seed).observations;
    let mut trace = Vec::new();
    if keep_trace {
        trace.push(env.trace_record());
    }
    loop {
        let actions = learners
            .iter()
            .zip(&obs)
            .map(|(l, o)| Ok(l.spec.to_agent_action(&l.act(o, 0.0, &mut rng)?)))
            .collect::<Result<Vec<_>>>()?;
        let step = env.step(&actions, schedule)?;
        if keep_trace {
            trace.push(env.trace_record());
        }
        obs = step.observations;
        if step.done {
            return Ok(trace);
        }
    }
}

/// Runs `rollouts` noise-free episodes; success iff the final payload-goal
/// distance is below `threshold`.
pub fn evaluate(
    learners: &[AgentLearner],
    env_config: &EnvConfig,
    schedule: CommSchedule,
    rollouts: usize,
    threshold: Option<f64>,
    seed: u64,
) -> Result<EvaluationReport> {
    check_compatible(learners, env_config)?;
    schedule.validate()?;
    if let Some(t) = threshold {
        ensure!(t >= 0.0 && !t.is_nan(), "threshold must be non-negative");
    }
    let mut env = TransportEnv::new(env_config.clone())?;
    let mut records = Vec::with_capacity(rollouts);
    for index in 0..rollouts {
        let reset_seed = episode_seed(seed, index as u64);
        rollout(&mut env, learners, &schedule, reset_seed, false)?;
        let final_distance = env.distance_to_goal();
        records.push(RolloutRecord {
            index,
            reset_seed,
            final_distance,
            performance: episode_performance(env.distances()),
            comm_cost: env.ledger().total,
            success: threshold.is_none_or(|t| final_distance < t),
        });
    }
    let s = summarise(&records);
    Ok(EvaluationReport {
        scenario: env_config.scenario.to_string(),
        schedule: schedule.label(),
        rollouts,
        threshold,
        success_rate: s.success_rate,
        mean_performance: s.mean_performance,
        mean_comm_cost: s.mean_comm_cost,
        records,
    })
}

/// Freshly initialised learners with every actor parameter set to zero.
pub fn zero_policy(env_config: &EnvConfig, hidden: &[usize]) -> Result<Vec<AgentLearner>> {
    use etcomm::maddpg::NetworkShape;
    use etcomm::neural::AdamConfig;
    let spec = ActionSpec {
        n_agents: env_config.n_agents,
        n_categories: env_config.n_categories(),
        obs_dim: env_config.observation_dim(),
        control_limits: env_config.control_limits,
    };
    let shape = NetworkShape {
        actor_hidden: hidden.to_vec(),
        critic_hidden: hidden.to_vec(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..spec.n_agents)
        .map(|i| {
            let mut l = AgentLearner::new(i, spec, &shape, AdamConfig::default(), AdamConfig::default(), &mut rng)?;
            for s in l.actor.params_mut().slices_mut() {
                s.fill(0.0);
            }
            Ok(l)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_threshold_always_succeeds() {
        let env = EnvConfig::rigid_transport();
        let learners = zero_policy(&env, &[8]).unwrap();
        let r = evaluate(&learners, &env, CommSchedule::EventTriggered, 5, None, 0).unwrap();
        assert_eq!(r.success_rate, 1.0);
        r.check_consistency().unwrap();
    }

    #[test]
    fn zero_policy_without_communication_costs_nothing() {
        let env = EnvConfig::pushing_failure();
        let learners = zero_policy(&env, &[8]).unwrap();
        let r = evaluate(&learners, &env, CommSchedule::None, 3, Some(0.2), 1).unwrap();
        assert_eq!(r.mean_comm_cost, 0.0);
        assert!(r.records.iter().all(|x| x.comm_cost == 0));
        // A still payload 1 m from the goal never succeeds.
        assert_eq!(r.success_rate, 0.0);
        r.check_consistency().unwrap();
    }

    #[test]
    fn mismatched_checkpoint_is_rejected() {
        let learners = zero_policy(&EnvConfig::rigid_transport(), &[8]).unwrap();
        let err = evaluate(
            &learners,
            &EnvConfig::pushing_failure(),
            CommSchedule::None,
            1,
            None,
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"));
    }

    #[test]
    fn tampered_report_fails_consistency() {
        let env = EnvConfig::rigid_transport();
        let learners = zero_policy(&env, &[8]).unwrap();
        let mut r = evaluate(&learners, &env, CommSchedule::FixedRate { period: 1 }, 3, Some(2.0), 0).unwrap();
        r.check_consistency().unwrap();
        r.mean_comm_cost += 1.0;
        assert!(r.check_consistency().is_err());
        r.mean_comm_cost -= 1.0;
        r.records.pop();
        assert!(r.check_consistency().is_err());
    }
}
