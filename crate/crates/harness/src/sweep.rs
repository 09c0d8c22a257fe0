use std::path::Path;

use anyhow::Result;
use etcomm::comm::CommSchedule;
use etcomm::envs::EnvConfig;
use serde::{Deserialize, Serialize};

use crate::campaign::{self, run_dir, RunOptions, CHECKPOINT_DIR};
use crate::config::ExperimentConfig;
use crate::evaluate::evaluate;

/// Seconds between deliveries of the low-fixed-rate baseline.
pub const LOW_RATE_PERIOD_S: f64 = 5.0;

/// The compared topologies: event-triggered, high-fixed-rate (every control
/// step), low-fixed-rate and no communication.
pub fn baseline_schedules(env: &EnvConfig) -> Vec<(&'static str, CommSchedule)> {
    let low = (LOW_RATE_PERIOD_S / env.control_period).round().max(1.0) as u32;
    vec![
        ("event-triggered", CommSchedule::EventTriggered),
        ("high-fixed-rate", CommSchedule::FixedRate { period: 1 }),
        ("low-fixed-rate", CommSchedule::FixedRate { period: low }),
        ("no-communication", CommSchedule::None),
    ]
}

/// Per-episode `C` implied by a schedule alone, when it does not depend on the policy.
pub fn analytic_comm_cost(env: &EnvConfig, schedule: &CommSchedule) -> Option<u64> {
    let cells = (env.n_agents * env.n_agents * env.n_categories()) as u64;
    schedule
        .firings(env.steps_per_episode)
        .map(|f| cells * f as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub topology: String,
    pub schedule: String,
    pub runs_expected: usize,
    pub runs_evaluated: usize,
    /// Seeds whose runs are absent or unfinished.
    pub missing: Vec<u64>,
    pub success_rate: Option<f64>,
    pub mean_performance: Option<f64>,
    pub mean_comm_cost: Option<f64>,
    pub analytic_comm_cost: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub scenario: String,
    pub rollouts: usize,
    pub threshold: Option<f64>,
    pub rows: Vec<SweepRow>,
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub rollouts: usize,
    pub threshold: Option<f64>,
    pub eval_seed: u64,
    /// Train runs that are missing or unfinished before evaluating.
    pub train_missing: bool,
}

/// Evaluates every topology's runs under `root/<schedule label>/seed-*`.
/// Rows whose runs are missing carry no numbers.
pub fn sweep(cfg: &ExperimentConfig, root: &Path, options: &SweepOptions) -> Result<SweepTable> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (topology, schedule) in baseline_schedules(&cfg.env) {
        let sub = cfg.with_schedule(schedule, root);
        if options.train_missing {
            campaign::run_training_campaign(&sub, &RunOptions::default())?;
        }
        let mut missing = Vec::new();
        let mut reports = Vec::new();
        for &seed in &cfg.seeds {
            let dir = run_dir(&sub.output_dir, seed);
            let finished = campaign::read_manifest(&dir).is_ok_and(|m| m.complete);
            if !finished {
                missing.push(seed);
                continue;
            }
            let learners = campaign::load_learners(&dir.join(CHECKPOINT_DIR))?;
            reports.push(evaluate(
                &learners,
                &cfg.env,
                schedule,
                options.rollouts,
                options.threshold,
                options.eval_seed,
            )?);
        }
        let mean = |f: &dyn Fn(&crate::evaluate::EvaluationReport) -> f64| {
            (!reports.is_empty()).then(|| reports.iter().map(f).sum::<f64>() / reports.len() as f64)
        };
        rows.push(SweepRow {
            topology: topology.to_string(),
            schedule: schedule.label(),
            runs_expected: cfg.seeds.len(),
            runs_evaluated: reports.len(),
            missing,
            success_rate: mean(&|r| r.success_rate),
            mean_performance: mean(&|r| r.mean_performance),
            mean_comm_cost: mean(&|r| r.mean_comm_cost),
            analytic_comm_cost: analytic_comm_cost(&cfg.env, &schedule),
        });
    }
    Ok(SweepTable {
        scenario: cfg.scenario.to_string(),
        rollouts: options.rollouts,
        threshold: options.threshold,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::zero_policy;

    #[test]
    fn analytic_rows_for_pushing() {
        let env = EnvConfig::pushing_failure();
        let rows = baseline_schedules(&env);
        let costs: Vec<_> = rows.iter().map(|(_, s)| analytic_comm_cost(&env, s)).collect();
        assert_eq!(costs, vec![None, Some(8100), Some(432), Some(0)]);
        assert_eq!(rows[2].1, CommSchedule::FixedRate { period: 20 });
    }

    #[test]
    fn analytic_cost_matches_recorded_rollout() {
        let env = EnvConfig::pushing_failure();
        let learners = zero_policy(&env, &[8]).unwrap();
        for (_, schedule) in baseline_schedules(&env).into_iter().skip(1) {
            let r = evaluate(&learners, &env, schedule, 2, None, 3).unwrap();
            for rec in &r.records {
                assert_eq!(Some(rec.comm_cost), analytic_comm_cost(&env, &schedule));
            }
        }
    }

    #[test]
    fn missing_runs_are_reported_not_filled() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::for_scenario(etcomm::envs::Scenario::RigidTransport);
        let table = sweep(
            &cfg,
            dir.path(),
            &SweepOptions {
                rollouts: 1,
                threshold: Some(0.2),
                eval_seed: 0,
                train_missing: false,
            },
        )
        .unwrap();
        assert_eq!(table.rows.len(), 4);
        for row in &table.rows {
            assert_eq!(row.missing, cfg.seeds);
            assert_eq!(row.runs_evaluated, 0);
            assert!(row.success_rate.is_none() && row.mean_comm_cost.is_none());
        }
        assert_eq!(table.rows[1].analytic_comm_cost, Some(1200));
    }
}
