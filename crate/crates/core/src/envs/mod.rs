//! Cooperative-transport environments.
//!
//! A control step takes one [`AgentAction`] per agent. The control part is
//! clamped (and zeroed for a failed agent), the dynamics are integrated over
//! the control period, and the trigger part decides what each agent receives
//! in the observation returned by this step, which is the observation the
//! agent acts on at the next step. The reward of agent `i` is
//! `-‖x* - x‖₂ - λ(‖w_i‖₁ + ‖z_i‖₁)` with the decision applied this step.

mod config;
mod pushing;
mod rigid;

use glam::DVec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{EnvConfig, FailureConfig, Scenario};

use crate::comm::{
    decision_from_schedule, trigger, update_observation_table, CommCostLedger, CommSchedule,
    ObservationTable, TriggerDecision, TriggerSignals,
};
use crate::error::{Error, Result};
use crate::physics2d::BodyState;

/// Scalars in the broadcast signal: payload x (2), v (2), θ, ω, goal (2).
pub const BROADCAST_WIDTH: usize = 8;

/// Payload state and goal delivered to every agent by infrastructure.
///
/// Never counted as communication.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BroadcastSignal {
    pub position: DVec2,
    pub velocity: DVec2,
    pub yaw: f64,
    pub angular_velocity: f64,
    /// World frame for rigid transport, payload frame for pushing.
    pub goal: DVec2,
}

impl BroadcastSignal {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.position.x,
            self.position.y,
            self.velocity.x,
            self.velocity.y,
            self.yaw,
            self.angular_velocity,
            self.goal.x,
            self.goal.y,
        ]
    }
}

/// Control input plus trigger signals of one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentAction {
    /// Physical control: force `[f_x, f_y]` or `[u_v, u_ω]`.
    pub u: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

impl AgentAction {
    pub fn idle(n_agents: usize, n_categories: usize) -> Self {
        Self {
            u: vec![0.0; 2],
            c: vec![-1.0; n_agents],
            d: vec![-1.0; n_categories],
        }
    }

    pub fn signals(&self) -> TriggerSignals {
        TriggerSignals {
            c: self.c.clone(),
            d: self.d.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Control steps taken so far in the episode.
    pub step: usize,
    pub distance: f64,
    /// Cells delivered this step, summed over receivers.
    pub comm_count: u64,
    /// Applied receive decisions (after the schedule).
    pub decisions: Vec<TriggerDecision>,
    /// Applied controls (after clamping and failure).
    pub controls: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
    pub info: StepInfo,
}

/// One line of the episode trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTraceRecord {
    pub step: usize,
    pub time: f64,
    pub payload: BodyState,
    pub agents: Vec<BodyState>,
    pub controls: Vec<[f64; 2]>,
    pub w: Vec<Vec<u8>>,
    pub z: Vec<Vec<u8>>,
    pub distance: f64,
    pub penalties: Vec<f64>,
    pub rewards: Vec<f64>,
}

/// Concatenates `[b | own state | table rows in agent order]`.
pub fn assemble_observation(
    broadcast: &BroadcastSignal,
    own_state: &[f64],
    table: &ObservationTable,
) -> Vec<f64> {
    let mut obs = Vec::with_capacity(BROADCAST_WIDTH + own_state.len() + table.values().len());
    obs.extend(broadcast.to_vec());
    obs.extend_from_slice(own_state);
    obs.extend_from_slice(table.values());
    obs
}

/// Zeroes the failed agent's control once `elapsed` reaches the failure
/// time. Trigger signals are left untouched.
pub fn apply_failure(actions: &[AgentAction], elapsed: f64, config: &EnvConfig) -> Vec<AgentAction> {
    let mut out = actions.to_vec();
    if let Some(f) = &config.failure {
        if elapsed >= f.time {
            if let Some(a) = out.get_mut(f.agent) {
                a.u.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    out
}

/// Transport performance: negative sum of payload-goal distances.
pub fn episode_performance(distances: &[f64]) -> f64 {
    -distances.iter().sum::<f64>()
}

/// One cooperative-transport episode runner.
#[derive(Clone, Debug)]
pub struct TransportEnv {
    config: EnvConfig,
    attachment_points: Vec<DVec2>,
    payload: BodyState,
    agents: Vec<BodyState>,
    goal: DVec2,
    last_controls: Vec<[f64; 2]>,
    step: usize,
    ledger: CommCostLedger,
    distances: Vec<f64>,
    last_decisions: Vec<TriggerDecision>,
    last_rewards: Vec<f64>,
}

impl TransportEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let attachment_points = match config.scenario {
            Scenario::RigidTransport => {
                rigid::attachment_points(config.n_agents, &config.payload.shape)
            }
            Scenario::PushingFailure => Vec::new(),
        };
        let n = config.n_agents;
        let l = config.n_categories();
        let mut env = Self {
            attachment_points,
            payload: BodyState::default(),
            agents: Vec::new(),
            goal: DVec2::ZERO,
            last_controls: vec![[0.0; 2]; n],
            step: 0,
            ledger: CommCostLedger::default(),
            distances: Vec::new(),
            last_decisions: vec![TriggerDecision::uniform(n, l, false); n],
            last_rewards: vec![0.0; n],
            config,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn payload(&self) -> &BodyState {
        &self.payload
    }

    pub fn agents(&self) -> &[BodyState] {
        &self.agents
    }

    pub fn goal(&self) -> DVec2 {
        self.goal
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn elapsed(&self) -> f64 {
        self.step as f64 * self.config.control_period
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.steps_per_episode
    }

    pub fn ledger(&self) -> &CommCostLedger {
        &self.ledger
    }

    /// Payload-goal distances after each control step of this episode.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn distance_to_goal(&self) -> f64 {
        (self.goal - self.payload.position).length()
    }

    /// Starts a new episode. Every table starts fully blocked.
    pub fn reset(&mut self, seed: u64) -> StepResult {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let range = self.config.initial_yaw_range;
        let yaw = if range > 0.0 {
            rng.random_range(-range..=range)
        } else {
            0.0
        };
        self.payload = BodyState::at_rest(DVec2::ZERO, yaw);
        self.goal = self.payload.to_world(DVec2::from(self.config.goal_offset));
        self.agents = match self.config.scenario {
            Scenario::RigidTransport => rigid::agent_states(&self.payload, &self.attachment_points),
            Scenario::PushingFailure => pushing::initial_agents(&self.config, &self.payload),
        };
        let n = self.config.n_agents;
        let l = self.config.n_categories();
        self.last_controls = vec![[0.0; 2]; n];
        self.step = 0;
        self.ledger = CommCostLedger::default();
        self.distances.clear();
        self.last_decisions = vec![TriggerDecision::uniform(n, l, false); n];
        self.last_rewards = vec![0.0; n];
        let tables = (0..n)
            .map(|i| ObservationTable::all_sentinel(i, n, self.config.layout()))
            .collect::<Vec<_>>();
        StepResult {
            observations: self.observations(&tables),
            rewards: vec![0.0; n],
            done: false,
            info: StepInfo {
                step: 0,
                distance: self.distance_to_goal(),
                comm_count: 0,
                decisions: self.last_decisions.clone(),
                controls: self.last_controls.clone(),
            },
        }
    }

    fn validate_actions(&self, actions: &[AgentAction]) -> Result<()> {
        let n = self.config.n_agents;
        let l = self.config.n_categories();
        if actions.len() != n {
            return Err(Error::LengthMismatch {
                what: "actions",
                expected: n,
                got: actions.len(),
            });
        }
        for (i, a) in actions.iter().enumerate() {
            if a.u.len() != 2 || a.c.len() != n || a.d.len() != l {
                return Err(Error::InvalidAction(format!(
                    "agent {i}: expected u/c/d widths 2/{n}/{l}, got {}/{}/{}",
                    a.u.len(),
                    a.c.len(),
                    a.d.len()
                )));
            }
            if a.u.iter().chain(&a.c).chain(&a.d).any(|v| !v.is_finite()) {
                return Err(Error::InvalidAction(format!("agent {i}: non-finite component")));
            }
        }
        Ok(())
    }

    pub fn step(&mut self, actions: &[AgentAction], schedule: &CommSchedule) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        self.validate_actions(actions)?;
        schedule.validate()?;
        let actions = apply_failure(actions, self.elapsed(), &self.config);
        let lim = self.config.control_limits;
        let controls: Vec<[f64; 2]> = actions
            .iter()
            .map(|a| [a.u[0].clamp(-lim[0], lim[0]), a.u[1].clamp(-lim[1], lim[1])])
            .collect();

        match self.config.scenario {
            Scenario::RigidTransport => {
                let forces: Vec<DVec2> = controls.iter().map(|&u| DVec2::from(u)).collect();
                self.payload =
                    rigid::advance(&self.payload, &self.attachment_points, &forces, &self.config)?;
                self.agents = rigid::agent_states(&self.payload, &self.attachment_points);
            }
            Scenario::PushingFailure => {
                pushing::advance(&mut self.payload, &mut self.agents, &controls, &self.config)?;
            }
        }
        self.last_controls = controls.clone();

        let decisions: Vec<TriggerDecision> = actions
            .iter()
            .map(|a| decision_from_schedule(schedule, self.step, &trigger(&a.signals())))
            .collect();
        let comm_count = self.ledger.record(&decisions);

        let data = self.true_data();
        let layout = self.config.layout();
        let tables = decisions
            .iter()
            .enumerate()
            .map(|(i, d)| update_observation_table(i, d, &layout, &data))
            .collect::<Result<Vec<_>>>()?;

        let distance = self.distance_to_goal();
        let lambda = self.config.comm_penalty;
        let rewards: Vec<f64> = decisions
            .iter()
            .map(|d| -distance - lambda * d.l1() as f64)
            .collect();
        self.distances.push(distance);
        self.step += 1;
        self.last_decisions = decisions.clone();
        self.last_rewards = rewards.clone();

        Ok(StepResult {
            observations: self.observations(&tables),
            rewards,
            done: self.is_done(),
            info: StepInfo {
                step: self.step,
                distance,
                comm_count,
                decisions,
                controls,
            },
        })
    }

    pub fn broadcast(&self) -> BroadcastSignal {
        let goal = match self.config.scenario {
            Scenario::RigidTransport => self.goal,
            Scenario::PushingFailure => self.payload.to_local(self.goal),
        };
        BroadcastSignal {
            position: self.payload.position,
            velocity: self.payload.linear_velocity,
            yaw: self.payload.yaw,
            angular_velocity: self.payload.angular_velocity,
            goal,
        }
    }

    /// The agent's own block of the observation.
    pub fn own_state(&self, agent: usize) -> Vec<f64> {
        let a = &self.agents[agent];
        let u = self.last_controls[agent];
        match self.config.scenario {
            Scenario::RigidTransport => vec![
                a.position.x,
                a.position.y,
                a.linear_velocity.x,
                a.linear_velocity.y,
                u[0],
                u[1],
            ],
            Scenario::PushingFailure => {
                let r = pushing::relative_state(&self.payload, a);
                vec![r[0], r[1], r[2], r[3], r[4], r[5], u[0], u[1]]
            }
        }
    }

    /// What each agent could send, laid out by data category.
    pub fn true_data(&self) -> Vec<Vec<f64>> {
        (0..self.config.n_agents)
            .map(|j| {
                let a = &self.agents[j];
                let u = self.last_controls[j];
                match self.config.scenario {
                    Scenario::RigidTransport => vec![
                        a.position.x,
                        a.position.y,
                        a.linear_velocity.x,
                        a.linear_velocity.y,
                        u[0],
                        u[1],
                    ],
                    Scenario::PushingFailure => {
                        let r = pushing::relative_state(&self.payload, a);
                        // x, v, u_v, u_ω, θ, ω
                        vec![r[0], r[1], r[2], r[3], u[0], u[1], r[4], r[5]]
                    }
                }
            })
            .collect()
    }

    fn observations(&self, tables: &[ObservationTable]) -> Vec<Vec<f64>> {
        let b = self.broadcast();
        tables
            .iter()
            .enumerate()
            .map(|(i, t)| assemble_observation(&b, &self.own_state(i), t))
            .collect()
    }

    /// Trace line describing the state after the latest step.
    pub fn trace_record(&self) -> EpisodeTraceRecord {
        let lambda = self.config.comm_penalty;
        EpisodeTraceRecord {
            step: self.step,
            time: self.elapsed(),
            payload: self.payload,
            agents: self.agents.clone(),
            controls: self.last_controls.clone(),
            w: self
                .last_decisions
                .iter()
                .map(|d| d.w.iter().map(|&b| b as u8).collect())
                .collect(),
            z: self
                .last_decisions
                .iter()
                .map(|d| d.z.iter().map(|&b| b as u8).collect())
                .collect(),
            distance: self.distance_to_goal(),
            penalties: self
                .last_decisions
                .iter()
                .map(|d| lambda * d.l1() as f64)
                .collect(),
            rewards: self.last_rewards.clone(),
        }
    }
}
