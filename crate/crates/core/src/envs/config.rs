use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::comm::CategoryLayout;
use crate::error::{Error, Result};
use crate::physics2d::{FrictionParams, RigidBodyParams, Shape, SpringContactParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Point agents rigidly attached to a square payload, force control.
    RigidTransport,
    /// Unicycle agents pushing a square payload; one agent stops mid-episode.
    PushingFailure,
}

impl Scenario {
    /// Data categories an agent can request from another agent.
    pub fn layout(self) -> CategoryLayout {
        match self {
            Scenario::RigidTransport => {
                CategoryLayout::new(&[("position", 2), ("velocity", 2), ("force", 2)])
            }
            Scenario::PushingFailure => CategoryLayout::new(&[
                ("x", 2),
                ("v", 2),
                ("u_v", 1),
                ("u_omega", 1),
                ("theta", 1),
                ("omega", 1),
            ]),
        }
    }

    /// Width of the agent's own-state block.
    pub fn own_state_width(self) -> usize {
        match self {
            // x_i, v_i, u_i
            Scenario::RigidTransport => 6,
            // x_i, v_i, θ_i, ω_i, u_i in payload coordinates
            Scenario::PushingFailure => 8,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "rigid_transport" | "rigid" | "sim1" => Ok(Scenario::RigidTransport),
            "pushing_failure" | "pushing" | "sim2" => Ok(Scenario::PushingFailure),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::RigidTransport => "rigid_transport",
            Scenario::PushingFailure => "pushing_failure",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureConfig {
    /// Zero-based index of the agent that stops.
    pub agent: usize,
    /// Seconds after which the agent's control input is forced to zero.
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub scenario: Scenario,
    pub n_agents: usize,
    /// Control period [s]
    pub control_period: f64,
    /// Time step size of dynamics [s]
    pub dynamics_time_step: f64,
    /// Number of steps per episode
    pub steps_per_episode: usize,
    pub payload: RigidBodyParams,
    /// Agent body; unused by the rigid-attachment scenario (point agents).
    pub agent: RigidBodyParams,
    /// Translational / rotational friction coefficient (payload vs floor)
    pub friction: FrictionParams,
    /// Spring constants (payload vs agent, agent vs agent)
    pub springs: SpringContactParams,
    /// Communication penalty weight λ.
    pub comm_penalty: f64,
    /// Symmetric bound of each control component (force [N], or forward
    /// velocity [m/s] and angular velocity [rad/s]).
    pub control_limits: [f64; 2],
    /// Goal offset in the frame of the payload's initial pose [m].
    pub goal_offset: [f64; 2],
    /// Initial payload yaw is drawn uniformly from ±this value [rad].
    pub initial_yaw_range: f64,
    /// Gap between the agents' front and the payload's rear face at reset [m].
    pub agent_start_gap: f64,
    pub failure: Option<FailureConfig>,
}

impl EnvConfig {
    pub fn rigid_transport() -> Self {
        Self {
            scenario: Scenario::RigidTransport,
            n_agents: 4,
            control_period: 0.1,
            dynamics_time_step: 0.1,
            steps_per_episode: 25,
            payload: RigidBodyParams {
                mass: 1.0,
                moment_of_inertia: 4.2e-2,
                shape: Shape::Square { half_extent: 0.25 },
            },
            agent: RigidBodyParams {
                mass: 1.1,
                moment_of_inertia: 5.3e-3,
                shape: Shape::Circle { radius: 0.1 },
            },
            friction: FrictionParams {
                translational: 0.3,
                rotational: 1.0e1,
            },
            springs: SpringContactParams::default(),
            comm_penalty: 0.2,
            control_limits: [1.0, 1.0],
            goal_offset: [1.0, 0.0],
            initial_yaw_range: 0.0,
            agent_start_gap: 0.0,
            failure: None,
        }
    }

    pub fn pushing_failure() -> Self {
        Self {
            scenario: Scenario::PushingFailure,
            n_agents: 3,
            control_period: 0.25,
            dynamics_time_step: 0.05,
            steps_per_episode: 150,
            payload: RigidBodyParams {
                mass: 4.8,
                moment_of_inertia: 1.3e-2,
                shape: Shape::Square { half_extent: 0.25 },
            },
            agent: RigidBodyParams {
                mass: 1.1,
                moment_of_inertia: 5.3e-3,
                shape: Shape::Circle { radius: 0.10 },
            },
            friction: FrictionParams {
                translational: 0.2,
                rotational: 1.5e1,
            },
            springs: SpringContactParams {
                payload_agent: 3.0e2,
                agent_agent: 2.0e1,
            },
            comm_penalty: 0.01,
            control_limits: [0.2, 0.5],
            goal_offset: [1.0, 0.0],
            initial_yaw_range: PI / 8.0,
            agent_start_gap: 0.1,
            failure: Some(FailureConfig {
                agent: 0,
                time: 5.0,
            }),
        }
    }

    pub fn for_scenario(scenario: Scenario) -> Self {
        match scenario {
            Scenario::RigidTransport => Self::rigid_transport(),
            Scenario::PushingFailure => Self::pushing_failure(),
        }
    }

    pub fn layout(&self) -> CategoryLayout {
        self.scenario.layout()
    }

    pub fn n_categories(&self) -> usize {
        self.layout().len()
    }

    pub fn control_dim(&self) -> usize {
        2
    }

    pub fn observation_dim(&self) -> usize {
        super::BROADCAST_WIDTH
            + self.scenario.own_state_width()
            + self.n_agents * self.layout().row_width()
    }

    /// Action vector width: control, one signal per agent, one per category.
    pub fn action_dim(&self) -> usize {
        self.control_dim() + self.n_agents + self.n_categories()
    }

    /// Dynamics sub-steps per control step.
    pub fn substeps(&self) -> usize {
        (self.control_period / self.dynamics_time_step).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_agents == 0 {
            return bad("at least one agent is required".into());
        }
        if self.steps_per_episode == 0 {
            return bad("steps per episode must be at least 1".into());
        }
        if !(self.control_period > 0.0 && self.dynamics_time_step > 0.0) {
            return bad("control period and dynamics step must be positive".into());
        }
        let ratio = self.control_period / self.dynamics_time_step;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-9 {
            return bad(format!(
                "control period {} is not an integer multiple of the dynamics step {}",
                self.control_period, self.dynamics_time_step
            ));
        }
        if !(self.comm_penalty >= 0.0 && self.comm_penalty.is_finite()) {
            return bad(format!("λ must be non-negative, got {}", self.comm_penalty));
        }
        if self.control_limits.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return bad(format!("control limits must be positive: {:?}", self.control_limits));
        }
        if !(self.initial_yaw_range >= 0.0 && self.initial_yaw_range <= PI) {
            return bad("initial yaw range must lie in [0, π]".into());
        }
        self.payload.validate()?;
        self.friction.validate()?;
        match self.scenario {
            Scenario::RigidTransport => {
                if !matches!(self.payload.shape, Shape::Square { .. }) {
                    return bad("rigid transport needs a square payload".into());
                }
            }
            Scenario::PushingFailure => {
                self.agent.validate()?;
                self.springs.validate()?;
                if !matches!(self.agent.shape, Shape::Circle { .. }) {
                    return bad("pushing agents must be circles".into());
                }
            }
        }
        if let Some(f) = &self.failure {
            if f.agent >= self.n_agents {
                return bad(format!("failed agent {} out of range", f.agent));
            }
            if !(f.time >= 0.0) {
                return bad("failure time must be non-negative".into());
            }
        }
        Ok(())
    }
}
