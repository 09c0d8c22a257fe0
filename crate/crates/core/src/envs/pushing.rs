//! Unicycle agents pushing a payload through spring contacts.
//!
//! Agents are velocity servoed: at the start of every dynamics sub-step the
//! motor sets the body velocity to the commanded unicycle velocity, after
//! which contact forces act on the agent's mass for the rest of the sub-step.
//! An agent with zero command therefore only moves when it is pushed.

use glam::DVec2;

use super::EnvConfig;
use crate::error::{Error, Result};
use crate::physics2d::{spring_contact_force, step_rigid_body, wrap_angle, BodyState, Shape, Wrench};

/// Agents lined up behind the payload's rear face, all facing +x.
pub(super) fn initial_agents(cfg: &EnvConfig, payload: &BodyState) -> Vec<BodyState> {
    let radius = match cfg.agent.shape {
        Shape::Circle { radius } => radius,
        Shape::Square { half_extent } => half_extent,
    };
    let half = match cfg.payload.shape {
        Shape::Square { half_extent } => half_extent,
        Shape::Circle { radius } => radius,
    };
    let x = payload.position.x - (half + radius + cfg.agent_start_gap);
    let n = cfg.n_agents;
    (0..n)
        .map(|i| {
            let y = payload.position.y + (i as f64 - (n as f64 - 1.0) / 2.0) * 2.0 * radius;
            BodyState::at_rest(DVec2::new(x, y), 0.0)
        })
        .collect()
}

/// Advances payload and agents over one control period with held controls
/// `[u_v, u_ω]`.
pub(super) fn advance(
    payload: &mut BodyState,
    agents: &mut [BodyState],
    controls: &[[f64; 2]],
    cfg: &EnvConfig,
) -> Result<()> {
    let dt = cfg.dynamics_time_step;
    let n = agents.len();
    let mut agent_wrench = vec![Wrench::ZERO; n];
    for _ in 0..cfg.substeps() {
        for (a, u) in agents.iter_mut().zip(controls) {
            a.linear_velocity = u[0] * DVec2::from_angle(a.yaw);
            a.angular_velocity = u[1];
        }
        agent_wrench.fill(Wrench::ZERO);
        let mut payload_wrench = Wrench::ZERO;
        for (i, a) in agents.iter().enumerate() {
            let (on_p, on_a) = spring_contact_force(
                &cfg.payload.shape,
                payload,
                &cfg.agent.shape,
                a,
                cfg.springs.payload_agent,
            )?;
            payload_wrench += on_p;
            agent_wrench[i] += on_a;
        }
        for i in 0..n {
            for j in i + 1..n {
                let (on_i, on_j) = spring_contact_force(
                    &cfg.agent.shape,
                    &agents[i],
                    &cfg.agent.shape,
                    &agents[j],
                    cfg.springs.agent_agent,
                )?;
                agent_wrench[i] += on_i;
                agent_wrench[j] += on_j;
            }
        }
        *payload = step_rigid_body(payload, &cfg.payload, &cfg.friction, &payload_wrench, dt)?;
        for (a, w) in agents.iter_mut().zip(&agent_wrench) {
            a.linear_velocity += dt * w.force / cfg.agent.mass;
            a.angular_velocity += dt * w.torque / cfg.agent.moment_of_inertia;
            a.position += dt * a.linear_velocity;
            a.yaw = wrap_angle(a.yaw + dt * a.angular_velocity);
            if !a.is_finite() {
                return Err(Error::Diverged(format!("agent state {a:?}")));
            }
        }
    }
    Ok(())
}

/// Agent pose and velocity relative to the payload, in payload coordinates:
/// `[x (2), v (2), θ, ω]`.
pub(super) fn relative_state(payload: &BodyState, agent: &BodyState) -> [f64; 6] {
    let inv = DVec2::from_angle(-payload.yaw);
    let p = inv.rotate(agent.position - payload.position);
    let v = inv.rotate(agent.linear_velocity - payload.linear_velocity);
    [
        p.x,
        p.y,
        v.x,
        v.y,
        wrap_angle(agent.yaw - payload.yaw),
        agent.angular_velocity - payload.angular_velocity,
    ]
}
