//! Point agents rigidly attached to the payload boundary.

use std::f64::consts::PI;

use glam::DVec2;

use super::EnvConfig;
use crate::error::Result;
use crate::physics2d::{attached_agents_wrench, step_rigid_body, BodyState, Shape};

/// Body-frame attachment points: agent `i` sits where the ray at angle
/// `2πi/N` leaves the square, so four agents land on the edge midpoints.
pub(super) fn attachment_points(n_agents: usize, shape: &Shape) -> Vec<DVec2> {
    let half = match *shape {
        Shape::Square { half_extent } => half_extent,
        Shape::Circle { radius } => radius,
    };
    (0..n_agents)
        .map(|i| {
            let dir = DVec2::from_angle(2.0 * PI * i as f64 / n_agents as f64);
            // Snap the rounding residue of cos/sin at multiples of π/2.
            let dir = DVec2::new(snap(dir.x), snap(dir.y));
            let reach = match *shape {
                Shape::Square { .. } => half / dir.x.abs().max(dir.y.abs()),
                Shape::Circle { .. } => half,
            };
            dir * reach
        })
        .collect()
}

fn snap(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else {
        v
    }
}

/// Integrates the payload over one control period with constant agent forces.
pub(super) fn advance(
    payload: &BodyState,
    points: &[DVec2],
    forces: &[DVec2],
    cfg: &EnvConfig,
) -> Result<BodyState> {
    let mut state = *payload;
    for _ in 0..cfg.substeps() {
        let wrench = attached_agents_wrench(&state, points, forces)?;
        state = step_rigid_body(
            &state,
            &cfg.payload,
            &cfg.friction,
            &wrench,
            cfg.dynamics_time_step,
        )?;
    }
    Ok(state)
}

/// Kinematic states of the attached points.
pub(super) fn agent_states(payload: &BodyState, points: &[DVec2]) -> Vec<BodyState> {
    let rot = DVec2::from_angle(payload.yaw);
    points
        .iter()
        .map(|&p| {
            let offset = rot.rotate(p);
            BodyState {
                position: payload.position + offset,
                yaw: payload.yaw,
                linear_velocity: payload.point_velocity(offset),
                angular_velocity: payload.angular_velocity,
            }
        })
        .collect()
}
