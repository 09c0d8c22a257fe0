//! Fixed-step planar rigid-body dynamics.
//!
//! Bodies are integrated with semi-implicit Euler: velocities are advanced
//! first and the pose is advanced with the new velocity. Floor friction is
//! viscous (force proportional to velocity) and is evaluated at the end of
//! the step, which keeps the update stable for any damping gain. Contacts
//! between bodies are undamped linear springs acting along the contact
//! normal.

use std::f64::consts::PI;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pose and velocity of a planar body in world coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub position: DVec2,
    pub yaw: f64,
    pub linear_velocity: DVec2,
    pub angular_velocity: f64,
}

impl BodyState {
    pub fn at_rest(position: DVec2, yaw: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.yaw.is_finite()
            && self.linear_velocity.is_finite()
            && self.angular_velocity.is_finite()
    }

    /// Maps a body-frame offset into world coordinates.
    pub fn to_world(&self, local: DVec2) -> DVec2 {
        self.position + DVec2::from_angle(self.yaw).rotate(local)
    }

    /// Maps a world point into this body's frame.
    pub fn to_local(&self, world: DVec2) -> DVec2 {
        DVec2::from_angle(-self.yaw).rotate(world - self.position)
    }

    /// Velocity of a material point given by its world-frame offset from the centre.
    pub fn point_velocity(&self, world_offset: DVec2) -> DVec2 {
        self.linear_velocity + self.angular_velocity * world_offset.perp()
    }

    pub fn kinetic_energy(&self, params: &RigidBodyParams) -> f64 {
        0.5 * params.mass * self.linear_velocity.length_squared()
            + 0.5 * params.moment_of_inertia * self.angular_velocity * self.angular_velocity
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned square in the body frame, given by its half side length.
    Square { half_extent: f64 },
    Circle { radius: f64 },
}

impl Shape {
    fn dimension(&self) -> f64 {
        match *self {
            Shape::Square { half_extent } => half_extent,
            Shape::Circle { radius } => radius,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyParams {
    pub mass: f64,
    pub moment_of_inertia: f64,
    pub shape: Shape,
}

impl RigidBodyParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.mass) || !ok(self.moment_of_inertia) || !ok(self.shape.dimension()) {
            return Err(Error::Config(format!(
                "rigid body parameters must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Viscous floor friction gains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrictionParams {
    /// N·s/m
    pub translational: f64,
    /// N·m·s/rad
    pub rotational: f64,
}

impl FrictionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.translational >= 0.0 && self.rotational >= 0.0)
            || !self.translational.is_finite()
            || !self.rotational.is_finite()
        {
            return Err(Error::Config(format!(
                "friction coefficients must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpringContactParams {
    /// N/m
    pub payload_agent: f64,
    /// N/m
    pub agent_agent: f64,
}

impl SpringContactParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.payload_agent >= 0.0 && self.agent_agent >= 0.0)
            || !self.payload_agent.is_finite()
            || !self.agent_agent.is_finite()
        {
            return Err(Error::Config(format!(
                "spring constants must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub force: DVec2,
    pub torque: f64,
}

impl Wrench {
    pub const ZERO: Wrench = Wrench {
        force: DVec2::ZERO,
        torque: 0.0,
    };

    /// Wrench of `force` applied at `offset` from the centre of mass (world frame).
    pub fn at_offset(force: DVec2, offset: DVec2) -> Self {
        Self {
            force,
            torque: offset.perp_dot(force),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.force.is_finite() && self.torque.is_finite()
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench {
            force: self.force + rhs.force,
            torque: self.torque + rhs.torque,
        }
    }
}

impl std::ops::AddAssign for Wrench {
    fn add_assign(&mut self, rhs: Wrench) {
        *self = *self + rhs;
    }
}

impl std::ops::Neg for Wrench {
    type Output = Wrench;
    fn neg(self) -> Wrench {
        Wrench {
            force: -self.force,
            torque: -self.torque,
        }
    }
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = theta - 2.0 * PI * ((theta + PI) / (2.0 * PI)).floor();
    // `wrapped` lies in [-π, π); move the closed end to +π.
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

/// Advances one body by `dt` under an applied wrench and viscous floor friction.
pub fn step_rigid_body(
    state: &BodyState,
    params: &RigidBodyParams,
    friction: &FrictionParams,
    applied: &Wrench,
    dt: f64,
) -> Result<BodyState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if !state.is_finite() || !applied.is_finite() {
        return Err(Error::Diverged(format!(
            "non-finite input to rigid body step: {state:?} {applied:?}"
        )));
    }
    let lin_damp = 1.0 + dt * friction.translational / params.mass;
    let ang_damp = 1.0 + dt * friction.rotational / params.moment_of_inertia;
    let linear_velocity =
        (state.linear_velocity + dt * applied.force / params.mass) / lin_damp;
    let angular_velocity =
        (state.angular_velocity + dt * applied.torque / params.moment_of_inertia) / ang_damp;
    let next = BodyState {
        position: state.position + dt * linear_velocity,
        yaw: wrap_angle(state.yaw + dt * angular_velocity),
        linear_velocity,
        angular_velocity,
    };
    if !next.is_finite() {
        return Err(Error::Diverged(format!("rigid body step produced {next:?}")));
    }
    Ok(next)
}

/// Net wrench on a payload from agents rigidly attached at body-frame points.
pub fn attached_agents_wrench(
    payload: &BodyState,
    attachment_points_body: &[DVec2],
    agent_forces_world: &[DVec2],
) -> Result<Wrench> {
    if attachment_points_body.len() != agent_forces_world.len() {
        return Err(Error::LengthMismatch {
            what: "agent forces",
            expected: attachment_points_body.len(),
            got: agent_forces_world.len(),
        });
    }
    let rot = DVec2::from_angle(payload.yaw);
    Ok(attachment_points_body
        .iter()
        .zip(agent_forces_world)
        .map(|(&p, &f)| Wrench::at_offset(f, rot.rotate(p)))
        .fold(Wrench::ZERO, |acc, w| acc + w))
}

/// Penetration of a circle into another shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    /// Unit normal pointing from the first body towards the second.
    pub normal: DVec2,
    pub depth: f64,
    /// World point where the spring force acts.
    pub point: DVec2,
}

fn circle_circle(
    a_pos: DVec2,
    a_radius: f64,
    b_pos: DVec2,
    b_radius: f64,
) -> Option<Contact> {
    let delta = b_pos - a_pos;
    let dist = delta.length();
    let depth = a_radius + b_radius - dist;
    if depth <= 0.0 {
        return None;
    }
    // Coincident centres have no defined normal; pick +x.
    let normal = if dist > 0.0 { delta / dist } else { DVec2::X };
    let point = a_pos + normal * (a_radius - 0.5 * depth);
    Some(Contact {
        normal,
        depth,
        point,
    })
}

/// Contact of a circle against a square; the normal points from the square
/// to the circle.
pub fn square_circle_contact(
    square: &BodyState,
    half_extent: f64,
    center: DVec2,
    radius: f64,
) -> Option<Contact> {
    let local = square.to_local(center);
    let inside = local.x.abs() < half_extent && local.y.abs() < half_extent;
    let (closest, local_normal, depth) = if !inside {
        let closest = local.clamp(DVec2::splat(-half_extent), DVec2::splat(half_extent));
        let gap = local - closest;
        let dist = gap.length();
        if dist > 0.0 {
            (closest, gap / dist, radius - dist)
        } else {
            // Centre exactly on the boundary: use the face normal.
            let normal = face_normal(local, half_extent);
            (closest, normal, radius)
        }
    } else {
        let normal = face_normal(local, half_extent);
        let to_face = half_extent - local.dot(normal);
        let closest = local + normal * to_face;
        (closest, normal, radius + to_face)
    };
    if depth <= 0.0 {
        return None;
    }
    let rot = DVec2::from_angle(square.yaw);
    Some(Contact {
        normal: rot.rotate(local_normal),
        depth,
        point: square.position + rot.rotate(closest),
    })
}

/// Outward normal of the face nearest to a point on or inside the square.
fn face_normal(local: DVec2, half_extent: f64) -> DVec2 {
    let dx = half_extent - local.x.abs();
    let dy = half_extent - local.y.abs();
    if dx <= dy {
        DVec2::new(if local.x >= 0.0 { 1.0 } else { -1.0 }, 0.0)
    } else {
        DVec2::new(0.0, if local.y >= 0.0 { 1.0 } else { -1.0 })
    }
}

/// Linear spring contact between two bodies.
///
/// Returns the wrench on `a` and the wrench on `b`. The forces are exactly
/// opposite; each torque is taken about the respective centre of mass.
pub fn spring_contact_force(
    a_shape: &Shape,
    a_state: &BodyState,
    b_shape: &Shape,
    b_state: &BodyState,
    k: f64,
) -> Result<(Wrench, Wrench)> {
    // Contact normal always points from `a` to `b`.
    let contact = match (*a_shape, *b_shape) {
        (Shape::Circle { radius: ra }, Shape::Circle { radius: rb }) => {
            circle_circle(a_state.position, ra, b_state.position, rb)
        }
        (Shape::Square { half_extent }, Shape::Circle { radius }) => {
            square_circle_contact(a_state, half_extent, b_state.position, radius)
        }
        (Shape::Circle { radius }, Shape::Square { half_extent }) => {
            square_circle_contact(b_state, half_extent, a_state.position, radius).map(|c| {
                Contact {
                    normal: -c.normal,
                    ..c
                }
            })
        }
        (Shape::Square { .. }, Shape::Square { .. }) => {
            return Err(Error::UnsupportedShapes("square-square".into()));
        }
    };
    let Some(contact) = contact else {
        return Ok((Wrench::ZERO, Wrench::ZERO));
    };
    let force_on_b = k * contact.depth * contact.normal;
    let on_a = Wrench::at_offset(-force_on_b, contact.point - a_state.position);
    let on_b = Wrench::at_offset(force_on_b, contact.point - b_state.position);
    Ok((on_a, on_b))
}
