use etcomm::physics2d::{
    spring_contact_force, step_rigid_body, BodyState, FrictionParams, RigidBodyParams, Shape,
    Wrench,
};
use glam::DVec2;
use proptest::prelude::*;

fn circle(mass: f64, radius: f64) -> RigidBodyParams {
    RigidBodyParams {
        mass,
        moment_of_inertia: 0.5 * mass * radius * radius,
        shape: Shape::Circle { radius },
    }
}

fn momentum(bodies: &[(RigidBodyParams, BodyState)]) -> DVec2 {
    bodies
        .iter()
        .map(|(p, s)| p.mass * s.linear_velocity)
        .sum()
}

/// All pairwise spring wrenches, then one step per body.
fn step_all(
    bodies: &mut [(RigidBodyParams, BodyState)],
    friction: &FrictionParams,
    k: f64,
    dt: f64,
) {
    let n = bodies.len();
    let mut wrenches = vec![Wrench::ZERO; n];
    for i in 0..n {
        for j in i + 1..n {
            let (wi, wj) = spring_contact_force(
                &bodies[i].0.shape,
                &bodies[i].1,
                &bodies[j].0.shape,
                &bodies[j].1,
                k,
            )
            .unwrap();
            wrenches[i] += wi;
            wrenches[j] += wj;
        }
    }
    for (b, w) in bodies.iter_mut().zip(&wrenches) {
        b.1 = step_rigid_body(&b.1, &b.0, friction, w, dt).unwrap();
    }
}

#[test]
fn frictionless_collisions_conserve_momentum() {
    let frictionless = FrictionParams {
        translational: 0.0,
        rotational: 0.0,
    };
    let square = RigidBodyParams {
        mass: 4.8,
        moment_of_inertia: 0.2,
        shape: Shape::Square { half_extent: 0.25 },
    };
    let mut bodies = vec![
        (square, BodyState::at_rest(DVec2::new(0.0, 0.0), 0.3)),
        (circle(1.1, 0.1), BodyState {
            linear_velocity: DVec2::new(0.8, 0.05),
            ..BodyState::at_rest(DVec2::new(-0.8, 0.02), 0.0)
        }),
        (circle(0.7, 0.15), BodyState {
            linear_velocity: DVec2::new(-0.5, -0.3),
            ..BodyState::at_rest(DVec2::new(0.9, 0.4), 0.0)
        }),
        (circle(2.0, 0.12), BodyState {
            linear_velocity: DVec2::new(0.0, 0.6),
            ..BodyState::at_rest(DVec2::new(0.1, -0.9), 0.0)
        }),
    ];
    let p0 = momentum(&bodies);
    let mut touched = false;
    for _ in 0..10_000 {
        let before: Vec<_> = bodies.iter().map(|b| b.1.linear_velocity).collect();
        step_all(&mut bodies, &frictionless, 300.0, 0.005);
        // Velocity only changes through contacts when there is no friction.
        touched |= bodies.iter().zip(&before).any(|(b, v)| b.1.linear_velocity != *v);
        let drift = (momentum(&bodies) - p0).length() / p0.length();
        assert!(drift < 1e-9, "relative drift {drift:e}");
    }
    assert!(touched, "scenario produced no contact");
}

#[test]
fn friction_never_increases_kinetic_energy() {
    let friction = FrictionParams {
        translational: 0.2,
        rotational: 15.0,
    };
    let params = circle(1.1, 0.1);
    let mut s = BodyState {
        linear_velocity: DVec2::new(2.0, -1.0),
        angular_velocity: 5.0,
        ..BodyState::default()
    };
    let mut e = s.kinetic_energy(&params);
    for _ in 0..10_000 {
        s = step_rigid_body(&s, &params, &friction, &Wrench::ZERO, 0.05).unwrap();
        let next = s.kinetic_energy(&params);
        assert!(next <= e);
        e = next;
    }
}

proptest! {
    #[test]
    fn spring_forces_are_equal_and_opposite(
        ax in -0.3f64..0.3, ay in -0.3f64..0.3, yaw in -3.0f64..3.0,
        bx in -0.3f64..0.3, by in -0.3f64..0.3,
        k in 1.0f64..500.0,
        square in any::<bool>(),
    ) {
        let a_shape = if square { Shape::Square { half_extent: 0.25 } } else { Shape::Circle { radius: 0.2 } };
        let b_shape = Shape::Circle { radius: 0.1 };
        let a = BodyState::at_rest(DVec2::new(ax, ay), yaw);
        let b = BodyState::at_rest(DVec2::new(bx, by), 0.0);
        let (wa, wb) = spring_contact_force(&a_shape, &a, &b_shape, &b, k).unwrap();
        prop_assert_eq!(wa.force + wb.force, DVec2::ZERO);
        // Torques balance about a common point once the lever arms are included.
        let about_origin = wa.torque + a.position.perp_dot(wa.force)
            + wb.torque + b.position.perp_dot(wb.force);
        prop_assert!(about_origin.abs() < 1e-12 * (1.0 + wa.force.length()));
    }
}
