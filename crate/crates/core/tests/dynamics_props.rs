use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use quadlab::dynamics::{allocate, body_wrench, motor_step, rk4_rigid, ActionBounds, CtbrAction, QuadParams, QuadState, Quadrotor};
use quadlab::GRAVITY;

fn tumbling_state() -> QuadState {
    let q = *UnitQuaternion::from_euler_angles(0.3, -0.2, 0.7).quaternion();
    QuadState { p: Vector3::new(1.0, -2.0, 3.0), q, v: Vector3::new(0.5, 1.0, -0.3), w: Vector3::new(1.5, -2.0, 0.8), rotors: [0.0; 4] }
}

fn run_rk4(dt: f64, t: f64, thrusts: &[f64; 4], params: &QuadParams) -> QuadState {
    let n = (t / dt).round() as usize;
    let mut s = tumbling_state();
    for _ in 0..n {
        s = rk4_rigid(&s, thrusts, params, dt);
    }
    s
}

fn state_distance(a: &QuadState, b: &QuadState) -> f64 {
    let x = a.to_array();
    let y = b.to_array();
    x.iter().zip(&y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

#[test]
fn rk4_is_fourth_order() {
    let params = QuadParams::default();
    let thrusts = [3.2, 2.9, 3.1, 2.7];
    let reference = run_rk4(1e-4, 0.5, &thrusts, &params);
    let coarse = state_distance(&run_rk4(0.02, 0.5, &thrusts, &params), &reference);
    let fine = state_distance(&run_rk4(0.01, 0.5, &thrusts, &params), &reference);
    assert!(coarse / fine >= 12.0, "ratio {} ({coarse:e} / {fine:e})", coarse / fine);
}

#[test]
fn translational_energy_conserved_without_thrust() {
    let params = QuadParams::default();
    let energy = |s: &QuadState| 0.5 * params.mass * s.v.norm_squared() + params.mass * GRAVITY * s.p.z;
    let mut s = tumbling_state();
    let e0 = energy(&s);
    for _ in 0..1000 {
        s = rk4_rigid(&s, &[0.0; 4], &params, 1e-3);
    }
    assert!((energy(&s) - e0).abs() <= 1e-3 * e0.abs());
}

#[test]
fn ballistic_drop_closed_form() {
    let params = QuadParams::default();
    let quad = Quadrotor::new(params);
    let mut s = QuadState::at_rest(Vector3::zeros(), 0.0, 0.0);
    for _ in 0..1000 {
        s = quad.integrate_step(&s, &CtbrAction::new(0.0, Vector3::zeros()), 1e-3).unwrap().0;
    }
    assert!((s.p.z + 0.5 * GRAVITY).abs() < 1e-4);
    assert!(s.p.x.abs() < 1e-12 && s.p.y.abs() < 1e-12);
}

proptest! {
    #[test]
    fn allocation_round_trip(
        collective in 4.0..20.0f64,
        tx in -0.1..0.1f64,
        ty in -0.1..0.1f64,
        tz in -0.02..0.02f64,
    ) {
        let params = QuadParams::default();
        let torque = Vector3::new(tx, ty, tz);
        let alloc = allocate(collective, &torque, &params);
        prop_assume!(!alloc.saturated);
        let (c, t) = body_wrench(&alloc.thrusts, &params);
        prop_assert!((c - collective).abs() < 1e-10);
        prop_assert!((t - torque).norm() < 1e-10);
    }

    #[test]
    fn motor_matches_exponential(
        start in prop::array::uniform4(0.0..1500.0f64),
        cmd in prop::array::uniform4(0.0..1500.0f64),
        dt in 1e-4..0.1f64,
    ) {
        let params = QuadParams::default();
        let next = motor_step(&start, &cmd, dt, &params);
        for i in 0..4 {
            let exact = cmd[i] + (start[i] - cmd[i]) * (-dt / params.motor_time_const).exp();
            prop_assert!((next[i] - exact).abs() < 1e-12 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn quaternion_stays_normalized(actions in prop::collection::vec(prop::array::uniform4(-1.0..1.0f64), 1..200)) {
        let params = QuadParams::default();
        let quad = Quadrotor::new(params);
        let bounds = ActionBounds::default();
        let mut s = QuadState::at_rest(Vector3::zeros(), 0.0, params.hover_rotor_speed());
        for u in &actions {
            let a = bounds.from_normalized(u);
            for _ in 0..10 {
                s = quad.integrate_step(&s, &a, 1e-3).unwrap().0;
            }
            prop_assert!((s.q.norm() - 1.0).abs() <= 1e-6);
            prop_assert!(s.rotors.iter().all(|&r| r >= 0.0));
        }
    }

    #[test]
    fn hover_rotor_speed_carries_weight(mass in 0.3..5.0f64) {
        let params = QuadParams { mass, ..QuadParams::default() };
        let w = params.hover_rotor_speed();
        let f: f64 = (0..4).map(|_| params.thrust_coef * w * w).sum();
        prop_assert!((f - mass * GRAVITY).abs() < 1e-9 * mass * GRAVITY);
    }
}
