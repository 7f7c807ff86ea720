mod common;

use common::*;
use nalgebra::Matrix3;
use quadcbf::dynamics::{self, ControlInput, QuadrotorParams, QuadrotorState, Vec3, Vec4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn hat(w: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

#[test]
fn euler_rates_reproduce_body_rates() {
    // R' = R [w]x for body-frame rates.
    let params = QuadrotorParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let eps = 1e-6;
    for _ in 0..1000 {
        let state = random_state(&mut rng);
        let input = random_input(&mut rng);
        let xdot = dynamics::state_derivative(&state, &input, &params).unwrap();
        let x = state.to_vector();
        let r = |x: &quadcbf::dynamics::StateVector| {
            dynamics::rotation_matrix(&QuadrotorState::from_vector(x).attitude)
        };
        let numeric = (r(&(x + xdot * eps)) - r(&(x - xdot * eps))) / (2.0 * eps);
        let expected = dynamics::rotation_matrix(&state.attitude) * hat(&state.body_rates);
        assert!(
            (numeric - expected).norm() < 1e-6,
            "{}",
            (numeric - expected).norm()
        );
    }
}

#[test]
fn derivative_is_affine_in_thrusts() {
    let params = QuadrotorParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..1000 {
        let state = random_state(&mut rng);
        let (a, b) = (random_input(&mut rng), random_input(&mut rng));
        let f = |u: Vec4| dynamics::state_derivative(&state, &ControlInput(u), &params).unwrap();
        let defect = f(a.0 + b.0) - f(a.0) - f(b.0) + f(Vec4::zeros());
        assert!(defect.norm() < 1e-9);
        let split =
            dynamics::drift(&state, &params).unwrap() + dynamics::actuation(&state, &params) * a.0;
        assert!((split - f(a.0)).norm() < 1e-12);

        // Translational part from first principles.
        let thrust =
            dynamics::rotation_matrix(&state.attitude).column(2) * (a.0.sum() / params.mass);
        let accel = thrust - Vec3::z() * params.gravity;
        assert!((f(a.0).fixed_rows::<3>(3) - accel).norm() < 1e-12);
    }
}

#[test]
fn free_flight_conserves_energy() {
    let params = QuadrotorParams::default();
    let mut state = QuadrotorState {
        position: Vec3::new(0.0, 0.0, 5.0),
        velocity: Vec3::new(0.3, -0.2, 1.0),
        attitude: Vec3::new(0.1, -0.05, 0.2),
        body_rates: Vec3::new(0.4, -0.3, 0.8),
    };
    let energy = |s: &QuadrotorState| {
        0.5 * params.mass * s.velocity.norm_squared() + params.mass * params.gravity * s.position.z
    };
    let spin = |s: &QuadrotorState| {
        0.5 * s
            .body_rates
            .dot(&params.inertia.component_mul(&s.body_rates))
    };
    let momentum = |s: &QuadrotorState| {
        (dynamics::rotation_matrix(&s.attitude) * params.inertia.component_mul(&s.body_rates))
            .norm()
    };
    let (e0, k0, m0) = (energy(&state), spin(&state), momentum(&state));
    for _ in 0..240 {
        state = dynamics::step(
            &state,
            &ControlInput(Vec4::zeros()),
            dynamics::DEFAULT_DT,
            &params,
        )
        .unwrap();
    }
    assert!((energy(&state) - e0).abs() <= 1e-10 * e0);
    assert!((spin(&state) - k0).abs() <= 1e-8 * k0);
    assert!((momentum(&state) - m0).abs() <= 1e-8 * m0);
}

#[test]
fn rk4_converges_at_fourth_order() {
    let params = QuadrotorParams::default();
    let start = QuadrotorState {
        position: Vec3::zeros(),
        velocity: Vec3::new(0.5, 0.0, 0.2),
        attitude: Vec3::new(0.2, -0.1, 0.3),
        body_rates: Vec3::new(1.0, -0.5, 0.7),
    };
    let hover = params.hover_thrust();
    let u = ControlInput(Vec4::new(hover * 1.02, hover, hover * 0.99, hover * 1.01));
    let horizon = 0.25;
    let integrate = |n: usize| {
        let dt = horizon / n as f64;
        (0..n).fold(start, |s, _| dynamics::step(&s, &u, dt, &params).unwrap())
    };
    let reference = integrate(1920);
    let errors: Vec<f64> = [15, 30, 60]
        .iter()
        .map(|&n| (integrate(n).to_vector() - reference.to_vector()).norm())
        .collect();
    for pair in errors.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!(
            (13.0..19.0).contains(&ratio),
            "error ratio {ratio} from {errors:?}"
        );
    }
}
