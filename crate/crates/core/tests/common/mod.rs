#![allow(dead_code)]

use quadcbf::c3bf::Obstacle;
use quadcbf::dynamics;
use quadcbf::dynamics::{ControlInput, QuadrotorParams, QuadrotorState, Vec3, Vec4};
use quadcbf::qp::AffineSafetyConstraint;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform3(rng: &mut ChaCha8Rng, half: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-half..half))
}

pub fn unit3(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = uniform3(rng, 1.0);
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Attitude within one radian of level in roll and pitch.
pub fn random_state(rng: &mut ChaCha8Rng) -> QuadrotorState {
    QuadrotorState {
        position: uniform3(rng, 2.0),
        velocity: uniform3(rng, 2.0),
        attitude: Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-3.0..3.0),
        ),
        body_rates: uniform3(rng, 3.0),
    }
}

pub fn random_input(rng: &mut ChaCha8Rng) -> ControlInput {
    ControlInput(Vec4::from_fn(|_, _| rng.random_range(0.0..0.15)))
}

/// Sphere whose center is at least `margin` outside the inflated radius.
pub fn sphere_near(
    rng: &mut ChaCha8Rng,
    state: &QuadrotorState,
    params: &QuadrotorParams,
    margin: f64,
) -> Obstacle {
    let radius = rng.random_range(0.05..0.5);
    let reach = radius + params.body_width / 2.0 + margin + rng.random_range(0.0..3.0);
    let body = quadcbf::c3bf::body_center_kinematics(state, params);
    Obstacle::sphere(
        "s",
        radius,
        body.position + unit3(rng) * reach,
        uniform3(rng, 1.5),
    )
}

/// Cylinder with a random axis whose axis line keeps at least `margin`
/// outside the inflated radius.
pub fn cylinder_near(
    rng: &mut ChaCha8Rng,
    state: &QuadrotorState,
    params: &QuadrotorParams,
    margin: f64,
) -> Obstacle {
    let axis = unit3(rng);
    let radius = rng.random_range(0.05..0.5);
    let reach = radius + params.body_width / 2.0 + margin + rng.random_range(0.0..3.0);
    let normal = {
        let raw = unit3(rng);
        (raw - axis * axis.dot(&raw)).normalize()
    };
    let raw_velocity = uniform3(rng, 1.5);
    let velocity = raw_velocity - axis * axis.dot(&raw_velocity);
    let body = quadcbf::c3bf::body_center_kinematics(state, params);
    Obstacle::cylinder(
        "c",
        radius,
        axis,
        rng.random_range(0.2..2.0),
        body.position + normal * reach + axis * rng.random_range(-1.0..1.0),
        velocity,
    )
}

/// Accelerated projected gradient on the dual of
/// `min 1/2 |u - u_des|^2 s.t. a_i . u + b_i >= 0`,
/// with `u = u_des + A^T lambda`, `lambda >= 0`.
pub fn dual_oracle(u_des: &Vec4, rows: &[AffineSafetyConstraint], iterations: usize) -> Vec4 {
    let m = rows.len();
    if m == 0 {
        return *u_des;
    }
    let gram: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| rows.iter().map(|b| a.row.dot(&b.row)).collect())
        .collect();
    // Frobenius norm bounds the largest eigenvalue of the Gram matrix.
    let lipschitz: f64 = gram.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    let step = 1.0 / lipschitz;
    let linear: Vec<f64> = rows.iter().map(|a| a.slack(u_des)).collect();
    let grad = |lam: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| (0..m).map(|j| gram[i][j] * lam[j]).sum::<f64>() + linear[i])
            .collect()
    };

    let mut lam = vec![0.0; m];
    let mut y = lam.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let g = grad(&y);
        let next: Vec<f64> = (0..m).map(|i| (y[i] - step * g[i]).max(0.0)).collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        let moved: f64 = next.iter().zip(&lam).map(|(a, b)| (a - b).abs()).sum();
        y = (0..m)
            .map(|i| next[i] + momentum * (next[i] - lam[i]))
            .collect();
        lam = next;
        t = t_next;
        if moved == 0.0 && t > 10.0 {
            break;
        }
    }
    let mut u = *u_des;
    for (a, l) in rows.iter().zip(&lam) {
        u += a.row * *l;
    }
    u
}

const EPS: f64 = 1e-6;

/// `(h(x + eps f, t + eps) - h(x - eps f, t - eps)) / 2 eps`.
pub fn finite_difference_rate(
    state: &QuadrotorState,
    input: &ControlInput,
    params: &QuadrotorParams,
    t: f64,
    h: impl Fn(&QuadrotorState, f64) -> f64,
) -> f64 {
    let x = state.to_vector();
    let xdot = dynamics::state_derivative(state, input, params).unwrap();
    let ahead = QuadrotorState::from_vector(&(x + xdot * EPS));
    let behind = QuadrotorState::from_vector(&(x - xdot * EPS));
    (h(&ahead, t + EPS) - h(&behind, t - EPS)) / (2.0 * EPS)
}
