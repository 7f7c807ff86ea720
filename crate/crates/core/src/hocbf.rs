//! Higher-order CBF baseline with a constant penalty,
//! `h_HO = <p, v> + gamma * sqrt(|p|^2 - r^2)`, and the cone-angle
//! comparison against the collision-cone barrier.
//!
//! The radius is the raw encompassing radius `max(c1, c2, c3)` without the
//! vehicle-width inflation used by the collision-cone barriers. Cylinders are
//! treated as their encompassing sphere of radius `max(radius, height)`,
//! since this barrier has no projection form.

use serde::{Deserialize, Serialize};

use crate::c3bf::{
    body_center_kinematics, cone_half_angle, tangent_length, BarrierEvaluation, Obstacle,
    RelativeState, Shape,
};
use crate::dynamics::{QuadrotorParams, QuadrotorState, Vec4};
use crate::error::{Error, Result};
use crate::qp::{AffineSafetyConstraint, ClassKappa, DEGENERATE_GRADIENT_NORM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HocbfConfig {
    /// Constant penalty standing in for `|v_rel|`, m/s.
    pub gamma: f64,
}

impl Default for HocbfConfig {
    fn default() -> Self {
        Self { gamma: 1.0 }
    }
}

impl HocbfConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(Self { gamma })
        } else {
            Err(Error::InvalidConfig(format!(
                "HO-CBF gamma must be positive, got {gamma}"
            )))
        }
    }
}

/// Radius of the sphere that encloses the raw obstacle.
pub fn encompassing_radius(obstacle: &Obstacle) -> f64 {
    match obstacle.shape {
        Shape::Sphere { radius } => radius,
        Shape::Cylinder { radius, height, .. } => radius.max(height),
    }
}

/// Squared base-to-center distance minus the squared encompassing radius.
/// Uses the base position, not the body center.
pub fn b_distance(state: &QuadrotorState, obstacle: &Obstacle, t: f64) -> f64 {
    let r = encompassing_radius(obstacle);
    (obstacle.center_at(t) - state.position).norm_squared() - r * r
}

pub fn h_ho_raw(rel: &RelativeState, r: f64, gamma: f64) -> f64 {
    rel.position.dot(&rel.velocity) + gamma * tangent_length(rel.position.norm(), r)
}

fn relative_state(
    state: &QuadrotorState,
    obstacle: &Obstacle,
    params: &QuadrotorParams,
    t: f64,
) -> (RelativeState, f64) {
    let body = body_center_kinematics(state, params);
    let rel = RelativeState {
        position: obstacle.center_at(t) - body.position,
        velocity: obstacle.velocity - body.velocity,
    };
    (rel, encompassing_radius(obstacle))
}

pub fn h_ho(
    state: &QuadrotorState,
    obstacle: &Obstacle,
    params: &QuadrotorParams,
    config: &HocbfConfig,
    t: f64,
) -> f64 {
    let (rel, r) = relative_state(state, obstacle, params, t);
    h_ho_raw(&rel, r, config.gamma)
}

pub fn barrier_ho(
    state: &QuadrotorState,
    obstacle: &Obstacle,
    params: &QuadrotorParams,
    kappa: &ClassKappa,
    config: &HocbfConfig,
    t: f64,
) -> Result<(BarrierEvaluation, AffineSafetyConstraint)> {
    let body = body_center_kinematics(state, params);
    let p = obstacle.center_at(t) - body.position;
    let v = obstacle.velocity - body.velocity;
    let r = encompassing_radius(obstacle);
    let p_norm = p.norm();
    let s = tangent_length(p_norm, r);

    let h = p.dot(&v) + config.gamma * s;
    let radial_rate = if s > 0.0 {
        config.gamma * p.dot(&v) / s
    } else {
        0.0
    };
    let drift_term = v.norm_squared() + radial_rate - p.dot(&body.drift_acceleration);
    let input_row: Vec4 = -(body.input_acceleration.transpose() * p);

    let norm = input_row.norm();
    if !(norm > DEGENERATE_GRADIENT_NORM) {
        return Err(Error::DegenerateGradient {
            label: obstacle.label.clone(),
            norm,
        });
    }
    let eval = BarrierEvaluation {
        h,
        drift_term,
        input_row,
        cone_half_angle: cone_half_angle(p_norm, r),
        separation: p_norm - r,
        inside: p_norm <= r,
    };
    let constraint = eval.constraint(kappa, &obstacle.label);
    Ok((eval, constraint))
}

pub fn constraint_rows_ho(
    state: &QuadrotorState,
    obstacles: &[Obstacle],
    params: &QuadrotorParams,
    kappa: &ClassKappa,
    config: &HocbfConfig,
    t: f64,
) -> Result<Vec<AffineSafetyConstraint>> {
    obstacles
        .iter()
        .map(|o| barrier_ho(state, o, params, kappa, config, t).map(|(_, row)| row))
        .collect()
}

/// Half-angle of the cone implied by a constant penalty:
/// `acos((gamma / |v|) cos(phi))`.
pub fn effective_half_angle(v_rel_norm: f64, p_rel_norm: f64, r: f64, gamma: f64) -> Result<f64> {
    let cos_phi = tangent_length(p_rel_norm, r) / p_rel_norm;
    let ratio = gamma / v_rel_norm * cos_phi;
    if !(ratio <= 1.0) {
        return Err(Error::HalfAngleOutOfRange { ratio });
    }
    Ok(ratio.acos())
}

/// `(psi_1, psi_2)` of the second-order chain built on `b`, with
/// `alpha_1 = sqrt` and `alpha_2` linear:
///
/// ```text
/// psi_1 = b' + p sqrt(b)
/// psi_2 = psi_1' + alpha2 psi_1
/// ```
///
/// Positions are base positions, so this matches the single-barrier form
/// exactly only when the body-center offset is zero.
pub fn psi_chain(
    state: &QuadrotorState,
    input: &Vec4,
    obstacle: &Obstacle,
    params: &QuadrotorParams,
    penalty: f64,
    alpha2: f64,
    t: f64,
) -> (f64, f64) {
    let rot = crate::dynamics::rotation_matrix(&state.attitude);
    let p = obstacle.center_at(t) - state.position;
    let v = obstacle.velocity - state.velocity;
    let base_accel = nalgebra::Vector3::new(0.0, 0.0, -params.gravity)
        + rot.column(2) * (input.sum() / params.mass);
    let v_dot = -base_accel;

    let b = b_distance(state, obstacle, t);
    let b_dot = 2.0 * p.dot(&v);
    let b_ddot = 2.0 * v.norm_squared() + 2.0 * p.dot(&v_dot);
    let root_b = b.max(0.0).sqrt();
    let psi1 = b_dot + penalty * root_b;
    let psi1_dot = b_ddot
        + if root_b > 0.0 {
            penalty * b_dot / (2.0 * root_b)
        } else {
            0.0
        };
    (psi1, psi1_dot + alpha2 * psi1)
}
