//! Collision-cone control barrier functions.
//!
//! For a relative position `p` (obstacle center minus vehicle body center),
//! relative velocity `v = p'` and inflated radius `r`,
//!
//! ```text
//! h = <p, v> + sqrt(|p|^2 - r^2) |v|
//! ```
//!
//! is non-negative exactly when `v` points outside the cone of directions
//! that lead into the inflated obstacle. Spheres use `p` directly; cylinders
//! use `p` and `v` projected onto the plane normal to the cylinder axis.
//!
//! The vehicle enters through the body-center acceleration,
//! `v' = -(a_drift + B u)`, where `B` collects the thrust direction and the
//! angular-acceleration lever acting on the body-center offset.

use nalgebra::{Matrix3, Matrix3x4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    gyroscopic_acceleration, rotation_matrix, QuadrotorParams, QuadrotorState, Vec3, Vec4,
};
use crate::error::{Error, Result};
use crate::qp::{AffineSafetyConstraint, ClassKappa, DEGENERATE_GRADIENT_NORM};

/// Floor applied to `|v_rel|` wherever it appears as a divisor, m/s.
pub const VELOCITY_REGULARIZATION: f64 = 1e-6;
const AXIS_UNIT_TOL: f64 = 1e-12;
const AXIS_ORTHOGONAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Shape {
    Sphere {
        radius: f64,
    },
    /// `height` is the largest obstacle dimension; it does not enter the
    /// barrier, which treats the cylinder as infinitely long.
    Cylinder {
        radius: f64,
        axis: Vec3,
        height: f64,
    },
}

impl Shape {
    /// Sphere enclosing an obstacle with dimensions `c1, c2, c3`.
    pub fn enclosing_sphere(dims: [f64; 3]) -> Self {
        Shape::Sphere {
            radius: dims.iter().copied().fold(f64::MIN, f64::max),
        }
    }

    /// Cylinder around an elongated obstacle: the largest dimension is the
    /// height, the second largest the radius.
    pub fn enclosing_cylinder(dims: [f64; 3], axis: Vec3) -> Self {
        let mut sorted = dims;
        sorted.sort_by(|a, b| b.total_cmp(a));
        Shape::Cylinder {
            radius: sorted[1],
            axis,
            height: sorted[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub label: String,
    pub shape: Shape,
    /// Center at t = 0.
    pub center: Vec3,
    #[serde(default)]
    pub velocity: Vec3,
}

impl Obstacle {
    pub fn sphere(label: impl Into<String>, radius: f64, center: Vec3, velocity: Vec3) -> Self {
        Self {
            label: label.into(),
            shape: Shape::Sphere { radius },
            center,
            velocity,
        }
    }

    pub fn cylinder(
        label: impl Into<String>,
        radius: f64,
        axis: Vec3,
        height: f64,
        center: Vec3,
        velocity: Vec3,
    ) -> Self {
        Self {
            label: label.into(),
            shape: Shape::Cylinder {
                radius,
                axis,
                height,
            },
            center,
            velocity,
        }
    }

    pub fn center_at(&self, t: f64) -> Vec3 {
        self.center + self.velocity * t
    }

    pub fn raw_radius(&self) -> f64 {
        match self.shape {
            Shape::Sphere { radius } | Shape::Cylinder { radius, .. } => radius,
        }
    }

    /// Obstacle radius grown by half the vehicle width.
    pub fn inflated_radius(&self, params: &QuadrotorParams) -> f64 {
        self.raw_radius() + params.body_width / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidObstacle {
            label: self.label.clone(),
            reason,
        };
        if !(self
            .center
            .iter()
            .chain(self.velocity.iter())
            .all(|v| v.is_finite()))
        {
            return Err(invalid("center and velocity must be finite".into()));
        }
        match &self.shape {
            Shape::Sphere { radius } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(invalid(format!("radius must be positive, got {radius}")));
                }
            }
            Shape::Cylinder {
                radius,
                axis,
                height,
            } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(invalid(format!("radius must be positive, got {radius}")));
                }
                if !(*height > 0.0 && height.is_finite()) {
                    return Err(invalid(format!("height must be positive, got {height}")));
                }
                if (axis.norm() - 1.0).abs() > AXIS_UNIT_TOL {
                    return Err(invalid(format!(
                        "axis must be a unit vector, |axis| = {}",
                        axis.norm()
                    )));
                }
                if axis.dot(&self.velocity).abs() > AXIS_ORTHOGONAL_TOL {
                    return Err(invalid(
                        "cylinder velocity must be perpendicular to its axis".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeState {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Position, velocity and input-affine acceleration of the body center,
/// which sits `l` above the base along the body z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyCenterKinematics {
    pub position: Vec3,
    pub velocity: Vec3,
    pub drift_acceleration: Vec3,
    /// Column k is the body-center acceleration per newton on rotor k.
    pub input_acceleration: Matrix3x4<f64>,
}

pub fn body_center_kinematics(
    state: &QuadrotorState,
    params: &QuadrotorParams,
) -> BodyCenterKinematics {
    let rot = rotation_matrix(&state.attitude);
    let l = params.center_offset;
    let e3 = Vec3::z();
    let w = state.body_rates;
    let omega_dot_drift = gyroscopic_acceleration(&w, params);

    let drift_acceleration = Vec3::new(0.0, 0.0, -params.gravity)
        + rot * (w.cross(&w.cross(&e3)) * l)
        + rot * (omega_dot_drift.cross(&e3) * l);

    let moments = params.moment_columns();
    let mut per_rotor = Matrix3x4::zeros();
    for k in 0..4 {
        let omega_dot: Vec3 = moments.column(k).into_owned();
        let column = omega_dot.cross(&e3) * l + e3 / params.mass;
        per_rotor.set_column(k, &column);
    }

    BodyCenterKinematics {
        position: state.position + rot * (e3 * l),
        velocity: state.velocity + rot * (w.cross(&e3) * l),
        drift_acceleration,
        input_acceleration: rot * per_rotor,
    }
}

/// Relative state of the obstacle center with respect to the body center.
pub fn relative_state_sphere(
    state: &QuadrotorState,
    obstacle: &Obstacle,
    params: &QuadrotorParams,
    t: f64,
) -> RelativeState {
    let body = body_center_kinematics(state, params);
    RelativeState {
        position: obstacle.center_at(t) - body.position,
        velocity: obstacle.velocity - body.velocity,
    }
}

/// `I - n n^T`.
pub fn projection_operator(axis: &Vec3) -> Matrix3<f64> {
    Matrix3::identity() - axis * axis.transpose()
}

pub fn relative_state_projected(
    state: &QuadrotorState,
    obstacle: &Obstacle,
    params: &QuadrotorParams,
    t: f64,
) -> Result<RelativeState> {
    let Shape::Cylinder { axis, .. } = &obstacle.shape else {
        return Err(Error::InvalidObstacle {
            label: obstacle.label.clone(),
            reason: "projection barrier requires a cylinder".into(),
        });
    };
    let proj = projection_operator(axis);
    let rel = relative_state_sphere(state, obstacle, params, t);
    Ok(RelativeState {
        position: proj * rel.position,
        velocity: proj * rel.velocity,
    })
}

/// `sqrt(max(|p|^2 - r^2, 0))`.
pub fn tangent_length(p_norm: f64, r: f64) -> f64 {
    (p_norm * p_norm - r * r).max(0.0).sqrt()
}

pub fn h_cone(p_rel: &Vec3, v_rel: &Vec3, r: f64) -> f64 {
    p_rel.dot(v_rel) + tangent_length(p_rel.norm(), r) * v_rel.norm()
}

/// Cone half-angle `acos(sqrt(|p|^2 - r^2) / |p|)`.
pub fn cone_half_angle(p_norm: f64, r: f64) -> f64 {
    if p_norm <= 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    (tangent_length(p_norm, r) / p_norm).clamp(0.0, 1.0).acos()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierEvaluation {
    pub h: f64,
    /// `L_f h + dh/dt`.
    pub drift_term: f64,
    /// `L_g h`.
    pub input_row: Vec4,
    pub cone_half_angle: f64,
    /// `|p_rel| - r` (projected for cylinders), m.
    pub separation: f64,
    /// Set when the body center is inside the inflated obstacle and the
    /// tangent length was clamped to zero.
    pub inside: bool,
}

impl BarrierEvaluation {
    pub fn constraint(&self, kappa: &ClassKappa, label: &str) -> AffineSafetyConstraint {
        AffineSafetyConstraint::new(self.input_row, self.drift_term + kappa.eval(self.h), label)
    }

    /// `h' = drift_term + input_row . u`.
    pub fn rate(&self, u: &Vec4) -> f64 {
        self.drift_term + self.input_row.dot(u)
    }
}

/// Barrier value and its Lie derivatives for a relative state whose
/// acceleration is `-(drift_acceleration + input_acceleration u)`, with the
/// acceleration optionally seen through a projection (the projected `q` is
/// orthogonal to the axis so the projection drops out of the inner product).
fn cone_barrier(rel: &RelativeState, r: f64, body: &BodyCenterKinematics) -> BarrierEvaluation {
    let p = rel.position;
    let v = rel.velocity;
    let p_norm = p.norm();
    let v_norm = v.norm();
    let inside = p_norm <= r;
    let s = tangent_length(p_norm, r);

    let h = p.dot(&v) + s * v_norm;
    let q = p + v * (s / v_norm.max(VELOCITY_REGULARIZATION));
    let radial_rate = if s > 0.0 { p.dot(&v) * v_norm / s } else { 0.0 };
    let drift_term = v.norm_squared() + radial_rate - q.dot(&body.drift_acceleration);
    let input_row = -(body.input_acceleration.transpose() * q);

    BarrierEvaluation {
        h,
        drift_term,
        input_row,
        cone_half_angle: cone_half_angle(p_norm, r),
        separation: p_norm - r,
        inside,
    }
}

fn finish(
    eval: BarrierEvaluation,
    obstacle: &Obstacle,
    kappa: &ClassKappa,
) -> Result<(BarrierEvaluation, AffineSafetyConstraint)> {
    let norm = eval.input_row.norm();
    if !(norm > DEGENERATE_GRADIENT_NORM) {
        return Err(Error::DegenerateGradient {
            label: obstacle.label.clone(),
            norm,
        });
    }
    let constraint = eval.constraint(kappa, &obstacle.label);
    Ok((eval, constraint))
}

pub fn barrier_3d(
    state: &QuadrotorState,
    obstacle: &Obstacle,
    params: &QuadrotorParams,
    kappa: &ClassKappa,
    t: f64,
) -> Result<(BarrierEvaluation, AffineSafetyConstraint)> {
    if !matches!(obstacle.shape, Shape::Sphere { .. }) {
        return Err(Error::InvalidObstacle {
            label: obstacle.label.clone(),
            reason: "3D barrier requires a sphere".into(),
        });
    }
    let body = body_center_kinematics(state, params);
    let rel = RelativeState {
        position: obstacle.center_at(t) - body.position,
        velocity: obstacle.velocity - body.velocity,
    };
    let eval = cone_barrier(&rel, obstacle.inflated_radius(params), &body);
    finish(eval, obstacle, kappa)
}

pub fn barrier_projection(
    state: &QuadrotorState,
    obstacle: &Obstacle,
    params: &QuadrotorParams,
    kappa: &ClassKappa,
    t: f64,
) -> Result<(BarrierEvaluation, AffineSafetyConstraint)> {
    let Shape::Cylinder { axis, .. } = &obstacle.shape else {
        return Err(Error::InvalidObstacle {
            label: obstacle.label.clone(),
            reason: "projection barrier requires a cylinder".into(),
        });
    };
    let proj = projection_operator(axis);
    let body = body_center_kinematics(state, params);
    let rel = RelativeState {
        position: proj * (obstacle.center_at(t) - body.position),
        velocity: proj * (obstacle.velocity - body.velocity),
    };
    let eval = cone_barrier(&rel, obstacle.inflated_radius(params), &body);
    finish(eval, obstacle, kappa)
}

/// Dispatches on shape: spheres to the 3D barrier, cylinders to the
/// projection barrier.
pub fn barrier(
    state: &QuadrotorState,
    obstacle: &Obstacle,
    params: &QuadrotorParams,
    kappa: &ClassKappa,
    t: f64,
) -> Result<(BarrierEvaluation, AffineSafetyConstraint)> {
    match obstacle.shape {
        Shape::Sphere { .. } => barrier_3d(state, obstacle, params, kappa, t),
        Shape::Cylinder { .. } => barrier_projection(state, obstacle, params, kappa, t),
    }
}

pub fn constraint_rows(
    state: &QuadrotorState,
    obstacles: &[Obstacle],
    params: &QuadrotorParams,
    kappa: &ClassKappa,
    t: f64,
) -> Result<Vec<AffineSafetyConstraint>> {
    obstacles
        .iter()
        .map(|o| barrier(state, o, params, kappa, t).map(|(_, row)| row))
        .collect()
}
