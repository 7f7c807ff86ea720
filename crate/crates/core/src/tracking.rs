//! PD trajectory tracker producing the nominal thrusts `u_des`.
//!
//! Position errors become a commanded acceleration, which is converted to
//! small-angle roll/pitch targets, tracked by an attitude PD loop and finally
//! allocated to the four rotors. Yaw is left uncontrolled.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, QuadrotorParams, QuadrotorState, Vec3, Vec4};
use crate::error::{Error, Result};

pub const DEFAULT_THRUST_GUARD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReferenceSample {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceTrajectory {
    Hover {
        position: Vec3,
    },
    /// Starts at `start` at t = 0 and moves with constant `velocity`.
    Line {
        start: Vec3,
        velocity: Vec3,
    },
    /// Visits each waypoint in turn at constant `speed`, then holds the last.
    Waypoints {
        points: Vec<Vec3>,
        speed: f64,
    },
}

impl ReferenceTrajectory {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Hover { .. } | Self::Line { .. } => Ok(()),
            Self::Waypoints { points, speed } => {
                if points.is_empty() {
                    return Err(Error::InvalidConfig(
                        "reference.points must not be empty".into(),
                    ));
                }
                if !(*speed > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "reference.speed must be positive, got {speed}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn sample(&self, t: f64) -> ReferenceSample {
        match self {
            Self::Hover { position } => ReferenceSample {
                position: *position,
                ..Default::default()
            },
            Self::Line { start, velocity } => ReferenceSample {
                position: start + velocity * t,
                velocity: *velocity,
                acceleration: Vec3::zeros(),
            },
            Self::Waypoints { points, speed } => {
                let mut remaining = t.max(0.0) * speed;
                for pair in points.windows(2) {
                    let delta = pair[1] - pair[0];
                    let length = delta.norm();
                    if length == 0.0 {
                        continue;
                    }
                    if remaining < length {
                        let dir = delta / length;
                        return ReferenceSample {
                            position: pair[0] + dir * remaining,
                            velocity: dir * *speed,
                            acceleration: Vec3::zeros(),
                        };
                    }
                    remaining -= length;
                }
                ReferenceSample {
                    position: *points.last().expect("validated non-empty"),
                    ..Default::default()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerGains {
    pub position_kp: Vec3,
    pub position_kd: Vec3,
    pub roll_kp: f64,
    pub pitch_kp: f64,
    pub roll_kd: f64,
    pub pitch_kd: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            position_kp: Vec3::repeat(4.0),
            position_kd: Vec3::repeat(3.0),
            roll_kp: 70.0,
            pitch_kp: 70.0,
            roll_kd: 16.0,
            pitch_kd: 16.0,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        let attitude = [self.roll_kp, self.pitch_kp, self.roll_kd, self.pitch_kd];
        let mut all = self
            .position_kp
            .iter()
            .chain(self.position_kd.iter())
            .chain(attitude.iter());
        if all.all(|g| g.is_finite() && *g >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig("gains must be non-negative".into()))
        }
    }
}

pub fn commanded_acceleration(
    state: &QuadrotorState,
    reference: &ReferenceSample,
    gains: &ControllerGains,
) -> Vec3 {
    reference.acceleration
        + gains
            .position_kd
            .component_mul(&(reference.velocity - state.velocity))
        + gains
            .position_kp
            .component_mul(&(reference.position - state.position))
}

/// Small-angle roll/pitch targets for a commanded acceleration.
pub fn attitude_targets(accel_cmd: &Vec3, gravity: f64, guard: f64) -> Result<(f64, f64)> {
    let denominator = gravity + accel_cmd.z;
    if !(denominator > guard) {
        return Err(Error::DegenerateThrust {
            denominator,
            threshold: guard,
        });
    }
    Ok((-accel_cmd.y / denominator, accel_cmd.x / denominator))
}

/// Roll and pitch angular-acceleration commands. Target rates are zero and
/// the body rates stand in for the Euler-angle rates.
pub fn attitude_pd(
    state: &QuadrotorState,
    roll_target: f64,
    pitch_target: f64,
    gains: &ControllerGains,
) -> (f64, f64) {
    let roll_acc =
        gains.roll_kd * (0.0 - state.body_rates.x) + gains.roll_kp * (roll_target - state.roll());
    let pitch_acc = gains.pitch_kd * (0.0 - state.body_rates.y)
        + gains.pitch_kp * (pitch_target - state.pitch());
    (roll_acc, pitch_acc)
}

/// Rows: total thrust, roll moment / L, pitch moment / L, yaw moment / L.
pub fn allocation_matrix() -> Matrix4<f64> {
    Matrix4::new(
        1.0, 1.0, 1.0, 1.0, //
        1.0, 0.0, -1.0, 0.0, //
        0.0, 1.0, 0.0, -1.0, //
        1.0, -1.0, 1.0, -1.0,
    )
}

fn allocation_inverse() -> Matrix4<f64> {
    Matrix4::new(
        0.25, 0.5, 0.0, 0.25, //
        0.25, 0.0, 0.5, -0.25, //
        0.25, -0.5, 0.0, 0.25, //
        0.25, 0.0, -0.5, -0.25,
    )
}

pub fn mixer(
    accel_cmd: &Vec3,
    roll_acc: f64,
    pitch_acc: f64,
    params: &QuadrotorParams,
) -> ControlInput {
    let vertical = params.gravity + accel_cmd.z;
    let total = params.mass
        * (accel_cmd.x * accel_cmd.x + accel_cmd.y * accel_cmd.y + vertical * vertical).sqrt();
    let rhs = Vec4::new(
        total,
        params.inertia.x * roll_acc / params.arm_span,
        params.inertia.y * pitch_acc / params.arm_span,
        0.0,
    );
    ControlInput(allocation_inverse() * rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingController {
    pub gains: ControllerGains,
    /// Minimum admissible `g + z_acc`, m/s^2.
    pub thrust_guard: f64,
}

impl Default for TrackingController {
    fn default() -> Self {
        Self {
            gains: ControllerGains::default(),
            thrust_guard: DEFAULT_THRUST_GUARD,
        }
    }
}

impl TrackingController {
    pub fn new(gains: ControllerGains) -> Self {
        Self {
            gains,
            ..Self::default()
        }
    }

    pub fn track(
        &self,
        state: &QuadrotorState,
        reference: &ReferenceTrajectory,
        params: &QuadrotorParams,
        t: f64,
    ) -> Result<ControlInput> {
        self.track_sample(state, &reference.sample(t), params)
    }

    pub fn track_sample(
        &self,
        state: &QuadrotorState,
        reference: &ReferenceSample,
        params: &QuadrotorParams,
    ) -> Result<ControlInput> {
        let accel = commanded_acceleration(state, reference, &self.gains);
        let (roll_d, pitch_d) = attitude_targets(&accel, params.gravity, self.thrust_guard)?;
        let (roll_acc, pitch_acc) = attitude_pd(state, roll_d, pitch_d, &self.gains);
        Ok(mixer(&accel, roll_acc, pitch_acc, params))
    }
}
