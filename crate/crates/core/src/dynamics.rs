//! Rigid-body quadrotor model in control-affine form, `x' = f(x) + g(x) u`.
//!
//! The state is position, velocity, ZYX Euler angles (roll, pitch, yaw) and
//! body rates. Inputs are the four rotor thrusts in newtons. Rotors 1 and 3
//! produce the roll moment, rotors 2 and 4 the pitch moment, and the
//! alternating sum the yaw moment, all with lever arm `L`.

use nalgebra::{Matrix3, Matrix3x4, SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec4 = Vector4<f64>;
pub type StateVector = SVector<f64, 12>;
pub type ActuationMatrix = SMatrix<f64, 12, 4>;

const SINGULAR_COS_PITCH: f64 = 1e-9;

/// Default integration step, matching a 240 Hz physics rate.
pub const DEFAULT_DT: f64 = 1.0 / 240.0;

/// Per-rotor moment mixing: rows are body x, y, z moments divided by `L`.
pub const MOMENT_MIXING: [[f64; 4]; 3] = [
    [1.0, 0.0, -1.0, 0.0],
    [0.0, 1.0, 0.0, -1.0],
    [1.0, -1.0, 1.0, -1.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadrotorState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Roll, pitch, yaw in radians.
    pub attitude: Vec3,
    pub body_rates: Vec3,
}

impl QuadrotorState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }

    pub fn roll(&self) -> f64 {
        self.attitude.x
    }

    pub fn pitch(&self) -> f64 {
        self.attitude.y
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.position);
        x.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        x.fixed_rows_mut::<3>(6).copy_from(&self.attitude);
        x.fixed_rows_mut::<3>(9).copy_from(&self.body_rates);
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            position: x.fixed_rows::<3>(0).into_owned(),
            velocity: x.fixed_rows::<3>(3).into_owned(),
            attitude: x.fixed_rows::<3>(6).into_owned(),
            body_rates: x.fixed_rows::<3>(9).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    /// Checks finiteness and the small-angle regime `|roll|, |pitch| < pi/2`.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFiniteState);
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if self.roll().abs() >= half_pi || self.pitch().abs() >= half_pi {
            return Err(Error::AttitudeOutOfRange {
                roll: self.roll(),
                pitch: self.pitch(),
            });
        }
        Ok(())
    }
}

/// Physical constants of the vehicle. Defaults are the Crazyflie 2.x values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadrotorParams {
    /// kg
    pub mass: f64,
    /// Distance between opposite rotors, m. Used as the moment arm.
    pub arm_span: f64,
    /// Height of the body center above the base, m.
    pub center_offset: f64,
    /// Principal moments of inertia (Ixx, Iyy, Izz), kg m^2.
    pub inertia: Vec3,
    pub gravity: f64,
    /// Maximum vehicle width absorbed into obstacle radii, m.
    pub body_width: f64,
    pub thrust_const: f64,
    pub torque_const: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 0.027,
            arm_span: 0.130,
            center_offset: 0.014,
            inertia: Vec3::new(2.39e-5, 2.39e-5, 3.23e-5),
            gravity: 9.81,
            body_width: 0.13,
            thrust_const: 3.16e-10,
            torque_const: 7.94e-12,
        }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("mass", self.mass),
            ("arm_span", self.arm_span),
            ("center_offset", self.center_offset),
            ("inertia[0]", self.inertia.x),
            ("inertia[1]", self.inertia.y),
            ("inertia[2]", self.inertia.z),
            ("gravity", self.gravity),
            ("body_width", self.body_width),
            ("thrust_const", self.thrust_const),
            ("torque_const", self.torque_const),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "params.{name} must be strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Per-rotor thrust that balances gravity at level attitude.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity / 4.0
    }

    /// Angular acceleration produced by a unit thrust on each rotor, as the
    /// columns of `I^-1 L M`.
    pub fn moment_columns(&self) -> Matrix3x4<f64> {
        let mut cols = Matrix3x4::zeros();
        for (axis, row) in MOMENT_MIXING.iter().enumerate() {
            for (rotor, &sign) in row.iter().enumerate() {
                cols[(axis, rotor)] = sign * self.arm_span / self.inertia[axis];
            }
        }
        cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlInput(pub Vec4);

impl ControlInput {
    pub fn hover(params: &QuadrotorParams) -> Self {
        Self(Vec4::repeat(params.hover_thrust()))
    }

    pub fn thrusts(&self) -> &Vec4 {
        &self.0
    }
}

/// Body-to-inertial rotation `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rotation_matrix(attitude: &Vec3) -> Matrix3<f64> {
    let (sr, cr) = attitude.x.sin_cos();
    let (sp, cp) = attitude.y.sin_cos();
    let (sy, cy) = attitude.z.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// `W` maps Euler-angle rates to body rates; `inverse` maps back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerRateMatrix {
    pub forward: Matrix3<f64>,
    pub inverse: Matrix3<f64>,
}

pub fn euler_rate_matrix(attitude: &Vec3) -> Result<EulerRateMatrix> {
    let (sr, cr) = attitude.x.sin_cos();
    let (sp, cp) = attitude.y.sin_cos();
    if cp.abs() < SINGULAR_COS_PITCH {
        return Err(Error::SingularAttitude {
            cos_pitch: cp.abs(),
        });
    }
    let tp = sp / cp;
    let forward = Matrix3::new(1.0, 0.0, -sp, 0.0, cr, sr * cp, 0.0, -sr, cr * cp);
    let inverse = Matrix3::new(1.0, sr * tp, cr * tp, 0.0, cr, -sr, 0.0, sr / cp, cr / cp);
    Ok(EulerRateMatrix { forward, inverse })
}

/// Gyroscopic angular acceleration `-I^-1 (w x I w)`.
pub fn gyroscopic_acceleration(body_rates: &Vec3, params: &QuadrotorParams) -> Vec3 {
    let iw = params.inertia.component_mul(body_rates);
    -body_rates.cross(&iw).component_div(&params.inertia)
}

pub fn drift(state: &QuadrotorState, params: &QuadrotorParams) -> Result<StateVector> {
    let w = euler_rate_matrix(&state.attitude)?;
    let mut dx = StateVector::zeros();
    dx.fixed_rows_mut::<3>(0).copy_from(&state.velocity);
    dx[5] = -params.gravity;
    dx.fixed_rows_mut::<3>(6)
        .copy_from(&(w.inverse * state.body_rates));
    dx.fixed_rows_mut::<3>(9)
        .copy_from(&gyroscopic_acceleration(&state.body_rates, params));
    Ok(dx)
}

pub fn actuation(state: &QuadrotorState, params: &QuadrotorParams) -> ActuationMatrix {
    let mut g = ActuationMatrix::zeros();
    let thrust_axis = rotation_matrix(&state.attitude).column(2) / params.mass;
    for rotor in 0..4 {
        g.fixed_view_mut::<3, 1>(3, rotor).copy_from(&thrust_axis);
    }
    g.fixed_view_mut::<3, 4>(9, 0)
        .copy_from(&params.moment_columns());
    g
}

pub fn state_derivative(
    state: &QuadrotorState,
    input: &ControlInput,
    params: &QuadrotorParams,
) -> Result<StateVector> {
    Ok(drift(state, params)? + actuation(state, params) * input.0)
}

/// One classical RK4 step with the input held constant.
pub fn step(
    state: &QuadrotorState,
    input: &ControlInput,
    dt: f64,
    params: &QuadrotorParams,
) -> Result<QuadrotorState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let x0 = state.to_vector();
    let f = |x: &StateVector| state_derivative(&QuadrotorState::from_vector(x), input, params);
    let k1 = f(&x0)?;
    let k2 = f(&(x0 + k1 * (dt / 2.0)))?;
    let k3 = f(&(x0 + k2 * (dt / 2.0)))?;
    let k4 = f(&(x0 + k3 * dt))?;
    let x1 = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let next = QuadrotorState::from_vector(&x1);
    next.validate()?;
    Ok(next)
}
