//! Rigid-body quadrotor with first-order rotor lag.
//!
//! Translational and rotational dynamics are integrated with RK4 while the
//! rotor thrusts are held over the substep; rotor speeds use the exact
//! exponential solution of their first-order model. Collective thrust and
//! body-rate commands (CTBR) go through a proportional rate loop and the
//! inverse of the X-configuration mixer.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::GRAVITY;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("numerical divergence: non-finite state component")]
    NumericalDivergence,
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadState {
    pub p: Vector3<f64>,
    /// World-from-body rotation, kept at unit norm.
    pub q: Quaternion<f64>,
    pub v: Vector3<f64>,
    /// Body rates.
    pub w: Vector3<f64>,
    /// Rotor speeds (rad/s).
    pub rotors: [f64; 4],
}

impl QuadState {
    pub const DIM: usize = 17;

    pub fn at_rest(p: Vector3<f64>, yaw: f64, rotor_speed: f64) -> Self {
        let q = *UnitQuaternion::from_euler_angles(0.0, 0.0, yaw).quaternion();
        Self { p, q, v: Vector3::zeros(), w: Vector3::zeros(), rotors: [rotor_speed; 4] }
    }

    pub fn attitude(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::new_normalize(self.q)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.attitude().to_rotation_matrix().into_inner()
    }

    /// Heading angle (rotation about world z) in `[-pi, pi]`.
    pub fn yaw(&self) -> f64 {
        let q = self.q;
        (2.0 * (q.w * q.k + q.i * q.j)).atan2(1.0 - 2.0 * (q.j * q.j + q.k * q.k))
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).chain(self.w.iter()).all(|x| x.is_finite())
            && self.q.coords.iter().all(|x| x.is_finite())
            && self.rotors.iter().all(|x| x.is_finite())
    }

    /// `[p, q(w, x, y, z), v, w, rotors]`.
    pub fn to_array(&self) -> [f64; Self::DIM] {
        let q = self.q;
        [
            self.p.x,
            self.p.y,
            self.p.z,
            q.w,
            q.i,
            q.j,
            q.k,
            self.v.x,
            self.v.y,
            self.v.z,
            self.w.x,
            self.w.y,
            self.w.z,
            self.rotors[0],
            self.rotors[1],
            self.rotors[2],
            self.rotors[3],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadParams {
    pub mass: f64,
    /// Diagonal of the inertia matrix.
    pub inertia: Vector3<f64>,
    /// Center-to-rotor distance.
    pub arm_length: f64,
    /// Yaw torque per unit thrust (m).
    pub torque_const: f64,
    /// Thrust per squared rotor speed (N s^2).
    pub thrust_coef: f64,
    pub motor_time_const: f64,
    /// Linear body-frame drag (N s/m).
    pub drag: Vector3<f64>,
    pub gravity: Vector3<f64>,
    pub rotor_speed_max: f64,
    /// Rate-loop bandwidth per axis (1/s); torque gain is this times inertia.
    pub rate_bandwidth: Vector3<f64>,
}

impl Default for QuadParams {
    fn default() -> Self {
        let mass = 1.2;
        let rotor_speed_max = 1500.0;
        let hover_speed = 0.5 * rotor_speed_max;
        Self {
            mass,
            inertia: Vector3::new(0.01, 0.01, 0.017),
            arm_length: 0.15,
            torque_const: 0.016,
            thrust_coef: mass * GRAVITY / (4.0 * hover_speed * hover_speed),
            motor_time_const: 0.05,
            drag: Vector3::zeros(),
            gravity: Vector3::new(0.0, 0.0, -GRAVITY),
            rotor_speed_max,
            rate_bandwidth: Vector3::new(8.0, 8.0, 3.0),
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.mass > 0.0) {
            return Err(SimError::InvalidParams("mass must be positive"));
        }
        if !self.inertia.iter().all(|&j| j > 0.0) {
            return Err(SimError::InvalidParams("inertia entries must be positive"));
        }
        if !(self.thrust_coef > 0.0) {
            return Err(SimError::InvalidParams("thrust coefficient must be positive"));
        }
        if !(self.motor_time_const > 0.0) {
            return Err(SimError::InvalidParams("motor time constant must be positive"));
        }
        if !(self.arm_length > 0.0 && self.torque_const > 0.0 && self.rotor_speed_max > 0.0) {
            return Err(SimError::InvalidParams("arm length, torque constant and max rotor speed must be positive"));
        }
        Ok(())
    }

    pub fn max_motor_thrust(&self) -> f64 {
        self.thrust_coef * self.rotor_speed_max * self.rotor_speed_max
    }

    /// Rotor speed at which four equal rotors carry the vehicle weight.
    pub fn hover_rotor_speed(&self) -> f64 {
        (self.mass * self.gravity.norm() / (4.0 * self.thrust_coef)).sqrt()
    }
}

/// Mass-normalized collective thrust (m/s^2) and commanded body rates (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtbrAction {
    pub thrust: f64,
    pub rates: Vector3<f64>,
}

impl CtbrAction {
    pub fn new(thrust: f64, rates: Vector3<f64>) -> Self {
        Self { thrust, rates }
    }

    pub fn hover() -> Self {
        Self { thrust: GRAVITY, rates: Vector3::zeros() }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.thrust, self.rates.x, self.rates.y, self.rates.z]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionBounds {
    pub thrust_max: f64,
    pub rate_max: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self { thrust_max: 2.0 * GRAVITY, rate_max: 6.0 }
    }
}

impl ActionBounds {
    pub fn clamp(&self, a: &CtbrAction) -> CtbrAction {
        let thrust = if a.thrust.is_nan() { 0.0 } else { a.thrust.clamp(0.0, self.thrust_max) };
        let rates = a.rates.map(|r| if r.is_nan() { 0.0 } else { r.clamp(-self.rate_max, self.rate_max) });
        CtbrAction { thrust, rates }
    }

    /// Maps `u in [-1, 1]^4` (clamped) onto the action box; `u = 0` is the
    /// mid-range thrust with zero rates.
    pub fn from_normalized(&self, u: &[f64]) -> CtbrAction {
        let c = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
        CtbrAction { thrust: 0.5 * self.thrust_max * (1.0 + c(u[0])), rates: Vector3::new(c(u[1]), c(u[2]), c(u[3])) * self.rate_max }
    }
}

/// `f_i = c_f * Omega_i^2`.
pub fn motor_thrusts(rotors: &[f64; 4], thrust_coef: f64) -> [f64; 4] {
    rotors.map(|w| thrust_coef * w * w)
}

/// Exact solution of `dOmega/dt = (Omega_c - Omega) / k_mot` over `dt`, clamped.
pub fn motor_step(rotors: &[f64; 4], commanded: &[f64; 4], dt: f64, params: &QuadParams) -> [f64; 4] {
    let decay = (-dt / params.motor_time_const).exp();
    std::array::from_fn(|i| (commanded[i] + (rotors[i] - commanded[i]) * decay).clamp(0.0, params.rotor_speed_max))
}

/// Collective thrust and body torque produced by four rotor thrusts.
pub fn body_wrench(thrusts: &[f64; 4], params: &QuadParams) -> (f64, Vector3<f64>) {
    let [f1, f2, f3, f4] = *thrusts;
    let d = params.arm_length / std::f64::consts::SQRT_2;
    let k = params.torque_const;
    (f1 + f2 + f3 + f4, Vector3::new(d * (f1 - f2 - f3 + f4), d * (-f1 - f2 + f3 + f4), k * (f1 - f2 + f3 - f4)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub thrusts: [f64; 4],
    pub rotor_cmd: [f64; 4],
    pub saturated: bool,
}

/// Inverse of [`body_wrench`], clamped to `[0, f_max]` per rotor.
///
/// The mixer columns are mutually orthogonal, so the inverse is a scaled
/// transpose.
pub fn allocate(collective: f64, torque: &Vector3<f64>, params: &QuadParams) -> Allocation {
    let d = params.arm_length / std::f64::consts::SQRT_2;
    let tx = torque.x / d;
    let ty = torque.y / d;
    let tz = torque.z / params.torque_const;
    let raw = [
        0.25 * (collective + tx - ty + tz),
        0.25 * (collective - tx - ty - tz),
        0.25 * (collective - tx + ty + tz),
        0.25 * (collective + tx + ty - tz),
    ];
    let f_max = params.max_motor_thrust();
    let mut saturated = false;
    let thrusts = raw.map(|f| {
        let c = f.clamp(0.0, f_max);
        saturated |= c != f;
        c
    });
    let rotor_cmd = thrusts.map(|f| (f / params.thrust_coef).sqrt());
    Allocation { thrusts, rotor_cmd, saturated }
}

/// Proportional body-rate loop: `tau = K (w_cmd - w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateController {
    /// Torque per rad/s of rate error.
    pub gains: Vector3<f64>,
}

impl RateController {
    pub fn new(gains: Vector3<f64>) -> Self {
        Self { gains }
    }

    pub fn from_params(params: &QuadParams) -> Self {
        Self { gains: params.rate_bandwidth.component_mul(&params.inertia) }
    }

    pub fn torque(&self, commanded: &Vector3<f64>, rates: &Vector3<f64>) -> Vector3<f64> {
        self.gains.component_mul(&(commanded - rates))
    }
}

/// Free-function form of [`RateController::torque`] with gains from `params`.
pub fn rate_controller(commanded: &Vector3<f64>, rates: &Vector3<f64>, params: &QuadParams) -> Vector3<f64> {
    RateController::from_params(params).torque(commanded, rates)
}

/// Time derivative of the rigid-body part of the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidDerivative {
    pub dp: Vector3<f64>,
    pub dq: Quaternion<f64>,
    pub dv: Vector3<f64>,
    pub dw: Vector3<f64>,
}

pub fn derivative(s: &QuadState, thrusts: &[f64; 4], params: &QuadParams) -> RigidDerivative {
    let (collective, torque) = body_wrench(thrusts, params);
    let rot = s.rotation();
    let drag = -params.drag.component_mul(&(rot.transpose() * s.v));
    let body_force = Vector3::new(0.0, 0.0, collective) + drag;
    let dv = rot * body_force / params.mass + params.gravity;
    let dq = s.q * Quaternion::from_parts(0.0, s.w) * 0.5;
    let jw = params.inertia.component_mul(&s.w);
    let dw = (torque - s.w.cross(&jw)).component_div(&params.inertia);
    RigidDerivative { dp: s.v, dq, dv, dw }
}

fn advance(s: &QuadState, d: &RigidDerivative, h: f64) -> QuadState {
    QuadState { p: s.p + d.dp * h, q: s.q + d.dq * h, v: s.v + d.dv * h, w: s.w + d.dw * h, rotors: s.rotors }
}

/// One classical RK4 step of the rigid body with fixed rotor thrusts.
pub fn rk4_rigid(s: &QuadState, thrusts: &[f64; 4], params: &QuadParams, dt: f64) -> QuadState {
    let k1 = derivative(s, thrusts, params);
    let k2 = derivative(&advance(s, &k1, 0.5 * dt), thrusts, params);
    let k3 = derivative(&advance(s, &k2, 0.5 * dt), thrusts, params);
    let k4 = derivative(&advance(s, &k3, dt), thrusts, params);
    let w = dt / 6.0;
    QuadState {
        p: s.p + (k1.dp + k2.dp * 2.0 + k3.dp * 2.0 + k4.dp) * w,
        q: s.q + (k1.dq + k2.dq * 2.0 + k3.dq * 2.0 + k4.dq) * w,
        v: s.v + (k1.dv + k2.dv * 2.0 + k3.dv * 2.0 + k4.dv) * w,
        w: s.w + (k1.dw + k2.dw * 2.0 + k3.dw * 2.0 + k4.dw) * w,
        rotors: s.rotors,
    }
}

/// Per-substep diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub saturated: bool,
}

/// Plant parameters plus the nominal model the onboard controller believes in.
///
/// Domain randomization perturbs `plant` only, so commands computed from
/// `nominal` are subject to model mismatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrotor {
    pub plant: QuadParams,
    pub nominal: QuadParams,
    pub rate: RateController,
}

impl Quadrotor {
    pub fn new(params: QuadParams) -> Self {
        Self { plant: params, nominal: params, rate: RateController::from_params(&params) }
    }

    /// Rate loop and mixer: CTBR command to commanded rotor speeds.
    pub fn command(&self, s: &QuadState, action: &CtbrAction) -> Allocation {
        let torque = self.rate.torque(&action.rates, &s.w);
        allocate(self.nominal.mass * action.thrust, &torque, &self.nominal)
    }

    /// Advances `s` by `dt`; `action` must already be within bounds.
    pub fn integrate_step(&self, s: &QuadState, action: &CtbrAction, dt: f64) -> Result<(QuadState, StepInfo), SimError> {
        let alloc = self.command(s, action);
        let thrusts = motor_thrusts(&s.rotors, self.plant.thrust_coef);
        let mut next = rk4_rigid(s, &thrusts, &self.plant, dt);
        next.rotors = motor_step(&s.rotors, &alloc.rotor_cmd, dt, &self.plant);
        next.q = next.q.normalize();
        if !next.is_finite() {
            return Err(SimError::NumericalDivergence);
        }
        Ok((next, StepInfo { saturated: alloc.saturated }))
    }
}

/// Single substep with a controller built from `params` (plant = nominal).
pub fn integrate_step(s: &QuadState, action: &CtbrAction, dt: f64, params: &QuadParams) -> Result<QuadState, SimError> {
    Quadrotor::new(*params).integrate_step(s, action, dt).map(|(s, _)| s)
}
