//! Rigid-body quadcopter dynamics with the identified thrust/drag and
//! moment models and a first-order rotor lag.
//!
//! Frames: world z points down, body x forward, body z down. Attitude uses
//! ZYX (yaw-pitch-roll) Euler angles and `R` maps body vectors into the
//! world frame.

use nalgebra::{Matrix3, Vector3};

use super::params::ModelParams;
use super::state::{idx, ControlInput, ExternalMoment, VehicleState, CONTROL_DIM, STATE_DIM};
use crate::ad::Real;
use crate::error::{Error, Result};

/// Pitch must stay this far from ±π/2 for the Euler kinematics to be valid.
pub const GIMBAL_MARGIN: f64 = 1e-3;

/// Rotor sign patterns of the roll, pitch and yaw moment terms.
pub const ROLL_SIGNS: [f64; 4] = [1.0, -1.0, -1.0, 1.0];
pub const PITCH_SIGNS: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
pub const YAW_SIGNS: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];

pub(crate) fn rotation_generic<S: Real>(euler: [S; 3]) -> [[S; 3]; 3] {
    let (sf, cf) = euler[0].sin_cos();
    let (st, ct) = euler[1].sin_cos();
    let (sp, cp) = euler[2].sin_cos();
    [
        [ct * cp, sf * st * cp - cf * sp, cf * st * cp + sf * sp],
        [ct * sp, sf * st * sp + cf * cp, cf * st * sp - sf * cp],
        [-st, sf * ct, cf * ct],
    ]
}

#[inline]
fn mat_vec<S: Real>(m: &[[S; 3]; 3], v: [S; 3]) -> [S; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

#[inline]
fn mat_t_vec<S: Real>(m: &[[S; 3]; 3], v: [S; 3]) -> [S; 3] {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub(crate) fn body_force_generic<S: Real>(v_body: [S; 3], rotors: &[S; 4], p: &ModelParams) -> [S; 3] {
    let sum = rotors[0] + rotors[1] + rotors[2] + rotors[3];
    let sum_sq = rotors[0].square() + rotors[1].square() + rotors[2].square() + rotors[3].square();
    [
        -(v_body[0] * sum) * p.kx,
        -(v_body[1] * sum) * p.ky,
        -(sum_sq * p.kw) - v_body[2] * sum * p.kz - (v_body[0].square() + v_body[1].square()) * p.kh,
    ]
}

fn signed_sum<S: Real>(signs: &[f64; 4], vals: &[S; 4]) -> S {
    vals[0] * signs[0] + vals[1] * signs[1] + vals[2] * signs[2] + vals[3] * signs[3]
}

pub(crate) fn body_moment_generic<S: Real>(
    v_body: [S; 3],
    yaw_rate: S,
    rotors: &[S; 4],
    rotor_accel: &[S; 4],
    p: &ModelParams,
) -> [S; 3] {
    let sq = [rotors[0].square(), rotors[1].square(), rotors[2].square(), rotors[3].square()];
    [
        signed_sum(&ROLL_SIGNS, &sq) * p.kp + v_body[1] * p.kpv,
        signed_sum(&PITCH_SIGNS, &sq) * p.kq + v_body[0] * p.kqv,
        signed_sum(&YAW_SIGNS, rotors) * p.kr1 + signed_sum(&YAW_SIGNS, rotor_accel) * p.kr2 - yaw_rate * p.krr,
    ]
}

/// Time derivative of the flat state, generic over the scalar so the
/// collocation solver can differentiate it exactly.
///
/// Rotor speeds enter and leave in rpm. A zero external moment skips the
/// addition entirely so the nominal dynamics are reproduced bit for bit.
pub(crate) fn derivative_generic<S: Real>(
    x: &[S; STATE_DIM],
    u: &[S; CONTROL_DIM],
    m_ext: &[f64; 3],
    p: &ModelParams,
) -> [S; STATE_DIM] {
    let euler = [x[idx::EULER], x[idx::EULER + 1], x[idx::EULER + 2]];
    let vel = [x[idx::VEL], x[idx::VEL + 1], x[idx::VEL + 2]];
    let rates = [x[idx::RATES], x[idx::RATES + 1], x[idx::RATES + 2]];
    let rotors = [x[12], x[13], x[14], x[15]];

    let r = rotation_generic(euler);
    let v_body = mat_t_vec(&r, vel);
    let force = body_force_generic(v_body, &rotors, p);
    let acc = mat_vec(&r, force);

    let (sf, cf) = euler[0].sin_cos();
    let (st, ct) = euler[1].sin_cos();
    let tt = st / ct;
    let [pr, qr, rr] = rates;
    let euler_dot = [pr + (sf * qr + cf * rr) * tt, cf * qr - sf * rr, (sf * qr + cf * rr) / ct];

    let span = p.rotor_span();
    let mut rotor_accel = [S::cst(0.0); 4];
    for i in 0..4 {
        rotor_accel[i] = (u[i] * span + p.omega_min - rotors[i]) / p.tau;
    }

    let mut moment = body_moment_generic(v_body, rr, &rotors, &rotor_accel, p);
    for (m, e) in moment.iter_mut().zip(m_ext) {
        if *e != 0.0 {
            *m = *m + *e;
        }
    }
    let inertia = p.inertia();
    let iw = [rates[0] * inertia[0], rates[1] * inertia[1], rates[2] * inertia[2]];
    let gyro =
        [rates[1] * iw[2] - rates[2] * iw[1], rates[2] * iw[0] - rates[0] * iw[2], rates[0] * iw[1] - rates[1] * iw[0]];

    let mut dx = [S::cst(0.0); STATE_DIM];
    dx[idx::POS..idx::POS + 3].copy_from_slice(&vel);
    dx[idx::VEL] = acc[0];
    dx[idx::VEL + 1] = acc[1];
    dx[idx::VEL + 2] = acc[2] + p.g;
    dx[idx::EULER..idx::EULER + 3].copy_from_slice(&euler_dot);
    for k in 0..3 {
        dx[idx::RATES + k] = (moment[k] - gyro[k]) / inertia[k];
    }
    dx[idx::ROTORS..].copy_from_slice(&rotor_accel);
    dx
}

fn check_gimbal(euler: &Vector3<f64>) -> Result<()> {
    let theta = euler[1];
    if !(theta.abs() < std::f64::consts::FRAC_PI_2 - GIMBAL_MARGIN) {
        return Err(Error::GimbalLock { theta });
    }
    Ok(())
}

/// Rotation matrix taking body-frame vectors to the world frame.
pub fn rotation_world_from_body(euler: &Vector3<f64>) -> Matrix3<f64> {
    let r = rotation_generic([euler[0], euler[1], euler[2]]);
    Matrix3::from_fn(|i, j| r[i][j])
}

/// Matrix `Q` with `d/dt (φ, θ, ψ) = Q · (p, q, r)`.
pub fn euler_rate_matrix(euler: &Vector3<f64>) -> Result<Matrix3<f64>> {
    check_gimbal(euler)?;
    let (sf, cf) = euler[0].sin_cos();
    let (st, ct) = euler[1].sin_cos();
    let tt = st / ct;
    Ok(Matrix3::new(1.0, sf * tt, cf * tt, 0.0, cf, -sf, 0.0, sf / ct, cf / ct))
}

/// Velocity expressed in the body frame.
pub fn body_velocity(state: &VehicleState) -> Vector3<f64> {
    rotation_world_from_body(&state.euler).transpose() * state.velocity
}

/// Specific force (thrust plus rotor drag) in the body frame [m/s²].
pub fn body_force(state: &VehicleState, params: &ModelParams) -> Vector3<f64> {
    let vb = body_velocity(state);
    let f = body_force_generic([vb[0], vb[1], vb[2]], &state.rotors, params);
    Vector3::new(f[0], f[1], f[2])
}

/// Modeled body moment [N·m] for the given rotor accelerations (rpm/s).
pub fn body_moment(state: &VehicleState, rotor_accel: &[f64; 4], params: &ModelParams) -> Vector3<f64> {
    let vb = body_velocity(state);
    let m = body_moment_generic([vb[0], vb[1], vb[2]], state.rates[2], &state.rotors, rotor_accel, params);
    Vector3::new(m[0], m[1], m[2])
}

/// Rotor acceleration of the first-order actuator model [rpm/s].
pub fn rotor_acceleration(rotors: &[f64; 4], u: &ControlInput, params: &ModelParams) -> [f64; 4] {
    let span = params.rotor_span();
    std::array::from_fn(|i| (u.0[i] * span + params.omega_min - rotors[i]) / params.tau)
}

/// Full state derivative including a constant external moment.
///
/// The returned array follows the flat state layout (see [`idx`]).
pub fn state_derivative(
    state: &VehicleState,
    u: &ControlInput,
    m_ext: &ExternalMoment,
    params: &ModelParams,
) -> Result<[f64; STATE_DIM]> {
    check_gimbal(&state.euler)?;
    Ok(derivative_generic(&state.to_array(), &u.0, &m_ext.as_array(), params))
}

/// Moment implied by measured body rates and angular acceleration.
pub fn measured_moment(rates: &Vector3<f64>, rates_dot: &Vector3<f64>, params: &ModelParams) -> Vector3<f64> {
    let inertia = Vector3::from(params.inertia());
    let iw = inertia.component_mul(rates);
    inertia.component_mul(rates_dot) + rates.cross(&iw)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    fn rest(rotors: [f64; 4]) -> VehicleState {
        VehicleState { rotors, ..VehicleState::hover(Vector3::zeros(), 0.0) }
    }

    #[test]
    fn identity_and_pure_yaw() {
        let r = rotation_world_from_body(&Vector3::zeros());
        assert!((r - Matrix3::identity()).abs().max() < 1e-15);
        let r = rotation_world_from_body(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let bx = r * Vector3::x();
        assert!((bx - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn euler_rates_level_and_pitched() {
        let q = euler_rate_matrix(&Vector3::zeros()).unwrap();
        assert_eq!(q * Vector3::x(), Vector3::x());
        assert_eq!(q * Vector3::z(), Vector3::z());
        let theta = 0.6_f64;
        let q = euler_rate_matrix(&Vector3::new(0.0, theta, 0.0)).unwrap();
        let d = q * Vector3::new(0.0, 0.0, 1.0);
        assert!((d[2] - 1.0 / theta.cos()).abs() < 1e-14);
        assert!((d[0] - theta.tan()).abs() < 1e-14);
        assert!(matches!(euler_rate_matrix(&Vector3::new(0.0, FRAC_PI_2 - 1e-4, 0.0)), Err(Error::GimbalLock { .. })));
    }

    #[test]
    fn force_examples() {
        let p = ModelParams::bebop();
        let f = body_force(&rest([7500.0; 4]), &p);
        assert!(f[0] == 0.0 && f[1] == 0.0);
        assert!((f[2] + 9.81).abs() < 0.002 * 9.81);
        assert_eq!(body_force(&rest([0.0; 4]), &p), Vector3::zeros());
        let mut s = rest([7500.0; 4]);
        s.velocity = Vector3::new(1.0, 0.0, 0.0);
        let f = body_force(&s, &p);
        assert!((f[0] + 0.324).abs() < 1e-12);
    }

    #[test]
    fn moment_examples() {
        let p = ModelParams::bebop();
        let m = body_moment(&rest([7000.0; 4]), &[0.0; 4], &p);
        assert!(m.norm() < 1e-15);
        let m = body_moment(&rest([8000.0, 7000.0, 7000.0, 8000.0]), &[0.0; 4], &p);
        assert!((m[0] - 1.41e-9 * 3.0e7).abs() < 1e-12);
        assert!((m[0] - 0.0423).abs() < 1e-12);
        let mut s = rest([0.0; 4]);
        s.rates = Vector3::new(0.0, 0.0, 1.0);
        let m = body_moment(&s, &[0.0; 4], &p);
        assert!((m[2] + 8.13e-4).abs() < 1e-15);
    }

    #[test]
    fn measured_moment_examples() {
        let p = ModelParams::bebop();
        let m = measured_moment(&Vector3::x(), &Vector3::zeros(), &p);
        assert_eq!(m, Vector3::zeros());
        let m = measured_moment(&Vector3::new(1.0, 1.0, 0.0), &Vector3::zeros(), &p);
        assert!((m - Vector3::new(0.0, 0.0, 3.36e-4)).norm() < 1e-15);
        let m = measured_moment(&Vector3::zeros(), &Vector3::x(), &p);
        assert_eq!(m, Vector3::new(9.06e-4, 0.0, 0.0));
    }

    #[test]
    fn hover_is_a_fixed_point() {
        let p = ModelParams::bebop();
        let s = rest([p.hover_rotor_speed(); 4]);
        let dx = state_derivative(&s, &ControlInput::uniform(p.hover_command()), &ExternalMoment::zero(), &p).unwrap();
        assert!(dx.iter().all(|d| d.abs() < 1e-9), "{dx:?}");
    }

    #[test]
    fn full_throttle_from_idle() {
        let p = ModelParams::bebop();
        let s = rest([p.omega_min; 4]);
        let dx = state_derivative(&s, &ControlInput::uniform(1.0), &ExternalMoment::zero(), &p).unwrap();
        for d in &dx[12..] {
            assert!((d - p.rotor_span() / p.tau).abs() < 1e-9);
        }
    }
}
