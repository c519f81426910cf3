//! Cascaded polynomial tracking: position loop with acceleration
//! feedforward, attitude from the desired thrust direction and yaw, and an
//! incremental rate loop that inverts the rotor thrust/moment model.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::snap::PolyTrajectory;
use crate::error::{Error, Result};
use crate::model::{
    body_velocity, rotation_world_from_body, ControlInput, ModelParams, VehicleState, PITCH_SIGNS, ROLL_SIGNS,
    YAW_SIGNS,
};
use crate::sim::{simulate, Controller, FlightLog, Observation, SimConfig, StopCondition};

/// Tracking error that counts as a crash [m].
pub const TRACKING_LIMIT: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingGains {
    /// Position error to acceleration [1/s²].
    pub position: f64,
    /// Velocity error to acceleration [1/s].
    pub velocity: f64,
    /// Attitude error to body rate [1/s].
    pub attitude: f64,
    /// Yaw error to yaw rate [1/s].
    pub yaw: f64,
    /// Rate error to angular acceleration [1/s].
    pub rate: f64,
    /// Tilt limit of the commanded thrust direction [rad].
    pub max_tilt: f64,
    pub crash_distance: f64,
}

impl Default for TrackingGains {
    fn default() -> Self {
        Self {
            position: 3.0,
            velocity: 3.0,
            attitude: 6.0,
            yaw: 2.0,
            rate: 12.0,
            max_tilt: 1.2,
            crash_distance: TRACKING_LIMIT,
        }
    }
}

pub struct DfbcController<'a> {
    traj: &'a PolyTrajectory,
    params: ModelParams,
    gains: TrackingGains,
    prev: Option<(f64, Vector3<f64>, [f64; 4])>,
}

impl<'a> DfbcController<'a> {
    pub fn new(traj: &'a PolyTrajectory, params: ModelParams, gains: TrackingGains) -> Self {
        Self { traj, params, gains, prev: None }
    }
}

/// Collective specific thrust and the rotor part of the body moment.
fn rotor_outputs(p: &ModelParams, w: &[f64; 4], vb: &Vector3<f64>) -> Vector4<f64> {
    let sq = w.map(|x| x * x);
    let sum: f64 = w.iter().sum();
    let dot = |s: &[f64; 4], v: &[f64; 4]| s.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    Vector4::new(
        p.kw * sq.iter().sum::<f64>() + p.kz * vb[2] * sum,
        p.kp * dot(&ROLL_SIGNS, &sq),
        p.kq * dot(&PITCH_SIGNS, &sq),
        p.kr1 * dot(&YAW_SIGNS, w),
    )
}

fn rotor_jacobian(p: &ModelParams, w: &[f64; 4], vb: &Vector3<f64>) -> Matrix4<f64> {
    Matrix4::from_fn(|row, i| match row {
        0 => 2.0 * p.kw * w[i] + p.kz * vb[2],
        1 => 2.0 * p.kp * ROLL_SIGNS[i] * w[i],
        2 => 2.0 * p.kq * PITCH_SIGNS[i] * w[i],
        _ => p.kr1 * YAW_SIGNS[i],
    })
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

impl Controller for DfbcController<'_> {
    fn command(&mut self, obs: &Observation) -> Result<ControlInput> {
        let p = &self.params;
        let g = &self.gains;
        let s: &VehicleState = &obs.state;
        let t = obs.time;
        let err = self.traj.position(t) - s.position;
        if err.norm() > g.crash_distance {
            return Err(Error::Diverged { time: t, reason: format!("tracking error {:.2} m", err.norm()) });
        }
        let v_err = self.traj.velocity(t) - s.velocity;
        let a_des = self.traj.acceleration(t) + err * g.position + v_err * g.velocity;

        // Required specific force, minus the drag the body already produces.
        let r = rotation_world_from_body(&s.euler);
        let vb = body_velocity(s);
        let sum: f64 = s.rotors.iter().sum();
        let drag = Vector3::new(-p.kx * vb[0] * sum, -p.ky * vb[1] * sum, -p.kh * (vb[0].powi(2) + vb[1].powi(2)));
        let mut f = a_des - Vector3::new(0.0, 0.0, p.g) - r * drag;
        // Keep the thrust direction within the tilt limit.
        let horiz = f.xy().norm();
        let max_h = -f[2].min(-0.2 * p.g) * g.max_tilt.tan();
        if horiz > max_h {
            let k = max_h / horiz;
            f[0] *= k;
            f[1] *= k;
        }
        f[2] = f[2].min(-0.2 * p.g);
        let z_b = -f.normalize();
        let thrust = -f.dot(&(r * Vector3::z()));

        let yaw = self.traj.yaw(t);
        let x_c = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
        let y_b = z_b.cross(&x_c).normalize();
        let x_b = y_b.cross(&z_b);
        let r_des = Matrix3::from_columns(&[x_b, y_b, z_b]);
        let rm = r;
        let e_r = 0.5 * vee(&(r_des.transpose() * rm - rm.transpose() * r_des));
        let yaw_rate = self.traj.eval(t, 1)[3];
        let mut w_des = -e_r * g.attitude;
        w_des[2] = -e_r[2] * g.yaw;
        w_des += rm.transpose() * Vector3::new(0.0, 0.0, yaw_rate);
        let wdot_des = (w_des - s.rates) * g.rate;

        let inertia = Vector3::from(p.inertia());
        let gyro = s.rates.cross(&inertia.component_mul(&s.rates));
        let aero = Vector3::new(p.kpv * vb[1], p.kqv * vb[0], -p.krr * s.rates[2]);
        let model_want = inertia.component_mul(&wdot_des) + gyro - aero;
        // Roll and pitch are incremental on the measured angular
        // acceleration. Yaw is inverted from the model: its short-term
        // response is dominated by the rotor-acceleration reaction torque,
        // which would make an incremental yaw loop ring.
        let base = match self.prev {
            Some((_, _, rot0)) => std::array::from_fn(|i| 0.5 * (s.rotors[i] + rot0[i])),
            None => s.rotors,
        };
        let now = rotor_outputs(p, &base, &vb);
        let tilt_change = match self.prev {
            Some((t0, w0, _)) if t > t0 => inertia.component_mul(&(wdot_des - (s.rates - w0) / (t - t0))),
            _ => model_want - now.fixed_rows::<3>(1),
        };
        self.prev = Some((t, s.rates, s.rotors));
        let delta = Vector4::new(thrust - now[0], tilt_change[0], tilt_change[1], model_want[2] - now[3]);
        let jac = rotor_jacobian(p, &base, &vb);
        let dw = jac.lu().solve(&delta).ok_or(Error::SingularKkt)?;
        let span = p.rotor_span();
        Ok(ControlInput(std::array::from_fn(|i| {
            let w = (base[i] + dw[i]).clamp(p.omega_min, p.omega_max);
            (w - p.omega_min) / span
        })))
    }
}

/// Hover state at the start of a trajectory.
pub fn start_state(traj: &PolyTrajectory, params: &ModelParams) -> VehicleState {
    let mut s = VehicleState::hover(traj.position(0.0), params.hover_rotor_speed());
    s.euler[2] = crate::model::wrap_angle(traj.yaw(0.0));
    s
}

pub fn run_dfbc(traj: &PolyTrajectory, cfg: &SimConfig) -> Result<FlightLog> {
    run_dfbc_with(traj, cfg, &TrackingGains::default())
}

pub fn run_dfbc_with(traj: &PolyTrajectory, cfg: &SimConfig, gains: &TrackingGains) -> Result<FlightLog> {
    match cfg.stop {
        StopCondition::Duration(d) if d <= traj.duration() + 1e-9 => {}
        StopCondition::Duration(d) => {
            return Err(Error::InvalidSpec(format!("flight of {d} s exceeds the {} s trajectory", traj.duration())))
        }
        StopCondition::Laps { .. } => return Err(Error::InvalidSpec("tracking runs stop on duration".into())),
    }
    let mut cfg = cfg.clone();
    cfg.initial = Some(cfg.initial.unwrap_or_else(|| start_state(traj, &cfg.params)));
    let mut ctrl = DfbcController::new(traj, cfg.params, *gains);
    simulate(&mut ctrl, None, &cfg)
}
