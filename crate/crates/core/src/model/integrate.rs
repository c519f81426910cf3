use super::dynamics::state_derivative;
use super::params::ModelParams;
use super::state::{idx, wrap_angle, ControlInput, ExternalMoment, VehicleState, STATE_DIM};
use crate::error::{Error, Result};

fn axpy(x: &[f64; STATE_DIM], a: f64, d: &[f64; STATE_DIM]) -> [f64; STATE_DIM] {
    std::array::from_fn(|i| x[i] + a * d[i])
}

/// One classic fourth-order Runge–Kutta step with the command held constant.
///
/// Rotor speeds are clamped to the actuator envelope and yaw is wrapped
/// into (−π, π] once the step is complete.
pub fn rk4_step(
    state: &VehicleState,
    u: &ControlInput,
    m_ext: &ExternalMoment,
    params: &ModelParams,
    dt: f64,
) -> Result<VehicleState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidSpec(format!("time step must be positive, got {dt}")));
    }
    let f = |x: &[f64; STATE_DIM]| state_derivative(&VehicleState::from_array(x), u, m_ext, params);
    let x0 = state.to_array();
    let k1 = f(&x0)?;
    let k2 = f(&axpy(&x0, 0.5 * dt, &k1))?;
    let k3 = f(&axpy(&x0, 0.5 * dt, &k2))?;
    let k4 = f(&axpy(&x0, dt, &k3))?;
    let mut x: [f64; STATE_DIM] =
        std::array::from_fn(|i| x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    for w in &mut x[idx::ROTORS..] {
        *w = w.clamp(params.omega_min, params.omega_max);
    }
    x[idx::EULER + 2] = wrap_angle(x[idx::EULER + 2]);
    Ok(VehicleState::from_array(&x))
}

/// Integrates `duration` seconds with a fixed command using steps no longer
/// than `max_dt`.
pub fn rk4_integrate(
    state: &VehicleState,
    u: &ControlInput,
    m_ext: &ExternalMoment,
    params: &ModelParams,
    duration: f64,
    max_dt: f64,
) -> Result<VehicleState> {
    let steps = (duration / max_dt).ceil().max(1.0) as usize;
    let dt = duration / steps as f64;
    let mut s = *state;
    for _ in 0..steps {
        s = rk4_step(&s, u, m_ext, params, dt)?;
    }
    Ok(s)
}
