//! Rigid-body quadcopter model: kinematics, force and moment maps, rotor
//! lag and the external-moment-augmented variant.

mod dynamics;
mod integrate;
mod params;
mod state;

pub(crate) use dynamics::derivative_generic;
pub use dynamics::{
    body_force, body_moment, body_velocity, euler_rate_matrix, measured_moment, rotation_world_from_body,
    rotor_acceleration, state_derivative, GIMBAL_MARGIN, PITCH_SIGNS, ROLL_SIGNS, YAW_SIGNS,
};
pub use integrate::{rk4_integrate, rk4_step};
pub use params::ModelParams;
pub use state::{idx, wrap_angle, ControlInput, ExternalMoment, VehicleState, CONTROL_DIM, STATE_DIM};
