use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 16;
pub const CONTROL_DIM: usize = 4;

/// Offsets of the state blocks inside the flat state vector.
pub mod idx {
    pub const POS: usize = 0;
    pub const VEL: usize = 3;
    pub const EULER: usize = 6;
    pub const RATES: usize = 9;
    pub const ROTORS: usize = 12;
}

/// Full rigid-body and rotor state.
///
/// Position and velocity are in the world frame (z down), Euler angles are
/// roll/pitch/yaw in the ZYX convention, body rates are (p, q, r) and rotor
/// speeds are in rpm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub euler: Vector3<f64>,
    pub rates: Vector3<f64>,
    pub rotors: [f64; 4],
}

impl VehicleState {
    /// Level hover at `position` with every rotor at `rotor_speed`.
    pub fn hover(position: Vector3<f64>, rotor_speed: f64) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            euler: Vector3::zeros(),
            rates: Vector3::zeros(),
            rotors: [rotor_speed; 4],
        }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let mut x = [0.0; STATE_DIM];
        x[idx::POS..idx::POS + 3].copy_from_slice(self.position.as_slice());
        x[idx::VEL..idx::VEL + 3].copy_from_slice(self.velocity.as_slice());
        x[idx::EULER..idx::EULER + 3].copy_from_slice(self.euler.as_slice());
        x[idx::RATES..idx::RATES + 3].copy_from_slice(self.rates.as_slice());
        x[idx::ROTORS..].copy_from_slice(&self.rotors);
        x
    }

    pub fn from_array(x: &[f64; STATE_DIM]) -> Self {
        let v3 = |o: usize| Vector3::new(x[o], x[o + 1], x[o + 2]);
        Self {
            position: v3(idx::POS),
            velocity: v3(idx::VEL),
            euler: v3(idx::EULER),
            rates: v3(idx::RATES),
            rotors: [x[12], x[13], x[14], x[15]],
        }
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        let arr: &[f64; STATE_DIM] =
            x.try_into().map_err(|_| Error::DimensionMismatch { expected: STATE_DIM, got: x.len() })?;
        Ok(Self::from_array(arr))
    }

    pub fn roll(&self) -> f64 {
        self.euler[0]
    }

    pub fn pitch(&self) -> f64 {
        self.euler[1]
    }

    pub fn yaw(&self) -> f64 {
        self.euler[2]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Normalized rotor commands, each in [0, 1].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput(pub [f64; CONTROL_DIM]);

impl ControlInput {
    pub fn new(u: [f64; CONTROL_DIM]) -> Result<Self> {
        if u.iter().all(|v| (0.0..=1.0).contains(v)) {
            Ok(Self(u))
        } else {
            Err(Error::InvalidSpec(format!("control {u:?} outside [0, 1]")))
        }
    }

    /// Saturates every component into [0, 1]; NaN maps to 0.
    pub fn clamped(u: [f64; CONTROL_DIM]) -> Self {
        Self(u.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }))
    }

    pub fn uniform(v: f64) -> Self {
        Self::clamped([v; CONTROL_DIM])
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

/// Constant body-frame moment acting on top of the modeled moment [N·m].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExternalMoment(pub Vector3<f64>);

impl ExternalMoment {
    pub fn new(mx: f64, my: f64, mz: f64) -> Self {
        Self(Vector3::new(mx, my, mz))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        for k in -20..20 {
            let w = wrap_angle(0.3 + k as f64 * 0.77);
            assert!(w > -PI && w <= PI);
        }
    }

    #[test]
    fn array_round_trip() {
        let mut x = [0.0; STATE_DIM];
        for (i, v) in x.iter_mut().enumerate() {
            *v = i as f64 * 0.5 - 1.0;
        }
        assert_eq!(VehicleState::from_array(&x).to_array(), x);
        assert!(VehicleState::from_slice(&x[..15]).is_err());
    }

    #[test]
    fn control_bounds() {
        assert!(ControlInput::new([0.0, 0.5, 1.0, 0.2]).is_ok());
        assert!(ControlInput::new([0.0, 1.5, 1.0, 0.2]).is_err());
        assert_eq!(ControlInput::clamped([-1.0, 2.0, f64::NAN, 0.3]).0, [0.0, 1.0, 0.0, 0.3]);
    }
}
