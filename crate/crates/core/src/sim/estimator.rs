//! Onboard external-moment estimator.
//!
//! The measured moment `I Ω̇_f + Ω_f × I Ω_f` uses the causally filtered gyro
//! signal; the modeled moment from rotor speeds, their first difference and
//! the body velocity goes through an identical filter, so the difference
//! isolates the unmodeled moment delayed by the filter.

use nalgebra::Vector3;

use crate::error::Result;
use crate::filters::ButterworthLp2;
use crate::model::{body_moment, measured_moment, ModelParams, VehicleState};

pub const ESTIMATOR_CUTOFF: f64 = 8.0;

#[derive(Clone, Debug)]
pub struct MomentEstimator {
    params: ModelParams,
    dt: f64,
    gyro: [ButterworthLp2; 3],
    model: [ButterworthLp2; 3],
    prev_rates: Option<Vector3<f64>>,
    prev_rotors: Option<[f64; 4]>,
    estimate: Vector3<f64>,
}

/// Sensor sample consumed by the estimator.
#[derive(Clone, Copy, Debug)]
pub struct SensorSample {
    pub gyro: Vector3<f64>,
    pub rotors: [f64; 4],
    pub v_body: Vector3<f64>,
}

impl SensorSample {
    /// Noise-free sample of a true state.
    pub fn exact(state: &VehicleState) -> Self {
        Self { gyro: state.rates, rotors: state.rotors, v_body: crate::model::body_velocity(state) }
    }
}

impl MomentEstimator {
    pub fn new(params: ModelParams, cutoff: f64, sample_rate: f64) -> Result<Self> {
        let f = ButterworthLp2::design(cutoff, sample_rate)?;
        Ok(Self {
            params,
            dt: 1.0 / sample_rate,
            gyro: [f.clone(), f.clone(), f.clone()],
            model: [f.clone(), f.clone(), f],
            prev_rates: None,
            prev_rotors: None,
            estimate: Vector3::zeros(),
        })
    }

    pub fn estimate(&self) -> Vector3<f64> {
        self.estimate
    }

    pub fn update(&mut self, s: &SensorSample) -> Vector3<f64> {
        let first = self.prev_rates.is_none();
        let rotor_accel: [f64; 4] = match self.prev_rotors {
            Some(prev) => std::array::from_fn(|i| (s.rotors[i] - prev[i]) / self.dt),
            None => [0.0; 4],
        };
        self.prev_rotors = Some(s.rotors);
        let view = VehicleState {
            position: Vector3::zeros(),
            velocity: s.v_body,
            euler: Vector3::zeros(),
            rates: s.gyro,
            rotors: s.rotors,
        };
        // With zero attitude the body velocity equals the world velocity.
        let m_model = body_moment(&view, &rotor_accel, &self.params);
        let mut rates_f = Vector3::zeros();
        let mut model_f = Vector3::zeros();
        for k in 0..3 {
            if first {
                self.gyro[k].reset_to(s.gyro[k]);
                self.model[k].reset_to(m_model[k]);
            }
            rates_f[k] = self.gyro[k].step(s.gyro[k]);
            model_f[k] = self.model[k].step(m_model[k]);
        }
        let rates_dot = match self.prev_rates {
            Some(prev) => (rates_f - prev) / self.dt,
            None => Vector3::zeros(),
        };
        self.prev_rates = Some(rates_f);
        self.estimate = measured_moment(&rates_f, &rates_dot, &self.params) - model_f;
        self.estimate
    }
}

/// Runs the estimator over time-aligned sensor streams.
pub fn estimate_external_moment(
    samples: &[SensorSample],
    params: &ModelParams,
    sample_rate: f64,
) -> Result<Vec<Vector3<f64>>> {
    let mut est = MomentEstimator::new(*params, ESTIMATOR_CUTOFF, sample_rate)?;
    Ok(samples.iter().map(|s| est.update(s)).collect())
}
