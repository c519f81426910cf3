//! Deterministic closed-loop simulation: RK4 physics, sensor sampling, the
//! external-moment estimator, waypoint management and flight logging.

mod estimator;
mod log;

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use estimator::{estimate_external_moment, MomentEstimator, SensorSample, ESTIMATOR_CUTOFF};
pub use log::{
    compare_measured_modeled, FlightLog, FlightSummary, Residuals, SaturationEpisode, SwitchEvent, Termination,
    LOG_COLUMNS,
};

use crate::error::{Error, Result};
use crate::gcnet::GcnPolicy;
use crate::model::{rk4_step, wrap_angle, ControlInput, ExternalMoment, ModelParams, VehicleState};

/// Roll moment of the added-weight preset [N·m].
pub const ADDED_WEIGHT_ROLL: f64 = -0.06;
/// Position norm beyond which a flight counts as diverged [m].
pub const DIVERGENCE_RADIUS: f64 = 50.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    /// Constant body-frame moment [N·m].
    pub moment: [f64; 3],
    /// Adds the off-center weight roll moment.
    pub added_weight: bool,
}

impl Disturbance {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn moment(mx: f64, my: f64, mz: f64) -> Self {
        Self { moment: [mx, my, mz], added_weight: false }
    }

    pub fn added_weight() -> Self {
        Self { moment: [0.0; 3], added_weight: true }
    }

    pub fn total(&self) -> ExternalMoment {
        let extra = if self.added_weight { ADDED_WEIGHT_ROLL } else { 0.0 };
        ExternalMoment::new(self.moment[0] + extra, self.moment[1], self.moment[2])
    }

    /// Parses `none`, `weight` or `mx,my,mz`.
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "none" | "" => Ok(Self::none()),
            "weight" | "added-weight" => Ok(Self::added_weight()),
            s => {
                let v: Vec<f64> = s
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::InvalidSpec(format!("bad disturbance '{s}'")))?;
                match v[..] {
                    [mx, my, mz] => Ok(Self::moment(mx, my, mz)),
                    _ => Err(Error::InvalidSpec(format!("disturbance needs three moments, got '{s}'"))),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StopCondition {
    Duration(f64),
    /// Laps of the waypoint plan, with a wall on simulated time.
    Laps {
        laps: usize,
        max_time: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub physics_dt: f64,
    pub control_rate: f64,
    pub sensor_rate: f64,
    /// Gyro noise standard deviation [rad/s].
    pub gyro_noise: f64,
    pub disturbance: Disturbance,
    pub stop: StopCondition,
    pub seed: u64,
    /// Plant parameters (may differ from the ones used for training).
    pub params: ModelParams,
    pub estimator_cutoff: f64,
    /// Initial state; defaults to hover at the plan's start point.
    pub initial: Option<VehicleState>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            physics_dt: 1e-3,
            control_rate: 100.0,
            sensor_rate: 500.0,
            gyro_noise: 0.0,
            disturbance: Disturbance::none(),
            stop: StopCondition::Duration(10.0),
            seed: 0,
            params: ModelParams::bebop(),
            estimator_cutoff: ESTIMATOR_CUTOFF,
            initial: None,
        }
    }
}

impl SimConfig {
    pub fn with_params(mut self, params: ModelParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_disturbance(mut self, d: Disturbance) -> Self {
        self.disturbance = d;
        self
    }

    pub fn with_stop(mut self, stop: StopCondition) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_initial(mut self, s: VehicleState) -> Self {
        self.initial = Some(s);
        self
    }

    /// Physics steps per sensor sample and per control tick.
    fn decimation(&self) -> Result<(usize, usize)> {
        let ratio = |rate: f64| {
            let r = 1.0 / (rate * self.physics_dt);
            let n = r.round();
            (n >= 1.0 && (r - n).abs() < 1e-9).then_some(n as usize)
        };
        match (ratio(self.sensor_rate), ratio(self.control_rate)) {
            (Some(s), Some(c)) if c % s == 0 => Ok((s, c)),
            _ => Err(Error::InvalidSpec(
                "control rate ≤ sensor rate ≤ 1/dt must divide evenly into physics steps".into(),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SwitchPolicy {
    /// Advance to the next waypoint every `period` seconds.
    Timed { period: f64 },
    /// Advance once within `radius`; the network frame turns by −90° per switch.
    Proximity { radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan {
    pub waypoints: Vec<Vector3<f64>>,
    pub switch: SwitchPolicy,
}

impl WaypointPlan {
    /// Corners of the 3 m × 4 m track flown clockwise seen from above: legs
    /// along +x, +y, −x, −y with right turns.
    pub fn rectangle(switch: SwitchPolicy) -> Self {
        Self {
            waypoints: vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(4.0, 0.0, 0.0),
                Vector3::new(4.0, 3.0, 0.0),
                Vector3::new(0.0, 3.0, 0.0),
            ],
            switch,
        }
    }

    pub fn timed_rectangle() -> Self {
        Self::rectangle(SwitchPolicy::Timed { period: 4.0 })
    }

    pub fn proximity_rectangle() -> Self {
        Self::rectangle(SwitchPolicy::Proximity { radius: 1.2 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::InvalidSpec("waypoint plan needs at least one waypoint".into()));
        }
        Ok(())
    }

    /// The first target is waypoint 1; the flight starts at waypoint 0.
    pub fn start(&self) -> Vector3<f64> {
        self.waypoints[0]
    }

    fn target_index(&self, switches: usize) -> usize {
        (switches + 1) % self.waypoints.len()
    }
}

/// State in the network frame after `turns` switches: world axes rotated by
/// 90° per turn about z and the target moved to the origin. Only the inputs
/// change; the true state is untouched.
pub fn frame_switch(state: &VehicleState, waypoint: &Vector3<f64>, turns: usize) -> VehicleState {
    let angle = -FRAC_PI_2 * (turns % 4) as f64;
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
    let mut view = *state;
    view.position = rot * (state.position - waypoint);
    view.velocity = rot * state.velocity;
    view.euler[2] = wrap_angle(state.euler[2] + angle);
    view
}

/// What a controller sees at a control tick.
#[derive(Clone, Copy, Debug)]
pub struct Observation {
    pub time: f64,
    pub state: VehicleState,
    pub moment_estimate: Vector3<f64>,
    /// Active target in world coordinates.
    pub waypoint: Vector3<f64>,
    /// Waypoint switches so far.
    pub switches: usize,
}

pub trait Controller {
    /// Command held until the next tick. An error ends the flight as a crash.
    fn command(&mut self, obs: &Observation) -> Result<ControlInput>;
}

/// Network controller.
pub struct GcnController<'a> {
    pub policy: &'a GcnPolicy,
    pub adaptive: bool,
    /// Rotate the input frame by −90° per switch.
    pub rotate_frame: bool,
}

impl Controller for GcnController<'_> {
    fn command(&mut self, obs: &Observation) -> Result<ControlInput> {
        let turns = if self.rotate_frame { obs.switches } else { 0 };
        let view = frame_switch(&obs.state, &obs.waypoint, turns);
        let m = ExternalMoment(obs.moment_estimate);
        self.policy.control(&view, self.adaptive.then_some(&m), &Vector3::zeros())
    }
}

/// Flies `policy` through `plan`. Timed plans keep the world frame;
/// proximity plans rotate the input frame at each switch.
pub fn run_gcnet(policy: &GcnPolicy, plan: &WaypointPlan, cfg: &SimConfig, adaptive: bool) -> Result<FlightLog> {
    if policy.kind.uses_moment() != adaptive {
        let (expected, got) = if adaptive { (19, policy.input_dim()) } else { (16, policy.input_dim()) };
        return Err(Error::DimensionMismatch { expected, got });
    }
    let mut ctrl =
        GcnController { policy, adaptive, rotate_frame: matches!(plan.switch, SwitchPolicy::Proximity { .. }) };
    simulate(&mut ctrl, Some(plan), cfg)
}

/// Generic closed loop. Without a plan the target stays at the origin and
/// the flight runs for the configured duration.
pub fn simulate(ctrl: &mut dyn Controller, plan: Option<&WaypointPlan>, cfg: &SimConfig) -> Result<FlightLog> {
    let (sensor_every, control_every) = cfg.decimation()?;
    cfg.params.validate()?;
    if let Some(p) = plan {
        p.validate()?;
    }
    let sensor_dt = cfg.physics_dt * sensor_every as f64;
    let p = &cfg.params;
    let m_true = cfg.disturbance.total();
    let mut estimator = MomentEstimator::new(*p, cfg.estimator_cutoff, 1.0 / sensor_dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.gyro_noise.max(0.0)).map_err(|e| Error::InvalidSpec(e.to_string()))?;

    let start = plan.map_or_else(Vector3::zeros, WaypointPlan::start);
    let mut state = cfg.initial.unwrap_or_else(|| VehicleState::hover(start, p.hover_rotor_speed()));
    let (max_time, laps_wanted) = match cfg.stop {
        StopCondition::Duration(t) => (t, None),
        StopCondition::Laps { laps, max_time } => (max_time, Some(laps)),
    };
    let total_steps = (max_time / cfg.physics_dt).round() as usize;
    let mut log = FlightLog::new(sensor_dt);
    let mut u = ControlInput::uniform(p.hover_command());
    let mut switches = 0usize;
    let mut last_switch_time = 0.0;
    let mut energy = 0.0;

    let mut termination = Termination::TimeLimit;
    for step in 0..=total_steps {
        let t = step as f64 * cfg.physics_dt;
        if !state.is_finite() || state.position.norm() > DIVERGENCE_RADIUS {
            termination = Termination::Diverged { time: t, reason: "position left the flight volume".into() };
            break;
        }
        if step % sensor_every == 0 {
            let mut sample = SensorSample::exact(&state);
            if cfg.gyro_noise > 0.0 {
                sample.gyro += Vector3::from_fn(|_, _| noise.sample(&mut rng));
            }
            estimator.update(&sample);
        }
        if step % control_every == 0 {
            if let Some(plan) = plan {
                let target = plan.waypoints[plan.target_index(switches)];
                let due = match plan.switch {
                    SwitchPolicy::Timed { period } => t - last_switch_time >= period - 1e-9,
                    SwitchPolicy::Proximity { radius } => (state.position - target).norm() < radius,
                };
                if due && step > 0 {
                    log.switches.push(SwitchEvent {
                        time: t,
                        target: plan.target_index(switches),
                        distance: (state.position - target).norm(),
                    });
                    switches += 1;
                    last_switch_time = t;
                    if switches % plan.waypoints.len() == 0 {
                        log.lap_times.push(t);
                    }
                }
            }
            if laps_wanted.is_some_and(|l| log.lap_times.len() >= l) {
                termination = Termination::Completed;
                break;
            }
            let waypoint = plan.map_or_else(Vector3::zeros, |pl| pl.waypoints[pl.target_index(switches)]);
            let obs = Observation { time: t, state, moment_estimate: estimator.estimate(), waypoint, switches };
            match ctrl.command(&obs) {
                Ok(c) => u = ControlInput::clamped(c.0),
                Err(e) => {
                    termination = Termination::Crashed { time: t, reason: e.to_string() };
                    break;
                }
            }
        }
        if step % sensor_every == 0 {
            if let Some(&last) = log.commands.last() {
                let last: ControlInput = last;
                energy += 0.5 * (last.norm_squared() + u.norm_squared()) * sensor_dt;
            }
            let target = plan.map_or(0, |pl| pl.target_index(switches));
            log.push(t, &state, &u, &estimator.estimate(), target, energy);
        }
        if step == total_steps {
            if laps_wanted.is_none() {
                termination = Termination::Completed;
            }
            break;
        }
        match rk4_step(&state, &u, &m_true, p, cfg.physics_dt) {
            Ok(s) => state = s,
            Err(e) => {
                termination = Termination::Diverged { time: t, reason: e.to_string() };
                break;
            }
        }
    }
    log.termination = termination;
    Ok(log)
}
