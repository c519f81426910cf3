use std::f64::consts::PI;

use gcnet_lab::model::{ControlInput, ModelParams, VehicleState};
use gcnet_lab::sim::{
    compare_measured_modeled, estimate_external_moment, frame_switch, simulate, Controller, Disturbance, FlightLog,
    Observation, SensorSample, SimConfig, StopCondition, Termination, WaypointPlan,
};
use gcnet_lab::Result;
use nalgebra::Vector3;
use proptest::prelude::*;

/// Static command whose rotor speeds cancel a constant roll or pitch moment
/// at rest: thrust `kw Σω² = g`, roll `kp(ω1² − ω2² − ω3² + ω4²) = −Mx`,
/// pitch `kq(ω1² + ω2² − ω3² − ω4²) = −My`, yaw balanced by symmetry.
fn trim(p: &ModelParams, mx: f64, my: f64) -> ControlInput {
    assert!(mx == 0.0 || my == 0.0);
    let total = p.g / p.kw;
    let (a, b) = if my == 0.0 {
        let d = -mx / p.kp / 2.0;
        ((total / 2.0 + d) / 2.0, (total / 2.0 - d) / 2.0)
    } else {
        let d = -my / p.kq / 2.0;
        ((total / 2.0 + d) / 2.0, (total / 2.0 - d) / 2.0)
    };
    let sq = if my == 0.0 { [a, b, b, a] } else { [a, a, b, b] };
    ControlInput(sq.map(|s| (s.sqrt() - p.omega_min) / p.rotor_span()))
}

struct Fixed(ControlInput);

impl Controller for Fixed {
    fn command(&mut self, _: &Observation) -> Result<ControlInput> {
        Ok(self.0)
    }
}

/// Open-loop wobble around hover.
struct Wobble(f64);

impl Controller for Wobble {
    fn command(&mut self, obs: &Observation) -> Result<ControlInput> {
        let s = 0.08 * (2.0 * PI * 1.3 * obs.time).sin();
        let c = 0.05 * (2.0 * PI * 0.7 * obs.time).cos();
        let h = self.0;
        Ok(ControlInput([h + s + c, h - s + c, h - s - c, h + s - c]))
    }
}

fn hover_start(p: &ModelParams, speeds: &ControlInput) -> VehicleState {
    let mut s = VehicleState::hover(Vector3::zeros(), p.hover_rotor_speed());
    s.rotors = speeds.0.map(|u| p.rotor_speed_for(u));
    s
}

#[test]
fn estimator_recovers_constant_moment_in_trimmed_hover() {
    let p = ModelParams::bebop();
    for (mx, my) in [(0.01, 0.0), (0.0, -0.02), (-0.04, 0.0), (0.0, 0.04)] {
        let u = trim(&p, mx, my);
        let cfg = SimConfig::default()
            .with_disturbance(Disturbance::moment(mx, my, 0.0))
            .with_initial(hover_start(&p, &u))
            .with_stop(StopCondition::Duration(3.0));
        let log = simulate(&mut Fixed(u), None, &cfg).unwrap();
        assert!(log.completed());
        let last = log.states.last().unwrap();
        assert!(last.position.norm() < 1e-6 && last.rates.norm() < 1e-9, "not trimmed");
        let i0 = log.index_at(1.0);
        let n = (log.len() - i0) as f64;
        let mean: Vector3<f64> = log.estimates[i0..].iter().sum::<Vector3<f64>>() / n;
        let want = Vector3::new(mx, my, 0.0);
        assert!((mean - want).norm() <= 0.05 * want.norm(), "{mean:?} vs {want:?}");
        let e = log.estimates[log.index_at(1.0)];
        assert!((e - want).norm() <= 0.05 * want.norm());
    }
}

#[test]
fn estimate_lags_a_disturbance_step() {
    let p = ModelParams::bebop();
    let hover = ControlInput::uniform(p.hover_command());
    let fs = 500.0;
    let state = VehicleState::hover(Vector3::zeros(), p.hover_rotor_speed());
    // The plant starts rolling at 0.2 s under a step of 0.01 N·m; before
    // the first filtered response the estimate is still zero.
    let dt = 1.0 / fs;
    let mut s = state;
    let mut samples = Vec::new();
    let mut truth = Vec::new();
    for k in 0..500 {
        let m = if k as f64 * dt >= 0.2 { 0.01 } else { 0.0 };
        samples.push(SensorSample::exact(&s));
        truth.push(m);
        s = gcnet_lab::model::rk4_step(&s, &hover, &gcnet_lab::model::ExternalMoment::new(m, 0.0, 0.0), &p, dt)
            .unwrap();
    }
    let est = estimate_external_moment(&samples, &p, fs).unwrap();
    let half_truth = truth.iter().position(|m| *m >= 0.005).unwrap();
    let half_est = est.iter().position(|m| m[0] >= 0.005).unwrap();
    assert!(half_est > half_truth, "{half_est} <= {half_truth}");
    assert!((est.last().unwrap()[0] - 0.01).abs() < 5e-4);
    // Undisturbed segment stays at zero.
    assert!(est[..100].iter().all(|m| m.norm() < 1e-9));
}

#[test]
fn energy_bookkeeping_and_timestamps() {
    let p = ModelParams::bebop();
    let cfg = SimConfig::default().with_stop(StopCondition::Duration(3.0));
    let log = simulate(&mut Wobble(p.hover_command()), None, &cfg).unwrap();
    assert!(log.completed());
    let mut e = 0.0;
    for i in 1..log.len() {
        assert!(log.time[i] > log.time[i - 1]);
        assert!(log.energy[i] >= log.energy[i - 1]);
        let dt = log.time[i] - log.time[i - 1];
        e += 0.5 * dt * (log.commands[i - 1].norm_squared() + log.commands[i].norm_squared());
        assert!((log.energy[i] - e).abs() < 1e-9);
        assert!(log.energy[i] <= 4.0 * log.time[i] + 1e-12);
    }
}

#[test]
fn simulation_is_deterministic_including_noise() {
    let p = ModelParams::bebop();
    let mut cfg = SimConfig::default().with_stop(StopCondition::Duration(2.0));
    cfg.gyro_noise = 0.01;
    cfg.seed = 42;
    let a = simulate(&mut Wobble(p.hover_command()), None, &cfg).unwrap();
    let b = simulate(&mut Wobble(p.hover_command()), None, &cfg).unwrap();
    assert_eq!(a, b);
    cfg.seed = 43;
    let c = simulate(&mut Wobble(p.hover_command()), None, &cfg).unwrap();
    assert_ne!(a.estimates, c.estimates);
}

#[test]
fn residuals_vanish_with_exact_model_and_recover_injection() {
    let p = ModelParams::bebop();
    let cfg = SimConfig::default().with_stop(StopCondition::Duration(3.0));
    let log = simulate(&mut Wobble(p.hover_command()), None, &cfg).unwrap();
    let res = compare_measured_modeled(&log, &p).unwrap();
    assert_eq!(res.time.len(), log.len());
    let r = res.interior.clone();
    assert!(r.start < 30 && r.end > log.len() - 30);
    let rms = |v: &[f64]| (v[r.clone()].iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt();
    for k in 0..3 {
        let signal = rms(&res.moment_measured[k]);
        let resid = rms(&res.moment_residual(k));
        assert!(resid < 0.02 * signal, "moment axis {k}: {resid} vs {signal}");
        let signal = rms(&res.force_measured[k]);
        let resid = rms(&res.force_residual(k));
        assert!(resid < 0.02 * signal, "force axis {k}: {resid} vs {signal}");
    }

    let u = trim(&p, 0.0, -0.02);
    let cfg = SimConfig::default()
        .with_disturbance(Disturbance::moment(0.0, -0.02, 0.0))
        .with_initial(hover_start(&p, &u))
        .with_stop(StopCondition::Duration(2.0));
    let log = simulate(&mut Fixed(u), None, &cfg).unwrap();
    let res = compare_measured_modeled(&log, &p).unwrap();
    let my = res.moment_residual(1);
    let mean = my.iter().sum::<f64>() / my.len() as f64;
    assert!((mean + 0.02).abs() < 1e-3, "{mean}");
}

#[test]
fn flipping_over_is_reported_as_divergence() {
    let cfg = SimConfig::default().with_stop(StopCondition::Duration(10.0));
    let mut ctrl = Fixed(ControlInput([1.0, 0.0, 0.0, 1.0]));
    let log = simulate(&mut ctrl, None, &cfg).unwrap();
    assert!(matches!(log.termination, Termination::Diverged { .. }), "{:?}", log.termination);
    assert!(log.ok().is_err());
    assert!(log.duration() < 10.0 && !log.is_empty());
}

#[test]
fn timed_plan_switches_every_period_and_counts_laps() {
    let p = ModelParams::bebop();
    let cfg = SimConfig::default().with_stop(StopCondition::Laps { laps: 2, max_time: 60.0 });
    let log =
        simulate(&mut Fixed(ControlInput::uniform(p.hover_command())), Some(&WaypointPlan::timed_rectangle()), &cfg)
            .unwrap();
    assert!(log.completed());
    assert_eq!(log.switches.len(), 8);
    for (i, s) in log.switches.iter().enumerate() {
        assert!((s.time - 4.0 * (i + 1) as f64).abs() < 1e-9);
    }
    assert_eq!(log.lap_times, vec![16.0, 32.0]);
    // Hovering at the start never reaches the first corner.
    assert!((log.switches[0].distance - 4.0).abs() < 1e-6);
}

#[test]
fn flight_log_round_trip() {
    let p = ModelParams::bebop();
    let cfg = SimConfig::default().with_stop(StopCondition::Laps { laps: 1, max_time: 30.0 });
    let hover = ControlInput::uniform(p.hover_command());
    let log = simulate(&mut Fixed(hover), Some(&WaypointPlan::timed_rectangle()), &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flight.csv");
    log.save(&path).unwrap();
    let back = FlightLog::load(&path).unwrap();
    assert_eq!(back, log);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("flight.csv.json")).unwrap()).unwrap();
    assert_eq!(summary["laps_completed"], 1);
}

#[test]
fn rate_configuration_is_validated() {
    let cfg = SimConfig { control_rate: 300.0, ..SimConfig::default() };
    assert!(simulate(&mut Fixed(ControlInput::uniform(0.5)), None, &cfg).is_err());
}

fn arb_state() -> impl Strategy<Value = VehicleState> {
    (prop::array::uniform3(-10.0..10.0f64), prop::array::uniform3(-5.0..5.0f64), -PI..PI, -0.5..0.5f64).prop_map(
        |(p, v, psi, phi)| {
            let mut s = VehicleState::hover(Vector3::from(p), 7500.0);
            s.velocity = Vector3::from(v);
            s.euler = Vector3::new(phi, 0.1, psi);
            s
        },
    )
}

proptest! {
    #[test]
    fn frame_switch_properties(s in arb_state(), wp in prop::array::uniform3(-5.0..5.0f64), turns in 0usize..12) {
        let wp = Vector3::from(wp);
        let v = frame_switch(&s, &wp, turns);
        prop_assert!(((v.position.norm()) - (s.position - wp).norm()).abs() < 1e-9);
        prop_assert!((v.velocity.norm() - s.velocity.norm()).abs() < 1e-9);
        prop_assert!(v.euler[2] > -PI && v.euler[2] <= PI);
        prop_assert_eq!(v.rates, s.rates);
        prop_assert_eq!(v.euler[0], s.euler[0]);
        let four = frame_switch(&s, &wp, turns + 4);
        prop_assert!((four.position - v.position).norm() < 1e-9);
        prop_assert!((four.euler[2] - v.euler[2]).abs() < 1e-9 || (four.euler[2] - v.euler[2]).abs() > 2.0 * PI - 1e-9);
        // One turn maps the next leg direction (+y) onto +x.
        let mut ahead = s;
        ahead.position = wp + Vector3::new(0.0, 1.0, 0.0);
        let one = frame_switch(&ahead, &wp, 1);
        prop_assert!((one.position - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }
}
