//! Benchmark suites: nominal against adaptive network on the timed
//! rectangle, and a time-scaling sweep of the polynomial baseline against a
//! network flight on the proximity rectangle.

mod metrics;
mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{leg_metrics, mann_whitney, median, LegMetrics, Quantiles, SaturationStats, ARRIVAL_RADIUS};
pub use report::{export_figures, BenchmarkReport, LegComparison, RunRecord};

use crate::dataset::RecipeKind;
use crate::dfbc::{rectangle_plan, run_dfbc_with, solve_min_snap, TrackingGains};
use crate::error::{Error, Result};
use crate::gcnet::GcnPolicy;
use crate::model::{ExternalMoment, ModelParams};
use crate::sim::{run_gcnet, Disturbance, FlightLog, SimConfig, StopCondition, WaypointPlan};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    pub hover_laps: usize,
    pub sweep_laps: usize,
    /// Laps and duration of the polynomial plan before time scaling.
    pub plan_laps: usize,
    pub plan_time: f64,
    pub gains: TrackingGains,
    pub gyro_noise: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            hover_laps: 10,
            sweep_laps: 4,
            plan_laps: 10,
            plan_time: 40.0,
            gains: TrackingGains::default(),
            gyro_noise: 0.0,
        }
    }
}

impl SuiteConfig {
    fn sim(&self, params: ModelParams, disturbance: Disturbance, stop: StopCondition) -> SimConfig {
        let mut cfg = SimConfig::default().with_params(params).with_disturbance(disturbance).with_stop(stop);
        cfg.seed = self.seed;
        cfg.gyro_noise = self.gyro_noise;
        cfg
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new().num_threads(self.workers).build().map_err(|e| Error::InvalidSpec(e.to_string()))
    }
}

/// Time scales 0.70, 0.75, … up to `max`, each the exact decimal.
pub fn alpha_grid(max: f64) -> Vec<f64> {
    (0..).map(|k| (70 + 5 * k) as f64 / 100.0).take_while(|a| *a <= max + 1e-9).collect()
}

/// Vehicle the policy was trained for.
pub fn policy_params(policy: &GcnPolicy) -> ModelParams {
    ModelParams::bebop().with_rotor_limits(policy.norm.omega_min, policy.norm.omega_max)
}

fn lap_budget(laps: usize) -> f64 {
    30.0 + 20.0 * laps as f64
}

/// Timed rectangle with each policy, undisturbed and under `disturbance`.
pub fn hover_to_hover_suite(
    nominal: &GcnPolicy,
    adaptive: &GcnPolicy,
    disturbance: ExternalMoment,
    cfg: &SuiteConfig,
) -> Result<BenchmarkReport> {
    if nominal.kind != RecipeKind::Nominal {
        return Err(Error::DimensionMismatch { expected: 16, got: nominal.input_dim() });
    }
    if !adaptive.kind.uses_moment() {
        return Err(Error::DimensionMismatch { expected: 19, got: adaptive.input_dim() });
    }
    let m = disturbance.as_array();
    let conditions = [Disturbance::none(), Disturbance::moment(m[0], m[1], m[2])];
    let plan = WaypointPlan::timed_rectangle();
    let stop = StopCondition::Laps { laps: cfg.hover_laps, max_time: lap_budget(cfg.hover_laps) * 1.0 };
    let mut jobs = Vec::new();
    for d in conditions {
        jobs.push(("nominal", nominal, false, d));
        jobs.push(("adaptive", adaptive, true, d));
    }
    let logs: Vec<Result<FlightLog>> = cfg.pool()?.install(|| {
        jobs.par_iter()
            .map(|(_, policy, ad, d)| run_gcnet(policy, &plan, &cfg.sim(policy_params(policy), *d, stop), *ad))
            .collect()
    });
    let mut report = BenchmarkReport::new("hover-to-hover");
    for ((name, _, _, d), log) in jobs.iter().zip(logs) {
        let log = log?;
        let label = format!("gcnet-{name}-{}", disturbance_label(d));
        let mut rec = RunRecord::from_log(&label, &format!("gcnet-{name}"), None, *d, &log);
        rec.legs = leg_metrics(&log, &plan);
        report.push(rec, log);
    }
    for d in conditions {
        report.comparisons.push(LegComparison::between(&report, d)?);
    }
    Ok(report)
}

/// One tracking run per time scale plus one network flight on the
/// proximity rectangle, all on the policy's vehicle.
pub fn alpha_sweep_suite(
    policy: &GcnPolicy,
    alphas: &[f64],
    disturbance: Disturbance,
    cfg: &SuiteConfig,
) -> Result<BenchmarkReport> {
    if alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::InvalidSpec("time scales must be positive".into()));
    }
    let params = policy_params(policy);
    let base = solve_min_snap(&rectangle_plan(cfg.plan_laps, cfg.plan_time)?)?;
    let per_lap = 4;
    let logs: Vec<Result<(f64, FlightLog, Vec<f64>)>> = cfg.pool()?.install(|| {
        alphas
            .par_iter()
            .map(|&alpha| {
                let traj = base.time_scale(alpha)?;
                let laps = traj.lap_boundaries(per_lap);
                let end = *laps
                    .get(cfg.sweep_laps.saturating_sub(1))
                    .ok_or_else(|| Error::InvalidSpec("plan shorter than the sweep".into()))?;
                let sim = cfg.sim(params, disturbance, StopCondition::Duration(end));
                let log = run_dfbc_with(&traj, &sim, &cfg.gains)?;
                Ok((alpha, log, laps[..cfg.sweep_laps].to_vec()))
            })
            .collect()
    });
    let mut report = BenchmarkReport::new("alpha-sweep");
    for r in logs {
        let (alpha, mut log, laps) = r?;
        if log.completed() {
            log.lap_times = laps;
        } else {
            log.lap_times = laps.into_iter().filter(|t| *t <= log.duration()).collect();
        }
        let label = format!("dfbc-a{:.2}-{}", alpha, disturbance_label(&disturbance));
        let rec = RunRecord::from_log(&label, "dfbc", Some(alpha), disturbance, &log);
        report.push(rec, log);
    }
    let plan = WaypointPlan::proximity_rectangle();
    let stop = StopCondition::Laps { laps: cfg.sweep_laps, max_time: lap_budget(cfg.sweep_laps) };
    let log = run_gcnet(policy, &plan, &cfg.sim(params, disturbance, stop), policy.kind.uses_moment())?;
    let mut rec = RunRecord::from_log(
        &format!("gcnet-{}-{}", policy.kind.name(), disturbance_label(&disturbance)),
        &format!("gcnet-{}", policy.kind.name()),
        None,
        disturbance,
        &log,
    );
    rec.legs = leg_metrics(&log, &plan);
    report.push(rec, log);
    report.mark_least_energy();
    Ok(report)
}

pub fn disturbance_label(d: &Disturbance) -> String {
    if *d == Disturbance::none() {
        "undisturbed".into()
    } else if *d == Disturbance::added_weight() {
        "weight".into()
    } else {
        let m = d.total().as_array();
        format!("m{:+.3}{:+.3}{:+.3}", m[0], m[1], m[2])
    }
}
