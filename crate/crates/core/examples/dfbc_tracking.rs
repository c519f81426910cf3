//! Tracks the time-scaled rectangle with the cascaded controller until the
//! first crash.

use gcnet_lab::bench::SaturationStats;
use gcnet_lab::dfbc::{rectangle_plan, run_dfbc, solve_min_snap};
use gcnet_lab::model::ModelParams;
use gcnet_lab::sim::{Disturbance, SimConfig, StopCondition};

fn main() -> gcnet_lab::Result<()> {
    let dist = Disturbance::parse(&std::env::args().nth(1).unwrap_or_default())?;
    let traj = solve_min_snap(&rectangle_plan(10, 40.0)?)?;
    let params = ModelParams::bebop().with_rotor_limits(3000.0, 12000.0);
    for k in 0.. {
        let alpha = (70 + 10 * k) as f64 / 100.0;
        let tr = traj.time_scale(alpha)?;
        let end = tr.lap_boundaries(4)[3];
        let cfg =
            SimConfig::default().with_params(params).with_disturbance(dist).with_stop(StopCondition::Duration(end));
        let log = run_dfbc(&tr, &cfg)?;
        let err =
            log.states.iter().zip(&log.time).map(|(s, t)| (s.position - tr.position(*t)).norm()).fold(0.0, f64::max);
        let sat = SaturationStats::of(&log);
        println!(
            "α = {alpha:.2}: E = {:7.3} over {:5.2} s, max error {err:.3} m, saturated {:.2} s (longest {:.2} s) {:?}",
            log.total_energy(),
            log.duration(),
            sat.total_time,
            sat.longest,
            log.termination
        );
        if !log.completed() {
            break;
        }
    }
    Ok(())
}
