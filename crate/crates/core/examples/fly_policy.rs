//! Flies a trained policy around the 4 × 3 m rectangle and saves the log.
//! `cargo run --example fly_policy -- policy.gcnp [none|weight|mx,my,mz]`

use gcnet_lab::bench::{leg_metrics, policy_params};
use gcnet_lab::gcnet::GcnPolicy;
use gcnet_lab::sim::{run_gcnet, Disturbance, SimConfig, StopCondition, SwitchPolicy, WaypointPlan};

fn main() -> gcnet_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(path) = args.next() else {
        eprintln!("usage: fly_policy <policy.gcnp> [disturbance]");
        std::process::exit(2);
    };
    let policy = GcnPolicy::load(&path)?;
    let dist = Disturbance::parse(&args.next().unwrap_or_default())?;
    let plan = match policy.kind.name() {
        "waypoint" => WaypointPlan::proximity_rectangle(),
        _ => WaypointPlan::timed_rectangle(),
    };
    let laps = if matches!(plan.switch, SwitchPolicy::Timed { .. }) { 10 } else { 4 };
    let cfg = SimConfig::default()
        .with_params(policy_params(&policy))
        .with_disturbance(dist)
        .with_stop(StopCondition::Laps { laps, max_time: 200.0 });
    let log = run_gcnet(&policy, &plan, &cfg, policy.kind.uses_moment())?;
    let s = log.summary();
    println!("{:?}, {} laps in {:.2} s, E = {:.3}", s.termination, s.laps_completed, s.duration, s.total_energy);
    println!("lap times {:.2?}", s.lap_times);
    for l in leg_metrics(&log, &plan).iter().take(8) {
        println!(
            "leg {} {:?} -> {:?}: arrival {:.2} s{}, E {:.3}, overshoot {:+.3} m",
            l.index,
            l.from,
            l.to,
            l.arrival,
            if l.reached { "" } else { " (closest)" },
            l.energy,
            l.overshoot
        );
    }
    log.save("flight.csv")
}
