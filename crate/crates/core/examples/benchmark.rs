//! Time-scaling benchmark of a waypoint policy against the tracking
//! baseline, with plot bundles written to `bench/`.
//! `cargo run --example benchmark -- waypoint.gcnp [none|weight]`

use gcnet_lab::bench::{alpha_grid, alpha_sweep_suite, export_figures, SuiteConfig};
use gcnet_lab::gcnet::GcnPolicy;
use gcnet_lab::sim::Disturbance;

fn main() -> gcnet_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(path) = args.next() else {
        eprintln!("usage: benchmark <waypoint.gcnp> [disturbance]");
        std::process::exit(2);
    };
    let policy = GcnPolicy::load(&path)?;
    let dist = Disturbance::parse(&args.next().unwrap_or_default())?;
    let mut report = alpha_sweep_suite(&policy, &alpha_grid(2.0), dist, &SuiteConfig::default())?;
    for r in &report.runs {
        let mark = match (r.crashed, r.least_energy) {
            (true, _) => "×",
            (_, true) => "+",
            _ => " ",
        };
        println!(
            "{mark} {:<28} E {:8.3}  T {:6.2} s  sat {:.2} s",
            r.label, r.total_energy, r.duration, r.saturation.total_time
        );
    }
    report.save("bench")?;
    for f in export_figures(&report, "bench/figures")? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
