use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use gcnet_lab::bench::{
    alpha_grid, alpha_sweep_suite, export_figures, hover_to_hover_suite, BenchmarkReport, SuiteConfig,
};
use gcnet_lab::dataset::{builtin_recipe, generate, write_manifest, Dataset, RecipeKind};
use gcnet_lab::dfbc::{rectangle_plan, solve_min_snap_detailed};
use gcnet_lab::gcnet::{train, GcnPolicy, TrainConfig};
use gcnet_lab::sim::{run_gcnet, Disturbance, SimConfig, StopCondition, SwitchPolicy, WaypointPlan};
use gcnet_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "gcnet-lab", version, about = "Optimal quadcopter control lab")]
struct Cli {
    /// Directory that receives all outputs and `manifest.json`.
    #[arg(long, global = true, default_value = "runs/default")]
    run_dir: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Multiplies dataset trajectory counts.
    #[arg(long, global = true, default_value_t = 1.0)]
    scale: f64,
    /// `none`, `weight` or `mx,my,mz` [N·m].
    #[arg(long, global = true, default_value = "none", allow_hyphen_values = true)]
    disturbance: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve optimal trajectories and write a training dataset.
    GenDataset {
        #[arg(long, value_parser = parse_kind)]
        kind: RecipeKind,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Train a policy on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// JSON training configuration; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fly a policy around the rectangle.
    Simulate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_enum, default_value_t = Plan::Timed)]
        plan: Plan,
        #[arg(long, default_value_t = 10)]
        laps: usize,
    },
    /// Solve the minimum-snap rectangle and write it as CSV.
    DfbcGen {
        #[arg(long, default_value_t = 10)]
        laps: usize,
        #[arg(long, default_value_t = 40.0)]
        time: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Run a benchmark suite.
    Sweep {
        #[arg(long, value_enum, default_value_t = Suite::Alpha)]
        suite: Suite,
        /// Policy for the time-scaling suite, or the nominal one.
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        adaptive: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        max_alpha: f64,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Verify a saved benchmark and export plot bundles.
    Report {
        #[arg(long)]
        bench: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Plan {
    Timed,
    Proximity,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Alpha,
    Hover,
}

fn parse_kind(s: &str) -> std::result::Result<RecipeKind, String> {
    RecipeKind::from_name(s).ok_or_else(|| format!("unknown kind '{s}'"))
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into())
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::Io { path: p.into(), source: e })
}

/// Appends one entry per command to `manifest.json`.
fn record(run_dir: &Path, entry: serde_json::Value) -> Result<()> {
    let path = run_dir.join("manifest.json");
    let mut manifest: serde_json::Value = match std::fs::read_to_string(&path) {
        Ok(t) => serde_json::from_str(&t)?,
        Err(_) => json!({ "tool": "gcnet-lab", "version": env!("CARGO_PKG_VERSION"), "steps": [] }),
    };
    manifest["steps"].as_array_mut().ok_or_else(|| Error::CorruptFile("manifest steps".into()))?.push(entry);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::Io { path, source: e })
}

fn run(cli: Cli) -> Result<()> {
    let dir = cli.run_dir.clone();
    mkdir(&dir)?;
    let disturbance = Disturbance::parse(&cli.disturbance)?;
    let sim_cfg = |seed: u64| {
        let mut c = SimConfig::default().with_disturbance(disturbance);
        c.seed = seed;
        c
    };
    let entry = match cli.cmd {
        Cmd::GenDataset { kind, workers } => {
            let mut recipe = builtin_recipe(kind).scaled(cli.scale);
            if let Some(s) = cli.seed {
                recipe = recipe.with_seed(s);
            }
            let g = generate(&recipe, workers)?;
            let sub = dir.join("datasets");
            mkdir(&sub)?;
            let path = sub.join(format!("{}.bin", kind.name()));
            g.dataset.save(&path)?;
            let manifest = write_manifest(&path, &recipe, &g.report)?;
            println!(
                "{}: {}/{} converged, {} train pairs, {} test pairs",
                kind.name(),
                g.report.converged,
                g.report.attempted,
                g.report.train_pairs,
                g.report.test_pairs
            );
            json!({ "command": "gen-dataset", "kind": kind.name(), "scale": cli.scale, "seed": recipe.seed,
                    "outputs": [path, manifest], "report": g.report })
        }
        Cmd::Train { dataset, config, out } => {
            let mut cfg: TrainConfig = match &config {
                Some(p) => serde_json::from_str(
                    &std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?,
                )?,
                None => TrainConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let ds = Dataset::load(&dataset)?;
            let (policy, log) = train(&ds, &cfg)?;
            let out = out.unwrap_or_else(|| dir.join("policies").join(format!("{}.gcnp", stem(&dataset))));
            if let Some(parent) = out.parent() {
                mkdir(parent)?;
            }
            policy.save(&out)?;
            let log_path = out.with_extension("train.json");
            std::fs::write(&log_path, serde_json::to_string_pretty(&log)?)
                .map_err(|e| Error::Io { path: log_path.clone(), source: e })?;
            println!(
                "{} epochs, test MSE {:.3e}, target reached: {}",
                log.epochs.len(),
                log.final_test_mse().unwrap_or(f64::NAN),
                log.reached_target
            );
            json!({ "command": "train", "dataset": dataset, "config": cfg, "outputs": [out, log_path],
                    "test_mse": log.final_test_mse(), "reached_target": log.reached_target })
        }
        Cmd::Simulate { policy, plan, laps } => {
            let pol = GcnPolicy::load(&policy)?;
            let wp = match plan {
                Plan::Timed => WaypointPlan::timed_rectangle(),
                Plan::Proximity => WaypointPlan::proximity_rectangle(),
            };
            let max_time = match wp.switch {
                SwitchPolicy::Timed { period } => period * 4.0 * laps as f64 + 5.0,
                SwitchPolicy::Proximity { .. } => 30.0 + 20.0 * laps as f64,
            };
            let cfg = sim_cfg(cli.seed.unwrap_or(0))
                .with_params(gcnet_lab::bench::policy_params(&pol))
                .with_stop(StopCondition::Laps { laps, max_time });
            let log = run_gcnet(&pol, &wp, &cfg, pol.kind.uses_moment())?;
            let sub = dir.join("flights");
            mkdir(&sub)?;
            let out = sub.join(format!("{}-{}.csv", stem(&policy), cli.disturbance.replace(',', "_")));
            log.save(&out)?;
            let s = log.summary();
            println!(
                "{:?}: {} laps in {:.2} s, E = {:.3}, switch MSE {:.4}",
                s.termination,
                s.laps_completed,
                s.duration,
                s.total_energy,
                s.switch_mse.unwrap_or(f64::NAN)
            );
            json!({ "command": "simulate", "policy": policy, "disturbance": disturbance, "laps": laps,
                    "outputs": [out], "total_energy": s.total_energy, "termination": s.termination })
        }
        Cmd::DfbcGen { laps, time, alpha } => {
            let sol = solve_min_snap_detailed(&rectangle_plan(laps, time)?)?;
            let traj = sol.trajectory.time_scale(alpha)?;
            let sub = dir.join("dfbc");
            mkdir(&sub)?;
            let out = sub.join(format!("rectangle-{laps}laps-a{alpha:.2}.csv"));
            traj.save(&out)?;
            println!(
                "{} segments over {:.3} s, KKT residual {:.2e}, snap cost {:.4}",
                traj.segments(),
                traj.duration(),
                sol.kkt_residual,
                traj.snap_cost()
            );
            json!({ "command": "dfbc-gen", "laps": laps, "time": time, "alpha": alpha, "outputs": [out],
                    "kkt_residual": sol.kkt_residual })
        }
        Cmd::Sweep { suite, policy, adaptive, max_alpha, workers } => {
            let pol = GcnPolicy::load(&policy)?;
            let cfg = SuiteConfig { seed: cli.seed.unwrap_or(0), workers, ..SuiteConfig::default() };
            let (name, mut report) = match suite {
                Suite::Alpha => ("alpha", alpha_sweep_suite(&pol, &alpha_grid(max_alpha), disturbance, &cfg)?),
                Suite::Hover => {
                    let path = adaptive.ok_or_else(|| Error::InvalidSpec("--adaptive is required".into()))?;
                    let ada = GcnPolicy::load(&path)?;
                    ("hover", hover_to_hover_suite(&pol, &ada, disturbance.total(), &cfg)?)
                }
            };
            let out = dir.join("bench").join(format!("{name}-{}", cli.disturbance.replace(',', "_")));
            report.save(&out)?;
            for r in &report.runs {
                println!(
                    "{:<36} E {:>8.3}  T {:>7.2} s  laps {}{}{}",
                    r.label,
                    r.total_energy,
                    r.duration,
                    r.lap_times.len(),
                    if r.crashed { "  crashed" } else { "" },
                    if r.least_energy { "  least energy" } else { "" }
                );
            }
            json!({ "command": "sweep", "suite": name, "policy": policy, "disturbance": disturbance,
                    "outputs": [out], "total_energy": report.total_energy() })
        }
        Cmd::Report { bench } => {
            let report = BenchmarkReport::load(&bench)?;
            let files = export_figures(&report, bench.join("figures"))?;
            if let Some(best) = report.least_energy_dfbc() {
                println!("least-energy tracking run: {} (E = {:.3})", best.label, best.total_energy);
            }
            if let Some(a) = report.max_completed_alpha() {
                println!("largest completed time scale: {a:.2}");
            }
            for c in &report.comparisons {
                if let (Some(n), Some(a)) = (c.nominal_energy, c.adaptive_energy) {
                    println!(
                        "{:?}: median leg energy nominal {:.3}, adaptive {:.3}",
                        c.disturbance.moment, n.median, a.median
                    );
                }
            }
            json!({ "command": "report", "bench": bench, "outputs": files })
        }
    };
    record(&dir, entry)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
