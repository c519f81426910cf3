//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.
//!
//! The trained-policy criteria need three generated datasets and three
//! trained networks (about half an hour on one core). They are produced
//! fresh on every run unless `GCNET_LAB_CACHE=<dir>` points at a directory,
//! in which case they are written there on first use and reloaded after.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::Instant;

use gcnet_lab::bench::{alpha_grid, alpha_sweep_suite, hover_to_hover_suite, policy_params, SuiteConfig};
use gcnet_lab::dataset::{builtin_recipe, generate, Dataset, GenerationReport, RecipeKind, DESK_NOMINAL};
use gcnet_lab::dfbc::{solve_min_snap, PolyTrajectory, SnapProblem, Waypoint};
use gcnet_lab::filters::ButterworthLp2;
use gcnet_lab::gcnet::{train, GcnPolicy, TrainConfig};
use gcnet_lab::model::{body_force, rk4_step, ExternalMoment, ModelParams, VehicleState};
use gcnet_lab::sim::{run_gcnet, Disturbance, SimConfig, StopCondition, SwitchPolicy, WaypointPlan};
use gcnet_lab::trajopt::{
    double_integrator_problem, ipm, refine, IpmOptions, IpmStatus, Nlp, OcpSpec, OptimalTrajectory,
};
use nalgebra::Vector3;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Trained {
    report: GenerationReport,
    trajectories: Vec<OptimalTrajectory>,
    dataset: Dataset,
    policy: GcnPolicy,
}

struct Lab {
    nominal: Trained,
    adaptive: Trained,
    waypoint: Trained,
}

fn build(kind: RecipeKind, cache: Option<&Path>) -> Trained {
    let recipe = builtin_recipe(kind);
    let name = kind.name();
    let paths = cache.map(|d| {
        (
            d.join(format!("{name}.bin")),
            d.join(format!("{name}.trajectories.json")),
            d.join(format!("{name}.report.json")),
            d.join(format!("{name}.gcnp")),
        )
    });
    if let Some((ds, tr, rep, pol)) = &paths {
        if [ds, tr, rep, pol].iter().all(|p| p.exists()) {
            eprintln!("lab: reusing cached {name} artifacts");
            return Trained {
                report: serde_json::from_str(&std::fs::read_to_string(rep).unwrap()).unwrap(),
                trajectories: serde_json::from_str(&std::fs::read_to_string(tr).unwrap()).unwrap(),
                dataset: Dataset::load(ds).unwrap(),
                policy: GcnPolicy::load(pol).unwrap(),
            };
        }
    }
    let t = Instant::now();
    let g = generate(&recipe, 1).expect("dataset generation");
    eprintln!("lab: {name} dataset {:?} in {:.0} s", g.report, t.elapsed().as_secs_f64());
    let t = Instant::now();
    let (policy, log) = train(&g.dataset, &TrainConfig::default()).expect("training");
    eprintln!(
        "lab: {name} policy, {} epochs, test MSE {:.3e}, {:.0} s",
        log.epochs.len(),
        log.final_test_mse().unwrap_or(f64::NAN),
        t.elapsed().as_secs_f64()
    );
    if let Some((ds, tr, rep, pol)) = &paths {
        std::fs::create_dir_all(ds.parent().unwrap()).unwrap();
        g.dataset.save(ds).unwrap();
        std::fs::write(tr, serde_json::to_string(&g.trajectories).unwrap()).unwrap();
        std::fs::write(rep, serde_json::to_string(&g.report).unwrap()).unwrap();
        policy.save(pol).unwrap();
    }
    Trained { report: g.report, trajectories: g.trajectories, dataset: g.dataset, policy }
}

fn lab() -> &'static Lab {
    static LAB: OnceLock<Lab> = OnceLock::new();
    LAB.get_or_init(|| {
        let cache = std::env::var_os("GCNET_LAB_CACHE").map(PathBuf::from);
        Lab {
            nominal: build(RecipeKind::Nominal, cache.as_deref()),
            adaptive: build(RecipeKind::Adaptive, cache.as_deref()),
            waypoint: build(RecipeKind::Waypoint, cache.as_deref()),
        }
    })
}

fn solver_oracle() -> Outcome {
    let t0 = Instant::now();
    let col = double_integrator_problem(1.0, 1.0, 30);
    let rep = ipm::solve(&col, &vec![0.0; col.n_vars()], &IpmOptions::default());
    let secs = t0.elapsed().as_secs_f64();
    if rep.status != IpmStatus::Converged {
        return Err(format!("solver status {:?}", rep.status));
    }
    // Minimum ∫u² moving 1 m in 1 s from rest to rest: u = 6 − 12t, E = 12.
    let (_, us, widths) = col.unpack(&rep.z);
    let (mut se, mut sr) = (0.0, 0.0);
    for (k, u) in us.iter().enumerate() {
        let exact = 6.0 - 12.0 * k as f64 * widths[0];
        se += (u[0] - exact).powi(2);
        sr += exact * exact;
    }
    let e_err = (rep.objective - 12.0).abs() / 12.0;
    let u_err = (se / sr).sqrt();
    check(
        e_err < 0.01 && u_err < 0.02 && secs < 10.0,
        format!("E = {:.5} (rel err {e_err:.2e}), u RMS rel err {u_err:.2e}, {secs:.2} s", rep.objective),
    )
}

fn rollout_error(tr: &OptimalTrajectory) -> f64 {
    let dt = tr.dt() / 20.0;
    let mut s = tr.states[0];
    for k in 0..tr.segments() {
        for j in 0..20 {
            let u = tr.control_at((k as f64 + (j as f64 + 0.5) / 20.0) * tr.dt());
            s = rk4_step(&s, &u, &tr.spec.m_ext, &tr.spec.params, dt).unwrap();
        }
    }
    (s.position - tr.states.last().unwrap().position).norm()
}

fn collocation_consistency() -> Outcome {
    let lab = lab();
    let all: Vec<&OptimalTrajectory> =
        [&lab.nominal, &lab.adaptive, &lab.waypoint].iter().flat_map(|t| &t.trajectories).collect();
    let worst_defect = all.iter().map(|t| t.max_defect).fold(0.0, f64::max);
    let all_converged = all.iter().all(|t| t.converged());
    let coarse: Vec<f64> = all.iter().map(|t| rollout_error(t)).collect();
    println!(
        "note: on the N = {} dataset mesh, {} of {} trajectories miss by 0.15 m or more (worst {:.3} m)",
        OcpSpec::DEFAULT_SEGMENTS,
        coarse.iter().filter(|e| **e >= 0.15).count(),
        all.len(),
        coarse.iter().fold(0.0f64, |a, b| a.max(*b))
    );
    // Validation re-solves of every dataset spec on the finer mesh.
    let fine: Vec<OptimalTrajectory> =
        all.par_iter().map(|t| refine(t, OcpSpec::VALIDATION_SEGMENTS).expect("transcription")).collect();
    let fine_converged = fine.iter().filter(|t| t.converged()).count();
    let fine_defect = fine.iter().filter(|t| t.converged()).map(|t| t.max_defect).fold(0.0, f64::max);
    let worst_roll = fine.iter().filter(|t| t.converged()).map(rollout_error).fold(0.0, f64::max);
    check(
        all_converged
            && worst_defect <= 1e-6
            && fine_converged == fine.len()
            && fine_defect <= 1e-6
            && worst_roll < 0.15,
        format!(
            "{} trajectories, max defect {worst_defect:.2e}; N = {} re-solves: {fine_converged} converged, \
             max defect {fine_defect:.2e}, worst terminal miss {worst_roll:.4} m",
            all.len(),
            OcpSpec::VALIDATION_SEGMENTS
        ),
    )
}

fn hover_balance() -> Outcome {
    // Table constants: k_ω = 4.36e-8 m s⁻² rpm⁻², g = 9.81 m/s².
    let (kw, g): (f64, f64) = (4.36e-8, 9.81);
    let w_h = (g / (4.0 * kw)).sqrt();
    let p = ModelParams::bebop();
    let s = VehicleState::hover(Vector3::zeros(), w_h);
    let fz = body_force(&s, &p)[2];
    let model_wh = p.hover_rotor_speed();
    check(
        (fz + g).abs() < 0.02 && (model_wh - w_h).abs() < 1e-6,
        format!("ω_h = {w_h:.2} rpm, F_z + g = {:.2e} m/s²", fz + g),
    )
}

fn network_training() -> Outcome {
    let lab = lab();
    let n = &lab.nominal;
    let ds = &n.dataset;
    let mse = n.policy.mse(&ds.test.inputs, &ds.test.targets);
    // Backprop against central differences on a slice of the test set.
    let dim = ds.input_dim();
    let (xs, ys) = (&ds.test.inputs[..32 * dim], &ds.test.targets[..32 * 4]);
    let mut p = n.policy.clone();
    let (_, grad) = p.loss_gradient(xs, ys);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in (0..p.params().len()).step_by(7) {
        let orig = p.params()[i];
        p.params_mut()[i] = orig + h;
        let lp = p.mse(xs, ys);
        p.params_mut()[i] = orig - h;
        let lm = p.mse(xs, ys);
        p.params_mut()[i] = orig;
        let fd = (lp - lm) / (2.0 * h);
        let scale = grad[i].abs().max(fd.abs());
        if scale > 1e-6 {
            worst = worst.max((grad[i] - fd).abs() / scale);
        }
    }
    let segments_ok = n.trajectories.iter().all(|t| t.segments() == 30);
    check(
        n.report.converged == DESK_NOMINAL && segments_ok && mse <= 1e-3 && worst < 1e-4,
        format!(
            "{} trajectories (N = 30), test MSE {mse:.3e} (full-scale 3e-4 needs the 100k set, not asserted), \
             backprop vs differences {worst:.1e}",
            n.report.converged
        ),
    )
}

fn closed_loop_nominal() -> Outcome {
    let pol = &lab().nominal.policy;
    let t0 = Instant::now();
    let cfg = SimConfig::default()
        .with_params(policy_params(pol))
        .with_stop(StopCondition::Laps { laps: 10, max_time: 170.0 });
    let log = run_gcnet(pol, &WaypointPlan::timed_rectangle(), &cfg, false).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let worst = log.switches.iter().map(|s| s.distance).fold(0.0, f64::max);
    check(
        log.completed() && log.lap_times.len() == 10 && log.switches.len() == 40 && worst < 0.3 && secs < 120.0,
        format!("{} laps, worst distance at a switch {worst:.3} m, {secs:.1} s", log.lap_times.len()),
    )
}

fn adaptive_recovery() -> Outcome {
    let lab = lab();
    let pol = &lab.adaptive.policy;
    let my = -0.02;
    let hover = WaypointPlan { waypoints: vec![Vector3::zeros()], switch: SwitchPolicy::Timed { period: 1e9 } };
    let cfg = SimConfig::default()
        .with_params(policy_params(pol))
        .with_disturbance(Disturbance::moment(0.0, my, 0.0))
        .with_stop(StopCondition::Duration(10.0));
    let log = run_gcnet(pol, &hover, &cfg, true).map_err(|e| e.to_string())?;
    let settled = log.index_at(1.0);
    let est_err = log.estimates[settled..].iter().map(|m| (m[1] - my).abs() / my.abs()).fold(0.0, f64::max);

    let report = hover_to_hover_suite(
        &lab.nominal.policy,
        pol,
        ExternalMoment(Vector3::new(0.0, my, 0.0)),
        &SuiteConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let c = &report.comparisons[1];
    let q = |x: Option<gcnet_lab::bench::Quantiles>| x.map_or(f64::NAN, |q| q.median);
    let (en, ea) = (q(c.nominal_energy), q(c.adaptive_energy));
    let (on, oa) = (q(c.nominal_overshoot), q(c.adaptive_overshoot));
    let u = &report.comparisons[0];
    eprintln!(
        "note: undisturbed long-leg energy medians nominal {:.3} adaptive {:.3}, rank test p = {:.2e}",
        q(u.nominal_energy),
        q(u.adaptive_energy),
        u.energy_test.map_or(f64::NAN, |t| t.1)
    );
    check(
        log.completed() && est_err <= 0.05 && ea < en && oa < on,
        format!(
            "estimate within {:.2}% after 1 s; median leg E adaptive {ea:.3} < nominal {en:.3}; \
             median overshoot adaptive {oa:.3} m < nominal {on:.3} m",
            100.0 * est_err
        ),
    )
}

fn min_snap_oracle() -> Outcome {
    let ends = vec![
        Waypoint::at(Vector3::zeros()).with_yaw(0.0).at_rest(3),
        Waypoint::at(Vector3::new(1.0, 0.0, 0.0)).with_yaw(0.0).at_rest(3),
    ];
    let p = solve_min_snap(&SnapProblem::new(ends, vec![1.0]).with_order(7)).map_err(|e| e.to_string())?;
    let want = [0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0];
    let coef_err = p.coeffs[0][0].iter().zip(want).map(|(c, w)| (c - w).abs()).fold(0.0, f64::max);

    // Multi-segment trajectory for the scaling checks.
    let wps = vec![
        Waypoint::at(Vector3::zeros()).with_yaw(0.0).at_rest(2),
        Waypoint::at(Vector3::new(2.0, 1.0, -0.5)).with_yaw(0.5),
        Waypoint::at(Vector3::new(3.0, -1.0, 0.0)).with_yaw(1.0),
        Waypoint::at(Vector3::new(0.5, 0.0, 0.3)).with_yaw(0.2).at_rest(2),
    ];
    let base = solve_min_snap(&SnapProblem::new(wps, vec![1.2, 0.9, 1.5])).map_err(|e| e.to_string())?;
    let mut id_err: f64 = 0.0;
    let mut ratio_err: f64 = 0.0;
    for alpha in [0.7, 1.3, 2.0] {
        let s = base.time_scale(alpha).map_err(|e| e.to_string())?;
        for i in 0..=200 {
            let t = s.duration() * i as f64 / 200.0;
            let (a, b) = (s.eval(t, 0), base.eval(alpha * t, 0));
            for k in 0..4 {
                id_err = id_err.max((a[k] - b[k]).abs() / b[k].abs().max(1.0));
            }
        }
        let ratio = quadrature_snap(&s) / quadrature_snap(&base);
        ratio_err = ratio_err.max((ratio / alpha.powi(7) - 1.0).abs());
    }
    check(
        coef_err < 1e-8 && id_err < 1e-12 && ratio_err < 1e-6,
        format!("coefficient error {coef_err:.1e}, p_α(t) vs p(αt) {id_err:.1e}, α⁷ ratio error {ratio_err:.1e}"),
    )
}

/// ∫ (x⁽⁴⁾² + y⁽⁴⁾² + z⁽⁴⁾²) dt with 8-point Gauss–Legendre per segment.
fn quadrature_snap(p: &PolyTrajectory) -> f64 {
    const GL8: [(f64, f64); 4] = [
        (0.183_434_642_495_649_8, 0.362_683_783_378_362),
        (0.525_532_409_916_329, 0.313_706_645_877_887_3),
        (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
        (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    ];
    p.knots
        .windows(2)
        .map(|k| {
            let (m, h) = (0.5 * (k[0] + k[1]), 0.5 * (k[1] - k[0]));
            let f = |t: f64| p.eval(t, 4)[..3].iter().map(|v| v * v).sum::<f64>();
            GL8.iter().map(|(x, w)| w * (f(m + h * x) + f(m - h * x))).sum::<f64>() * h
        })
        .sum()
}

fn butterworth() -> Outcome {
    let (fc, fs) = (8.0, 500.0);
    let f = ButterworthLp2::design(fc, fs).map_err(|e| e.to_string())?;
    let dc = (f.coefficients().dc_gain() - 1.0).abs();
    let db = 20.0 * f.coefficients().magnitude(fc, fs).log10();
    // Band-limited test signal: two tones below the cutoff.
    let n = 6000;
    let x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            (2.0 * PI * 1.3 * t).sin() + 0.5 * (2.0 * PI * 3.1 * t + 0.4).sin()
        })
        .collect();
    let y = f.filtfilt(&x).map_err(|e| e.to_string())?;
    let xcorr = |lag: i64| -> f64 { (600..n - 600).map(|i| y[i] * x[(i as i64 + lag) as usize]).sum() };
    let lag = (-50..=50).max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b))).unwrap();
    check(
        dc < 1e-9 && (db + 3.0103).abs() < 0.1 && lag == 0,
        format!("DC gain error {dc:.1e}, {db:.3} dB at cutoff, zero-phase cross-correlation peak at lag {lag}"),
    )
}

fn benchmark_direction() -> Outcome {
    let pol = &lab().waypoint.policy;
    let cfg = SuiteConfig::default();
    let grid = alpha_grid(2.0);
    let clean = alpha_sweep_suite(pol, &grid, Disturbance::none(), &cfg).map_err(|e| e.to_string())?;
    let heavy = alpha_sweep_suite(pol, &grid, Disturbance::added_weight(), &cfg).map_err(|e| e.to_string())?;
    let g = clean.gcnet_runs().next().ok_or("no network run")?;
    let best = clean.least_energy_dfbc().ok_or("every tracking run crashed")?;
    let a_clean = clean.max_completed_alpha().unwrap_or(0.0);
    let a_heavy = heavy.max_completed_alpha().unwrap_or(0.0);
    let beats_all = clean.dfbc_runs().filter(|r| !r.crashed).all(|r| g.total_energy < r.total_energy);
    check(
        !g.crashed && g.lap_times.len() == 4 && beats_all && a_heavy < a_clean,
        format!(
            "network E over 4 laps {:.3} vs least tracking E {:.3} (α = {:.2}); largest completed α {a_clean:.2} \
             undisturbed, {a_heavy:.2} with added weight",
            g.total_energy,
            best.total_energy,
            best.alpha.unwrap_or(f64::NAN)
        ),
    )
}

fn pipeline(root: &Path) -> Result<(), String> {
    let bin = env!("CARGO_BIN_EXE_gcnet-lab");
    std::fs::write(root.join("train.json"), r#"{"epochs": 4, "target_mse": null}"#).map_err(|e| e.to_string())?;
    let steps: [&[&str]; 6] = [
        &["--seed", "5", "--scale", "0.01", "gen-dataset", "--kind", "waypoint"],
        &["--seed", "5", "train", "--dataset", "run/datasets/waypoint.bin", "--config", "train.json"],
        &["--disturbance", "0,-0.02,0", "simulate", "--policy", "run/policies/waypoint.gcnp", "--laps", "1"],
        &["dfbc-gen", "--laps", "2", "--time", "8"],
        &["sweep", "--policy", "run/policies/waypoint.gcnp", "--max-alpha", "0.8"],
        &["report", "--bench", "run/bench/alpha-none"],
    ];
    for args in steps {
        let out = Command::new(bin)
            .current_dir(root)
            .arg("--run-dir")
            .arg("run")
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path())?;
    pipeline(b.path())?;
    let (fa, fb) = (files(&a.path().join("run")), files(&b.path().join("run")));
    let differing: Vec<String> =
        fa.iter().zip(&fb).filter(|(x, y)| x != y).map(|(x, _)| x.0.display().to_string()).collect();
    check(
        fa.len() == fb.len() && fa.len() > 10 && differing.is_empty(),
        format!("{} output files compared byte for byte, {} differ {differing:?}", fa.len(), differing.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("solver oracle", solver_oracle),
        ("collocation consistency", collocation_consistency),
        ("hover balance", hover_balance),
        ("network training", network_training),
        ("closed-loop nominal", closed_loop_nominal),
        ("adaptive recovery", adaptive_recovery),
        ("min-snap oracle", min_snap_oracle),
        ("butterworth", butterworth),
        ("benchmark direction", benchmark_direction),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {:>2} {name}: {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {d} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
