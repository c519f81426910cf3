use gcnet_lab::model::{rk4_step, ExternalMoment, ModelParams, VehicleState};
use gcnet_lab::trajopt::{
    double_integrator_problem, initial_guess, ipm, refine, simpson_energy, solve, transcribe, IpmOptions, IpmStatus,
    Nlp, OcpSpec, OptimalTrajectory, TargetSet,
};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, p: &ModelParams) -> VehicleState {
    VehicleState {
        position: Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-1.0..1.0)),
        velocity: Vector3::from_fn(|_, _| rng.gen_range(-0.5..0.5)),
        euler: Vector3::new(rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7), rng.gen_range(-3.1..3.1)),
        rates: Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
        rotors: std::array::from_fn(|_| rng.gen_range(p.omega_min..p.omega_max)),
    }
}

fn dense_jacobian(nlp: &impl Nlp, z: &[f64]) -> Vec<Vec<f64>> {
    let mut trip = Vec::new();
    nlp.jacobian(z, &mut trip);
    let mut j = vec![vec![0.0; nlp.n_vars()]; nlp.n_cons()];
    for (r, c, v) in trip {
        j[r][c] += v;
    }
    j
}

fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

/// Random decision vector around the initial guess with valid widths.
fn perturbed(nlp: &gcnet_lab::trajopt::TranscribedNlp, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut z = nlp.pack(&initial_guess(nlp.spec()));
    let (lb, ub) = (nlp.collocation().lower_bounds().to_vec(), nlp.collocation().upper_bounds().to_vec());
    for i in 0..z.len() {
        z[i] += rng.gen_range(-0.1..0.1);
        if lb[i] > -1e19 && ub[i] < 1e19 {
            z[i] = z[i].clamp(lb[i], ub[i]);
        }
    }
    z
}

#[test]
fn derivatives_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = ModelParams::bebop();
    let h = 1e-6;
    for trial in 0..20 {
        let target = if trial % 2 == 0 { TargetSet::HoverRest } else { TargetSet::WaypointPass };
        let m = ExternalMoment::new(rng.gen_range(-0.04..0.04), rng.gen_range(-0.04..0.04), 0.005);
        let spec = OcpSpec::new(random_state(&mut rng, &p), target, p).with_segments(10).with_m_ext(m);
        let nlp = transcribe(&spec).unwrap();
        let col = nlp.collocation();
        let z = perturbed(&nlp, &mut rng);
        let n = col.n_vars();
        let (_, grad) = nlp.energy_objective(&z);
        let jac = dense_jacobian(col, &z);
        // Columns to probe: a spread of states, controls and widths.
        let cols: Vec<usize> = (0..12).map(|_| rng.gen_range(0..n)).chain([col.width_offset(3)]).collect();
        for &j in &cols {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[j] += h;
            zm[j] -= h;
            let fd = (col.objective(&zp) - col.objective(&zm)) / (2.0 * h);
            assert!(close(grad[j], fd, 1e-5, 1e-8), "objective col {j}: {} vs {fd}", grad[j]);
            let (mut cp, mut cm) = (vec![0.0; col.n_cons()], vec![0.0; col.n_cons()]);
            col.constraints(&zp, &mut cp);
            col.constraints(&zm, &mut cm);
            for r in 0..col.n_cons() {
                let fd = (cp[r] - cm[r]) / (2.0 * h);
                assert!(close(jac[r][j], fd, 1e-5, 1e-7), "jacobian ({r},{j}): {} vs {fd}", jac[r][j]);
            }
        }
    }
}

#[test]
fn lagrangian_hessian_matches_gradient_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = ModelParams::bebop();
    for target in [TargetSet::HoverRest, TargetSet::WaypointPass] {
        let spec = OcpSpec::new(random_state(&mut rng, &p), target, p)
            .with_segments(10)
            .with_m_ext(ExternalMoment::new(0.02, -0.01, 0.0));
        let nlp = transcribe(&spec).unwrap();
        let col = nlp.collocation();
        let z = perturbed(&nlp, &mut rng);
        let lambda: Vec<f64> = (0..col.n_cons()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sigma = 0.7;
        let lag_grad = |z: &[f64]| {
            let mut g = vec![0.0; col.n_vars()];
            col.gradient(z, &mut g);
            g.iter_mut().for_each(|v| *v *= sigma);
            let mut t = Vec::new();
            col.jacobian(z, &mut t);
            for (r, c, v) in t {
                g[c] += lambda[r] * v;
            }
            g
        };
        let mut trip = Vec::new();
        col.hessian(&z, sigma, &lambda, &mut trip);
        let n = col.n_vars();
        let mut hess = vec![vec![0.0; n]; n];
        for (a, b, v) in trip {
            hess[a][b] += v;
        }
        let h = 1e-6;
        for j in 0..n {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[j] += h;
            zm[j] -= h;
            let (gp, gm) = (lag_grad(&zp), lag_grad(&zm));
            for i in 0..n {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!(close(hess[i][j], fd, 1e-4, 1e-6), "hessian ({i},{j}): {} vs {fd}", hess[i][j]);
                assert!(close(hess[i][j], hess[j][i], 1e-12, 1e-15), "asymmetric at ({i},{j})");
            }
        }
    }
}

#[test]
fn double_integrator_matches_closed_form() {
    // Rest-to-rest with ẍ = u: u*(t) = 6d/T² − 12dt/T³, E* = 12d²/T³.
    for &(d, t) in &[(1.0, 1.0), (2.0, 1.5), (-0.5, 3.0)] {
        let col = double_integrator_problem(d, t, 30);
        let z0 = vec![0.0; col.n_vars()];
        let rep = ipm::solve(&col, &z0, &IpmOptions::default());
        assert_eq!(rep.status, IpmStatus::Converged);
        let e_star = 12.0 * d * d / (t * t * t);
        assert!((rep.objective - e_star).abs() < 0.01 * e_star.abs());
        let (_, us, widths) = col.unpack(&rep.z);
        let dt = widths[0];
        let mut se = 0.0;
        let mut sr = 0.0;
        for (k, u) in us.iter().enumerate() {
            let tk = k as f64 * dt;
            let exact = 6.0 * d / (t * t) - 12.0 * d * tk / (t * t * t);
            se += (u[0] - exact).powi(2);
            sr += exact * exact;
        }
        assert!((se / sr).sqrt() < 0.02);
    }
}

fn hover_spec(p: ModelParams, pos: Vector3<f64>) -> OcpSpec {
    OcpSpec::new(VehicleState::hover(pos, p.hover_rotor_speed()), TargetSet::HoverRest, p)
}

#[test]
fn hover_in_place_stays_near_hover() {
    let p = ModelParams::bebop();
    let spec = hover_spec(p, Vector3::zeros());
    let tr = solve(&transcribe(&spec).unwrap(), None).unwrap();
    assert!(tr.converged());
    let uh = p.hover_command();
    assert!(tr.duration < 0.3 + 1e-3, "T = {}", tr.duration);
    let expect = 4.0 * uh * uh * tr.duration;
    assert!((tr.energy - expect).abs() < 1e-3 * expect);
    for u in &tr.controls {
        assert!(u.0.iter().all(|v| (v - uh).abs() < 1e-3));
    }
}

fn rollout_terminal_error(tr: &OptimalTrajectory) -> f64 {
    let dt = tr.dt() / 20.0;
    let mut s = tr.states[0];
    for k in 0..tr.segments() {
        for j in 0..20 {
            let t = (k as f64 + (j as f64 + 0.5) / 20.0) * tr.dt();
            let u = tr.control_at(t);
            s = rk4_step(&s, &u, &tr.spec.m_ext, &tr.spec.params, dt).unwrap();
        }
    }
    (s.position - tr.states.last().unwrap().position).norm()
}

#[test]
fn forward_flight_saturates_and_reintegrates() {
    let p = ModelParams::bebop();
    let spec = hover_spec(p, Vector3::new(-4.0, 0.0, 0.0));
    let nlp = transcribe(&spec).unwrap();
    let tr = solve(&nlp, None).unwrap();
    assert!(tr.converged());
    assert!(tr.max_defect <= 1e-6);
    // The launch is bang-bang: the first command pair sits on the box
    // bounds before the solution relaxes into the interior.
    let u0 = tr.controls[0].0;
    assert!(u0.iter().any(|v| *v > 1.0 - 1e-3), "{u0:?}");
    assert!(u0.iter().any(|v| *v < 0.1), "{u0:?}");
    assert!(rollout_terminal_error(&tr) < 0.15);
    // Stored energy equals the quadrature of the stored controls.
    assert!((simpson_energy(&tr.controls, tr.duration) - tr.energy).abs() < 1e-9);
}

#[test]
fn refinement_shrinks_the_integration_miss() {
    // A fast diagonal approach where the coarse mesh is visibly too coarse
    // for the open-loop unstable airframe.
    let p = ModelParams::bebop();
    let x0 = VehicleState {
        position: Vector3::new(4.971, 3.276, 0.902),
        velocity: Vector3::new(0.304, 0.483, 0.179),
        euler: Vector3::new(0.364, -0.561, -1.339),
        rates: Vector3::new(-0.159, 0.129, -0.087),
        rotors: [8186.8, 9796.6, 7426.9, 9301.1],
    };
    let coarse = solve(&transcribe(&OcpSpec::new(x0, TargetSet::HoverRest, p)).unwrap(), None).unwrap();
    assert!(coarse.converged());
    let fine = refine(&coarse, OcpSpec::VALIDATION_SEGMENTS).unwrap();
    assert!(fine.converged());
    assert_eq!(fine.segments(), 60);
    assert_eq!(fine.states[0], coarse.states[0]);
    assert!(fine.max_defect <= 1e-6);
    let (e30, e60) = (rollout_terminal_error(&coarse), rollout_terminal_error(&fine));
    assert!(e60 < 0.15, "{e60}");
    assert!(e60 < e30 / 4.0, "{e30} -> {e60}");
    assert!(close(fine.energy, coarse.energy, 0.02, 0.0), "{} vs {}", fine.energy, coarse.energy);
}

#[test]
fn random_solutions_are_consistent_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let p = ModelParams::bebop();
    for _ in 0..4 {
        let spec = OcpSpec::new(random_state(&mut rng, &p), TargetSet::HoverRest, p);
        let nlp = transcribe(&spec).unwrap();
        let a = solve(&nlp, None).unwrap();
        let b = solve(&nlp, None).unwrap();
        assert_eq!(a, b);
        if a.converged() {
            assert!(a.max_defect <= 1e-6);
            assert!(rollout_terminal_error(&a) < 0.15);
            assert!(a.controls.iter().all(|u| u.0.iter().all(|v| (0.0..=1.0).contains(v))));
        }
    }
}

#[test]
fn tighter_rotor_limit_never_lowers_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 5 {
        let wide = ModelParams::bebop().with_rotor_limits(5000.0, 10000.0);
        let mut x0 = random_state(&mut rng, &wide);
        x0.rotors = [7500.0; 4];
        let spec = OcpSpec::new(x0, TargetSet::HoverRest, wide);
        let loose = solve(&transcribe(&spec).unwrap(), None).unwrap();
        // With ω_min fixed the normalized commands of the tighter envelope
        // are a constant multiple (≥ 1) of the wide ones, so its optimum
        // cannot be cheaper.
        let tight_params = wide.with_rotor_limits(5000.0, 9500.0);
        let tight = solve(&transcribe(&OcpSpec { params: tight_params, ..spec }).unwrap(), None).unwrap();
        if loose.converged() && tight.converged() {
            checked += 1;
            assert!(tight.energy >= loose.energy * (1.0 - 1e-6), "{} < {}", tight.energy, loose.energy);
        }
    }
}

#[test]
fn trajectory_file_round_trip() {
    let p = ModelParams::bebop();
    let tr = solve(&transcribe(&hover_spec(p, Vector3::new(1.0, 1.0, 0.0))).unwrap(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    tr.save(&path).unwrap();
    let back = OptimalTrajectory::load(&path).unwrap();
    assert_eq!(back, tr);
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header.split(',').count(), 21);
}
