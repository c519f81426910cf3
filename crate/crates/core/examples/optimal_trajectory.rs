//! Energy-optimal hover-to-hover flight from 4 m behind the target, solved
//! by direct collocation. Writes the trajectory to `optimal.csv`.

use gcnet_lab::model::{ModelParams, VehicleState};
use gcnet_lab::trajopt::{solve, transcribe, OcpSpec, TargetSet};
use nalgebra::Vector3;

fn main() -> gcnet_lab::Result<()> {
    let p = ModelParams::bebop();
    let x0 = VehicleState::hover(Vector3::new(-4.0, 0.0, 0.0), p.hover_rotor_speed());
    let spec = OcpSpec::new(x0, TargetSet::HoverRest, p);
    let nlp = transcribe(&spec)?;
    println!("{} variables, {} constraints", nlp.n_vars(), nlp.n_cons());

    let t = std::time::Instant::now();
    let tr = solve(&nlp, None)?.require_converged()?;
    println!(
        "T = {:.3} s, E = {:.4}, max defect {:.1e}, {} iterations, {:.2} s",
        tr.duration,
        tr.energy,
        tr.max_defect,
        tr.iterations,
        t.elapsed().as_secs_f64()
    );
    for (k, (s, u)) in tr.states.iter().zip(&tr.controls).enumerate().step_by(5) {
        println!(
            "node {k:>2}  x {:+.3}  vx {:+.3}  pitch {:+.3}  u {:.3?}",
            s.position[0],
            s.velocity[0],
            s.pitch(),
            u.0
        );
    }
    tr.save("optimal.csv")
}
