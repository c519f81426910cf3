//! Hover trim and an open-loop pitch doublet on the identified model. The
//! airframe is unstable without feedback, so only the first 0.6 s are shown.

use gcnet_lab::model::{body_force, rk4_step, ControlInput, ExternalMoment, ModelParams, VehicleState};
use nalgebra::Vector3;

fn main() -> gcnet_lab::Result<()> {
    let p = ModelParams::bebop();
    let w_h = p.hover_rotor_speed();
    let mut s = VehicleState::hover(Vector3::zeros(), w_h);
    println!("hover: ω = {w_h:.1} rpm, u = {:.4}, F_z = {:.4} m/s²", p.hover_command(), body_force(&s, &p)[2]);

    let uh = p.hover_command();
    let dt = 0.002;
    for k in 0..300 {
        let t = k as f64 * dt;
        // Front pair up then down for 0.1 s each.
        let d = if t < 0.1 {
            0.05
        } else if t < 0.2 {
            -0.05
        } else {
            0.0
        };
        let u = ControlInput::clamped([uh + d, uh + d, uh - d, uh - d]);
        s = rk4_step(&s, &u, &ExternalMoment::zero(), &p, dt)?;
        if k % 25 == 24 {
            println!(
                "t = {:.2} s  pitch {:+.4} rad  q {:+.4} rad/s  x {:+.4} m  z {:+.4} m",
                t + dt,
                s.pitch(),
                s.rates[1],
                s.position[0],
                s.position[2]
            );
        }
    }
    Ok(())
}
