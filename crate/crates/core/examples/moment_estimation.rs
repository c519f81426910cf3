//! Online external-moment estimate on a trimmed hover with an injected
//! pitch moment.

use gcnet_lab::model::{ControlInput, ModelParams};
use gcnet_lab::sim::{simulate, Controller, Disturbance, Observation, SimConfig, StopCondition};

/// Rotor commands that hold hover against a constant pitch moment.
struct Trim(ControlInput);

impl Controller for Trim {
    fn command(&mut self, _: &Observation) -> gcnet_lab::Result<ControlInput> {
        Ok(self.0)
    }
}

fn main() -> gcnet_lab::Result<()> {
    let p = ModelParams::bebop();
    let my = -0.02;
    // kw Σω² = g and kq (ω1² + ω2² − ω3² − ω4²) = −M_y.
    let total = p.g / p.kw;
    let d = -my / p.kq / 2.0;
    let (a, b) = ((total / 2.0 + d) / 2.0, (total / 2.0 - d) / 2.0);
    let u = [a, a, b, b].map(|sq: f64| (sq.sqrt() - p.omega_min) / p.rotor_span());
    let cfg = SimConfig::default()
        .with_disturbance(Disturbance::moment(0.0, my, 0.0))
        .with_stop(StopCondition::Duration(2.0));
    let log = simulate(&mut Trim(ControlInput(u)), None, &cfg)?;
    for t in [0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0] {
        let i = log.index_at(t).min(log.len() - 1);
        let m = log.estimates[i];
        println!("t = {t:.2} s  M̂ = [{:+.5}, {:+.5}, {:+.5}] N·m", m[0], m[1], m[2]);
    }
    Ok(())
}
