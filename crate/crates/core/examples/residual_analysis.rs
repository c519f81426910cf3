//! Compares the moments and forces derived from the logged motion with the
//! model's prediction over an open-loop wobble.

use std::f64::consts::PI;

use gcnet_lab::model::{ControlInput, ModelParams};
use gcnet_lab::sim::{compare_measured_modeled, simulate, Controller, Observation, SimConfig, StopCondition};

struct Wobble(f64);

impl Controller for Wobble {
    fn command(&mut self, obs: &Observation) -> gcnet_lab::Result<ControlInput> {
        let s = 0.08 * (2.0 * PI * 1.3 * obs.time).sin();
        let c = 0.05 * (2.0 * PI * 0.7 * obs.time).cos();
        let h = self.0;
        Ok(ControlInput([h + s + c, h - s + c, h - s - c, h + s - c]))
    }
}

fn main() -> gcnet_lab::Result<()> {
    let p = ModelParams::bebop();
    let cfg = SimConfig::default().with_stop(StopCondition::Duration(3.0));
    let log = simulate(&mut Wobble(p.hover_command()), None, &cfg)?;
    let res = compare_measured_modeled(&log, &p)?;
    let rms =
        |v: &[f64]| (v[res.interior.clone()].iter().map(|x| x * x).sum::<f64>() / res.interior.len() as f64).sqrt();
    for (axis, name) in ["x", "y", "z"].iter().enumerate() {
        println!(
            "moment {name}: signal RMS {:.2e}, residual RMS {:.2e} | force {name}: signal RMS {:.3}, residual RMS {:.2e}",
            rms(&res.moment_measured[axis]),
            rms(&res.moment_residual(axis)),
            rms(&res.force_measured[axis]),
            rms(&res.force_residual(axis))
        );
    }
    Ok(())
}
