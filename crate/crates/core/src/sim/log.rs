//! Flight logs, their files and the offline measured-versus-modeled check.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{derivative, ButterworthLp2};
use crate::model::{
    body_force, body_moment, measured_moment, rotation_world_from_body, ControlInput, ModelParams, VehicleState,
    STATE_DIM,
};

pub const LOG_COLUMNS: [&str; 27] = [
    "t", "x", "y", "z", "vx", "vy", "vz", "phi", "theta", "psi", "p", "q", "r", "w1", "w2", "w3", "w4", "u1", "u2",
    "u3", "u4", "mx_hat", "my_hat", "mz_hat", "target", "energy", "lap",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    /// Ran into the time wall before finishing the requested laps.
    TimeLimit,
    Diverged {
        time: f64,
        reason: String,
    },
    /// The controller gave up (e.g. tracking error too large).
    Crashed {
        time: f64,
        reason: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub time: f64,
    /// Index of the waypoint that was active until the switch.
    pub target: usize,
    /// Distance to that waypoint at the switch [m].
    pub distance: f64,
}

/// Time series sampled at the sensor rate.
#[derive(Clone, Debug, PartialEq)]
pub struct FlightLog {
    pub sample_dt: f64,
    pub time: Vec<f64>,
    pub states: Vec<VehicleState>,
    /// Command held from each sample on.
    pub commands: Vec<ControlInput>,
    pub estimates: Vec<Vector3<f64>>,
    pub target: Vec<usize>,
    /// Trapezoidal running integral of ‖u‖².
    pub energy: Vec<f64>,
    pub switches: Vec<SwitchEvent>,
    /// Times at which laps completed.
    pub lap_times: Vec<f64>,
    pub termination: Termination,
}

/// Interval during which one rotor command stayed on a bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationEpisode {
    pub rotor: usize,
    pub upper: bool,
    pub start: f64,
    /// Time of the last saturated sample.
    pub end: f64,
}

impl SaturationEpisode {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlightSummary {
    pub duration: f64,
    pub total_energy: f64,
    pub laps_completed: usize,
    /// Durations of the individual laps [s].
    pub lap_times: Vec<f64>,
    pub switches: Vec<SwitchEvent>,
    /// Mean squared distance to the target at the switches [m²].
    pub switch_mse: Option<f64>,
    pub final_distance: Option<f64>,
    pub termination: Termination,
    pub sample_dt: f64,
    pub columns: Vec<String>,
}

impl FlightLog {
    pub fn new(sample_dt: f64) -> Self {
        Self {
            sample_dt,
            time: Vec::new(),
            states: Vec::new(),
            commands: Vec::new(),
            estimates: Vec::new(),
            target: Vec::new(),
            energy: Vec::new(),
            switches: Vec::new(),
            lap_times: Vec::new(),
            termination: Termination::TimeLimit,
        }
    }

    /// Appends one sample; `e` is the running energy at `t`.
    pub fn push(&mut self, t: f64, s: &VehicleState, u: &ControlInput, m: &Vector3<f64>, target: usize, e: f64) {
        self.time.push(t);
        self.states.push(*s);
        self.commands.push(*u);
        self.estimates.push(*m);
        self.target.push(target);
        self.energy.push(e);
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn total_energy(&self) -> f64 {
        self.energy.last().copied().unwrap_or(0.0)
    }

    pub fn duration(&self) -> f64 {
        self.time.last().copied().unwrap_or(0.0)
    }

    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }

    /// `Err(Diverged)` unless the flight ended normally.
    pub fn ok(&self) -> Result<&Self> {
        match &self.termination {
            Termination::Completed => Ok(self),
            Termination::TimeLimit => {
                Err(Error::Diverged { time: self.duration(), reason: "time limit reached before the last lap".into() })
            }
            Termination::Diverged { time, reason } | Termination::Crashed { time, reason } => {
                Err(Error::Diverged { time: *time, reason: reason.clone() })
            }
        }
    }

    /// Durations between consecutive lap completions (the first lap starts
    /// at t = 0).
    pub fn lap_durations(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.lap_times
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }

    /// Maximal runs of logged samples whose command sits on a bound.
    pub fn saturation_episodes(&self) -> Vec<SaturationEpisode> {
        let mut out = Vec::new();
        for rotor in 0..4 {
            let mut open: Option<(bool, f64, f64)> = None;
            for (t, c) in self.time.iter().zip(&self.commands) {
                let u = c.0[rotor];
                let bound = if u >= 1.0 {
                    Some(true)
                } else if u <= 0.0 {
                    Some(false)
                } else {
                    None
                };
                open = match (open, bound) {
                    (Some((upper, start, _)), Some(b)) if upper == b => Some((upper, start, *t)),
                    (prev, b) => {
                        if let Some((upper, start, end)) = prev {
                            out.push(SaturationEpisode { rotor, upper, start, end });
                        }
                        b.map(|upper| (upper, *t, *t))
                    }
                };
            }
            if let Some((upper, start, end)) = open {
                out.push(SaturationEpisode { rotor, upper, start, end });
            }
        }
        out.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.rotor.cmp(&b.rotor)));
        out
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.time.partition_point(|&x| x < t - 1e-9)
    }

    /// Energy spent between two times.
    pub fn energy_between(&self, t0: f64, t1: f64) -> f64 {
        let i1 = self.index_at(t1).min(self.len().saturating_sub(1));
        let i0 = self.index_at(t0).min(i1);
        self.energy[i1] - self.energy[i0]
    }

    pub fn summary(&self) -> FlightSummary {
        let switch_mse = (!self.switches.is_empty())
            .then(|| self.switches.iter().map(|s| s.distance * s.distance).sum::<f64>() / self.switches.len() as f64);
        FlightSummary {
            duration: self.duration(),
            total_energy: self.total_energy(),
            laps_completed: self.lap_times.len(),
            lap_times: self.lap_durations(),
            switches: self.switches.clone(),
            switch_mse,
            final_distance: self.switches.last().map(|s| s.distance),
            termination: self.termination.clone(),
            sample_dt: self.sample_dt,
            columns: LOG_COLUMNS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = LOG_COLUMNS.join(",");
        out.push('\n');
        let mut lap = 0;
        for i in 0..self.len() {
            while lap < self.lap_times.len() && self.lap_times[lap] <= self.time[i] {
                lap += 1;
            }
            let _ = write!(out, "{}", self.time[i]);
            for v in self.states[i].to_array().iter().chain(&self.commands[i].0).chain(self.estimates[i].iter()) {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{},{lap}", self.target[i], self.energy[i]);
        }
        out
    }

    fn summary_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }

    /// Writes `path` (columnar text) and `path.json` (summary).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        let side = Self::summary_path(path);
        std::fs::write(&side, serde_json::to_string_pretty(&self.summary())?).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let side = Self::summary_path(path);
        let summary: FlightSummary =
            serde_json::from_str(&std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?)?;
        let mut lines = text.lines();
        if lines.next() != Some(LOG_COLUMNS.join(",").as_str()) {
            return Err(Error::CorruptFile("unexpected flight log header".into()));
        }
        let mut log = FlightLog::new(summary.sample_dt);
        for (n, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::CorruptFile(format!("row {}: {e}", n + 1)))?;
            if vals.len() != LOG_COLUMNS.len() {
                return Err(Error::CorruptFile(format!("row {} has {} columns", n + 1, vals.len())));
            }
            let s = VehicleState::from_slice(&vals[1..1 + STATE_DIM])?;
            let u = ControlInput([vals[17], vals[18], vals[19], vals[20]]);
            let m = Vector3::new(vals[21], vals[22], vals[23]);
            log.push(vals[0], &s, &u, &m, vals[24] as usize, vals[25]);
        }
        let mut t = 0.0;
        log.lap_times = summary
            .lap_times
            .iter()
            .map(|d| {
                t += d;
                t
            })
            .collect();
        log.switches = summary.switches;
        log.termination = summary.termination;
        Ok(log)
    }
}

/// Measured and modeled body moments and specific forces, both passed
/// through the zero-phase analysis filter.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    pub time: Vec<f64>,
    pub moment_measured: [Vec<f64>; 3],
    pub moment_modeled: [Vec<f64>; 3],
    pub force_measured: [Vec<f64>; 3],
    pub force_modeled: [Vec<f64>; 3],
    /// Samples clear of the filter's edge padding.
    pub interior: std::ops::Range<usize>,
}

impl Residuals {
    pub fn moment_residual(&self, axis: usize) -> Vec<f64> {
        diff(&self.moment_measured[axis], &self.moment_modeled[axis])
    }

    pub fn force_residual(&self, axis: usize) -> Vec<f64> {
        diff(&self.force_measured[axis], &self.force_modeled[axis])
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub const ANALYSIS_CUTOFF: f64 = 16.0;

/// Offline comparison of the moments and specific forces implied by the
/// logged motion against the model evaluated on the logged rotor speeds.
pub fn compare_measured_modeled(log: &FlightLog, params: &ModelParams) -> Result<Residuals> {
    let fs = 1.0 / log.sample_dt;
    let filt = ButterworthLp2::design(ANALYSIS_CUTOFF, fs)?;
    let dt = log.sample_dt;
    let col = |f: &dyn Fn(&VehicleState) -> f64| -> Vec<f64> { log.states.iter().map(f).collect() };
    let smooth = |s: Vec<f64>| filt.filtfilt(&s);

    let rates: Vec<Vec<f64>> = (0..3).map(|k| col(&|s| s.rates[k])).collect();
    let rates_dot: Vec<Vec<f64>> = rates.iter().map(|r| derivative(r, dt)).collect();
    let vel: Vec<Vec<f64>> = (0..3).map(|k| smooth(col(&|s| s.velocity[k]))).collect::<Result<_>>()?;
    let acc: Vec<Vec<f64>> = vel.iter().map(|v| derivative(v, dt)).collect();
    let rotor_accel: Vec<Vec<f64>> = (0..4).map(|i| derivative(&col(&|s| s.rotors[i]), dt)).collect();

    let n = log.len();
    let mut m_meas: [Vec<f64>; 3] = Default::default();
    let mut f_meas: [Vec<f64>; 3] = Default::default();
    let mut m_model: [Vec<f64>; 3] = Default::default();
    let mut f_model: [Vec<f64>; 3] = Default::default();
    // Model force rotated into the world frame, filtered there like the
    // acceleration, then both are returned to the body by the logged attitude.
    let mut f_world: [Vec<f64>; 3] = Default::default();
    for s in &log.states {
        let f = rotation_world_from_body(&s.euler) * body_force(s, params);
        for k in 0..3 {
            f_world[k].push(f[k]);
        }
    }
    let f_world = {
        let [a, b, c] = f_world;
        [smooth(a)?, smooth(b)?, smooth(c)?]
    };
    for i in 0..n {
        let s = &log.states[i];
        let w = Vector3::new(rates[0][i], rates[1][i], rates[2][i]);
        let wd = Vector3::new(rates_dot[0][i], rates_dot[1][i], rates_dot[2][i]);
        let mm = measured_moment(&w, &wd, params);
        let a = Vector3::new(acc[0][i], acc[1][i], acc[2][i] - params.g);
        let rt = rotation_world_from_body(&s.euler).transpose();
        let fm = rt * a;
        let fo = rt * Vector3::new(f_world[0][i], f_world[1][i], f_world[2][i]);
        let ra = [rotor_accel[0][i], rotor_accel[1][i], rotor_accel[2][i], rotor_accel[3][i]];
        let mo = body_moment(s, &ra, params);
        for k in 0..3 {
            m_meas[k].push(mm[k]);
            f_meas[k].push(fm[k]);
            m_model[k].push(mo[k]);
            f_model[k].push(fo[k]);
        }
    }
    let arr = |v: [Vec<f64>; 3]| -> Result<[Vec<f64>; 3]> {
        let [a, b, c] = v;
        Ok([smooth(a)?, smooth(b)?, smooth(c)?])
    };
    let pad = filt.pad_len().min(n / 2);
    Ok(Residuals {
        time: log.time.clone(),
        moment_measured: arr(m_meas)?,
        moment_modeled: arr(m_model)?,
        force_measured: f_meas,
        force_modeled: f_model,
        interior: pad..n - pad,
    })
}
