use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::OcpSpec;
use crate::error::{Error, Result};
use crate::model::{ControlInput, VehicleState, CONTROL_DIM, STATE_DIM};

/// Column names of the trajectory file, in order. Rotor speeds are in rpm,
/// angles in radians, world z points down.
pub const TRAJECTORY_COLUMNS: [&str; 1 + STATE_DIM + CONTROL_DIM] = [
    "t", "x", "y", "z", "vx", "vy", "vz", "phi", "theta", "psi", "p", "q", "r", "w1", "w2", "w3", "w4", "u1", "u2",
    "u3", "u4",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// Not solved: an initial guess.
    Guess,
    Converged,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalTrajectory {
    pub spec: OcpSpec,
    pub states: Vec<VehicleState>,
    pub controls: Vec<ControlInput>,
    /// Final time T [s]; nodes are evenly spaced.
    pub duration: f64,
    pub energy: f64,
    pub status: SolveStatus,
    /// Largest absolute collocation defect (solver units).
    pub max_defect: f64,
    pub iterations: usize,
}

/// Simpson quadrature of `‖u‖²` over evenly spaced nodes with linear
/// interpolation of the control inside each segment.
pub fn simpson_energy(controls: &[ControlInput], duration: f64) -> f64 {
    let n = controls.len().saturating_sub(1);
    if n == 0 {
        return 0.0;
    }
    let h = duration / n as f64;
    controls
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0].0, &w[1].0);
            let q: f64 = (0..CONTROL_DIM).map(|i| a[i] * a[i] + (a[i] + b[i]).powi(2) + b[i] * b[i]).sum();
            h / 6.0 * q
        })
        .sum()
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    spec: OcpSpec,
    energy: f64,
    duration: f64,
    converged: bool,
    status: SolveStatus,
    max_defect: f64,
    iterations: usize,
    columns: Vec<String>,
}

impl OptimalTrajectory {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn segments(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.segments() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.states.len()).map(|k| k as f64 * dt).collect()
    }

    pub fn require_converged(self) -> Result<Self> {
        match self.status {
            SolveStatus::Converged => Ok(self),
            SolveStatus::LineSearchFailure => Err(Error::LineSearchFailure { iteration: self.iterations }),
            SolveStatus::MaxIterations | SolveStatus::Guess => {
                Err(Error::MaxIterationsExceeded { iterations: self.iterations, max_defect: self.max_defect })
            }
        }
    }

    /// Control linearly interpolated at time `t` (clamped to the horizon).
    pub fn control_at(&self, t: f64) -> ControlInput {
        let s = (t / self.dt()).clamp(0.0, self.segments() as f64);
        let k = (s.floor() as usize).min(self.segments() - 1);
        let a = s - k as f64;
        let (u0, u1) = (&self.controls[k].0, &self.controls[k + 1].0);
        ControlInput(std::array::from_fn(|i| u0[i] + a * (u1[i] - u0[i])))
    }

    /// State linearly interpolated at time `t` (clamped to the horizon).
    pub fn state_at(&self, t: f64) -> VehicleState {
        let s = (t / self.dt()).clamp(0.0, self.segments() as f64);
        let k = (s.floor() as usize).min(self.segments() - 1);
        let a = s - k as f64;
        let (x0, x1) = (self.states[k].to_array(), self.states[k + 1].to_array());
        VehicleState::from_array(&std::array::from_fn(|i| x0[i] + a * (x1[i] - x0[i])))
    }

    /// The same trajectory on `segments` evenly spaced segments, as a solver
    /// warm start.
    pub fn resampled(&self, segments: usize) -> Self {
        let h = self.duration / segments as f64;
        let mut states: Vec<VehicleState> = (0..=segments).map(|k| self.state_at(k as f64 * h)).collect();
        states[0] = self.states[0];
        let controls: Vec<ControlInput> = (0..=segments).map(|k| self.control_at(k as f64 * h)).collect();
        let mut spec = self.spec.clone();
        spec.segments = segments;
        Self {
            spec,
            energy: simpson_energy(&controls, self.duration),
            states,
            controls,
            duration: self.duration,
            status: SolveStatus::Guess,
            max_defect: f64::NAN,
            iterations: 0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = TRAJECTORY_COLUMNS.join(",");
        out.push('\n');
        for (k, (s, u)) in self.states.iter().zip(&self.controls).enumerate() {
            let _ = write!(out, "{}", k as f64 * self.dt());
            for v in s.to_array().iter().chain(u.0.iter()) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    fn sidecar_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }

    /// Writes `path` (columnar text) and `path.json` (metadata).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        let meta = Sidecar {
            spec: self.spec.clone(),
            energy: self.energy,
            duration: self.duration,
            converged: self.converged(),
            status: self.status,
            max_defect: self.max_defect,
            iterations: self.iterations,
            columns: TRAJECTORY_COLUMNS.iter().map(|s| s.to_string()).collect(),
        };
        let side = Self::sidecar_path(path);
        std::fs::write(&side, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let side = Self::sidecar_path(path);
        let meta: Sidecar = serde_json::from_str(&std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::CorruptFile("empty trajectory file".into()))?;
        if header != TRAJECTORY_COLUMNS.join(",") {
            return Err(Error::CorruptFile(format!("unexpected header {header:?}")));
        }
        let mut states = Vec::new();
        let mut controls = Vec::new();
        for (n, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::CorruptFile(format!("row {}: {e}", n + 1)))?;
            if vals.len() != TRAJECTORY_COLUMNS.len() {
                return Err(Error::CorruptFile(format!("row {} has {} columns", n + 1, vals.len())));
            }
            states.push(VehicleState::from_slice(&vals[1..1 + STATE_DIM])?);
            controls.push(ControlInput([vals[17], vals[18], vals[19], vals[20]]));
        }
        if states.len() < 2 {
            return Err(Error::CorruptFile("fewer than two nodes".into()));
        }
        Ok(Self {
            spec: meta.spec,
            states,
            controls,
            duration: meta.duration,
            energy: meta.energy,
            status: meta.status,
            max_defect: meta.max_defect,
            iterations: meta.iterations,
        })
    }
}
