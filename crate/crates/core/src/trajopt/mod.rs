//! Free-final-time minimum-energy trajectories.
//!
//! [`transcribe`] turns an [`OcpSpec`] into a Hermite–Simpson NLP over the
//! quadcopter dynamics, [`solve`] runs the interior-point solver on it and
//! returns an [`OptimalTrajectory`]. The pieces are generic: any [`Plant`]
//! can be transcribed with [`Collocation`] and solved with [`ipm::solve`].

pub mod banded;
mod collocation;
pub mod ipm;
mod plant;
mod trajectory;

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

pub use collocation::{BoundaryRow, Collocation, CollocationSetup};
pub use ipm::{IpmOptions, IpmReport, IpmStatus, Nlp};
pub use plant::{DoubleIntegrator, Plant, QuadPlant};
pub use trajectory::{simpson_energy, OptimalTrajectory, SolveStatus, TRAJECTORY_COLUMNS};

use crate::error::{Error, Result};
use crate::model::{idx, ControlInput, ExternalMoment, ModelParams, VehicleState, CONTROL_DIM, STATE_DIM};

/// Roll and pitch stay inside this magnitude along optimized trajectories.
pub const ATTITUDE_LIMIT: f64 = 1.4;

/// Terminal condition family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetSet {
    /// Come to rest in level hover at the origin with zero yaw.
    HoverRest,
    /// Pass through the origin at constant altitude, flying along 45° with
    /// yaw 45° and no rotation.
    WaypointPass,
}

/// Yaw and course angle of a waypoint pass.
pub const PASS_HEADING: f64 = FRAC_PI_4;

impl TargetSet {
    /// Terminal rows on the solver's `(x, u)` node vector.
    ///
    /// The hover target leaves out `v̇_x = v̇_y = 0`: with `v = 0` and a level
    /// attitude they hold identically and would make the rows dependent.
    pub fn constraints(&self) -> Vec<BoundaryRow> {
        match self {
            Self::HoverRest => {
                let mut rows: Vec<BoundaryRow> = (0..idx::ROTORS).map(|i| BoundaryRow::fix(i, 0.0)).collect();
                rows.push(BoundaryRow::Derivative(idx::VEL + 2));
                rows.extend((idx::RATES..STATE_DIM).map(BoundaryRow::Derivative));
                rows
            }
            Self::WaypointPass => {
                let mut rows: Vec<BoundaryRow> = (0..3).map(|i| BoundaryRow::fix(idx::POS + i, 0.0)).collect();
                rows.push(BoundaryRow::fix(idx::VEL + 2, 0.0));
                rows.extend((0..3).map(|i| BoundaryRow::fix(idx::RATES + i, 0.0)));
                rows.extend((0..3).map(|i| BoundaryRow::Derivative(idx::RATES + i)));
                rows.push(BoundaryRow::Linear {
                    terms: vec![(idx::VEL + 1, 1.0), (idx::VEL, -PASS_HEADING.tan())],
                    rhs: 0.0,
                });
                rows.push(BoundaryRow::fix(idx::EULER + 2, PASS_HEADING));
                rows
            }
        }
    }

    pub fn target_yaw(&self) -> f64 {
        match self {
            Self::HoverRest => 0.0,
            Self::WaypointPass => PASS_HEADING,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcpSpec {
    pub x0: VehicleState,
    pub m_ext: ExternalMoment,
    pub target: TargetSet,
    pub params: ModelParams,
    /// Number of collocation segments.
    pub segments: usize,
    pub t_bounds: (f64, f64),
}

impl OcpSpec {
    pub const DEFAULT_SEGMENTS: usize = 30;
    /// Mesh for validation re-solves.
    pub const VALIDATION_SEGMENTS: usize = 60;
    pub const DEFAULT_T_BOUNDS: (f64, f64) = (0.3, 8.0);

    pub fn new(x0: VehicleState, target: TargetSet, params: ModelParams) -> Self {
        Self {
            x0,
            m_ext: ExternalMoment::zero(),
            target,
            params,
            segments: Self::DEFAULT_SEGMENTS,
            t_bounds: Self::DEFAULT_T_BOUNDS,
        }
    }

    pub fn with_m_ext(mut self, m_ext: ExternalMoment) -> Self {
        self.m_ext = m_ext;
        self
    }

    pub fn with_segments(mut self, segments: usize) -> Self {
        self.segments = segments;
        self
    }

    pub fn with_t_bounds(mut self, t_min: f64, t_max: f64) -> Self {
        self.t_bounds = (t_min, t_max);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.segments < 10 {
            return Err(Error::InvalidSpec(format!("need at least 10 segments, got {}", self.segments)));
        }
        let (t0, t1) = self.t_bounds;
        if !(t0 > 0.0 && t1 > t0 && t1.is_finite()) {
            return Err(Error::InvalidSpec(format!("bad duration bounds ({t0}, {t1})")));
        }
        if !self.x0.is_finite() || !self.m_ext.is_finite() {
            return Err(Error::InvalidSpec("non-finite initial state or moment".into()));
        }
        Ok(())
    }

    fn check_x0_bounds(&self) -> Result<()> {
        let p = &self.params;
        let x0 = &self.x0;
        if let Some(w) = x0.rotors.iter().find(|w| !(p.omega_min..=p.omega_max).contains(*w)) {
            return Err(Error::InfeasibleBounds(format!(
                "initial rotor speed {w} outside [{}, {}]",
                p.omega_min, p.omega_max
            )));
        }
        for (name, a) in [("roll", x0.euler[0]), ("pitch", x0.euler[1])] {
            if a.abs() > ATTITUDE_LIMIT {
                return Err(Error::InfeasibleBounds(format!("initial {name} {a} beyond ±{ATTITUDE_LIMIT}")));
            }
        }
        Ok(())
    }

    /// Straight-line distance from the start to the target position.
    pub fn distance(&self) -> f64 {
        self.x0.position.norm()
    }
}

/// The quadcopter NLP together with the spec it came from.
#[derive(Clone, Debug)]
pub struct TranscribedNlp {
    spec: OcpSpec,
    colloc: Collocation<QuadPlant>,
}

fn to_solver_state(s: &VehicleState, omega_max: f64) -> Vec<f64> {
    let mut x = s.to_array().to_vec();
    for w in &mut x[idx::ROTORS..] {
        *w /= omega_max;
    }
    x
}

fn from_solver_state(x: &[f64], omega_max: f64) -> VehicleState {
    let mut arr = [0.0; STATE_DIM];
    arr.copy_from_slice(x);
    for w in &mut arr[idx::ROTORS..] {
        *w *= omega_max;
    }
    VehicleState::from_array(&arr)
}

/// Builds the Hermite–Simpson NLP for `spec`.
pub fn transcribe(spec: &OcpSpec) -> Result<TranscribedNlp> {
    spec.validate()?;
    spec.check_x0_bounds()?;
    let p = spec.params;
    let s = p.omega_max;
    let mut state_bounds = vec![(-1e20, 1e20); STATE_DIM];
    state_bounds[idx::EULER] = (-ATTITUDE_LIMIT, ATTITUDE_LIMIT);
    state_bounds[idx::EULER + 1] = (-ATTITUDE_LIMIT, ATTITUDE_LIMIT);
    for b in &mut state_bounds[idx::ROTORS..] {
        *b = (p.omega_min / s, 1.0);
    }
    let x0 = to_solver_state(&spec.x0, s);
    let duration_guess = initial_duration(spec);
    let setup = CollocationSetup {
        plant: QuadPlant::new(p, spec.m_ext),
        segments: spec.segments,
        state_bounds,
        control_bounds: vec![(0.0, 1.0); CONTROL_DIM],
        duration_bounds: spec.t_bounds,
        duration_ref: duration_guess,
        initial: x0.iter().enumerate().map(|(i, &v)| BoundaryRow::fix(i, v)).collect(),
        terminal: spec.target.constraints(),
    };
    Ok(TranscribedNlp { spec: spec.clone(), colloc: Collocation::new(setup, idx::VEL..STATE_DIM) })
}

impl TranscribedNlp {
    pub fn spec(&self) -> &OcpSpec {
        &self.spec
    }

    pub fn collocation(&self) -> &Collocation<QuadPlant> {
        &self.colloc
    }

    pub fn n_vars(&self) -> usize {
        self.colloc.n_vars()
    }

    pub fn n_cons(&self) -> usize {
        self.colloc.n_cons()
    }

    pub fn defect_rows(&self) -> usize {
        self.colloc.defect_rows()
    }

    /// Decision vector for a trajectory (rotor speeds scaled, widths even).
    pub fn pack(&self, traj: &OptimalTrajectory) -> Vec<f64> {
        let s = self.spec.params.omega_max;
        let states: Vec<Vec<f64>> = traj.states.iter().map(|x| to_solver_state(x, s)).collect();
        let controls: Vec<Vec<f64>> = traj.controls.iter().map(|u| u.0.to_vec()).collect();
        self.colloc.pack(&states, &controls, traj.duration)
    }

    /// Node states and controls in physical units plus the total duration.
    pub fn unpack(&self, z: &[f64]) -> (Vec<VehicleState>, Vec<ControlInput>, f64) {
        let s = self.spec.params.omega_max;
        let (xs, us, widths) = self.colloc.unpack(z);
        let states = xs.iter().map(|x| from_solver_state(x, s)).collect();
        let controls = us.iter().map(|u| ControlInput([u[0], u[1], u[2], u[3]])).collect();
        (states, controls, widths.iter().sum())
    }

    pub fn energy_objective(&self, z: &[f64]) -> (f64, Vec<f64>) {
        self.colloc.energy_objective(z)
    }

    pub fn max_defect(&self, z: &[f64]) -> f64 {
        self.colloc.max_defect(z)
    }
}

fn initial_duration(spec: &OcpSpec) -> f64 {
    (spec.distance() / 2.0).max(1.0).clamp(spec.t_bounds.0, spec.t_bounds.1)
}

/// Hover controls with every state interpolated linearly from `x0` to the
/// target state.
pub fn initial_guess(spec: &OcpSpec) -> OptimalTrajectory {
    let p = &spec.params;
    let mut target = VehicleState::hover(nalgebra::Vector3::zeros(), p.hover_rotor_speed());
    target.euler[2] = spec.target.target_yaw();
    let (a, b) = (spec.x0.to_array(), target.to_array());
    let n = spec.segments;
    let states: Vec<VehicleState> = (0..=n)
        .map(|k| {
            let s = k as f64 / n as f64;
            let x: [f64; STATE_DIM] = std::array::from_fn(|i| a[i] + s * (b[i] - a[i]));
            VehicleState::from_array(&x)
        })
        .collect();
    let controls = vec![ControlInput::uniform(p.hover_command().clamp(0.0, 1.0)); n + 1];
    let duration = initial_duration(spec);
    let energy = simpson_energy(&controls, duration);
    OptimalTrajectory {
        spec: spec.clone(),
        states,
        controls,
        duration,
        energy,
        status: SolveStatus::Guess,
        max_defect: f64::NAN,
        iterations: 0,
    }
}

/// Solver settings used for trajectory generation.
pub fn default_options() -> IpmOptions {
    IpmOptions { max_iter: 250, ..IpmOptions::default() }
}

/// Solves the transcribed problem from `guess` (or [`initial_guess`]).
///
/// Non-converged runs still return the last iterate with its status; use
/// [`OptimalTrajectory::require_converged`] to turn that into an error.
pub fn solve(nlp: &TranscribedNlp, guess: Option<&OptimalTrajectory>) -> Result<OptimalTrajectory> {
    solve_with(nlp, guess, &default_options())
}

pub fn solve_with(
    nlp: &TranscribedNlp,
    guess: Option<&OptimalTrajectory>,
    opts: &IpmOptions,
) -> Result<OptimalTrajectory> {
    let fallback;
    let guess = match guess {
        Some(g) => {
            if g.states.len() != nlp.spec.segments + 1 || g.controls.len() != nlp.spec.segments + 1 {
                return Err(Error::DimensionMismatch { expected: nlp.spec.segments + 1, got: g.states.len() });
            }
            g
        }
        None => {
            fallback = initial_guess(&nlp.spec);
            &fallback
        }
    };
    let z0 = nlp.pack(guess);
    let rep = ipm::solve(&nlp.colloc, &z0, opts);
    let (states, controls, duration) = nlp.unpack(&rep.z);
    let status = match rep.status {
        IpmStatus::Converged => SolveStatus::Converged,
        IpmStatus::MaxIterations => SolveStatus::MaxIterations,
        IpmStatus::LineSearchFailure | IpmStatus::SingularKkt => SolveStatus::LineSearchFailure,
    };
    let energy = simpson_energy(&controls, duration);
    Ok(OptimalTrajectory {
        spec: nlp.spec.clone(),
        max_defect: nlp.max_defect(&rep.z),
        states,
        controls,
        duration,
        energy,
        status,
        iterations: rep.iterations,
    })
}

/// Re-solves a trajectory on another mesh, warm-started from its resampled
/// solution. Falls back to a cold start, then to a detour through the mesh
/// halfway between.
pub fn refine(tr: &OptimalTrajectory, segments: usize) -> Result<OptimalTrajectory> {
    let nlp = transcribe(&tr.spec.clone().with_segments(segments))?;
    let warm = solve(&nlp, Some(&tr.resampled(segments)))?;
    if warm.converged() {
        return Ok(warm);
    }
    let cold = solve(&nlp, None)?;
    let mid = (tr.segments() + segments) / 2;
    if cold.converged() || mid == tr.segments() || mid == segments {
        return Ok(cold);
    }
    let step = solve(&transcribe(&tr.spec.clone().with_segments(mid))?, Some(&tr.resampled(mid)))?;
    if !step.converged() {
        return Ok(cold);
    }
    solve(&nlp, Some(&step.resampled(segments)))
}

/// Rest-to-rest double integrator over a fixed duration: the reference
/// problem with a closed-form solution.
pub fn double_integrator_problem(distance: f64, duration: f64, segments: usize) -> Collocation<DoubleIntegrator> {
    Collocation::new(
        CollocationSetup {
            plant: DoubleIntegrator,
            segments,
            state_bounds: vec![(-1e20, 1e20); 2],
            control_bounds: vec![(-1e20, 1e20)],
            duration_bounds: (duration, duration),
            duration_ref: duration,
            initial: vec![BoundaryRow::fix(0, 0.0), BoundaryRow::fix(1, 0.0)],
            terminal: vec![BoundaryRow::fix(0, distance), BoundaryRow::fix(1, 0.0)],
        },
        0..0,
    )
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;

    use super::*;

    #[test]
    fn target_row_counts() {
        assert_eq!(TargetSet::HoverRest.constraints().len(), 20);
        assert_eq!(TargetSet::WaypointPass.constraints().len(), 12);
    }

    #[test]
    fn transcription_dimensions() {
        let p = ModelParams::bebop();
        let x0 = VehicleState::hover(Vector3::new(4.0, 0.0, 0.0), p.hover_rotor_speed());
        let nlp = transcribe(&OcpSpec::new(x0, TargetSet::HoverRest, p).with_segments(20)).unwrap();
        assert_eq!(nlp.defect_rows(), 20 * STATE_DIM);
        assert_eq!(nlp.n_vars(), 20 * 21 + 20);
        let bounds_len = nlp.collocation().lower_bounds().len();
        assert_eq!(bounds_len, nlp.n_vars());
    }

    #[test]
    fn rejects_rotor_outside_envelope() {
        let p = ModelParams::bebop();
        let x0 = VehicleState::hover(Vector3::zeros(), 4000.0);
        assert!(matches!(transcribe(&OcpSpec::new(x0, TargetSet::HoverRest, p)), Err(Error::InfeasibleBounds(_))));
        let x0 = VehicleState::hover(Vector3::zeros(), 7000.0);
        assert!(transcribe(&OcpSpec::new(x0, TargetSet::HoverRest, p).with_segments(5)).is_err());
    }

    #[test]
    fn guess_rules() {
        let p = ModelParams::bebop();
        let hover = VehicleState::hover(Vector3::zeros(), p.hover_rotor_speed());
        let g = initial_guess(&OcpSpec::new(hover, TargetSet::HoverRest, p));
        assert!(g.states.iter().all(|s| *s == hover));
        assert_eq!(g.duration, 1.0);
        let far = VehicleState::hover(Vector3::new(4.0, 0.0, 0.0), 6000.0);
        let g = initial_guess(&OcpSpec::new(far, TargetSet::HoverRest, p));
        assert_eq!(g.duration, 2.0);
        assert!(g.controls.iter().all(|u| u.0.iter().all(|v| (0.0..=1.0).contains(v))));
    }
}
