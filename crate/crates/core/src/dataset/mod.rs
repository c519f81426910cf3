//! Initial-condition sampling, mass trajectory generation and state-action
//! dataset files.

mod file;

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use file::{manifest_path, write_manifest, DATASET_VERSION};

use crate::error::{Error, Result};
use crate::model::{ControlInput, ExternalMoment, ModelParams, VehicleState, CONTROL_DIM};
use crate::trajopt::{solve, transcribe, OcpSpec, OptimalTrajectory, TargetSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecipeKind {
    /// Hover-to-hover without external moment inputs.
    Nominal,
    /// Hover-to-hover with the external moment as three extra inputs.
    Adaptive,
    /// Waypoint pass with external moment inputs.
    Waypoint,
}

impl RecipeKind {
    pub fn input_dim(self) -> usize {
        match self {
            Self::Nominal => 16,
            Self::Adaptive | Self::Waypoint => 19,
        }
    }

    pub fn uses_moment(self) -> bool {
        self != Self::Nominal
    }

    pub fn target(self) -> TargetSet {
        match self {
            Self::Nominal | Self::Adaptive => TargetSet::HoverRest,
            Self::Waypoint => TargetSet::WaypointPass,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Nominal => "nominal",
            Self::Adaptive => "adaptive",
            Self::Waypoint => "waypoint",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Self::Nominal, Self::Adaptive, Self::Waypoint].into_iter().find(|k| k.name() == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn symmetric(half: f64) -> Self {
        Self::new(-half, half)
    }

    pub fn degrees(lo: f64, hi: f64) -> Self {
        Self::new(lo.to_radians(), hi.to_radians())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingRecipe {
    pub kind: RecipeKind,
    pub position: [Interval; 3],
    pub velocity: [Interval; 3],
    /// Roll, pitch, yaw in radians.
    pub euler: [Interval; 3],
    pub rates: [Interval; 3],
    pub m_ext: Option<[Interval; 3]>,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Trajectories to generate.
    pub trajectories: usize,
    /// Count of the full-scale experiment (metadata only).
    pub full_scale_trajectories: usize,
    /// Fraction of trajectories assigned to the training split.
    pub train_fraction: f64,
    pub seed: u64,
    pub segments: usize,
}

/// Desk-scale defaults.
pub const DESK_NOMINAL: usize = 2000;
pub const DESK_ADAPTIVE: usize = 2000;
pub const DESK_WAYPOINT: usize = 1000;

/// Nominal, adaptive and waypoint recipes.
pub fn builtin_recipes() -> [SamplingRecipe; 3] {
    let hover_ranges = |kind, count, full, m_ext| SamplingRecipe {
        kind,
        position: [Interval::new(-5.0, 5.0), Interval::new(-5.0, 5.0), Interval::new(-1.0, 1.0)],
        velocity: [Interval::symmetric(0.5); 3],
        euler: [Interval::degrees(-40.0, 40.0), Interval::degrees(-40.0, 40.0), Interval::degrees(-180.0, 180.0)],
        rates: [Interval::symmetric(1.0); 3],
        m_ext,
        omega_min: 5000.0,
        omega_max: 10000.0,
        trajectories: count,
        full_scale_trajectories: full,
        train_fraction: 0.9,
        seed: 1,
        segments: OcpSpec::DEFAULT_SEGMENTS,
    };
    let moments = [Interval::symmetric(0.04), Interval::symmetric(0.04), Interval::symmetric(0.01)];
    let nominal = hover_ranges(RecipeKind::Nominal, DESK_NOMINAL, 100_000, None);
    let mut adaptive = hover_ranges(RecipeKind::Adaptive, DESK_ADAPTIVE, 100_000, Some(moments));
    adaptive.seed = 2;
    let waypoint = SamplingRecipe {
        kind: RecipeKind::Waypoint,
        position: [Interval::new(-5.0, -2.0), Interval::new(-1.0, 1.0), Interval::new(-0.5, 0.5)],
        velocity: [Interval::new(-0.5, 5.0), Interval::new(-3.0, 3.0), Interval::new(-1.0, 1.0)],
        euler: [Interval::degrees(-40.0, 40.0), Interval::degrees(-40.0, 40.0), Interval::degrees(-60.0, 60.0)],
        rates: [Interval::symmetric(1.0); 3],
        m_ext: Some(moments),
        omega_min: 3000.0,
        omega_max: 12000.0,
        trajectories: DESK_WAYPOINT,
        full_scale_trajectories: 10_000,
        train_fraction: 0.9,
        seed: 3,
        segments: OcpSpec::DEFAULT_SEGMENTS,
    };
    [nominal, adaptive, waypoint]
}

pub fn builtin_recipe(kind: RecipeKind) -> SamplingRecipe {
    builtin_recipes().into_iter().find(|r| r.kind == kind).expect("all kinds present")
}

impl SamplingRecipe {
    /// Multiplies the trajectory count (at least one trajectory is kept).
    pub fn scaled(mut self, factor: f64) -> Self {
        self.trajectories = ((self.trajectories as f64 * factor).round() as usize).max(1);
        self
    }

    pub fn with_count(mut self, n: usize) -> Self {
        self.trajectories = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn params(&self) -> ModelParams {
        ModelParams::bebop().with_rotor_limits(self.omega_min, self.omega_max)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .position
            .iter()
            .chain(&self.velocity)
            .chain(&self.euler)
            .chain(&self.rates)
            .chain(self.m_ext.iter().flatten());
        for iv in all {
            if !(iv.lo <= iv.hi) {
                return Err(Error::InvalidSpec(format!("interval [{}, {}] is not ordered", iv.lo, iv.hi)));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidSpec(format!("split ratio {} outside (0, 1)", self.train_fraction)));
        }
        if self.kind.uses_moment() != self.m_ext.is_some() {
            return Err(Error::InvalidSpec("moment intervals must be given exactly for moment kinds".into()));
        }
        self.params().validate()
    }

    /// Uniform draw of an initial state and external moment.
    pub fn sample(&self, rng: &mut impl Rng) -> (VehicleState, ExternalMoment) {
        let v3 =
            |iv: &[Interval; 3], rng: &mut _| Vector3::new(iv[0].sample(rng), iv[1].sample(rng), iv[2].sample(rng));
        let state = VehicleState {
            position: v3(&self.position, rng),
            velocity: v3(&self.velocity, rng),
            euler: v3(&self.euler, rng),
            rates: v3(&self.rates, rng),
            rotors: std::array::from_fn(|_| rng.gen_range(self.omega_min..=self.omega_max)),
        };
        let m = match &self.m_ext {
            Some(iv) => ExternalMoment(v3(iv, rng)),
            None => ExternalMoment::zero(),
        };
        (state, m)
    }

    /// Problem for attempt number `index`.
    pub fn attempt_spec(&self, index: u64) -> OcpSpec {
        let mut rng = attempt_rng(self.seed, index);
        let (x0, m) = self.sample(&mut rng);
        OcpSpec::new(x0, self.kind.target(), self.params()).with_m_ext(m).with_segments(self.segments)
    }
}

fn attempt_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Fixed input scaling; stored in dataset and policy files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub position: f64,
    pub velocity: f64,
    pub angle: f64,
    pub rate: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub moment: f64,
}

impl Normalization {
    pub fn for_rotor_limits(omega_min: f64, omega_max: f64) -> Self {
        Self { position: 5.0, velocity: 5.0, angle: PI, rate: 2.0 * PI, omega_min, omega_max, moment: 0.04 }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.position, self.velocity, self.angle, self.rate, self.omega_min, self.omega_max, self.moment]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self { position: a[0], velocity: a[1], angle: a[2], rate: a[3], omega_min: a[4], omega_max: a[5], moment: a[6] }
    }
}

/// Network input: `[p − wp, v, λ, Ω, ω]` normalized, plus `M_ext` for the
/// moment-aware kinds.
pub fn assemble_inputs(
    state: &VehicleState,
    m_ext: Option<&ExternalMoment>,
    waypoint: Option<&Vector3<f64>>,
    kind: RecipeKind,
    norm: &Normalization,
) -> Result<Vec<f64>> {
    let dim = kind.input_dim();
    match (kind.uses_moment(), m_ext.is_some()) {
        (true, false) => return Err(Error::DimensionMismatch { expected: dim, got: 16 }),
        (false, true) => return Err(Error::DimensionMismatch { expected: dim, got: 19 }),
        _ => {}
    }
    let wp = waypoint.copied().unwrap_or_else(Vector3::zeros);
    let mut x = Vec::with_capacity(dim);
    x.extend((state.position - wp).iter().map(|v| v / norm.position));
    x.extend(state.velocity.iter().map(|v| v / norm.velocity));
    x.extend(state.euler.iter().map(|v| v / norm.angle));
    x.extend(state.rates.iter().map(|v| v / norm.rate));
    let span = norm.omega_max - norm.omega_min;
    x.extend(state.rotors.iter().map(|w| (w - norm.omega_min) / span));
    if let Some(m) = m_ext {
        x.extend(m.0.iter().map(|v| v / norm.moment));
    }
    Ok(x)
}

/// Row-major input/target pairs of one split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairSet {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    /// Source trajectory of every pair.
    pub trajectory: Vec<u32>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.trajectory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.is_empty()
    }

    pub fn input(&self, i: usize, dim: usize) -> &[f64] {
        &self.inputs[i * dim..(i + 1) * dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * CONTROL_DIM..(i + 1) * CONTROL_DIM]
    }

    fn push_trajectory(&mut self, id: u32, traj: &OptimalTrajectory, kind: RecipeKind, norm: &Normalization) {
        let m = kind.uses_moment().then_some(&traj.spec.m_ext);
        for (s, u) in traj.states.iter().zip(&traj.controls) {
            let x = assemble_inputs(s, m, None, kind, norm).expect("kind-consistent inputs");
            self.inputs.extend(x);
            self.targets.extend(u.0);
            self.trajectory.push(id);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: RecipeKind,
    pub norm: Normalization,
    pub train: PairSet,
    pub test: PairSet,
    pub train_trajectories: usize,
    pub test_trajectories: usize,
}

impl Dataset {
    pub fn input_dim(&self) -> usize {
        self.kind.input_dim()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub kind: RecipeKind,
    pub requested: usize,
    pub attempted: usize,
    pub converged: usize,
    pub train_trajectories: usize,
    pub test_trajectories: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
}

impl GenerationReport {
    pub fn convergence_rate(&self) -> f64 {
        self.converged as f64 / self.attempted.max(1) as f64
    }
}

pub struct Generated {
    pub dataset: Dataset,
    pub report: GenerationReport,
    /// Kept trajectories in attempt order.
    pub trajectories: Vec<OptimalTrajectory>,
}

/// Minimum accepted fraction of converged solves.
pub const MIN_CONVERGENCE_RATE: f64 = 0.8;

/// Solves one trajectory per attempt until `recipe.trajectories` have
/// converged (at most twice that many attempts) and splits them by
/// trajectory. The output depends only on the recipe, not on `workers`.
pub fn generate(recipe: &SamplingRecipe, workers: usize) -> Result<Generated> {
    recipe.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let want = recipe.trajectories;
    let cap = 2 * want;
    let mut kept: Vec<OptimalTrajectory> = Vec::with_capacity(want);
    let mut attempted = 0usize;
    while kept.len() < want && attempted < cap {
        let batch = (want - kept.len()).min(cap - attempted);
        let start = attempted as u64;
        let results: Vec<Option<OptimalTrajectory>> = pool.install(|| {
            (start..start + batch as u64)
                .into_par_iter()
                .map(|i| {
                    let spec = recipe.attempt_spec(i);
                    let nlp = transcribe(&spec).ok()?;
                    solve(&nlp, None).ok().filter(|t| t.converged())
                })
                .collect()
        });
        attempted += batch;
        kept.extend(results.into_iter().flatten());
    }
    let converged = kept.len();
    if (converged as f64) < MIN_CONVERGENCE_RATE * attempted as f64 || converged < want {
        return Err(Error::ConvergenceRateTooLow { converged, attempted });
    }

    // Trajectory-level split with a seeded shuffle.
    let mut order: Vec<usize> = (0..converged).collect();
    let mut rng = attempt_rng(recipe.seed, u64::MAX);
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let n_train = ((converged as f64 * recipe.train_fraction).round() as usize).clamp(1.min(converged), converged);
    let norm = Normalization::for_rotor_limits(recipe.omega_min, recipe.omega_max);
    let mut train = PairSet::default();
    let mut test = PairSet::default();
    for (rank, &t) in order.iter().enumerate() {
        let set = if rank < n_train { &mut train } else { &mut test };
        set.push_trajectory(t as u32, &kept[t], recipe.kind, &norm);
    }
    let report = GenerationReport {
        kind: recipe.kind,
        requested: want,
        attempted,
        converged,
        train_trajectories: n_train,
        test_trajectories: converged - n_train,
        train_pairs: train.len(),
        test_pairs: test.len(),
    };
    Ok(Generated {
        dataset: Dataset {
            kind: recipe.kind,
            norm,
            train,
            test,
            train_trajectories: n_train,
            test_trajectories: converged - n_train,
        },
        report,
        trajectories: kept,
    })
}

/// Target control of a pair as a [`ControlInput`].
pub fn target_control(set: &PairSet, i: usize) -> ControlInput {
    let t = set.target(i);
    ControlInput([t[0], t[1], t[2], t[3]])
}
