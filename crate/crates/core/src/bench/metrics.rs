//! Per-leg flight metrics, saturation statistics and the rank test.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::sim::{FlightLog, WaypointPlan};

/// Distance at which a waypoint counts as reached [m].
pub const ARRIVAL_RADIUS: f64 = 0.2;

/// One waypoint-to-waypoint leg, closed by a waypoint switch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegMetrics {
    pub index: usize,
    pub from: [f64; 3],
    pub to: [f64; 3],
    pub start: f64,
    pub end: f64,
    /// Time from the leg start until the vehicle first came within
    /// [`ARRIVAL_RADIUS`] of the target, or of its closest approach if it
    /// never did.
    pub arrival: f64,
    pub reached: bool,
    pub closest: f64,
    /// Energy from the leg start to the arrival.
    pub energy: f64,
    /// Largest signed excursion past the target along the leg direction [m].
    pub overshoot: f64,
}

impl LegMetrics {
    pub fn length(&self) -> f64 {
        (Vector3::from(self.to) - Vector3::from(self.from)).norm()
    }
}

/// Splits a flight into legs at its waypoint switches.
pub fn leg_metrics(log: &FlightLog, plan: &WaypointPlan) -> Vec<LegMetrics> {
    let n = plan.waypoints.len();
    let mut legs = Vec::new();
    let mut start = 0.0;
    for (k, sw) in log.switches.iter().enumerate() {
        let to = plan.waypoints[sw.target];
        let from = plan.waypoints[(sw.target + n - 1) % n];
        let (i0, i1) = (log.index_at(start), log.index_at(sw.time).min(log.len() - 1));
        let axis = (to - from).try_normalize(1e-12).unwrap_or_else(Vector3::zeros);
        let mut reached = None;
        let (mut closest, mut closest_at) = (f64::INFINITY, start);
        let mut overshoot = f64::NEG_INFINITY;
        for i in i0..=i1 {
            let p = log.states[i].position;
            let d = (p - to).norm();
            overshoot = overshoot.max((p - to).dot(&axis));
            if d < closest {
                (closest, closest_at) = (d, log.time[i]);
            }
            if reached.is_none() && d < ARRIVAL_RADIUS {
                reached = Some(log.time[i]);
            }
        }
        let at = reached.unwrap_or(closest_at);
        let energy = log.energy_between(start, at);
        legs.push(LegMetrics {
            index: k,
            from: from.into(),
            to: to.into(),
            start,
            end: sw.time,
            arrival: at - start,
            reached: reached.is_some(),
            closest,
            energy,
            overshoot,
        });
        start = sw.time;
    }
    legs
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SaturationStats {
    pub episodes: usize,
    /// Summed duration over all rotors [s].
    pub total_time: f64,
    pub longest: f64,
    pub rotor_time: [f64; 4],
}

impl SaturationStats {
    pub fn of(log: &FlightLog) -> Self {
        let mut s = Self::default();
        for e in log.saturation_episodes() {
            let d = e.duration() + log.sample_dt;
            s.episodes += 1;
            s.total_time += d;
            s.longest = s.longest.max(d);
            s.rotor_time[e.rotor] += d;
        }
        s
    }
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self { n: v.len(), min: v[0], q1: q(0.25), median: q(0.5), q3: q(0.75), max: v[v.len() - 1] })
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    Quantiles::of(values).map(|q| q.median)
}

/// Two-sided Mann–Whitney U test with the tie-corrected normal
/// approximation; returns `(U of a, p)`.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return None;
    }
    let mut all: Vec<(f64, bool)> = a.iter().map(|x| (*x, true)).chain(b.iter().map(|x| (*x, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut rank_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_a += rank * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (f1, f2) = (n1 as f64, n2 as f64);
    let u = rank_a - f1 * (f1 + 1.0) / 2.0;
    let n = f1 + f2;
    let var = f1 * f2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)).max(1.0));
    if var <= 0.0 {
        return Some((u, 1.0));
    }
    let z = ((u - f1 * f2 / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    Some((u, erfc(z / std::f64::consts::SQRT_2).min(1.0)))
}
