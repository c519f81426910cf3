//! Minimum-snap piecewise polynomials through waypoints.
//!
//! Every segment is a polynomial in normalized local time `s ∈ [0, 1]`, so a
//! time scaling only touches the knot vector.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 6;
/// Continuity order of x, y, z at interior knots.
pub const POSITION_CONTINUITY: usize = 4;
/// Continuity order of yaw at interior knots.
pub const YAW_CONTINUITY: usize = 2;
pub const YAW: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vector3<f64>,
    pub yaw: Option<f64>,
    /// Velocity parallel to the heading `(cos ψ, sin ψ)`; needs a yaw.
    pub align_velocity: bool,
    /// Extra pinned derivatives `(axis, order, value)`, axis 3 being yaw.
    pub pins: Vec<(usize, usize, f64)>,
}

impl Waypoint {
    pub fn at(position: Vector3<f64>) -> Self {
        Self { position, yaw: None, align_velocity: false, pins: Vec::new() }
    }

    pub fn with_yaw(mut self, yaw: f64) -> Self {
        self.yaw = Some(yaw);
        self
    }

    pub fn aligned(mut self) -> Self {
        self.align_velocity = true;
        self
    }

    pub fn pin(mut self, axis: usize, order: usize, value: f64) -> Self {
        self.pins.push((axis, order, value));
        self
    }

    /// Zero derivatives of orders `1..=up_to` on x, y and z.
    pub fn at_rest(mut self, up_to: usize) -> Self {
        for axis in 0..3 {
            for r in 1..=up_to {
                self.pins.push((axis, r, 0.0));
            }
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapProblem {
    pub waypoints: Vec<Waypoint>,
    pub segment_times: Vec<f64>,
    pub order: usize,
    pub mu_r: f64,
    pub mu_psi: f64,
}

impl SnapProblem {
    pub fn new(waypoints: Vec<Waypoint>, segment_times: Vec<f64>) -> Self {
        Self { waypoints, segment_times, order: DEFAULT_ORDER, mu_r: 1.0, mu_psi: 0.1 }
    }

    /// Splits `total_time` evenly over the segments.
    pub fn uniform(waypoints: Vec<Waypoint>, total_time: f64) -> Self {
        let m = waypoints.len().saturating_sub(1).max(1);
        Self::new(waypoints, vec![total_time / m as f64; m])
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.waypoints.len() < 2 {
            return bad("need at least two waypoints".into());
        }
        if self.segment_times.len() != self.waypoints.len() - 1 {
            return bad(format!("{} segment times for {} waypoints", self.segment_times.len(), self.waypoints.len()));
        }
        if self.segment_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return bad("segment times must be positive".into());
        }
        if !(POSITION_CONTINUITY..=15).contains(&self.order) {
            return bad(format!("polynomial order {} outside 4..=15", self.order));
        }
        if !(self.mu_r > 0.0 && self.mu_psi > 0.0) {
            return bad("cost weights must be positive".into());
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if w.align_velocity && w.yaw.is_none() {
                return bad(format!("waypoint {i} aligns velocity without a yaw"));
            }
            if let Some(&(axis, order, _)) = w.pins.iter().find(|(a, r, _)| *a > YAW || *r > self.order) {
                return bad(format!("waypoint {i} pins axis {axis} order {order}"));
            }
        }
        Ok(())
    }

    fn has_yaw(&self) -> bool {
        self.waypoints.iter().any(|w| w.yaw.is_some() || w.pins.iter().any(|p| p.0 == YAW))
    }
}

/// Rectangle track flown `laps` times from a hover start: yaw 45° at the
/// second visit, +90° per visit after it, velocity along the heading at every
/// visit but the first, and uniform segment times.
pub fn rectangle_plan(laps: usize, total_time: f64) -> Result<SnapProblem> {
    if laps == 0 {
        return Err(Error::InvalidSpec("at least one lap".into()));
    }
    let corners = [
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(4.0, 0.0, 0.0),
        Vector3::new(4.0, 3.0, 0.0),
        Vector3::new(0.0, 3.0, 0.0),
    ];
    let visits = 4 * laps + 1;
    let mut waypoints = vec![Waypoint::at(corners[0]).with_yaw(0.0).at_rest(2)];
    for k in 1..visits {
        let yaw = (45.0 + 90.0 * (k - 1) as f64).to_radians();
        waypoints.push(Waypoint::at(corners[k % 4]).with_yaw(yaw).aligned());
    }
    Ok(SnapProblem::uniform(waypoints, total_time))
}

fn falling(k: usize, r: usize) -> f64 {
    ((k - r + 1)..=k).map(|v| v as f64).product()
}

/// Row of `d^r/dt^r` at local time `s` on a segment of duration `h`.
fn basis(order: usize, r: usize, s: f64, h: f64) -> Vec<f64> {
    let scale = h.powi(-(r as i32));
    (0..=order).map(|k| if k < r { 0.0 } else { scale * falling(k, r) * s.powi((k - r) as i32) }).collect()
}

/// `∫₀¹ (d^r p/ds^r)² ds` as a quadratic form in the coefficients.
fn cost_matrix(order: usize, r: usize) -> DMatrix<f64> {
    DMatrix::from_fn(order + 1, order + 1, |j, k| {
        if j < r || k < r {
            0.0
        } else {
            falling(j, r) * falling(k, r) / (j + k + 1 - 2 * r) as f64
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTrajectory {
    pub order: usize,
    /// Segment boundaries, `knots[0] = 0` and `knots.last()` the duration.
    pub knots: Vec<f64>,
    /// `coeffs[segment][axis]`, ascending powers of normalized time.
    pub coeffs: Vec<[Vec<f64>; 4]>,
}

/// Solution with its linear-algebra diagnostics.
#[derive(Clone, Debug)]
pub struct SnapSolution {
    pub trajectory: PolyTrajectory,
    /// Normwise backward error of the KKT solve,
    /// `‖Kz − b‖∞ / (‖K‖∞ ‖z‖∞ + ‖b‖∞)`.
    pub kkt_residual: f64,
}

pub fn solve_min_snap(problem: &SnapProblem) -> Result<PolyTrajectory> {
    Ok(solve_min_snap_detailed(problem)?.trajectory)
}

pub fn solve_min_snap_detailed(problem: &SnapProblem) -> Result<SnapSolution> {
    problem.validate()?;
    let n = problem.order;
    let m = problem.segment_times.len();
    let mut coeffs = vec![std::array::from_fn::<Vec<f64>, 4, _>(|_| vec![0.0; n + 1]); m];
    let mut kkt_residual: f64 = 0.0;
    let blocks: &[&[usize]] = if problem.has_yaw() { &[&[0, 1], &[2], &[YAW]] } else { &[&[0, 1], &[2]] };
    for axes in blocks {
        let (sol, res) = solve_block(problem, axes)?;
        kkt_residual = kkt_residual.max(res);
        for seg in 0..m {
            for (a, &axis) in axes.iter().enumerate() {
                let off = (seg * axes.len() + a) * (n + 1);
                coeffs[seg][axis].copy_from_slice(&sol[off..off + n + 1]);
            }
        }
    }
    let mut knots = vec![0.0];
    for h in &problem.segment_times {
        knots.push(knots.last().unwrap() + h);
    }
    Ok(SnapSolution { trajectory: PolyTrajectory { order: n, knots, coeffs }, kkt_residual })
}

fn solve_block(problem: &SnapProblem, axes: &[usize]) -> Result<(Vec<f64>, f64)> {
    let n = problem.order;
    let m = problem.segment_times.len();
    let na = axes.len();
    let nv = m * na * (n + 1);
    let var = |seg: usize, a: usize| (seg * na + a) * (n + 1);
    let h = &problem.segment_times;

    let mut hess = DMatrix::<f64>::zeros(nv, nv);
    for (a, &axis) in axes.iter().enumerate() {
        let (r, mu) = if axis == YAW { (2, problem.mu_psi) } else { (4, problem.mu_r) };
        let q = cost_matrix(n, r);
        for seg in 0..m {
            let w = mu * h[seg].powi(1 - 2 * r as i32);
            let o = var(seg, a);
            hess.view_mut((o, o), (n + 1, n + 1)).copy_from(&(&q * w));
        }
    }

    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let at_knot = |j: usize| if j < m { (j, 0.0) } else { (m - 1, 1.0) };
    for (a, &axis) in axes.iter().enumerate() {
        let cont = if axis == YAW { YAW_CONTINUITY } else { POSITION_CONTINUITY };
        for j in 1..m {
            for r in 0..=cont {
                let left = basis(n, r, 1.0, h[j - 1]);
                let right = basis(n, r, 0.0, h[j]);
                let mut row: Vec<(usize, f64)> =
                    left.iter().enumerate().map(|(k, v)| (var(j - 1, a) + k, *v)).collect();
                row.extend(right.iter().enumerate().map(|(k, v)| (var(j, a) + k, -v)));
                rows.push((row, 0.0));
            }
        }
        for (j, w) in problem.waypoints.iter().enumerate() {
            let (seg, s) = at_knot(j);
            let mut pins: Vec<(usize, f64)> = Vec::new();
            if axis == YAW {
                pins.extend(w.yaw.map(|y| (0, y)));
            } else {
                pins.push((0, w.position[axis]));
            }
            pins.extend(w.pins.iter().filter(|p| p.0 == axis).map(|p| (p.1, p.2)));
            for (r, value) in pins {
                let b = basis(n, r, s, h[seg]);
                rows.push((b.iter().enumerate().map(|(k, v)| (var(seg, a) + k, *v)).collect(), value));
            }
        }
    }
    if axes.contains(&0) && axes.contains(&1) {
        for (j, w) in problem.waypoints.iter().enumerate() {
            if let (true, Some(yaw)) = (w.align_velocity, w.yaw) {
                let (seg, s) = at_knot(j);
                let b = basis(n, 1, s, h[seg]);
                let mut row: Vec<(usize, f64)> =
                    b.iter().enumerate().map(|(k, v)| (var(seg, 0) + k, v * yaw.sin())).collect();
                row.extend(b.iter().enumerate().map(|(k, v)| (var(seg, 1) + k, -v * yaw.cos())));
                rows.push((row, 0.0));
            }
        }
    }

    let nc = rows.len();
    if nc > nv {
        return Err(Error::SingularKkt);
    }
    let dim = nv + nc;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    kkt.view_mut((0, 0), (nv, nv)).copy_from(&hess);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (i, (row, value)) in rows.iter().enumerate() {
        for &(c, v) in row {
            kkt[(nv + i, c)] += v;
            kkt[(c, nv + i)] += v;
        }
        rhs[nv + i] = *value;
    }
    let lu = kkt.clone().full_piv_lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..dim).map(|i| u[(i, i)].abs()).collect();
    let big = diag.iter().cloned().fold(0.0, f64::max);
    if !(big > 0.0) || diag.iter().any(|d| *d <= 1e-13 * big) {
        return Err(Error::SingularKkt);
    }
    let mut z = lu.solve(&rhs).ok_or(Error::SingularKkt)?;
    // One refinement step against the original system.
    let r = &rhs - &kkt * &z;
    if let Some(dz) = lu.solve(&r) {
        z += dz;
    }
    let knorm = kkt.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let residual = (&rhs - &kkt * &z).amax() / (knorm * z.amax() + rhs.amax()).max(f64::MIN_POSITIVE);
    if !residual.is_finite() {
        return Err(Error::SingularKkt);
    }
    Ok((z.rows(0, nv).iter().copied().collect(), residual))
}

impl PolyTrajectory {
    pub fn duration(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn segments(&self) -> usize {
        self.coeffs.len()
    }

    /// Segment index and local time for `t`, clamped to the trajectory.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(0.0, self.duration());
        let seg = self.knots[1..self.knots.len() - 1].partition_point(|k| *k <= t);
        let h = self.knots[seg + 1] - self.knots[seg];
        (seg, ((t - self.knots[seg]) / h).clamp(0.0, 1.0))
    }

    /// `r`-th time derivative of (x, y, z, ψ) at `t`.
    pub fn eval(&self, t: f64, r: usize) -> [f64; 4] {
        let (seg, s) = self.locate(t);
        let h = self.knots[seg + 1] - self.knots[seg];
        let b = basis(self.order, r, s, h);
        std::array::from_fn(|a| self.coeffs[seg][a].iter().zip(&b).map(|(c, v)| c * v).sum())
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        let v = self.eval(t, 0);
        Vector3::new(v[0], v[1], v[2])
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        let v = self.eval(t, 1);
        Vector3::new(v[0], v[1], v[2])
    }

    pub fn acceleration(&self, t: f64) -> Vector3<f64> {
        let v = self.eval(t, 2);
        Vector3::new(v[0], v[1], v[2])
    }

    pub fn yaw(&self, t: f64) -> f64 {
        self.eval(t, 0)[YAW]
    }

    /// `∫ (d^r/dt^r)²` of one axis, exact.
    pub fn axis_cost(&self, axis: usize, r: usize) -> f64 {
        let q = cost_matrix(self.order, r);
        (0..self.segments())
            .map(|seg| {
                let h = self.knots[seg + 1] - self.knots[seg];
                let c = DVector::from_column_slice(&self.coeffs[seg][axis]);
                h.powi(1 - 2 * r as i32) * (c.transpose() * &q * &c)[(0, 0)]
            })
            .sum()
    }

    /// Unweighted snap cost of x, y and z.
    pub fn snap_cost(&self) -> f64 {
        (0..3).map(|a| self.axis_cost(a, 4)).sum()
    }

    /// Reparameterization `p_α(t) = p(α t)`; the duration becomes `T/α`.
    pub fn time_scale(&self, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidSpec(format!("time scale {alpha} must be positive")));
        }
        Ok(Self { knots: self.knots.iter().map(|k| k / alpha).collect(), ..self.clone() })
    }

    /// End times of successive groups of `per_lap` segments.
    pub fn lap_boundaries(&self, per_lap: usize) -> Vec<f64> {
        self.knots.iter().skip(per_lap.max(1)).step_by(per_lap.max(1)).copied().collect()
    }

    /// Coefficient table: `segment,t0,duration,axis,c0..cn`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("segment,t0,duration,axis");
        for k in 0..=self.order {
            let _ = write!(out, ",c{k}");
        }
        out.push('\n');
        for seg in 0..self.segments() {
            for (axis, name) in ["x", "y", "z", "yaw"].iter().enumerate() {
                let _ = write!(out, "{seg},{:e},{:e},{name}", self.knots[seg], self.knots[seg + 1] - self.knots[seg]);
                for c in &self.coeffs[seg][axis] {
                    let _ = write!(out, ",{c:e}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptFile(format!("coefficient table: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| corrupt("empty"))?;
        let order = header.split(',').count().checked_sub(5).ok_or_else(|| corrupt("header"))?;
        let mut knots = vec![0.0];
        let mut coeffs: Vec<[Vec<f64>; 4]> = Vec::new();
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != order + 5 {
                return Err(corrupt("row width"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| corrupt("number"));
            let seg: usize = f[0].parse().map_err(|_| corrupt("segment"))?;
            let axis = i % 4;
            if seg != i / 4 || f[3] != ["x", "y", "z", "yaw"][axis] {
                return Err(corrupt("row order"));
            }
            if axis == 0 {
                coeffs.push(Default::default());
                knots.push(num(f[1])? + num(f[2])?);
            }
            coeffs[seg][axis] = f[4..].iter().map(|s| num(s)).collect::<Result<_>>()?;
        }
        if coeffs.is_empty() || coeffs.last().unwrap()[YAW].is_empty() {
            return Err(corrupt("truncated"));
        }
        Ok(Self { order, knots, coeffs })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
