//! Primal-dual interior-point method for sparse, banded NLPs
//!
//! `min f(z)  s.t.  c(z) = 0,  lb ≤ z ≤ ub`
//!
//! Log-barrier on the bounds, Newton steps on the primal-dual equations with
//! the exact Lagrangian Hessian, a filter line search and a monotone barrier
//! update. The KKT matrix is assembled in a caller-chosen ordering so that
//! it stays banded and is factorized with [`BandMatrix`].

use super::banded::BandMatrix;

/// `(row, col, value)`; duplicates are summed.
pub type Triplet = (usize, usize, f64);

const INF_BOUND: f64 = 1e19;

pub trait Nlp {
    fn n_vars(&self) -> usize;
    fn n_cons(&self) -> usize;
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];
    fn objective(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64], g: &mut [f64]);
    fn constraints(&self, z: &[f64], c: &mut [f64]);
    /// Constraint Jacobian, `(constraint, variable, value)`.
    fn jacobian(&self, z: &[f64], out: &mut Vec<Triplet>);
    /// Hessian of `obj_factor · f + λᵀc`, listing both triangles.
    fn hessian(&self, z: &[f64], obj_factor: f64, lambda: &[f64], out: &mut Vec<Triplet>);
    /// Position of every variable and every constraint in the KKT system.
    fn kkt_order(&self) -> (Vec<usize>, Vec<usize>);
}

#[derive(Clone, Debug)]
pub struct IpmOptions {
    pub max_iter: usize,
    /// Infinity norm of the constraint residual at convergence.
    pub constr_tol: f64,
    /// Scaled infinity norm of the Lagrangian gradient at convergence.
    pub dual_tol: f64,
    pub compl_tol: f64,
    pub mu_init: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self { max_iter: 300, constr_tol: 1e-6, dual_tol: 1e-4, compl_tol: 1e-6, mu_init: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IpmStatus {
    Converged,
    MaxIterations,
    LineSearchFailure,
    SingularKkt,
}

#[derive(Clone, Debug)]
pub struct IpmReport {
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    pub status: IpmStatus,
    pub iterations: usize,
    pub objective: f64,
    pub constraint_violation: f64,
    pub dual_infeasibility: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum BoundKind {
    Free,
    Lower,
    Upper,
    Both,
    Fixed,
}

impl BoundKind {
    fn has_lower(self) -> bool {
        matches!(self, Self::Lower | Self::Both)
    }
    fn has_upper(self) -> bool {
        matches!(self, Self::Upper | Self::Both)
    }
}

struct Workspace<'a, P: Nlp> {
    nlp: &'a P,
    n: usize,
    lb: &'a [f64],
    ub: &'a [f64],
    kind: Vec<BoundKind>,
    px: Vec<usize>,
    pc: Vec<usize>,
}

impl<P: Nlp> Workspace<'_, P> {
    fn barrier(&self, z: &[f64], mu: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            if self.kind[i].has_lower() {
                s -= (z[i] - self.lb[i]).ln();
            }
            if self.kind[i].has_upper() {
                s -= (self.ub[i] - z[i]).ln();
            }
        }
        mu * s
    }

    fn theta(&self, z: &[f64], c: &mut [f64]) -> f64 {
        self.nlp.constraints(z, c);
        c.iter().map(|v| v.abs()).sum()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Runs the interior-point iteration from `z0`.
pub fn solve<P: Nlp>(nlp: &P, z0: &[f64], opts: &IpmOptions) -> IpmReport {
    let n = nlp.n_vars();
    let m = nlp.n_cons();
    let (lb, ub) = (nlp.lower_bounds(), nlp.upper_bounds());
    let kind: Vec<BoundKind> = (0..n)
        .map(|i| {
            let (hl, hu) = (lb[i] > -INF_BOUND, ub[i] < INF_BOUND);
            match (hl, hu) {
                (true, true) if ub[i] - lb[i] <= 1e-12 * (1.0 + lb[i].abs()) => BoundKind::Fixed,
                (true, true) => BoundKind::Both,
                (true, false) => BoundKind::Lower,
                (false, true) => BoundKind::Upper,
                (false, false) => BoundKind::Free,
            }
        })
        .collect();
    let (px, pc) = nlp.kkt_order();
    let ws = Workspace { nlp, n, lb, ub, kind, px, pc };

    // Push the start strictly inside the box.
    let mut z = z0.to_vec();
    for i in 0..n {
        let (l, u) = (lb[i], ub[i]);
        match ws.kind[i] {
            BoundKind::Fixed => z[i] = l,
            BoundKind::Lower => z[i] = z[i].max(l + 1e-2 * l.abs().max(1.0)),
            BoundKind::Upper => z[i] = z[i].min(u - 1e-2 * u.abs().max(1.0)),
            BoundKind::Both => {
                let pl = (1e-2 * l.abs().max(1.0)).min(1e-2 * (u - l));
                let pu = (1e-2 * u.abs().max(1.0)).min(1e-2 * (u - l));
                z[i] = z[i].clamp(l + pl, u - pu);
            }
            BoundKind::Free => {}
        }
    }
    let mut lambda = vec![0.0; m];
    let mut zl: Vec<f64> = ws.kind.iter().map(|k| if k.has_lower() { 1.0 } else { 0.0 }).collect();
    let mut zu: Vec<f64> = ws.kind.iter().map(|k| if k.has_upper() { 1.0 } else { 0.0 }).collect();
    let mut mu = opts.mu_init;
    let mu_min = opts.compl_tol.min(opts.constr_tol) / 10.0;

    let mut g = vec![0.0; n];
    let mut c = vec![0.0; m];
    let mut c_trial = vec![0.0; m];
    let mut jac: Vec<Triplet> = Vec::new();
    let mut hess: Vec<Triplet> = Vec::new();
    let mut rx = vec![0.0; n];
    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut delta_last: f64 = 0.0;
    let mut theta_max = f64::NAN;
    let mut theta_min = f64::NAN;

    let report = |z: &[f64], lambda: &[f64], status, iterations, cv, di| IpmReport {
        objective: nlp.objective(z),
        z: z.to_vec(),
        lambda: lambda.to_vec(),
        status,
        iterations,
        constraint_violation: cv,
        dual_infeasibility: di,
    };

    for iter in 0..=opts.max_iter {
        nlp.gradient(&z, &mut g);
        nlp.constraints(&z, &mut c);
        jac.clear();
        nlp.jacobian(&z, &mut jac);
        let theta: f64 = c.iter().map(|v| v.abs()).sum();
        if theta_max.is_nan() {
            theta_max = 1e4 * theta.max(1.0);
            theta_min = 1e-4 * theta.max(1.0);
        }

        // Optimality measures.
        rx.copy_from_slice(&g);
        for &(r, col, v) in &jac {
            rx[col] += v * lambda[r];
        }
        for i in 0..n {
            rx[i] += zu[i] - zl[i];
            if ws.kind[i] == BoundKind::Fixed {
                rx[i] = 0.0;
            }
        }
        let s_max = 100.0;
        let dual_sum: f64 =
            lambda.iter().map(|v| v.abs()).sum::<f64>() + zl.iter().sum::<f64>() + zu.iter().sum::<f64>();
        let s_d = (dual_sum / (m + 2 * n).max(1) as f64).max(s_max) / s_max;
        let compl = |target: f64| {
            let mut e: f64 = 0.0;
            for i in 0..n {
                if ws.kind[i].has_lower() {
                    e = e.max(((z[i] - lb[i]) * zl[i] - target).abs());
                }
                if ws.kind[i].has_upper() {
                    e = e.max(((ub[i] - z[i]) * zu[i] - target).abs());
                }
            }
            e
        };
        let dual_inf = max_abs(&rx) / s_d;
        let cv = max_abs(&c);
        if !dual_inf.is_finite() || !cv.is_finite() {
            return report(&z, &lambda, IpmStatus::LineSearchFailure, iter, cv, dual_inf);
        }
        if cv <= opts.constr_tol && dual_inf <= opts.dual_tol && compl(0.0) / s_d <= opts.compl_tol {
            return report(&z, &lambda, IpmStatus::Converged, iter, cv, dual_inf);
        }
        if iter == opts.max_iter {
            return report(&z, &lambda, IpmStatus::MaxIterations, iter, cv, dual_inf);
        }

        // Barrier update (possibly several times in a row).
        loop {
            let e_mu = dual_inf.max(cv).max(compl(mu) / s_d);
            if e_mu > 10.0 * mu || mu <= mu_min {
                break;
            }
            mu = mu_min.max((0.2 * mu).min(mu.powf(1.5)));
            filter.clear();
        }

        hess.clear();
        nlp.hessian(&z, 1.0, &lambda, &mut hess);

        let mut sigma = vec![0.0; n];
        let mut grad_phi = g.clone();
        for i in 0..n {
            if ws.kind[i].has_lower() {
                let s = z[i] - lb[i];
                sigma[i] += zl[i] / s;
                grad_phi[i] -= mu / s;
            }
            if ws.kind[i].has_upper() {
                let s = ub[i] - z[i];
                sigma[i] += zu[i] / s;
                grad_phi[i] += mu / s;
            }
        }

        // Bandwidth from the current structure.
        let mut bw = 0usize;
        for &(r, col, _) in &jac {
            bw = bw.max(ws.pc[r].abs_diff(ws.px[col]));
        }
        for &(a, b, _) in &hess {
            bw = bw.max(ws.px[a].abs_diff(ws.px[b]));
        }
        let dim = n + m;

        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            rhs[ws.px[i]] = -(grad_phi[i] + rx[i] - g[i] + zl[i] - zu[i]);
            if ws.kind[i] == BoundKind::Fixed {
                rhs[ws.px[i]] = 0.0;
            }
        }
        for j in 0..m {
            rhs[ws.pc[j]] = -c[j];
        }

        let assemble = |delta_w: f64, delta_c: f64| {
            let mut k = BandMatrix::zeros(dim, bw, bw);
            for &(a, b, v) in &hess {
                if ws.kind[a] != BoundKind::Fixed && ws.kind[b] != BoundKind::Fixed {
                    k.add(ws.px[a], ws.px[b], v);
                }
            }
            for i in 0..n {
                if ws.kind[i] == BoundKind::Fixed {
                    k.add(ws.px[i], ws.px[i], 1.0);
                } else {
                    k.add(ws.px[i], ws.px[i], sigma[i] + delta_w);
                }
            }
            for &(r, col, v) in &jac {
                if ws.kind[col] != BoundKind::Fixed {
                    k.add(ws.pc[r], ws.px[col], v);
                    k.add(ws.px[col], ws.pc[r], v);
                }
            }
            if delta_c != 0.0 {
                for j in 0..m {
                    k.add(ws.pc[j], ws.pc[j], -delta_c);
                }
            }
            k
        };

        // Regularize until the step has positive curvature along dz.
        let mut delta_w = 0.0;
        let mut delta_c = 0.0;
        let sol = loop {
            let k = assemble(delta_w, delta_c);
            let step = k.factor(1e-15).map(|lu| {
                let mut s = rhs.clone();
                lu.solve_in_place(&mut s);
                s
            });
            let next_delta = |d: f64| {
                if d == 0.0 {
                    if delta_last == 0.0 {
                        1e-4
                    } else {
                        (delta_last / 3.0).max(1e-20)
                    }
                } else if delta_last == 0.0 {
                    100.0 * d
                } else {
                    8.0 * d
                }
            };
            match step {
                None => {
                    delta_c = 1e-8 * mu.powf(0.25);
                    delta_w = next_delta(delta_w);
                }
                Some(s) => {
                    let dz: Vec<f64> = (0..n).map(|i| s[ws.px[i]]).collect();
                    let mut wd = vec![0.0; n];
                    for &(a, b, v) in &hess {
                        if ws.kind[a] != BoundKind::Fixed && ws.kind[b] != BoundKind::Fixed {
                            wd[a] += v * dz[b];
                        }
                    }
                    let curv: f64 = (0..n).map(|i| dz[i] * (wd[i] + (sigma[i] + delta_w) * dz[i])).sum();
                    let dd: f64 = dz.iter().map(|v| v * v).sum();
                    if curv >= 1e-10 * dd {
                        break Some(s);
                    }
                    delta_w = next_delta(delta_w);
                }
            }
            if delta_w > 1e40 {
                break None;
            }
        };
        let Some(sol) = sol else {
            return report(&z, &lambda, IpmStatus::SingularKkt, iter, cv, dual_inf);
        };
        if delta_w > 0.0 {
            delta_last = delta_w;
        }
        let dz: Vec<f64> = (0..n).map(|i| sol[ws.px[i]]).collect();
        let dl: Vec<f64> = (0..m).map(|j| sol[ws.pc[j]]).collect();
        let mut dzl = vec![0.0; n];
        let mut dzu = vec![0.0; n];
        for i in 0..n {
            if ws.kind[i].has_lower() {
                let s = z[i] - lb[i];
                dzl[i] = mu / s - zl[i] - zl[i] / s * dz[i];
            }
            if ws.kind[i].has_upper() {
                let s = ub[i] - z[i];
                dzu[i] = mu / s - zu[i] + zu[i] / s * dz[i];
            }
        }

        // Fraction to the boundary.
        let tau = (1.0 - mu).max(0.99);
        let mut alpha_max: f64 = 1.0;
        let mut alpha_z: f64 = 1.0;
        for i in 0..n {
            if ws.kind[i].has_lower() {
                if dz[i] < 0.0 {
                    alpha_max = alpha_max.min(-tau * (z[i] - lb[i]) / dz[i]);
                }
                if dzl[i] < 0.0 {
                    alpha_z = alpha_z.min(-tau * zl[i] / dzl[i]);
                }
            }
            if ws.kind[i].has_upper() {
                if dz[i] > 0.0 {
                    alpha_max = alpha_max.min(tau * (ub[i] - z[i]) / dz[i]);
                }
                if dzu[i] < 0.0 {
                    alpha_z = alpha_z.min(-tau * zu[i] / dzu[i]);
                }
            }
        }

        // Filter line search on (θ, φ_μ).
        let phi = nlp.objective(&z) + ws.barrier(&z, mu);
        let dphi: f64 = grad_phi.iter().zip(&dz).map(|(a, b)| a * b).sum();
        let (gamma_t, gamma_p, eta) = (1e-5, 1e-8, 1e-4);
        let acceptable_to_filter =
            |t: f64, p: f64, filter: &[(f64, f64)]| filter.iter().all(|&(ft, fp)| t < ft || p < fp);
        let mut alpha = alpha_max;
        let mut accepted = None;
        let mut z_trial = vec![0.0; n];
        for attempt in 0..40 {
            for i in 0..n {
                z_trial[i] = z[i] + alpha * dz[i];
            }
            let t_trial = ws.theta(&z_trial, &mut c_trial);
            let p_trial = nlp.objective(&z_trial) + ws.barrier(&z_trial, mu);
            let switching = dphi < 0.0 && alpha * (-dphi).powf(2.3) > theta.powf(1.1);
            if t_trial.is_finite()
                && p_trial.is_finite()
                && t_trial <= theta_max
                && acceptable_to_filter(t_trial, p_trial, &filter)
            {
                if theta <= theta_min && switching {
                    if p_trial <= phi + eta * alpha * dphi {
                        accepted = Some(Step::Line { alpha, f_type: true });
                    }
                } else if t_trial <= (1.0 - gamma_t) * theta || p_trial <= phi - gamma_p * theta {
                    accepted = Some(Step::Line { alpha, f_type: false });
                }
            }
            if accepted.is_some() {
                break;
            }
            // Second-order correction on the first rejected full step.
            if attempt == 0 && t_trial.is_finite() && t_trial >= theta && theta > 0.0 {
                let mut rhs_soc = rhs.clone();
                for j in 0..m {
                    rhs_soc[ws.pc[j]] = -(alpha * c[j] + c_trial[j]);
                }
                if let Some(lu) = assemble(delta_w, delta_c).factor(1e-15) {
                    lu.solve_in_place(&mut rhs_soc);
                    let dz_soc: Vec<f64> = (0..n).map(|i| rhs_soc[ws.px[i]]).collect();
                    let mut a_soc: f64 = 1.0;
                    for i in 0..n {
                        if ws.kind[i].has_lower() && dz_soc[i] < 0.0 {
                            a_soc = a_soc.min(-tau * (z[i] - lb[i]) / dz_soc[i]);
                        }
                        if ws.kind[i].has_upper() && dz_soc[i] > 0.0 {
                            a_soc = a_soc.min(tau * (ub[i] - z[i]) / dz_soc[i]);
                        }
                    }
                    let zs: Vec<f64> = (0..n).map(|i| z[i] + a_soc * dz_soc[i]).collect();
                    let t_soc = ws.theta(&zs, &mut c_trial);
                    let p_soc = nlp.objective(&zs) + ws.barrier(&zs, mu);
                    if t_soc.is_finite()
                        && p_soc.is_finite()
                        && t_soc <= theta_max
                        && acceptable_to_filter(t_soc, p_soc, &filter)
                    {
                        let ok = if theta <= theta_min && switching {
                            p_soc <= phi + eta * dphi
                        } else {
                            t_soc <= (1.0 - gamma_t) * theta || p_soc <= phi - gamma_p * theta
                        };
                        if ok {
                            accepted = Some(Step::Soc { z: zs, alpha: a_soc });
                            break;
                        }
                    }
                }
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                break;
            }
        }
        let Some(step) = accepted else {
            return report(&z, &lambda, IpmStatus::LineSearchFailure, iter, cv, dual_inf);
        };
        let alpha = match step {
            Step::Line { alpha, f_type } => {
                if !f_type {
                    filter.push(((1.0 - gamma_t) * theta, phi - gamma_p * theta));
                }
                for i in 0..n {
                    z[i] += alpha * dz[i];
                }
                alpha
            }
            Step::Soc { z: zs, alpha } => {
                filter.push(((1.0 - gamma_t) * theta, phi - gamma_p * theta));
                z = zs;
                alpha
            }
        };
        for j in 0..m {
            lambda[j] += alpha * dl[j];
        }
        update_duals(&ws, &z, mu, alpha_z, &dzl, &dzu, &mut zl, &mut zu);
    }
    unreachable!("loop returns at max_iter")
}

enum Step {
    Line { alpha: f64, f_type: bool },
    Soc { z: Vec<f64>, alpha: f64 },
}

#[allow(clippy::too_many_arguments)]
fn update_duals<P: Nlp>(
    ws: &Workspace<'_, P>,
    z: &[f64],
    mu: f64,
    alpha_z: f64,
    dzl: &[f64],
    dzu: &[f64],
    zl: &mut [f64],
    zu: &mut [f64],
) {
    let kappa = 1e10;
    for i in 0..ws.n {
        if ws.kind[i].has_lower() {
            let s = z[i] - ws.lb[i];
            zl[i] = (zl[i] + alpha_z * dzl[i]).clamp(mu / (kappa * s), kappa * mu / s);
        }
        if ws.kind[i].has_upper() {
            let s = ws.ub[i] - z[i];
            zu[i] = (zu[i] + alpha_z * dzu[i]).clamp(mu / (kappa * s), kappa * mu / s);
        }
    }
}
