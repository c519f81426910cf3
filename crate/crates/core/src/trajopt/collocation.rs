//! Compressed Hermite–Simpson transcription of a free-final-time
//! minimum-energy problem for any [`Plant`].
//!
//! Decision variables are stored node by node as `[x_k, u_k, τ_k]`, where
//! `τ_k` is the (scaled) width of segment `k`. Consecutive widths are tied
//! by equality rows, so every row of the problem couples at most two
//! neighbouring nodes and the KKT matrix is banded.

use super::ipm::{Nlp, Triplet};
use super::plant::Plant;

/// Constraint on a boundary node.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryRow {
    /// `Σ coeff · y[index] = rhs` over the node's `(x, u)` entries.
    Linear { terms: Vec<(usize, f64)>, rhs: f64 },
    /// The `index`-th component of `f(x_N, u_N)` vanishes.
    Derivative(usize),
}

impl BoundaryRow {
    pub fn fix(index: usize, value: f64) -> Self {
        Self::Linear { terms: vec![(index, 1.0)], rhs: value }
    }
}

/// Everything needed to build a [`Collocation`].
#[derive(Clone, Debug)]
pub struct CollocationSetup<P> {
    pub plant: P,
    pub segments: usize,
    /// Bounds on the states of nodes `1..=N`; node 0 is pinned by `initial`.
    pub state_bounds: Vec<(f64, f64)>,
    pub control_bounds: Vec<(f64, f64)>,
    pub duration_bounds: (f64, f64),
    /// Reference duration used to scale the segment widths.
    pub duration_ref: f64,
    pub initial: Vec<BoundaryRow>,
    pub terminal: Vec<BoundaryRow>,
}

#[derive(Clone, Debug)]
pub struct Collocation<P> {
    plant: P,
    segments: usize,
    nx: usize,
    nu: usize,
    h_ref: f64,
    lb: Vec<f64>,
    ub: Vec<f64>,
    initial: Vec<BoundaryRow>,
    terminal: Vec<BoundaryRow>,
    nl: std::ops::Range<usize>,
}

/// Plant values at every node.
struct NodeEval {
    f: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
}

impl<P: Plant> Collocation<P> {
    pub fn new(setup: CollocationSetup<P>, nonlinear_states: std::ops::Range<usize>) -> Self {
        let (nx, nu) = (setup.plant.state_dim(), setup.plant.control_dim());
        let n_seg = setup.segments;
        let h_ref = setup.duration_ref / n_seg as f64;
        let ny = nx + nu;
        let nv = n_seg * (ny + 1) + ny;
        let mut lb = vec![-1e20; nv];
        let mut ub = vec![1e20; nv];
        for k in 0..=n_seg {
            let o = k * (ny + 1);
            if k > 0 {
                for (i, &(l, u)) in setup.state_bounds.iter().enumerate() {
                    lb[o + i] = l;
                    ub[o + i] = u;
                }
            }
            for (i, &(l, u)) in setup.control_bounds.iter().enumerate() {
                lb[o + nx + i] = l;
                ub[o + nx + i] = u;
            }
            if k < n_seg {
                let scale = n_seg as f64 * h_ref;
                lb[o + ny] = setup.duration_bounds.0 / scale;
                ub[o + ny] = setup.duration_bounds.1 / scale;
            }
        }
        Self {
            plant: setup.plant,
            segments: n_seg,
            nx,
            nu,
            h_ref,
            lb,
            ub,
            initial: setup.initial,
            terminal: setup.terminal,
            nl: nonlinear_states,
        }
    }

    pub fn plant(&self) -> &P {
        &self.plant
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn state_dim(&self) -> usize {
        self.nx
    }

    pub fn control_dim(&self) -> usize {
        self.nu
    }

    fn ny(&self) -> usize {
        self.nx + self.nu
    }

    /// Offset of node `k`'s state block in the decision vector.
    pub fn state_offset(&self, k: usize) -> usize {
        k * (self.ny() + 1)
    }

    pub fn control_offset(&self, k: usize) -> usize {
        self.state_offset(k) + self.nx
    }

    /// Offset of segment `k`'s width variable.
    pub fn width_offset(&self, k: usize) -> usize {
        self.state_offset(k) + self.ny()
    }

    pub fn width_scale(&self) -> f64 {
        self.h_ref
    }

    pub fn defect_rows(&self) -> usize {
        self.segments * self.nx
    }

    fn defect_row(&self, k: usize) -> usize {
        self.initial.len() + k * (self.nx + 1)
    }

    fn terminal_row(&self) -> usize {
        self.initial.len() + self.segments * (self.nx + 1) - 1
    }

    /// Packs node arrays and a total duration (split evenly) into `z`.
    pub fn pack(&self, states: &[Vec<f64>], controls: &[Vec<f64>], duration: f64) -> Vec<f64> {
        let mut z = vec![0.0; self.n_vars()];
        for k in 0..=self.segments {
            let o = self.state_offset(k);
            z[o..o + self.nx].copy_from_slice(&states[k]);
            z[o + self.nx..o + self.ny()].copy_from_slice(&controls[k]);
            if k < self.segments {
                z[o + self.ny()] = duration / (self.segments as f64 * self.h_ref);
            }
        }
        z
    }

    /// Node states, node controls and segment widths in seconds.
    pub fn unpack(&self, z: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let states =
            (0..=self.segments).map(|k| z[self.state_offset(k)..self.state_offset(k) + self.nx].to_vec()).collect();
        let controls =
            (0..=self.segments).map(|k| z[self.control_offset(k)..self.control_offset(k) + self.nu].to_vec()).collect();
        let widths = (0..self.segments).map(|k| z[self.width_offset(k)] * self.h_ref).collect();
        (states, controls, widths)
    }

    fn node<'z>(&self, z: &'z [f64], k: usize) -> (&'z [f64], &'z [f64]) {
        let o = self.state_offset(k);
        (&z[o..o + self.nx], &z[o + self.nx..o + self.ny()])
    }

    fn width(&self, z: &[f64], k: usize) -> f64 {
        z[self.width_offset(k)] * self.h_ref
    }

    fn eval_nodes(&self, z: &[f64], with_jac: bool) -> NodeEval {
        let (nx, ny) = (self.nx, self.ny());
        let mut f = Vec::with_capacity(self.segments + 1);
        let mut a = Vec::with_capacity(self.segments + 1);
        for k in 0..=self.segments {
            let (x, u) = self.node(z, k);
            let mut fk = vec![0.0; nx];
            if with_jac {
                let mut ak = vec![0.0; nx * ny];
                self.plant.jacobian(x, u, &mut fk, &mut ak);
                a.push(ak);
            } else {
                self.plant.eval(x, u, &mut fk);
            }
            f.push(fk);
        }
        NodeEval { f, a }
    }

    /// Midpoint state and control of segment `k`.
    fn midpoint(&self, z: &[f64], k: usize, nodes: &NodeEval) -> (Vec<f64>, Vec<f64>) {
        let h = self.width(z, k);
        let (x0, u0) = self.node(z, k);
        let (x1, u1) = self.node(z, k + 1);
        let xm = (0..self.nx).map(|i| 0.5 * (x0[i] + x1[i]) + h / 8.0 * (nodes.f[k][i] - nodes.f[k + 1][i])).collect();
        let um = (0..self.nu).map(|i| 0.5 * (u0[i] + u1[i])).collect();
        (xm, um)
    }

    /// Energy `Σ h/6 (|u_k|² + |u_k + u_{k+1}|² + |u_{k+1}|²)` and its gradient.
    pub fn energy_objective(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; z.len()];
        let mut cost = 0.0;
        for k in 0..self.segments {
            let h = self.width(z, k);
            let (_, u0) = self.node(z, k);
            let (_, u1) = self.node(z, k + 1);
            let mut q = 0.0;
            for i in 0..self.nu {
                q += u0[i] * u0[i] + (u0[i] + u1[i]).powi(2) + u1[i] * u1[i];
                grad[self.control_offset(k) + i] += h / 6.0 * (4.0 * u0[i] + 2.0 * u1[i]);
                grad[self.control_offset(k + 1) + i] += h / 6.0 * (2.0 * u0[i] + 4.0 * u1[i]);
            }
            cost += h / 6.0 * q;
            grad[self.width_offset(k)] += self.h_ref / 6.0 * q;
        }
        (cost, grad)
    }

    fn boundary_value(&self, row: &BoundaryRow, y: &[f64], f: &[f64]) -> f64 {
        match row {
            BoundaryRow::Linear { terms, rhs } => terms.iter().map(|&(i, c)| c * y[i]).sum::<f64>() - rhs,
            BoundaryRow::Derivative(i) => f[*i],
        }
    }

    /// Largest absolute Hermite–Simpson defect.
    pub fn max_defect(&self, z: &[f64]) -> f64 {
        let mut c = vec![0.0; self.n_cons()];
        self.constraints(z, &mut c);
        (0..self.segments)
            .flat_map(|k| {
                let r = self.defect_row(k);
                c[r..r + self.nx].to_vec()
            })
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl<P: Plant> Nlp for Collocation<P> {
    fn n_vars(&self) -> usize {
        self.segments * (self.ny() + 1) + self.ny()
    }

    fn n_cons(&self) -> usize {
        self.terminal_row() + self.terminal.len()
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lb
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.ub
    }

    fn objective(&self, z: &[f64]) -> f64 {
        self.energy_objective(z).0
    }

    fn gradient(&self, z: &[f64], g: &mut [f64]) {
        g.copy_from_slice(&self.energy_objective(z).1);
    }

    fn constraints(&self, z: &[f64], c: &mut [f64]) {
        let nx = self.nx;
        let nodes = self.eval_nodes(z, false);
        let y0 = &z[0..self.ny()];
        for (r, row) in self.initial.iter().enumerate() {
            c[r] = self.boundary_value(row, y0, &nodes.f[0]);
        }
        let mut fm = vec![0.0; nx];
        for k in 0..self.segments {
            let h = self.width(z, k);
            let (xm, um) = self.midpoint(z, k, &nodes);
            self.plant.eval(&xm, &um, &mut fm);
            let (x0, _) = self.node(z, k);
            let (x1, _) = self.node(z, k + 1);
            let r = self.defect_row(k);
            for i in 0..nx {
                c[r + i] = x1[i] - x0[i] - h / 6.0 * (nodes.f[k][i] + 4.0 * fm[i] + nodes.f[k + 1][i]);
            }
            if k + 1 < self.segments {
                c[r + nx] = z[self.width_offset(k)] - z[self.width_offset(k + 1)];
            }
        }
        let n = self.segments;
        let yn = &z[self.state_offset(n)..self.state_offset(n) + self.ny()];
        let t0 = self.terminal_row();
        for (r, row) in self.terminal.iter().enumerate() {
            c[t0 + r] = self.boundary_value(row, yn, &nodes.f[n]);
        }
    }

    fn jacobian(&self, z: &[f64], out: &mut Vec<Triplet>) {
        let (nx, ny) = (self.nx, self.ny());
        let nodes = self.eval_nodes(z, true);
        let boundary = |rows: &[BoundaryRow], r0: usize, k: usize, out: &mut Vec<Triplet>| {
            let o = self.state_offset(k);
            for (r, row) in rows.iter().enumerate() {
                match row {
                    BoundaryRow::Linear { terms, .. } => {
                        for &(i, c) in terms {
                            out.push((r0 + r, o + i, c));
                        }
                    }
                    BoundaryRow::Derivative(i) => {
                        for j in 0..ny {
                            out.push((r0 + r, o + j, nodes.a[k][i * ny + j]));
                        }
                    }
                }
            }
        };
        boundary(&self.initial, 0, 0, out);

        let mut fm = vec![0.0; nx];
        let mut am = vec![0.0; nx * ny];
        let mut blk0 = vec![0.0; nx * ny];
        let mut blk1 = vec![0.0; nx * ny];
        for k in 0..self.segments {
            let h = self.width(z, k);
            let (xm, um) = self.midpoint(z, k, &nodes);
            self.plant.jacobian(&xm, &um, &mut fm, &mut am);
            let (a0, a1) = (&nodes.a[k], &nodes.a[k + 1]);
            // ∂D/∂y_k = −E_x − h/6 A_k − h/3 A_m − h²/12 A_m,x A_k (and mirrored for y_{k+1}).
            for i in 0..nx {
                for j in 0..ny {
                    let mut p0 = 0.0;
                    let mut p1 = 0.0;
                    for l in 0..nx {
                        let aml = am[i * ny + l];
                        if aml != 0.0 {
                            p0 += aml * a0[l * ny + j];
                            p1 += aml * a1[l * ny + j];
                        }
                    }
                    let e = if i == j { 1.0 } else { 0.0 };
                    blk0[i * ny + j] = -e - h / 6.0 * a0[i * ny + j] - h / 3.0 * am[i * ny + j] - h * h / 12.0 * p0;
                    blk1[i * ny + j] = e - h / 6.0 * a1[i * ny + j] - h / 3.0 * am[i * ny + j] + h * h / 12.0 * p1;
                }
            }
            let r = self.defect_row(k);
            let (o0, o1) = (self.state_offset(k), self.state_offset(k + 1));
            for i in 0..nx {
                for j in 0..ny {
                    let (b0, b1) = (blk0[i * ny + j], blk1[i * ny + j]);
                    if b0 != 0.0 {
                        out.push((r + i, o0 + j, b0));
                    }
                    if b1 != 0.0 {
                        out.push((r + i, o1 + j, b1));
                    }
                }
                let df: f64 = (0..nx).map(|l| am[i * ny + l] * (nodes.f[k][l] - nodes.f[k + 1][l])).sum();
                let dh = -(nodes.f[k][i] + 4.0 * fm[i] + nodes.f[k + 1][i]) / 6.0 - h / 12.0 * df;
                out.push((r + i, self.width_offset(k), self.h_ref * dh));
            }
            if k + 1 < self.segments {
                out.push((r + nx, self.width_offset(k), 1.0));
                out.push((r + nx, self.width_offset(k + 1), -1.0));
            }
        }
        boundary(&self.terminal, self.terminal_row(), self.segments, out);
    }

    fn hessian(&self, z: &[f64], sigma: f64, lambda: &[f64], out: &mut Vec<Triplet>) {
        let (nx, nu, ny) = (self.nx, self.nu, self.ny());
        let nodes = self.eval_nodes(z, true);
        let mut node_w = vec![vec![0.0; nx]; self.segments + 1];
        let t0 = self.terminal_row();
        for (r, row) in self.terminal.iter().enumerate() {
            if let BoundaryRow::Derivative(i) = row {
                node_w[self.segments][*i] += lambda[t0 + r];
            }
        }

        let nl = self.nl.clone();
        let nnl = nl.len();
        let sd = 2 * ny + 1;
        let mut fm = vec![0.0; nx];
        let mut am = vec![0.0; nx * ny];
        let mut hm = vec![0.0; ny * ny];
        let mut blk = vec![0.0; sd * sd];
        let mut gt = vec![0.0; nnl * sd];
        let mut hg = vec![0.0; nnl * sd];
        for k in 0..self.segments {
            let h = self.width(z, k);
            let hr = self.h_ref;
            let lam = &lambda[self.defect_row(k)..self.defect_row(k) + nx];
            let (xm, um) = self.midpoint(z, k, &nodes);
            self.plant.jacobian(&xm, &um, &mut fm, &mut am);
            let (a0, a1) = (&nodes.a[k], &nodes.a[k + 1]);
            let mu: Vec<f64> = (0..ny).map(|j| (0..nx).map(|i| am[i * ny + j] * lam[i]).sum()).collect();
            let mux = &mu[..nx];
            for i in 0..nx {
                node_w[k][i] -= h / 6.0 * (lam[i] + 0.5 * h * mux[i]);
                node_w[k + 1][i] -= h / 6.0 * (lam[i] - 0.5 * h * mux[i]);
            }

            blk.iter_mut().for_each(|v| *v = 0.0);
            // −(2h/3) G̃ᵀ H_m(λ) G̃ over the nonlinear rows of x_m.
            hm.iter_mut().for_each(|v| *v = 0.0);
            self.plant.add_weighted_hessian(&xm, &um, lam, 1.0, &mut hm);
            for (r, i) in nl.clone().enumerate() {
                let row = &mut gt[r * sd..(r + 1) * sd];
                for j in 0..ny {
                    let e = if i == j { 0.5 } else { 0.0 };
                    row[j] = e + h / 8.0 * a0[i * ny + j];
                    row[ny + j] = e - h / 8.0 * a1[i * ny + j];
                }
                row[2 * ny] = hr * (nodes.f[k][i] - nodes.f[k + 1][i]) / 8.0;
            }
            for r in 0..nnl {
                for c in 0..sd {
                    hg[r * sd + c] = (0..nnl).map(|l| hm[(nl.start + r) * ny + nl.start + l] * gt[l * sd + c]).sum();
                }
            }
            for a in 0..sd {
                for b in 0..sd {
                    let v: f64 = (0..nnl).map(|l| gt[l * sd + a] * hg[l * sd + b]).sum();
                    blk[a * sd + b] -= 2.0 * h / 3.0 * v;
                }
            }
            // Cross terms with the segment width.
            let tcol = 2 * ny;
            for j in 0..ny {
                let at0: f64 = (0..nx).map(|i| a0[i * ny + j] * lam[i]).sum();
                let at1: f64 = (0..nx).map(|i| a1[i * ny + j] * lam[i]).sum();
                let am0: f64 = (0..nx).map(|i| a0[i * ny + j] * mux[i]).sum();
                let am1: f64 = (0..nx).map(|i| a1[i * ny + j] * mux[i]).sum();
                let v0 = hr * (-at0 / 6.0 - mu[j] / 3.0 - h / 6.0 * am0);
                let v1 = hr * (-at1 / 6.0 - mu[j] / 3.0 + h / 6.0 * am1);
                blk[j * sd + tcol] += v0;
                blk[tcol * sd + j] += v0;
                blk[(ny + j) * sd + tcol] += v1;
                blk[tcol * sd + ny + j] += v1;
            }
            let dfm: f64 = (0..nx).map(|i| mux[i] * (nodes.f[k][i] - nodes.f[k + 1][i])).sum();
            blk[tcol * sd + tcol] -= hr * hr * dfm / 6.0;

            // Objective.
            if sigma != 0.0 {
                let (_, u0) = self.node(z, k);
                let (_, u1) = self.node(z, k + 1);
                for i in 0..nu {
                    let (c0, c1) = (nx + i, ny + nx + i);
                    blk[c0 * sd + c0] += sigma * 2.0 * h / 3.0;
                    blk[c1 * sd + c1] += sigma * 2.0 * h / 3.0;
                    blk[c0 * sd + c1] += sigma * h / 3.0;
                    blk[c1 * sd + c0] += sigma * h / 3.0;
                    let g0 = sigma * hr / 6.0 * (4.0 * u0[i] + 2.0 * u1[i]);
                    let g1 = sigma * hr / 6.0 * (2.0 * u0[i] + 4.0 * u1[i]);
                    blk[c0 * sd + tcol] += g0;
                    blk[tcol * sd + c0] += g0;
                    blk[c1 * sd + tcol] += g1;
                    blk[tcol * sd + c1] += g1;
                }
            }

            let map = |a: usize| -> usize {
                if a < ny {
                    self.state_offset(k) + a
                } else if a < 2 * ny {
                    self.state_offset(k + 1) + a - ny
                } else {
                    self.width_offset(k)
                }
            };
            for a in 0..sd {
                for b in 0..sd {
                    let v = blk[a * sd + b];
                    if v != 0.0 {
                        out.push((map(a), map(b), v));
                    }
                }
            }
        }

        for (k, w) in node_w.iter().enumerate() {
            if w.iter().all(|v| *v == 0.0) {
                continue;
            }
            hm.iter_mut().for_each(|v| *v = 0.0);
            let (x, u) = self.node(z, k);
            self.plant.add_weighted_hessian(x, u, w, 1.0, &mut hm);
            let o = self.state_offset(k);
            for a in 0..ny {
                for b in 0..ny {
                    let v = hm[a * ny + b];
                    if v != 0.0 {
                        out.push((o + a, o + b, v));
                    }
                }
            }
        }
    }

    fn kkt_order(&self) -> (Vec<usize>, Vec<usize>) {
        let (nx, ny) = (self.nx, self.ny());
        let mut px = vec![0; self.n_vars()];
        let mut pc = vec![0; self.n_cons()];
        let mut pos = 0;
        for r in 0..self.initial.len() {
            pc[r] = pos;
            pos += 1;
        }
        for k in 0..=self.segments {
            let width = if k < self.segments { ny + 1 } else { ny };
            for j in 0..width {
                px[self.state_offset(k) + j] = pos;
                pos += 1;
            }
            if k < self.segments {
                let rows = if k + 1 < self.segments { nx + 1 } else { nx };
                for r in 0..rows {
                    pc[self.defect_row(k) + r] = pos;
                    pos += 1;
                }
            }
        }
        for r in 0..self.terminal.len() {
            pc[self.terminal_row() + r] = pos;
            pos += 1;
        }
        (px, pc)
    }
}
