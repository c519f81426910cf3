//! Dynamics plug-ins seen by the transcription.

use crate::ad::{Dual, Dual2, Real};
use crate::model::{derivative_generic, idx, ExternalMoment, ModelParams, CONTROL_DIM, STATE_DIM};

/// Continuous dynamics `ẋ = f(x, u)` with exact first and second
/// derivatives, in the solver's (scaled) coordinates.
pub trait Plant: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;

    fn eval(&self, x: &[f64], u: &[f64], f: &mut [f64]);

    /// Writes `f` and the row-major Jacobian `∂f/∂(x, u)` of shape
    /// `nx × (nx + nu)`.
    fn jacobian(&self, x: &[f64], u: &[f64], f: &mut [f64], jac: &mut [f64]);

    /// Adds `scale · ∇²(wᵀf)` with respect to `(x, u)` into the dense
    /// row-major `(nx + nu)²` buffer `out`.
    fn add_weighted_hessian(&self, x: &[f64], u: &[f64], w: &[f64], scale: f64, out: &mut [f64]);
}

/// Quadcopter dynamics with rotor speeds scaled by `1/ω_max`.
#[derive(Clone, Debug)]
pub struct QuadPlant {
    pub params: ModelParams,
    pub m_ext: [f64; 3],
}

const NY: usize = STATE_DIM + CONTROL_DIM;
/// `f` is affine in the position and the controls; the remaining state
/// entries form one contiguous block.
const NL_START: usize = idx::VEL;
const NL: usize = STATE_DIM - NL_START;

impl QuadPlant {
    pub fn new(params: ModelParams, m_ext: ExternalMoment) -> Self {
        Self { params, m_ext: m_ext.as_array() }
    }

    pub fn rotor_scale(&self) -> f64 {
        self.params.omega_max
    }

    fn scaled<S: Real>(&self, x: &[S; STATE_DIM], u: &[S; CONTROL_DIM]) -> [S; STATE_DIM] {
        let s = self.rotor_scale();
        let mut phys = *x;
        for w in &mut phys[idx::ROTORS..] {
            *w = *w * s;
        }
        let mut f = derivative_generic(&phys, u, &self.m_ext, &self.params);
        for d in &mut f[idx::ROTORS..] {
            *d = *d / s;
        }
        f
    }
}

impl Plant for QuadPlant {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn control_dim(&self) -> usize {
        CONTROL_DIM
    }

    fn eval(&self, x: &[f64], u: &[f64], f: &mut [f64]) {
        let xs: [f64; STATE_DIM] = x.try_into().expect("state dim");
        let us: [f64; CONTROL_DIM] = u.try_into().expect("control dim");
        f.copy_from_slice(&self.scaled(&xs, &us));
    }

    fn jacobian(&self, x: &[f64], u: &[f64], f: &mut [f64], jac: &mut [f64]) {
        let xs: [Dual<NY>; STATE_DIM] = std::array::from_fn(|i| Dual::seed(x[i], i));
        let us: [Dual<NY>; CONTROL_DIM] = std::array::from_fn(|i| Dual::seed(u[i], STATE_DIM + i));
        let out = self.scaled(&xs, &us);
        for (i, d) in out.iter().enumerate() {
            f[i] = d.re;
            jac[i * NY..(i + 1) * NY].copy_from_slice(&d.eps);
        }
    }

    fn add_weighted_hessian(&self, x: &[f64], u: &[f64], w: &[f64], scale: f64, out: &mut [f64]) {
        let xs: [Dual2<NL>; STATE_DIM] =
            std::array::from_fn(
                |i| {
                    if i >= NL_START {
                        Dual2::seed(x[i], i - NL_START)
                    } else {
                        Dual2::constant(x[i])
                    }
                },
            );
        let us: [Dual2<NL>; CONTROL_DIM] = std::array::from_fn(|i| Dual2::constant(u[i]));
        let f = self.scaled(&xs, &us);
        let mut acc = [[0.0; NL]; NL];
        for (fi, &wi) in f.iter().zip(w) {
            if wi == 0.0 {
                continue;
            }
            for (row, hrow) in acc.iter_mut().zip(fi.hess.iter()) {
                for (a, h) in row.iter_mut().zip(hrow) {
                    *a += wi * h;
                }
            }
        }
        for (r, row) in acc.iter().enumerate() {
            let base = (NL_START + r) * NY + NL_START;
            for (c, v) in row.iter().enumerate() {
                out[base + c] += scale * v;
            }
        }
    }
}

/// One-axis double integrator `ẍ = u`, state `(x, v)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct DoubleIntegrator;

impl Plant for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64], u: &[f64], f: &mut [f64]) {
        f[0] = x[1];
        f[1] = u[0];
    }

    fn jacobian(&self, x: &[f64], u: &[f64], f: &mut [f64], jac: &mut [f64]) {
        self.eval(x, u, f);
        jac.copy_from_slice(&[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    fn add_weighted_hessian(&self, _x: &[f64], _u: &[f64], _w: &[f64], _scale: f64, _out: &mut [f64]) {}
}
