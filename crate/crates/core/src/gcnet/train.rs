//! Mini-batch training with adaptive moments and plateau step decay.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, GcnPolicy};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::CONTROL_DIM;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning-rate factor applied on a test-MSE plateau.
    pub decay: f64,
    /// Epochs without improvement that count as a plateau.
    pub patience: usize,
    pub min_learning_rate: f64,
    pub epochs: usize,
    /// Stop once the test MSE falls below this value.
    pub target_mse: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            learning_rate: 1e-3,
            decay: 0.5,
            patience: 10,
            min_learning_rate: 1e-6,
            epochs: 300,
            target_mse: Some(1e-3),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidSpec("batch size must be ≥ 1, lr > 0, decay in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub reached_target: bool,
}

impl TrainingLog {
    pub fn final_test_mse(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.test_mse)
    }
}

pub(crate) struct Workspace {
    /// Post-activation outputs per layer (index 0 unused; the input is
    /// borrowed).
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(sizes: &[usize], batch: usize) -> Self {
        Self { acts: sizes.iter().map(|s| vec![0.0; s * batch]).collect(), delta: Vec::new(), delta_prev: Vec::new() }
    }

    fn fit(&mut self, sizes: &[usize], batch: usize) {
        for (a, s) in self.acts.iter_mut().zip(sizes) {
            a.resize(s * batch, 0.0);
        }
    }
}

/// `C = A·B + beta·C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    debug_assert!(a.len() >= (m - 1) * rsa + (k - 1) * csa + 1);
    debug_assert!(b.len() >= (k - 1) * rsb + (n - 1) * csb + 1);
    debug_assert!(c.len() >= (m - 1) * rsc + (n - 1) * csc + 1);
    // SAFETY: the asserted lengths cover every strided access.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// MSE over the batch; accumulates its gradient into `grad` when given.
pub(crate) fn batch_loss(
    p: &GcnPolicy,
    ws: &mut Workspace,
    inputs: &[f64],
    targets: &[f64],
    grad: Option<&mut [f64]>,
) -> f64 {
    let bsz = targets.len() / CONTROL_DIM;
    let sizes = &p.sizes;
    ws.fit(sizes, bsz);
    let nl = p.n_layers();
    for l in 0..nl {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let (w, b) = p.layer(l);
        let (head, tail) = ws.acts.split_at_mut(l + 1);
        let x: &[f64] = if l == 0 { inputs } else { &head[l] };
        let z = &mut tail[0];
        for r in 0..bsz {
            z[r * n_out..(r + 1) * n_out].copy_from_slice(b);
        }
        gemm(bsz, n_in, n_out, x, (n_in, 1), w, (1, n_in), 1.0, z, (n_out, 1));
        let act = p.activations[l];
        z.iter_mut().for_each(|v| *v = act.apply(*v));
    }
    let out = &ws.acts[nl];
    let scale = 1.0 / (bsz * CONTROL_DIM) as f64;
    let loss = out.iter().zip(targets).map(|(y, t)| (y - t) * (y - t)).sum::<f64>() * scale;
    let Some(grad) = grad else { return loss };

    // Output delta through the sigmoid.
    ws.delta.clear();
    ws.delta.extend(out.iter().zip(targets).map(|(y, t)| 2.0 * scale * (y - t) * y * (1.0 - y)));
    for l in (0..nl).rev() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let off = p.layer_offset(l);
        let nw = n_in * n_out;
        let x: &[f64] = if l == 0 { inputs } else { &ws.acts[l] };
        let (gw, gb) = grad[off..off + nw + n_out].split_at_mut(nw);
        gemm(n_out, bsz, n_in, &ws.delta, (1, n_out), x, (n_in, 1), 1.0, gw, (n_in, 1));
        for r in 0..bsz {
            for (g, d) in gb.iter_mut().zip(&ws.delta[r * n_out..(r + 1) * n_out]) {
                *g += d;
            }
        }
        if l == 0 {
            break;
        }
        let (w, _) = p.layer(l);
        ws.delta_prev.resize(bsz * n_in, 0.0);
        gemm(bsz, n_out, n_in, &ws.delta, (n_out, 1), w, (n_in, 1), 0.0, &mut ws.delta_prev, (n_in, 1));
        debug_assert_eq!(p.activations[l - 1], Activation::Relu);
        for (d, h) in ws.delta_prev.iter_mut().zip(&ws.acts[l]) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }
        std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
    }
    loss
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// MSE over a pair set, evaluated in chunks.
fn evaluate(p: &GcnPolicy, ws: &mut Workspace, inputs: &[f64], targets: &[f64]) -> f64 {
    const CHUNK: usize = 2048;
    let d = p.input_dim();
    let n = targets.len() / CONTROL_DIM;
    if n == 0 {
        return f64::NAN;
    }
    let mut total = 0.0;
    for s in (0..n).step_by(CHUNK) {
        let e = (s + CHUNK).min(n);
        let l = batch_loss(p, ws, &inputs[s * d..e * d], &targets[s * CONTROL_DIM..e * CONTROL_DIM], None);
        total += l * (e - s) as f64;
    }
    total / n as f64
}

/// Trains a freshly initialized network on the dataset's training split.
/// Output depends only on the dataset and the config.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(GcnPolicy, TrainingLog)> {
    let policy = GcnPolicy::random(dataset.kind, dataset.norm, config.seed);
    train_from(policy, dataset, config)
}

/// Continues training from an existing policy.
pub fn train_from(mut policy: GcnPolicy, dataset: &Dataset, config: &TrainConfig) -> Result<(GcnPolicy, TrainingLog)> {
    config.validate()?;
    let d = policy.input_dim();
    if d != dataset.input_dim() {
        return Err(Error::DimensionMismatch { expected: d, got: dataset.input_dim() });
    }
    let n = dataset.train.len();
    if n == 0 {
        return Err(Error::InvalidSpec("empty training split".into()));
    }
    let sets = [&dataset.train, &dataset.test];
    if sets.iter().any(|s| s.inputs.iter().chain(&s.targets).any(|v| !v.is_finite())) {
        return Err(Error::InvalidSpec("dataset contains non-finite values".into()));
    }
    let bs = config.batch_size.min(n);
    let mut ws = Workspace::new(&policy.sizes, bs);
    let mut adam = Adam { m: vec![0.0; policy.params.len()], v: vec![0.0; policy.params.len()], t: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; policy.params.len()];
    let (mut bx, mut by) = (Vec::with_capacity(bs * d), Vec::with_capacity(bs * CONTROL_DIM));
    let mut lr = config.learning_rate;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut log = TrainingLog::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(bs) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.extend_from_slice(dataset.train.input(i, d));
                by.extend_from_slice(dataset.train.target(i));
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = batch_loss(&policy, &mut ws, &bx, &by, Some(&mut grad));
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            sum += loss * chunk.len() as f64;
            adam.step(&mut policy.params, &grad, lr);
        }
        let train_mse = sum / n as f64;
        let test_mse = evaluate(&policy, &mut ws, &dataset.test.inputs, &dataset.test.targets);
        log.epochs.push(EpochRecord { epoch, train_mse, test_mse, learning_rate: lr });
        // Plateau tracking falls back to the training loss without a test split.
        let monitor = if test_mse.is_nan() { train_mse } else { test_mse };
        if config.target_mse.is_some_and(|t| monitor < t) {
            log.reached_target = true;
            break;
        }
        if monitor < best * (1.0 - 1e-3) {
            best = monitor;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                lr = (lr * config.decay).max(config.min_learning_rate);
                stale = 0;
            }
        }
    }
    Ok((policy, log))
}
