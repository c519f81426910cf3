//! Feed-forward state-feedback network: ReLU hidden layers, sigmoid output.

mod file;
mod train;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use file::POLICY_VERSION;
pub use train::{train, train_from, EpochRecord, TrainConfig, TrainingLog};

use crate::dataset::{assemble_inputs, Normalization, RecipeKind};
use crate::error::{Error, Result};
use crate::model::{ControlInput, ExternalMoment, VehicleState, CONTROL_DIM};

pub const HIDDEN_WIDTH: usize = 120;
pub const HIDDEN_LAYERS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Activation {
    Relu = 0,
    Sigmoid = 1,
}

impl Activation {
    fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Self::Relu),
            1 => Some(Self::Sigmoid),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }
}

/// Network with all parameters in one flat vector; layer `l` stores its
/// row-major `out × in` weights followed by `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnPolicy {
    pub kind: RecipeKind,
    pub norm: Normalization,
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

fn layer_sizes(d_in: usize) -> Vec<usize> {
    let mut s = vec![d_in];
    s.extend([HIDDEN_WIDTH; HIDDEN_LAYERS]);
    s.push(CONTROL_DIM);
    s
}

fn default_activations(layers: usize) -> Vec<Activation> {
    (0..layers).map(|l| if l + 1 == layers { Activation::Sigmoid } else { Activation::Relu }).collect()
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl GcnPolicy {
    /// All-zero parameters; every output is 0.5.
    pub fn zeros(kind: RecipeKind, norm: Normalization) -> Self {
        let sizes = layer_sizes(kind.input_dim());
        Self {
            kind,
            norm,
            activations: default_activations(sizes.len() - 1),
            params: vec![0.0; param_count(&sizes)],
            sizes,
        }
    }

    /// He-uniform weights (bound √(6 / fan_in)), zero biases.
    pub fn random(kind: RecipeKind, norm: Normalization, seed: u64) -> Self {
        let mut p = Self::zeros(kind, norm);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..p.n_layers() {
            let bound = (6.0 / p.sizes[l] as f64).sqrt();
            let (w, _) = p.layer_mut(l);
            w.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        }
        p
    }

    pub(crate) fn from_parts(
        kind: RecipeKind,
        norm: Normalization,
        sizes: Vec<usize>,
        activations: Vec<Activation>,
        params: Vec<f64>,
    ) -> Result<Self> {
        if sizes.len() < 2 || activations.len() + 1 != sizes.len() || params.len() != param_count(&sizes) {
            return Err(Error::CorruptFile("inconsistent layer layout".into()));
        }
        if sizes[0] != kind.input_dim() {
            return Err(Error::DimensionMismatch { expected: kind.input_dim(), got: sizes[0] });
        }
        if *sizes.last().unwrap() != CONTROL_DIM || activations.last() != Some(&Activation::Sigmoid) {
            return Err(Error::CorruptFile("output layer must be 4 sigmoid units".into()));
        }
        Ok(Self { kind, norm, sizes, activations, params })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.sizes[..=l])
    }

    /// Weights (row-major `out × in`) and biases of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off = self.layer_offset(l);
        let nw = self.sizes[l] * self.sizes[l + 1];
        let (w, b) = self.params[off..off + nw + self.sizes[l + 1]].split_at(nw);
        (w, b)
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let off = self.layer_offset(l);
        let nw = self.sizes[l] * self.sizes[l + 1];
        let end = off + nw + self.sizes[l + 1];
        self.params[off..end].split_at_mut(nw)
    }

    /// Pre-activations of layer `l` given its input.
    pub fn preactivation(&self, l: usize, input: &[f64]) -> Vec<f64> {
        let (w, b) = self.layer(l);
        let n_in = self.sizes[l];
        b.iter()
            .enumerate()
            .map(|(o, bo)| bo + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<[f64; CONTROL_DIM]> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: input.len() });
        }
        let mut h = input.to_vec();
        for l in 0..self.n_layers() {
            let act = self.activations[l];
            h = self.preactivation(l, &h).into_iter().map(|z| act.apply(z)).collect();
        }
        Ok([h[0], h[1], h[2], h[3]])
    }

    /// Normalizes the state and evaluates the network.
    pub fn control(
        &self,
        state: &VehicleState,
        m_ext: Option<&ExternalMoment>,
        waypoint: &Vector3<f64>,
    ) -> Result<ControlInput> {
        let x = assemble_inputs(state, m_ext, Some(waypoint), self.kind, &self.norm)?;
        Ok(ControlInput(self.forward(&x)?))
    }

    /// Mean squared error over all outputs of `n` row-major pairs.
    pub fn mse(&self, inputs: &[f64], targets: &[f64]) -> f64 {
        let mut ws = train::Workspace::new(&self.sizes, 0);
        train::batch_loss(self, &mut ws, inputs, targets, None)
    }

    /// Loss and flat parameter gradient on a batch.
    pub fn loss_gradient(&self, inputs: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
        let mut ws = train::Workspace::new(&self.sizes, 0);
        let mut g = vec![0.0; self.params.len()];
        let loss = train::batch_loss(self, &mut ws, inputs, targets, Some(&mut g));
        (loss, g)
    }
}
