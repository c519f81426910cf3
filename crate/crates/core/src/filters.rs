//! Second-order Butterworth low-pass filtering.
//!
//! [`ButterworthLp2`] is a bilinear-transform biquad (with frequency
//! prewarping) used causally by the onboard moment estimator and
//! forward-backward by the offline analysis.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum series length for zero-phase filtering.
pub const MIN_NONCAUSAL_LEN: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Complex frequency response at `freq` for sample rate `fs`, as (re, im).
    pub fn response(&self, freq: f64, fs: f64) -> (f64, f64) {
        let w = 2.0 * PI * freq / fs;
        let (s1, c1) = w.sin_cos();
        let (s2, c2) = (2.0 * w).sin_cos();
        let (nr, ni) = (self.b0 + self.b1 * c1 + self.b2 * c2, -(self.b1 * s1 + self.b2 * s2));
        let (dr, di) = (1.0 + self.a1 * c1 + self.a2 * c2, -(self.a1 * s1 + self.a2 * s2));
        let den = dr * dr + di * di;
        ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    }

    pub fn magnitude(&self, freq: f64, fs: f64) -> f64 {
        let (re, im) = self.response(freq, fs);
        re.hypot(im)
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    /// Poles of `z² + a1 z + a2` as (re, im) pairs.
    pub fn poles(&self) -> [(f64, f64); 2] {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc >= 0.0 {
            let s = disc.sqrt();
            [(0.5 * (-self.a1 + s), 0.0), (0.5 * (-self.a1 - s), 0.0)]
        } else {
            let s = (-disc).sqrt();
            [(-0.5 * self.a1, 0.5 * s), (-0.5 * self.a1, -0.5 * s)]
        }
    }
}

/// Second-order Butterworth low-pass with streaming state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ButterworthLp2 {
    cutoff: f64,
    sample_rate: f64,
    coeffs: Biquad,
    z1: f64,
    z2: f64,
}

impl ButterworthLp2 {
    /// Designs the filter for `cutoff` Hz at `sample_rate` Hz.
    pub fn design(cutoff: f64, sample_rate: f64) -> Result<Self> {
        let nyquist = 0.5 * sample_rate;
        if !(cutoff > 0.0 && cutoff < nyquist) {
            return Err(Error::NyquistViolation { cutoff, nyquist });
        }
        let k = (PI * cutoff / sample_rate).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + SQRT_2 * k + k2);
        let b0 = k2 * norm;
        let coeffs =
            Biquad { b0, b1: 2.0 * b0, b2: b0, a1: 2.0 * (k2 - 1.0) * norm, a2: (1.0 - SQRT_2 * k + k2) * norm };
        Ok(Self { cutoff, sample_rate, coeffs, z1: 0.0, z2: 0.0 })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn coefficients(&self) -> &Biquad {
        &self.coeffs
    }

    pub fn reset(&mut self) {
        self.z1 = 0.0;
        self.z2 = 0.0;
    }

    /// Puts the filter in the steady state for a constant input `value`.
    pub fn reset_to(&mut self, value: f64) {
        let c = &self.coeffs;
        self.z2 = (c.b2 - c.a2) * value;
        self.z1 = (c.b1 - c.a1) * value + self.z2;
    }

    /// Filters one sample (direct form II transposed).
    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let c = &self.coeffs;
        let y = c.b0 * x + self.z1;
        self.z1 = c.b1 * x - c.a1 * y + self.z2;
        self.z2 = c.b2 * x - c.a2 * y;
        y
    }

    /// Group delay at DC in samples, `-dφ/dω` at ω = 0.
    pub fn dc_group_delay_samples(&self) -> f64 {
        let c = &self.coeffs;
        let num = (c.b1 + 2.0 * c.b2) / (c.b0 + c.b1 + c.b2);
        let den = (c.a1 + 2.0 * c.a2) / (1.0 + c.a1 + c.a2);
        num - den
    }

    /// Length of the reflected padding used by [`Self::filtfilt`]: three
    /// time constants of the analog prototype.
    pub fn pad_len(&self) -> usize {
        let time_constant = SQRT_2 / (2.0 * PI * self.cutoff);
        (3.0 * time_constant * self.sample_rate).ceil() as usize
    }

    /// Zero-phase forward-backward filtering of a whole series.
    ///
    /// The series is extended on both ends by odd reflection and each pass
    /// starts from the steady state of its first sample, so constants and
    /// ramps pass through unchanged. The forward-backward and
    /// backward-forward results are averaged, which makes the operation
    /// commute exactly with time reversal.
    pub fn filtfilt(&self, series: &[f64]) -> Result<Vec<f64>> {
        let n = series.len();
        if n < MIN_NONCAUSAL_LEN {
            return Err(Error::SeriesTooShort { len: n, min: MIN_NONCAUSAL_LEN });
        }
        let pad = self.pad_len().clamp(1, n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * series[0] - series[i]));
        ext.extend_from_slice(series);
        ext.extend((1..=pad).map(|i| 2.0 * series[n - 1] - series[n - 1 - i]));

        let fb = self.forward_backward(ext.clone());
        ext.reverse();
        let mut bf = self.forward_backward(ext);
        bf.reverse();
        Ok((pad..pad + n).map(|i| 0.5 * (fb[i] + bf[i])).collect())
    }

    fn forward_backward(&self, mut ext: Vec<f64>) -> Vec<f64> {
        let mut f = self.clone();
        f.reset_to(ext[0]);
        for v in ext.iter_mut() {
            *v = f.step(*v);
        }
        f.reset_to(ext[ext.len() - 1]);
        for v in ext.iter_mut().rev() {
            *v = f.step(*v);
        }
        ext
    }
}

/// Streaming first difference divided by the sample period.
#[derive(Clone, Debug, Default)]
pub struct Differentiator {
    prev: Option<f64>,
}

impl Differentiator {
    pub fn step(&mut self, x: f64, dt: f64) -> f64 {
        let d = self.prev.map_or(0.0, |p| (x - p) / dt);
        self.prev = Some(x);
        d
    }
}

/// Central-difference derivative of a uniformly sampled series (one-sided
/// at the ends).
pub fn derivative(series: &[f64], dt: f64) -> Vec<f64> {
    let n = series.len();
    (0..n)
        .map(|i| match i {
            _ if n < 2 => 0.0,
            0 => (series[1] - series[0]) / dt,
            _ if i == n - 1 => (series[n - 1] - series[n - 2]) / dt,
            _ => (series[i + 1] - series[i - 1]) / (2.0 * dt),
        })
        .collect()
}
