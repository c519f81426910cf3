use std::f64::consts::PI;

use gcnet_lab::filters::ButterworthLp2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Steady-state amplitude of the causal filter driven by a unit sine,
/// measured by simulation rather than from the transfer function.
fn simulated_gain(f: &ButterworthLp2, freq: f64) -> f64 {
    let mut f = f.clone();
    let fs = f.sample_rate();
    let settle = (20.0 * fs / freq.min(f.cutoff())) as usize;
    let periods = (fs / freq * 50.0) as usize;
    let mut peak: f64 = 0.0;
    for n in 0..settle + periods {
        let y = f.step((2.0 * PI * freq * n as f64 / fs).sin());
        if n >= settle {
            peak = peak.max(y.abs());
        }
    }
    peak
}

fn db(x: f64) -> f64 {
    20.0 * x.log10()
}

#[test]
fn cutoff_is_minus_three_db() {
    for (fc, fs) in [(8.0, 500.0), (16.0, 500.0), (8.0, 1000.0)] {
        let f = ButterworthLp2::design(fc, fs).unwrap();
        let g = simulated_gain(&f, fc);
        assert!((db(g) - db(1.0 / 2f64.sqrt())).abs() < 0.1, "{fc} Hz @ {fs}: {} dB", db(g));
        assert!((g - f.coefficients().magnitude(fc, fs)).abs() < 1e-3);
        let g4 = simulated_gain(&f, 4.0 * fc);
        assert!(db(g4) <= -22.0, "{} dB at 4×fc", db(g4));
    }
}

#[test]
fn step_response_overshoot_below_five_percent() {
    let mut f = ButterworthLp2::design(8.0, 500.0).unwrap();
    let peak = (0..2000).map(|_| f.step(1.0)).fold(0.0, f64::max);
    assert!(peak > 1.0 && peak < 1.05, "{peak}");
}

#[test]
fn impulse_response_decays() {
    let mut f = ButterworthLp2::design(8.0, 500.0).unwrap();
    let h: Vec<f64> = (0..4000).map(|n| f.step(if n == 0 { 1.0 } else { 0.0 })).collect();
    let energy: f64 = h.iter().map(|v| v * v).sum();
    assert!(energy.is_finite() && energy > 0.0);
    let tail: f64 = h[2000..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(tail < 1e-12, "{tail}");
    assert!(f.dc_group_delay_samples() > 0.0);
}

#[test]
fn white_noise_stays_bounded() {
    let mut f = ButterworthLp2::design(8.0, 500.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut peak: f64 = 0.0;
    for _ in 0..1_000_000 {
        peak = peak.max(f.step(n.sample(&mut rng)).abs());
    }
    assert!(peak < 3.0, "{peak}");
}

#[test]
fn zero_phase_sine_passes_with_no_lag() {
    let fs = 500.0;
    let f = ButterworthLp2::design(16.0, fs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let n = 5000;
    let sine: Vec<f64> = (0..n).map(|i| (2.0 * PI * 1.5 * i as f64 / fs).sin()).collect();
    let x: Vec<f64> = sine.iter().map(|s| s + noise.sample(&mut rng)).collect();
    let y = f.filtfilt(&x).unwrap();
    let interior = 500..n - 500;
    let xcorr = |lag: i64| -> f64 { interior.clone().map(|i| y[i] * sine[(i as i64 + lag) as usize]).sum() };
    let best = (-40..=40).max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b))).unwrap();
    assert_eq!(best, 0);

    // Clean low-frequency sine keeps its amplitude.
    let y = f.filtfilt(&sine).unwrap();
    let amp = y[1000..4000].iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!((amp - 1.0).abs() < 0.01, "{amp}");
    let err = y[1000..4000].iter().zip(&sine[1000..4000]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 0.01);
}

#[test]
fn causal_filter_lags_the_sine() {
    let fs = 500.0;
    let mut f = ButterworthLp2::design(8.0, fs).unwrap();
    let n = 5000;
    let sine: Vec<f64> = (0..n).map(|i| (2.0 * PI * 1.5 * i as f64 / fs).sin()).collect();
    let y: Vec<f64> = sine.iter().map(|v| f.step(*v)).collect();
    let xcorr = |lag: usize| -> f64 { (1000..n - 100).map(|i| y[i] * sine[i - lag]).sum() };
    let best = (0..60).max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b))).unwrap();
    assert!(best > 0);
}

#[test]
fn constant_and_reversed_series() {
    let f = ButterworthLp2::design(16.0, 500.0).unwrap();
    let c = vec![-1.25; 300];
    assert!(f.filtfilt(&c).unwrap().iter().all(|v| (v + 1.25).abs() < 1e-12));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..2000).map(|_| n.sample(&mut rng)).collect();
    let mut xr = x.clone();
    xr.reverse();
    let mut y = f.filtfilt(&x).unwrap();
    y.reverse();
    let yr = f.filtfilt(&xr).unwrap();
    assert_eq!(y, yr);
}

#[test]
fn zero_phase_attenuation_is_squared_magnitude() {
    let fs = 500.0;
    let f = ButterworthLp2::design(16.0, fs).unwrap();
    let n = 1 << 16;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dist = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    let y = f.filtfilt(&x).unwrap();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let spectrum = |s: &[f64]| {
        let mut buf: Vec<Complex<f64>> = s.iter().map(|v| Complex::new(*v, 0.0)).collect();
        fft.process(&mut buf);
        buf
    };
    let (sx, sy) = (spectrum(&x), spectrum(&y));
    let band = 256;
    let mut checked = 0;
    for b in (band..n / 2 - band).step_by(band) {
        let mut px = 0.0;
        let mut py = 0.0;
        let mut expect = 0.0;
        for k in b..b + band {
            let freq = k as f64 * fs / n as f64;
            let h2 = f.coefficients().magnitude(freq, fs).powi(2);
            let pxk = sx[k].norm_sqr();
            px += pxk;
            py += sy[k].norm_sqr();
            expect += pxk * h2 * h2;
        }
        let (ratio, want) = ((py / px).sqrt(), (expect / px).sqrt());
        if want > 0.05 {
            checked += 1;
            assert!((ratio - want).abs() < 0.05 * want, "band at {b}: {ratio} vs {want}");
        }
    }
    assert!(checked > 10);
}

proptest! {
    #[test]
    fn any_design_has_unit_dc_gain(fc in 0.1..240.0f64) {
        let f = ButterworthLp2::design(fc, 500.0).unwrap();
        let c = f.coefficients();
        prop_assert!(((c.b0 + c.b1 + c.b2) / (1.0 + c.a1 + c.a2) - 1.0).abs() < 1e-9);
        prop_assert!(c.poles().iter().all(|(re, im)| re.hypot(*im) < 1.0));
    }
}
