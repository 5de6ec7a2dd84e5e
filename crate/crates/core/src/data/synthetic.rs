//! Synthetic datasets for tests, benches and offline demos.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};

use super::{Dataset, Split, TimeSeriesSample};
use crate::rng::Rng;

/// Cylinder-Bell-Funnel: three shape classes (plateau, rising ramp, falling
/// ramp) with random onset, duration and amplitude, plus unit Gaussian noise.
/// Classes are balanced and interleaved. The standard series length is 128.
pub fn cylinder_bell_funnel(n: usize, len: usize, split: Split, rng: &mut Rng) -> Dataset {
    let noise = Normal::new(0.0, 1.0).expect("valid");
    let scale = len as f64 / 128.0;
    let onset = Uniform::new(16.0 * scale, 32.0 * scale).expect("valid");
    let width = Uniform::new(32.0 * scale, 96.0 * scale).expect("valid");
    let samples = (0..n)
        .map(|i| {
            let class = i % 3;
            let a = onset.sample(rng);
            let b = (a + width.sample(rng)).min(len as f64 - 1.0);
            let amp = 6.0 + noise.sample(rng);
            let v: Vec<f64> = (0..len)
                .map(|t| {
                    let t = t as f64;
                    let inside = if t >= a && t <= b { 1.0 } else { 0.0 };
                    let shape = match class {
                        0 => 1.0,
                        1 => (t - a) / (b - a),
                        _ => (b - t) / (b - a),
                    };
                    amp * inside * shape + noise.sample(rng)
                })
                .collect();
            TimeSeriesSample::new(
                Array2::from_shape_vec((1, len), v).expect("shape"),
                Some(class),
                "CBF",
            )
            .expect("finite")
        })
        .collect();
    Dataset::new(
        "CBF",
        split,
        samples,
        vec!["1".into(), "2".into(), "3".into()],
    )
    .expect("valid dataset")
}

/// Two classes distinguished by where a Gaussian bump sits (first or last
/// quarter of the series), with small noise. Linearly separable after
/// encoding; used as a sanity target for fine-tuning.
pub fn gaussian_bumps(n: usize, len: usize, vars: usize, rng: &mut Rng) -> Dataset {
    let noise = Normal::new(0.0, 0.1).expect("valid");
    let width = len as f64 / 10.0;
    let samples = (0..n)
        .map(|i| {
            let class = i % 2;
            let center = if class == 0 { 0.25 } else { 0.75 } * (len as f64 - 1.0);
            let jitter: f64 = rng.random_range(-width / 2.0..width / 2.0);
            let mut values = Array2::zeros((vars, len));
            for m in 0..vars {
                for t in 0..len {
                    let d = (t as f64 - center - jitter) / width;
                    values[[m, t]] =
                        (-0.5 * d * d).exp() * (1.0 + 0.2 * m as f64) + noise.sample(rng);
                }
            }
            TimeSeriesSample::new(values, Some(class), "bumps").expect("finite")
        })
        .collect();
    Dataset::new("bumps", Split::Train, samples, vec!["0".into(), "1".into()])
        .expect("valid dataset")
}

/// Unlabeled random-walk series with a few sinusoidal components, for
/// pre-training smoke tests.
pub fn random_walks(n: usize, len: usize, vars: usize, name: &str, rng: &mut Rng) -> Dataset {
    let step = Normal::new(0.0, 0.3).expect("valid");
    let samples = (0..n)
        .map(|_| {
            let freq: f64 = rng.random_range(1.0..4.0);
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let mut values = Array2::zeros((vars, len));
            for m in 0..vars {
                let mut level = 0.0;
                for t in 0..len {
                    level += step.sample(rng);
                    let x = t as f64 / len as f64;
                    values[[m, t]] =
                        level + (std::f64::consts::TAU * freq * x + phase + m as f64).sin();
                }
            }
            TimeSeriesSample::new(values, None, name).expect("finite")
        })
        .collect();
    Dataset::new(name, Split::Train, samples, Vec::new()).expect("valid dataset")
}
