//! Augmentation bank and paired view sets.
//!
//! Each operator maps one variable (a length-`T` vector) to a new length-`T`
//! vector; multivariate samples are augmented variable by variable with
//! independently drawn parameters. The pure `*_with` helpers take explicit
//! parameters and are what [`augment`] calls after drawing them.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::data::TimeSeriesSample;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum AugmentationKind {
    /// Additive Gaussian noise with standard deviation `sigma`.
    Jitter { sigma: f64 },
    /// Multiplication by one factor drawn from `Normal(1, sigma)`.
    Scaling { sigma: f64 },
    /// Smooth random time distortion: a natural cubic spline through
    /// `knots + 2` evenly spaced points with values `Normal(1, sigma)` gives
    /// the local speed; its cumulative sum is the warped clock.
    TimeWarp { sigma: f64, knots: usize },
    /// Random crop of `ratio * T` steps, ratio uniform in `[min_ratio, max_ratio)`,
    /// linearly re-interpolated back to `T`.
    Slicing { min_ratio: f64, max_ratio: f64 },
    /// One window of `window_ratio * T` steps is sped up or slowed down by a
    /// factor drawn from `scales`, then the whole series is re-interpolated to `T`.
    WindowWarp { window_ratio: f64, scales: Vec<f64> },
}

impl AugmentationKind {
    pub fn jitter() -> Self {
        AugmentationKind::Jitter { sigma: 0.03 }
    }

    pub fn scaling() -> Self {
        AugmentationKind::Scaling { sigma: 0.1 }
    }

    pub fn time_warp() -> Self {
        AugmentationKind::TimeWarp {
            sigma: 0.2,
            knots: 4,
        }
    }

    pub fn slicing() -> Self {
        AugmentationKind::Slicing {
            min_ratio: 0.8,
            max_ratio: 1.0,
        }
    }

    pub fn window_warp() -> Self {
        AugmentationKind::WindowWarp {
            window_ratio: 0.1,
            scales: vec![0.5, 2.0],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AugmentationKind::Jitter { .. } => "jitter",
            AugmentationKind::Scaling { .. } => "scaling",
            AugmentationKind::TimeWarp { .. } => "time_warp",
            AugmentationKind::Slicing { .. } => "slicing",
            AugmentationKind::WindowWarp { .. } => "window_warp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{}: {msg}", self.name())));
        match self {
            AugmentationKind::Jitter { sigma } | AugmentationKind::Scaling { sigma } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return bad(format!("sigma must be finite and >= 0, got {sigma}"));
                }
            }
            AugmentationKind::TimeWarp { sigma, knots } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return bad(format!("sigma must be finite and >= 0, got {sigma}"));
                }
                if *knots == 0 {
                    return bad("knots must be at least 1".into());
                }
            }
            AugmentationKind::Slicing {
                min_ratio,
                max_ratio,
            } => {
                if !(*min_ratio > 0.0 && min_ratio <= max_ratio && *max_ratio <= 1.0) {
                    return bad(format!(
                        "need 0 < min_ratio <= max_ratio <= 1, got [{min_ratio}, {max_ratio}]"
                    ));
                }
            }
            AugmentationKind::WindowWarp {
                window_ratio,
                scales,
            } => {
                if !(*window_ratio > 0.0 && *window_ratio <= 1.0) {
                    return bad(format!(
                        "window_ratio must lie in (0, 1], got {window_ratio}"
                    ));
                }
                if scales.is_empty() || scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return bad("scales must be a non-empty list of positive factors".into());
                }
            }
        }
        Ok(())
    }
}

/// The five-operator bank, in the order used throughout the crate.
pub fn default_bank() -> Vec<AugmentationKind> {
    vec![
        AugmentationKind::jitter(),
        AugmentationKind::scaling(),
        AugmentationKind::time_warp(),
        AugmentationKind::slicing(),
        AugmentationKind::window_warp(),
    ]
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentationKind::Jitter { sigma } => write!(f, "jitter(sigma={sigma})"),
            AugmentationKind::Scaling { sigma } => write!(f, "scaling(sigma={sigma})"),
            AugmentationKind::TimeWarp { sigma, knots } => {
                write!(f, "time_warp(sigma={sigma};knots={knots})")
            }
            AugmentationKind::Slicing {
                min_ratio,
                max_ratio,
            } => {
                write!(f, "slicing(min_ratio={min_ratio};max_ratio={max_ratio})")
            }
            AugmentationKind::WindowWarp {
                window_ratio,
                scales,
            } => {
                let s: Vec<String> = scales.iter().map(|s| s.to_string()).collect();
                write!(
                    f,
                    "window_warp(window_ratio={window_ratio};scales={})",
                    s.join("/")
                )
            }
        }
    }
}

/// Parses `name` or `name(key=value;key=value)`, e.g. `jitter(sigma=0.05)` or
/// `window_warp(scales=0.5/2)`. Unspecified keys keep their defaults.
impl FromStr for AugmentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
            Some(_) => return Err(Error::config(format!("unbalanced parentheses in `{s}`"))),
            None => (s, ""),
        };
        let mut kind = match name.trim() {
            "jitter" => AugmentationKind::jitter(),
            "scaling" => AugmentationKind::scaling(),
            "time_warp" => AugmentationKind::time_warp(),
            "slicing" => AugmentationKind::slicing(),
            "window_warp" => AugmentationKind::window_warp(),
            other => return Err(Error::config(format!("unknown augmentation `{other}`"))),
        };
        for pair in args.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::config(format!("expected key=value in `{pair}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::config(format!("`{key}` expects a number, got `{value}`")))
            };
            match (&mut kind, key) {
                (AugmentationKind::Jitter { sigma }, "sigma")
                | (AugmentationKind::Scaling { sigma }, "sigma")
                | (AugmentationKind::TimeWarp { sigma, .. }, "sigma") => *sigma = num()?,
                (AugmentationKind::TimeWarp { knots, .. }, "knots") => *knots = num()? as usize,
                (AugmentationKind::Slicing { min_ratio, .. }, "min_ratio") => *min_ratio = num()?,
                (AugmentationKind::Slicing { max_ratio, .. }, "max_ratio") => *max_ratio = num()?,
                (AugmentationKind::WindowWarp { window_ratio, .. }, "window_ratio") => {
                    *window_ratio = num()?
                }
                (AugmentationKind::WindowWarp { scales, .. }, "scales") => {
                    *scales = value
                        .split('/')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::config(format!("bad scales list `{value}`")))?;
                }
                _ => return Err(Error::config(format!("`{name}` has no parameter `{key}`"))),
            }
        }
        kind.validate()?;
        Ok(kind)
    }
}

/// Parses a comma-separated bank specification.
pub fn parse_bank(spec: &str) -> Result<Vec<AugmentationKind>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, ch) in spec.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                out.push(spec[start..i].parse()?);
                start = i + 1;
            }
            _ => {}
        }
    }
    if !spec[start..].trim().is_empty() {
        out.push(spec[start..].parse()?);
    }
    if out.is_empty() {
        return Err(Error::config("augmentation bank is empty"));
    }
    Ok(out)
}

pub fn format_bank(bank: &[AugmentationKind]) -> String {
    bank.iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Applies one augmentation to one variable with freshly drawn parameters.
pub fn augment(x: &[f64], kind: &AugmentationKind, rng: &mut Rng) -> Result<Vec<f64>> {
    kind.validate()?;
    let t = x.len();
    if t < 2 {
        return Err(Error::Shape(format!("augmentation needs T >= 2, got {t}")));
    }
    let out = match kind {
        AugmentationKind::Jitter { sigma } => {
            let noise = Normal::new(0.0, *sigma).expect("validated");
            let draws: Vec<f64> = (0..t).map(|_| noise.sample(rng)).collect();
            jitter_with(x, &draws)
        }
        AugmentationKind::Scaling { sigma } => {
            let factor = Normal::new(1.0, *sigma).expect("validated").sample(rng);
            scale_with(x, factor)
        }
        AugmentationKind::TimeWarp { sigma, knots } => {
            let dist = Normal::new(1.0, *sigma).expect("validated");
            let speeds: Vec<f64> = (0..knots + 2).map(|_| dist.sample(rng)).collect();
            time_warp_with(x, &speeds)
        }
        AugmentationKind::Slicing {
            min_ratio,
            max_ratio,
        } => {
            let ratio = if min_ratio < max_ratio {
                rng.random_range(*min_ratio..*max_ratio)
            } else {
                *min_ratio
            };
            let len = ((ratio * t as f64).ceil() as usize).clamp(2, t);
            let start = rng.random_range(0..=t - len);
            slice_with(x, start, len)
        }
        AugmentationKind::WindowWarp {
            window_ratio,
            scales,
        } => {
            let w = ((window_ratio * t as f64).ceil() as usize).clamp(1, t);
            let start = rng.random_range(0..=t - w);
            let scale = scales[rng.random_range(0..scales.len())];
            window_warp_with(x, start, w, scale)
        }
    };
    debug_assert_eq!(out.len(), t);
    Ok(out)
}

pub fn jitter_with(x: &[f64], noise: &[f64]) -> Vec<f64> {
    x.iter().zip(noise).map(|(a, b)| a + b).collect()
}

pub fn scale_with(x: &[f64], factor: f64) -> Vec<f64> {
    x.iter().map(|v| v * factor).collect()
}

/// Keeps `x[start..start + len]` and stretches it back to `x.len()`.
pub fn slice_with(x: &[f64], start: usize, len: usize) -> Vec<f64> {
    resample_linear(&x[start..start + len], x.len())
}

/// Resamples the window `x[start..start + width]` to `round(width * scale)`
/// steps, splices it back, and re-interpolates the result to `x.len()`.
pub fn window_warp_with(x: &[f64], start: usize, width: usize, scale: f64) -> Vec<f64> {
    let warped_len = ((width as f64 * scale).round() as usize).max(1);
    let mut spliced = Vec::with_capacity(x.len() - width + warped_len);
    spliced.extend_from_slice(&x[..start]);
    spliced.extend(resample_linear(&x[start..start + width], warped_len));
    spliced.extend_from_slice(&x[start + width..]);
    resample_linear(&spliced, x.len())
}

/// Warps the time axis with a speed curve given at `speeds.len()` evenly
/// spaced knots (first and last at the series ends).
pub fn time_warp_with(x: &[f64], speeds: &[f64]) -> Vec<f64> {
    let t = x.len();
    let last = (t - 1) as f64;
    let knot_x: Vec<f64> = (0..speeds.len())
        .map(|k| last * k as f64 / (speeds.len() - 1) as f64)
        .collect();
    let spline = NaturalCubicSpline::new(&knot_x, speeds);
    let mut clock = Vec::with_capacity(t);
    let mut acc = 0.0;
    for i in 0..t {
        acc += spline.eval(i as f64).max(1e-3);
        clock.push(acc);
    }
    let (c0, c1) = (clock[0], clock[t - 1]);
    let positions: Vec<f64> = clock.iter().map(|c| (c - c0) / (c1 - c0) * last).collect();
    interp_at(x, &positions)
}

/// Linear interpolation of `x` onto `n` evenly spaced positions spanning it.
pub fn resample_linear(x: &[f64], n: usize) -> Vec<f64> {
    if x.len() == 1 || n == 1 {
        return vec![x[0]; n];
    }
    let span = (x.len() - 1) as f64;
    let positions: Vec<f64> = (0..n).map(|i| i as f64 * span / (n - 1) as f64).collect();
    interp_at(x, &positions)
}

/// Linear interpolation of `x` at fractional indices, clamped to its range.
pub fn interp_at(x: &[f64], positions: &[f64]) -> Vec<f64> {
    let last = x.len() - 1;
    positions
        .iter()
        .map(|&p| {
            let p = p.clamp(0.0, last as f64);
            let i = (p.floor() as usize).min(last);
            let f = p - i as f64;
            if f == 0.0 || i == last {
                x[i]
            } else {
                x[i] + f * (x[i + 1] - x[i])
            }
        })
        .collect()
}

/// Natural cubic spline through strictly increasing knots.
struct NaturalCubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalCubicSpline {
    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        let mut second = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations.
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let a = h0;
                let b = 2.0 * (h0 + h1);
                let rhs = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
                let denom = b - a * c[i - 1];
                c[i] = h1 / denom;
                d[i] = (rhs - a * d[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                second[i] = d[i] - c[i] * second[i + 1];
            }
        }
        Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            second,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let k = match self.xs.iter().position(|&k| k > x) {
            Some(0) => 1,
            Some(k) => k,
            None => n - 1,
        };
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * self.ys[k - 1]
            + b * self.ys[k]
            + ((a * a * a - a) * self.second[k - 1] + (b * b * b - b) * self.second[k]) * h * h
                / 6.0
    }
}

/// Applies `kind` to every variable of `sample` independently.
pub fn augment_sample(
    sample: &TimeSeriesSample,
    kind: &AugmentationKind,
    rng: &mut Rng,
) -> Result<TimeSeriesSample> {
    let (m, t) = sample.shape();
    let mut out = Array2::zeros((m, t));
    for (v, mut row) in out.rows_mut().into_iter().enumerate() {
        let x = sample.variable(v).to_vec();
        let y = augment(&x, kind, rng)?;
        row.assign(&ndarray::ArrayView1::from(&y));
    }
    Ok(sample.with_values(out))
}

/// Two sets of `G` augmented views of one sample; `views_a[k]` and
/// `views_b[k]` come from the same operator with independent parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedViewSet {
    pub base: TimeSeriesSample,
    pub views_a: Vec<TimeSeriesSample>,
    pub views_b: Vec<TimeSeriesSample>,
    pub kinds: Vec<AugmentationKind>,
}

impl AugmentedViewSet {
    pub fn num_kinds(&self) -> usize {
        self.kinds.len()
    }
}

pub fn generate_view_sets(
    sample: &TimeSeriesSample,
    bank: &[AugmentationKind],
    rng: &mut Rng,
) -> Result<AugmentedViewSet> {
    if bank.is_empty() {
        return Err(Error::config("augmentation bank is empty"));
    }
    let mut views_a = Vec::with_capacity(bank.len());
    let mut views_b = Vec::with_capacity(bank.len());
    for kind in bank {
        views_a.push(augment_sample(sample, kind, rng)?);
        views_b.push(augment_sample(sample, kind, rng)?);
    }
    Ok(AugmentedViewSet {
        base: sample.clone(),
        views_a,
        views_b,
        kinds: bank.to_vec(),
    })
}

/// Mean over variables of the Euclidean distance between matching
/// variables, divided by `sqrt(T)`.
pub fn view_distance(a: &TimeSeriesSample, b: &TimeSeriesSample) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "view_distance: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    let (m, t) = a.shape();
    let total: f64 = a
        .values
        .rows()
        .into_iter()
        .zip(b.values.rows())
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / m as f64 / (t as f64).sqrt())
}

/// Signature of a pluggable view distance.
pub type DistanceFn = fn(&TimeSeriesSample, &TimeSeriesSample) -> Result<f64>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn uni(v: Vec<f64>) -> TimeSeriesSample {
        TimeSeriesSample::univariate(v, None).unwrap()
    }

    #[test]
    fn zero_jitter_is_identity() {
        let x = vec![0.3, -1.0, 2.0, 5.5];
        let y = augment(&x, &AugmentationKind::Jitter { sigma: 0.0 }, &mut seeded(1)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn fixed_scaling() {
        assert_eq!(scale_with(&[1.0, -1.0, 0.5], 2.0), vec![2.0, -2.0, 1.0]);
    }

    #[test]
    fn slicing_hand_oracle() {
        let x: Vec<f64> = (0..8).map(f64::from).collect();
        let y = slice_with(&x, 2, 4);
        // Positions i * 3/7 into [2, 3, 4, 5].
        for (i, v) in y.iter().enumerate() {
            let expect = 2.0 + 3.0 * i as f64 / 7.0;
            assert!((v - expect).abs() < 1e-12, "{i}: {v} vs {expect}");
        }
    }

    #[test]
    fn full_slice_is_identity() {
        let x = vec![1.0, 4.0, 2.0, 8.0, 5.0];
        let kind = AugmentationKind::Slicing {
            min_ratio: 1.0,
            max_ratio: 1.0,
        };
        assert_eq!(augment(&x, &kind, &mut seeded(0)).unwrap(), x);
    }

    #[test]
    fn flat_time_warp_is_identity() {
        let x: Vec<f64> = (0..37).map(|i| (i as f64 * 0.3).sin()).collect();
        let kind = AugmentationKind::TimeWarp {
            sigma: 0.0,
            knots: 4,
        };
        let y = augment(&x, &kind, &mut seeded(4)).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn window_warp_hand_case() {
        // Window [2, 3] slowed to 4 steps: [0,1,2,2.333,2.667,3,4,5] back to 6 steps.
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let y = window_warp_with(&x, 2, 2, 2.0);
        let spliced = [
            0.0,
            1.0,
            2.0,
            2.0 + 1.0 / 3.0,
            2.0 + 2.0 / 3.0,
            3.0,
            4.0,
            5.0,
        ];
        let expect = resample_linear(&spliced, 6);
        assert_eq!(y, expect);
        assert!((y[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn spline_interpolates_knots() {
        let xs = [0.0, 1.0, 2.5, 4.0];
        let ys = [1.0, 0.5, 2.0, -1.0];
        let s = NaturalCubicSpline::new(&xs, &ys);
        for (x, y) in xs.iter().zip(ys) {
            assert!((s.eval(*x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_params_are_config_errors() {
        let bad = AugmentationKind::Slicing {
            min_ratio: 0.0,
            max_ratio: 0.5,
        };
        assert!(matches!(
            augment(&[1.0, 2.0], &bad, &mut seeded(0)),
            Err(Error::Config(_))
        ));
        assert!(augment(&[1.0], &AugmentationKind::jitter(), &mut seeded(0)).is_err());
    }

    #[test]
    fn bank_parse_roundtrip() {
        let bank = default_bank();
        let text = format_bank(&bank);
        assert_eq!(parse_bank(&text).unwrap(), bank);
        let custom =
            parse_bank("jitter(sigma=0.5), window_warp(scales=0.25/4;window_ratio=0.2)").unwrap();
        assert_eq!(custom[0], AugmentationKind::Jitter { sigma: 0.5 });
        assert_eq!(
            custom[1],
            AugmentationKind::WindowWarp {
                window_ratio: 0.2,
                scales: vec![0.25, 4.0]
            }
        );
        assert!(parse_bank("").is_err());
        assert!(parse_bank("rotate").is_err());
    }

    #[test]
    fn view_sets_shape_and_determinism() {
        let s = TimeSeriesSample::new(
            ndarray::Array2::from_shape_fn((2, 30), |(m, t)| (t as f64 * 0.2 + m as f64).sin()),
            None,
            "x",
        )
        .unwrap();
        let a = generate_view_sets(&s, &default_bank(), &mut seeded(5)).unwrap();
        let b = generate_view_sets(&s, &default_bank(), &mut seeded(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.views_a.len() + a.views_b.len(), 10);
        assert!(a
            .views_a
            .iter()
            .chain(&a.views_b)
            .all(|v| v.shape() == (2, 30)));
        let one = generate_view_sets(&s, &default_bank()[..1], &mut seeded(5)).unwrap();
        assert_eq!((one.views_a.len(), one.views_b.len()), (1, 1));
        assert!(generate_view_sets(&s, &[], &mut seeded(5)).is_err());
    }

    #[test]
    fn distance_examples() {
        let a = uni(vec![0.0; 4]);
        let b = uni(vec![1.0; 4]);
        assert_eq!(view_distance(&a, &a).unwrap(), 0.0);
        assert!((view_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!(view_distance(&a, &uni(vec![0.0; 5])).is_err());
    }

    #[test]
    fn jitter_statistics() {
        let x = vec![0.0; 100_000];
        let y = augment(
            &x,
            &AugmentationKind::Jitter { sigma: 0.03 },
            &mut seeded(17),
        )
        .unwrap();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.05 * 0.03, "mean {mean}");
        assert!((std - 0.03).abs() < 0.05 * 0.03, "std {std}");
    }

    proptest! {
        #[test]
        fn lengths_preserved(seed in 0u64..500, t in 2usize..90) {
            let x: Vec<f64> = (0..t).map(|i| ((i * 7 % 11) as f64).sqrt()).collect();
            let mut rng = seeded(seed);
            for kind in default_bank() {
                let y = augment(&x, &kind, &mut rng).unwrap();
                prop_assert_eq!(y.len(), t);
                prop_assert!(y.iter().all(|v| v.is_finite()));
            }
        }

        #[test]
        fn distance_is_a_metric(a in proptest::collection::vec(-5.0f64..5.0, 12),
                                b in proptest::collection::vec(-5.0f64..5.0, 12),
                                c in proptest::collection::vec(-5.0f64..5.0, 12)) {
            let to = |v: &Vec<f64>| TimeSeriesSample::new(
                ndarray::Array2::from_shape_vec((2, 6), v.clone()).unwrap(), None, "p").unwrap();
            let (a, b, c) = (to(&a), to(&b), to(&c));
            let ab = view_distance(&a, &b).unwrap();
            let bc = view_distance(&b, &c).unwrap();
            let ac = view_distance(&a, &c).unwrap();
            prop_assert!((ab - view_distance(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}
