//! Dataset types, normalization, pre-training pools and few-shot splits.

mod load;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;

use crate::par::Exec;
use crate::rng::Rng;
use crate::{Error, Result};

pub use load::{load_dataset, load_split_pair, locate_split};

/// One multivariate series, `M` variables by `T` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesSample {
    /// Row `m` holds variable `m`.
    pub values: Array2<f64>,
    pub label: Option<usize>,
    pub source_id: Arc<str>,
}

impl TimeSeriesSample {
    pub fn new(
        values: Array2<f64>,
        label: Option<usize>,
        source_id: impl Into<Arc<str>>,
    ) -> Result<Self> {
        let (m, t) = values.dim();
        if m == 0 {
            return Err(Error::Shape("a sample needs at least one variable".into()));
        }
        if t < 2 {
            return Err(Error::Shape(format!(
                "a sample needs at least 2 time steps, got {t}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("sample contains non-finite values".into()));
        }
        Ok(Self {
            values,
            label,
            source_id: source_id.into(),
        })
    }

    /// Univariate convenience constructor.
    pub fn univariate(values: Vec<f64>, label: Option<usize>) -> Result<Self> {
        let t = values.len();
        let arr =
            Array2::from_shape_vec((1, t), values).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(arr, label, "inline")
    }

    pub fn num_vars(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn variable(&self, m: usize) -> ArrayView1<'_, f64> {
        self.values.row(m)
    }

    /// Same label and source, new values.
    pub fn with_values(&self, values: Array2<f64>) -> Self {
        Self {
            values,
            label: self.label,
            source_id: self.source_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// One sample per line, tab separated, label first.
    UcrTsv,
    /// UEA `.ts` header/body format.
    UeaTs,
    /// Directory with `meta.json` and one CSV per split.
    CsvDir,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ucr_tsv" | "tsv" => Ok(DataFormat::UcrTsv),
            "uea_ts" | "ts" => Ok(DataFormat::UeaTs),
            "csv_dir" | "csv" => Ok(DataFormat::CsvDir),
            other => Err(Error::config(format!("unknown data format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub samples: Vec<TimeSeriesSample>,
    /// Number of classes `C`; zero for unlabeled data.
    pub num_classes: usize,
    /// Original label spelling for each class index.
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset and checks the shape and label invariants.
    pub fn new(
        name: impl Into<String>,
        split: Split,
        samples: Vec<TimeSeriesSample>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            split,
            num_classes: class_names.len(),
            class_names,
            samples,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let Some(first) = self.samples.first() else {
            return Ok(());
        };
        let shape = first.shape();
        let labeled = first.label.is_some();
        for (i, s) in self.samples.iter().enumerate() {
            if s.shape() != shape {
                return Err(Error::Shape(format!(
                    "{}: sample {i} has shape {:?}, expected {:?}",
                    self.name,
                    s.shape(),
                    shape
                )));
            }
            if s.label.is_some() != labeled {
                return Err(Error::Data(format!(
                    "{}: mixed labeled and unlabeled samples",
                    self.name
                )));
            }
            if let Some(y) = s.label {
                if y >= self.num_classes {
                    return Err(Error::Data(format!(
                        "{}: sample {i} has label {y} but C = {}",
                        self.name, self.num_classes
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(M, T)` shared by every sample.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.samples.first().map(|s| s.shape())
    }

    pub fn is_labeled(&self) -> bool {
        self.samples.first().is_some_and(|s| s.label.is_some())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().filter_map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for y in self.labels() {
            counts[y] += 1;
        }
        counts
    }

    /// Per-sample z-normalization of every sample.
    pub fn znormalized(&self) -> Self {
        self.znormalized_with(Exec::default())
    }

    pub fn znormalized_with(&self, exec: Exec) -> Self {
        Self {
            samples: exec.map(&self.samples, |_, s| znormalize(s)),
            ..self.clone()
        }
    }

    /// Drops labels, for pooling training splits into unlabeled pre-training data.
    pub fn unlabeled(&self) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| TimeSeriesSample {
                    label: None,
                    ..s.clone()
                })
                .collect(),
            num_classes: 0,
            class_names: Vec::new(),
            ..self.clone()
        }
    }
}

/// Standardizes each variable to mean 0 and population standard deviation 1.
/// Zero-variance variables become all zeros.
pub fn znormalize(sample: &TimeSeriesSample) -> TimeSeriesSample {
    let mut values = sample.values.clone();
    for mut row in values.axis_iter_mut(Axis(0)) {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std <= f64::EPSILON * mean.abs().max(1.0) {
            row.fill(0.0);
        } else {
            row.mapv_inplace(|x| (x - mean) / std);
        }
    }
    sample.with_values(values)
}

/// Several source datasets pooled for pre-training.
#[derive(Debug, Clone)]
pub struct PretrainPool {
    pub datasets: Vec<Dataset>,
    /// Probability of drawing each dataset for a batch.
    pub weights: Vec<f64>,
}

impl PretrainPool {
    /// Weights proportional to dataset size.
    pub fn new(datasets: Vec<Dataset>) -> Result<Self> {
        let total: usize = datasets.iter().map(Dataset::len).sum();
        let weights = datasets
            .iter()
            .map(|d| d.len() as f64 / total.max(1) as f64)
            .collect();
        Self::with_weights(datasets, weights)
    }

    pub fn with_weights(datasets: Vec<Dataset>, weights: Vec<f64>) -> Result<Self> {
        if datasets.is_empty() {
            return Err(Error::config("pre-training pool is empty"));
        }
        if weights.len() != datasets.len() {
            return Err(Error::config("one sampling weight per dataset is required"));
        }
        if let Some(d) = datasets.iter().find(|d| d.is_empty()) {
            return Err(Error::Data(format!("pool dataset `{}` is empty", d.name)));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config(
                "sampling weights must be finite and non-negative",
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "sampling weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { datasets, weights })
    }

    /// Total number of samples `N` across sources.
    pub fn total_len(&self) -> usize {
        self.datasets.iter().map(Dataset::len).sum()
    }
}

/// Draws a shape-homogeneous batch of `b` samples from one dataset chosen by
/// the pool weights. Sampling is without replacement whenever the dataset
/// holds at least `b` samples; smaller datasets are cycled through in a
/// random order.
pub fn sample_batch(pool: &PretrainPool, b: usize, rng: &mut Rng) -> Result<Vec<TimeSeriesSample>> {
    if b < 2 {
        return Err(Error::config(format!(
            "batch size must be at least 2, got {b}"
        )));
    }
    let which = WeightedIndex::new(&pool.weights)
        .map_err(|e| Error::config(format!("invalid pool weights: {e}")))?
        .sample(rng);
    let ds = &pool.datasets[which];
    let n = ds.len();
    let idx: Vec<usize> = if n >= b {
        rand::seq::index::sample(rng, n, b).into_vec()
    } else {
        let mut out = Vec::with_capacity(b);
        while out.len() < b {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            out.extend(perm.into_iter().take(b - out.len()));
        }
        out
    };
    Ok(idx.into_iter().map(|i| ds.samples[i].clone()).collect())
}

/// Stratified subset of `max(round(ratio * N), C)` samples with at least one
/// sample per class. Samples keep their original relative order.
pub fn fewshot_split(dataset: &Dataset, ratio: f64, rng: &mut Rng) -> Result<Dataset> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::config(format!(
            "few-shot ratio must lie in (0, 1], got {ratio}"
        )));
    }
    if !dataset.is_labeled() {
        return Err(Error::Data(format!(
            "{}: few-shot split needs labels",
            dataset.name
        )));
    }
    let counts = dataset.class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Data(format!(
            "{}: class {c} has no samples",
            dataset.name
        )));
    }
    let n_total = dataset.len();
    let c = counts.len();
    let target = ((ratio * n_total as f64).round() as usize)
        .max(c)
        .min(n_total);
    let quotas = allocate_stratified(&counts, target);

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        by_class
            .entry(s.label.expect("labeled"))
            .or_default()
            .push(i);
    }
    let mut keep = Vec::with_capacity(target);
    for (class, mut members) in by_class {
        members.shuffle(rng);
        keep.extend(members.into_iter().take(quotas[class]));
    }
    keep.sort_unstable();
    Ok(Dataset {
        samples: keep
            .into_iter()
            .map(|i| dataset.samples[i].clone())
            .collect(),
        ..dataset.clone()
    })
}

/// Largest-remainder allocation of `target` slots across classes, proportional
/// to class size, with every class getting at least one and at most its size.
fn allocate_stratified(counts: &[usize], target: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    let quota: Vec<f64> = counts
        .iter()
        .map(|&n| target as f64 * n as f64 / total as f64)
        .collect();
    let mut alloc: Vec<usize> = counts
        .iter()
        .zip(&quota)
        .map(|(&n, &q)| (q.floor() as usize).clamp(1, n))
        .collect();
    let mut sum: usize = alloc.iter().sum();
    while sum < target {
        let k = (0..counts.len())
            .filter(|&k| alloc[k] < counts[k])
            .max_by(|&a, &b| {
                (quota[a] - alloc[a] as f64)
                    .total_cmp(&(quota[b] - alloc[b] as f64))
                    .then(b.cmp(&a))
            })
            .expect("target never exceeds total");
        alloc[k] += 1;
        sum += 1;
    }
    while sum > target {
        let k = (0..counts.len())
            .filter(|&k| alloc[k] > 1)
            .max_by(|&a, &b| {
                (alloc[a] as f64 - quota[a])
                    .total_cmp(&(alloc[b] as f64 - quota[b]))
                    .then(b.cmp(&a))
            })
            .expect("target is at least the class count");
        alloc[k] -= 1;
        sum -= 1;
    }
    alloc
}
