//! Supervised fine-tuning with an MLP head, and prediction.

use candle_core::{DType, Module, Tensor, D};
use candle_nn::{AdamW, Linear, Optimizer, ParamsAdamW, VarBuilder, VarMap};
use rand::seq::SliceRandom;

use super::FinetuneConfig;
use crate::data::{znormalize, Dataset, TimeSeriesSample};
use crate::encoders::{init_vars, series_batch_tensor, sorted_vars, Model};
use crate::rng::derive;
use crate::{Error, Result};

/// Samples per forward pass at inference time.
const EVAL_CHUNK: usize = 64;

/// Series encoder plus MLP head. The image branch of the model is unused.
pub struct Classifier {
    pub model: Model,
    head_vars: VarMap,
    hidden: Linear,
    out: Linear,
    pub num_classes: usize,
    pub num_vars: usize,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probs: Vec<f64>,
}

impl Classifier {
    fn new(
        model: Model,
        num_vars: usize,
        class_names: Vec<String>,
        cfg: &FinetuneConfig,
    ) -> Result<Self> {
        let head_vars = VarMap::new();
        let vb = VarBuilder::from_varmap(&head_vars, model.dtype, &model.device);
        let h = model.config.repr_dim;
        let c = class_names.len();
        let hidden = candle_nn::linear(h, cfg.mlp_hidden, vb.pp("mlp.hidden"))?;
        let out = candle_nn::linear(cfg.mlp_hidden, c, vb.pp("mlp.out"))?;
        init_vars(&sorted_vars(&head_vars), &mut derive(cfg.seed, 0x4ead))?;
        Ok(Self {
            model,
            head_vars,
            hidden,
            out,
            num_classes: c,
            num_vars,
            class_names,
        })
    }

    fn check_vars(&self, samples: &[TimeSeriesSample]) -> Result<()> {
        if let Some(s) = samples.iter().find(|s| s.num_vars() != self.num_vars) {
            return Err(Error::Shape(format!(
                "classifier was trained on {} variables, got {}",
                self.num_vars,
                s.num_vars()
            )));
        }
        Ok(())
    }

    /// Encoder representations `(N, H)` of z-normalized inputs, detached from
    /// the autograd graph chunk by chunk so intermediates are freed.
    pub fn represent(&self, samples: &[TimeSeriesSample]) -> Result<Tensor> {
        self.check_vars(samples)?;
        let normalized: Vec<TimeSeriesSample> = samples.iter().map(znormalize).collect();
        let mut parts = Vec::new();
        for chunk in normalized.chunks(EVAL_CHUNK) {
            parts.push(self.model.encode_series(chunk)?.detach());
        }
        Ok(Tensor::cat(&parts, 0)?)
    }

    pub fn logits_from_reps(&self, reps: &Tensor) -> Result<Tensor> {
        Ok(self.out.forward(&self.hidden.forward(reps)?.gelu_erf()?)?)
    }

    /// Class probabilities from representations.
    pub fn classify_reps(&self, reps: &Tensor) -> Result<Vec<Prediction>> {
        let logits = self
            .logits_from_reps(reps)?
            .to_dtype(DType::F64)?
            .to_vec2::<f64>()?;
        Ok(logits.iter().map(|l| softmax_prediction(l)).collect())
    }

    pub fn predict(&self, sample: &TimeSeriesSample) -> Result<Prediction> {
        Ok(self.predict_batch(std::slice::from_ref(sample))?.remove(0))
    }

    pub fn predict_batch(&self, samples: &[TimeSeriesSample]) -> Result<Vec<Prediction>> {
        self.classify_reps(&self.represent(samples)?)
    }

    /// Fraction of correctly labeled samples in `ds`.
    pub fn evaluate(&self, ds: &Dataset) -> Result<f64> {
        let preds: Vec<usize> = self
            .predict_batch(&ds.samples)?
            .into_iter()
            .map(|p| p.label)
            .collect();
        crate::metrics::accuracy(&preds, &ds.labels())
    }

    pub fn head_vars(&self) -> &VarMap {
        &self.head_vars
    }
}

/// Numerically stable softmax with argmax; ties resolve to the lowest index.
pub fn softmax_prediction(logits: &[f64]) -> Prediction {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    let label = probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
            if p > best.1 {
                (i, p)
            } else {
                best
            }
        })
        .0;
    Prediction { label, probs }
}

pub struct FinetuneOutcome {
    pub classifier: Classifier,
    /// Mean training cross-entropy per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains an MLP head (and, unless frozen, the series encoder) with
/// cross-entropy on z-normalized training series.
pub fn finetune(model: Model, train: &Dataset, cfg: &FinetuneConfig) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if !train.is_labeled() {
        return Err(Error::Data(format!(
            "{}: fine-tuning needs labels",
            train.name
        )));
    }
    if train.num_classes < 2 {
        return Err(Error::Data(format!(
            "{}: need at least 2 classes, got {}",
            train.name, train.num_classes
        )));
    }
    let (m, _) = train
        .shape()
        .ok_or_else(|| Error::Data("empty training set".into()))?;
    let classifier = Classifier::new(model, m, train.class_names.clone(), cfg)?;
    let dtype = classifier.model.dtype;
    let device = classifier.model.device.clone();

    let normalized: Vec<TimeSeriesSample> = train.samples.iter().map(znormalize).collect();
    let inputs = series_batch_tensor(&normalized, dtype, &device)?;
    let labels: Vec<u32> = train.labels().iter().map(|&l| l as u32).collect();
    let targets = Tensor::from_vec(labels, train.len(), &device)?;

    let mut params = classifier.head_vars.all_vars();
    if !cfg.freeze {
        params.extend(classifier.model.series_vars());
    }
    let mut opt = AdamW::new(
        params,
        ParamsAdamW {
            lr: cfg.lr,
            weight_decay: 0.0,
            ..Default::default()
        },
    )?;

    let n = train.len();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.shuffle(&mut derive(cfg.seed, epoch as u64 + 1));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let idx = Tensor::from_slice(chunk, chunk.len(), &device)?;
            let x = inputs.index_select(&idx, 0)?;
            let y = targets.index_select(&idx, 0)?;
            let mut reps = classifier.model.series.forward(&x)?;
            if cfg.freeze {
                reps = reps.detach();
            }
            let logits = classifier.logits_from_reps(&reps)?;
            let loss = candle_nn::loss::cross_entropy(&logits, &y)?;
            let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite fine-tuning loss in epoch {epoch}"
                )));
            }
            total += value * chunk.len() as f64;
            opt.backward_step(&loss)?;
        }
        epoch_losses.push(total / n as f64);
        log::debug!("finetune epoch {epoch} loss {:.5}", total / n as f64);
    }
    Ok(FinetuneOutcome {
        classifier,
        epoch_losses,
    })
}

/// Per-row argmax of logits.
pub fn argmax_rows(logits: &Tensor) -> Result<Vec<usize>> {
    Ok(logits
        .argmax(D::Minus1)?
        .to_dtype(DType::U32)?
        .to_vec1::<u32>()?
        .into_iter()
        .map(|x| x as usize)
        .collect())
}
