//! Configuration, pre-training, fine-tuning and end-to-end experiments.

mod config;
mod finetune;
mod pretrain;

pub use config::{ExperimentConfig, FinetuneConfig};
pub use finetune::{
    argmax_rows, finetune, softmax_prediction, Classifier, FinetuneOutcome, Prediction,
};
pub use pretrain::{
    batch_objective, build_pool, fresh_model, learning_rate, load_source, normalize_batch,
    palette_for, prepare_batch, pretrain, pretrain_model, resample_dataset, resample_sample,
    steps_per_epoch, write_loss_curve, PreparedSample, PretrainOutcome, StepLog,
};

use std::path::Path;

use candle_core::DType;

use crate::data::{self, fewshot_split, Dataset};
use crate::encoders::Model;
use crate::rng::derive;
use crate::{Error, Result};

/// Accuracy of a pre-trained and a randomly initialized encoder after the
/// same fine-tuning, for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRun {
    pub seed: u64,
    pub pretrained: f64,
    pub scratch: f64,
    pub train_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub runs: Vec<TransferRun>,
}

impl TransferReport {
    pub fn mean_pretrained(&self) -> f64 {
        self.runs.iter().map(|r| r.pretrained).sum::<f64>() / self.runs.len() as f64
    }

    pub fn mean_scratch(&self) -> f64 {
        self.runs.iter().map(|r| r.scratch).sum::<f64>() / self.runs.len() as f64
    }
}

/// Pre-trains with `cfg` once per seed, fine-tunes on `train` (optionally a
/// few-shot subset) and evaluates on `test`; the same fine-tuning is applied
/// to a freshly initialized encoder for comparison.
pub fn transfer_experiment(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    seeds: &[u64],
    fewshot_ratio: Option<f64>,
) -> Result<TransferReport> {
    let pool = build_pool(cfg)?;
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut run_cfg = cfg.clone();
        run_cfg.seed = seed;
        run_cfg.finetune.seed = seed;
        let train_set = match fewshot_ratio {
            Some(r) => fewshot_split(train, r, &mut derive(seed, 0xf5))?,
            None => train.clone(),
        };
        let outcome = pretrain_model(
            Model::new(run_cfg.encoder.clone(), seed, DType::F32)?,
            &pool,
            &run_cfg,
        )?;
        let pretrained = finetune(outcome.model, &train_set, &run_cfg.finetune)?
            .classifier
            .evaluate(test)?;
        let scratch_model = Model::new(run_cfg.encoder.clone(), seed, DType::F32)?;
        let scratch = finetune(scratch_model, &train_set, &run_cfg.finetune)?
            .classifier
            .evaluate(test)?;
        log::info!("seed {seed}: pretrained {pretrained:.4}, scratch {scratch:.4}");
        runs.push(TransferRun {
            seed,
            pretrained,
            scratch,
            train_size: train_set.len(),
        });
    }
    Ok(TransferReport { runs })
}

/// Loads a dataset directory holding a train and a test split.
pub fn load_target(dir: &Path) -> Result<(Dataset, Dataset)> {
    data::load_split_pair(dir)
}

/// Outcome of fine-tuning on one target dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneReport {
    pub dataset: String,
    pub ratio: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub freeze: bool,
    pub seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

impl FinetuneReport {
    pub const CSV_HEADER: &'static str =
        "dataset,ratio,train_size,test_size,freeze,seed,train_accuracy,test_accuracy";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.dataset,
            self.ratio,
            self.train_size,
            self.test_size,
            self.freeze,
            self.seed,
            self.train_accuracy,
            self.test_accuracy
        )
    }
}

/// Fine-tunes `model` on the train split under `data_dir` (optionally a
/// few-shot subset), evaluates on the test split and writes `metrics.csv`,
/// `predictions.txt` and `truth.txt` to `out`.
pub fn finetune_and_evaluate(
    model: Model,
    data_dir: &Path,
    cfg: &FinetuneConfig,
    ratio: Option<f64>,
    out: &Path,
) -> Result<(Classifier, FinetuneReport)> {
    let (train, test) = load_target(data_dir)?;
    let train_set = match ratio {
        Some(r) => fewshot_split(&train, r, &mut derive(cfg.seed, 0xf5))?,
        None => train,
    };
    let outcome = finetune(model, &train_set, cfg)?;
    let clf = outcome.classifier;
    let preds: Vec<usize> = clf
        .predict_batch(&test.samples)?
        .iter()
        .map(|p| p.label)
        .collect();
    let report = FinetuneReport {
        dataset: test.name.clone(),
        ratio: ratio.unwrap_or(1.0),
        train_size: train_set.len(),
        test_size: test.len(),
        freeze: cfg.freeze,
        seed: cfg.seed,
        train_accuracy: clf.evaluate(&train_set)?,
        test_accuracy: crate::metrics::accuracy(&preds, &test.labels())?,
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let write = |name: &str, text: String| -> Result<()> {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    let lines = |xs: &[usize]| xs.iter().map(|x| format!("{x}\n")).collect::<String>();
    write(
        "metrics.csv",
        format!("{}\n{}\n", FinetuneReport::CSV_HEADER, report.csv_row()),
    )?;
    write("predictions.txt", lines(&preds))?;
    write("truth.txt", lines(&test.labels()))?;
    Ok((clf, report))
}
