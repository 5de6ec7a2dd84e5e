//! Self-supervised pre-training loop.

use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use ndarray::Array2;

use super::ExperimentConfig;
use crate::augment::{generate_view_sets, resample_linear, AugmentationKind, AugmentedViewSet};
use crate::data::{
    self, synthetic, znormalize, DataFormat, Dataset, PretrainPool, Split, TimeSeriesSample,
};
use crate::encoders::Model;
use crate::imaging::{default_palette, rasterize, RasterImage, Rgb};
use crate::losses::{self, l2_normalize, LossBreakdown, LossInputs, TemperaturePair};
use crate::par::Exec;
use crate::rng::derive_path;
use crate::{Error, Result};

const TAG_BATCH: u64 = 1;
const TAG_PREP: u64 = 2;
const TAG_SYNTH: u64 = 3;

/// Everything the loss needs from one sample, computed off the autograd graph.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub views: AugmentedViewSet,
    pub taus: TemperaturePair,
    pub image: RasterImage,
    pub lambda: f64,
}

/// Per-sample view generation, temperatures, rasterization and mixing
/// coefficient. Each sample draws from its own stream keyed by
/// `(seed, step, index)`, so every `exec` mode returns identical results.
#[allow(clippy::too_many_arguments)]
pub fn prepare_batch(
    batch: &[TimeSeriesSample],
    bank: &[AugmentationKind],
    tau0: f64,
    gamma: f64,
    panel: usize,
    palette: &[Rgb],
    seed: u64,
    step: u64,
    exec: Exec,
) -> Result<Vec<PreparedSample>> {
    exec.try_map(batch, |i, sample| {
        let mut rng = derive_path(seed, &[TAG_PREP, step, i as u64]);
        let views = generate_view_sets(sample, bank, &mut rng)?;
        let taus = losses::temperatures_for(&views, tau0)?;
        let image = rasterize(sample, panel, palette)?;
        let lambda = losses::sample_lambdas(1, gamma, &mut rng)?[0];
        Ok(PreparedSample {
            views,
            taus,
            image,
            lambda,
        })
    })
}

/// Palette large enough for `m` variables.
pub fn palette_for(m: usize) -> Vec<Rgb> {
    default_palette(m.max(16))
}

/// Forward pass of the full objective on a prepared batch.
pub fn batch_objective(
    model: &Model,
    prepared: &[PreparedSample],
    cfg: &ExperimentConfig,
) -> Result<(Tensor, LossBreakdown)> {
    let b = prepared.len();
    let g = prepared
        .first()
        .map(|p| p.views.num_kinds())
        .ok_or_else(|| Error::config("empty batch"))?;
    let use_si = cfg.loss.use_si;

    let mut series: Vec<TimeSeriesSample> = Vec::with_capacity(b * (2 * g + 1));
    for p in prepared {
        series.extend(p.views.views_a.iter().cloned());
    }
    for p in prepared {
        series.extend(p.views.views_b.iter().cloned());
    }
    if use_si {
        series.extend(prepared.iter().map(|p| p.views.base.clone()));
    }
    let r = model.encode_series(&series)?;
    let h = r.dim(1)?;
    let r_a = r.narrow(0, 0, b * g)?.reshape((b, g, h))?;
    let r_b = r.narrow(0, b * g, b * g)?.reshape((b, g, h))?;

    let head = &model.series_head;
    let v = head.project(&r_a)?;
    let v_tilde = head.project(&r_b)?;
    let z = l2_normalize(&head.forward_raw(&r_a.mean(1)?)?)?;
    let z_tilde = l2_normalize(&head.forward_raw(&r_b.mean(1)?)?)?;

    let pairs: Vec<TemperaturePair> = prepared.iter().map(|p| p.taus.clone()).collect();
    let (tau_within, tau_cross) =
        losses::stack_temperatures(&pairs, false, model.dtype, &model.device)?;
    let taus_b = if cfg.loss.symmetric_intra {
        Some(losses::stack_temperatures(
            &pairs,
            true,
            model.dtype,
            &model.device,
        )?)
    } else {
        None
    };

    let si = if use_si {
        let series_proj = head.project(&r.narrow(0, 2 * b * g, b)?)?;
        let images: Vec<RasterImage> = prepared.iter().map(|p| p.image.clone()).collect();
        let image_proj = model.image_head.project(&model.encode_image(&images)?)?;
        let lambdas: Vec<f64> = prepared.iter().map(|p| p.lambda).collect();
        let lambdas = Tensor::from_vec(lambdas, b, &model.device)?.to_dtype(model.dtype)?;
        Some((image_proj, series_proj, lambdas))
    } else {
        None
    };

    let inputs = LossInputs {
        v: &v,
        v_tilde: &v_tilde,
        tau_within: &tau_within,
        tau_cross: &tau_cross,
        taus_b: taus_b.as_ref().map(|(w, c)| (w, c)),
        z: &z,
        z_tilde: &z_tilde,
        si: si.as_ref().map(|(u, s, l)| (u, s, l)),
    };
    losses::objective(&inputs, &cfg.loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub losses: LossBreakdown,
}

pub struct PretrainOutcome {
    pub model: Model,
    pub curve: Vec<StepLog>,
}

impl PretrainOutcome {
    pub fn write_curve(&self, path: &Path) -> Result<()> {
        write_loss_curve(path, &self.curve)
    }
}

pub fn write_loss_curve(path: &Path, curve: &[StepLog]) -> Result<()> {
    let mut out = format!("step,epoch,lr,{}\n", LossBreakdown::CSV_HEADER);
    for s in curve {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.step,
            s.epoch,
            s.lr,
            s.losses.csv_row()
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Steps per epoch: enough batches to cover the pool once.
pub fn steps_per_epoch(pool: &PretrainPool, b: usize) -> usize {
    pool.total_len().div_ceil(b).max(1)
}

/// Learning rate at `step` under the step-decay schedule.
pub fn learning_rate(cfg: &ExperimentConfig, step: usize, per_epoch: usize) -> f64 {
    let every = if cfg.lr_step == 0 {
        (per_epoch / 2).max(1)
    } else {
        cfg.lr_step
    };
    cfg.lr * cfg.lr_decay.powi((step / every) as i32)
}

/// Trains `model` on `pool` with the config's recipe and returns it with the
/// per-step loss log.
pub fn pretrain_model(
    model: Model,
    pool: &PretrainPool,
    cfg: &ExperimentConfig,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let per_epoch = steps_per_epoch(pool, cfg.batch_size);
    let mut total = per_epoch * cfg.epochs;
    if cfg.max_steps > 0 {
        total = total.min(cfg.max_steps);
    }
    let vars = model.varmap.all_vars();
    let mut opt = AdamW::new(
        vars,
        ParamsAdamW {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
    )?;
    let exec = cfg.exec();
    let mut curve = Vec::with_capacity(total);
    for step in 0..total {
        let lr = learning_rate(cfg, step, per_epoch);
        opt.set_learning_rate(lr);
        let batch = data::sample_batch(
            pool,
            cfg.batch_size,
            &mut derive_path(cfg.seed, &[TAG_BATCH, step as u64]),
        )?;
        let palette = palette_for(batch[0].num_vars());
        let prepared = prepare_batch(
            &batch,
            &cfg.bank,
            cfg.loss.tau0,
            cfg.loss.gamma,
            cfg.panel,
            &palette,
            cfg.seed,
            step as u64,
            exec,
        )?;
        let (loss, losses) = batch_objective(&model, &prepared, cfg)?;
        let epoch = step / per_epoch;
        if !losses.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at step {step} (epoch {epoch}, lr {lr}): {losses:?}"
            )));
        }
        opt.backward_step(&loss)?;
        log::debug!(
            "step {step} epoch {epoch} lr {lr:.2e} loss {:.5}",
            losses.l_total
        );
        curve.push(StepLog {
            step,
            epoch,
            lr,
            losses,
        });
    }
    Ok(PretrainOutcome { model, curve })
}

/// Loads, z-normalizes and optionally resamples every pre-training source.
pub fn build_pool(cfg: &ExperimentConfig) -> Result<PretrainPool> {
    if cfg.pretrain_data.is_empty() {
        return Err(Error::config("pretrain_data is empty"));
    }
    let datasets = cfg
        .pretrain_data
        .iter()
        .enumerate()
        .map(|(i, src)| load_source(src, cfg.seed, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let exec = cfg.exec();
    let datasets: Vec<Dataset> = datasets
        .into_iter()
        .map(|d| {
            let d = d.unlabeled().znormalized_with(exec);
            if cfg.pretrain_length > 0 {
                resample_dataset(&d, cfg.pretrain_length)
            } else {
                d
            }
        })
        .collect();
    match &cfg.pretrain_weights {
        Some(w) => PretrainPool::with_weights(datasets, w.clone()),
        None => PretrainPool::new(datasets),
    }
}

/// A dataset directory (training split), a single data file, or a synthetic
/// generator spec.
pub fn load_source(src: &str, seed: u64, index: u64) -> Result<Dataset> {
    if let Some(spec) = src.strip_prefix("synthetic:") {
        let parts: Vec<&str> = spec.split(':').collect();
        let num = |i: usize, default: usize| -> Result<usize> {
            parts
                .get(i)
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::config(format!("bad number in `{src}`")))
                })
                .unwrap_or(Ok(default))
        };
        let mut rng = derive_path(seed, &[TAG_SYNTH, index]);
        return match parts[0] {
            "cbf" => Ok(synthetic::cylinder_bell_funnel(
                num(1, 30)?,
                num(2, 128)?,
                Split::Train,
                &mut rng,
            )),
            "walks" => Ok(synthetic::random_walks(
                num(1, 64)?,
                num(2, 64)?,
                num(3, 1)?,
                "walks",
                &mut rng,
            )),
            "bumps" => Ok(synthetic::gaussian_bumps(
                num(1, 40)?,
                num(2, 64)?,
                num(3, 1)?,
                &mut rng,
            )),
            other => Err(Error::config(format!("unknown synthetic source `{other}`"))),
        };
    }
    let path = PathBuf::from(src);
    if path.is_dir() {
        let (file, format) = data::locate_split(&path, Split::Train)?;
        data::load_dataset(file, format)
    } else if path.is_file() {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("ts") => DataFormat::UeaTs,
            _ => DataFormat::UcrTsv,
        };
        data::load_dataset(&path, format)
    } else {
        Err(Error::config(format!(
            "pre-training source `{src}` does not exist"
        )))
    }
}

pub fn resample_sample(s: &TimeSeriesSample, len: usize) -> TimeSeriesSample {
    let m = s.num_vars();
    let mut values = Array2::zeros((m, len));
    for v in 0..m {
        let row = resample_linear(&s.variable(v).to_vec(), len);
        values.row_mut(v).assign(&ndarray::Array1::from(row));
    }
    s.with_values(values)
}

pub fn resample_dataset(d: &Dataset, len: usize) -> Dataset {
    Dataset {
        samples: d.samples.iter().map(|s| resample_sample(s, len)).collect(),
        ..d.clone()
    }
}

/// Pre-trains from the config's sources and writes `checkpoint/`,
/// `loss_curve.csv` and `config.txt` under the output directory.
pub fn pretrain(cfg: &ExperimentConfig) -> Result<PretrainOutcome> {
    let pool = build_pool(cfg)?;
    log::info!(
        "pre-training on {} sources, {} samples, {} steps per epoch",
        pool.datasets.len(),
        pool.total_len(),
        steps_per_epoch(&pool, cfg.batch_size)
    );
    let model = Model::new(cfg.encoder.clone(), cfg.seed, DType::F32)?;
    let outcome = pretrain_model(model, &pool, cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    outcome.write_curve(&dir.join("loss_curve.csv"))?;
    let cfg_path = dir.join("config.txt");
    let mut f = std::fs::File::create(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    f.write_all(cfg.to_text().as_bytes())
        .map_err(|e| Error::io(&cfg_path, e))?;
    outcome.model.save(
        dir.join("checkpoint"),
        outcome.curve.len(),
        serde_json::json!({ "config": cfg.to_text() }),
    )?;
    Ok(outcome)
}

/// Z-normalizes a batch the way the pool does.
pub fn normalize_batch(batch: &[TimeSeriesSample]) -> Vec<TimeSeriesSample> {
    batch.iter().map(znormalize).collect()
}

/// Seeds a fresh model the same way [`pretrain`] does.
pub fn fresh_model(cfg: &ExperimentConfig) -> Result<Model> {
    Model::new(cfg.encoder.clone(), cfg.seed, DType::F32)
}
