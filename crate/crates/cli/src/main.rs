//! Command line front end: pre-training, fine-tuning, evaluation, chart
//! rasterization and cross-dataset reports.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tsproto::data::{load_dataset, locate_split, Split};
use tsproto::encoders::{DType, Model};
use tsproto::imaging::rasterize_batch;
use tsproto::metrics::{accuracy, read_labels, write_report, ResultsTable};
use tsproto::par::Exec;
use tsproto::pipeline::{
    finetune_and_evaluate, palette_for, pretrain, ExperimentConfig, FinetuneConfig,
};

#[derive(Parser)]
#[command(
    name = "tsproto",
    version,
    about = "Contrastive pre-training for time series classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train from a `key = value` config; fine-tunes too when `finetune_data` is set
    Pretrain {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
    },
    /// Fine-tune a checkpoint on a dataset directory and evaluate on its test split
    Finetune {
        #[arg(long, value_name = "DIR")]
        ckpt: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Fraction of the training split to keep (stratified)
        #[arg(long, value_name = "R")]
        ratio: Option<f64>,
        /// Train only the classifier head
        #[arg(long)]
        freeze: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to `finetune_<dataset>` next to the checkpoint
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Accuracy of a label file against another
    Evaluate {
        #[arg(long, value_name = "FILE")]
        pred: PathBuf,
        #[arg(long, value_name = "FILE")]
        truth: PathBuf,
    },
    /// Render every series of a dataset directory as a PNG line chart
    Rasterize {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = tsproto::imaging::DEFAULT_PANEL)]
        panel: usize,
        /// Render at most this many series per split
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Average accuracy, ranks, Friedman test and CD diagram from a results table
    Report {
        #[arg(long, value_name = "CSV")]
        results: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Pretrain { config } => run_pretrain(&config),
        Command::Finetune {
            ckpt,
            data,
            ratio,
            freeze,
            epochs,
            lr,
            seed,
            out,
        } => {
            let (model, checkpoint) = Model::load(&ckpt, DType::F32)
                .with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
            // Fine-tuning settings travel with the checkpoint's config snapshot.
            let mut cfg = checkpoint
                .meta
                .pointer("/extra/config")
                .and_then(|v| v.as_str())
                .map(ExperimentConfig::parse)
                .transpose()?
                .map(|c| c.finetune)
                .unwrap_or_default();
            cfg.freeze |= freeze;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(l) = lr {
                cfg.lr = l;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = out.unwrap_or_else(|| {
                let name = data
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                ckpt.parent()
                    .unwrap_or(Path::new("."))
                    .join(format!("finetune_{name}"))
            });
            run_finetune(model, &data, &cfg, ratio, &out)
        }
        Command::Evaluate { pred, truth } => {
            let acc = accuracy(&read_labels(&pred)?, &read_labels(&truth)?)?;
            println!("accuracy = {acc:.6}");
            Ok(())
        }
        Command::Rasterize {
            data,
            out,
            panel,
            limit,
        } => run_rasterize(&data, &out, panel, limit),
        Command::Report { results, out } => {
            let table = ResultsTable::read_csv(&results)?;
            let report = write_report(&table, &out)?;
            println!(
                "{:<24} {:>8} {:>8} {:>5}",
                "method", "avg_acc", "avg_rank", "top1"
            );
            for s in &report.summary {
                println!(
                    "{:<24} {:>8.4} {:>8.3} {:>5}",
                    s.method, s.avg_acc, s.avg_rank, s.num_top1
                );
            }
            if let Some(f) = report.friedman {
                println!(
                    "friedman chi2 = {:.4} (critical {:.4}, p = {:.4}), reject = {}, CD = {:.4}",
                    f.statistic, f.critical_value, f.p_value, f.reject, f.cd
                );
            }
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn run_pretrain(path: &Path) -> Result<()> {
    let cfg = ExperimentConfig::from_file(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let outcome = pretrain(&cfg)?;
    if let Some(last) = outcome.curve.last() {
        println!(
            "pre-trained {} steps, final loss {:.5}",
            outcome.curve.len(),
            last.losses.l_total
        );
    }
    if let Some(data) = &cfg.finetune_data {
        run_finetune(
            outcome.model,
            data,
            &cfg.finetune,
            cfg.fewshot_ratio,
            &cfg.output_dir,
        )?;
    }
    println!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn run_finetune(
    model: Model,
    data: &Path,
    cfg: &FinetuneConfig,
    ratio: Option<f64>,
    out: &Path,
) -> Result<()> {
    let (_, r) = finetune_and_evaluate(model, data, cfg, ratio, out)?;
    println!(
        "{}: train {} samples, test accuracy {:.4} (train {:.4})",
        r.dataset, r.train_size, r.test_accuracy, r.train_accuracy
    );
    Ok(())
}

fn run_rasterize(data: &Path, out: &Path, panel: usize, limit: Option<usize>) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = 0;
    for split in [Split::Train, Split::Test] {
        let Ok((file, format)) = locate_split(data, split) else {
            continue;
        };
        let ds = load_dataset(&file, format)?;
        let n = limit.unwrap_or(ds.len()).min(ds.len());
        let m = ds.shape().map(|(m, _)| m).unwrap_or(1);
        let images = rasterize_batch(&ds.samples[..n], panel, &palette_for(m), Exec::default())?;
        for (i, img) in images.iter().enumerate() {
            img.save_png(out.join(format!("{}_{i:05}.png", split)))?;
        }
        written += images.len();
    }
    if written == 0 {
        bail!("no train or test split found under {}", data.display());
    }
    println!("wrote {written} images to {}", out.display());
    Ok(())
}
