//! Accuracy, cross-dataset rank statistics, Friedman/Nemenyi tests and
//! critical-difference diagrams, plus the augmentation drift study.

use std::fmt::Write as _;
use std::path::Path;

use candle_core::Tensor;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::augment::{augment_sample, generate_view_sets, AugmentationKind};
use crate::data::{znormalize, Dataset, TimeSeriesSample};
use crate::pipeline::Classifier;
use crate::rng::derive_path;
use crate::{Error, Result};

pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Data("accuracy of an empty set".into()));
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Accuracy per (dataset, method); `None` marks a missing result.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub datasets: Vec<String>,
    pub methods: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl ResultsTable {
    pub fn new(
        datasets: Vec<String>,
        methods: Vec<String>,
        cells: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if cells.len() != datasets.len() || cells.iter().any(|r| r.len() != methods.len()) {
            return Err(Error::Shape(format!(
                "results table must be {} x {}",
                datasets.len(),
                methods.len()
            )));
        }
        for (d, row) in datasets.iter().zip(&cells) {
            for (m, cell) in methods.iter().zip(row) {
                if let Some(v) = cell {
                    if !(0.0..=1.0).contains(v) {
                        return Err(Error::Data(format!(
                            "accuracy {v} for ({d}, {m}) is outside [0, 1]"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            datasets,
            methods,
            cells,
        })
    }

    /// Header row `dataset,<method>,...`; empty cells, `NA` and `nan` are missing.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Data("results CSV is empty".into()))?;
        let methods: Vec<String> = header
            .split(',')
            .skip(1)
            .map(|s| s.trim().to_string())
            .collect();
        let mut datasets = Vec::new();
        let mut cells = Vec::new();
        for (n, line) in lines.enumerate() {
            let mut fields = line.split(',').map(str::trim);
            datasets.push(fields.next().unwrap_or("").to_string());
            let row = fields
                .map(|f| match f {
                    "" | "NA" | "na" | "nan" | "NaN" => Ok(None),
                    v => v.parse::<f64>().map(Some).map_err(|_| {
                        Error::Data(format!("results CSV line {}: bad value `{v}`", n + 2))
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            cells.push(row);
        }
        Self::new(datasets, methods, cells)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!("dataset,{}\n", self.methods.join(","));
        for (d, row) in self.datasets.iter().zip(&self.cells) {
            let vals: Vec<String> = row
                .iter()
                .map(|c| c.map(|v| v.to_string()).unwrap_or_default())
                .collect();
            out.push_str(&format!("{d},{}\n", vals.join(",")));
        }
        out
    }

    /// Dense matrix, or an error naming the first missing cell.
    pub fn complete(&self) -> Result<Vec<Vec<f64>>> {
        self.cells
            .iter()
            .zip(&self.datasets)
            .map(|(row, d)| {
                row.iter()
                    .zip(&self.methods)
                    .map(|(c, m)| {
                        c.ok_or_else(|| {
                            Error::Data(format!("missing result for dataset `{d}`, method `{m}`"))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    fn check_rankable(&self) -> Result<Vec<Vec<f64>>> {
        if self.methods.len() < 2 || self.datasets.len() < 2 {
            return Err(Error::Data(format!(
                "rank statistics need at least 2 methods and 2 datasets, got {} and {}",
                self.methods.len(),
                self.datasets.len()
            )));
        }
        self.complete()
    }
}

/// Fractional ranks with rank 1 for the largest value; ties share the mean
/// of the positions they span.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub avg_acc: f64,
    pub avg_rank: f64,
    /// Datasets where this method alone has the best accuracy.
    pub num_top1: usize,
}

pub fn aggregate(table: &ResultsTable) -> Result<Vec<MethodSummary>> {
    let rows = table.check_rankable()?;
    let k = table.methods.len();
    let n = rows.len() as f64;
    let mut sum_acc = vec![0.0; k];
    let mut sum_rank = vec![0.0; k];
    let mut top1 = vec![0; k];
    for row in &rows {
        for (j, r) in mid_ranks(row).into_iter().enumerate() {
            sum_acc[j] += row[j];
            sum_rank[j] += r;
            if r == 1.0 {
                top1[j] += 1;
            }
        }
    }
    Ok(table
        .methods
        .iter()
        .enumerate()
        .map(|(j, m)| MethodSummary {
            method: m.clone(),
            avg_acc: sum_acc[j] / n,
            avg_rank: sum_rank[j] / n,
            num_top1: top1[j],
        })
        .collect())
}

/// Critical values `q_0.05` of the two-tailed Nemenyi test (studentized range
/// statistic divided by sqrt(2)), for k = 2..=20 classifiers; see Demšar,
/// "Statistical Comparisons of Classifiers over Multiple Data Sets", JMLR 2006.
const NEMENYI_Q_05: [f64; 19] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354,
    3.391, 3.426, 3.458, 3.489, 3.517, 3.544,
];

pub fn nemenyi_q(k: usize) -> Option<f64> {
    (2..=20).contains(&k).then(|| NEMENYI_Q_05[k - 2])
}

/// `q(k) * sqrt(k (k + 1) / (6 N))` at alpha = 0.05.
pub fn critical_difference(k: usize, n: usize) -> Result<f64> {
    let q = nemenyi_q(k).ok_or_else(|| {
        Error::config(format!(
            "no Nemenyi constant for k = {k} (supported: 2..=20)"
        ))
    })?;
    if n == 0 {
        return Err(Error::config(
            "critical difference needs at least one dataset",
        ));
    }
    Ok(q * ((k * (k + 1)) as f64 / (6.0 * n as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FriedmanNemenyi {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub cd: f64,
    pub avg_ranks: Vec<f64>,
}

pub fn friedman_nemenyi(table: &ResultsTable, alpha: f64) -> Result<FriedmanNemenyi> {
    if alpha != 0.05 {
        return Err(Error::config(format!(
            "only alpha = 0.05 is tabulated, got {alpha}"
        )));
    }
    let k = table.methods.len();
    if k < 3 {
        return Err(Error::config(format!(
            "the Friedman test needs at least 3 methods, got {k}"
        )));
    }
    let rows = table.check_rankable()?;
    let n = rows.len();
    let mut avg_ranks = vec![0.0; k];
    for row in &rows {
        for (j, r) in mid_ranks(row).into_iter().enumerate() {
            avg_ranks[j] += r / n as f64;
        }
    }
    let kf = k as f64;
    let sum_sq: f64 = avg_ranks.iter().map(|r| r * r).sum();
    let statistic =
        (12.0 * n as f64 / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0)).max(0.0);
    let chi = ChiSquared::new(kf - 1.0).map_err(|e| Error::Numeric(e.to_string()))?;
    let critical_value = chi.inverse_cdf(1.0 - alpha);
    Ok(FriedmanNemenyi {
        statistic,
        critical_value,
        p_value: 1.0 - chi.cdf(statistic),
        reject: statistic > critical_value,
        cd: critical_difference(k, n)?,
        avg_ranks,
    })
}

/// Maximal runs of methods (by index, best rank first) whose rank spread is
/// at most `cd`. Singletons are omitted.
pub fn cd_groups(ranks: &[f64], cd: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by(|&a, &b| ranks[a].total_cmp(&ranks[b]).then(a.cmp(&b)));
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for start in 0..order.len() {
        let mut end = start;
        while end + 1 < order.len() && ranks[order[end + 1]] - ranks[order[start]] <= cd {
            end += 1;
        }
        if end > start && spans.last().is_none_or(|&(_, e)| end > e) {
            spans.push((start, end));
        }
    }
    spans
        .into_iter()
        .map(|(s, e)| order[s..=e].to_vec())
        .collect()
}

/// Critical-difference diagram: an axis from rank 1 to `k`, one labeled
/// marker per method, and a bar under every group of methods that are not
/// significantly different.
pub fn cd_diagram_svg(names: &[String], ranks: &[f64], cd: f64) -> Result<String> {
    let k = names.len();
    if k < 2 || ranks.len() != k {
        return Err(Error::config(
            "a CD diagram needs at least 2 methods with one rank each",
        ));
    }
    let (width, margin) = (640.0, 80.0);
    let x = |r: f64| margin + (r - 1.0) / ((k - 1) as f64).max(1.0) * (width - 2.0 * margin);
    let groups = cd_groups(ranks, cd);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| ranks[a].total_cmp(&ranks[b]).then(a.cmp(&b)));
    let label_top = 110.0 + 10.0 * groups.len() as f64;
    let height = label_top + 22.0 * k.div_ceil(2) as f64 + 20.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
    // Critical difference scale bar.
    let _ = writeln!(
        svg,
        r#"<line class="cd-scale" x1="{}" y1="20" x2="{}" y2="20" stroke="black" stroke-width="2"/>"#,
        x(1.0),
        x(1.0 + cd)
    );
    let _ = writeln!(svg, r#"<text x="{}" y="14">CD = {:.3}</text>"#, x(1.0), cd);
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{}" y1="60" x2="{}" y2="60" stroke="black"/>"#,
        x(1.0),
        x(k as f64)
    );
    for r in 1..=k {
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="55" x2="{0}" y2="60" stroke="black"/><text x="{0}" y="50" text-anchor="middle">{r}</text>"#,
            x(r as f64)
        );
    }
    for (gi, group) in groups.iter().enumerate() {
        let lo = ranks[group[0]];
        let hi = ranks[*group.last().expect("non-empty")];
        let y = 72.0 + 10.0 * gi as f64;
        let _ = writeln!(
            svg,
            r#"<line class="clique" x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="black" stroke-width="3"/>"#,
            x(lo) - 3.0,
            x(hi) + 3.0
        );
    }
    let half = k.div_ceil(2);
    for (pos, &m) in order.iter().enumerate() {
        let left = pos < half;
        let row = if left { pos } else { k - 1 - pos };
        let y = label_top + 22.0 * row as f64;
        let (tx, anchor) = if left {
            (margin - 10.0, "end")
        } else {
            (width - margin + 10.0, "start")
        };
        let xm = x(ranks[m]);
        let _ = writeln!(
            svg,
            r#"<polyline class="method" points="{xm},60 {xm},{y} {tx},{y}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="{anchor}">{} ({:.2})</text>"#,
            if left { tx - 4.0 } else { tx + 4.0 },
            y + 4.0,
            xml_escape(&names[m]),
            ranks[m]
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_cd_diagram(
    names: &[String],
    ranks: &[f64],
    cd: f64,
    out: impl AsRef<Path>,
) -> Result<()> {
    let svg = cd_diagram_svg(names, ranks, cd)?;
    let out = out.as_ref();
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}

/// Test accuracy under three input conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    pub raw: f64,
    /// Every test series passed through one augmentation.
    pub augmented: f64,
    /// The classifier head applied to the mean representation of a bank of
    /// augmented views.
    pub prototype: f64,
}

impl DriftReport {
    pub fn ordering(&self) -> String {
        let mut c = [
            ("raw", self.raw),
            ("prototype", self.prototype),
            ("augmented", self.augmented),
        ];
        c.sort_by(|a, b| b.1.total_cmp(&a.1));
        c.iter()
            .map(|(n, v)| format!("{n}={v:.3}"))
            .collect::<Vec<_>>()
            .join(" >= ")
    }
}

pub fn semantic_drift_study(
    test: &Dataset,
    classifier: &Classifier,
    bank: &[AugmentationKind],
    augmented_with: &AugmentationKind,
    seed: u64,
) -> Result<DriftReport> {
    let truth = test.labels();
    let raw = classifier.evaluate(test)?;

    let normalized: Vec<TimeSeriesSample> = test.samples.iter().map(znormalize).collect();
    let augmented: Vec<TimeSeriesSample> = normalized
        .iter()
        .enumerate()
        .map(|(i, s)| augment_sample(s, augmented_with, &mut derive_path(seed, &[1, i as u64])))
        .collect::<Result<_>>()?;
    let preds: Vec<usize> = classifier
        .predict_batch(&augmented)?
        .iter()
        .map(|p| p.label)
        .collect();
    let aug_acc = accuracy(&preds, &truth)?;

    let g = bank.len();
    let mut views = Vec::with_capacity(normalized.len() * g);
    for (i, s) in normalized.iter().enumerate() {
        views.extend(generate_view_sets(s, bank, &mut derive_path(seed, &[2, i as u64]))?.views_a);
    }
    let reps = classifier.represent(&views)?;
    let h = reps.dim(1)?;
    let protos: Tensor = reps.reshape((normalized.len(), g, h))?.mean(1)?;
    let preds: Vec<usize> = classifier
        .classify_reps(&protos)?
        .iter()
        .map(|p| p.label)
        .collect();
    let proto_acc = accuracy(&preds, &truth)?;
    Ok(DriftReport {
        raw,
        augmented: aug_acc,
        prototype: proto_acc,
    })
}

/// Reads one label per line. A comma-separated line contributes its last
/// field; a non-numeric first line is taken as a header.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let field = line.rsplit(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<usize>() {
            Ok(v) => out.push(v),
            Err(_) if n == 0 => {}
            Err(_) => {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: n + 1,
                    msg: format!("`{field}` is not a class index"),
                })
            }
        }
    }
    Ok(out)
}

/// Files written by [`write_report`].
#[derive(Debug, Clone)]
pub struct Report {
    pub summary: Vec<MethodSummary>,
    /// Absent with fewer than three methods.
    pub friedman: Option<FriedmanNemenyi>,
}

/// Writes `summary.csv` and, for three or more methods, `friedman.txt` and
/// `cd_diagram.svg` under `out`.
pub fn write_report(table: &ResultsTable, out: impl AsRef<Path>) -> Result<Report> {
    let out = out.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let write = |name: &str, text: String| -> Result<()> {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    let summary = aggregate(table)?;
    let mut csv = String::from("method,avg_acc,avg_rank,num_top1\n");
    for s in &summary {
        let _ = writeln!(
            csv,
            "{},{:.6},{:.6},{}",
            s.method, s.avg_acc, s.avg_rank, s.num_top1
        );
    }
    write("summary.csv", csv)?;
    let friedman = if table.methods.len() >= 3 {
        let f = friedman_nemenyi(table, 0.05)?;
        write(
            "friedman.txt",
            format!(
                "k = {}\nN = {}\nchi2 = {:.6}\ncritical = {:.6}\np = {:.6}\nreject = {}\ncd = {:.6}\n",
                table.methods.len(),
                table.datasets.len(),
                f.statistic,
                f.critical_value,
                f.p_value,
                f.reject,
                f.cd
            ),
        )?;
        write(
            "cd_diagram.svg",
            cd_diagram_svg(&table.methods, &f.avg_ranks, f.cd)?,
        )?;
        Some(f)
    } else {
        None
    };
    Ok(Report { summary, friedman })
}
