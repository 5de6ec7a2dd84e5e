//! Readers for UCR `.tsv`, UEA `.ts` and `meta.json` + CSV directories.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Deserialize;

use super::{DataFormat, Dataset, Split, TimeSeriesSample};
use crate::{Error, Result};

/// Parsed file before labels are mapped to class indices.
struct RawTable {
    name: String,
    split: Split,
    series: Vec<Array2<f64>>,
    labels: Option<Vec<String>>,
    /// Class set declared by the file header, if any.
    declared: Option<Vec<String>>,
}

/// Loads one split file. Values are not normalized; labels are remapped to
/// `0..C` in sorted order of their original spelling (numeric order when all
/// labels parse as numbers).
///
/// For [`DataFormat::CsvDir`], `path` is either the directory (its
/// `train.csv` is read) or a CSV file whose directory holds `meta.json`.
pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let raw = read_raw(path.as_ref(), format)?;
    let classes = class_order(&raw)?;
    build(raw, &classes)
}

/// Loads train and test splits from `dir` with one shared class mapping.
pub fn load_split_pair(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let (train_path, fmt) = locate_split(dir, Split::Train)?;
    let (test_path, test_fmt) = locate_split(dir, Split::Test)?;
    let train = read_raw(&train_path, fmt)?;
    let test = read_raw(&test_path, test_fmt)?;
    let mut classes = class_order(&train)?;
    for c in class_order(&test)? {
        if !classes.contains(&c) {
            classes.push(c);
        }
    }
    sort_labels(&mut classes);
    Ok((build(train, &classes)?, build(test, &classes)?))
}

/// Finds the file for `split` inside a dataset directory, trying
/// `<Name>_TRAIN.tsv`, `<Name>_TRAIN.ts` and `train.csv` in that order.
pub fn locate_split(dir: &Path, split: Split) -> Result<(PathBuf, DataFormat)> {
    let tag = match split {
        Split::Train => "_TRAIN",
        Split::Test => "_TEST",
    };
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    files.sort();
    let find = |ext: &str| {
        files.iter().find(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.to_ascii_uppercase()
                .ends_with(&format!("{tag}.{}", ext.to_ascii_uppercase()))
        })
    };
    if let Some(p) = find("tsv") {
        return Ok((p.clone(), DataFormat::UcrTsv));
    }
    if let Some(p) = find("ts") {
        return Ok((p.clone(), DataFormat::UeaTs));
    }
    let csv = dir.join(format!("{split}.csv"));
    if csv.exists() && dir.join("meta.json").exists() {
        return Ok((csv, DataFormat::CsvDir));
    }
    Err(Error::Data(format!(
        "no {split} split found in {}",
        dir.display()
    )))
}

fn read_raw(path: &Path, format: DataFormat) -> Result<RawTable> {
    match format {
        DataFormat::UcrTsv => read_ucr(path),
        DataFormat::UeaTs => read_uea(path),
        DataFormat::CsvDir => read_csv_dir(path),
    }
}

fn dataset_name_and_split(path: &Path) -> (String, Split) {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    let upper = stem.to_ascii_uppercase();
    if upper.ends_with("_TEST") {
        (stem[..stem.len() - 5].to_string(), Split::Test)
    } else if upper.ends_with("_TRAIN") {
        (stem[..stem.len() - 6].to_string(), Split::Train)
    } else if upper == "TEST" {
        (String::new(), Split::Test)
    } else {
        (stem.to_string(), Split::Train)
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_value(tok: &str) -> Option<f64> {
    let t = tok.trim();
    if t.is_empty() || t == "?" || t.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    t.parse::<f64>().ok()
}

fn read_ucr(path: &Path) -> Result<RawTable> {
    let text = read_text(path)?;
    let (name, split) = dataset_name_and_split(path);
    let mut series = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').collect()
        } else if line.contains(',') {
            line.split(',').collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() < 3 {
            return Err(malformed(
                path,
                lineno,
                "expected a label and at least two values",
            ));
        }
        let values = fields[1..]
            .iter()
            .map(|t| {
                parse_value(t)
                    .ok_or_else(|| malformed(path, lineno, format!("cannot parse value `{t}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    msg: format!(
                        "ragged series: line {lineno} has {} values, expected {w}",
                        values.len()
                    ),
                })
            }
            _ => {}
        }
        labels.push(fields[0].trim().to_string());
        let t = values.len();
        let mut row = Array2::from_shape_vec((1, t), values).expect("1 x t");
        repair_missing(&mut row).map_err(|m| malformed(path, lineno, m))?;
        series.push(row);
    }
    if series.is_empty() {
        return Err(malformed(path, 1, "file contains no samples"));
    }
    Ok(RawTable {
        name,
        split,
        series,
        labels: Some(labels),
        declared: None,
    })
}

fn read_uea(path: &Path) -> Result<RawTable> {
    let text = read_text(path)?;
    let (file_name, split) = dataset_name_and_split(path);
    let mut name = file_name;
    let mut has_labels = false;
    let mut declared = None;
    let mut in_data = false;
    let mut series = Vec::new();
    let mut labels = Vec::new();
    let mut shape: Option<(usize, usize)> = None;

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            if !line.starts_with('@') {
                return Err(malformed(
                    path,
                    lineno,
                    "expected a header line before @data",
                ));
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or("").to_ascii_lowercase();
            match key.as_str() {
                "@problemname" => {
                    if let Some(n) = parts.next() {
                        name = n.to_string();
                    }
                }
                "@timestamps" => {
                    if parts.next().is_some_and(|v| v.eq_ignore_ascii_case("true")) {
                        return Err(Error::Format {
                            path: path.to_path_buf(),
                            msg: "timestamped .ts files are not supported".into(),
                        });
                    }
                }
                "@classlabel" => {
                    has_labels = parts.next().is_some_and(|v| v.eq_ignore_ascii_case("true"));
                    if has_labels {
                        let names: Vec<String> = parts.map(str::to_string).collect();
                        if !names.is_empty() {
                            declared = Some(names);
                        }
                    }
                }
                "@data" => in_data = true,
                _ => {}
            }
            continue;
        }

        let mut dims: Vec<&str> = line.split(':').collect();
        let label = if has_labels {
            if dims.len() < 2 {
                return Err(malformed(path, lineno, "missing class label"));
            }
            Some(dims.pop().expect("len >= 2").trim().to_string())
        } else {
            None
        };
        let rows = dims
            .iter()
            .map(|d| {
                d.split(',')
                    .map(|t| {
                        parse_value(t).ok_or_else(|| {
                            malformed(path, lineno, format!("cannot parse value `{t}`"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let m = rows.len();
        let t = rows[0].len();
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("ragged dimensions on line {lineno}"),
            });
        }
        match shape {
            None => shape = Some((m, t)),
            Some(s) if s != (m, t) => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    msg: format!(
                        "ragged series: line {lineno} has shape {:?}, expected {s:?}",
                        (m, t)
                    ),
                })
            }
            _ => {}
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let mut arr = Array2::from_shape_vec((m, t), flat).expect("m x t");
        repair_missing(&mut arr).map_err(|msg| malformed(path, lineno, msg))?;
        series.push(arr);
        if let Some(l) = label {
            labels.push(l);
        }
    }
    if series.is_empty() {
        return Err(malformed(path, 1, "file contains no samples"));
    }
    Ok(RawTable {
        name,
        split,
        series,
        labels: has_labels.then_some(labels),
        declared,
    })
}

#[derive(Deserialize)]
struct CsvMeta {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "C")]
    c: usize,
    #[serde(default)]
    name: Option<String>,
}

fn read_csv_dir(path: &Path) -> Result<RawTable> {
    let (dir, file) = if path.is_dir() {
        (path.to_path_buf(), path.join("train.csv"))
    } else {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, path.to_path_buf())
    };
    let meta_path = dir.join("meta.json");
    let meta: CsvMeta = serde_json::from_str(&read_text(&meta_path)?)?;
    if meta.m == 0 || meta.t < 2 {
        return Err(Error::Format {
            path: meta_path,
            msg: "meta.json needs M >= 1 and T >= 2".into(),
        });
    }
    let text = read_text(&file)?;
    let (stem_name, split) = dataset_name_and_split(&file);
    let name = meta
        .name
        .clone()
        .or_else(|| dir.file_name().and_then(|n| n.to_str()).map(str::to_string))
        .unwrap_or(stem_name);

    let mut series = Vec::new();
    let mut labels: Vec<Option<String>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        if fields.len() != 1 + meta.m * meta.t {
            return Err(Error::Format {
                path: file.clone(),
                msg: format!(
                    "line {lineno}: expected {} fields (label + M*T values), found {}",
                    1 + meta.m * meta.t,
                    fields.len()
                ),
            });
        }
        let label = fields[0].trim();
        if !label.is_empty() {
            match label.parse::<usize>() {
                Ok(y) if y < meta.c => {}
                _ => {
                    return Err(malformed(
                        &file,
                        lineno,
                        format!("label `{label}` is not an integer in [0, {})", meta.c),
                    ))
                }
            }
        }
        labels.push((!label.is_empty()).then(|| label.to_string()));
        let values = fields[1..]
            .iter()
            .map(|t| {
                parse_value(t)
                    .ok_or_else(|| malformed(&file, lineno, format!("cannot parse value `{t}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut arr = Array2::from_shape_vec((meta.m, meta.t), values).expect("m x t");
        repair_missing(&mut arr).map_err(|m| malformed(&file, lineno, m))?;
        series.push(arr);
    }
    if series.is_empty() {
        return Err(malformed(&file, 1, "file contains no samples"));
    }
    let labeled = labels.iter().filter(|l| l.is_some()).count();
    if labeled != 0 && labeled != labels.len() {
        return Err(Error::Format {
            path: file,
            msg: "either every row or no row may carry a label".into(),
        });
    }
    Ok(RawTable {
        name,
        split,
        series,
        labels: (labeled > 0).then(|| labels.into_iter().map(|l| l.expect("checked")).collect()),
        // Integer labels 0..C keep their value.
        declared: Some((0..meta.c).map(|c| c.to_string()).collect()),
    })
}

/// Linear interpolation over missing (NaN) entries per variable; leading and
/// trailing gaps copy the nearest observed value.
fn repair_missing(values: &mut Array2<f64>) -> std::result::Result<(), String> {
    for mut row in values.rows_mut() {
        if row.iter().all(|v| v.is_finite()) {
            continue;
        }
        let observed: Vec<usize> = (0..row.len()).filter(|&i| row[i].is_finite()).collect();
        let (Some(&first), Some(&last)) = (observed.first(), observed.last()) else {
            return Err("a variable has no observed values".into());
        };
        for i in 0..first {
            row[i] = row[first];
        }
        for i in last + 1..row.len() {
            row[i] = row[last];
        }
        for w in observed.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (va, vb) = (row[a], row[b]);
            for i in a + 1..b {
                let f = (i - a) as f64 / (b - a) as f64;
                row[i] = va + f * (vb - va);
            }
        }
    }
    Ok(())
}

fn sort_labels(labels: &mut [String]) {
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if numeric.is_some() {
        labels.sort_by(|a, b| {
            a.parse::<f64>()
                .expect("numeric")
                .total_cmp(&b.parse::<f64>().expect("numeric"))
        });
    } else {
        labels.sort();
    }
}

fn class_order(raw: &RawTable) -> Result<Vec<String>> {
    let mut classes: Vec<String> = match (&raw.declared, &raw.labels) {
        (Some(d), _) => d.clone(),
        (None, Some(labels)) => labels.clone(),
        (None, None) => return Ok(Vec::new()),
    };
    // Equal numeric spellings ("1" and "1.0") collapse to one class.
    sort_labels(&mut classes);
    classes.dedup_by(|a, b| label_eq(a, b));
    if let Some(labels) = &raw.labels {
        for l in labels {
            if !classes.iter().any(|c| label_eq(c, l)) {
                return Err(Error::Data(format!(
                    "{}: label `{l}` is not a declared class",
                    raw.name
                )));
            }
        }
    }
    Ok(classes)
}

fn label_eq(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn build(raw: RawTable, classes: &[String]) -> Result<Dataset> {
    let source: std::sync::Arc<str> = raw.name.clone().into();
    let labels: Vec<Option<usize>> = match &raw.labels {
        Some(ls) => ls
            .iter()
            .map(|l| {
                classes
                    .iter()
                    .position(|c| label_eq(c, l))
                    .map(Some)
                    .ok_or_else(|| Error::Data(format!("{}: unknown label `{l}`", raw.name)))
            })
            .collect::<Result<_>>()?,
        None => vec![None; raw.series.len()],
    };
    let samples = raw
        .series
        .into_iter()
        .zip(labels)
        .map(|(v, y)| TimeSeriesSample::new(v, y, source.clone()))
        .collect::<Result<Vec<_>>>()?;
    let class_names = if raw.labels.is_some() {
        classes.to_vec()
    } else {
        Vec::new()
    };
    Dataset::new(raw.name, raw.split, samples, class_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    #[test]
    fn ucr_labels_remap_in_sorted_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "Toy_TRAIN.tsv",
            "1\t0.1\t0.2\t0.3\n-1\t1\t2\t3\n",
        );
        let ds = load_dataset(&p, DataFormat::UcrTsv).unwrap();
        assert_eq!(ds.name, "Toy");
        assert_eq!(ds.split, Split::Train);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.labels(), vec![1, 0]);
        assert_eq!(ds.shape(), Some((1, 3)));
        assert_eq!(ds.class_names, vec!["-1", "1"]);
    }

    #[test]
    fn empty_and_ragged_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "E_TRAIN.tsv", "");
        assert!(matches!(
            load_dataset(&p, DataFormat::UcrTsv),
            Err(Error::Malformed { .. })
        ));
        let p = write(dir.path(), "R_TRAIN.tsv", "1\t1\t2\t3\n2\t1\t2\n");
        assert!(matches!(
            load_dataset(&p, DataFormat::UcrTsv),
            Err(Error::Format { .. })
        ));
        let p = write(dir.path(), "B_TRAIN.tsv", "1\t1\t2\t3\n2\t1\tx\t3\n");
        match load_dataset(&p, DataFormat::UcrTsv) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_values_are_interpolated() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "M_TRAIN.tsv", "0\tNaN\t1\tNaN\t3\tNaN\n");
        let ds = load_dataset(&p, DataFormat::UcrTsv).unwrap();
        assert_eq!(
            ds.samples[0].values.row(0).to_vec(),
            vec![1.0, 1.0, 2.0, 3.0, 3.0]
        );
    }

    #[test]
    fn uea_multivariate_with_string_labels() {
        let dir = tempfile::tempdir().unwrap();
        let body = "# comment\n@problemName Demo\n@univariate false\n@dimensions 2\n@classLabel true walk run\n@data\n1,2,3:4,5,6:walk\n1,?,3:4,5,6:run\n";
        let p = write(dir.path(), "Demo_TEST.ts", body);
        let ds = load_dataset(&p, DataFormat::UeaTs).unwrap();
        assert_eq!(ds.name, "Demo");
        assert_eq!(ds.split, Split::Test);
        assert_eq!(ds.shape(), Some((2, 3)));
        assert_eq!(ds.class_names, vec!["run", "walk"]);
        assert_eq!(ds.labels(), vec![1, 0]);
        assert_eq!(ds.samples[1].values[[0, 1]], 2.0);
    }

    #[test]
    fn csv_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "meta.json", r#"{"M": 2, "T": 2, "C": 3}"#);
        write(dir.path(), "train.csv", "2,1,2,3,4\n0,5,6,7,8\n");
        write(dir.path(), "test.csv", "1,1,2,3,4\n");
        let ds = load_dataset(dir.path(), DataFormat::CsvDir).unwrap();
        assert_eq!(ds.num_classes, 3);
        assert_eq!(ds.labels(), vec![2, 0]);
        assert_eq!(ds.samples[0].values.row(1).to_vec(), vec![3.0, 4.0]);
        let (train, test) = load_split_pair(dir.path()).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(test.labels(), vec![1]);
    }

    #[test]
    fn pair_shares_class_mapping() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "P_TRAIN.tsv", "3\t1\t2\n5\t1\t2\n");
        write(dir.path(), "P_TEST.tsv", "5\t1\t2\n");
        let (train, test) = load_split_pair(dir.path()).unwrap();
        assert_eq!(train.labels(), vec![0, 1]);
        assert_eq!(test.labels(), vec![1]);
        assert_eq!(test.num_classes, 2);
    }
}
