//! Tabular datasets: CSV/ARFF ingestion, the 70/30 split and train-fitted standardization.
//!
//! Loading rules:
//! - A column whose every value parses as a number is numeric; any other feature column is
//!   integer-coded in order of first appearance.
//! - Label strings are sorted lexicographically and mapped to `0..C`.
//! - Empty cells and `?` are missing values and are rejected.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Label string of each class index.
    pub class_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Csv,
    Arff,
}

impl DataFormat {
    /// Guesses from the file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("arff") => DataFormat::Arff,
            _ => DataFormat::Csv,
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "arff" => Ok(DataFormat::Arff),
            other => Err(Error::Config(format!("unknown data format `{other}` (csv or arff)"))),
        }
    }
}

/// Which column holds the class label.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Named(String),
}

impl Dataset {
    /// Builds a dataset from numeric features and integer labels, checking the invariants.
    pub fn from_parts(name: impl Into<String>, x: Array2<f64>, y: Vec<usize>) -> Result<Self> {
        let n_classes = y.iter().max().map_or(0, |m| m + 1);
        let ds = Self {
            name: name.into(),
            feature_names: (0..x.ncols()).map(|j| format!("f{j}")).collect(),
            class_names: (0..n_classes).map(|c| format!("{c:0width$}", width = digits(n_classes))).collect(),
            x,
            y,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            name: self.name.clone(),
            n_samples: self.n_samples(),
            n_features: self.n_features(),
            n_classes: self.n_classes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() != self.y.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} labels",
                self.x.nrows(),
                self.y.len()
            )));
        }
        if self.n_samples() < 2 {
            return Err(Error::InvalidDataset("need at least 2 samples".into()));
        }
        if self.n_features() == 0 {
            return Err(Error::InvalidDataset("need at least 1 feature".into()));
        }
        let c = self.n_classes();
        if c < 2 {
            return Err(Error::InvalidDataset(format!("need at least 2 classes, found {c}")));
        }
        let mut seen = vec![false; c];
        for &label in &self.y {
            if label >= c {
                return Err(Error::InvalidDataset(format!("label {label} outside 0..{c}")));
            }
            seen[label] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidDataset(format!("class {missing} never occurs")));
        }
        Ok(())
    }

    /// Copies the given rows.
    pub fn select(&self, rows: &[usize]) -> (Array2<f64>, Vec<usize>) {
        (self.x.select(Axis(0), rows), rows.iter().map(|&i| self.y[i]).collect())
    }

    /// Writes the canonical CSV: header of feature names plus `class`, shortest round-trip
    /// float formatting, label strings in the last column.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::Data { path: path.into(), message: e.to_string() })?;
        let csv_err = |e: csv::Error| Error::Data { path: path.into(), message: e.to_string() };
        let mut header = self.feature_names.clone();
        header.push("class".into());
        w.write_record(&header).map_err(csv_err)?;
        for (row, &label) in self.x.outer_iter().zip(&self.y) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(self.class_names[label].clone());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))
    }
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).to_string().len()
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "?"
}

/// Reads a dataset from disk.
pub fn load_dataset(path: &Path, format: DataFormat, label: &LabelColumn) -> Result<Dataset> {
    let table = match format {
        DataFormat::Csv => read_csv_table(path)?,
        DataFormat::Arff => read_arff_table(path)?,
    };
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    build_dataset(path, name, table, label)
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    /// 1-based source line of each row.
    lines: Vec<usize>,
}

fn read_csv_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data { path: path.into(), message: e.to_string() })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data { path: path.into(), message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { path: path.into(), line, message: e.to_string() }
        })?;
        lines.push(rec.position().map_or(0, |p| p.line() as usize));
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows, lines })
}

fn split_arff_row(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    for ch in line.chars() {
        match (quote, ch) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), c) => cur.push(c),
            (None, '\'' | '"') => quote = Some(ch),
            (None, ',') => out.push(std::mem::take(&mut cur).trim().to_string()),
            (None, c) => cur.push(c),
        }
    }
    out.push(cur.trim().to_string());
    out
}

fn read_arff_table(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let parse_err = |line: usize, message: String| Error::Parse { path: path.into(), line, message };
    let mut header = Vec::new();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut in_data = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        if in_data {
            if t.starts_with('{') {
                return Err(parse_err(lineno, "sparse ARFF rows are not supported".into()));
            }
            let cells = split_arff_row(t);
            if cells.len() != header.len() {
                return Err(parse_err(
                    lineno,
                    format!("expected {} values, found {}", header.len(), cells.len()),
                ));
            }
            rows.push(cells);
            lines.push(lineno);
            continue;
        }
        let lower = t.to_ascii_lowercase();
        if lower.starts_with("@attribute") {
            let rest = t["@attribute".len()..].trim();
            let name = if let Some(stripped) = rest.strip_prefix(['\'', '"']) {
                let q = rest.chars().next().unwrap_or('\'');
                stripped.split(q).next().unwrap_or("").to_string()
            } else {
                rest.split_whitespace().next().unwrap_or("").to_string()
            };
            if name.is_empty() {
                return Err(parse_err(lineno, "attribute without a name".into()));
            }
            header.push(name);
        } else if lower.starts_with("@data") {
            in_data = true;
        } else if lower.starts_with("@relation") {
        } else {
            return Err(parse_err(lineno, format!("unexpected header line `{t}`")));
        }
    }
    if !in_data {
        return Err(Error::Data { path: path.into(), message: "missing @data section".into() });
    }
    Ok(RawTable { header, rows, lines })
}

fn build_dataset(path: &Path, name: String, table: RawTable, label: &LabelColumn) -> Result<Dataset> {
    let RawTable { header, rows, lines } = table;
    if rows.is_empty() {
        return Err(Error::Data { path: path.into(), message: "no data rows".into() });
    }
    let label_idx = match label {
        LabelColumn::Last => header.len().checked_sub(1).ok_or_else(|| Error::Data {
            path: path.into(),
            message: "no columns".into(),
        })?,
        LabelColumn::Named(n) => header.iter().position(|h| h == n).ok_or_else(|| Error::Data {
            path: path.into(),
            message: format!("label column `{n}` not found"),
        })?,
    };
    if header.len() < 2 {
        return Err(Error::Data { path: path.into(), message: "need a label and at least one feature".into() });
    }
    for (row, &line) in rows.iter().zip(&lines) {
        if row.len() != header.len() {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        if let Some(col) = row.iter().position(|c| is_missing(c)) {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("missing value in column `{}`", header[col]),
            });
        }
    }

    let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| j != label_idx).collect();
    let n = rows.len();
    let mut x = Array2::zeros((n, feature_cols.len()));
    for (fj, &j) in feature_cols.iter().enumerate() {
        let parsed: Option<Vec<f64>> = rows.iter().map(|r| r[j].parse::<f64>().ok()).collect();
        match parsed {
            Some(values) => x.column_mut(fj).assign(&ndarray::Array1::from(values)),
            None => {
                let mut codes: HashMap<&str, usize> = HashMap::new();
                for (i, r) in rows.iter().enumerate() {
                    let next = codes.len();
                    x[(i, fj)] = *codes.entry(r[j].as_str()).or_insert(next) as f64;
                }
            }
        }
    }

    let mut class_names: Vec<String> = rows.iter().map(|r| r[label_idx].clone()).collect();
    class_names.sort();
    class_names.dedup();
    if class_names.len() < 2 {
        return Err(Error::Data {
            path: path.into(),
            message: format!("label column has a single class `{}`", class_names[0]),
        });
    }
    let y = rows
        .iter()
        .map(|r| class_names.binary_search(&r[label_idx]).expect("label was collected"))
        .collect();
    let ds = Dataset {
        name,
        x,
        y,
        feature_names: feature_cols.iter().map(|&j| header[j].clone()).collect(),
        class_names,
    };
    ds.validate()?;
    Ok(ds)
}

/// Row partition into training and test indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Classes with no training row; they can never be predicted correctly.
    pub classes_missing_from_train: Vec<usize>,
}

/// Fraction of rows sent to training; the count is floored.
pub const TRAIN_FRACTION: f64 = 0.7;

pub fn train_size(n: usize) -> usize {
    (TRAIN_FRACTION * n as f64).floor() as usize
}

/// Unstratified random 70/30 split.
pub fn train_test_split<R: Rng + ?Sized>(ds: &Dataset, rng: &mut R) -> Result<Split> {
    let n = ds.n_samples();
    if n < 4 {
        return Err(Error::InvalidDataset(format!("{n} samples is too few to split (need 4)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let test = order.split_off(train_size(n));
    let mut present = vec![false; ds.n_classes()];
    for &i in &order {
        present[ds.y[i]] = true;
    }
    Ok(Split {
        classes_missing_from_train: (0..ds.n_classes()).filter(|&c| !present[c]).collect(),
        train: order,
        test,
    })
}

/// Per-feature standardization fitted on training rows (population standard deviation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    /// Scales below this are treated as zero variance and replaced by 1.
    pub const ZERO_SCALE: f64 = 10.0 * f64::EPSILON;

    pub fn fit(x: ArrayView2<f64>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::contract("cannot fit a scaler on zero rows"));
        }
        let n = rows.len() as f64;
        let d = x.ncols();
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &i in rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < Self::ZERO_SCALE {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    /// `(x - mean) / scale`. Applying it twice re-centres again; apply once.
    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.outer_iter_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Synthetic datasets for smoke tests and benchmarks.
pub mod synthetic {
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::Dataset;
    use crate::seed::rng_from_seed;

    /// Isotropic Gaussian blobs: centres drawn from `N(0, I)`, points `centre + noise * N(0, I)`.
    pub fn gaussian_clusters(
        n_per_class: usize,
        n_features: usize,
        n_classes: usize,
        noise: f64,
        seed: u64,
    ) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let centres: Vec<Vec<f64>> = (0..n_classes)
            .map(|_| (0..n_features).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let n = n_per_class * n_classes;
        let mut x = Array2::zeros((n, n_features));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % n_classes;
            for j in 0..n_features {
                x[(i, j)] = centres[c][j] + noise * rng.sample::<f64, _>(StandardNormal);
            }
            y.push(c);
        }
        let mut ds = Dataset::from_parts(format!("blobs{n_classes}x{n_features}"), x, y)
            .expect("generated dataset is valid");
        ds.class_names = (0..n_classes).map(|c| format!("c{c:02}")).collect();
        ds
    }

    /// Two classes split by a random hyperplane through the origin, with a margin.
    pub fn linearly_separable(n: usize, n_features: usize, margin: f64, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let w: Vec<f64> = (0..n_features).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = Array2::zeros((n, n_features));
        let mut y = Vec::with_capacity(n);
        let mut i = 0;
        while i < n {
            let p: Vec<f64> = (0..n_features).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = p.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / norm;
            if s.abs() < margin {
                continue;
            }
            for (j, v) in p.into_iter().enumerate() {
                x[(i, j)] = v;
            }
            y.push(usize::from(s > 0.0));
            i += 1;
        }
        Dataset::from_parts("separable", x, y).expect("both classes drawn")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use ndarray::array;
    use std::io::Write;

    fn write(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_labels_sorted() {
        let f = write("a,b,label\n1,2,b\n3,4,a\n5,6,b\n", ".csv");
        let ds = load_dataset(f.path(), DataFormat::Csv, &LabelColumn::Last).unwrap();
        assert_eq!(ds.y, vec![1, 0, 1]);
        assert_eq!(ds.class_names, vec!["a", "b"]);
        assert_eq!(ds.x, array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
    }

    #[test]
    fn csv_named_label_and_categorical_feature() {
        let f = write("cls,colour,v\nx,red,1\ny,blue,2\nx,red,3\ny,green,4\n", ".csv");
        let ds = load_dataset(f.path(), DataFormat::Csv, &LabelColumn::Named("cls".into())).unwrap();
        assert_eq!(ds.feature_names, vec!["colour", "v"]);
        assert_eq!(ds.x.column(0).to_vec(), vec![0.0, 1.0, 0.0, 2.0]);
        assert_eq!(ds.y, vec![0, 1, 0, 1]);
    }

    #[test]
    fn csv_errors() {
        let f = write("a,label\n", ".csv");
        let err = load_dataset(f.path(), DataFormat::Csv, &LabelColumn::Last).unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");

        let f = write("a,label\n1,x\n?,y\n", ".csv");
        let err = load_dataset(f.path(), DataFormat::Csv, &LabelColumn::Last).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let f = write("a,label\n1,x\n2,x\n", ".csv");
        let err = load_dataset(f.path(), DataFormat::Csv, &LabelColumn::Last).unwrap_err();
        assert!(err.to_string().contains("single class"), "{err}");

        let f = write("a,label\n1,x\n2,y,3\n", ".csv");
        let err = load_dataset(f.path(), DataFormat::Csv, &LabelColumn::Last).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn arff_nominal_class() {
        let f = write(
            "% comment\n@relation toy\n@attribute 'sepal len' numeric\n@attribute kind {yes,no}\n@attribute class {b,a}\n@data\n1.5,yes,b\n2.5,no,a\n3.5,yes,'b'\n",
            ".arff",
        );
        let ds = load_dataset(f.path(), DataFormat::Arff, &LabelColumn::Last).unwrap();
        assert_eq!(ds.feature_names, vec!["sepal len", "kind"]);
        assert_eq!(ds.y, vec![1, 0, 1]);
        assert_eq!(ds.x, array![[1.5, 0.0], [2.5, 1.0], [3.5, 0.0]]);
        assert_eq!(ds.name, f.path().file_stem().unwrap().to_str().unwrap());
    }

    #[test]
    fn split_sizes() {
        let ds = synthetic::gaussian_clusters(5, 2, 2, 1.0, 0);
        let s = train_test_split(&ds, &mut rng_from_seed(1)).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (7, 3));
        assert_eq!(s, train_test_split(&ds, &mut rng_from_seed(1)).unwrap());
        let tiny = Dataset::from_parts("t", array![[0.0], [1.0], [2.0]], vec![0, 1, 0]).unwrap();
        assert!(train_test_split(&tiny, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn scaler_hand_values() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 7.0]];
        let s = Scaler::fit(x.view(), &[0, 1, 2]).unwrap();
        assert!((s.mean[0] - 2.0).abs() < 1e-15);
        assert!((s.scale[0] - 0.816_496_580_927_726).abs() < 1e-12);
        assert_eq!(s.scale[1], 1.0);
        let t = s.transform(x.view());
        assert!((t[(0, 0)] + 1.224_744_871_391_589).abs() < 1e-12);
        assert_eq!(t[(1, 0)], 0.0);
        assert!((t[(2, 0)] - 1.224_744_871_391_589).abs() < 1e-12);
        assert!((t[(3, 0)] - 2.449_489_742_783_178).abs() < 1e-12);
        assert_eq!(t.column(1).to_vec()[..3], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn csv_round_trip() {
        let ds = synthetic::gaussian_clusters(4, 3, 12, 0.7, 5);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("blobs.csv");
        ds.save_csv(&p).unwrap();
        let back = load_dataset(&p, DataFormat::Csv, &LabelColumn::Last).unwrap();
        assert_eq!(back.x, ds.x);
        assert_eq!(back.y, ds.y);
        assert_eq!(back.class_names, ds.class_names);
    }

    #[test]
    fn from_parts_validates() {
        assert!(Dataset::from_parts("bad", array![[0.0], [1.0]], vec![0, 2]).is_err());
        assert!(Dataset::from_parts("bad", array![[0.0], [1.0]], vec![0, 0]).is_err());
    }
}
