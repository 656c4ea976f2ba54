//! Datasets (a sample matrix plus labels) and their CSV format.
//!
//! The CSV layout is a header `label,f0,f1,...,f{d-1}` followed by one sample
//! per row with a non-negative integer label in the first column.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// Dense `rows x cols` matrix of finite reals, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(format!("empty matrix ({rows}x{cols})")));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix values",
                expected: rows * cols,
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite value at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                context: "row length",
                expected: cols,
                got: bad.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Single-column matrix.
    pub fn column_vector(values: Vec<f64>) -> Result<Self> {
        Self::new(values.len(), 1, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.row_iter().map(|r| r[c]).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.cols, values)
    }

    pub fn select_cols(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.rows);
        for r in self.row_iter() {
            values.extend(idx.iter().map(|&c| r[c]));
        }
        Self::new(self.rows, idx.len(), values)
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &DataMatrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                context: "hstack rows",
                expected: self.rows,
                got: other.rows,
            });
        }
        let mut values = Vec::with_capacity(self.rows * (self.cols + other.cols));
        for (a, b) in self.row_iter().zip(other.row_iter()) {
            values.extend_from_slice(a);
            values.extend_from_slice(b);
        }
        Self::new(self.rows, self.cols + other.cols, values)
    }

    /// Column means.
    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (acc, v) in m.iter_mut().zip(r) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.rows as f64);
        m
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Discrete labels in `0..num_classes`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(invalid(format!("need at least 2 classes, got {num_classes}")));
        }
        if labels.is_empty() {
            return Err(invalid("empty label vector"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(invalid(format!("label {bad} outside 0..{num_classes}")));
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    /// Infers `num_classes` as `max(label) + 1` (at least 2).
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().copied().max().map_or(2, |m| (m + 1).max(2));
        Self::new(labels, k)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Indices of the members of each class, in ascending order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            m[l].push(i);
        }
        m
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Errors unless every class has at least `needed` members.
    pub fn require_class_sizes(&self, needed: usize) -> Result<()> {
        for (class, &count) in self.class_counts().iter().enumerate() {
            if count < needed {
                return Err(Error::ClassTooSmall {
                    class,
                    count,
                    needed,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: DataMatrix,
    pub labels: LabelVector,
    pub name: String,
    pub seed: u64,
}

pub const CSV_SCHEMA: &str = "header `label,f0,f1,...,f{d-1}`; one sample per row; \
integer label >= 0 first, then d finite feature values";

impl Dataset {
    pub fn new(name: impl Into<String>, features: DataMatrix, labels: LabelVector, seed: u64) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: features.rows(),
                got: labels.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            name: name.into(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.features.select_rows(idx)?,
            self.labels.select(idx),
            self.seed,
        )
    }

    pub fn with_features(&self, features: DataMatrix) -> Result<Self> {
        Self::new(self.name.clone(), features, self.labels.clone(), self.seed)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim()).map(|j| format!("f{j}")));
        w.write_record(&header).map_err(csv_io)?;
        let mut record = Vec::with_capacity(self.dim() + 1);
        for (i, row) in self.features.row_iter().enumerate() {
            record.clear();
            record.push(self.labels.get(i).to_string());
            record.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&record).map_err(csv_io)?;
        }
        w.flush().map_err(|e| csv_io(e.into()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| match e {
                Error::Io { source, .. } => Error::Io {
                    path: path.to_path_buf(),
                    source,
                },
                other => other,
            })
    }

    /// Reads the dataset CSV format. `name` becomes the dataset name.
    pub fn load_csv(path: &Path, name: &str) -> Result<Self> {
        let file = File::open(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                Error::NotFound {
                    path: path.to_path_buf(),
                    schema: CSV_SCHEMA.to_string(),
                }
            } else {
                Error::Io {
                    path: path.to_path_buf(),
                    source,
                }
            }
        })?;
        Self::read_csv(BufReader::new(file), &path.display().to_string(), name)
    }

    pub fn read_csv<R: std::io::Read>(input: R, source: &str, name: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(input);
        let header = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if header.get(0).map(str::trim) != Some("label") || header.len() < 2 {
            return Err(parse_err(1, format!("bad header; expected {CSV_SCHEMA}")));
        }
        let d = header.len() - 1;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
            if rec.len() != d + 1 {
                return Err(parse_err(line, format!("expected {} fields, found {}", d + 1, rec.len())));
            }
            let label: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("label `{}` is not a non-negative integer", &rec[0])))?;
            labels.push(label);
            for (j, field) in rec.iter().skip(1).enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(line, format!("f{j} = `{field}` is not a number")))?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("f{j} is not finite")));
                }
                values.push(v);
            }
        }
        if labels.is_empty() {
            return Err(parse_err(2, "no data rows".into()));
        }
        let n = labels.len();
        Self::new(
            name,
            DataMatrix::new(n, d, values)?,
            LabelVector::from_labels(labels)?,
            0,
        )
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io {
        path: "<csv>".into(),
        source: std::io::Error::other(e.to_string()),
    }
}

/// Seeded stratified split holding out exactly `test_count` samples.
///
/// Per-class quotas follow the class proportions; leftover slots go to the
/// classes with the largest fractional remainders (lower class index first).
/// Returns `(train, test)` index lists, each ascending.
pub fn stratified_split(
    labels: &LabelVector,
    test_count: usize,
    rng: &RngStream,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = labels.len();
    if test_count == 0 || test_count >= n {
        return Err(invalid(format!("test count {test_count} must lie in 1..{n}")));
    }
    let members = labels.class_members();
    let frac = test_count as f64 / n as f64;
    let exact: Vec<f64> = members.iter().map(|m| m.len() as f64 * frac).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = test_count - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if quota[c] < members[c].len() {
            quota[c] += 1;
            remaining -= 1;
        }
    }
    let mut train = Vec::with_capacity(n - test_count);
    let mut test = Vec::with_capacity(test_count);
    for (c, m) in members.iter().enumerate() {
        let mut m = m.clone();
        rng.derive("stratified-split", c as u64).shuffle(&mut m);
        test.extend_from_slice(&m[..quota[c]]);
        train.extend_from_slice(&m[quota[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Seeded stratified assignment into `k` folds; every fold receives every
/// class. Returns the held-out indices of each fold, ascending.
pub fn stratified_folds(labels: &LabelVector, k: usize, rng: &RngStream) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(invalid(format!("need at least 2 folds, got {k}")));
    }
    labels.require_class_sizes(k)?;
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for (c, m) in labels.class_members().into_iter().enumerate() {
        let mut m = m;
        rng.derive("stratified-folds", c as u64).shuffle(&mut m);
        for i in m {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Complement of a sorted index set within `0..n`.
pub fn complement(n: usize, held_out: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in held_out {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.5, -1.0], vec![0.125, 1e-7]]).unwrap();
        Dataset::new("toy", x, LabelVector::new(vec![0, 1, 1], 2).unwrap(), 5).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(DataMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DataMatrix::new(0, 2, vec![]).is_err());
        assert!(DataMatrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn label_vector_validation() {
        assert!(LabelVector::new(vec![0, 0], 1).is_err());
        assert!(LabelVector::new(vec![0, 3], 3).is_err());
        let l = LabelVector::new(vec![0, 2, 2], 3).unwrap();
        assert_eq!(l.class_counts(), vec![1, 0, 2]);
        assert!(l.require_class_sizes(1).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = toy();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,f0,f1\n"));
        let back = Dataset::read_csv(buf.as_slice(), "mem", "toy").unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let text = "label,f0\n0,1.0\n1,abc\n";
        match Dataset::read_csv(text.as_bytes(), "mem", "x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "label,f0\n0,1.0\n-1,2.0\n";
        assert!(matches!(
            Dataset::read_csv(text.as_bytes(), "mem", "x"),
            Err(Error::Parse { line: 3, .. })
        ));
        let text = "label,f0,f1\n0,1.0\n";
        assert!(matches!(
            Dataset::read_csv(text.as_bytes(), "mem", "x"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn missing_file_reports_schema() {
        let err = Dataset::load_csv(Path::new("/nonexistent/digits.csv"), "d").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::NotFound { .. }));
        assert!(msg.contains("label,f0,f1"), "{msg}");
    }

    #[test]
    fn stratified_split_exact_count() {
        let labels: Vec<usize> = (0..1797).map(|i| (i * 7 + i / 13) % 10).collect();
        let l = LabelVector::new(labels, 10).unwrap();
        let (train, test) = stratified_split(&l, 503, &RngStream::new(42, 0)).unwrap();
        assert_eq!(test.len(), 503);
        assert_eq!(train.len(), 1294);
        let tl = l.select(&test);
        assert!(tl.class_counts().iter().all(|&c| c >= 45));
    }

    #[test]
    fn folds_cover_every_class() {
        let l = LabelVector::new((0..30).map(|i| i % 3).collect(), 3).unwrap();
        let folds = stratified_folds(&l, 5, &RngStream::new(1, 0)).unwrap();
        assert_eq!(folds.len(), 5);
        let total: usize = folds.iter().map(Vec::len).sum();
        assert_eq!(total, 30);
        for f in &folds {
            assert!(l.select(f).class_counts().iter().all(|&c| c > 0));
        }
        let small = LabelVector::new(vec![0, 0, 0, 1], 2).unwrap();
        assert!(stratified_folds(&small, 2, &RngStream::new(1, 0)).is_err());
    }
}
