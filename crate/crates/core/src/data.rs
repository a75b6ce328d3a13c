//! Dense matrices, multi-label datasets, and CSV/TSV ingestion.
//!
//! Data files are plain delimited text: one sample per line, numeric cells,
//! `,` or tab separated, with the label columns trailing the feature columns.
//! Blank lines and lines starting with `#` are skipped. A manifest file next
//! to the data carries a single `label_count=<int>` line.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
pub type Matrix<T> = Array2<T>;

/// Paired feature and label matrices split into a train and a test half.
#[derive(Debug, Clone)]
pub struct MultiLabelDataset<T> {
    pub name: String,
    pub x_train: Matrix<T>,
    pub y_train: Matrix<T>,
    pub x_test: Matrix<T>,
    pub y_test: Matrix<T>,
}

impl<T: Scalar> MultiLabelDataset<T> {
    pub fn new(
        name: impl Into<String>,
        x_train: Matrix<T>,
        y_train: Matrix<T>,
        x_test: Matrix<T>,
        y_test: Matrix<T>,
    ) -> Result<Self> {
        let ds = MultiLabelDataset {
            name: name.into(),
            x_train,
            y_train,
            x_test,
            y_test,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let (n_tr, d) = self.x_train.dim();
        let (n_te, d_te) = self.x_test.dim();
        let c = self.y_train.ncols();
        if d == 0 || d != d_te {
            return Err(Error::Validation(format!(
                "feature counts differ or are zero: train {d}, test {d_te}"
            )));
        }
        if c < 2 || self.y_test.ncols() != c {
            return Err(Error::Validation(format!(
                "need at least 2 labels with equal counts: train {c}, test {}",
                self.y_test.ncols()
            )));
        }
        if n_tr == 0 || n_te == 0 {
            return Err(Error::Validation("train and test halves must be nonempty".into()));
        }
        if self.y_train.nrows() != n_tr || self.y_test.nrows() != n_te {
            return Err(Error::Validation("feature and label row counts differ".into()));
        }
        for (half, y) in [("train", &self.y_train), ("test", &self.y_test)] {
            if let Some(v) = y.iter().find(|&&v| v != T::zero() && v != T::one()) {
                return Err(Error::Validation(format!("non-binary {half} label value {v}")));
            }
        }
        for m in [&self.x_train, &self.x_test] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation("non-finite feature value".into()));
            }
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.x_train.ncols()
    }

    pub fn n_labels(&self) -> usize {
        self.y_train.ncols()
    }

    /// Standardizes both halves with the training-column statistics.
    pub fn standardized(&self) -> Self {
        let scaler = ColumnScaler::standard(self.x_train.view());
        MultiLabelDataset {
            name: self.name.clone(),
            x_train: scaler.apply(self.x_train.view()),
            y_train: self.y_train.clone(),
            x_test: scaler.apply(self.x_test.view()),
            y_test: self.y_test.clone(),
        }
    }

    /// Carves a validation dataset out of the training half only: a seeded
    /// shuffle, `train_fraction` of the rows for fitting, the rest held out.
    pub fn validation_split(&self, train_fraction: f64, seed: u64) -> Result<Self> {
        let n = self.x_train.nrows();
        if !(0.0..1.0).contains(&train_fraction) || n < 2 {
            return Err(Error::Argument(format!(
                "cannot split {n} training rows with fraction {train_fraction}"
            )));
        }
        let n_fit = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (fit, held) = idx.split_at(n_fit);
        MultiLabelDataset::new(
            format!("{}/validation", self.name),
            self.x_train.select(Axis(0), fit),
            self.y_train.select(Axis(0), fit),
            self.x_train.select(Axis(0), held),
            self.y_train.select(Axis(0), held),
        )
    }
}

/// Parses delimited numeric text. `origin` only labels error messages.
pub fn parse_matrix<T: Scalar>(text: &str, origin: &Path) -> Result<Matrix<T>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let delim = if line.contains('\t') { '\t' } else { ',' };
        let mut count = 0;
        for cell in line.split(delim) {
            let cell = cell.trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line_no, format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value {cell:?}")));
            }
            values.push(T::of(v));
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => return Err(parse_err(line_no, format!("row has {count} columns, expected {w}"))),
            _ => {}
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Shape(format!("{}: {e}", origin.display())))
}

pub fn read_matrix<T: Scalar>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

/// Reads `label_count=<int>` from a manifest file.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in text.lines().enumerate() {
        if let Some(v) = line.trim().strip_prefix("label_count=") {
            return v.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("bad label_count {v:?}"),
            });
        }
    }
    Err(Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: "missing label_count=<int> line".into(),
    })
}

fn split_labels<T: Scalar>(m: Matrix<T>, label_count: usize, path: &Path) -> Result<(Matrix<T>, Matrix<T>)> {
    let total = m.ncols();
    if label_count >= total {
        return Err(Error::Argument(format!(
            "{}: label_count {label_count} leaves no feature columns out of {total}",
            path.display()
        )));
    }
    let d = total - label_count;
    let x = m.slice(s![.., ..d]).to_owned();
    let y = m.slice(s![.., d..]).to_owned();
    Ok((x, y))
}

/// Loads a train/test pair whose last `label_count` columns are labels.
/// Feature values are returned unscaled.
pub fn load_dataset<T: Scalar>(
    train_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
    label_count: usize,
) -> Result<MultiLabelDataset<T>> {
    let (train_path, test_path) = (train_path.as_ref(), test_path.as_ref());
    let (x_train, y_train) = split_labels(read_matrix(train_path)?, label_count, train_path)?;
    let (x_test, y_test) = split_labels(read_matrix(test_path)?, label_count, test_path)?;
    let name = train_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    MultiLabelDataset::new(name, x_train, y_train, x_test, y_test)
}

/// Writes a matrix as CSV, preceded by `# `-prefixed comment lines.
/// Values use the shortest representation that parses back exactly.
pub fn write_matrix_csv<T: Scalar, W: Write>(mut w: W, m: ArrayView2<T>, comments: &[String]) -> std::io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    for row in m.rows() {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Per-column affine map `(v - offset) / scale`; columns with zero scale map
/// to zero.
#[derive(Debug, Clone)]
pub struct ColumnScaler<T> {
    offset: Vec<T>,
    scale: Vec<T>,
}

impl<T: Scalar> ColumnScaler<T> {
    /// Mean and population standard deviation of each column.
    pub fn standard(x: ArrayView2<T>) -> Self {
        let n = T::of_usize(x.nrows().max(1));
        let mut offset = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mean = col.iter().copied().sum::<T>() / n;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            offset.push(mean);
            scale.push(if is_constant(col.iter().copied()) {
                T::zero()
            } else {
                var.sqrt()
            });
        }
        ColumnScaler { offset, scale }
    }

    /// Column minimum and range, mapping the fitted data onto `[0, 1]`.
    pub fn min_max(x: ArrayView2<T>) -> Self {
        let mut offset = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let lo = col.iter().copied().fold(T::infinity(), T::min);
            let hi = col.iter().copied().fold(T::neg_infinity(), T::max);
            offset.push(lo);
            scale.push(hi - lo);
        }
        ColumnScaler { offset, scale }
    }

    pub fn apply(&self, x: ArrayView2<T>) -> Matrix<T> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (o, s) = (self.offset[j], self.scale[j]);
            col.mapv_inplace(|v| if s > T::zero() { (v - o) / s } else { T::zero() });
        }
        out
    }
}

fn is_constant<T: Scalar>(mut it: impl Iterator<Item = T>) -> bool {
    match it.next() {
        Some(first) => it.all(|v| v == first),
        None => true,
    }
}

/// Each column shifted to mean 0 and scaled to unit (population) standard
/// deviation; constant columns become all-zero.
pub fn column_standardize<T: Scalar>(x: ArrayView2<T>) -> Matrix<T> {
    ColumnScaler::standard(x).apply(x)
}

pub fn column_min_max<T: Scalar>(x: ArrayView2<T>) -> Matrix<T> {
    ColumnScaler::min_max(x).apply(x)
}

/// Feature indices sorted by descending score.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking<T> {
    /// Feature indices, best first.
    pub order: Vec<usize>,
    /// Score of each feature, indexed by feature.
    pub scores: Vec<T>,
}

impl<T: Scalar> FeatureRanking<T> {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The `m` best features, best first.
    pub fn top(&self, m: usize) -> &[usize] {
        &self.order[..m.min(self.order.len())]
    }

    /// Rebuilds a ranking from a stored order, checking that it is a
    /// permutation consistent with the scores.
    pub fn from_parts(order: Vec<usize>, scores: Vec<T>) -> Result<Self> {
        let d = scores.len();
        let mut seen = vec![false; d];
        if order.len() != d {
            return Err(Error::Validation(format!(
                "ranking lists {} features, scores cover {d}",
                order.len()
            )));
        }
        for &i in &order {
            if i >= d || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Validation(format!("ranking is not a permutation (index {i})")));
            }
        }
        if order.windows(2).any(|w| scores[w[0]] < scores[w[1]]) {
            return Err(Error::Validation("ranking order is not descending in score".into()));
        }
        Ok(FeatureRanking { order, scores })
    }
}

/// Stable descending sort of `scores`; ties keep the smaller index first.
pub fn rank_features<T: Scalar>(scores: &[T]) -> Result<FeatureRanking<T>> {
    if let Some(i) = scores.iter().position(|v| v.is_nan()) {
        return Err(Error::Argument(format!("score {i} is NaN")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("no NaN").then(a.cmp(&b)));
    Ok(FeatureRanking {
        order,
        scores: scores.to_vec(),
    })
}
