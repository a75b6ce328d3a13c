//! Multi-label classifiers and metrics for judging a feature ranking.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{FeatureRanking, MultiLabelDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Binary label matrix.
pub type LabelMatrix = Array2<u8>;

pub fn binarize<T: Scalar>(y: ArrayView2<T>) -> LabelMatrix {
    y.mapv(|v| u8::from(v != T::zero()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub y_pred: LabelMatrix,
    /// Per-label confidence: vote fraction for kNN, posterior for MLkNN.
    pub y_scores: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classifier {
    /// Per-label majority vote among the `k` nearest neighbors.
    Knn {
        k: usize,
    },
    Mlknn {
        k: usize,
        smoothing: f64,
    },
}

impl Classifier {
    pub const KNN3: Classifier = Classifier::Knn { k: 3 };
    pub const MLKNN10: Classifier = Classifier::Mlknn { k: 10, smoothing: 1.0 };
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classifier::Knn { k } => write!(f, "knn{k}"),
            Classifier::Mlknn { k, smoothing } if *smoothing == 1.0 => write!(f, "mlknn{k}"),
            Classifier::Mlknn { k, smoothing } => write!(f, "mlknn{k}s{smoothing}"),
        }
    }
}

impl FromStr for Classifier {
    type Err = Error;

    /// Accepts `knn<k>` and `mlknn<k>` (Laplace smoothing 1).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("unknown classifier {s:?}, expected knn<k> or mlknn<k>"));
        let s = s.trim().to_ascii_lowercase();
        if let Some(k) = s.strip_prefix("mlknn") {
            let k = k.parse().map_err(|_| bad())?;
            Ok(Classifier::Mlknn { k, smoothing: 1.0 })
        } else if let Some(k) = s.strip_prefix("knn") {
            Ok(Classifier::Knn {
                k: k.parse().map_err(|_| bad())?,
            })
        } else {
            Err(bad())
        }
    }
}

/// Squared distances between every query row and every reference row, summed
/// over `features` in the given order.
pub fn sq_distances<T: Scalar>(queries: ArrayView2<T>, reference: ArrayView2<T>, features: &[usize]) -> Array2<f64> {
    let mut dist = Array2::zeros((queries.nrows(), reference.nrows()));
    add_features(&mut dist, queries, reference, features);
    dist
}

/// Adds the contributions of `features` to a squared-distance matrix, one
/// feature at a time, so a prefix computed earlier extends bit-identically.
pub fn add_features<T: Scalar>(
    dist: &mut Array2<f64>,
    queries: ArrayView2<T>,
    reference: ArrayView2<T>,
    features: &[usize],
) {
    dist.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(queries.axis_iter(Axis(0)))
        .for_each(|(mut drow, q)| {
            for &f in features {
                let qf = q[f].as_f64();
                for (dv, r) in drow.iter_mut().zip(reference.axis_iter(Axis(0))) {
                    let diff = qf - r[f].as_f64();
                    *dv += diff * diff;
                }
            }
        });
}

/// Indices of the `k` closest reference rows, nearest first, ties broken by
/// the smaller index. `exclude` drops one reference row (leave-one-out).
pub fn nearest(dist_row: &[f64], k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist_row.len()).filter(|&i| Some(i) != exclude).collect();
    let cmp = |a: &usize, b: &usize| dist_row[*a].total_cmp(&dist_row[*b]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx
}

fn check_inputs(n_train: usize, y_rows: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if y_rows != n_train {
        return Err(Error::Shape(format!("{n_train} training rows but {y_rows} label rows")));
    }
    if k > n_train {
        return Err(Error::Argument(format!("k = {k} exceeds {n_train} training rows")));
    }
    Ok(())
}

fn check_selection(selected: &[usize], d: usize) -> Result<()> {
    if selected.is_empty() {
        return Err(Error::Argument("no features selected".into()));
    }
    if let Some(&f) = selected.iter().find(|&&f| f >= d) {
        return Err(Error::Argument(format!(
            "feature index {f} out of range for {d} features"
        )));
    }
    Ok(())
}

/// kNN from a precomputed `test × train` squared-distance matrix.
pub fn knn_from_distances(test_train: &Array2<f64>, y_train: &LabelMatrix, k: usize) -> Result<PredictionSet> {
    check_inputs(test_train.ncols(), y_train.nrows(), k)?;
    let c = y_train.ncols();
    let rows: Vec<(Vec<u8>, Vec<f64>)> = test_train
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|drow| {
            let nb = nearest(drow.as_slice().expect("contiguous rows"), k, None);
            (0..c)
                .map(|j| {
                    let votes = nb.iter().filter(|&&i| y_train[[i, j]] == 1).count();
                    (u8::from(2 * votes > k), votes as f64 / k as f64)
                })
                .unzip()
        })
        .collect();
    Ok(collect_predictions(rows, c))
}

fn collect_predictions(rows: Vec<(Vec<u8>, Vec<f64>)>, c: usize) -> PredictionSet {
    let n = rows.len();
    let mut y_pred = Array2::zeros((n, c));
    let mut y_scores = Array2::zeros((n, c));
    for (i, (p, s)) in rows.into_iter().enumerate() {
        for j in 0..c {
            y_pred[[i, j]] = p[j];
            y_scores[[i, j]] = s[j];
        }
    }
    PredictionSet { y_pred, y_scores }
}

/// Multi-label kNN on the `selected` feature columns: label `j` is predicted
/// iff more than half of the `k` neighbors carry it.
pub fn knn_predict<T: Scalar>(
    x_train: ArrayView2<T>,
    y_train: &LabelMatrix,
    x_test: ArrayView2<T>,
    k: usize,
    selected: &[usize],
) -> Result<PredictionSet> {
    check_selection(selected, x_train.ncols())?;
    check_inputs(x_train.nrows(), y_train.nrows(), k)?;
    knn_from_distances(&sq_distances(x_test, x_train, selected), y_train, k)
}

/// Fitted MLkNN statistics.
#[derive(Debug, Clone)]
pub struct MlknnModel {
    pub k: usize,
    /// `P(H_j = 1)` per label.
    pub prior: Vec<f64>,
    /// `P(E_δ | H_j = 1)`, indexed `[j][δ]` for `δ = 0..=k`.
    pub likelihood_pos: Vec<Vec<f64>>,
    /// `P(E_δ | H_j = 0)`.
    pub likelihood_neg: Vec<Vec<f64>>,
}

impl MlknnModel {
    /// Estimates priors and neighbor-count likelihoods from the training set,
    /// counting each training row's neighbors with itself left out.
    pub fn fit(train_train: &Array2<f64>, y_train: &LabelMatrix, k: usize, smoothing: f64) -> Result<Self> {
        let n = y_train.nrows();
        check_inputs(train_train.ncols(), n, k)?;
        if k >= n {
            return Err(Error::Argument(format!("MLkNN needs k < {n} training rows, got {k}")));
        }
        if !(smoothing > 0.0) {
            return Err(Error::Argument(format!("smoothing must be positive, got {smoothing}")));
        }
        let c = y_train.ncols();
        let s = smoothing;
        let prior = (0..c)
            .map(|j| {
                let pos = y_train.column(j).iter().filter(|&&v| v == 1).count() as f64;
                (s + pos) / (2.0 * s + n as f64)
            })
            .collect();
        let counts: Vec<Vec<usize>> = train_train
            .axis_iter(Axis(0))
            .into_par_iter()
            .enumerate()
            .map(|(i, drow)| {
                let nb = nearest(drow.as_slice().expect("contiguous rows"), k, Some(i));
                (0..c)
                    .map(|j| nb.iter().filter(|&&m| y_train[[m, j]] == 1).count())
                    .collect()
            })
            .collect();
        let mut hit = vec![vec![0usize; k + 1]; c];
        let mut miss = vec![vec![0usize; k + 1]; c];
        for (i, row) in counts.iter().enumerate() {
            for j in 0..c {
                if y_train[[i, j]] == 1 {
                    hit[j][row[j]] += 1;
                } else {
                    miss[j][row[j]] += 1;
                }
            }
        }
        let smooth = |table: &[usize]| {
            let total: usize = table.iter().sum();
            table
                .iter()
                .map(|&cnt| (s + cnt as f64) / (s * (k as f64 + 1.0) + total as f64))
                .collect::<Vec<_>>()
        };
        Ok(MlknnModel {
            k,
            prior,
            likelihood_pos: hit.iter().map(|t| smooth(t)).collect(),
            likelihood_neg: miss.iter().map(|t| smooth(t)).collect(),
        })
    }

    /// MAP decision per label from a `test × train` distance matrix.
    pub fn predict(&self, test_train: &Array2<f64>, y_train: &LabelMatrix) -> PredictionSet {
        let c = self.prior.len();
        let rows: Vec<(Vec<u8>, Vec<f64>)> = test_train
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|drow| {
                let nb = nearest(drow.as_slice().expect("contiguous rows"), self.k, None);
                (0..c)
                    .map(|j| {
                        let count = nb.iter().filter(|&&m| y_train[[m, j]] == 1).count();
                        let pos = self.prior[j] * self.likelihood_pos[j][count];
                        let neg = (1.0 - self.prior[j]) * self.likelihood_neg[j][count];
                        (u8::from(pos > neg), pos / (pos + neg))
                    })
                    .unzip()
            })
            .collect();
        collect_predictions(rows, c)
    }
}

pub fn mlknn_predict<T: Scalar>(
    x_train: ArrayView2<T>,
    y_train: &LabelMatrix,
    x_test: ArrayView2<T>,
    k: usize,
    smoothing: f64,
    selected: &[usize],
) -> Result<PredictionSet> {
    check_selection(selected, x_train.ncols())?;
    check_inputs(x_train.nrows(), y_train.nrows(), k)?;
    let model = MlknnModel::fit(&sq_distances(x_train, x_train, selected), y_train, k, smoothing)?;
    Ok(model.predict(&sq_distances(x_test, x_train, selected), y_train))
}

struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

fn label_counts(y_true: ArrayView2<u8>, y_pred: ArrayView2<u8>, j: usize) -> Counts {
    let mut c = Counts { tp: 0, fp: 0, fn_: 0 };
    for (&t, &p) in y_true.column(j).iter().zip(y_pred.column(j)) {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (1, 0) => c.fn_ += 1,
            _ => {}
        }
    }
    c
}

fn f1(c: &Counts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * c.tp as f64 / denom as f64
    }
}

fn assert_same_shape(y_true: ArrayView2<u8>, y_pred: ArrayView2<u8>) {
    assert_eq!(y_true.dim(), y_pred.dim(), "label matrices must have equal shapes");
}

/// F1 over true/false positive counts pooled across all labels.
pub fn micro_f1(y_true: ArrayView2<u8>, y_pred: ArrayView2<u8>) -> f64 {
    assert_same_shape(y_true, y_pred);
    let mut total = Counts { tp: 0, fp: 0, fn_: 0 };
    for j in 0..y_true.ncols() {
        let c = label_counts(y_true, y_pred, j);
        total.tp += c.tp;
        total.fp += c.fp;
        total.fn_ += c.fn_;
    }
    f1(&total)
}

/// Unweighted mean of per-label F1; a label with no true or predicted
/// positives scores 0.
pub fn macro_f1(y_true: ArrayView2<u8>, y_pred: ArrayView2<u8>) -> f64 {
    assert_same_shape(y_true, y_pred);
    let c = y_true.ncols();
    if c == 0 {
        return 0.0;
    }
    (0..c).map(|j| f1(&label_counts(y_true, y_pred, j))).sum::<f64>() / c as f64
}

pub fn hamming_loss(y_true: ArrayView2<u8>, y_pred: ArrayView2<u8>) -> f64 {
    assert_same_shape(y_true, y_pred);
    let wrong = y_true.iter().zip(y_pred.iter()).filter(|(a, b)| a != b).count();
    wrong as f64 / y_true.len().max(1) as f64
}

pub fn zero_one_loss(y_true: ArrayView2<u8>, y_pred: ArrayView2<u8>) -> f64 {
    assert_same_shape(y_true, y_pred);
    let wrong = y_true
        .rows()
        .into_iter()
        .zip(y_pred.rows())
        .filter(|(a, b)| a != b)
        .count();
    wrong as f64 / y_true.nrows().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub hamming_loss: f64,
    pub zero_one_loss: f64,
}

impl Metrics {
    pub fn compute(y_true: ArrayView2<u8>, y_pred: ArrayView2<u8>) -> Self {
        Metrics {
            micro_f1: micro_f1(y_true, y_pred),
            macro_f1: macro_f1(y_true, y_pred),
            hamming_loss: hamming_loss(y_true, y_pred),
            zero_one_loss: zero_one_loss(y_true, y_pred),
        }
    }

    fn as_array(&self) -> [f64; 4] {
        [self.micro_f1, self.macro_f1, self.hamming_loss, self.zero_one_loss]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Metrics {
            micro_f1: a[0],
            macro_f1: a[1],
            hamming_loss: a[2],
            zero_one_loss: a[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub feature_count: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Per-step metrics plus their mean and population standard deviation over
/// the feature-count steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classifier: String,
    pub aggregation: &'static str,
    pub steps: Vec<StepRecord>,
    pub mean: Metrics,
    pub std: Metrics,
}

impl EvalReport {
    pub fn from_steps(classifier: Classifier, steps: Vec<StepRecord>) -> Self {
        let n = steps.len().max(1) as f64;
        let mut mean = [0.0; 4];
        for s in &steps {
            for (m, v) in mean.iter_mut().zip(s.metrics.as_array()) {
                *m += v / n;
            }
        }
        let mut var = [0.0; 4];
        for s in &steps {
            for ((acc, v), m) in var.iter_mut().zip(s.metrics.as_array()).zip(mean) {
                *acc += (v - m) * (v - m) / n;
            }
        }
        EvalReport {
            classifier: classifier.to_string(),
            aggregation: "feature-count steps",
            steps,
            mean: Metrics::from_array(mean),
            std: Metrics::from_array(var.map(f64::sqrt)),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "feature_count,micro_f1,macro_f1,hamming_loss,zero_one_loss")?;
        for s in &self.steps {
            let m = &s.metrics;
            writeln!(
                w,
                "{},{},{},{},{}",
                s.feature_count, m.micro_f1, m.macro_f1, m.hamming_loss, m.zero_one_loss
            )?;
        }
        Ok(())
    }
}

/// Which feature counts the protocol evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    /// Every count `1..=d` when `d < full_below`, top-percent steps otherwise.
    Auto {
        full_below: usize,
    },
    /// `max(1, round(p·d/100))` for `p = 1..=max_percent`, deduplicated.
    TopPercent {
        max_percent: usize,
    },
    AllFeatures,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Auto { full_below: 100 }
    }
}

impl StepPolicy {
    pub fn feature_counts(&self, d: usize) -> Vec<usize> {
        match *self {
            StepPolicy::Auto { full_below } if d < full_below => (1..=d).collect(),
            StepPolicy::Auto { .. } => StepPolicy::TopPercent { max_percent: 20 }.feature_counts(d),
            StepPolicy::AllFeatures => (1..=d).collect(),
            StepPolicy::TopPercent { max_percent } => {
                let mut out: Vec<usize> = (1..=max_percent)
                    .map(|p| ((p * d) as f64 / 100.0).round().max(1.0).min(d as f64) as usize)
                    .collect();
                out.dedup();
                out
            }
        }
    }
}

/// Evaluates growing prefixes of `ranking` on the dataset's test half.
pub fn protocol_eval<T: Scalar>(
    dataset: &MultiLabelDataset<T>,
    ranking: &FeatureRanking<T>,
    classifier: Classifier,
    policy: StepPolicy,
) -> Result<EvalReport> {
    let d = dataset.n_features();
    if ranking.len() != d {
        return Err(Error::Shape(format!(
            "ranking covers {} features, dataset has {d}",
            ranking.len()
        )));
    }
    let y_train = binarize(dataset.y_train.view());
    let y_test = binarize(dataset.y_test.view());
    let (xtr, xte) = (dataset.x_train.view(), dataset.x_test.view());
    let mut test_train = Array2::zeros((xte.nrows(), xtr.nrows()));
    let mut train_train = match classifier {
        Classifier::Mlknn { .. } => Some(Array2::zeros((xtr.nrows(), xtr.nrows()))),
        Classifier::Knn { .. } => None,
    };
    let mut used = 0;
    let mut steps = Vec::new();
    for count in policy.feature_counts(d) {
        let added = &ranking.order[used..count];
        add_features(&mut test_train, xte, xtr, added);
        if let Some(tt) = train_train.as_mut() {
            add_features(tt, xtr, xtr, added);
        }
        used = count;
        let pred = match classifier {
            Classifier::Knn { k } => knn_from_distances(&test_train, &y_train, k)?,
            Classifier::Mlknn { k, smoothing } => {
                let tt = train_train.as_ref().expect("allocated for MLkNN");
                MlknnModel::fit(tt, &y_train, k, smoothing)?.predict(&test_train, &y_train)
            }
        };
        steps.push(StepRecord {
            feature_count: count,
            metrics: Metrics::compute(y_test.view(), pred.y_pred.view()),
        });
    }
    Ok(EvalReport::from_steps(classifier, steps))
}
