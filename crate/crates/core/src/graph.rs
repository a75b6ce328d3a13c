//! Feature/label composite graph.
//!
//! Feature nodes are joined by a Gaussian kernel over feature columns, label
//! nodes by the same kernel over label columns, and feature-label edges are
//! weighted by binned mutual information. Each of the four blocks is turned
//! into a row-stochastic transition matrix for the walker.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::data::write_matrix_csv;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default number of equal-frequency bins for feature discretization.
pub const DEFAULT_BINS: usize = 5;

/// How the kernel width is chosen for each of the two adjacency graphs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPolicy<T> {
    /// Median of the nonzero pairwise Euclidean distances between columns.
    Median,
    Fixed(T),
}

#[derive(Debug, Clone)]
pub struct RelevanceGraph<T> {
    pub a_features: Array2<T>,
    pub a_labels: Array2<T>,
    /// Raw mutual information in nats, `d × c`.
    pub mi_raw: Array2<T>,
    /// `mi_raw` min-max normalized over the whole matrix.
    pub mi: Array2<T>,
    pub p_features: Array2<T>,
    pub p_labels: Array2<T>,
    pub p_fl: Array2<T>,
    pub p_lf: Array2<T>,
    pub sigma_features: T,
    pub sigma_labels: T,
}

impl<T: Scalar> RelevanceGraph<T> {
    pub fn n_features(&self) -> usize {
        self.p_features.nrows()
    }

    pub fn n_labels(&self) -> usize {
        self.p_labels.nrows()
    }

    /// Writes every matrix of the graph as `<name>.csv` under `dir`.
    pub fn dump_csv(&self, dir: &Path) -> Result<()> {
        let items = [
            ("a_features", &self.a_features),
            ("a_labels", &self.a_labels),
            ("mi_raw", &self.mi_raw),
            ("mi", &self.mi),
            ("p_features", &self.p_features),
            ("p_labels", &self.p_labels),
            ("p_fl", &self.p_fl),
            ("p_lf", &self.p_lf),
        ];
        for (name, m) in items {
            let path = dir.join(format!("{name}.csv"));
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let comments = [
                format!("matrix={name}"),
                format!("sigma_features={}", self.sigma_features),
                format!("sigma_labels={}", self.sigma_labels),
            ];
            write_matrix_csv(BufWriter::new(f), m.view(), &comments).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Squared Euclidean distances between every pair of columns of `data`.
fn column_sq_distances<T: Scalar>(data: ArrayView2<T>) -> Array2<T> {
    let cols: Vec<ArrayView1<T>> = data.axis_iter(Axis(1)).collect();
    let m = cols.len();
    let rows: Vec<Vec<T>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..m)
                .map(|j| {
                    cols[i]
                        .iter()
                        .zip(cols[j].iter())
                        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
                })
                .collect()
        })
        .collect();
    Array2::from_shape_fn((m, m), |(i, j)| rows[i][j])
}

/// Median of the nonzero pairwise Euclidean distances between the columns of
/// `data`; 1 when every pair coincides.
pub fn median_column_distance<T: Scalar>(data: ArrayView2<T>) -> T {
    let sq = column_sq_distances(data);
    let m = sq.nrows();
    let mut dists: Vec<T> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .map(|(i, j)| sq[[i, j]].sqrt())
        .filter(|&v| v > T::zero())
        .collect();
    if dists.is_empty() {
        return T::one();
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mid = dists.len() / 2;
    if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        (dists[mid - 1] + dists[mid]) / T::of(2.0)
    }
}

/// Gaussian-kernel similarity between the columns of `data`, with the
/// diagonal forced to zero.
pub fn gaussian_adjacency<T: Scalar>(data: ArrayView2<T>, sigma: T) -> Result<Array2<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::Argument(format!("kernel width must be positive, got {sigma}")));
    }
    let denom = T::of(2.0) * sigma * sigma;
    let mut a = column_sq_distances(data).mapv(|d2| (-d2 / denom).exp());
    a.diag_mut().fill(T::zero());
    Ok(a)
}

/// Equal-frequency bin index for every value of `column`.
///
/// Cut points sit at the `b·n/bins` order statistics; a value lands in the
/// bin counting how many cut points it reaches, so equal values always share
/// a bin and a constant column occupies a single bin.
pub fn discretize_equal_frequency<T: Scalar>(column: ArrayView1<T>, bins: usize) -> Vec<usize> {
    let n = column.len();
    let mut sorted: Vec<T> = column.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
    let cuts: Vec<T> = (1..bins).map(|b| sorted[(b * n / bins).min(n - 1)]).collect();
    column
        .iter()
        .map(|&v| cuts.iter().filter(|&&c| v >= c).count())
        .collect()
}

/// Plug-in mutual information (nats) between two discrete samples.
pub fn discrete_mutual_information<T: Scalar>(a: &[usize], b: &[usize]) -> T {
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; ka * kb];
    let mut pa = vec![0usize; ka];
    let mut pb = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * kb + y] += 1;
        pa[x] += 1;
        pb[y] += 1;
    }
    let nt = T::of_usize(n);
    let mut mi = T::zero();
    for x in 0..ka {
        for y in 0..kb {
            let nxy = joint[x * kb + y];
            if nxy == 0 {
                continue;
            }
            let pxy = T::of_usize(nxy) / nt;
            let ratio = T::of_usize(nxy) * nt / (T::of_usize(pa[x]) * T::of_usize(pb[y]));
            mi += pxy * ratio.ln();
        }
    }
    mi
}

/// Raw feature/label mutual information, `d × c`, in nats. Features are
/// binned into `bins` equal-frequency bins; labels are read as 0/1.
pub fn mutual_information_raw<T: Scalar>(x: ArrayView2<T>, y: ArrayView2<T>, bins: usize) -> Result<Array2<T>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Argument(format!("mutual information needs n >= 2, got {n}")));
    }
    if bins < 2 {
        return Err(Error::Argument(format!("need at least 2 bins, got {bins}")));
    }
    if y.nrows() != n {
        return Err(Error::Shape(format!("X has {n} rows, Y has {}", y.nrows())));
    }
    let features: Vec<Vec<usize>> = x
        .axis_iter(Axis(1))
        .into_par_iter()
        .map(|col| discretize_equal_frequency(col, bins))
        .collect();
    let labels: Vec<Vec<usize>> = y
        .axis_iter(Axis(1))
        .map(|col| col.iter().map(|&v| usize::from(v != T::zero())).collect())
        .collect();
    let rows: Vec<Vec<T>> = features
        .par_iter()
        .map(|f| labels.iter().map(|l| discrete_mutual_information(f, l)).collect())
        .collect();
    Ok(Array2::from_shape_fn((x.ncols(), y.ncols()), |(i, j)| rows[i][j]))
}

/// Min-max normalization over the whole matrix; a constant matrix maps to
/// all zeros.
pub fn min_max_normalize<T: Scalar>(m: &Array2<T>) -> Array2<T> {
    let lo = m.iter().copied().fold(T::infinity(), T::min);
    let hi = m.iter().copied().fold(T::neg_infinity(), T::max);
    let range = hi - lo;
    if !(range > T::zero()) {
        return Array2::zeros(m.raw_dim());
    }
    m.mapv(|v| (v - lo) / range)
}

/// Mutual information matrix scaled to `[0, 1]`.
pub fn estimate_mi<T: Scalar>(x: ArrayView2<T>, y: ArrayView2<T>, bins: usize) -> Result<Array2<T>> {
    Ok(min_max_normalize(&mutual_information_raw(x, y, bins)?))
}

/// Divides each row by its sum; an all-zero row becomes uniform.
pub fn row_normalize<T: Scalar>(m: ArrayView2<T>) -> Result<Array2<T>> {
    if let Some(v) = m.iter().find(|&&v| v < T::zero() || !v.is_finite()) {
        return Err(Error::Argument(format!(
            "row_normalize needs finite non-negative entries, got {v}"
        )));
    }
    let cols = m.ncols();
    let mut out = m.to_owned();
    for mut row in out.rows_mut() {
        let sum: T = row.iter().copied().sum();
        if sum > T::zero() {
            row.mapv_inplace(|v| v / sum);
        } else {
            row.fill(T::one() / T::of_usize(cols));
        }
    }
    Ok(out)
}

fn resolve_sigma<T: Scalar>(policy: SigmaPolicy<T>, data: ArrayView2<T>) -> T {
    match policy {
        SigmaPolicy::Median => median_column_distance(data),
        SigmaPolicy::Fixed(s) => s,
    }
}

/// Builds the composite graph from a feature matrix `x` (`n × d`) and a
/// binary label matrix `y` (`n × c`).
pub fn build_graph<T: Scalar>(
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    bins: usize,
    sigma_policy: SigmaPolicy<T>,
) -> Result<RelevanceGraph<T>> {
    if x.ncols() < 2 || y.ncols() < 2 {
        return Err(Error::Argument(format!(
            "graph needs at least 2 features and 2 labels, got {} and {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let sigma_features = resolve_sigma(sigma_policy, x);
    let sigma_labels = resolve_sigma(sigma_policy, y);
    let a_features = gaussian_adjacency(x, sigma_features)?;
    let a_labels = gaussian_adjacency(y, sigma_labels)?;
    let mi_raw = mutual_information_raw(x, y, bins)?;
    let mi = min_max_normalize(&mi_raw);
    let p_features = row_normalize(a_features.view())?;
    let p_labels = row_normalize(a_labels.view())?;
    let p_fl = row_normalize(mi.view())?;
    let p_lf = row_normalize(mi.t())?;
    Ok(RelevanceGraph {
        a_features,
        a_labels,
        mi_raw,
        mi,
        p_features,
        p_labels,
        p_fl,
        p_lf,
        sigma_features,
        sigma_labels,
    })
}
