//! Random walks over the composite graph and the decayed mutual-information
//! association matrix they accumulate.
//!
//! Every walk owns a ChaCha8 stream selected by its walk index, so the result
//! does not depend on how walks are scheduled across threads. Walks are
//! processed in fixed-size batches; batch partial sums are added in batch
//! order.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{min_max_normalize, RelevanceGraph};
use crate::scalar::Scalar;

const WALKS_PER_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Feature(usize),
    Label(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    pub n_walks: usize,
    pub walk_length: usize,
    pub jump_prob: f64,
    pub decay_factor: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            n_walks: 1000,
            walk_length: 10,
            jump_prob: 0.5,
            decay_factor: 0.5,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_walks == 0 || self.walk_length == 0 {
            return Err(Error::Argument("n_walks and walk_length must be at least 1".into()));
        }
        for (name, v) in [("jump_prob", self.jump_prob), ("decay_factor", self.decay_factor)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Argument(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Nodes visited by one walk, start node included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkSequence {
    pub nodes: Vec<Node>,
}

/// Normalized association matrix `R_w`, `d × c`, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RwmiMatrix<T> {
    pub values: Array2<T>,
}

impl<T: Scalar> RwmiMatrix<T> {
    pub fn from_raw(raw: &Array2<T>) -> Self {
        RwmiMatrix {
            values: min_max_normalize(raw),
        }
    }
}

/// Draws an index from a probability row by inverse CDF.
fn sample_row<T: Scalar, R: Rng + ?Sized>(row: ArrayView1<T>, rng: &mut R) -> usize {
    let u = T::of(rng.random::<f64>());
    let mut acc = T::zero();
    let mut last_positive = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > T::zero() {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // rounding left the cumulative sum just below u
    last_positive
}

/// One transition: cross to the other side of the graph with probability
/// `jump_prob`, otherwise move within the current side.
pub fn step<T: Scalar, R: Rng + ?Sized>(current: Node, graph: &RelevanceGraph<T>, jump_prob: f64, rng: &mut R) -> Node {
    let jump = rng.random::<f64>() < jump_prob;
    match (current, jump) {
        (Node::Feature(f), true) => Node::Label(sample_row(graph.p_fl.row(f), rng)),
        (Node::Feature(f), false) => Node::Feature(sample_row(graph.p_features.row(f), rng)),
        (Node::Label(l), true) => Node::Feature(sample_row(graph.p_lf.row(l), rng)),
        (Node::Label(l), false) => Node::Label(sample_row(graph.p_labels.row(l), rng)),
    }
}

pub fn walk<T: Scalar, R: Rng + ?Sized>(
    start: Node,
    graph: &RelevanceGraph<T>,
    walk_length: usize,
    jump_prob: f64,
    rng: &mut R,
) -> WalkSequence {
    let mut nodes = Vec::with_capacity(walk_length + 1);
    nodes.push(start);
    let mut cur = start;
    for _ in 0..walk_length {
        cur = step(cur, graph, jump_prob, rng);
        nodes.push(cur);
    }
    WalkSequence { nodes }
}

/// Adds `decay^(j-i) · MI(f, l)` to `acc[f, l]` for every position pair
/// `i < j` of the walk holding one feature `f` and one label `l`. Repeated
/// co-occurrences are counted each time.
pub fn accumulate_pairs<T: Scalar>(walk: &WalkSequence, mi: ArrayView2<T>, decay_factor: f64, acc: &mut Array2<T>) {
    let decay = T::of(decay_factor);
    let nodes = &walk.nodes;
    for i in 0..nodes.len() {
        let mut weight = T::one();
        for j in (i + 1)..nodes.len() {
            weight *= decay;
            let pair = match (nodes[i], nodes[j]) {
                (Node::Feature(f), Node::Label(l)) | (Node::Label(l), Node::Feature(f)) => (f, l),
                _ => continue,
            };
            acc[pair] += weight * mi[pair];
        }
    }
}

/// Start node of walk `w`: feature vertices in round-robin order.
pub fn start_node(walk_index: usize, n_features: usize) -> Node {
    Node::Feature(walk_index % n_features)
}

/// RNG stream owned by walk `w`.
pub fn walk_rng(seed: u64, walk_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(walk_index as u64);
    rng
}

/// Unnormalized accumulator after all walks.
pub fn run_rwmi_raw<T: Scalar>(graph: &RelevanceGraph<T>, config: &WalkConfig) -> Result<Array2<T>> {
    config.validate()?;
    let (d, c) = (graph.n_features(), graph.n_labels());
    if d == 0 || c == 0 {
        return Err(Error::Argument(format!("graph has {d} features and {c} labels")));
    }
    let n_batches = config.n_walks.div_ceil(WALKS_PER_BATCH);
    let partials: Vec<Array2<T>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut acc = Array2::zeros((d, c));
            let end = ((b + 1) * WALKS_PER_BATCH).min(config.n_walks);
            for w in b * WALKS_PER_BATCH..end {
                let mut rng = walk_rng(config.seed, w);
                let seq = walk(start_node(w, d), graph, config.walk_length, config.jump_prob, &mut rng);
                accumulate_pairs(&seq, graph.mi.view(), config.decay_factor, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = Array2::zeros((d, c));
    for p in &partials {
        total += p;
    }
    Ok(total)
}

/// Runs all walks and min-max normalizes the accumulator into `R_w`.
pub fn run_rwmi<T: Scalar>(graph: &RelevanceGraph<T>, config: &WalkConfig) -> Result<RwmiMatrix<T>> {
    Ok(RwmiMatrix::from_raw(&run_rwmi_raw(graph, config)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, SigmaPolicy};
    use ndarray::array;

    fn toy_graph() -> RelevanceGraph<f64> {
        let x = array![
            [0.1, 2.0, -1.0],
            [0.4, 1.5, 0.0],
            [0.9, 0.2, 0.3],
            [1.3, -0.5, 0.8],
            [1.7, -1.1, 1.9],
            [2.2, -2.0, 0.1]
        ];
        let y = array![[0.0, 1.0], [0.0, 1.0], [0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [1.0, 0.0]];
        build_graph(x.view(), y.view(), 3, SigmaPolicy::Median).unwrap()
    }

    #[test]
    fn one_hot_jump_is_deterministic() {
        let mut g = toy_graph();
        g.p_fl = array![[0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let mut rng = walk_rng(1, 0);
        for _ in 0..200 {
            assert_eq!(step(Node::Feature(0), &g, 1.0 - 1e-12, &mut rng), Node::Label(1));
        }
    }

    #[test]
    fn jump_frequency_matches_probability() {
        let g = toy_graph();
        let mut rng = walk_rng(7, 0);
        let n = 100_000;
        let jumps = (0..n)
            .filter(|_| matches!(step(Node::Feature(1), &g, 0.3, &mut rng), Node::Label(_)))
            .count();
        let freq = jumps as f64 / n as f64;
        assert!((freq - 0.3).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn seeded_walks_repeat() {
        let g = toy_graph();
        let a = walk(Node::Feature(2), &g, 25, 0.4, &mut walk_rng(9, 3));
        let b = walk(Node::Feature(2), &g, 25, 0.4, &mut walk_rng(9, 3));
        assert_eq!(a, b);
        assert_eq!(a.nodes.len(), 26);
    }

    #[test]
    fn pair_accumulation_examples() {
        let mut mi = Array2::<f64>::zeros((3, 2));
        mi[[0, 1]] = 0.8;
        let mut acc = Array2::zeros((3, 2));
        let w = WalkSequence {
            nodes: vec![Node::Feature(0), Node::Label(1)],
        };
        accumulate_pairs(&w, mi.view(), 0.5, &mut acc);
        assert!((acc[[0, 1]] - 0.4).abs() < 1e-15);

        let mi = Array2::from_elem((3, 2), 1.0);
        let mut acc = Array2::zeros((3, 2));
        let w = WalkSequence {
            nodes: vec![Node::Feature(0), Node::Feature(2), Node::Label(1)],
        };
        accumulate_pairs(&w, mi.view(), 0.5, &mut acc);
        assert_eq!(acc[[0, 1]], 0.25);
        assert_eq!(acc[[2, 1]], 0.5);
        assert_eq!(acc.sum(), 0.75);

        let mut acc = Array2::zeros((3, 2));
        let w = WalkSequence {
            nodes: vec![Node::Feature(0), Node::Feature(2), Node::Feature(1)],
        };
        accumulate_pairs(&w, mi.view(), 0.5, &mut acc);
        assert_eq!(acc.sum(), 0.0);
    }

    #[test]
    fn label_to_feature_pairs_count_too() {
        let mi = Array2::from_elem((2, 2), 1.0);
        let mut acc = Array2::zeros((2, 2));
        let w = WalkSequence {
            nodes: vec![Node::Label(0), Node::Feature(1), Node::Label(0)],
        };
        accumulate_pairs(&w, mi.view(), 0.5, &mut acc);
        // (l0,f1) at distance 1 twice
        assert_eq!(acc[[1, 0]], 1.0);
    }

    #[test]
    fn runs_are_bit_identical() {
        let g = toy_graph();
        let cfg = WalkConfig {
            n_walks: 6,
            walk_length: 12,
            jump_prob: 0.4,
            decay_factor: 0.7,
            seed: 11,
        };
        let a = run_rwmi(&g, &cfg).unwrap();
        let b = run_rwmi(&g, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn zero_mi_gives_zero_accumulator() {
        let mut g = toy_graph();
        g.mi.fill(0.0);
        let raw = run_rwmi_raw(&g, &WalkConfig::default()).unwrap();
        assert!(raw.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn raw_entries_respect_scaling_bound() {
        let g = toy_graph();
        let cfg = WalkConfig {
            n_walks: 50,
            walk_length: 8,
            jump_prob: 0.5,
            decay_factor: 0.6,
            seed: 2,
        };
        let raw = run_rwmi_raw(&g, &cfg).unwrap();
        let max_mi = g.mi.iter().copied().fold(0.0, f64::max);
        let bound = 50.0 * 64.0 * 0.6 * max_mi;
        assert!(raw.iter().all(|&v| v <= bound));
    }

    #[test]
    fn config_validation() {
        let bad = WalkConfig {
            jump_prob: 1.0,
            ..WalkConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = WalkConfig {
            n_walks: 0,
            ..WalkConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
