//! Planted multi-label datasets with a known set of relevant features.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::MultiLabelDataset;
use crate::error::{Error, Result};

/// A dataset whose labels depend only on `planted` features.
#[derive(Debug, Clone)]
pub struct Planted {
    pub dataset: MultiLabelDataset<f64>,
    /// Relevant feature indices, ascending.
    pub planted: Vec<usize>,
}

/// Features are i.i.d. uniform on `[0, 1)`. Planted feature `i` (in draw
/// order) feeds label `i % c`, and each label is 1 exactly when the mean of
/// its features exceeds 1/2. Every other feature is noise.
pub fn planted(n_train: usize, n_test: usize, d: usize, c: usize, n_planted: usize, seed: u64) -> Result<Planted> {
    if c < 2 || n_planted < c || n_planted > d {
        return Err(Error::Argument(format!(
            "need 2 <= c <= n_planted <= d, got c={c}, n_planted={n_planted}, d={d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drawn = sample(&mut rng, d, n_planted).into_vec();
    let mut gen = |n: usize| {
        let x = Array2::from_shape_simple_fn((n, d), || rng.random::<f64>());
        let mut y = Array2::zeros((n, c));
        for r in 0..n {
            for j in 0..c {
                let feats: Vec<usize> = drawn.iter().copied().skip(j).step_by(c).collect();
                let mean = feats.iter().map(|&f| x[[r, f]]).sum::<f64>() / feats.len() as f64;
                y[[r, j]] = if mean > 0.5 { 1.0 } else { 0.0 };
            }
        }
        (x, y)
    };
    let (x_train, y_train) = gen(n_train);
    let (x_test, y_test) = gen(n_test);
    let mut planted = drawn;
    planted.sort_unstable();
    Ok(Planted {
        dataset: MultiLabelDataset::new(format!("planted-{seed}"), x_train, y_train, x_test, y_test)?,
        planted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_planted_features() {
        let p = planted(50, 10, 12, 3, 4, 9).unwrap();
        assert_eq!(p.planted.len(), 4);
        assert_eq!(p.dataset.x_train.dim(), (50, 12));
        assert_eq!(p.dataset.y_test.dim(), (10, 3));
        let again = planted(50, 10, 12, 3, 4, 9).unwrap();
        assert_eq!(again.dataset.x_train, p.dataset.x_train);
        assert!(planted(50, 10, 12, 5, 4, 9).is_err());
    }
}
