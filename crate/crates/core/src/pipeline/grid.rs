use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::{run_eval, run_selection, AtStage, PipelineError, PipelineResult, RunConfig, Stage};
use crate::data::MultiLabelDataset;
use crate::error::{Error, Result};
use crate::eval::Metrics;

/// Regularization weights searched by default.
pub const WEIGHT_GRID: [f64; 7] = [0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0];

/// Candidate jump probabilities and decay factors.
pub const WALK_PROBABILITIES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Fraction of the training half used for fitting during grid search.
pub const VALIDATION_TRAIN_FRACTION: f64 = 0.8;

/// Lists of candidate values; an empty list keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridSpec {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub n_walks: Vec<usize>,
    pub walk_length: Vec<usize>,
    pub jump_prob: Vec<f64>,
    pub decay: Vec<f64>,
}

fn pick<V: std::str::FromStr + Clone>(value: &str, default: &[V]) -> Result<Vec<V>> {
    if value == "default" {
        return Ok(default.to_vec());
    }
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Argument(format!("cannot parse {s:?}"))))
        .collect()
}

impl GridSpec {
    /// All five weights over [`WEIGHT_GRID`], `n_walks ∈ {100, 1000, 10000}`,
    /// `walk_length ∈ {10, 20, 30}`, and jump probability and decay over
    /// [`WALK_PROBABILITIES`].
    pub fn full_ranges() -> Self {
        GridSpec {
            alpha: WEIGHT_GRID.to_vec(),
            beta: WEIGHT_GRID.to_vec(),
            gamma: WEIGHT_GRID.to_vec(),
            delta: WEIGHT_GRID.to_vec(),
            epsilon: WEIGHT_GRID.to_vec(),
            n_walks: vec![100, 1000, 10000],
            walk_length: vec![10, 20, 30],
            jump_prob: WALK_PROBABILITIES.to_vec(),
            decay: WALK_PROBABILITIES.to_vec(),
        }
    }

    /// Parses `key=v1,v2,...` lines; `#` starts a comment. The value
    /// `default` expands to the standard range for that key.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let full = GridSpec::full_ranges();
        let mut spec = GridSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let located = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| located(format!("expected key=list, got {line:?}")))?;
            let key = k.trim().replace('-', "_");
            let v = v.trim();
            let r = match key.as_str() {
                "alpha" => pick(v, &full.alpha).map(|l| spec.alpha = l),
                "beta" => pick(v, &full.beta).map(|l| spec.beta = l),
                "gamma" => pick(v, &full.gamma).map(|l| spec.gamma = l),
                "delta" => pick(v, &full.delta).map(|l| spec.delta = l),
                "epsilon" => pick(v, &full.epsilon).map(|l| spec.epsilon = l),
                "n_walks" => pick(v, &full.n_walks).map(|l| spec.n_walks = l),
                "walk_length" => pick(v, &full.walk_length).map(|l| spec.walk_length = l),
                "jump_prob" => pick(v, &full.jump_prob).map(|l| spec.jump_prob = l),
                "decay" => pick(v, &full.decay).map(|l| spec.decay = l),
                _ => Err(Error::Argument(format!("unknown grid key {key:?}"))),
            };
            r.map_err(|e| located(e.to_string()))?;
        }
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GridSpec::parse(&text, path)
    }

    /// Number of points [`GridSpec::points`] yields.
    pub fn n_points(&self) -> usize {
        [
            self.alpha.len(),
            self.beta.len(),
            self.gamma.len(),
            self.delta.len(),
            self.epsilon.len(),
            self.n_walks.len(),
            self.walk_length.len(),
            self.jump_prob.len(),
            self.decay.len(),
        ]
        .iter()
        .map(|&n| n.max(1))
        .product()
    }

    /// Cartesian product of the lists applied to `base`, in row-major order
    /// (`alpha` varies slowest).
    pub fn points(&self, base: &RunConfig) -> Vec<RunConfig> {
        fn expand<V: Copy>(points: Vec<RunConfig>, values: &[V], set: impl Fn(&mut RunConfig, V)) -> Vec<RunConfig> {
            if values.is_empty() {
                return points;
            }
            points
                .into_iter()
                .flat_map(|p| {
                    values
                        .iter()
                        .map(|&v| {
                            let mut q = p.clone();
                            set(&mut q, v);
                            q
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        }
        let mut pts = vec![base.clone()];
        pts = expand(pts, &self.alpha, |c, v| c.hp.alpha = v);
        pts = expand(pts, &self.beta, |c, v| c.hp.beta = v);
        pts = expand(pts, &self.gamma, |c, v| c.hp.gamma = v);
        pts = expand(pts, &self.delta, |c, v| c.hp.delta = v);
        pts = expand(pts, &self.epsilon, |c, v| c.hp.epsilon = v);
        pts = expand(pts, &self.n_walks, |c, v| c.walk.n_walks = v);
        pts = expand(pts, &self.walk_length, |c, v| c.walk.walk_length = v);
        pts = expand(pts, &self.jump_prob, |c, v| c.walk.jump_prob = v);
        pts = expand(pts, &self.decay, |c, v| c.walk.decay_factor = v);
        pts
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone)]
pub struct GridEntry {
    /// Position in [`GridSpec::points`] order.
    pub index: usize,
    pub config: RunConfig,
    pub mean: Metrics,
    pub micro_f1_std: f64,
}

/// Scores every grid point on a seeded 80/20 split of the training half,
/// in parallel. The result is sorted by mean Micro-F1, best first; ties keep
/// grid order.
pub fn grid_search(raw: &MultiLabelDataset<f64>, base: &RunConfig, spec: &GridSpec) -> PipelineResult<Vec<GridEntry>> {
    let points = spec.points(base);
    let split = raw
        .validation_split(VALIDATION_TRAIN_FRACTION, base.seed)
        .at(Stage::Load)?;
    let mut board = points
        .into_par_iter()
        .enumerate()
        .map(|(index, config)| {
            let sel = run_selection(&split, &config)?;
            let report = run_eval(&split, &sel.ranking, &config)?;
            Ok(GridEntry {
                index,
                config,
                mean: report.mean,
                micro_f1_std: report.std.micro_f1,
            })
        })
        .collect::<std::result::Result<Vec<_>, PipelineError>>()?;
    board.sort_by(|a, b| b.mean.micro_f1.total_cmp(&a.mean.micro_f1).then(a.index.cmp(&b.index)));
    Ok(board)
}

pub fn write_leaderboard<W: Write>(mut w: W, board: &[GridEntry], comments: &[String]) -> std::io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(
        w,
        "rank,point,alpha,beta,gamma,delta,epsilon,n_walks,walk_length,jump_prob,decay,micro_f1,micro_f1_std,macro_f1,hamming_loss,zero_one_loss"
    )?;
    for (r, e) in board.iter().enumerate() {
        let (hp, wk, m) = (&e.config.hp, &e.config.walk, &e.mean);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r + 1,
            e.index,
            hp.alpha,
            hp.beta,
            hp.gamma,
            hp.delta,
            hp.epsilon,
            wk.n_walks,
            wk.walk_length,
            wk.jump_prob,
            wk.decay_factor,
            m.micro_f1,
            e.micro_f1_std,
            m.macro_f1,
            m.hamming_loss,
            m.zero_one_loss
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_expand() {
        let spec = GridSpec::parse("gamma=0.1, 0.9\n# c\nwalk_length=default\n", Path::new("g")).unwrap();
        assert_eq!(spec.gamma, vec![0.1, 0.9]);
        assert_eq!(spec.walk_length, vec![10, 20, 30]);
        let pts = spec.points(&RunConfig::default());
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].hp.gamma, 0.1);
        assert_eq!(pts[0].walk.walk_length, 10);
        assert_eq!(pts[5].hp.gamma, 0.9);
        assert_eq!(pts[5].walk.walk_length, 30);
        assert_eq!(pts[5].hp.alpha, RunConfig::default().hp.alpha);
    }

    #[test]
    fn full_ranges_size() {
        let spec = GridSpec::full_ranges();
        assert_eq!(spec.n_walks, vec![100, 1000, 10000]);
        assert_eq!(spec.walk_length, vec![10, 20, 30]);
        assert_eq!(spec.n_points(), 7usize.pow(5) * 9 * 81);
        assert_eq!(spec.jump_prob, WALK_PROBABILITIES);
        let small = GridSpec {
            gamma: vec![0.1, 0.5],
            jump_prob: vec![0.2, 0.4, 0.6],
            ..GridSpec::default()
        };
        assert_eq!(small.points(&RunConfig::default()).len(), small.n_points());
        assert_eq!(GridSpec::default().n_points(), 1);
    }

    #[test]
    fn bad_grid_lines() {
        assert!(GridSpec::parse("gamma=0.1,x\n", Path::new("g")).is_err());
        assert!(GridSpec::parse("zeta=1\n", Path::new("g")).is_err());
        assert!(GridSpec::parse("gamma\n", Path::new("g")).is_err());
    }
}
