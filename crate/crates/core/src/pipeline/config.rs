//! Flat `key=value` run configuration.
//!
//! A config file holds one `key=value` per line (`#` starts a comment);
//! command-line flags are applied on top with the same keys. The resolved
//! configuration is embedded in every artifact as `# key=value` lines.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::read_manifest;
use crate::error::{Error, Result};
use crate::eval::{Classifier, StepPolicy};
use crate::graph::{SigmaPolicy, DEFAULT_BINS};
use crate::optimizer::Hyperparams;
use crate::walker::WalkConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    pub label_count: usize,
    pub bins: usize,
    pub sigma: SigmaPolicy<f64>,
    pub walk: WalkConfig,
    pub hp: Hyperparams<f64>,
    pub classifier: Classifier,
    pub steps: StepPolicy,
    pub disable_rw: bool,
    pub disable_fla: bool,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: PathBuf::new(),
            test: PathBuf::new(),
            label_count: 0,
            bins: DEFAULT_BINS,
            sigma: SigmaPolicy::Median,
            walk: WalkConfig::default(),
            hp: Hyperparams::default(),
            classifier: Classifier::KNN3,
            steps: StepPolicy::default(),
            disable_rw: false,
            disable_fla: false,
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn parse_num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Argument(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "" | "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(Error::Argument(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn format_steps(p: StepPolicy) -> String {
    match p {
        StepPolicy::Auto { full_below } => format!("auto{full_below}"),
        StepPolicy::TopPercent { max_percent } => format!("top{max_percent}"),
        StepPolicy::AllFeatures => "all".into(),
    }
}

fn parse_steps(value: &str) -> Result<StepPolicy> {
    let v = value.trim();
    if v == "all" {
        Ok(StepPolicy::AllFeatures)
    } else if v == "auto" {
        Ok(StepPolicy::default())
    } else if let Some(n) = v.strip_prefix("auto") {
        Ok(StepPolicy::Auto {
            full_below: parse_num("steps", n)?,
        })
    } else if let Some(n) = v.strip_prefix("top") {
        Ok(StepPolicy::TopPercent {
            max_percent: parse_num("steps", n)?,
        })
    } else {
        Err(Error::Argument(format!(
            "steps: expected all, auto<d> or top<percent>, got {v:?}"
        )))
    }
}

impl RunConfig {
    /// Sets one key. `labels` accepts either a count or a manifest path.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--").replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "train" => self.train = PathBuf::from(v),
            "test" => self.test = PathBuf::from(v),
            "labels" | "label_count" => {
                self.label_count = match v.parse() {
                    Ok(n) => n,
                    Err(_) => read_manifest(v)?,
                }
            }
            "bins" => self.bins = parse_num(&key, v)?,
            "sigma" => {
                self.sigma = if v == "median" {
                    SigmaPolicy::Median
                } else {
                    SigmaPolicy::Fixed(parse_num(&key, v)?)
                }
            }
            "alpha" => self.hp.alpha = parse_num(&key, v)?,
            "beta" => self.hp.beta = parse_num(&key, v)?,
            "gamma" => self.hp.gamma = parse_num(&key, v)?,
            "delta" => self.hp.delta = parse_num(&key, v)?,
            "epsilon" => self.hp.epsilon = parse_num(&key, v)?,
            "k" => self.hp.k = if v == "auto" { None } else { Some(parse_num(&key, v)?) },
            "max_iter" => self.hp.max_iter = parse_num(&key, v)?,
            "tol" => self.hp.tol = parse_num(&key, v)?,
            "d_smoothing" => self.hp.d_smoothing = parse_num(&key, v)?,
            "n_walks" => self.walk.n_walks = parse_num(&key, v)?,
            "walk_length" => self.walk.walk_length = parse_num(&key, v)?,
            "jump_prob" => self.walk.jump_prob = parse_num(&key, v)?,
            "decay" | "decay_factor" => self.walk.decay_factor = parse_num(&key, v)?,
            "seed" => {
                self.seed = parse_num(&key, v)?;
                self.walk.seed = self.seed;
            }
            "classifier" => self.classifier = v.parse()?,
            "steps" => self.steps = parse_steps(v)?,
            "disable_rw" => self.disable_rw = parse_bool(&key, v)?,
            "disable_fla" => self.disable_fla = parse_bool(&key, v)?,
            "out" => self.out = PathBuf::from(v),
            _ => return Err(Error::Argument(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text`. Relative `train`/`test`
    /// paths stay as written.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Every resolved setting as `(key, value)`, in a fixed order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let hp = &self.hp;
        vec![
            ("train", self.train.display().to_string()),
            ("test", self.test.display().to_string()),
            ("labels", self.label_count.to_string()),
            ("bins", self.bins.to_string()),
            (
                "sigma",
                match self.sigma {
                    SigmaPolicy::Median => "median".into(),
                    SigmaPolicy::Fixed(s) => s.to_string(),
                },
            ),
            ("alpha", hp.alpha.to_string()),
            ("beta", hp.beta.to_string()),
            ("gamma", hp.gamma.to_string()),
            ("delta", hp.delta.to_string()),
            ("epsilon", hp.epsilon.to_string()),
            ("k", hp.k.map_or("auto".into(), |k| k.to_string())),
            ("max_iter", hp.max_iter.to_string()),
            ("tol", hp.tol.to_string()),
            ("d_smoothing", hp.d_smoothing.to_string()),
            ("n_walks", self.walk.n_walks.to_string()),
            ("walk_length", self.walk.walk_length.to_string()),
            ("jump_prob", self.walk.jump_prob.to_string()),
            ("decay", self.walk.decay_factor.to_string()),
            ("seed", self.seed.to_string()),
            ("classifier", self.classifier.to_string()),
            ("steps", format_steps(self.steps)),
            ("disable_rw", self.disable_rw.to_string()),
            ("disable_fla", self.disable_fla.to_string()),
            ("out", self.out.display().to_string()),
        ]
    }

    /// `key=value` strings for artifact headers.
    pub fn header_lines(&self) -> Vec<String> {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.disable_rw && self.disable_fla {
            return Err(Error::Argument(
                "disable_rw and disable_fla together leave a degenerate model".into(),
            ));
        }
        if self.bins < 2 {
            return Err(Error::Argument(format!("bins must be at least 2, got {}", self.bins)));
        }
        if let SigmaPolicy::Fixed(s) = self.sigma {
            if !(s > 0.0) {
                return Err(Error::Argument(format!("sigma must be positive, got {s}")));
            }
        }
        self.walk.validate()?;
        self.hp.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flag_layering() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "alpha = 0.1\n# comment\nn_walks=100 # trailing\nseed=7\n",
            Path::new("c.cfg"),
        )
        .unwrap();
        cfg.set("--walk-length", "30").unwrap();
        cfg.set("alpha", "0.9").unwrap();
        assert_eq!(cfg.hp.alpha, 0.9);
        assert_eq!(cfg.walk.n_walks, 100);
        assert_eq!(cfg.walk.walk_length, 30);
        assert_eq!(cfg.walk.seed, 7);
    }

    #[test]
    fn pairs_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("sigma", "0.75").unwrap();
        cfg.set("k", "4").unwrap();
        cfg.set("classifier", "mlknn10").unwrap();
        cfg.set("steps", "top20").unwrap();
        cfg.set("labels", "6").unwrap();
        let text: String = cfg.header_lines().iter().map(|l| format!("{l}\n")).collect();
        let mut back = RunConfig::default();
        back.apply_text(&text, Path::new("x")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_lines_are_located() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("alpha=1\nnonsense\n", Path::new("c.cfg")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(cfg.set("colour", "red").is_err());
    }

    #[test]
    fn both_ablations_rejected() {
        let cfg = RunConfig {
            disable_rw: true,
            disable_fla: true,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
