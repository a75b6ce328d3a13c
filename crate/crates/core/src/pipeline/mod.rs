//! End-to-end orchestration: load → graph → walk → fit → rank → eval, plus
//! the artifact files written by each command.

mod config;
mod grid;

pub use config::RunConfig;
pub use grid::{grid_search, write_leaderboard, GridEntry, GridSpec, WALK_PROBABILITIES, WEIGHT_GRID};

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::data::{column_min_max, load_dataset, rank_features, write_matrix_csv, FeatureRanking, MultiLabelDataset};
use crate::error::Error;
use crate::eval::{protocol_eval, EvalReport};
use crate::graph::{build_graph, RelevanceGraph};
use crate::optimizer::{ablation_variant, feature_scores, fit, Ablation, FactorizationState};
use crate::walker::run_rwmi;

/// Pipeline stage named in diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Graph,
    Walk,
    Fit,
    Rank,
    Eval,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Graph => "graph",
            Stage::Walk => "walk",
            Stage::Fit => "fit",
            Stage::Rank => "rank",
            Stage::Eval => "eval",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Error,
    },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Usage(_) => None,
            PipelineError::Stage { stage, .. } => Some(*stage),
        }
    }
}

pub type PipelineResult<T> = std::result::Result<T, PipelineError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> PipelineResult<T>;
}

impl<T> AtStage<T> for crate::Result<T> {
    fn at(self, stage: Stage) -> PipelineResult<T> {
        self.map_err(|source| PipelineError::Stage { stage, source })
    }
}

fn io_at<T>(r: std::io::Result<T>, path: &Path) -> PipelineResult<T> {
    r.map_err(|e| Error::io(path, e)).at(Stage::Write)
}

/// Checks the config and loads the unscaled dataset it names.
pub fn load(cfg: &RunConfig) -> PipelineResult<MultiLabelDataset<f64>> {
    cfg.validate().map_err(|e| PipelineError::Usage(e.to_string()))?;
    if cfg.train.as_os_str().is_empty() || cfg.test.as_os_str().is_empty() {
        return Err(PipelineError::Usage("both train and test paths are required".into()));
    }
    if cfg.label_count == 0 {
        return Err(PipelineError::Usage(
            "labels must be a positive count or a manifest path".into(),
        ));
    }
    load_dataset(&cfg.train, &cfg.test, cfg.label_count).at(Stage::Load)
}

/// Everything produced by one selection run.
#[derive(Debug, Clone)]
pub struct Selection {
    pub ranking: FeatureRanking<f64>,
    pub rw: Array2<f64>,
    pub graph: RelevanceGraph<f64>,
    pub state: FactorizationState<f64>,
    /// Whether the walk ran (false when the RW component is disabled).
    pub walked: bool,
}

/// Runs graph → walk → fit → rank on the training half of `raw`.
///
/// The graph is built from standardized features; the factorization sees the
/// same features min-max scaled to `[0, 1]`.
pub fn run_selection(raw: &MultiLabelDataset<f64>, cfg: &RunConfig) -> PipelineResult<Selection> {
    cfg.validate().map_err(|e| PipelineError::Usage(e.to_string()))?;
    let std = raw.standardized();
    let graph = build_graph(std.x_train.view(), std.y_train.view(), cfg.bins, cfg.sigma).at(Stage::Graph)?;
    let mut hp = cfg.hp;
    let (rw, walked) = if cfg.disable_rw {
        hp = ablation_variant(&hp, Ablation::Rw);
        (graph.mi.clone(), false)
    } else {
        (run_rwmi(&graph, &cfg.walk).at(Stage::Walk)?.values, true)
    };
    if cfg.disable_fla {
        hp = ablation_variant(&hp, Ablation::Fla);
    }
    let x_fit = column_min_max(raw.x_train.view());
    let state = fit(x_fit.view(), raw.y_train.view(), rw.view(), &hp, cfg.seed).at(Stage::Fit)?;
    let ranking = rank_features(&feature_scores(&state)).at(Stage::Rank)?;
    Ok(Selection {
        ranking,
        rw,
        graph,
        state,
        walked,
    })
}

/// Evaluates `ranking` on the test half of `raw` (features standardized with
/// training statistics).
pub fn run_eval(
    raw: &MultiLabelDataset<f64>,
    ranking: &FeatureRanking<f64>,
    cfg: &RunConfig,
) -> PipelineResult<EvalReport> {
    protocol_eval(&raw.standardized(), ranking, cfg.classifier, cfg.steps).at(Stage::Eval)
}

fn header(cfg: &RunConfig, kind: &str) -> Vec<String> {
    let mut lines = vec![format!("artifact={kind}")];
    lines.extend(cfg.header_lines());
    lines
}

fn create(path: &Path) -> PipelineResult<BufWriter<File>> {
    io_at(File::create(path), path).map(BufWriter::new)
}

fn ensure_dir(dir: &Path) -> PipelineResult<()> {
    io_at(fs::create_dir_all(dir), dir)
}

pub fn write_ranking<W: Write>(mut w: W, ranking: &FeatureRanking<f64>, comments: &[String]) -> std::io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "rank,feature_index,score")?;
    for (r, &f) in ranking.order.iter().enumerate() {
        writeln!(w, "{},{f},{}", r + 1, ranking.scores[f])?;
    }
    w.flush()
}

/// Reads a ranking written by [`write_ranking`].
pub fn read_ranking(path: impl AsRef<Path>) -> crate::Result<FeatureRanking<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut order: Vec<usize> = Vec::new();
    let mut ranked_scores = Vec::new();
    let mut seen_header = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line != "rank,feature_index,score" {
                return Err(parse_err(
                    i + 1,
                    format!("expected header rank,feature_index,score, got {line:?}"),
                ));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(i + 1, format!("expected 3 fields, got {}", fields.len())));
        }
        let rank: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad rank {:?}", fields[0])))?;
        if rank != order.len() + 1 {
            return Err(parse_err(i + 1, format!("rank {rank} out of sequence")));
        }
        order.push(
            fields[1]
                .parse()
                .map_err(|_| parse_err(i + 1, format!("bad feature index {:?}", fields[1])))?,
        );
        let score: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad score {:?}", fields[2])))?;
        if !score.is_finite() {
            return Err(parse_err(i + 1, format!("non-finite score {score}")));
        }
        ranked_scores.push(score);
    }
    if !seen_header {
        return Err(parse_err(text.lines().count().max(1), "missing header".into()));
    }
    let d = order.len();
    let mut scores = vec![f64::NAN; d];
    for (&f, &s) in order.iter().zip(&ranked_scores) {
        if f < d {
            scores[f] = s;
        }
    }
    FeatureRanking::from_parts(order, scores)
}

/// Paths of the files written by [`cmd_select`].
#[derive(Debug, Clone)]
pub struct SelectArtifacts {
    pub ranking: PathBuf,
    pub rwmi: PathBuf,
    pub trace: PathBuf,
}

impl SelectArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        SelectArtifacts {
            ranking: dir.join("ranking.csv"),
            rwmi: dir.join("rwmi.csv"),
            trace: dir.join("trace.csv"),
        }
    }
}

/// Runs the full selection and writes `ranking.csv`, `rwmi.csv` and
/// `trace.csv` into the output directory.
pub fn cmd_select(cfg: &RunConfig) -> PipelineResult<(Selection, SelectArtifacts)> {
    let raw = load(cfg)?;
    let sel = run_selection(&raw, cfg)?;
    ensure_dir(&cfg.out)?;
    let paths = SelectArtifacts::in_dir(&cfg.out);
    io_at(
        write_ranking(create(&paths.ranking)?, &sel.ranking, &header(cfg, "ranking")),
        &paths.ranking,
    )?;
    let mut rw_header = header(cfg, "rwmi");
    rw_header.push(format!(
        "rows=features cols=labels source={}",
        if sel.walked { "walk" } else { "mi" }
    ));
    let mut w = create(&paths.rwmi)?;
    io_at(
        write_matrix_csv(&mut w, sel.rw.view(), &rw_header).and_then(|_| w.flush()),
        &paths.rwmi,
    )?;
    let mut trace_header = header(cfg, "trace");
    trace_header.push(format!("converged={}", sel.state.converged));
    let mut w = create(&paths.trace)?;
    io_at(
        sel.state.write_trace_csv(&mut w, &trace_header).and_then(|_| w.flush()),
        &paths.trace,
    )?;
    Ok((sel, paths))
}

fn report_json(report: &EvalReport, cfg: &RunConfig) -> serde_json::Value {
    let config: serde_json::Map<String, serde_json::Value> = cfg
        .pairs()
        .into_iter()
        .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
        .collect();
    serde_json::json!({ "config": config, "report": report })
}

/// Writes `eval_<classifier>.csv` and `eval_<classifier>.json`.
pub fn write_report(report: &EvalReport, cfg: &RunConfig, extra: &[String]) -> PipelineResult<(PathBuf, PathBuf)> {
    ensure_dir(&cfg.out)?;
    let stem = format!("eval_{}", cfg.classifier);
    let csv = cfg.out.join(format!("{stem}.csv"));
    let json = cfg.out.join(format!("{stem}.json"));
    let mut comments = header(cfg, "eval");
    comments.extend(extra.iter().cloned());
    comments.push(format!("aggregation={}", report.aggregation));
    let mut w = create(&csv)?;
    io_at(report.write_csv(&mut w, &comments).and_then(|_| w.flush()), &csv)?;
    let mut value = report_json(report, cfg);
    value["sources"] = serde_json::Value::from(extra.to_vec());
    let text = serde_json::to_string_pretty(&value)
        .map_err(Error::from)
        .at(Stage::Write)?;
    io_at(fs::write(&json, text + "\n"), &json)?;
    Ok((csv, json))
}

/// Evaluates a saved ranking without re-running the walk or fit.
pub fn cmd_eval(cfg: &RunConfig, ranking_path: &Path) -> PipelineResult<EvalReport> {
    let raw = load(cfg)?;
    let ranking = read_ranking(ranking_path).at(Stage::Rank)?;
    if ranking.len() != raw.n_features() {
        return Err(PipelineError::Stage {
            stage: Stage::Rank,
            source: Error::Shape(format!(
                "{} ranks {} features, dataset has {}",
                ranking_path.display(),
                ranking.len(),
                raw.n_features()
            )),
        });
    }
    let report = run_eval(&raw, &ranking, cfg)?;
    write_report(&report, cfg, &[format!("ranking={}", ranking_path.display())])?;
    Ok(report)
}

/// Full model and its two single-component ablations.
pub const ABLATION_VARIANTS: [&str; 3] = ["full", "no_rw", "no_fla"];

/// Runs the full model and both ablations on the test half; writes
/// `ablation.csv`.
pub fn cmd_ablate(cfg: &RunConfig) -> PipelineResult<Vec<(String, EvalReport)>> {
    let raw = load(cfg)?;
    let rows = run_ablation(&raw, cfg)?;
    ensure_dir(&cfg.out)?;
    let path = cfg.out.join("ablation.csv");
    let mut w = create(&path)?;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        for c in header(cfg, "ablation") {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "variant,micro_f1,macro_f1,hamming_loss,zero_one_loss,micro_f1_std")?;
        for (name, r) in &rows {
            let m = &r.mean;
            writeln!(
                w,
                "{name},{},{},{},{},{}",
                m.micro_f1, m.macro_f1, m.hamming_loss, m.zero_one_loss, r.std.micro_f1
            )?;
        }
        w.flush()
    };
    io_at(write(&mut w), &path)?;
    Ok(rows)
}

/// Evaluates the variants of [`ABLATION_VARIANTS`] without writing files.
pub fn run_ablation(raw: &MultiLabelDataset<f64>, cfg: &RunConfig) -> PipelineResult<Vec<(String, EvalReport)>> {
    let base = RunConfig {
        disable_rw: false,
        disable_fla: false,
        ..cfg.clone()
    };
    let variants = [
        base.clone(),
        RunConfig {
            disable_rw: true,
            ..base.clone()
        },
        RunConfig {
            disable_fla: true,
            ..base
        },
    ];
    let mut out = Vec::new();
    for (name, v) in ABLATION_VARIANTS.iter().zip(&variants) {
        let sel = run_selection(raw, v)?;
        out.push((name.to_string(), run_eval(raw, &sel.ranking, v)?));
    }
    Ok(out)
}

/// Runs the grid on a seeded 80/20 split of the training half and writes
/// `leaderboard.csv`. Returns the leaderboard, best first.
pub fn cmd_grid(cfg: &RunConfig, spec: &GridSpec) -> PipelineResult<Vec<GridEntry>> {
    let raw = load(cfg)?;
    let board = grid_search(&raw, cfg, spec)?;
    ensure_dir(&cfg.out)?;
    let path = cfg.out.join("leaderboard.csv");
    let mut w = create(&path)?;
    io_at(write_leaderboard(&mut w, &board, &header(cfg, "leaderboard")), &path)?;
    Ok(board)
}
