use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use grwscmf::pipeline::{self, GridSpec, PipelineError, RunConfig};

/// Multi-label feature selection with graph random walks and structured
/// correlation matrix factorization.
#[derive(Parser, Debug)]
#[command(name = "grwscmf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rank features; writes ranking.csv, rwmi.csv and trace.csv.
    Select(RunArgs),
    /// Evaluate a saved ranking on the test half.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Ranking CSV written by `select`.
        #[arg(long)]
        ranking: Option<PathBuf>,
    },
    /// Grid search on an 80/20 split of the training half.
    Grid {
        #[command(flatten)]
        run: RunArgs,
        /// Grid file with `key=v1,v2,...` lines (`key=default` for the full range).
        #[arg(long)]
        grid: PathBuf,
    },
    /// Compare the full model with the no-RW and no-FLA variants.
    Ablate(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training matrix (CSV or TSV, labels in the last columns).
    #[arg(long)]
    train: Option<String>,
    /// Test matrix with the same layout.
    #[arg(long)]
    test: Option<String>,
    /// Label column count, or a manifest file holding `label_count=<n>`.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    bins: Option<String>,
    /// Kernel bandwidth, or `median`.
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    /// Latent dimension, or `auto` for min(c, 10).
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    n_walks: Option<String>,
    #[arg(long)]
    walk_length: Option<String>,
    #[arg(long)]
    jump_prob: Option<String>,
    #[arg(long)]
    decay: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// knn3, mlknn10, knn<k> or mlknn<k>.
    #[arg(long)]
    classifier: Option<String>,
    /// Feature-count steps: auto, auto<d>, top<percent> or all.
    #[arg(long)]
    steps: Option<String>,
    #[arg(long, alias = "disable_rw")]
    disable_rw: bool,
    #[arg(long, alias = "disable_fla")]
    disable_fla: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, PipelineError> {
        let usage = |e: grwscmf::Error| PipelineError::Usage(e.to_string());
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p).map_err(usage)?,
            None => RunConfig::default(),
        };
        let pairs = [
            ("train", &self.train),
            ("test", &self.test),
            ("labels", &self.labels),
            ("bins", &self.bins),
            ("sigma", &self.sigma),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
            ("delta", &self.delta),
            ("epsilon", &self.epsilon),
            ("k", &self.k),
            ("max_iter", &self.max_iter),
            ("tol", &self.tol),
            ("n_walks", &self.n_walks),
            ("walk_length", &self.walk_length),
            ("jump_prob", &self.jump_prob),
            ("decay", &self.decay),
            ("seed", &self.seed),
            ("classifier", &self.classifier),
            ("steps", &self.steps),
            ("out", &self.out),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v).map_err(usage)?;
            }
        }
        if self.disable_rw {
            cfg.disable_rw = true;
        }
        if self.disable_fla {
            cfg.disable_fla = true;
        }
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Select(args) => {
            let cfg = args.resolve()?;
            let (sel, paths) = pipeline::cmd_select(&cfg)?;
            println!(
                "ranked {} features ({} iterations, converged={}) -> {}",
                sel.ranking.len(),
                sel.state.objective_trace.len(),
                sel.state.converged,
                paths.ranking.display()
            );
        }
        Command::Eval { run, ranking } => {
            let cfg = run.resolve()?;
            let ranking = ranking.unwrap_or_else(|| cfg.out.join("ranking.csv"));
            let report = pipeline::cmd_eval(&cfg, &ranking)?;
            println!(
                "{}: micro_f1 {:.4} ± {:.4} over {} steps",
                report.classifier,
                report.mean.micro_f1,
                report.std.micro_f1,
                report.steps.len()
            );
        }
        Command::Grid { run, grid } => {
            let cfg = run.resolve()?;
            let spec = GridSpec::from_file(&grid).map_err(|e| PipelineError::Usage(e.to_string()))?;
            let board = pipeline::cmd_grid(&cfg, &spec)?;
            if let Some(best) = board.first() {
                let hp = &best.config.hp;
                println!(
                    "best of {}: alpha={} beta={} gamma={} delta={} epsilon={} n_walks={} walk_length={} micro_f1={:.4}",
                    board.len(),
                    hp.alpha,
                    hp.beta,
                    hp.gamma,
                    hp.delta,
                    hp.epsilon,
                    best.config.walk.n_walks,
                    best.config.walk.walk_length,
                    best.mean.micro_f1
                );
            }
        }
        Command::Ablate(args) => {
            let cfg = args.resolve()?;
            for (name, report) in pipeline::cmd_ablate(&cfg)? {
                println!("{name}: micro_f1 {:.4}", report.mean.micro_f1);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("grwscmf: {e}");
            match e {
                PipelineError::Usage(_) => ExitCode::from(2),
                PipelineError::Stage { .. } => ExitCode::from(1),
            }
        }
    }
}
