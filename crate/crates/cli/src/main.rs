mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jobrec::config::PipelineConfig;
use jobrec::evaluation::RecallMode;
use jobrec::pipeline::TrainingMode;

#[derive(Parser)]
#[command(name = "jobrec", version, about = "Two-stage job recommendation pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every command; each overrides the config file.
#[derive(Args)]
struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (also read from RECSYS_THREADS).
    #[arg(long, global = true, env = "RECSYS_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true)]
    mode: Option<Mode>,
    #[arg(long, global = true)]
    recall: Option<Recall>,
    /// Items kept per candidate category.
    #[arg(long, global = true)]
    per_category: Option<usize>,
    /// Neighbours used by the collaborative categories.
    #[arg(long, global = true)]
    neighbors: Option<usize>,
    /// Models trained and blended by `run`.
    #[arg(long, global = true)]
    models: Option<u32>,
    #[arg(long, global = true)]
    num_round: Option<u32>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    max_depth: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Paper,
    Extended,
}

#[derive(Clone, Copy, ValueEnum)]
enum Recall {
    Literal,
    Corrected,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Popular,
    Recency,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted topic structure.
    Synth {
        #[arg(long, default_value_t = 2000)]
        users: u32,
        #[arg(long, default_value_t = 3000)]
        items: u32,
        #[arg(long, default_value_t = 12)]
        weeks: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hold out the last weeks; write the kept variant and its ground truth.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        holdout_weeks: u32,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out>/truth.tsv`.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Candidate lists for the target users, or for the users of a truth file.
    Candidates {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feature matrix over all candidate pairs, labelled when a truth file is given.
    Features {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample training rows and fit one ranking model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Position of this model in a blend; selects its negative sample.
        #[arg(long, default_value_t = 0)]
        model_index: u32,
        #[arg(long)]
        out: PathBuf,
        /// Split counts per feature.
        #[arg(long)]
        importance: Option<PathBuf>,
    },
    /// Rank candidates with one model and write the submission.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Rank candidates with the blend of several models.
    Blend {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long = "model", required = true)]
        model_files: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Score one or more submissions against a ground truth.
    Evaluate {
        #[arg(long = "predictions", required = true)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        /// Per-user report of the first submission.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Score only a seeded sample of the ground-truth users.
        #[arg(long)]
        sample_fraction: Option<f64>,
        /// Accept inputs from different dataset lineages.
        #[arg(long)]
        force: bool,
    },
    /// Popularity or recency baseline submission.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        kind: BaselineKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full holdout experiment through files in a work directory.
    Run {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        work: Option<PathBuf>,
    },
}

impl GlobalArgs {
    fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
                toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.threads {
            config.threads = Some(v);
        }
        if let Some(v) = self.mode {
            config.mode = match v {
                Mode::Paper => TrainingMode::Paper,
                Mode::Extended => TrainingMode::Extended,
            };
        }
        if let Some(v) = self.recall {
            config.recall = match v {
                Recall::Literal => RecallMode::Literal,
                Recall::Corrected => RecallMode::Corrected,
            };
        }
        if let Some(v) = self.per_category {
            config.candidates.per_category = v;
        }
        if let Some(v) = self.neighbors {
            config.candidates.neighbors = v;
        }
        if let Some(v) = self.models {
            config.models = v;
        }
        if let Some(v) = self.num_round {
            config.train.num_round = v;
        }
        if let Some(v) = self.eta {
            config.train.eta = v;
        }
        if let Some(v) = self.max_depth {
            config.train.max_depth = v;
        }
        config.validate()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = cli.global.resolve()?;
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let ctx = commands::Context::new(config)?;
    match cli.command {
        Command::Synth {
            users,
            items,
            weeks,
            out,
        } => ctx.synth(users, items, weeks, &out),
        Command::Split {
            data,
            holdout_weeks,
            out,
            truth,
        } => {
            let truth = truth.unwrap_or_else(|| out.join("truth.tsv"));
            ctx.split(&data, holdout_weeks, &out, &truth)
        }
        Command::Candidates { data, truth, out } => ctx.candidates(&data, truth.as_deref(), &out),
        Command::Features {
            data,
            candidates,
            truth,
            out,
        } => ctx.features(&data, &candidates, truth.as_deref(), &out),
        Command::Train {
            data,
            candidates,
            truth,
            model_index,
            out,
            importance,
        } => ctx.train(&data, &candidates, &truth, model_index, &out, importance.as_deref()),
        Command::Predict {
            data,
            candidates,
            model,
            out,
            scores,
        } => ctx.blend(&data, &candidates, &[model], &out, scores.as_deref()),
        Command::Blend {
            data,
            candidates,
            model_files,
            out,
            scores,
        } => ctx.blend(&data, &candidates, &model_files, &out, scores.as_deref()),
        Command::Evaluate {
            predictions,
            truth,
            report,
            sample_fraction,
            force,
        } => {
            for line in ctx.evaluate(&predictions, &truth, report.as_deref(), sample_fraction, force)? {
                println!("{line}");
            }
            Ok(())
        }
        Command::Baseline { data, kind, out } => {
            let recency = matches!(kind, BaselineKind::Recency);
            ctx.baseline(&data, recency, &out)
        }
        Command::Run { data, work } => {
            let data = data.unwrap_or_else(|| ctx.config.paths.data.clone());
            let work = work.unwrap_or_else(|| ctx.config.paths.work.clone());
            for line in ctx.run(&data, &work)? {
                println!("{line}");
            }
            Ok(())
        }
    }
}
