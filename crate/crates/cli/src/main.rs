//! `dpe`: build artifacts from an annotated corpus, train a model, and query
//! or evaluate it.
//!
//! Exit codes: 0 success, 1 training failure, 2 input error, 3 query error,
//! 4 capability error.

mod commands;
mod config;
mod exit;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "dpe", version, about = "Entity synonym discovery with distributional and pattern embeddings")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the entity split, training and synthetic corpora.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a corpus file (and optionally its links against a KB).
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        kb: Option<PathBuf>,
    },
    /// Write a synthetic corpus with planted synonym groups.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Number of context sentences.
        #[arg(long)]
        sentences: Option<usize>,
        #[arg(long)]
        groups: Option<usize>,
    },
    /// Derive vocabulary, graph, seeds, split and pattern index.
    Build(BuildArgs),
    /// Train a model on built artifacts.
    Train(TrainArgs),
    /// Rank candidate synonyms for an entity or a set of names.
    Discover(DiscoverArgs),
    /// Warm-start and cold-start evaluation on the held-out entities.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = SettingArg::Both)]
        setting: SettingArg,
        /// Cutoffs, e.g. `--k 1,5`.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Training patterns ranked by the trained classifier.
    InspectPatterns {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
    },
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    /// Artifact directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    warm_frac: Option<f64>,
    #[arg(long)]
    cold_frac: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    artifacts: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Train the distributional module only.
    #[arg(long)]
    no_patterns: bool,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    artifacts: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct DiscoverArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Query with every observed name of this KB entity.
    #[arg(long, conflicts_with = "name", required_unless_present = "name")]
    entity: Option<String>,
    /// Query with these name strings.
    #[arg(long)]
    name: Vec<String>,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long)]
    k_pool: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SettingArg {
    Warm,
    Cold,
    Both,
}

fn run(cli: Cli) -> exit::CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_globals(cli.seed, cli.threads);
    let threads = cli.threads.unwrap_or(1);
    let out = commands::Output { json: cli.json };
    match cli.command {
        Command::Validate { corpus, kb } => commands::validate(&out, &corpus, kb.as_deref()),
        Command::Synth { out: dir, sentences, groups } => {
            if let Some(n) = sentences {
                cfg.synth.context_sentences = n;
            }
            if let Some(g) = groups {
                cfg.synth.groups = g;
            }
            commands::synth(&out, &cfg.synth, &dir)
        }
        Command::Build(a) => {
            let b = &mut cfg.build;
            b.min_count = a.min_count.unwrap_or(b.min_count);
            b.window = a.window.unwrap_or(b.window);
            b.split.warm_frac = a.warm_frac.unwrap_or(b.split.warm_frac);
            b.split.cold_frac = a.cold_frac.unwrap_or(b.split.cold_frac);
            commands::build(&out, &cfg.build, &a.corpus, &a.kb, &a.out)
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            t.iterations = a.iterations.unwrap_or(t.iterations);
            t.dim = a.dim.unwrap_or(t.dim);
            t.lambda = a.lambda.unwrap_or(t.lambda);
            t.use_patterns &= !a.no_patterns;
            commands::train(&out, &cfg.train, &a.artifacts, &a.out)
        }
        Command::Discover(a) => {
            if let Some(k) = a.k_pool {
                cfg.eval.k_pool = k;
            }
            cfg.eval.lambda = a.lambda.or(cfg.eval.lambda);
            let q = commands::DiscoverQuery { entity: a.entity, names: a.name, top_k: a.top_k };
            commands::discover(&out, &cfg, &a.model.artifacts, &a.model.model, &q)
        }
        Command::Evaluate { model, setting, k, lambda } => {
            if let Some(k) = k {
                cfg.eval.ks = k;
            }
            cfg.eval.lambda = lambda.or(cfg.eval.lambda);
            let settings = match setting {
                SettingArg::Warm => vec![dpe_core::evaluation::Setting::Warm],
                SettingArg::Cold => vec![dpe_core::evaluation::Setting::Cold],
                SettingArg::Both => vec![dpe_core::evaluation::Setting::Warm, dpe_core::evaluation::Setting::Cold],
            };
            commands::evaluate(&out, &cfg, threads, &model.artifacts, &model.model, &settings)
        }
        Command::InspectPatterns { model, top_n } => {
            commands::inspect_patterns(&out, &model.artifacts, &model.model, top_n)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
