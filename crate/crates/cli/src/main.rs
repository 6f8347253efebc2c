mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hspp_core::chunker::ChunkStrategy;
use hspp_core::evaluation::ImportanceMetric;
use hspp_core::features::FeatureScope;

use crate::config::RunConfig;

/// Hierarchical hallucination detection over captured generation traces.
#[derive(Parser)]
#[command(name = "hspp", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding stopwords.txt and lexicons.toml.
    #[arg(long, global = true, env = "HSPP_ASSETS")]
    assets: Option<PathBuf>,
    /// Master seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus covering all five failure profiles.
    Synth {
        #[arg(long, default_value_t = 10)]
        n_per_profile: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment every sample's description into rows.
    Chunk(RowArgs),
    /// Segment and compute the 77 features of every row.
    Extract(RowArgs),
    /// Segment and label every row against its ground-truth captions.
    Label {
        #[command(flatten)]
        rows: RowArgs,
        /// Feature rows from `extract` to join onto the labels.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Compute features in the same pass instead of joining.
        #[arg(long, conflicts_with = "features")]
        with_features: bool,
    },
    /// Train the membership network on labeled feature rows.
    Train {
        /// Rows with features and labels.
        #[arg(long)]
        rows: PathBuf,
        /// Output directory for model.hsmm and train_report.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Hold out this fraction of samples and write them to test.jsonl.
        #[arg(long)]
        holdout: Option<f64>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Score rows with a trained model and write the report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rows: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Rebuild report.json and report.txt from an eval directory.
    Report {
        /// Directory written by `eval`.
        #[arg(long = "eval-dir")]
        eval_dir: PathBuf,
        /// Where to write the report; defaults to the eval directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare chunking strategies with one model per strategy.
    Ablate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Strategies to compare; all five by default.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<ChunkStrategy>,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long)]
        test_fraction: Option<f64>,
    },
    /// Extract, label, split, train and evaluate in one go.
    Run {
        #[command(flatten)]
        rows: RowArgs,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        eval: EvalFlags,
        #[arg(long)]
        test_fraction: Option<f64>,
    },
    /// Print the feature schema and its hash.
    Schema,
}

#[derive(Args)]
struct RowArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output path (a file for row commands, a directory for `run`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<ChunkStrategy>,
    #[arg(long)]
    scope: Option<FeatureScope>,
    /// Emit zeros for the 62 baseline features.
    #[arg(long)]
    no_baseline: bool,
    /// Emit zeros for the 12 multimodal features.
    #[arg(long)]
    no_multimodal: bool,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    no_smote: bool,
    #[arg(long)]
    no_class_weighting: bool,
}

#[derive(Args)]
struct EvalFlags {
    /// Shuffles per feature for permutation importance; 0 disables it.
    #[arg(long)]
    importance_repeats: Option<usize>,
    #[arg(long)]
    importance_metric: Option<ImportanceMetric>,
}

impl RowArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.manifest, self.manifest.clone());
        set(&mut cfg.out, self.out.clone());
        if let Some(s) = self.strategy {
            cfg.pipeline.strategy = s;
        }
        if let Some(s) = self.scope {
            cfg.pipeline.scope = s;
        }
        cfg.pipeline.toggles.baseline &= !self.no_baseline;
        cfg.pipeline.toggles.multimodal &= !self.no_multimodal;
    }
}

impl TrainFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        t.learning_rate = self.learning_rate.unwrap_or(t.learning_rate);
        t.weight_decay = self.weight_decay.unwrap_or(t.weight_decay);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.max_epochs = self.max_epochs.unwrap_or(t.max_epochs);
        t.patience = self.patience.unwrap_or(t.patience);
        t.validation_fraction = self.validation_fraction.unwrap_or(t.validation_fraction);
        t.smote &= !self.no_smote;
        t.class_weighting &= !self.no_class_weighting;
    }
}

impl EvalFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.eval;
        e.importance_repeats = self.importance_repeats.unwrap_or(e.importance_repeats);
        e.importance_metric = self.importance_metric.unwrap_or(e.importance_metric);
    }
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Chunk(_) => "chunk",
            Command::Extract(_) => "extract",
            Command::Label { .. } => "label",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Report { .. } => "report",
            Command::Ablate { .. } => "ablate",
            Command::Run { .. } => "run",
            Command::Schema => "schema",
        }
    }

    /// Exit status when the subcommand fails outright.
    fn exit_code(&self) -> u8 {
        match self {
            Command::Synth { .. } => 10,
            Command::Chunk(_) => 11,
            Command::Extract(_) => 12,
            Command::Label { .. } => 13,
            Command::Train { .. } => 14,
            Command::Eval { .. } => 15,
            Command::Report { .. } => 16,
            Command::Ablate { .. } => 17,
            Command::Run { .. } => 18,
            Command::Schema => 19,
        }
    }
}

fn configure(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.assets, cli.assets.clone());
    match &cli.command {
        Command::Synth { out, .. } => cfg.out = Some(out.clone()),
        Command::Chunk(r) | Command::Extract(r) | Command::Label { rows: r, .. } => r.apply(&mut cfg),
        Command::Train { out, train, .. } => {
            set(&mut cfg.out, out.clone());
            train.apply(&mut cfg);
        }
        Command::Eval { out, eval, .. } => {
            set(&mut cfg.out, out.clone());
            eval.apply(&mut cfg);
        }
        Command::Report { .. } | Command::Schema => {}
        Command::Ablate {
            manifest,
            out,
            train,
            test_fraction,
            ..
        } => {
            set(&mut cfg.manifest, manifest.clone());
            set(&mut cfg.out, out.clone());
            train.apply(&mut cfg);
            cfg.eval.test_fraction = test_fraction.unwrap_or(cfg.eval.test_fraction);
        }
        Command::Run {
            rows,
            train,
            eval,
            test_fraction,
        } => {
            rows.apply(&mut cfg);
            train.apply(&mut cfg);
            eval.apply(&mut cfg);
            cfg.eval.test_fraction = test_fraction.unwrap_or(cfg.eval.test_fraction);
        }
    }
    cfg.finish()
}

fn dispatch(cli: &Cli) -> anyhow::Result<commands::Status> {
    use hspp_core::pipeline::Stages;
    let cfg = configure(cli)?;
    match &cli.command {
        Command::Synth { n_per_profile, .. } => commands::synth(&cfg, *n_per_profile),
        Command::Chunk(_) => commands::rows(&cfg, Stages::CHUNK, None),
        Command::Extract(_) => commands::rows(&cfg, Stages::EXTRACT, None),
        Command::Label {
            features,
            with_features,
            ..
        } => {
            let stages = if *with_features { Stages::ALL } else { Stages::LABEL };
            commands::rows(&cfg, stages, features.as_deref())
        }
        Command::Train { rows, holdout, .. } => commands::train(&cfg, rows, *holdout),
        Command::Eval { model, rows, .. } => commands::eval(&cfg, model, rows),
        Command::Report { eval_dir, out } => commands::report(eval_dir, out.as_deref().unwrap_or(eval_dir)),
        Command::Ablate { strategies, .. } => commands::ablate(&cfg, strategies),
        Command::Run { .. } => commands::run(&cfg),
        Command::Schema => commands::schema(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(commands::Status::Complete) => ExitCode::SUCCESS,
        Ok(commands::Status::SamplesFailed(n)) => {
            log::error!("{}: {n} sample(s) failed and were skipped", cli.command.name());
            ExitCode::from(commands::SAMPLE_FAILURE_EXIT)
        }
        Err(e) => {
            log::error!("{}: {e:#}", cli.command.name());
            ExitCode::from(cli.command.exit_code())
        }
    }
}
