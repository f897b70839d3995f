//! Command-line pipeline: ingest forum posts and market data, label
//! pump-and-dump candidates, train and evaluate text classifiers, explain
//! their predictions, and generate synthetic corpora.
//!
//! Settings come from a TOML file (`--config`); flags override it.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use pnd_core::evaluation::DocFilter;
use pnd_core::explain::OutputSpace;
use pnd_core::models::ModelKind;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult, Stage, EXIT_DATA, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "pnd", version, about = "Pump-and-dump labeling and detection pipeline")]
pub struct Cli {
    /// Pipeline config (TOML). Relative paths inside it resolve against its
    /// directory. Without it, defaults apply relative to the working directory.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Cap on worker threads [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Directory for stage outputs; overrides paths.out_dir [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse posts, comments and market data; cut a market window per post
    Ingest(InputArgs),
    /// Classify market windows and label posts and comments
    Label(LabelArgs),
    /// Train a classifier on the labeled documents
    Train(TrainArgs),
    /// Stratified k-fold cross-validation
    Eval(EvalArgs),
    /// Shapley attributions and a term impact ranking
    Explain(ExplainArgs),
    /// Generate a synthetic corpus with ground truth
    Simulate(SimulateArgs),
    /// Sector histogram and per-day submission counts
    Stats(InputArgs),
}

#[derive(Debug, Args, Default)]
pub struct InputArgs {
    /// Posts file, one JSON object per line [default: posts.jsonl]
    #[arg(long, value_name = "FILE")]
    pub posts: Option<PathBuf>,
    /// Comments file, one JSON object per line [default: comments.jsonl]
    #[arg(long, value_name = "FILE")]
    pub comments: Option<PathBuf>,
    /// Directory of per-ticker daily OHLCV CSV files [default: ohlcv]
    #[arg(long, value_name = "DIR")]
    pub ohlcv_dir: Option<PathBuf>,
    /// `symbol,sector` CSV [default: sectors.csv]
    #[arg(long, value_name = "FILE")]
    pub sectors: Option<PathBuf>,
    /// Listed tickers, one per line [default: every ticker in the sector map]
    #[arg(long, value_name = "FILE")]
    pub listings: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct LabelArgs {
    /// Anomaly gate: a day is anomalous above mean + this many population
    /// standard deviations of the baseline [default: 2.0]
    #[arg(long, value_name = "X")]
    pub sigma_multiplier: Option<f64>,
    /// Largest normalized rising slope still labeled pump-and-dump [default: 0.18]
    #[arg(long, value_name = "X")]
    pub slope_threshold: Option<f64>,
    /// Use the median slope of windows passing both anomaly gates as the
    /// threshold instead of --slope-threshold [default: off]
    #[arg(long)]
    pub calibrate_slope: bool,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Classifier: mlp or logreg [default: mlp]
    #[arg(long, value_name = "KIND")]
    pub model: Option<ModelKind>,
    /// Training epochs [default: 30]
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    /// SGD step size [default: 0.1]
    #[arg(long, value_name = "X")]
    pub learning_rate: Option<f64>,
    /// Minibatch size [default: 32]
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Hidden layer widths, comma separated [default: 64]
    #[arg(long, value_name = "W,..", value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// L2 penalty on weights [default: 0.0001]
    #[arg(long, value_name = "X")]
    pub l2: Option<f64>,
    /// Initialization and shuffling seed [default: 42]
    #[arg(long, value_name = "N")]
    pub train_seed: Option<u64>,
    /// Drop terms seen fewer times than this [default: 1]
    #[arg(long, value_name = "N")]
    pub min_count: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Documents to train on: posts or all [default: all]
    #[arg(long, value_name = "WHICH")]
    pub docs: Option<DocFilter>,
}

#[derive(Debug, Args, Default)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of folds [default: 5]
    #[arg(long, value_name = "K")]
    pub folds: Option<usize>,
    /// Fold assignment seed [default: 7]
    #[arg(long, value_name = "N")]
    pub fold_seed: Option<u64>,
    /// Document condition, repeatable: posts or all [default: posts and all]
    #[arg(long, value_name = "WHICH")]
    pub docs: Vec<DocFilter>,
}

#[derive(Debug, Args, Default)]
pub struct ExplainArgs {
    /// Model checkpoint [default: <out_dir>/model.json]
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Permutation samples per document [default: 2000]
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,
    /// Sampling seed [default: 11]
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Attribute probability or logit [default: probability]
    #[arg(long, value_name = "SPACE")]
    pub output: Option<OutputSpaceArg>,
    /// Documents to attribute [default: 100]
    #[arg(long, value_name = "N")]
    pub instances: Option<usize>,
    /// Background documents [default: 20]
    #[arg(long, value_name = "N")]
    pub background: Option<usize>,
    /// Terms kept in the ranking [default: 30]
    #[arg(long, value_name = "N")]
    pub top_n: Option<usize>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum OutputSpaceArg {
    Probability,
    Logit,
}

impl From<OutputSpaceArg> for OutputSpace {
    fn from(a: OutputSpaceArg) -> Self {
        match a {
            OutputSpaceArg::Probability => OutputSpace::Probability,
            OutputSpaceArg::Logit => OutputSpace::Logit,
        }
    }
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    /// Directory the corpus and its config.toml are written to
    #[arg(long, value_name = "DIR", default_value = "synthetic")]
    pub out: PathBuf,
    /// Number of posts [default: 5000]
    #[arg(long, value_name = "N")]
    pub posts: Option<usize>,
    /// Share of posts built on a pump-and-dump window [default: 0.09]
    #[arg(long, value_name = "X")]
    pub pnd_fraction: Option<f64>,
    /// Generator seed [default: 2021]
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl InputArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        let p = &mut cfg.paths;
        set(&mut p.posts, self.posts);
        set(&mut p.comments, self.comments);
        set(&mut p.ohlcv_dir, self.ohlcv_dir);
        set(&mut p.sectors, self.sectors);
        if self.listings.is_some() {
            p.listings = self.listings;
        }
    }
}

impl ModelArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        set(&mut cfg.model.kind, self.model);
        let t = &mut cfg.train;
        set(&mut t.epochs, self.epochs);
        set(&mut t.learning_rate, self.learning_rate);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.hidden, self.hidden);
        set(&mut t.l2, self.l2);
        set(&mut t.seed, self.train_seed);
        set(&mut cfg.features.min_count, self.min_count);
    }
}

/// Resolves the config file and applies flag overrides.
pub fn effective_config(cli: Cli) -> CliResult<(PipelineConfig, Command)> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::defaults_in(Path::new("")),
    };
    set(&mut cfg.paths.out_dir, cli.out_dir);
    let mut command = cli.command;
    match &mut command {
        Command::Ingest(a) | Command::Stats(a) => std::mem::take(a).apply(&mut cfg),
        Command::Label(a) => {
            set(&mut cfg.market.sigma_multiplier, a.sigma_multiplier);
            set(&mut cfg.market.slope_threshold, a.slope_threshold);
            cfg.market.calibrate_slope |= a.calibrate_slope;
        }
        Command::Train(a) => {
            std::mem::take(&mut a.model).apply(&mut cfg);
            set(&mut cfg.model.docs, a.docs);
        }
        Command::Eval(a) => {
            std::mem::take(&mut a.model).apply(&mut cfg);
            set(&mut cfg.eval.k, a.folds);
            set(&mut cfg.eval.seed, a.fold_seed);
            if !a.docs.is_empty() {
                cfg.eval.conditions = std::mem::take(&mut a.docs);
            }
        }
        Command::Explain(a) => {
            let e = &mut cfg.explain;
            set(&mut e.shapley.samples, a.samples);
            set(&mut e.shapley.seed, a.seed);
            set(&mut e.shapley.output, a.output.map(Into::into));
            set(&mut e.instances, a.instances);
            set(&mut e.background, a.background);
            set(&mut e.top_n, a.top_n);
        }
        Command::Simulate(a) => {
            set(&mut cfg.simulate.n_posts, a.posts);
            set(&mut cfg.simulate.pnd_fraction, a.pnd_fraction);
            set(&mut cfg.simulate.seed, a.seed);
        }
    }
    cfg.validate()?;
    Ok((cfg, command))
}

/// Runs one command and prints a short summary to stdout.
pub fn execute(cfg: &PipelineConfig, command: &Command) -> CliResult<()> {
    match command {
        Command::Ingest(_) => {
            let stats = commands::ingest(cfg)?;
            print!("{}", commands::format_ingest_stats(&stats));
        }
        Command::Label(_) => {
            let s = commands::label(cfg)?;
            let how = if s.calibrated { "calibrated" } else { "configured" };
            println!("slope threshold {} ({how})", s.slope_threshold);
            print!("{}", s.distribution);
        }
        Command::Train(_) => {
            let s = commands::train(cfg)?;
            let last = s.report.epoch_losses.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {:?} on {} documents, {} terms, final loss {last:.6}",
                cfg.model.kind, s.documents, s.vocabulary
            );
        }
        Command::Eval(_) => {
            for r in commands::eval(cfg)? {
                println!(
                    "{:<20} accuracy {}  precision {}  recall {}  f1 {}",
                    r.condition, r.accuracy, r.precision, r.recall, r.f1
                );
            }
        }
        Command::Explain(a) => {
            let s = commands::explain(cfg, a.checkpoint.as_deref())?;
            println!(
                "attributed {} documents against {} background documents (max efficiency gap {:.2e})",
                s.instances, s.background, s.max_efficiency_gap
            );
            for (i, e) in s.ranking.entries.iter().enumerate() {
                println!("{:>3}. {:<24} {:.6}", i + 1, e.term, e.mean_abs_value);
            }
        }
        Command::Simulate(a) => {
            let truth = commands::simulate(cfg, &a.out)?;
            println!("wrote {} posts to {}", truth.ingest.posts, a.out.display());
            print!("{}", truth.distribution);
        }
        Command::Stats(_) => {
            let s = commands::stats(cfg)?;
            print!("{}", s.histogram());
            println!("{} days with submissions", s.daily.len());
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, S>(args: I) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("config: cannot size thread pool: {e}");
            return EXIT_INTERNAL;
        }
    }
    let result = effective_config(cli).and_then(|(cfg, command)| execute(&cfg, &command));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
