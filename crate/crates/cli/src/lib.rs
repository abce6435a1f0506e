//! Command-line front end: simulate synthetic panels, re-score them and
//! evaluate them against real ones. Every command writes a manifest next to
//! its output recording the arguments, resolved options and input digests.

mod commands;
pub mod error;
mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use synpanel::elicitation::{DemographyMode, RunConfig, StimulusMode};
use synpanel::ssr::SsrParams;
use synpanel::Method;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "synpanel",
    version,
    about = "Synthetic consumer panels and their evaluation"
)]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Elicit a synthetic panel for every survey of a real corpus.
    Simulate(SimulateArgs),
    /// Recompute SSR distributions of a synthetic corpus from its stored texts.
    Score(ScoreArgs),
    /// Compare a synthetic corpus with a real one.
    Evaluate(EvaluateArgs),
    /// Re-score and evaluate over a grid of SSR temperatures and epsilons.
    Sweep(SweepArgs),
    /// Mean purchase intent by demographic or concept attribute.
    Strata(StrataArgs),
    /// Correlation attainment only.
    Retest(RetestArgs),
    /// Convert a delimited survey export into a corpus file.
    Import(ImportArgs),
    /// Generate ordered-logit panels with known structure.
    Parametric(ParametricArgs),
}

/// Elicitation settings shared by commands that talk to models.
#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, default_value = "ssr")]
    #[serde(serialize_with = "run::display")]
    pub method: Method,
    #[arg(long, default_value = "gpt-4o")]
    pub chat_model: String,
    #[arg(long, default_value = "text-embedding-3-small")]
    pub embed_model: String,
    #[arg(long, default_value_t = 0.5)]
    pub llm_temp: f64,
    #[arg(long, default_value_t = 0.9)]
    pub top_p: f64,
    /// Samples per consumer.
    #[arg(long, default_value_t = 2)]
    pub samples: u32,
    /// full, none, or subset=attr1,attr2
    #[arg(long, default_value = "full")]
    #[serde(serialize_with = "run::display")]
    pub demography: DemographyMode,
    #[arg(long, default_value = "text")]
    #[serde(serialize_with = "run::display")]
    pub stimulus: StimulusMode,
    #[command(flatten)]
    pub ssr: SsrArgs,
}

impl RunArgs {
    pub fn config(&self, seed: u64, parallelism: usize) -> RunConfig {
        RunConfig {
            method: self.method,
            chat_model: self.chat_model.clone(),
            embed_model: self.embed_model.clone(),
            llm_temperature: self.llm_temp,
            top_p: self.top_p,
            samples_per_consumer: self.samples,
            demography_mode: self.demography.clone(),
            stimulus_mode: self.stimulus,
            ssr: self.ssr.params(),
            seed,
            parallelism,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SsrArgs {
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ssr_temp: f64,
}

impl SsrArgs {
    pub fn params(&self) -> SsrParams {
        SsrParams {
            epsilon: self.epsilon,
            temperature: self.ssr_temp,
        }
    }
}

/// Where model calls go and where their results are cached.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ProviderArgs {
    /// Use the offline mock providers.
    #[arg(long)]
    pub mock: bool,
    /// Scripted replies for the mock chat provider.
    #[arg(long, requires = "mock")]
    pub mock_script: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible API.
    #[arg(long, env = "SYNPANEL_API_BASE")]
    pub api_base: Option<String>,
    /// Whether the chat model accepts image attachments.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub images: bool,
    #[arg(long, default_value = "synpanel-cache")]
    pub cache_dir: PathBuf,
    /// Anchor-set file; the bundled sets are used when omitted.
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Real corpus providing rosters and stimuli.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Few-shot examples for the FLR rating expert.
    #[arg(long)]
    rater_examples: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest tolerated fraction of failed records before exiting with 2.
    #[arg(long, default_value_t = 0.05)]
    max_failure_rate: f64,
}

#[derive(Debug, Args, Serialize)]
struct ScoreArgs {
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "text-embedding-3-small")]
    embed_model: String,
    #[command(flatten)]
    ssr: SsrArgs,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the report as a tab-separated table.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    iterations: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    temperatures: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    epsilons: Vec<f64>,
    #[arg(long, default_value = "text-embedding-3-small")]
    embed_model: String,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long, default_value_t = 2000)]
    iterations: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct StrataArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "age,gender,region,income_tier"
    )]
    features: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
struct RetestArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    iterations: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
}

#[derive(Debug, Args, Serialize)]
struct ImportArgs {
    /// Delimited export, one row per respondent.
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = ",")]
    delimiter: char,
}

#[derive(Debug, Args, Serialize)]
struct ParametricArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 57)]
    surveys: usize,
    #[arg(long, default_value_t = 200)]
    respondents: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the same answers relabeled as synthetic.
    #[arg(long)]
    copy: Option<PathBuf>,
    /// Also write an independent synthetic panel from the same model.
    #[arg(long)]
    replicate: Option<PathBuf>,
    /// Per-survey latent noise added to the replicate.
    #[arg(long, default_value_t = 0.0, requires = "replicate")]
    noise: f64,
}

fn dispatch(command: Command, argv: Vec<String>) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => commands::simulate(a, argv),
        Command::Score(a) => commands::score(a, argv),
        Command::Evaluate(a) => commands::evaluate(a, argv),
        Command::Sweep(a) => commands::sweep(a, argv),
        Command::Strata(a) => commands::strata(a, argv),
        Command::Retest(a) => commands::retest(a, argv),
        Command::Import(a) => commands::import(a, argv),
        Command::Parametric(a) => commands::parametric(a, argv),
    }
}

/// Parses a full command line, program name first.
pub fn parse<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(args)
}

impl Cli {
    pub fn verbosity(&self) -> u8 {
        self.verbose
    }

    /// Runs the parsed command. `argv` (without the program name) is
    /// recorded in the run manifest.
    pub fn execute(self, argv: Vec<String>) -> Result<(), CliError> {
        dispatch(self.command, argv)
    }
}

/// Parses and runs a command line, program name first. Usage errors are
/// reported as configuration errors.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let cli = parse(&args).map_err(|e| CliError::config(e.to_string()))?;
    cli.execute(argv)
}
