//! Command-line and config-file arguments.
//!
//! Every subcommand's flags live in one struct that clap parses from the
//! command line and serde parses from the matching `[subcommand]` table of
//! the TOML config file. Keys use the flag spelling (`learning-rate`,
//! `no-edge`). A flag given on the command line wins over the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use stegscrub::analyzer::OptimizerKind;
use stegscrub::baselines::BaselineMethod;
use stegscrub::eraser::EraserMode;
use stegscrub::sweep::Method;
use stegscrub::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "stegscrub", version, about = "Scrub hidden payloads from images")]
pub struct Cli {
    /// TOML file with one table per subcommand, keyed like the flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an analyzer on a directory of PGM images.
    Train(TrainArgs),
    /// Hide a secret image in the low bits of a cover.
    Embed(EmbedArgs),
    /// Recover the secret hidden in a stego image.
    Extract(ExtractArgs),
    /// Write an edge map (Prewitt, or the analyzer's edge head).
    Edges(EdgesArgs),
    /// Remove hidden content with the edge-adaptive eraser.
    Purify(PurifyArgs),
    /// Apply Gaussian noise, a median filter or Wiener restoration.
    Baseline(BaselineArgs),
    /// Score one purified image; prints a CSV header and row.
    Evaluate(EvaluateArgs),
    /// Sweep methods and epsilon values over a dataset.
    Sweep(SweepArgs),
    /// Compare the eraser with and without edge guidance.
    Ablate(SweepArgs),
    /// Time exact against approximate purification.
    Time(SweepArgs),
    /// Write a synthetic cover/secret dataset.
    GenCorpus(GenCorpusArgs),
}

/// Field-wise fallback: `self` where set, otherwise `other`.
pub trait Layer {
    fn or(self, other: Self) -> Self;
}

macro_rules! layered {
    ($t:ident { $($field:ident),* $(,)? }) => {
        impl Layer for $t {
            fn or(self, other: Self) -> Self {
                Self { $($field: self.$field.or(other.$field)),* }
            }
        }
    };
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Directory of training images; every `*.pgm` inside is used.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output weights file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Weights to continue training from.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// CSV of per-epoch losses.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub residual_blocks: Option<usize>,
    #[arg(long)]
    pub edge_hidden: Option<usize>,
    #[arg(long)]
    pub kernel: Option<usize>,
    #[arg(long)]
    pub lambda_image: Option<f64>,
    #[arg(long)]
    pub lambda_edge: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `adam` or `sgd`.
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
}
layered!(TrainArgs {
    data, out, init, log, components, hidden, residual_blocks, edge_hidden, kernel,
    lambda_image, lambda_edge, learning_rate, batch_size, epochs, seed, optimizer,
});

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EmbedArgs {
    #[arg(long)]
    pub cover: Option<PathBuf>,
    #[arg(long)]
    pub secret: Option<PathBuf>,
    /// Number of low bit planes carrying the secret.
    #[arg(long)]
    pub k: Option<u8>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
layered!(EmbedArgs { cover, secret, k, out });

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExtractArgs {
    #[arg(long)]
    pub stego: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<u8>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
layered!(ExtractArgs { stego, k, out });

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EdgesArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Use this analyzer's edge head instead of the Prewitt operator.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
layered!(EdgesArgs { input, weights, out });

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PurifyArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<u32>,
    /// `approx` or `exact`.
    #[arg(long)]
    pub mode: Option<EraserMode>,
    /// Pin the per-pixel budget to epsilon (no edge guidance).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_edge: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also dump the analyzer's per-pixel distribution (binary).
    #[arg(long)]
    pub dist_out: Option<PathBuf>,
}
layered!(PurifyArgs { input, weights, epsilon, mode, no_edge, out, dist_out });

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BaselineArgs {
    /// `gaussian`, `median` or `wiener`.
    #[arg(long)]
    pub method: Option<BaselineMethod>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Noise standard deviation for `gaussian`.
    #[arg(long)]
    pub epsilon: Option<u32>,
    /// Odd window side for `median` and `wiener`.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
layered!(BaselineArgs { method, input, epsilon, window, seed, out });

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvaluateArgs {
    #[arg(long)]
    pub cover: Option<PathBuf>,
    #[arg(long)]
    pub stego: Option<PathBuf>,
    #[arg(long)]
    pub purified: Option<PathBuf>,
    #[arg(long)]
    pub secret: Option<PathBuf>,
    /// Secret decoded from the stego image.
    #[arg(long)]
    pub decoded_original: Option<PathBuf>,
    /// Secret decoded from the purified image.
    #[arg(long)]
    pub decoded_destroyed: Option<PathBuf>,
    /// Omit the CSV header line.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_header: Option<bool>,
}
layered!(EvaluateArgs { cover, stego, purified, secret, decoded_original, decoded_destroyed, no_header });

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepArgs {
    /// Directory of `<name>.cover.pgm` / `<name>.secret.pgm` pairs.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Comma-separated, e.g. `1,2,4,8`.
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<u32>>,
    /// Comma-separated subset of ours-approx, ours-exact, gaussian, median,
    /// wiener (and the -noedge eraser variants).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub k: Option<u8>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Results CSV; summary and timing CSVs are written beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
layered!(SweepArgs { dataset, weights, epsilons, methods, k, window, seed, out });

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Covers with many high-contrast shapes and stripes.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub edge_rich: Option<bool>,
}
layered!(GenCorpusArgs { out, count, side, seed, edge_rich });

/// The TOML config file: an optional table per subcommand. `sweep`,
/// `ablate` and `time` each have their own table.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub train: Option<TrainArgs>,
    pub embed: Option<EmbedArgs>,
    pub extract: Option<ExtractArgs>,
    pub edges: Option<EdgesArgs>,
    pub purify: Option<PurifyArgs>,
    pub baseline: Option<BaselineArgs>,
    pub evaluate: Option<EvaluateArgs>,
    pub sweep: Option<SweepArgs>,
    pub ablate: Option<SweepArgs>,
    pub time: Option<SweepArgs>,
    pub gen_corpus: Option<GenCorpusArgs>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Command-line values layered over the file's table for the command.
    pub fn apply(self, command: Command) -> Command {
        fn over<T: Layer + Default>(cli: T, file: Option<T>) -> T {
            cli.or(file.unwrap_or_default())
        }
        match command {
            Command::Train(a) => Command::Train(over(a, self.train)),
            Command::Embed(a) => Command::Embed(over(a, self.embed)),
            Command::Extract(a) => Command::Extract(over(a, self.extract)),
            Command::Edges(a) => Command::Edges(over(a, self.edges)),
            Command::Purify(a) => Command::Purify(over(a, self.purify)),
            Command::Baseline(a) => Command::Baseline(over(a, self.baseline)),
            Command::Evaluate(a) => Command::Evaluate(over(a, self.evaluate)),
            Command::Sweep(a) => Command::Sweep(over(a, self.sweep)),
            Command::Ablate(a) => Command::Ablate(over(a, self.ablate)),
            Command::Time(a) => Command::Time(over(a, self.time)),
            Command::GenCorpus(a) => Command::GenCorpus(over(a, self.gen_corpus)),
        }
    }
}

/// A required setting, from either the command line or the config file.
pub fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required --{flag}")))
}
