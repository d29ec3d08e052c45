//! Command-line and config-file arguments. Every option is optional at
//! parse time so a TOML file can fill it in; defaults are applied last.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "edlm", version, about = "Energy-corrected masked diffusion language models")]
pub struct Cli {
    /// TOML file of option values; command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub common: Common,

    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct Common {
    /// Root seed of every random stream [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Noise schedule: `linear`, `loglinear` or `loglinear:<c>` [default: linear].
    #[arg(long, global = true)]
    pub schedule: Option<String>,
    /// Clamp of the schedule away from 0 and 1 [default: 1e-4].
    #[arg(long, global = true)]
    pub eps: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an n-gram autoregressive model to a corpus.
    FitAr(FitArArgs),
    /// Train the factorized denoiser on fixed-length chunks of a corpus.
    TrainDenoiser(TrainDenoiserArgs),
    /// Train an NCE energy against a trained denoiser.
    TrainNce(TrainNceArgs),
    /// Generate sequences, one per line.
    Sample(SampleArgs),
    /// Likelihood bounds on a corpus and optional generative metrics.
    Eval(EvalArgs),
    /// Sweep sampler settings and report generative metrics per cell.
    Bench(BenchArgs),
    /// Run the exact-enumeration property suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct FitArArgs {
    /// Training text.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// `text8` or `inferred` [default: text8].
    #[arg(long)]
    pub vocab: Option<String>,
    /// Context length [default: 3].
    #[arg(long)]
    pub order: Option<usize>,
    /// Add-k smoothing [default: 0.1].
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Output checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainDenoiserArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// `text8` or `inferred` [default: text8].
    #[arg(long)]
    pub vocab: Option<String>,
    /// Training chunk length [default: 64].
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// SGD steps [default: 2000].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Learning rate [default: 0.1].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Sequences per step [default: 16].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Neighbours on each side seen by each position [default: 3].
    #[arg(long)]
    pub context_radius: Option<usize>,
    /// Output checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional CSV of per-step training loss.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainNceArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Denoiser checkpoint that proposes negatives.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Chunk length [default: the denoiser's training length].
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// SGD steps [default: 2000].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Learning rate [default: 0.5].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Pairs per step [default: 16].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Held-out loss interval in steps [default: 100].
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Fraction of chunks held out [default: 0.1].
    #[arg(long)]
    pub heldout_fraction: Option<f64>,
    /// Number of fixed held-out pairs [default: 500].
    #[arg(long)]
    pub heldout_pairs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional CSV of (step, loss, held-out loss).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SampleArgs {
    /// Denoiser checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// `none`, `ar`, `coar` or `nce` [default: none].
    #[arg(long)]
    pub energy: Option<String>,
    /// Checkpoint backing the energy: n-gram for `ar`/`coar`, NCE for `nce`.
    #[arg(long, value_name = "CKPT")]
    pub energy_model: Option<PathBuf>,
    /// Reverse steps N [default: 32].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Importance candidates per step [default: 16].
    #[arg(long)]
    pub k: Option<usize>,
    /// Importance window in [0, 1] [default: 1].
    #[arg(long)]
    pub window: Option<f64>,
    /// Number of sequences [default: 16].
    #[arg(long)]
    pub count: Option<usize>,
    /// Sequence length [default: the denoiser's training length].
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// `standard` or `literal` ESS in the trace [default: standard].
    #[arg(long)]
    pub ess: Option<String>,
    /// Output text file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional per-sample CSV of importance diagnostics.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvalArgs {
    /// Denoiser checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// `none`, `ar`, `coar` or `nce` [default: none].
    #[arg(long)]
    pub energy: Option<String>,
    /// Checkpoint backing the energy: n-gram for `ar`/`coar`, NCE for `nce`.
    #[arg(long, value_name = "CKPT")]
    pub energy_model: Option<PathBuf>,
    /// Evaluation text.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Chunk length [default: the denoiser's training length].
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// Evaluate at most this many chunks [default: all].
    #[arg(long)]
    pub max_docs: Option<usize>,
    /// Candidates for the partition bounds [default: 64].
    #[arg(long)]
    pub bounds_n: Option<usize>,
    /// Time draws of the continuous bound [default: 32].
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// `stratified` or `uniform` [default: stratified].
    #[arg(long)]
    pub time_sampling: Option<String>,
    /// Use the discrete bound with this many steps instead.
    #[arg(long)]
    pub discrete_steps: Option<usize>,
    /// Sample file to score with the oracle.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// N-gram checkpoint scoring the samples.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct BenchArgs {
    /// TOML grid with `steps`, `k`, `window` arrays and `samples`.
    #[arg(long, value_name = "FILE")]
    pub grid: Option<PathBuf>,
    /// Denoiser checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// `none`, `ar`, `coar` or `nce` [default: none].
    #[arg(long)]
    pub energy: Option<String>,
    /// Checkpoint backing the energy: n-gram for `ar`/`coar`, NCE for `nce`.
    #[arg(long, value_name = "CKPT")]
    pub energy_model: Option<PathBuf>,
    /// N-gram checkpoint scoring the samples.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// `standard` or `literal` [default: standard].
    #[arg(long)]
    pub ess: Option<String>,
    /// Output CSV of metrics per cell.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional CSV of wall-clock seconds per cell.
    #[arg(long)]
    pub timing: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct VerifyArgs {
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of a `--config` file: shared keys at top level, one table per
/// subcommand.
#[derive(Debug, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub schedule: Option<String>,
    pub eps: Option<f64>,
    pub fit_ar: FitArArgs,
    pub train_denoiser: TrainDenoiserArgs,
    pub train_nce: TrainNceArgs,
    pub sample: SampleArgs,
    pub eval: EvalArgs,
    pub bench: BenchArgs,
    pub verify: VerifyArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("config error: cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("config error: {} is not a valid config file", path.display()))
    }

    pub fn common(&self) -> Common {
        Common {
            seed: self.seed,
            schedule: self.schedule.clone(),
            eps: self.eps,
        }
    }
}

/// Field-wise `command line or file`.
pub trait Merge {
    fn merge(self, file: Self) -> Self;
}

macro_rules! merge_fields {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl Merge for $ty {
            fn merge(self, file: Self) -> Self {
                Self {
                    $($field: self.$field.or(file.$field),)*
                }
            }
        }
    };
}

merge_fields!(Common { seed, schedule, eps });
merge_fields!(FitArArgs { corpus, vocab, order, smoothing, out });
merge_fields!(TrainDenoiserArgs { corpus, vocab, seq_len, steps, lr, batch_size, context_radius, out, log });
merge_fields!(TrainNceArgs {
    corpus,
    model,
    seq_len,
    steps,
    lr,
    batch_size,
    eval_every,
    heldout_fraction,
    heldout_pairs,
    out,
    log,
});
merge_fields!(SampleArgs { model, energy, energy_model, steps, k, window, count, seq_len, ess, out, trace });
merge_fields!(EvalArgs {
    model,
    energy,
    energy_model,
    corpus,
    seq_len,
    max_docs,
    bounds_n,
    mc_samples,
    time_sampling,
    discrete_steps,
    samples,
    oracle,
    out,
});
merge_fields!(BenchArgs { grid, model, energy, energy_model, oracle, ess, out, timing });
merge_fields!(VerifyArgs { out });

/// Unwraps a required option or names the missing flag.
pub fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| anyhow::anyhow!("config error: --{flag} is required (flag or config file)"))
}
