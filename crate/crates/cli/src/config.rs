use std::path::PathBuf;

use clap::{Args, Subcommand};

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Generate train/valid/test corpora from the template library.
    Generate(GenerateArgs),
    /// Train a parser on generated (and optionally rephrase) corpora.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a corpus file.
    Eval(EvalArgs),
    /// Parse sentences from standard input, one per line.
    Parse(ParseArgs),
    /// Action-frequency statistics of a corpus file.
    Stats(StatsArgs),
}

#[derive(Args)]
pub struct SchemaArg {
    /// Grammar schema file; defaults to the bundled reference grammar.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub schema: SchemaArg,
    /// Template library file; defaults to the bundled reference library.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// NOOP utterance corpus (one line each); defaults to the bundled one.
    #[arg(long)]
    pub noop_corpus: Option<PathBuf>,
    #[arg(long)]
    pub train: usize,
    #[arg(long)]
    pub valid: usize,
    #[arg(long)]
    pub test: usize,
    /// Probability that an example is a NOOP line (default one in
    /// fifteen).
    #[arg(long)]
    pub noop_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for train.txt/valid.txt/test.txt and stats.txt.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub schema: SchemaArg,
    /// Primary (template) training corpus.
    #[arg(long)]
    pub train_file: PathBuf,
    /// Validation corpus for model selection.
    #[arg(long)]
    pub valid_file: PathBuf,
    /// Optional second training pool sampled in strict alternation with
    /// the first.
    #[arg(long)]
    pub rephrase_file: Option<PathBuf>,
    /// Optional target action distribution file.
    #[arg(long)]
    pub dist: Option<PathBuf>,
    #[arg(long, default_value = "sentencerec")]
    pub variant: String,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 8)]
    pub d_free: usize,
    /// Pretrained embedding file (token then floats per line).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Width of a deterministic frozen random embedding block, used when
    /// no pretrained file is available.
    #[arg(long, default_value_t = 0)]
    pub random_pretrained: usize,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub word_dropout: Option<f64>,
    #[arg(long)]
    pub label_smoothing: Option<f64>,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 2000)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Best-on-validation checkpoint path; `<out>.last` additionally
    /// receives the final state for resuming.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics log (JSON lines); defaults to `<out>.log`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Resume from a `.last` checkpoint written by a previous run.
    #[arg(long)]
    pub resume_from: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub schema: SchemaArg,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus file to evaluate on.
    #[arg(long)]
    pub file: PathBuf,
    /// Beam width; 1 decodes greedily.
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    /// Machine-readable report destination (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ParseArgs {
    #[command(flatten)]
    pub schema: SchemaArg,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Beam width; the best hypothesis is printed.
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    /// Sidecar file receiving per-node probability diagnostics as JSON
    /// lines.
    #[arg(long)]
    pub probs: Option<PathBuf>,
}

#[derive(Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub schema: SchemaArg,
    #[arg(long)]
    pub file: PathBuf,
    /// Also write the histogram as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}
