//! `memvit`: train, apply and analyse image memorability models.
//!
//! Results go to stdout as CSV; progress and diagnostics go to stderr.
//! Exit status is 0 on success, 1 on a runtime error and 2 on a usage error.

mod commands;
mod scores;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "memvit",
    version,
    about = "Image memorability modeling with a vision transformer"
)]
struct Cli {
    /// Worker threads for data-parallel stages (1 = sequential reference mode).
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model; writes the best and last checkpoints and history.csv.
    Train(TrainArgs),
    /// Score images; prints `path,score` lines.
    Predict(PredictArgs),
    /// Score a manifest and print `n,mse,spearman,r_squared`.
    Evaluate(EvaluateArgs),
    /// Remove near-duplicates across manifests.
    Dedup(DedupArgs),
    /// Write random train/test splits.
    Split(SplitArgs),
    /// Write repeated k-fold partitions.
    Kfold(KfoldArgs),
    /// Compare noun-level memorability between two captioned sets.
    Semantic(SemanticArgs),
    /// Verify every analytic gradient against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// TOML training configuration.
    #[arg(long)]
    config: PathBuf,
    /// Training manifest (`id,path,score,source`).
    #[arg(long)]
    train: PathBuf,
    /// Validation manifest.
    #[arg(long)]
    val: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Checkpoint directory.
    #[arg(long)]
    model: PathBuf,
    /// Image files (PNG or JPEG).
    #[arg(long, num_args = 1.., required = true)]
    images: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Checkpoint directory.
    #[arg(long)]
    model: PathBuf,
    /// Manifest with behavioural scores.
    #[arg(long)]
    manifest: PathBuf,
    /// Also write `id,target,prediction` rows here.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum EmbedderKind {
    /// Vectors from the `--embeddings` file.
    File,
    /// Downsampled, mean-centred thumbnails.
    Thumbnail,
    /// Class-token features of the `--model` checkpoint.
    Vit,
}

#[derive(Args, Debug)]
struct DedupArgs {
    /// Manifests to deduplicate jointly.
    #[arg(long, num_args = 1.., required = true)]
    manifests: Vec<PathBuf>,
    /// Embedding file (`id,<dim>` header); implies `--embedder file`.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, value_enum)]
    embedder: Option<EmbedderKind>,
    /// Checkpoint for `--embedder vit`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Cosine similarity at or above which two images are duplicates.
    #[arg(long, default_value_t = memvit::datakit::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("size").required(true).args(["test_count", "test_fraction"])))]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Exact number of test images per split.
    #[arg(long)]
    test_count: Option<usize>,
    /// Fraction of images in each test set.
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long, default_value_t = 10)]
    splits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct KfoldArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SemanticArgs {
    /// Captions of set A (`id,caption`), or tagged nouns with `--tagged`.
    #[arg(long)]
    captions_a: PathBuf,
    /// Scores of set A: a manifest or `id,score` / `path,score` CSV.
    #[arg(long)]
    scores_a: PathBuf,
    #[arg(long)]
    captions_b: PathBuf,
    #[arg(long)]
    scores_b: PathBuf,
    /// Keep nouns more frequent than this percentile of counts.
    #[arg(long, default_value_t = 85.0)]
    percentile: f64,
    /// Caption files are `id,nouns` lists from an external tagger.
    #[arg(long)]
    tagged: bool,
    /// Custom noun list (one lemma per line).
    #[arg(long, requires = "rules")]
    lexicon: Option<PathBuf>,
    /// Custom plural rule table.
    #[arg(long, requires = "lexicon")]
    rules: Option<PathBuf>,
    /// Also write an SVG scatter plot.
    #[arg(long)]
    plot: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Finite-difference step.
    #[arg(long, default_value_t = memvit::diffmath::DEFAULT_STEP)]
    step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the full-model check.
    #[arg(long)]
    ops_only: bool,
}

fn configure_threads(threads: Option<u32>) -> anyhow::Result<()> {
    let Some(n) = threads else { return Ok(()) };
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n as usize)
        .build_global()
        .map_err(|e| anyhow::anyhow!("cannot configure {n} threads: {e}"))?;
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        eprintln!("note: built without the `parallel` feature; running sequentially");
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Dedup(a) => commands::dedup(a),
        Command::Split(a) => commands::split(a),
        Command::Kfold(a) => commands::kfold(a),
        Command::Semantic(a) => commands::semantic(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn split_needs_exactly_one_size() {
        let base = ["memvit", "split", "--manifest", "m.csv", "--out", "o"];
        assert!(Cli::try_parse_from(base).is_err());
        let both = [&base[..], &["--test-count", "5", "--test-fraction", "0.1"]].concat();
        assert!(Cli::try_parse_from(both).is_err());
        let one = [&base[..], &["--test-count", "5"]].concat();
        assert!(Cli::try_parse_from(one).is_ok());
    }

    #[test]
    fn zero_threads_rejected() {
        assert!(Cli::try_parse_from(["memvit", "--threads", "0", "gradcheck"]).is_err());
    }
}
