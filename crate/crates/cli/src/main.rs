//! `xlvoice` command-line entry point: one subcommand per pipeline step.

mod cmd;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cmd::{analyze, data, xfer};

#[derive(Parser, Debug)]
#[command(
    name = "xlvoice",
    version,
    about = "Speaker-embedding analysis and cross-lingual transfer"
)]
struct Cli {
    /// JSON object of options for the subcommand; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic bilingual embedding space.
    GenData(data::GenDataArgs),
    /// Generate synthetic multi-speaker audio.
    GenAudio(data::GenAudioArgs),
    /// Compute MFCC features for a manifest of WAV files.
    Extract(data::ExtractArgs),
    /// Train the speaker encoder on extracted features.
    Train(data::TrainArgs),
    /// Embed extracted features with a trained encoder.
    Embed(data::EmbedArgs),
    /// Per-speaker, per-language cluster means.
    Profiles(data::ProfilesArgs),
    /// Principal-component projection.
    Pca(analyze::PcaArgs),
    /// Two-class LDA between a bilingual speaker's languages.
    Lda(analyze::LdaArgs),
    /// Exact t-SNE embedding.
    Tsne(analyze::TsneArgs),
    /// Cosine similarity between cluster means.
    Cosine(analyze::CosineArgs),
    /// Language separation of short versus long utterances.
    Overlap(analyze::OverlapArgs),
    /// Language-pair delta from a bilingual reference speaker.
    Delta(xfer::DeltaArgs),
    /// Shift embeddings into the target language.
    Translate(xfer::TranslateArgs),
    /// Translate a speaker mean at several accent scales.
    Sweep(xfer::SweepArgs),
    /// Check that translated speakers land in the target language.
    TransferReport(xfer::TransferArgs),
    /// Plot-ready CSVs for the PCA and voice t-SNE figures.
    ExportPlot(xfer::ExportPlotArgs),
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    let cfg = cli.config.as_deref();
    let result = match cli.command {
        Command::GenData(a) => data::gen_data(a, cfg),
        Command::GenAudio(a) => data::gen_audio_cmd(a, cfg),
        Command::Extract(a) => data::extract(a, cfg),
        Command::Train(a) => data::train_cmd(a, cfg),
        Command::Embed(a) => data::embed(a, cfg),
        Command::Profiles(a) => data::profiles(a, cfg),
        Command::Pca(a) => analyze::pca(a, cfg),
        Command::Lda(a) => analyze::lda(a, cfg),
        Command::Tsne(a) => analyze::tsne_cmd(a, cfg),
        Command::Cosine(a) => analyze::cosine(a, cfg),
        Command::Overlap(a) => analyze::overlap(a, cfg),
        Command::Delta(a) => xfer::delta(a, cfg),
        Command::Translate(a) => xfer::translate_cmd(a, cfg),
        Command::Sweep(a) => xfer::sweep(a, cfg),
        Command::TransferReport(a) => xfer::transfer(a, cfg),
        Command::ExportPlot(a) => xfer::export_plot(a, cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("xlvoice: error: {msg}");
            ExitCode::from(1)
        }
    }
}
