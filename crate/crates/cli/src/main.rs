use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use songsmith::gan::AttributeVocab;
use songsmith::lyrics::{train_skipgram, EmbeddingLevel, SkipGramConfig};
use songsmith::mi::HeatmapSource;
use songsmith::recommend::{generate, Recommender, DEFAULT_K};
use songsmith::score::write_midi;
use songsmith::train::{
    checkpoint_heatmap, evaluate, initial_checkpoint, load_checkpoint, load_corpus, nursery_corpus, pretrain_generator,
    save_checkpoint, train_from, Corpus, TrainConfig, METRICS_HEADER,
};
use songsmith::{Error, Result};

#[derive(Parser)]
#[command(name = "songsmith", version, about = "Lyrics-conditioned melody generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train syllable- and word-level skip-gram tables and write them as CSV.
    TrainEmbeddings {
        /// JSON-lines corpus; the bundled nursery corpus when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
    },
    /// Adversarial training; writes the checkpoint at every interval.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON training configuration; unspecified fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lambda_mi: Option<f64>,
        /// Maximum-likelihood generator updates before adversarial training.
        #[arg(long, default_value_t = 0)]
        pretrain_steps: u64,
        /// CSV file receiving one metrics row per interval.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Generate a melody and write it as a Standard MIDI File. The full
    /// result is printed as JSON.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        lyrics: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Cosine-similarity heatmap between syllables, as CSV and PGM.
    ExportHeatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated syllables.
        #[arg(long, value_delimiter = ',')]
        syllables: Vec<String>,
        #[arg(long, default_value = "embedding")]
        source: HeatmapSource,
        /// Lyrics whose contexts are averaged for the interpretable source.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        pgm: Option<PathBuf>,
        /// Pixels per matrix cell in the PGM image.
        #[arg(long, default_value_t = 16)]
        cell: usize,
    },
    /// Marginal distances, critic scores and reconstruction error as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn corpus(path: Option<&Path>) -> Result<Corpus> {
    match path {
        Some(p) => load_corpus(p, &AttributeVocab::default()),
        None => Ok(nursery_corpus()),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainEmbeddings {
            corpus: path,
            out_dir,
            seed,
            epochs,
        } => {
            let lyrics = corpus(path.as_deref())?.lyrics();
            let cfg = SkipGramConfig {
                seed,
                epochs,
                ..SkipGramConfig::default()
            };
            fs::create_dir_all(&out_dir)?;
            for (level, name) in [
                (EmbeddingLevel::Syllable, "syllables.csv"),
                (EmbeddingLevel::Word, "words.csv"),
            ] {
                let run = train_skipgram(&lyrics, level, &cfg)?;
                write(&out_dir.join(name), run.table.to_csv())?;
                let last = run.epoch_losses.last().copied().unwrap_or(f64::NAN);
                eprintln!("{name}: {} tokens, final loss {last:.4}", run.table.len());
            }
        }
        Command::Train {
            corpus: path,
            out,
            config,
            steps,
            seed,
            lambda_mi,
            pretrain_steps,
            metrics,
        } => {
            let mut cfg: TrainConfig = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                None => TrainConfig::default(),
            };
            cfg.steps = steps.unwrap_or(cfg.steps);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.lambda_mi = lambda_mi.unwrap_or(cfg.lambda_mi);
            let corpus = corpus(path.as_deref())?;
            let mut ckpt = initial_checkpoint(&corpus, &cfg)?;
            if pretrain_steps > 0 {
                let ce = pretrain_generator(&mut ckpt, &corpus, pretrain_steps)?;
                eprintln!(
                    "pretrained {pretrain_steps} steps, cross-entropy {:.4} -> {:.4}",
                    ce[0],
                    ce[ce.len() - 1]
                );
            }
            let mut log = String::from(METRICS_HEADER);
            log.push('\n');
            if let Some(m) = &metrics {
                write(m, &log)?;
            }
            let run = train_from(ckpt, &corpus, &mut |row, ckpt| {
                eprintln!("{}", row.csv_line());
                log.push_str(&row.csv_line());
                log.push('\n');
                if let Some(m) = &metrics {
                    write(m, &log)?;
                }
                save_checkpoint(ckpt, &out)
            })?;
            save_checkpoint(&run.checkpoint, &out)?;
            eprintln!("wrote {} ({})", out.display(), run.checkpoint.fingerprint());
        }
        Command::Generate {
            checkpoint,
            lyrics,
            seed,
            k,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let result = generate(&lyrics, &ckpt, &ckpt.fingerprint(), seed, k)?;
            write(&out, write_midi(&result.score))?;
            println!("{}", result.to_json());
        }
        Command::Serve { port, host, checkpoint } => {
            let svc = Arc::new(Recommender::new(load_checkpoint(&checkpoint)?));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                songsmith_server::serve(listener, svc).await
            })?;
        }
        Command::ExportHeatmap {
            checkpoint,
            syllables,
            source,
            corpus: path,
            samples,
            seed,
            csv,
            pgm,
            cell,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let probe = corpus(path.as_deref())?;
            let matrix = checkpoint_heatmap(&ckpt, &syllables, source, &probe, samples, seed)?;
            write(&csv, matrix.to_csv())?;
            if let Some(p) = pgm {
                write(&p, matrix.to_pgm(cell.max(1)))?;
            }
        }
        Command::Eval {
            checkpoint,
            corpus: path,
            samples,
            seed,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let report = evaluate(&ckpt, &corpus(path.as_deref())?, samples, seed)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("plain data"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
