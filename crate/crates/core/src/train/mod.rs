//! Corpus loading, the adversarial training loop, checkpoints and
//! evaluation.

mod checkpoint;
mod config;
mod corpus;
mod eval;
mod run;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use config::TrainConfig;
pub use corpus::{entry_notes, load_corpus, nursery_corpus, parse_corpus, Corpus, CorpusEntry, NURSERY_JSONL};
pub use eval::{checkpoint_heatmap, evaluate, repeated_syllable_similarity, total_variation, EvalReport};
pub use run::{
    initial_checkpoint, metrics_csv, pretrain_generator, train, train_from, MetricsRow, TrainRun, METRICS_HEADER,
};
