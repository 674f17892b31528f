//! Lyrics tokenization and the two skip-gram encoders.

mod encode;
mod skipgram;
mod syllable;
mod tokenize;
mod vocab;

pub use encode::{encode, LyricsEmbedding};
pub use skipgram::{cosine, train_skipgram, EmbeddingLevel, EmbeddingTable, SkipGramConfig, SkipGramRun};
pub use syllable::{normalize_word, syllabify};
pub use tokenize::{tokenize_lyrics, LyricsSequence};
pub use vocab::Vocab;
