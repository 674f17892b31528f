use super::skipgram::EmbeddingTable;
use super::tokenize::LyricsSequence;
use crate::error::Result;
use crate::tensor::Tensor;

/// Per-syllable condition vectors: syllable vector followed by the
/// enclosing word's vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LyricsEmbedding {
    /// `[syllables, syllable_dim + word_dim]`
    pub vectors: Tensor,
}

impl LyricsEmbedding {
    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn width(&self) -> usize {
        self.vectors.cols()
    }

    pub fn step(&self, t: usize) -> &[f64] {
        self.vectors.row(t)
    }
}

pub fn encode(seq: &LyricsSequence, syllables: &EmbeddingTable, words: &EmbeddingTable) -> Result<LyricsEmbedding> {
    let rows: Vec<Vec<f64>> = seq
        .syllables
        .iter()
        .zip(&seq.word_index_of_syllable)
        .map(|(s, &w)| {
            let mut v = syllables.lookup(s);
            v.extend(words.lookup(&seq.words[w]));
            v
        })
        .collect();
    Ok(LyricsEmbedding {
        vectors: Tensor::from_rows(&rows)?,
    })
}
