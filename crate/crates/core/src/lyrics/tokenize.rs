use serde::{Deserialize, Serialize};

use super::syllable::syllabify;
use crate::error::{Error, Result};

/// Syllable and word streams of one lyric, with the syllable→word alignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LyricsSequence {
    pub syllables: Vec<String>,
    pub word_index_of_syllable: Vec<usize>,
    pub words: Vec<String>,
}

impl LyricsSequence {
    pub fn len(&self) -> usize {
        self.syllables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syllables.is_empty()
    }

    /// Syllables regrouped by word and joined.
    pub fn rejoined_words(&self) -> Vec<String> {
        let mut out = vec![String::new(); self.words.len()];
        for (s, &w) in self.syllables.iter().zip(&self.word_index_of_syllable) {
            out[w].push_str(s);
        }
        out
    }
}

/// Splits on anything that is neither a letter nor an apostrophe, lowercases,
/// and syllabifies each word.
pub fn tokenize_lyrics(text: &str) -> Result<LyricsSequence> {
    let mut seq = LyricsSequence {
        syllables: Vec::new(),
        word_index_of_syllable: Vec::new(),
        words: Vec::new(),
    };
    for raw in text.split(|c: char| !(c.is_alphabetic() || c == '\'')) {
        if !raw.chars().any(char::is_alphabetic) {
            continue;
        }
        let parts = syllabify(raw)?;
        let word = parts.concat();
        let idx = seq.words.len();
        seq.words.push(word);
        for p in parts {
            seq.syllables.push(p);
            seq.word_index_of_syllable.push(idx);
        }
    }
    if seq.words.is_empty() {
        return Err(Error::Tokenize(format!("no words in {text:?}")));
    }
    Ok(seq)
}
