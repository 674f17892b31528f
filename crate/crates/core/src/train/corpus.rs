use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gan::{Attribute, AttributeVocab};
use crate::lyrics::{tokenize_lyrics, LyricsSequence};
use crate::score::Note;

/// Hand-written nursery-style songs, one JSON object per line.
pub const NURSERY_JSONL: &str = include_str!("../../data/nursery.jsonl");

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub lyrics: LyricsSequence,
    /// Attribute indices per syllable.
    pub melody: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNote {
    pitch: f64,
    duration: f64,
    rest: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSong {
    lyrics: String,
    notes: Vec<RawNote>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lyrics(&self) -> Vec<LyricsSequence> {
        self.entries.iter().map(|e| e.lyrics.clone()).collect()
    }

    /// Empirical distribution of each attribute over all steps.
    pub fn marginals(&self, vocab: &AttributeVocab) -> [Vec<f64>; 3] {
        let mut out = vocab.sizes().map(|n| vec![0.0; n]);
        let total: usize = self.entries.iter().map(|e| e.melody.len()).sum();
        for e in &self.entries {
            for idx in &e.melody {
                for a in 0..3 {
                    out[a][idx[a]] += 1.0 / total as f64;
                }
            }
        }
        out
    }
}

fn line_error(line: usize, message: impl Into<String>) -> Error {
    Error::Corpus {
        line,
        message: message.into(),
    }
}

fn parse_line(text: &str, line: usize, vocab: &AttributeVocab) -> Result<CorpusEntry> {
    let raw: RawSong = serde_json::from_str(text)
        .map_err(|e| line_error(line, format!("parse error at column {}: {e}", e.column())))?;
    let lyrics = tokenize_lyrics(&raw.lyrics).map_err(|e| line_error(line, e.to_string()))?;
    if lyrics.len() != raw.notes.len() {
        return Err(line_error(
            line,
            format!(
                "alignment error: expected {} notes for {} syllables, found {}",
                lyrics.len(),
                lyrics.len(),
                raw.notes.len()
            ),
        ));
    }
    let melody = raw
        .notes
        .iter()
        .map(|n| {
            let mut idx = [0; 3];
            for (a, v) in Attribute::ALL.into_iter().zip([n.pitch, n.duration, n.rest]) {
                idx[a.index()] = vocab
                    .index_of(a, v)
                    .ok_or_else(|| line_error(line, format!("unknown {a} value {v}")))?;
            }
            Ok(idx)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusEntry { lyrics, melody })
}

/// Parses JSON-lines text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_corpus(text: &str, vocab: &AttributeVocab) -> Result<Corpus> {
    let entries = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l, i + 1, vocab))
        .collect::<Result<Vec<_>>>()?;
    if entries.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Corpus { entries })
}

pub fn load_corpus(path: &Path, vocab: &AttributeVocab) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_corpus(&text, vocab)
}

/// The bundled nursery corpus under the default attribute vocabulary.
pub fn nursery_corpus() -> Corpus {
    parse_corpus(NURSERY_JSONL, &AttributeVocab::default()).expect("bundled corpus is valid")
}

/// Notes of one entry.
pub fn entry_notes(entry: &CorpusEntry, vocab: &AttributeVocab) -> Result<Vec<Note>> {
    crate::score::decode_attributes(&entry.melody, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nursery_corpus_is_aligned() {
        let c = nursery_corpus();
        assert_eq!(c.len(), 20);
        for e in &c.entries {
            assert_eq!(e.melody.len(), e.lyrics.len());
        }
        let m = c.marginals(&AttributeVocab::default());
        for dist in m {
            assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn misaligned_entry_names_the_line() {
        let v = AttributeVocab::default();
        let good = r#"{"lyrics":"la la","notes":[{"pitch":60,"duration":1.0,"rest":0.0},{"pitch":62,"duration":1.0,"rest":0.0}]}"#;
        let bad = r#"{"lyrics":"hap py sun ny day","notes":[{"pitch":60,"duration":1,"rest":0},{"pitch":60,"duration":1,"rest":0},{"pitch":60,"duration":1,"rest":0},{"pitch":60,"duration":1,"rest":0}]}"#;
        let err = parse_corpus(&format!("{good}\n\n{bad}\n"), &v).unwrap_err();
        match err {
            Error::Corpus { line, message } => {
                assert_eq!(line, 3);
                assert!(
                    message.contains("expected 5") && message.contains("found 4"),
                    "{message}"
                );
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_value_and_parse_errors() {
        let v = AttributeVocab::default();
        let err = parse_corpus(r#"{"lyrics":"la","notes":[{"pitch":60,"duration":0.3,"rest":0}]}"#, &v)
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 1") && err.contains("duration value 0.3"), "{err}");
        let err = parse_corpus("{\"lyrics\": 3}", &v).unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("column"), "{err}");
    }

    #[test]
    fn empty_input() {
        let v = AttributeVocab::default();
        assert!(matches!(parse_corpus("", &v), Err(Error::EmptyCorpus)));
        assert!(matches!(parse_corpus("\n  \n", &v), Err(Error::EmptyCorpus)));
    }
}
