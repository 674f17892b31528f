//! Concrete notes, syllable-aligned scores, Standard MIDI Files and the
//! canonical score JSON.

mod json;
mod midi;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::gan::{Attribute, AttributeVocab};

pub use json::{score_from_json, score_to_json, ScoreDocument};
pub use midi::{
    read_midi, read_vlq, score_events, score_from_midi, write_midi, write_vlq, MidiEvent, MidiEventKind, MidiFile,
    TICKS_PER_QUARTER,
};

pub const DEFAULT_TEMPO_BPM: f64 = 100.0;
pub const NOTE_VELOCITY: u8 = 90;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub pitch: u8,
    /// Quarter notes.
    pub duration: f64,
    /// Silence before the note, in quarter notes.
    pub rest_before: f64,
}

impl Note {
    pub fn get(&self, attr: Attribute) -> f64 {
        match attr {
            Attribute::Pitch => self.pitch as f64,
            Attribute::Duration => self.duration,
            Attribute::Rest => self.rest_before,
        }
    }

    pub fn set(&mut self, attr: Attribute, value: f64) {
        match attr {
            Attribute::Pitch => self.pitch = value as u8,
            Attribute::Duration => self.duration = value,
            Attribute::Rest => self.rest_before = value,
        }
    }
}

/// A human replacement of one chosen attribute value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub step: usize,
    pub attribute: Attribute,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub id: String,
    pub syllables: Vec<String>,
    pub notes: Vec<Note>,
    pub tempo_bpm: f64,
    pub seed: u64,
    pub overrides: Vec<Override>,
}

fn whole_ticks(quarters: f64) -> bool {
    let t = quarters * TICKS_PER_QUARTER as f64;
    t.is_finite() && t >= 0.0 && t.fract() == 0.0 && t < u32::MAX as f64
}

impl Score {
    pub fn validate(&self) -> Result<()> {
        if self.notes.len() != self.syllables.len() {
            return Err(contract(format!(
                "{} notes for {} syllables",
                self.notes.len(),
                self.syllables.len()
            )));
        }
        if !(self.tempo_bpm > 0.0 && self.tempo_bpm.is_finite()) {
            return Err(contract(format!("tempo must be positive, got {}", self.tempo_bpm)));
        }
        for (i, n) in self.notes.iter().enumerate() {
            if n.pitch > 127 || !(n.duration > 0.0) || !whole_ticks(n.duration) || !whole_ticks(n.rest_before) {
                return Err(contract(format!("note {i} is not representable: {n:?}")));
            }
        }
        Ok(())
    }

    /// Total length in ticks, rests included.
    pub fn total_ticks(&self) -> u64 {
        self.notes
            .iter()
            .map(|n| ((n.rest_before + n.duration) * TICKS_PER_QUARTER as f64) as u64)
            .sum()
    }
}

/// Looks up concrete values for per-step `[pitch, duration, rest]` indices.
pub fn decode_attributes(indices: &[[usize; 3]], vocab: &AttributeVocab) -> Result<Vec<Note>> {
    indices
        .iter()
        .enumerate()
        .map(|(step, idx)| {
            let mut vals = [0.0; 3];
            for a in Attribute::ALL {
                vals[a.index()] = vocab.value(a, idx[a.index()]).ok_or_else(|| {
                    contract(format!(
                        "step {step}: {a} index {} outside vocabulary of {}",
                        idx[a.index()],
                        vocab.size(a)
                    ))
                })?;
            }
            Ok(Note {
                pitch: vals[0] as u8,
                duration: vals[1],
                rest_before: vals[2],
            })
        })
        .collect()
}

/// Inverse of [`decode_attributes`] for one note.
pub fn encode_note(note: &Note, vocab: &AttributeVocab) -> Result<[usize; 3]> {
    let mut out = [0; 3];
    for a in Attribute::ALL {
        out[a.index()] = vocab
            .index_of(a, note.get(a))
            .ok_or_else(|| contract(format!("{a} value {} not in vocabulary", note.get(a))))?;
    }
    Ok(out)
}
