use serde::{Deserialize, Serialize};

use super::{Note, Override, Score};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StepJson {
    syllable: String,
    pitch: u8,
    duration: f64,
    rest: f64,
}

/// Wire form of a [`Score`]; field order is the canonical key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDocument {
    id: String,
    tempo_bpm: f64,
    seed: u64,
    steps: Vec<StepJson>,
    overrides: Vec<Override>,
}

impl From<&Score> for ScoreDocument {
    fn from(s: &Score) -> Self {
        ScoreDocument {
            id: s.id.clone(),
            tempo_bpm: s.tempo_bpm,
            seed: s.seed,
            steps: s
                .syllables
                .iter()
                .zip(&s.notes)
                .map(|(syl, n)| StepJson {
                    syllable: syl.clone(),
                    pitch: n.pitch,
                    duration: n.duration,
                    rest: n.rest_before,
                })
                .collect(),
            overrides: s.overrides.clone(),
        }
    }
}

/// Canonical UTF-8 JSON: fixed key order, no insignificant whitespace.
pub fn score_to_json(score: &Score) -> String {
    serde_json::to_string(&ScoreDocument::from(score)).expect("plain data")
}

pub fn score_from_json(text: &str) -> Result<Score> {
    let j: ScoreDocument = serde_json::from_str(text).map_err(|e| Error::Contract(format!("score json: {e}")))?;
    Ok(j.into_score())
}

impl ScoreDocument {
    pub fn into_score(self) -> Score {
        let j = self;
        let (syllables, notes) = j
            .steps
            .into_iter()
            .map(|s| {
                (
                    s.syllable,
                    Note {
                        pitch: s.pitch,
                        duration: s.duration,
                        rest_before: s.rest,
                    },
                )
            })
            .unzip();
        Score {
            id: j.id,
            syllables,
            notes,
            tempo_bpm: j.tempo_bpm,
            seed: j.seed,
            overrides: j.overrides,
        }
    }
}
