use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Pitch,
    Duration,
    Rest,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Pitch, Attribute::Duration, Attribute::Rest];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Pitch => "pitch",
            Attribute::Duration => "duration",
            Attribute::Rest => "rest",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Attribute> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown attribute {s:?}")))
    }
}

/// Admissible values of each melody attribute. Durations and rests are in
/// quarter notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeVocab {
    pub pitch_values: Vec<u8>,
    pub duration_values: Vec<f64>,
    pub rest_values: Vec<f64>,
}

impl Default for AttributeVocab {
    fn default() -> Self {
        AttributeVocab {
            pitch_values: (48..=83).collect(),
            duration_values: vec![0.25, 0.5, 1.0, 1.5, 2.0, 4.0],
            rest_values: vec![0.0, 0.5, 1.0, 2.0],
        }
    }
}

impl AttributeVocab {
    pub fn new(pitch: Vec<u8>, duration: Vec<f64>, rest: Vec<f64>) -> Result<AttributeVocab> {
        let v = AttributeVocab {
            pitch_values: pitch,
            duration_values: duration,
            rest_values: rest,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        for a in Attribute::ALL {
            let vals = self.values(a);
            if vals.is_empty() {
                return Err(Error::Config(format!("{a} vocabulary is empty")));
            }
            if vals.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config(format!("{a} values must be strictly increasing")));
            }
        }
        if self.pitch_values.iter().any(|&p| p > 127) {
            return Err(Error::Config("pitch values must lie in 0..=127".into()));
        }
        if self.duration_values[0] <= 0.0 || self.rest_values[0] < 0.0 {
            return Err(Error::Config("durations must be positive, rests non-negative".into()));
        }
        Ok(())
    }

    pub fn values(&self, attr: Attribute) -> Vec<f64> {
        match attr {
            Attribute::Pitch => self.pitch_values.iter().map(|&p| p as f64).collect(),
            Attribute::Duration => self.duration_values.clone(),
            Attribute::Rest => self.rest_values.clone(),
        }
    }

    pub fn size(&self, attr: Attribute) -> usize {
        match attr {
            Attribute::Pitch => self.pitch_values.len(),
            Attribute::Duration => self.duration_values.len(),
            Attribute::Rest => self.rest_values.len(),
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        Attribute::ALL.map(|a| self.size(a))
    }

    pub fn index_of(&self, attr: Attribute, value: f64) -> Option<usize> {
        self.values(attr).iter().position(|&v| v == value)
    }

    pub fn value(&self, attr: Attribute, index: usize) -> Option<f64> {
        self.values(attr).get(index).copied()
    }
}
