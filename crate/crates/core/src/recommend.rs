//! Inference: greedy melodies with ranked attribute candidates, human
//! overrides, and a bounded store of results.

use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use lru::LruCache;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{contract, Error, Result};
use crate::gan::{argmax, generator_forward, Attribute, AttributeVocab};
use crate::lyrics::{encode, tokenize_lyrics};
use crate::score::{Note, Override, Score, ScoreDocument, DEFAULT_TEMPO_BPM};
use crate::train::Checkpoint;

pub const DEFAULT_K: usize = 5;
pub const SESSION_CAPACITY: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub value: f64,
    pub probability: f64,
}

/// Ranked candidates for the three attributes of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCandidates {
    pub pitch: Vec<Candidate>,
    pub duration: Vec<Candidate>,
    pub rest: Vec<Candidate>,
}

impl StepCandidates {
    pub fn get(&self, attr: Attribute) -> &[Candidate] {
        match attr {
            Attribute::Pitch => &self.pitch,
            Attribute::Duration => &self.duration,
            Attribute::Rest => &self.rest,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub score: Score,
    pub candidates: Vec<StepCandidates>,
    pub seed: u64,
    pub k: usize,
    /// Fingerprint of the checkpoint that produced the result.
    pub model: String,
}

/// Wire form of a [`GenerationResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationDocument {
    pub score: ScoreDocument,
    pub candidates: Vec<StepCandidates>,
    pub seed: u64,
    pub k: usize,
    pub model: String,
}

impl From<&GenerationResult> for GenerationDocument {
    fn from(r: &GenerationResult) -> Self {
        GenerationDocument {
            score: ScoreDocument::from(&r.score),
            candidates: r.candidates.clone(),
            seed: r.seed,
            k: r.k,
            model: r.model.clone(),
        }
    }
}

impl GenerationResult {
    /// Canonical JSON bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&GenerationDocument::from(self)).expect("plain data")
    }
}

/// The `k` most probable values, descending; ties go to the smaller value.
pub fn top_k(dist: &[f64], values: &[f64], k: usize) -> Result<Vec<Candidate>> {
    if dist.len() != values.len() {
        return Err(contract(format!(
            "{} probabilities for {} values",
            dist.len(),
            values.len()
        )));
    }
    if k == 0 || k > values.len() {
        return Err(contract(format!("k must lie in 1..={}, got {k}", values.len())));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(values[a].total_cmp(&values[b])));
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| Candidate {
            value: values[i],
            probability: dist[i],
        })
        .collect())
}

fn score_id(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    format!("s-{}", &hex::encode(h.finalize())[..16])
}

/// Greedy melody for `lyrics` with the noise drawn from `seed`. Each
/// candidate list holds `min(k, vocabulary size)` entries.
pub fn generate(lyrics: &str, ckpt: &Checkpoint, fingerprint: &str, seed: u64, k: usize) -> Result<GenerationResult> {
    let seq = tokenize_lyrics(lyrics)?;
    let vocab = &ckpt.attributes;
    if k == 0 {
        return Err(contract("k must be at least 1"));
    }
    let x = encode(&seq, &ckpt.syllable_table, &ckpt.word_table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<Vec<f64>> = (0..seq.len())
        .map(|_| {
            (0..ckpt.generator.noise_dim())
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect()
        })
        .collect();
    let out = generator_forward(&x, &noise, &ckpt.generator, ckpt.config.tau_end, &mut rng)?;
    let values = Attribute::ALL.map(|a| vocab.values(a));
    let mut notes = Vec::with_capacity(seq.len());
    let mut candidates = Vec::with_capacity(seq.len());
    for step in &out.distributions.steps {
        let idx = [0, 1, 2].map(|a| argmax(&step[a]));
        notes.push(Note {
            pitch: values[0][idx[0]] as u8,
            duration: values[1][idx[1]],
            rest_before: values[2][idx[2]],
        });
        let ranked = |a: usize| top_k(&step[a], &values[a], k.min(values[a].len()));
        candidates.push(StepCandidates {
            pitch: ranked(0)?,
            duration: ranked(1)?,
            rest: ranked(2)?,
        });
    }
    let id = score_id(&[
        fingerprint.as_bytes(),
        seq.syllables.join(" ").as_bytes(),
        &seed.to_le_bytes(),
        &(k as u64).to_le_bytes(),
    ]);
    Ok(GenerationResult {
        score: Score {
            id,
            syllables: seq.syllables,
            notes,
            tempo_bpm: DEFAULT_TEMPO_BPM,
            seed,
            overrides: Vec::new(),
        },
        candidates,
        seed,
        k,
        model: fingerprint.to_string(),
    })
}

/// Applies `overrides` to a copy of `parent`. Candidate lists and every
/// other step are left as they were; the recorded overrides are the parent's
/// merged with the new ones, later entries winning.
pub fn recompose(
    parent: &GenerationResult,
    overrides: &[Override],
    vocab: &AttributeVocab,
) -> Result<GenerationResult> {
    let steps = parent.score.notes.len();
    let mut child = parent.clone();
    for o in overrides {
        if o.step >= steps {
            return Err(contract(format!(
                "override step {} out of range for {steps} steps",
                o.step
            )));
        }
        if vocab.index_of(o.attribute, o.value).is_none() {
            return Err(contract(format!(
                "override at step {}: {} value {} is not in the vocabulary",
                o.step, o.attribute, o.value
            )));
        }
        child.score.notes[o.step].set(o.attribute, o.value);
        child
            .score
            .overrides
            .retain(|e| (e.step, e.attribute) != (o.step, o.attribute));
        child.score.overrides.push(*o);
    }
    child.score.overrides.sort_by_key(|o| (o.step, o.attribute));
    let applied = serde_json::to_string(&child.score.overrides).expect("plain data");
    child.score.id = score_id(&[parent.score.id.as_bytes(), applied.as_bytes()]);
    Ok(child)
}

/// Bounded, thread-safe map from opaque ids to results.
pub struct SessionStore {
    entries: Mutex<LruCache<String, Arc<GenerationResult>>>,
    counter: AtomicU64,
}

impl SessionStore {
    pub fn new(capacity: usize) -> SessionStore {
        SessionStore {
            entries: Mutex::new(LruCache::new(NonZeroUsize::new(capacity.max(1)).expect("positive"))),
            counter: AtomicU64::new(0),
        }
    }

    pub fn put(&self, result: GenerationResult) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let id = format!("r{n}-{:08x}", rand::rng().random::<u32>());
        self.entries
            .lock()
            .expect("store lock")
            .put(id.clone(), Arc::new(result));
        id
    }

    pub fn get(&self, id: &str) -> Result<Arc<GenerationResult>> {
        self.entries
            .lock()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for SessionStore {
    fn default() -> Self {
        SessionStore::new(SESSION_CAPACITY)
    }
}

/// A loaded checkpoint plus the session store; shared by request handlers.
pub struct Recommender {
    checkpoint: Checkpoint,
    fingerprint: String,
    store: SessionStore,
}

impl Recommender {
    pub fn new(checkpoint: Checkpoint) -> Recommender {
        Recommender {
            fingerprint: checkpoint.fingerprint(),
            checkpoint,
            store: SessionStore::default(),
        }
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn generate(&self, lyrics: &str, seed: u64, k: usize) -> Result<(String, Arc<GenerationResult>)> {
        let result = generate(lyrics, &self.checkpoint, &self.fingerprint, seed, k)?;
        let id = self.store.put(result);
        Ok((id.clone(), self.store.get(&id)?))
    }

    pub fn recompose(&self, result_id: &str, overrides: &[Override]) -> Result<(String, Arc<GenerationResult>)> {
        let parent = self.store.get(result_id)?;
        let child = recompose(&parent, overrides, &self.checkpoint.attributes)?;
        let id = self.store.put(child);
        Ok((id.clone(), self.store.get(&id)?))
    }

    pub fn get(&self, result_id: &str) -> Result<Arc<GenerationResult>> {
        self.store.get(result_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::ModelConfig;
    use crate::lyrics::SkipGramConfig;
    use crate::train::{initial_checkpoint, nursery_corpus, TrainConfig};
    use std::sync::OnceLock;

    fn ckpt() -> &'static (Checkpoint, String) {
        static CKPT: OnceLock<(Checkpoint, String)> = OnceLock::new();
        CKPT.get_or_init(|| {
            let cfg = TrainConfig {
                model: ModelConfig {
                    hidden: 8,
                    disc_hidden: 8,
                    layers: 1,
                    noise_dim: 4,
                    posterior_hidden: 4,
                    cond_dim: 20,
                },
                embedding: SkipGramConfig {
                    epochs: 2,
                    ..SkipGramConfig::default()
                },
                ..TrainConfig::default()
            };
            let c = initial_checkpoint(&nursery_corpus(), &cfg).unwrap();
            let f = c.fingerprint();
            (c, f)
        })
    }

    fn gen(lyrics: &str, seed: u64, k: usize) -> GenerationResult {
        let (c, f) = ckpt();
        generate(lyrics, c, f, seed, k).unwrap()
    }

    #[test]
    fn top_k_examples() {
        let c = top_k(&[0.1, 0.7, 0.2], &[48.0, 50.0, 52.0], 2).unwrap();
        assert_eq!(
            c,
            vec![
                Candidate {
                    value: 50.0,
                    probability: 0.7
                },
                Candidate {
                    value: 52.0,
                    probability: 0.2
                }
            ]
        );
        let all = top_k(&[0.1, 0.7, 0.2], &[48.0, 50.0, 52.0], 3).unwrap();
        assert!((all.iter().map(|c| c.probability).sum::<f64>() - 1.0).abs() < 1e-6);
        let uniform = top_k(&[0.25; 4], &[0.0, 0.5, 1.0, 2.0], 4).unwrap();
        let vals: Vec<f64> = uniform.iter().map(|c| c.value).collect();
        assert_eq!(vals, [0.0, 0.5, 1.0, 2.0]);
        assert!(top_k(&[0.5, 0.5], &[1.0, 2.0], 0).is_err());
        assert!(top_k(&[0.5, 0.5], &[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn twinkle_has_seven_steps() {
        let r = gen("twinkle twinkle little star", 1, DEFAULT_K);
        assert_eq!(r.score.notes.len(), 7);
        assert_eq!(r.candidates.len(), 7);
        assert_eq!(r.score.syllables, ["twin", "kle", "twin", "kle", "lit", "tle", "star"]);
        for c in &r.candidates {
            for a in Attribute::ALL {
                assert_eq!(c.get(a).len(), DEFAULT_K.min(ckpt().0.attributes.size(a)));
                assert!(c.get(a).windows(2).all(|w| w[0].probability >= w[1].probability));
            }
        }
        r.score.validate().unwrap();
    }

    #[test]
    fn generation_is_deterministic_and_seeded() {
        let a = gen("row row row your boat", 9, 3);
        assert_eq!(a, gen("row row row your boat", 9, 3));
        assert_eq!(a.to_json(), gen("row row row your boat", 9, 3).to_json());
        assert_ne!(a.score.id, gen("row row row your boat", 10, 3).score.id);
    }

    #[test]
    fn k_one_matches_greedy_choice() {
        let r = gen("mary had a little lamb", 4, 1);
        for (n, c) in r.score.notes.iter().zip(&r.candidates) {
            for a in Attribute::ALL {
                assert_eq!(c.get(a)[0].value, n.get(a));
            }
        }
    }

    #[test]
    fn empty_lyrics_fail_to_tokenize() {
        let (c, f) = ckpt();
        assert!(matches!(generate("  ... ", c, f, 0, 5), Err(Error::Tokenize(_))));
        assert!(generate("la", c, f, 0, 0).is_err());
        let r = generate("la", c, f, 0, 5).unwrap();
        assert_eq!((r.candidates[0].pitch.len(), r.candidates[0].rest.len()), (5, 4));
    }

    #[test]
    fn recomposition_semantics() {
        let (c, _) = ckpt();
        let parent = gen("hickory dickory dock", 2, 5);
        let same = recompose(&parent, &[], &c.attributes).unwrap();
        assert_ne!(same.score.id, parent.score.id);
        assert_eq!(same.score.notes, parent.score.notes);
        assert_eq!(same.candidates, parent.candidates);

        let alt = parent.candidates[2].pitch[1].value;
        let o = Override {
            step: 2,
            attribute: Attribute::Pitch,
            value: alt,
        };
        let child = recompose(&parent, &[o], &c.attributes).unwrap();
        for (i, (a, b)) in child.score.notes.iter().zip(&parent.score.notes).enumerate() {
            if i == 2 {
                assert_eq!(a.pitch as f64, alt);
                assert_eq!((a.duration, a.rest_before), (b.duration, b.rest_before));
            } else {
                assert_eq!(a, b);
            }
        }
        assert_eq!(child.score.overrides, vec![o]);
        assert_eq!(child.candidates, parent.candidates);

        let mut rank1 = Vec::new();
        for (step, cands) in child.candidates.iter().enumerate() {
            for a in Attribute::ALL {
                rank1.push(Override {
                    step,
                    attribute: a,
                    value: cands.get(a)[0].value,
                });
            }
        }
        let back = recompose(&child, &rank1, &c.attributes).unwrap();
        assert_eq!(back.score.notes, parent.score.notes);
    }

    #[test]
    fn invalid_overrides_are_named() {
        let (c, _) = ckpt();
        let parent = gen("hickory dickory dock", 2, 5);
        let err = recompose(
            &parent,
            &[Override {
                step: 99,
                attribute: Attribute::Rest,
                value: 0.0,
            }],
            &c.attributes,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("step 99"), "{err}");
        let err = recompose(
            &parent,
            &[Override {
                step: 1,
                attribute: Attribute::Duration,
                value: 3.0,
            }],
            &c.attributes,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("duration value 3"), "{err}");
    }

    #[test]
    fn store_is_lru_with_unique_ids() {
        let r = gen("la", 0, 1);
        let store = SessionStore::new(SESSION_CAPACITY);
        let first = store.put(r.clone());
        assert_eq!(*store.get(&first).unwrap(), r);
        let second = store.put(r.clone());
        store.get(&first).unwrap();
        let mut ids = std::collections::HashSet::new();
        ids.insert(first.clone());
        ids.insert(second.clone());
        for _ in 0..255 {
            assert!(ids.insert(store.put(r.clone())));
        }
        assert_eq!(store.len(), SESSION_CAPACITY);
        assert!(store.get(&first).is_ok());
        assert_eq!(store.get(&second), Err(Error::NotFound(second.clone())));
        assert!(matches!(store.get("nope"), Err(Error::NotFound(_))));
    }

    #[test]
    fn recompose_leaves_the_parent_in_place() {
        let (c, _) = ckpt();
        let svc = Recommender::new(c.clone());
        let (pid, parent) = svc.generate("sing a song", 3, 2).unwrap();
        let o = Override {
            step: 0,
            attribute: Attribute::Rest,
            value: 2.0,
        };
        let (cid, child) = svc.recompose(&pid, &[o]).unwrap();
        assert_ne!(pid, cid);
        assert_eq!(*svc.get(&pid).unwrap(), *parent);
        assert_eq!(child.score.notes[0].rest_before, 2.0);
        assert!(matches!(svc.recompose("r0-missing", &[]), Err(Error::NotFound(_))));
    }
}
