use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tokenize::LyricsSequence;
use super::vocab::Vocab;
use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingLevel {
    Syllable,
    Word,
}

impl EmbeddingLevel {
    pub fn tokens(self, seq: &LyricsSequence) -> &[String] {
        match self {
            EmbeddingLevel::Syllable => &seq.syllables,
            EmbeddingLevel::Word => &seq.words,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 10,
            window: 2,
            negatives: 5,
            epochs: 30,
            batch_size: 64,
            lr: 0.01,
            seed: 0,
        }
    }
}

/// One learned vector per vocabulary id. Unknown tokens map to zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub level: EmbeddingLevel,
    pub vocab: Vocab,
    /// `[vocab.len(), dim]`
    pub vectors: Tensor,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vocab.id(token).map(|i| self.vectors.row(i))
    }

    /// The token's vector, or the reserved all-zero unknown vector.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        self.get(token)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.dim()])
    }

    /// `token,v1,..,vN` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("token");
        for i in 1..=self.dim() {
            out.push_str(&format!(",v{i}"));
        }
        out.push('\n');
        for (i, tok) in self.vocab.tokens().iter().enumerate() {
            out.push_str(tok);
            for v in self.vectors.row(i) {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Result of [`train_skipgram`]: the table plus mean loss per epoch.
#[derive(Debug, Clone)]
pub struct SkipGramRun {
    pub table: EmbeddingTable,
    pub epoch_losses: Vec<f64>,
}

/// Cumulative unigram^0.75 distribution for negative draws.
fn noise_cdf(counts: &[u64]) -> Vec<f64> {
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Skip-gram with negative sampling over one token level of the corpus.
pub fn train_skipgram(corpus: &[LyricsSequence], level: EmbeddingLevel, cfg: &SkipGramConfig) -> Result<SkipGramRun> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.window == 0 || cfg.dim == 0 || cfg.batch_size == 0 {
        return Err(Error::Config(
            "skip-gram window, dim and batch size must be at least 1".into(),
        ));
    }
    let vocab = Vocab::build(corpus.iter().flat_map(|s| level.tokens(s).iter().map(String::as_str)));
    if vocab.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if vocab.len() < cfg.negatives {
        return Err(Error::Config(format!(
            "vocabulary of {} tokens is smaller than {} negative samples",
            vocab.len(),
            cfg.negatives
        )));
    }

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for seq in corpus {
        let ids: Vec<usize> = level
            .tokens(seq)
            .iter()
            .map(|t| vocab.id(t).expect("built from corpus"))
            .collect();
        for (i, &c) in ids.iter().enumerate() {
            let lo = i.saturating_sub(cfg.window);
            let hi = (i + cfg.window + 1).min(ids.len());
            for (j, &o) in ids.iter().enumerate().take(hi).skip(lo) {
                if j != i {
                    pairs.push((c, o));
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let v = vocab.len();
    let half = 0.5 / cfg.dim as f64;
    let mut input = Tensor::new(
        vec![v, cfg.dim],
        (0..v * cfg.dim).map(|_| rng.random_range(-half..half)).collect(),
    )?;
    let mut output = Tensor::zeros(&[v, cfg.dim]);
    let mut state = AdamState::new([&input, &output]);
    let adam = AdamConfig::with_lr(cfg.lr);
    let cdf = noise_cdf(vocab.counts());

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        if pairs.is_empty() {
            break;
        }
        pairs.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in pairs.chunks(cfg.batch_size) {
            let centers: Vec<usize> = batch.iter().map(|p| p.0).collect();
            let contexts: Vec<usize> = batch.iter().map(|p| p.1).collect();
            let negatives: Vec<Vec<usize>> = (0..cfg.negatives)
                .map(|_| (0..batch.len()).map(|_| draw(&cdf, &mut rng)).collect())
                .collect();

            let mut g = Graph::new();
            let inp = g.param(input.clone());
            let out = g.param(output.clone());
            let c = g.gather(inp, &centers)?;
            let o = g.gather(out, &contexts)?;
            let prod = g.mul(c, o)?;
            let score = g.sum(prod, Some(1))?;
            let mut objective = g.log_sigmoid(score)?;
            for neg in &negatives {
                let nv = g.gather(out, neg)?;
                let prod = g.mul(c, nv)?;
                let s = g.sum(prod, Some(1))?;
                let ns = g.neg(s)?;
                let term = g.log_sigmoid(ns)?;
                objective = g.add(objective, term)?;
            }
            let mean = g.mean(objective, None)?;
            let loss = g.neg(mean)?;
            total += g.value(loss).item() * batch.len() as f64;

            let grads = g.backward(loss)?;
            let gs = [grads.wrt(inp), grads.wrt(out)];
            adam_step(&mut [&mut input, &mut output], &gs, &mut state, &adam)?;
        }
        epoch_losses.push(total / pairs.len() as f64);
    }

    Ok(SkipGramRun {
        table: EmbeddingTable {
            level,
            vocab,
            vectors: input,
        },
        epoch_losses,
    })
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
