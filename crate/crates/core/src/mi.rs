//! Mutual-information consistency between lyric embeddings `x` and the
//! generator's interpretable vectors `M(x)`.
//!
//! A posterior network `Q` predicts `x` back from `M(x)`. With `Q` read as a
//! unit-variance Gaussian, `E[log Q(x | M(x))]` is (up to a constant) the
//! negative half squared reconstruction error, which lower-bounds
//! `I(x; M(x)) - H(x)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{contract, Error, Result};
use crate::gan::{sample_noise, stack_conditions, GeneratorParams};
use crate::lyrics::{cosine, encode, EmbeddingTable, LyricsEmbedding, LyricsSequence};
use crate::nn::{BoundLinear, Linear, Module};
use crate::tensor::Tensor;

/// Two-layer network `Q`: tanh hidden layer, bias-free linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    pub hidden: Linear,
    pub output: Linear,
}

pub struct BoundPosterior {
    hidden: BoundLinear,
    output: BoundLinear,
    pub vars: Vec<Var>,
}

impl PosteriorParams {
    pub fn new(width: usize, hidden: usize, rng: &mut impl Rng) -> PosteriorParams {
        PosteriorParams {
            hidden: Linear::new(width, hidden, true, rng),
            output: Linear::new(hidden, width, false, rng),
        }
    }

    pub fn width(&self) -> usize {
        self.hidden.input_width()
    }

    pub fn bind(&self, g: &mut Graph) -> BoundPosterior {
        let mut vars = Vec::new();
        let hidden = self.hidden.bind(g, &mut vars);
        let output = self.output.bind(g, &mut vars);
        BoundPosterior { hidden, output, vars }
    }
}

impl Module for PosteriorParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.hidden.tensors();
        v.extend(self.output.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.hidden.tensors_mut();
        v.extend(self.output.tensors_mut());
        v
    }
}

impl BoundPosterior {
    pub fn forward(&self, g: &mut Graph, m: Var) -> Result<Var> {
        let h = self.hidden.forward(g, m)?;
        let h = g.tanh(h);
        self.output.forward(g, h)
    }
}

/// Predicted lyric embedding for each interpretable vector.
pub fn q_forward(m_seq: &[Vec<f64>], q: &PosteriorParams) -> Result<Vec<Vec<f64>>> {
    if let Some(bad) = m_seq.iter().find(|m| m.len() != q.width()) {
        return Err(Error::Dimension {
            op: "q_forward",
            left: vec![q.width()],
            right: vec![bad.len()],
        });
    }
    if m_seq.is_empty() {
        return Ok(Vec::new());
    }
    let mut g = Graph::new();
    let bound = q.bind(&mut g);
    let m = g.constant(Tensor::from_rows(m_seq)?);
    let out = bound.forward(&mut g, m)?;
    let t = g.value(out);
    Ok((0..t.rows()).map(|i| t.row(i).to_vec()).collect())
}

/// `-(1/T) Σ_t ½‖x_t - x̂_t‖²`; never positive, zero iff exact.
pub fn mi_lower_bound(x: &LyricsEmbedding, x_hat: &[Vec<f64>]) -> Result<f64> {
    if x_hat.len() != x.len() {
        return Err(contract(format!("{} predictions for {} steps", x_hat.len(), x.len())));
    }
    let mut total = 0.0;
    for (t, pred) in x_hat.iter().enumerate() {
        let target = x.step(t);
        if pred.len() != target.len() {
            return Err(Error::Dimension {
                op: "mi_lower_bound",
                left: vec![target.len()],
                right: vec![pred.len()],
            });
        }
        total += 0.5 * target.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(-total / x.len() as f64)
}

/// Graph form of the bound, averaged over steps and batch rows.
/// `cond[t]` and `interp[t]` are `[batch, width]`.
pub fn mi_bound_node(g: &mut Graph, q: &BoundPosterior, cond: &[Tensor], interp: &[Var]) -> Result<Var> {
    if cond.len() != interp.len() || cond.is_empty() {
        return Err(contract("mutual-information bound needs matching non-empty steps"));
    }
    let batch = cond[0].rows();
    let mut total: Option<Var> = None;
    for (c, &m) in cond.iter().zip(interp) {
        let pred = q.forward(g, m)?;
        let target = g.constant(c.clone());
        let diff = g.sub(target, pred)?;
        let sq = g.square(diff)?;
        let s = g.sum(sq, None)?;
        total = Some(match total {
            Some(acc) => g.add(acc, s)?,
            None => s,
        });
    }
    let scale = -0.5 / (cond.len() * batch) as f64;
    g.scale(total.expect("non-empty"), scale)
}

/// Loss contribution `-lambda · bound`; a literal zero when `lambda == 0`.
pub fn mi_objective_node(
    g: &mut Graph,
    q: &BoundPosterior,
    cond: &[Tensor],
    interp: &[Var],
    lambda_mi: f64,
) -> Result<Var> {
    if !(lambda_mi >= 0.0) {
        return Err(contract(format!("lambda_mi must be non-negative, got {lambda_mi}")));
    }
    if lambda_mi == 0.0 {
        return Ok(g.scalar(0.0));
    }
    let bound = mi_bound_node(g, q, cond, interp)?;
    g.scale(bound, -lambda_mi)
}

/// Value of the MI term and its gradients, aligned with
/// [`Module::tensors`] of the generator and of `Q`.
#[derive(Debug, Clone)]
pub struct MiObjective {
    pub value: f64,
    pub generator_grads: Vec<Tensor>,
    pub posterior_grads: Vec<Tensor>,
}

pub fn mi_training_objective(
    x: &LyricsEmbedding,
    noise: &[Tensor],
    generator: &GeneratorParams,
    q: &PosteriorParams,
    tau: f64,
    lambda_mi: f64,
    rng: &mut impl Rng,
) -> Result<MiObjective> {
    let cond = stack_conditions(&[x])?;
    let mut g = Graph::new();
    let bg = generator.bind(&mut g);
    let bq = q.bind(&mut g);
    let nodes = bg.forward(&mut g, &cond, noise, tau, rng)?;
    let loss = mi_objective_node(&mut g, &bq, &cond, &nodes.interp, lambda_mi)?;
    let grads = g.backward(loss)?;
    Ok(MiObjective {
        value: g.value(loss).item(),
        generator_grads: bg.vars.iter().map(|&v| grads.wrt(v)).collect(),
        posterior_grads: bq.vars.iter().map(|&v| grads.wrt(v)).collect(),
    })
}

/// Mean squared error per coordinate between `x` and `Q(M(x))`.
pub fn reconstruction_mse(x: &LyricsEmbedding, x_hat: &[Vec<f64>]) -> Result<f64> {
    let bound = mi_lower_bound(x, x_hat)?;
    Ok(-2.0 * bound / x.width() as f64)
}

/// Mean interpretable vector per step over `samples` noise draws.
pub fn interp_means(
    generator: &GeneratorParams,
    x: &LyricsEmbedding,
    samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if samples == 0 {
        return Err(contract("need at least one noise sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch: Vec<&LyricsEmbedding> = vec![x; samples];
    let cond = stack_conditions(&batch)?;
    let noise = sample_noise(x.len(), samples, generator.noise_dim(), &mut rng);
    let mut g = Graph::new();
    let bound = generator.bind(&mut g);
    let nodes = bound.forward(&mut g, &cond, &noise, 1.0, &mut rng)?;
    Ok(nodes
        .interp
        .iter()
        .map(|&v| {
            let t = g.value(v);
            let mut mean = vec![0.0; t.cols()];
            for r in 0..t.rows() {
                for (m, v) in mean.iter_mut().zip(t.row(r)) {
                    *m += v / samples as f64;
                }
            }
            mean
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapSource {
    /// Raw syllable skip-gram vectors.
    Embedding,
    /// Mean generator vectors `M(x)` for the syllable.
    Interpretable,
}

impl std::str::FromStr for HeatmapSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<HeatmapSource> {
        match s {
            "embedding" => Ok(HeatmapSource::Embedding),
            "interpretable" => Ok(HeatmapSource::Interpretable),
            other => Err(Error::Config(format!("unknown heatmap source {other:?}"))),
        }
    }
}

/// Pairwise cosine similarities between labelled vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn from_vectors(labels: Vec<String>, vectors: &[Vec<f64>]) -> SimilarityMatrix {
        let n = vectors.len();
        let mut values = vec![vec![0.0; n]; n];
        for i in 0..n {
            values[i][i] = 1.0;
            for j in i + 1..n {
                let c = cosine(&vectors[i], &vectors[j]);
                values[i][j] = c;
                values[j][i] = c;
            }
        }
        SimilarityMatrix { labels, values }
    }

    /// Header row and column of labels, values with six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.values) {
            out.push_str(l);
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }

    /// Binary grayscale PGM, `cell` pixels per entry; similarity 1 is black.
    pub fn to_pgm(&self, cell: usize) -> Vec<u8> {
        let n = self.labels.len();
        let side = n * cell.max(1);
        let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
        for py in 0..side {
            for px in 0..side {
                let v = self.values[py / cell.max(1)][px / cell.max(1)].clamp(-1.0, 1.0);
                out.push((255.0 * (1.0 - v) / 2.0).round() as u8);
            }
        }
        out
    }
}

/// Similarity of syllables under the chosen representation. For
/// [`HeatmapSource::Interpretable`], a syllable's vector is the mean `M(x)`
/// over its occurrences in `probe` (or over a one-syllable lyric when it
/// never occurs there), each averaged over `samples` noise draws.
#[allow(clippy::too_many_arguments)]
pub fn syllable_heatmap(
    generator: &GeneratorParams,
    syllable_table: &EmbeddingTable,
    word_table: &EmbeddingTable,
    syllables: &[String],
    source: HeatmapSource,
    probe: &[LyricsSequence],
    samples: usize,
    seed: u64,
) -> Result<SimilarityMatrix> {
    let missing: Vec<String> = syllables
        .iter()
        .filter(|s| syllable_table.get(s).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Lookup(missing));
    }
    let vectors: Vec<Vec<f64>> = match source {
        HeatmapSource::Embedding => syllables.iter().map(|s| syllable_table.lookup(s)).collect(),
        HeatmapSource::Interpretable => {
            let mut sums = vec![vec![0.0; generator.interp.output_width()]; syllables.len()];
            let mut counts = vec![0usize; syllables.len()];
            for seq in probe {
                let hits: Vec<(usize, usize)> = seq
                    .syllables
                    .iter()
                    .enumerate()
                    .flat_map(|(t, s)| {
                        syllables
                            .iter()
                            .enumerate()
                            .filter(move |(_, q)| *q == s)
                            .map(move |(k, _)| (k, t))
                    })
                    .collect();
                if hits.is_empty() {
                    continue;
                }
                let x = encode(seq, syllable_table, word_table)?;
                let means = interp_means(generator, &x, samples, seed)?;
                for (k, t) in hits {
                    sums[k].iter_mut().zip(&means[t]).for_each(|(a, b)| *a += b);
                    counts[k] += 1;
                }
            }
            for (k, s) in syllables.iter().enumerate() {
                if counts[k] == 0 {
                    let seq = LyricsSequence {
                        syllables: vec![s.clone()],
                        word_index_of_syllable: vec![0],
                        words: vec![s.clone()],
                    };
                    let x = encode(&seq, syllable_table, word_table)?;
                    sums[k] = interp_means(generator, &x, samples, seed)?.remove(0);
                    counts[k] = 1;
                }
            }
            sums.into_iter()
                .zip(counts)
                .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
                .collect()
        }
    };
    Ok(SimilarityMatrix::from_vectors(syllables.to_vec(), &vectors))
}
