use std::collections::BTreeMap;

use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::corpus::Corpus;
use super::run::{discriminator_inputs, make_batch, Prepared};
use crate::autodiff::Graph;
use crate::error::Result;
use crate::gan::{argmax, sample_noise};
use crate::lyrics::cosine;
use crate::mi::{interp_means, mi_bound_node, syllable_heatmap, HeatmapSource, SimilarityMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Total-variation distance between generated and corpus marginals, per
    /// attribute.
    pub tv: [f64; 3],
    pub mean_d_real: f64,
    pub mean_d_fake: f64,
    /// Per-coordinate squared error of `Q(M(x))` against `x`.
    pub mi_mse: f64,
    /// Generated melodies behind the estimates.
    pub samples: usize,
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Draws `samples_per_entry` melodies for every corpus entry at the final
/// temperature. Each generated attribute is the Gumbel-max sample of its head.
pub fn evaluate(ckpt: &Checkpoint, corpus: &Corpus, samples_per_entry: usize, seed: u64) -> Result<EvalReport> {
    let prepared = Prepared::new(ckpt, corpus)?;
    let sizes = ckpt.attributes.sizes();
    let mut counts = sizes.map(|n| vec![0.0; n]);
    let (mut d_real, mut d_fake, mut mse) = (0.0, 0.0, 0.0);
    let s = samples_per_entry.max(1);
    let tau = ckpt.config.tau_end;
    let width = ckpt.config.model.cond_dim as f64;
    for i in 0..corpus.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let batch = make_batch(&prepared, &vec![i; s], &ckpt.attributes)?;
        let noise = sample_noise(batch.cond.len(), s, ckpt.generator.noise_dim(), &mut rng);
        let mut g = Graph::new();
        let bg = ckpt.generator.bind(&mut g);
        let bd = ckpt.discriminator.bind(&mut g);
        let bq = ckpt.posterior.bind(&mut g);
        let nodes = bg.forward(&mut g, &batch.cond, &noise, tau, &mut rng)?;
        for step in &nodes.relaxed {
            for a in 0..3 {
                let t = g.value(step[a]);
                for r in 0..t.rows() {
                    counts[a][argmax(t.row(r))] += 1.0;
                }
            }
        }
        let real: Vec<_> = batch.real.iter().map(|st| st.clone().map(|t| g.constant(t))).collect();
        let c_real = bd.forward(&mut g, &batch.cond, &real)?;
        let fake = discriminator_inputs(&mut g, &nodes.relaxed, ckpt.config.straight_through)?;
        let c_fake = bd.forward(&mut g, &batch.cond, &fake)?;
        let bound = mi_bound_node(&mut g, &bq, &batch.cond, &nodes.interp)?;
        d_real += g.value(c_real).data()[0];
        d_fake += g.value(c_fake).sum() / s as f64;
        mse += -2.0 * g.value(bound).item() / width;
    }
    let n = corpus.len() as f64;
    let data = corpus.marginals(&ckpt.attributes);
    let tv = [0, 1, 2].map(|a| {
        let total: f64 = counts[a].iter().sum();
        let gen: Vec<f64> = counts[a].iter().map(|c| c / total).collect();
        total_variation(&gen, &data[a])
    });
    Ok(EvalReport {
        tv,
        mean_d_real: d_real / n,
        mean_d_fake: d_fake / n,
        mi_mse: mse / n,
        samples: s * corpus.len(),
    })
}

/// Mean cosine between the `M(x)` vectors of a syllable at two occurrences in
/// different corpus entries, over every syllable that has such a pair. Vectors
/// are centred on the corpus-wide mean `M(x)` first, so that an offset shared
/// by every step does not dominate. `None` when no syllable repeats across
/// entries.
pub fn repeated_syllable_similarity(
    ckpt: &Checkpoint,
    corpus: &Corpus,
    samples: usize,
    seed: u64,
) -> Result<Option<f64>> {
    let prepared = Prepared::new(ckpt, corpus)?;
    let mut first: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    // Occurrences as (entry, step).
    let mut pairs: BTreeMap<&str, [(usize, usize); 2]> = BTreeMap::new();
    for (i, e) in corpus.entries.iter().enumerate() {
        for (t, s) in e.lyrics.syllables.iter().enumerate() {
            match first.get(s.as_str()) {
                None => {
                    first.insert(s, (i, t));
                }
                Some(&(j, u)) if j != i => {
                    pairs.entry(s).or_insert([(j, u), (i, t)]);
                }
                _ => {}
            }
        }
    }
    if pairs.is_empty() {
        return Ok(None);
    }
    let means = prepared
        .cond
        .iter()
        .map(|x| interp_means(&ckpt.generator, x, samples, seed))
        .collect::<Result<Vec<_>>>()?;
    let width = ckpt.generator.interp.output_width();
    let mut centre = vec![0.0; width];
    let total: usize = means.iter().map(Vec::len).sum();
    for v in means.iter().flatten() {
        centre.iter_mut().zip(v).for_each(|(c, x)| *c += x / total as f64);
    }
    let centred = |i: usize, t: usize| -> Vec<f64> { means[i][t].iter().zip(&centre).map(|(a, b)| a - b).collect() };
    let sum: f64 = pairs
        .values()
        .map(|&[(i, t), (j, u)]| cosine(&centred(i, t), &centred(j, u)))
        .sum();
    Ok(Some(sum / pairs.len() as f64))
}

/// Syllable similarity heatmap with the corpus lyrics as the probe set.
pub fn checkpoint_heatmap(
    ckpt: &Checkpoint,
    syllables: &[String],
    source: HeatmapSource,
    probe: &Corpus,
    samples: usize,
    seed: u64,
) -> Result<SimilarityMatrix> {
    syllable_heatmap(
        &ckpt.generator,
        &ckpt.syllable_table,
        &ckpt.word_table,
        syllables,
        source,
        &probe.lyrics(),
        samples,
        seed,
    )
}
