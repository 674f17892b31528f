use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::corpus::Corpus;
use crate::autodiff::{adam_step, clip_global_norm, AdamConfig, AdamState, Graph, Var};
use crate::error::{contract, Error, Result};
use crate::gan::{
    rsgan_d_loss_node, rsgan_g_loss_node, sample_noise, stack_conditions, straight_through, AttributeVocab,
};
use crate::lyrics::{encode, train_skipgram, EmbeddingLevel, LyricsEmbedding};
use crate::mi::{mi_bound_node, mi_objective_node};
use crate::nn::Module;
use crate::tensor::Tensor;

/// Interval means. `loss_mi` is the posterior's reconstruction loss
/// `-bound`, reported whatever the value of `lambda_mi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub loss_d: f64,
    pub loss_g: f64,
    pub loss_mi: f64,
    pub tau: f64,
}

pub const METRICS_HEADER: &str = "step,loss_d,loss_g,loss_mi,tau";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6}",
            self.step, self.loss_d, self.loss_g, self.loss_mi, self.tau
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRow>,
}

/// Corpus encoded under a checkpoint's embedding tables, grouped by length.
pub(crate) struct Prepared {
    pub cond: Vec<LyricsEmbedding>,
    pub melody: Vec<Vec<[usize; 3]>>,
    groups: BTreeMap<usize, Vec<usize>>,
}

impl Prepared {
    pub fn new(ckpt: &Checkpoint, corpus: &Corpus) -> Result<Prepared> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let sizes = ckpt.attributes.sizes();
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut cond = Vec::with_capacity(corpus.len());
        for (i, e) in corpus.entries.iter().enumerate() {
            if e.melody.len() != e.lyrics.len() {
                return Err(contract(format!("entry {i}: melody and lyrics lengths differ")));
            }
            if e.melody.iter().any(|idx| (0..3).any(|a| idx[a] >= sizes[a])) {
                return Err(contract(format!("entry {i}: attribute index outside the vocabulary")));
            }
            cond.push(encode(&e.lyrics, &ckpt.syllable_table, &ckpt.word_table)?);
            groups.entry(e.lyrics.len()).or_default().push(i);
        }
        Ok(Prepared {
            cond,
            melody: corpus.entries.iter().map(|e| e.melody.clone()).collect(),
            groups,
        })
    }

    /// Entries of one length: an anchor drawn uniformly, the rest drawn with
    /// replacement from the anchor's length group.
    fn sample(&self, batch: usize, rng: &mut impl Rng) -> Vec<usize> {
        let anchor = rng.random_range(0..self.cond.len());
        let group = &self.groups[&self.cond[anchor].len()];
        let mut out = vec![anchor];
        out.extend((1..batch).map(|_| group[rng.random_range(0..group.len())]));
        out
    }
}

pub(crate) struct Batch {
    pub cond: Vec<Tensor>,
    /// One-hot targets per step, `[batch, vocab size]` per attribute.
    pub real: Vec<[Tensor; 3]>,
}

pub(crate) fn make_batch(p: &Prepared, ids: &[usize], vocab: &AttributeVocab) -> Result<Batch> {
    let conds: Vec<&LyricsEmbedding> = ids.iter().map(|&i| &p.cond[i]).collect();
    let cond = stack_conditions(&conds)?;
    let sizes = vocab.sizes();
    let steps = cond.len();
    let real = (0..steps)
        .map(|t| {
            [0, 1, 2].map(|a| {
                let mut data = vec![0.0; ids.len() * sizes[a]];
                for (r, &i) in ids.iter().enumerate() {
                    data[r * sizes[a] + p.melody[i][t][a]] = 1.0;
                }
                Tensor::new(vec![ids.len(), sizes[a]], data).expect("sized above")
            })
        })
        .collect();
    Ok(Batch { cond, real })
}

/// Relaxed samples as the discriminator sees them.
pub(crate) fn discriminator_inputs(g: &mut Graph, relaxed: &[[Var; 3]], hard: bool) -> Result<Vec<[Var; 3]>> {
    if !hard {
        return Ok(relaxed.to_vec());
    }
    relaxed
        .iter()
        .map(|s| {
            Ok([
                straight_through(g, s[0])?,
                straight_through(g, s[1])?,
                straight_through(g, s[2])?,
            ])
        })
        .collect()
}

fn step_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn update(params: Vec<&mut Tensor>, mut grads: Vec<Tensor>, state: &mut AdamState, lr: f64, clip: f64) -> Result<()> {
    clip_global_norm(&mut grads, clip);
    let mut params = params;
    adam_step(&mut params, &grads, state, &AdamConfig::with_lr(lr))
}

fn check(value: f64, step: u64, component: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            step: step as usize,
            component: component.into(),
        })
    }
}

fn discriminator_update(ckpt: &mut Checkpoint, batch: &Batch, tau: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let b = batch.cond[0].rows();
    let noise = sample_noise(batch.cond.len(), b, ckpt.generator.noise_dim(), rng);
    let fake: Vec<[Tensor; 3]> = {
        let mut g = Graph::new();
        let bg = ckpt.generator.bind(&mut g);
        let nodes = bg.forward(&mut g, &batch.cond, &noise, tau, rng)?;
        let fake = discriminator_inputs(&mut g, &nodes.relaxed, ckpt.config.straight_through)?;
        fake.iter().map(|s| s.map(|v| g.value(v).clone())).collect()
    };
    let mut g = Graph::new();
    let bd = ckpt.discriminator.bind(&mut g);
    let real: Vec<_> = batch.real.iter().map(|s| s.clone().map(|t| g.constant(t))).collect();
    let fake: Vec<_> = fake.into_iter().map(|s| s.map(|t| g.constant(t))).collect();
    let c_real = bd.forward(&mut g, &batch.cond, &real)?;
    let c_fake = bd.forward(&mut g, &batch.cond, &fake)?;
    let loss = rsgan_d_loss_node(&mut g, c_real, c_fake)?;
    let grads = g.backward(loss)?;
    let grads = bd.vars.iter().map(|&v| grads.wrt(v)).collect();
    let cfg = &ckpt.config;
    let (lr, clip) = (cfg.lr_d, cfg.clip_norm);
    update(ckpt.discriminator.tensors_mut(), grads, &mut ckpt.optim_d, lr, clip)?;
    Ok(g.value(loss).item())
}

/// Generator step on `rsgan_g_loss + lambda·(-bound)`, then a posterior step
/// on `-bound` with `M(x)` held fixed. Returns the adversarial loss and `-bound`.
fn generator_update(ckpt: &mut Checkpoint, batch: &Batch, tau: f64, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let b = batch.cond[0].rows();
    let noise = sample_noise(batch.cond.len(), b, ckpt.generator.noise_dim(), rng);
    let lambda = ckpt.config.lambda_mi;
    let mut g = Graph::new();
    let bg = ckpt.generator.bind(&mut g);
    let bd = ckpt.discriminator.bind(&mut g);
    let bq = ckpt.posterior.bind(&mut g);
    let nodes = bg.forward(&mut g, &batch.cond, &noise, tau, rng)?;
    let real: Vec<_> = batch.real.iter().map(|s| s.clone().map(|t| g.constant(t))).collect();
    let c_real = bd.forward(&mut g, &batch.cond, &real)?;
    let fake = discriminator_inputs(&mut g, &nodes.relaxed, ckpt.config.straight_through)?;
    let c_fake = bd.forward(&mut g, &batch.cond, &fake)?;
    let adv = rsgan_g_loss_node(&mut g, c_real, c_fake)?;
    let mi = mi_objective_node(&mut g, &bq, &batch.cond, &nodes.interp, lambda)?;
    let total = g.add(adv, mi)?;
    let grads = g.backward(total)?;
    let gen_grads = bg.vars.iter().map(|&v| grads.wrt(v)).collect();
    let interp: Vec<Tensor> = nodes.interp.iter().map(|&v| g.value(v).clone()).collect();
    let adv_value = g.value(adv).item();

    let mut gq = Graph::new();
    let bq = ckpt.posterior.bind(&mut gq);
    let m: Vec<_> = interp.into_iter().map(|t| gq.constant(t)).collect();
    let bound = mi_bound_node(&mut gq, &bq, &batch.cond, &m)?;
    let q_loss = gq.neg(bound)?;
    let q_grads = gq.backward(q_loss)?;
    let q_grads = bq.vars.iter().map(|&v| q_grads.wrt(v)).collect();

    let cfg = ckpt.config.clone();
    update(
        ckpt.generator.tensors_mut(),
        gen_grads,
        &mut ckpt.optim_g,
        cfg.lr_g,
        cfg.clip_norm,
    )?;
    update(
        ckpt.posterior.tensors_mut(),
        q_grads,
        &mut ckpt.optim_q,
        cfg.lr_q,
        cfg.clip_norm,
    )?;
    Ok((adv_value, gq.value(q_loss).item()))
}

/// Trains both embedding tables on the corpus lyrics and initializes fresh
/// networks around them.
pub fn initial_checkpoint(corpus: &Corpus, config: &TrainConfig) -> Result<Checkpoint> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let lyrics = corpus.lyrics();
    let syl = train_skipgram(&lyrics, EmbeddingLevel::Syllable, &config.embedding)?.table;
    let word = train_skipgram(&lyrics, EmbeddingLevel::Word, &config.embedding)?.table;
    Checkpoint::initialize(syl, word, AttributeVocab::default(), config.clone())
}

pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainRun> {
    let ckpt = initial_checkpoint(corpus, config)?;
    train_from(ckpt, corpus, &mut |_, _| Ok(()))
}

/// Continues adversarial training until `ckpt.step == ckpt.config.steps`.
/// `on_interval` sees each metrics row together with the checkpoint at that step.
pub fn train_from(
    mut ckpt: Checkpoint,
    corpus: &Corpus,
    on_interval: &mut dyn FnMut(&MetricsRow, &Checkpoint) -> Result<()>,
) -> Result<TrainRun> {
    ckpt.config.validate()?;
    let prepared = Prepared::new(&ckpt, corpus)?;
    let cfg = ckpt.config.clone();
    let mut metrics = Vec::new();
    let mut sums = [0.0; 3];
    let mut count = 0;
    while ckpt.step < cfg.steps {
        let step = ckpt.step;
        let tau = cfg.tau_at(step);
        let mut rng = step_rng(cfg.seed, step);
        let mut loss_d = 0.0;
        for _ in 0..cfg.d_steps_per_g_step {
            let ids = prepared.sample(cfg.batch_size, &mut rng);
            let batch = make_batch(&prepared, &ids, &ckpt.attributes)?;
            loss_d = check(discriminator_update(&mut ckpt, &batch, tau, &mut rng)?, step, "loss_d")?;
        }
        let ids = prepared.sample(cfg.batch_size, &mut rng);
        let batch = make_batch(&prepared, &ids, &ckpt.attributes)?;
        let (loss_g, loss_mi) = generator_update(&mut ckpt, &batch, tau, &mut rng)?;
        check(loss_g, step, "loss_g")?;
        check(loss_mi, step, "loss_mi")?;
        ckpt.step += 1;
        sums[0] += loss_d;
        sums[1] += loss_g;
        sums[2] += loss_mi;
        count += 1;
        if ckpt.step.is_multiple_of(cfg.checkpoint_interval) || ckpt.step == cfg.steps {
            if !ckpt.is_finite() {
                return Err(Error::NonFinite {
                    step: step as usize,
                    component: "parameters".into(),
                });
            }
            let n = count as f64;
            let row = MetricsRow {
                step: ckpt.step,
                loss_d: sums[0] / n,
                loss_g: sums[1] / n,
                loss_mi: sums[2] / n,
                tau,
            };
            on_interval(&row, &ckpt)?;
            metrics.push(row);
            sums = [0.0; 3];
            count = 0;
        }
    }
    Ok(TrainRun {
        checkpoint: ckpt,
        metrics,
    })
}

/// Maximum-likelihood warm start: minimizes the mean per-step cross-entropy
/// of the three heads against the reference melodies. Returns the loss
/// before each update.
pub fn pretrain_generator(ckpt: &mut Checkpoint, corpus: &Corpus, steps: u64) -> Result<Vec<f64>> {
    ckpt.config.validate()?;
    let prepared = Prepared::new(ckpt, corpus)?;
    let cfg = ckpt.config.clone();
    let mut losses = Vec::with_capacity(steps as usize);
    for s in 0..steps {
        let mut rng = step_rng(cfg.seed ^ 0x7072_6574_7261_696e, s);
        let ids = prepared.sample(cfg.batch_size, &mut rng);
        let batch = make_batch(&prepared, &ids, &ckpt.attributes)?;
        let (loss, grads) = cross_entropy(ckpt, &batch, &mut rng)?;
        losses.push(check(loss, s, "cross_entropy")?);
        update(
            ckpt.generator.tensors_mut(),
            grads,
            &mut ckpt.optim_g,
            cfg.lr_g,
            cfg.clip_norm,
        )?;
    }
    Ok(losses)
}

fn cross_entropy(ckpt: &Checkpoint, batch: &Batch, rng: &mut ChaCha8Rng) -> Result<(f64, Vec<Tensor>)> {
    let b = batch.cond[0].rows();
    let steps = batch.cond.len();
    let noise = sample_noise(steps, b, ckpt.generator.noise_dim(), rng);
    let mut g = Graph::new();
    let bg = ckpt.generator.bind(&mut g);
    let nodes = bg.forward(&mut g, &batch.cond, &noise, ckpt.config.tau_start, rng)?;
    let mut total = None;
    for (probs, real) in nodes.probs.iter().zip(&batch.real) {
        for a in 0..3 {
            let p = g.add_scalar(probs[a], 1e-12)?;
            let logp = g.log(p);
            let target = g.constant(real[a].clone());
            let picked = g.mul(logp, target)?;
            let s = g.sum(picked, None)?;
            total = Some(match total {
                Some(acc) => g.add(acc, s)?,
                None => s,
            });
        }
    }
    let loss = g.scale(total.expect("at least one step"), -1.0 / (b * steps) as f64)?;
    let grads = g.backward(loss)?;
    Ok((g.value(loss).item(), bg.vars.iter().map(|&v| grads.wrt(v)).collect()))
}
