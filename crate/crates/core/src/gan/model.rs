use rand::Rng;
use rand_distr::StandardNormal;

use super::attributes::{Attribute, AttributeVocab};
use super::gumbel::gumbel_noise;
use crate::autodiff::{Graph, Var};
use crate::error::{contract, Error, Result};
use crate::lyrics::LyricsEmbedding;
use crate::nn::{BoundLinear, BoundLstm, Linear, Lstm, Module};
use crate::tensor::Tensor;

/// Network sizes shared by generator, discriminator and posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Width of the lyric condition vector (syllable dim + word dim).
    pub cond_dim: usize,
    pub noise_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub disc_hidden: usize,
    pub posterior_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cond_dim: 20,
            noise_dim: 20,
            hidden: 128,
            layers: 2,
            disc_hidden: 128,
            posterior_hidden: 32,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.cond_dim,
            self.noise_dim,
            self.hidden,
            self.layers,
            self.disc_hidden,
            self.posterior_hidden,
        ];
        if sizes.contains(&0) {
            return Err(Error::Config(format!("model sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Per-step categorical distributions, indexed by [`Attribute::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDistributions {
    pub steps: Vec<[Vec<f64>; 3]>,
}

impl AttributeDistributions {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn get(&self, step: usize, attr: Attribute) -> &[f64] {
        &self.steps[step][attr.index()]
    }
}

/// Gumbel-Softmax samples per step, and the temperature that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedMelody {
    pub steps: Vec<[Vec<f64>; 3]>,
    pub tau: f64,
}

/// Exact one-hot encoding of reference attribute indices.
pub fn one_hot_melody(indices: &[[usize; 3]], vocab: &AttributeVocab) -> Vec<[Vec<f64>; 3]> {
    let sizes = vocab.sizes();
    indices
        .iter()
        .map(|idx| {
            std::array::from_fn(|a| {
                let mut v = vec![0.0; sizes[a]];
                v[idx[a]] = 1.0;
                v
            })
        })
        .collect()
}

/// Standard normal noise, one `[batch, dim]` tensor per step.
pub fn sample_noise(steps: usize, batch: usize, dim: usize, rng: &mut impl Rng) -> Vec<Tensor> {
    (0..steps)
        .map(|_| {
            let data = (0..batch * dim).map(|_| rng.sample(StandardNormal)).collect();
            Tensor::new(vec![batch, dim], data).expect("positive sizes")
        })
        .collect()
}

/// Per-step condition rows of a batch of equally long lyrics.
pub fn stack_conditions(batch: &[&LyricsEmbedding]) -> Result<Vec<Tensor>> {
    let first = batch.first().ok_or_else(|| contract("empty batch"))?;
    let steps = first.len();
    if batch.iter().any(|e| e.len() != steps) {
        return Err(contract("batched lyrics must have equal syllable counts"));
    }
    (0..steps)
        .map(|t| {
            let rows: Vec<Vec<f64>> = batch.iter().map(|e| e.step(t).to_vec()).collect();
            Tensor::from_rows(&rows)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub input: Linear,
    pub lstm: Vec<Lstm>,
    /// Pitch, duration and rest logits.
    pub heads: [Linear; 3],
    /// Projection of the top hidden state to the interpretable vector M(x).
    pub interp: Linear,
}

impl GeneratorParams {
    pub fn new(cfg: &ModelConfig, vocab: &AttributeVocab, rng: &mut impl Rng) -> GeneratorParams {
        let input = Linear::new(cfg.cond_dim + cfg.noise_dim, cfg.hidden, true, rng);
        let lstm = (0..cfg.layers)
            .map(|_| Lstm::new(cfg.hidden, cfg.hidden, rng))
            .collect();
        let heads = vocab.sizes().map(|n| Linear::new(cfg.hidden, n, true, rng));
        let interp = Linear::new(cfg.hidden, cfg.cond_dim, true, rng);
        GeneratorParams {
            input,
            lstm,
            heads,
            interp,
        }
    }

    pub fn noise_dim(&self) -> usize {
        self.input.input_width() - self.interp.output_width()
    }

    pub fn bind(&self, g: &mut Graph) -> BoundGenerator {
        let mut vars = Vec::new();
        let input = self.input.bind(g, &mut vars);
        let lstm = self.lstm.iter().map(|l| l.bind(g, &mut vars)).collect();
        let heads = [
            self.heads[0].bind(g, &mut vars),
            self.heads[1].bind(g, &mut vars),
            self.heads[2].bind(g, &mut vars),
        ];
        let interp = self.interp.bind(g, &mut vars);
        BoundGenerator {
            input,
            lstm,
            heads,
            interp,
            vars,
        }
    }
}

impl Module for GeneratorParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.input.tensors();
        self.lstm.iter().for_each(|l| v.extend(l.tensors()));
        self.heads.iter().for_each(|h| v.extend(h.tensors()));
        v.extend(self.interp.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.input.tensors_mut();
        self.lstm.iter_mut().for_each(|l| v.extend(l.tensors_mut()));
        self.heads.iter_mut().for_each(|h| v.extend(h.tensors_mut()));
        v.extend(self.interp.tensors_mut());
        v
    }
}

/// Generator parameters placed on a graph. `vars` follows
/// [`Module::tensors`] order.
pub struct BoundGenerator {
    input: BoundLinear,
    lstm: Vec<BoundLstm>,
    heads: [BoundLinear; 3],
    interp: BoundLinear,
    pub vars: Vec<Var>,
}

/// Graph nodes produced by one generator pass; every entry is `[batch, _]`.
pub struct GeneratorNodes {
    pub logits: Vec<[Var; 3]>,
    pub probs: Vec<[Var; 3]>,
    pub relaxed: Vec<[Var; 3]>,
    pub interp: Vec<Var>,
}

impl BoundGenerator {
    /// Runs every step on `cond[t] ++ noise[t]`. The generator never sees its
    /// own earlier outputs.
    pub fn forward(
        &self,
        g: &mut Graph,
        cond: &[Tensor],
        noise: &[Tensor],
        tau: f64,
        rng: &mut impl Rng,
    ) -> Result<GeneratorNodes> {
        if cond.len() != noise.len() {
            return Err(contract(format!(
                "{} noise vectors for {} syllables",
                noise.len(),
                cond.len()
            )));
        }
        if !(tau > 0.0) {
            return Err(contract(format!("temperature must be positive, got {tau}")));
        }
        let batch = cond.first().map_or(0, Tensor::rows);
        let mut states: Vec<_> = self.lstm.iter().map(|l| l.zero_state(g, batch)).collect();
        let mut out = GeneratorNodes {
            logits: Vec::with_capacity(cond.len()),
            probs: Vec::with_capacity(cond.len()),
            relaxed: Vec::with_capacity(cond.len()),
            interp: Vec::with_capacity(cond.len()),
        };
        for (c, z) in cond.iter().zip(noise) {
            let c = g.constant(c.clone());
            let z = g.constant(z.clone());
            let inp = g.concat(&[c, z], 1)?;
            let inp = self.input.forward(g, inp)?;
            let mut h = g.tanh(inp);
            for (layer, state) in self.lstm.iter().zip(states.iter_mut()) {
                *state = layer.step(g, h, *state)?;
                h = state.h;
            }
            let mut logits = [h; 3];
            let mut probs = [h; 3];
            let mut relaxed = [h; 3];
            for a in 0..3 {
                let l = self.heads[a].forward(g, h)?;
                logits[a] = l;
                probs[a] = g.softmax(l, 1)?;
                let shape = g.shape(l).to_vec();
                let noise = Tensor::new(shape.clone(), gumbel_noise(shape.iter().product(), rng))?;
                let gn = g.constant(noise);
                let perturbed = g.add(l, gn)?;
                let scaled = g.scale(perturbed, 1.0 / tau)?;
                relaxed[a] = g.softmax(scaled, 1)?;
            }
            out.logits.push(logits);
            out.probs.push(probs);
            out.relaxed.push(relaxed);
            out.interp.push(self.interp.forward(g, h)?);
        }
        Ok(out)
    }
}

/// Plain-data result of running the generator on one lyric.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorOutput {
    pub distributions: AttributeDistributions,
    pub relaxed: RelaxedMelody,
    /// One interpretable vector per step, as wide as the condition vector.
    pub interp: Vec<Vec<f64>>,
}

fn row_vec(g: &Graph, v: Var) -> Vec<f64> {
    g.value(v).row(0).to_vec()
}

/// Generator pass for a single lyric; `noise` holds one vector per syllable.
pub fn generator_forward(
    x: &LyricsEmbedding,
    noise: &[Vec<f64>],
    params: &GeneratorParams,
    tau: f64,
    rng: &mut impl Rng,
) -> Result<GeneratorOutput> {
    if noise.len() != x.len() {
        return Err(contract(format!(
            "{} noise vectors for {} syllables",
            noise.len(),
            x.len()
        )));
    }
    let cond = stack_conditions(&[x])?;
    let noise = noise
        .iter()
        .map(|z| Tensor::new(vec![1, z.len()], z.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let nodes = bound.forward(&mut g, &cond, &noise, tau, rng)?;
    Ok(GeneratorOutput {
        distributions: AttributeDistributions {
            steps: nodes.probs.iter().map(|p| p.map(|v| row_vec(&g, v))).collect(),
        },
        relaxed: RelaxedMelody {
            steps: nodes.relaxed.iter().map(|p| p.map(|v| row_vec(&g, v))).collect(),
            tau,
        },
        interp: nodes.interp.iter().map(|&v| row_vec(&g, v)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    pub lstm: Lstm,
    pub critic: Linear,
}

impl DiscriminatorParams {
    pub fn new(cfg: &ModelConfig, vocab: &AttributeVocab, rng: &mut impl Rng) -> DiscriminatorParams {
        let width = cfg.cond_dim + vocab.sizes().iter().sum::<usize>();
        DiscriminatorParams {
            lstm: Lstm::new(width, cfg.disc_hidden, rng),
            critic: Linear::new(cfg.disc_hidden, 1, true, rng),
        }
    }

    pub fn bind(&self, g: &mut Graph) -> BoundDiscriminator {
        let mut vars = Vec::new();
        let lstm = self.lstm.bind(g, &mut vars);
        let critic = self.critic.bind(g, &mut vars);
        BoundDiscriminator { lstm, critic, vars }
    }
}

impl Module for DiscriminatorParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.lstm.tensors();
        v.extend(self.critic.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.lstm.tensors_mut();
        v.extend(self.critic.tensors_mut());
        v
    }
}

pub struct BoundDiscriminator {
    lstm: BoundLstm,
    critic: BoundLinear,
    pub vars: Vec<Var>,
}

impl BoundDiscriminator {
    /// Critic scores `[batch, 1]` from the final hidden state.
    pub fn forward(&self, g: &mut Graph, cond: &[Tensor], melody: &[[Var; 3]]) -> Result<Var> {
        if cond.len() != melody.len() {
            return Err(contract(format!(
                "melody of {} steps for {} syllables",
                melody.len(),
                cond.len()
            )));
        }
        if cond.is_empty() {
            return Err(contract("discriminator needs at least one step"));
        }
        let mut state = self.lstm.zero_state(g, cond[0].rows());
        for (c, m) in cond.iter().zip(melody) {
            let c = g.constant(c.clone());
            let inp = g.concat(&[c, m[0], m[1], m[2]], 1)?;
            state = self.lstm.step(g, inp, state)?;
        }
        self.critic.forward(g, state.h)
    }
}

/// Critic score of one lyric paired with one melody (relaxed or one-hot).
pub fn discriminator_forward(
    x: &LyricsEmbedding,
    melody: &[[Vec<f64>; 3]],
    params: &DiscriminatorParams,
) -> Result<f64> {
    if melody.len() != x.len() {
        return Err(contract(format!(
            "melody of {} steps for {} syllables",
            melody.len(),
            x.len()
        )));
    }
    let cond = stack_conditions(&[x])?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let steps = melody
        .iter()
        .map(|step| constant_step(&mut g, step))
        .collect::<Result<Vec<_>>>()?;
    let score = bound.forward(&mut g, &cond, &steps)?;
    Ok(g.value(score).item())
}

/// Places one step of attribute vectors on the graph as `[1, n]` constants.
pub fn constant_step(g: &mut Graph, step: &[Vec<f64>; 3]) -> Result<[Var; 3]> {
    let p = g.constant(Tensor::new(vec![1, step[0].len()], step[0].clone())?);
    let d = g.constant(Tensor::new(vec![1, step[1].len()], step[1].clone())?);
    let r = g.constant(Tensor::new(vec![1, step[2].len()], step[2].clone())?);
    Ok([p, d, r])
}
