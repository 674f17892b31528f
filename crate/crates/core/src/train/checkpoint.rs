use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use crate::autodiff::AdamState;
use crate::error::{Error, Result};
use crate::gan::{AttributeVocab, DiscriminatorParams, GeneratorParams};
use crate::lyrics::{EmbeddingLevel, EmbeddingTable, Vocab};
use crate::mi::PosteriorParams;
use crate::nn::Module;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SONGSMTH";
const HEADER_LEN: usize = 8 + 4 + 8;
const DIGEST_LEN: usize = 32;

/// Everything inference and resumed training need.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub syllable_table: EmbeddingTable,
    pub word_table: EmbeddingTable,
    pub attributes: AttributeVocab,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
    pub posterior: PosteriorParams,
    pub optim_g: AdamState,
    pub optim_d: AdamState,
    pub optim_q: AdamState,
    /// Generator updates applied so far.
    pub step: u64,
    pub config: TrainConfig,
}

impl Checkpoint {
    /// Fresh networks around trained embedding tables, seeded by `config.seed`.
    pub fn initialize(
        syllable_table: EmbeddingTable,
        word_table: EmbeddingTable,
        attributes: AttributeVocab,
        config: TrainConfig,
    ) -> Result<Checkpoint> {
        config.validate()?;
        attributes.validate()?;
        let width = syllable_table.dim() + word_table.dim();
        if width != config.model.cond_dim {
            return Err(Error::Config(format!(
                "embedding tables give {width}-wide conditions, model expects {}",
                config.model.cond_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let generator = GeneratorParams::new(&config.model, &attributes, &mut rng);
        let discriminator = DiscriminatorParams::new(&config.model, &attributes, &mut rng);
        let posterior = PosteriorParams::new(config.model.cond_dim, config.model.posterior_hidden, &mut rng);
        Ok(Checkpoint {
            optim_g: AdamState::new(generator.tensors()),
            optim_d: AdamState::new(discriminator.tensors()),
            optim_q: AdamState::new(posterior.tensors()),
            syllable_table,
            word_table,
            attributes,
            generator,
            discriminator,
            posterior,
            step: 0,
            config,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.generator.is_finite() && self.discriminator.is_finite() && self.posterior.is_finite()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Meta {
            config: self.config.clone(),
            attributes: self.attributes.clone(),
            step: self.step,
            syllables: VocabMeta::of(&self.syllable_table),
            words: VocabMeta::of(&self.word_table),
            optimizer_steps: [
                self.optim_g.step_count,
                self.optim_d.step_count,
                self.optim_q.step_count,
            ],
        };
        let mut payload = Vec::new();
        put_bytes(
            &mut payload,
            serde_json::to_string(&meta).expect("plain data").as_bytes(),
        );
        for t in self.tensors() {
            put_tensor(&mut payload, t);
        }
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + DIGEST_LEN);
        out.extend(MAGIC);
        out.extend(FORMAT_VERSION.to_le_bytes());
        out.extend((payload.len() as u64).to_le_bytes());
        out.extend(payload);
        let digest = Sha256::digest(&out);
        out.extend(digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Checkpoint(format!(
                "truncated: {} bytes is shorter than the header",
                bytes.len()
            )));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let expected = HEADER_LEN.checked_add(len).and_then(|n| n.checked_add(DIGEST_LEN));
        match expected {
            Some(n) if n == bytes.len() => {}
            Some(n) if n > bytes.len() => {
                return Err(Error::Checkpoint(format!(
                    "truncated: expected {n} bytes, found {}",
                    bytes.len()
                )))
            }
            _ => {
                return Err(Error::Checkpoint(format!(
                    "length field {len} does not match file size {}",
                    bytes.len()
                )))
            }
        }
        let body_end = HEADER_LEN + len;
        if Sha256::digest(&bytes[..body_end]).as_slice() != &bytes[body_end..] {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader {
            bytes: &bytes[HEADER_LEN..body_end],
            pos: 0,
        };
        let meta: Meta = serde_json::from_slice(r.bytes()?).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let mut ckpt = Checkpoint::initialize(
            meta.syllables.table(meta.config.embedding.dim),
            meta.words.table(meta.config.embedding.dim),
            meta.attributes,
            meta.config,
        )?;
        ckpt.step = meta.step;
        ckpt.optim_g.step_count = meta.optimizer_steps[0];
        ckpt.optim_d.step_count = meta.optimizer_steps[1];
        ckpt.optim_q.step_count = meta.optimizer_steps[2];
        for slot in ckpt.tensors_mut() {
            let t = r.tensor()?;
            if t.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor shape {:?} where {:?} was expected",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        if r.pos != r.bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after the last tensor".into()));
        }
        Ok(ckpt)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.syllable_table.vectors, &self.word_table.vectors];
        v.extend(self.generator.tensors());
        v.extend(self.discriminator.tensors());
        v.extend(self.posterior.tensors());
        for s in [&self.optim_g, &self.optim_d, &self.optim_q] {
            v.extend(&s.first_moment);
            v.extend(&s.second_moment);
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.syllable_table.vectors, &mut self.word_table.vectors];
        v.extend(self.generator.tensors_mut());
        v.extend(self.discriminator.tensors_mut());
        v.extend(self.posterior.tensors_mut());
        for s in [&mut self.optim_g, &mut self.optim_d, &mut self.optim_q] {
            v.extend(&mut s.first_moment);
            v.extend(&mut s.second_moment);
        }
        v
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes)
}

#[derive(Serialize, Deserialize)]
struct VocabMeta {
    level: EmbeddingLevel,
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl VocabMeta {
    fn of(t: &EmbeddingTable) -> VocabMeta {
        VocabMeta {
            level: t.level,
            tokens: t.vocab.tokens().to_vec(),
            counts: t.vocab.counts().to_vec(),
        }
    }

    /// Table with placeholder vectors of the stored shape.
    fn table(self, dim: usize) -> EmbeddingTable {
        let rows = self.tokens.len().max(1);
        EmbeddingTable {
            level: self.level,
            vocab: Vocab::from_parts(self.tokens, self.counts),
            vectors: Tensor::zeros(&[rows, dim]),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    attributes: AttributeVocab,
    step: u64,
    syllables: VocabMeta,
    words: VocabMeta,
    optimizer_steps: [u64; 3],
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend((b.len() as u64).to_le_bytes());
    out.extend(b);
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.extend((t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend((d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend(v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("payload ends inside a record".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()? as usize;
        self.take(n)
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("implausible tensor rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| Ok(self.u64()? as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::Checkpoint("tensor size overflows".into()))?;
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("tensor size overflows".into()))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}
