//! A small decoder-only sequence model with hand-written backpropagation.
//!
//! The conditioning text and the generated text are concatenated as
//! `BOS context SEP target` and processed by a causal transformer; losses
//! are masked to the target positions. Parameters live in one flat vector
//! addressed through [`Layout`], which keeps the optimizer, checkpointing,
//! and finite-difference checking trivial.

pub mod checkpoint;
pub mod math;
pub mod net;
pub mod optim;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::vocab::{TokenId, TokenSeq, BOS, SEP};
use math::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: u32,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_seq_len: usize,
    /// Hard cap on total parameter count; init fails beyond it.
    pub param_budget: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_seq_len == 0 {
            return Err(Error::Config("max_seq_len must be >= 1".into()));
        }
        if self.width == 0 || self.layers == 0 || self.heads == 0 {
            return Err(Error::Config("width, layers, heads must be >= 1".into()));
        }
        if self.width % self.heads != 0 {
            return Err(Error::Config(format!(
                "width {} not divisible by heads {}",
                self.width, self.heads
            )));
        }
        if self.vocab_size == 0 {
            return Err(Error::Config("vocab_size must be >= 1".into()));
        }
        let total = self.layout().total();
        if total > self.param_budget {
            return Err(Error::Config(format!(
                "parameter count {total} exceeds budget {}",
                self.param_budget
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout {
            vocab: self.vocab_size as usize,
            d: self.width,
            layers: self.layers,
            max_len: self.max_seq_len,
            hidden: 4 * self.width,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total()
    }

    /// Stable architecture fingerprint; checkpoints refuse to load into a
    /// different architecture.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"slic-model-v1");
        for v in [
            self.vocab_size as u64,
            self.width as u64,
            self.layers as u64,
            self.heads as u64,
            self.max_seq_len as u64,
        ] {
            h.update(v.to_le_bytes());
        }
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().unwrap())
    }
}

/// Offsets of every named tensor inside the flat parameter vector.
///
/// Order: token embedding [V,d], position embedding [max_len,d], then per
/// layer wq,wk,wv,wo [d,d], fc1 [4d,d], fc2 [d,4d], and finally the output
/// head [V,d]. The head is not tied to the embedding.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub vocab: usize,
    pub d: usize,
    pub layers: usize,
    pub max_len: usize,
    pub hidden: usize,
}

impl Layout {
    pub fn tok_emb(&self) -> std::ops::Range<usize> {
        0..self.vocab * self.d
    }

    pub fn pos_emb(&self) -> std::ops::Range<usize> {
        let s = self.vocab * self.d;
        s..s + self.max_len * self.d
    }

    fn layer_base(&self, l: usize) -> usize {
        self.pos_emb().end + l * self.layer_size()
    }

    pub fn layer_size(&self) -> usize {
        4 * self.d * self.d + 2 * self.hidden * self.d
    }

    pub fn wq(&self, l: usize) -> std::ops::Range<usize> {
        let b = self.layer_base(l);
        b..b + self.d * self.d
    }

    pub fn wk(&self, l: usize) -> std::ops::Range<usize> {
        let b = self.layer_base(l) + self.d * self.d;
        b..b + self.d * self.d
    }

    pub fn wv(&self, l: usize) -> std::ops::Range<usize> {
        let b = self.layer_base(l) + 2 * self.d * self.d;
        b..b + self.d * self.d
    }

    pub fn wo(&self, l: usize) -> std::ops::Range<usize> {
        let b = self.layer_base(l) + 3 * self.d * self.d;
        b..b + self.d * self.d
    }

    pub fn fc1(&self, l: usize) -> std::ops::Range<usize> {
        let b = self.layer_base(l) + 4 * self.d * self.d;
        b..b + self.hidden * self.d
    }

    pub fn fc2(&self, l: usize) -> std::ops::Range<usize> {
        let b = self.layer_base(l) + 4 * self.d * self.d + self.hidden * self.d;
        b..b + self.d * self.hidden
    }

    pub fn head(&self) -> std::ops::Range<usize> {
        let s = self.layer_base(self.layers);
        s..s + self.vocab * self.d
    }

    pub fn total(&self) -> usize {
        self.head().end
    }
}

/// Trainable parameters. Immutable by convention: updates produce new values.
#[derive(Debug, Clone)]
pub struct ModelParams<R: Real> {
    pub config: ModelConfig,
    pub seed: u64,
    pub flat: Vec<R>,
}

impl<R: Real> ModelParams<R> {
    pub fn fingerprint(&self) -> u64 {
        self.config.fingerprint()
    }

    pub fn all_finite(&self) -> bool {
        self.flat.iter().all(|v| v.is_finite())
    }

    /// Zeroes the output head, forcing a uniform distribution at every
    /// position. Used by tests and diagnostics.
    pub fn with_uniform_head(mut self) -> Self {
        for v in &mut self.flat[self.config.layout().head()] {
            *v = R::zero();
        }
        self
    }
}

/// Deterministic gaussian init, std 1/sqrt(width), draw order = layout order.
pub fn init_model<R: Real>(config: ModelConfig, seed: u64) -> Result<ModelParams<R>> {
    config.validate()?;
    let total = config.layout().total();
    let std = 1.0 / (config.width as f64).sqrt();
    let mut gauss = GaussianStream::new(seed);
    let flat: Vec<R> = (0..total).map(|_| R::from_f64(gauss.next() * std)).collect();
    Ok(ModelParams { config, seed, flat })
}

/// Box-Muller over a counter-based generator; no dependence on platform RNG.
struct GaussianStream {
    rng: rand_chacha::ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    fn new(seed: u64) -> Self {
        use rand::SeedableRng;
        Self { rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    fn next(&mut self) -> f64 {
        use rand::RngCore;
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1 = ((self.rng.next_u64() >> 11) as f64 + 1.0) / (9007199254740992.0 + 1.0);
        let u2 = (self.rng.next_u64() >> 11) as f64 / 9007199254740992.0;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Model input ids for a (context, target) pair: `BOS ctx SEP tgt[..-1]`,
/// plus the positions whose next-token predictions are scored. Position
/// `scored.start + j` predicts `target.ids[j]`.
pub fn lm_input(context: &TokenSeq, target: &TokenSeq) -> (Vec<TokenId>, std::ops::Range<usize>) {
    let n = context.ids.len();
    let m = target.ids.len();
    let mut ids = Vec::with_capacity(n + m + 1);
    ids.push(BOS);
    ids.extend_from_slice(&context.ids);
    ids.push(SEP);
    ids.extend_from_slice(&target.ids[..m - 1]);
    (ids, n + 1..n + 1 + m)
}

/// Generation prefix: `BOS ctx SEP`.
pub fn gen_prefix(context: &TokenSeq) -> Vec<TokenId> {
    let mut ids = Vec::with_capacity(context.ids.len() + 2);
    ids.push(BOS);
    ids.extend_from_slice(&context.ids);
    ids.push(SEP);
    ids
}
