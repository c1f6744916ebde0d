//! Word-level instruction tokenizer and learned text encoder.

use candle_core::{DType, Tensor};

use super::nn::{LayerNorm, Linear};
use super::params::{Init, ParamStore};
use crate::sim2d::TaskId;
use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const DEFAULT_MAX_TOKENS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
}

pub fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

impl Vocabulary {
    /// Sorted, deduplicated word list built from the given texts.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words: Vec<String> = texts.into_iter().flat_map(normalize_words).collect();
        words.sort();
        words.dedup();
        Self { words }
    }

    /// Vocabulary over the built-in task instructions.
    pub fn tasks() -> Self {
        Self::build(TaskId::ALL.iter().map(|t| t.instruction()))
    }

    pub fn from_words(words: Vec<String>) -> Self {
        Self { words }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Number of ids including PAD and UNK.
    pub fn size(&self) -> usize {
        self.words.len() + 2
    }

    pub fn id(&self, word: &str) -> u32 {
        match self.words.binary_search_by(|w| w.as_str().cmp(word)) {
            Ok(i) => i as u32 + 2,
            Err(_) => UNK,
        }
    }

    /// Ids padded to `max_len` plus the count of real tokens. Overlong
    /// instructions are truncated.
    pub fn encode(&self, text: &str, max_len: usize) -> (Vec<u32>, usize) {
        let words = normalize_words(text);
        if words.len() > max_len {
            log::warn!("instruction truncated from {} to {max_len} tokens", words.len());
        }
        let mut ids: Vec<u32> = words.iter().take(max_len).map(|w| self.id(w)).collect();
        let n = ids.len();
        ids.resize(max_len, PAD);
        (ids, n)
    }
}

/// Token ids for a batch plus the additive attention bias that hides PAD.
pub struct TokenBatch {
    pub ids: Tensor,
    pub bias: Tensor,
}

impl TokenBatch {
    pub fn new(vocab: &Vocabulary, texts: &[&str], max_len: usize, dtype: DType) -> Result<Self> {
        let dev = candle_core::Device::Cpu;
        let mut ids = Vec::with_capacity(texts.len() * max_len);
        let mut bias = Vec::with_capacity(texts.len() * max_len);
        for t in texts {
            let (row, n) = vocab.encode(t, max_len);
            ids.extend(row);
            // an empty instruction still attends to the PAD slot so the
            // softmax stays defined
            let n = n.max(1);
            bias.extend((0..max_len).map(|i| if i < n { 0.0 } else { -1e9 }));
        }
        let b = texts.len();
        Ok(Self {
            ids: Tensor::from_vec(ids, (b, max_len), &dev)?,
            bias: Tensor::from_vec(bias, (b, 1, 1, max_len), &dev)?.to_dtype(dtype)?,
        })
    }
}

pub struct TextEncoder {
    table: Tensor,
    pos: Tensor,
    proj: Linear,
    norm: LayerNorm,
    max_len: usize,
}

impl TextEncoder {
    pub fn new(ps: &mut ParamStore, name: &str, vocab_size: usize, dim: usize, max_len: usize) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::InvalidArgument("vocabulary too small".into()));
        }
        Ok(Self {
            table: ps.get(&format!("{name}.table"), &[vocab_size, dim], Init::Normal(0.5))?,
            pos: ps.get(&format!("{name}.pos"), &[max_len, dim], Init::Normal(0.1))?,
            proj: Linear::new(ps, &format!("{name}.proj"), dim, dim)?,
            norm: LayerNorm::new(ps, &format!("{name}.norm"), dim)?,
            max_len,
        })
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// `(B, L)` ids to `(B, L, d)` token features.
    pub fn forward(&self, ids: &Tensor) -> Result<Tensor> {
        let (b, l) = ids.dims2()?;
        let d = self.table.dim(1)?;
        let e = self.table.embedding(&ids.flatten_all()?)?.reshape((b, l, d))?;
        let e = e.broadcast_add(&self.pos.narrow(0, 0, l)?)?;
        self.proj.forward(&self.norm.forward(&e)?)
    }
}
