use std::collections::HashMap;

use candle_core::{Tensor, D};

use crate::error::Result;
use crate::motion::synth::{tokenize, CaptionGrammar};
use crate::nn::{Linear, ParamBuilder};

pub const OOV: &str = "<oov>";

/// Word → id over the caption grammar; id 0 is the out-of-vocabulary token.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let mut all = vec![OOV.to_string()];
        all.extend(words.into_iter().filter(|w| w != OOV));
        let index = all.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocabulary { words: all, index }
    }

    pub fn grammar() -> Self {
        Vocabulary::from_words(CaptionGrammar::vocabulary())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn ids(&self, caption: &str) -> Vec<u32> {
        tokenize(caption).iter().map(|w| self.index.get(w).copied().unwrap_or(0) as u32).collect()
    }
}

/// Text condition for one caption.
#[derive(Debug, Clone)]
pub struct ConditionEmbedding {
    /// `(hidden_dim,)`
    pub vector: Tensor,
    pub is_null: bool,
}

/// Bag-of-words text encoder: token embeddings, mean pooling, projection.
/// Captions without tokens map to a learned null vector.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    vocab: Vocabulary,
    embedding: Tensor, // (V, H)
    proj: Linear,
    null: Tensor, // (H,)
}

impl TextEncoder {
    pub fn new(pb: &mut ParamBuilder, name: &str, vocab: Vocabulary, hidden: usize) -> Result<Self> {
        Ok(TextEncoder {
            embedding: pb.normal(&format!("{name}.embedding"), &[vocab.len(), hidden], 1.0)?,
            proj: Linear::new(pb, &format!("{name}.proj"), hidden, hidden)?,
            null: pb.normal(&format!("{name}.null"), &[hidden], 0.02)?,
            vocab,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn encode_text(&self, caption: &str) -> Result<ConditionEmbedding> {
        let ids = self.vocab.ids(caption);
        if ids.is_empty() {
            return Ok(ConditionEmbedding { vector: self.null.clone(), is_null: true });
        }
        Ok(ConditionEmbedding { vector: self.encode_ids(&ids)?, is_null: false })
    }

    fn encode_ids(&self, ids: &[u32]) -> Result<Tensor> {
        let idx = Tensor::from_vec(ids.to_vec(), ids.len(), self.embedding.device())?;
        let pooled = self.embedding.index_select(&idx, 0)?.mean_keepdim(0)?;
        Ok(self.proj.forward(&pooled)?.squeeze(0)?)
    }

    /// `(B, H)`; entries with `drop[i]` set, or with no tokens, use the null vector.
    pub fn encode_batch(&self, captions: &[String], drop: &[bool]) -> Result<Tensor> {
        let rows = captions
            .iter()
            .zip(drop)
            .map(|(c, &d)| {
                let ids = self.vocab.ids(c);
                if d || ids.is_empty() {
                    Ok(self.null.clone())
                } else {
                    self.encode_ids(&ids)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::stack(&rows, 0)?)
    }

    pub fn null_batch(&self, batch: usize) -> Result<Tensor> {
        Ok(self.null.unsqueeze(0)?.repeat((batch, 1))?)
    }
}

/// Cosine similarity of two `(H,)` vectors.
pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> Result<f64> {
    let a = a.to_dtype(candle_core::DType::F64)?;
    let b = b.to_dtype(candle_core::DType::F64)?;
    let dot = (&a * &b)?.sum_all()?.to_scalar::<f64>()?;
    let na = a.sqr()?.sum(D::Minus1)?.sqrt()?.to_scalar::<f64>()?;
    let nb = b.sqr()?.sum(D::Minus1)?.sqrt()?.to_scalar::<f64>()?;
    Ok(dot / (na * nb).max(1e-12))
}
