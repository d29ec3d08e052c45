use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{EdlmError, Result};
use crate::seq::{Token, TokenSeq};

/// A left-to-right model over clean sequences,
/// `log p(x0) = sum_i log p(x0_i | x0_<i)`.
pub trait AutoregressiveModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// `log p(token | prefix)` where `prefix` is the full clean history.
    fn cond_log_prob(&self, prefix: &[Token], token: Token) -> f64;

    /// Exact sequence log-probability. Errors if `x0` contains a mask.
    fn log_prob(&self, x0: &TokenSeq) -> Result<f64> {
        x0.require_clean("x0")?;
        let toks = x0.tokens();
        Ok((0..toks.len())
            .map(|i| self.cond_log_prob(&toks[..i], toks[i]))
            .sum())
    }
}

/// Serializable backing store of an [`NGramModel`]: raw counts per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramCounts {
    pub order: usize,
    pub smoothing: f64,
    pub vocab_size: usize,
    /// `(context, counts over next token)`, sorted by context.
    pub contexts: Vec<(Vec<Token>, Vec<u64>)>,
}

/// Add-k smoothed n-gram model. At position `i` the context is the last
/// `min(i, order)` tokens, so the first tokens of a sequence are scored
/// by the lower-order statistics of the same corpus.
#[derive(Debug, Clone)]
pub struct NGramModel {
    counts: NGramCounts,
    rows: HashMap<Vec<Token>, Vec<f64>>,
    unseen_log_prob: f64,
}

impl PartialEq for NGramModel {
    fn eq(&self, other: &Self) -> bool {
        self.counts == other.counts
    }
}

/// Fits an order-`order` model (context length `order`) with add-`smoothing`
/// counts to a token stream.
pub fn ar_fit(corpus: &[Token], vocab_size: usize, order: usize, smoothing: f64) -> Result<NGramModel> {
    if corpus.is_empty() {
        return Err(EdlmError::Data("cannot fit an n-gram model to an empty corpus".into()));
    }
    if order == 0 {
        return Err(EdlmError::domain("n-gram order must be at least 1"));
    }
    if !(smoothing.is_finite() && smoothing >= 0.0) {
        return Err(EdlmError::domain(format!("smoothing must be >= 0, got {smoothing}")));
    }
    if let Some(pos) = corpus.iter().position(|&t| t as usize >= vocab_size) {
        return Err(EdlmError::Data(format!(
            "token {} at corpus offset {pos} outside vocabulary of size {vocab_size}",
            corpus[pos]
        )));
    }
    let mut table: HashMap<Vec<Token>, Vec<u64>> = HashMap::new();
    for j in 0..corpus.len() {
        for c in 0..=order.min(j) {
            let ctx = &corpus[j - c..j];
            let row = match table.get_mut(ctx) {
                Some(row) => row,
                None => table.entry(ctx.to_vec()).or_insert_with(|| vec![0; vocab_size]),
            };
            row[corpus[j] as usize] += 1;
        }
    }
    let mut contexts: Vec<_> = table.into_iter().collect();
    contexts.sort();
    NGramModel::from_counts(NGramCounts {
        order,
        smoothing,
        vocab_size,
        contexts,
    })
}

impl NGramModel {
    pub fn from_counts(counts: NGramCounts) -> Result<Self> {
        let v = counts.vocab_size;
        if v == 0 || counts.order == 0 {
            return Err(EdlmError::Model("n-gram model needs V >= 1 and order >= 1".into()));
        }
        let k = counts.smoothing;
        let mut rows = HashMap::with_capacity(counts.contexts.len());
        for (ctx, row) in &counts.contexts {
            if row.len() != v || ctx.len() > counts.order {
                return Err(EdlmError::Model(format!("malformed n-gram row for context {ctx:?}")));
            }
            let total: u64 = row.iter().sum();
            let denom = total as f64 + k * v as f64;
            let lp: Vec<f64> = if denom > 0.0 {
                row.iter().map(|&c| ((c as f64 + k) / denom).ln()).collect()
            } else {
                vec![-(v as f64).ln(); v]
            };
            rows.insert(ctx.clone(), lp);
        }
        Ok(Self {
            counts,
            rows,
            unseen_log_prob: -(v as f64).ln(),
        })
    }

    pub fn order(&self) -> usize {
        self.counts.order
    }

    pub fn smoothing(&self) -> f64 {
        self.counts.smoothing
    }

    pub fn counts(&self) -> &NGramCounts {
        &self.counts
    }

    /// Full conditional row for the context implied by `prefix`.
    pub fn conditional_row(&self, prefix: &[Token]) -> Vec<f64> {
        let ctx = &prefix[prefix.len().saturating_sub(self.counts.order)..];
        match self.rows.get(ctx) {
            Some(row) => row.clone(),
            None => vec![self.unseen_log_prob; self.counts.vocab_size],
        }
    }
}

impl AutoregressiveModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.counts.vocab_size
    }

    fn cond_log_prob(&self, prefix: &[Token], token: Token) -> f64 {
        let ctx = &prefix[prefix.len().saturating_sub(self.counts.order)..];
        match self.rows.get(ctx) {
            Some(row) => row[token as usize],
            None => self.unseen_log_prob,
        }
    }
}
