use serde::{Deserialize, Serialize};

use crate::error::{EdlmError, Result};

pub type Token = u32;

/// Fixed-length token sequence over `{0, .., V-1}` plus the mask id `V`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq {
    tokens: Vec<Token>,
    vocab_size: usize,
}

impl TokenSeq {
    pub fn new(tokens: Vec<Token>, vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 {
            return Err(EdlmError::domain("vocabulary must be nonempty"));
        }
        if let Some((i, &tok)) = tokens
            .iter()
            .enumerate()
            .find(|(_, &tok)| tok as usize > vocab_size)
        {
            return Err(EdlmError::domain(format!(
                "token {tok} at position {i} outside [0, {vocab_size}]"
            )));
        }
        Ok(Self { tokens, vocab_size })
    }

    pub fn all_masked(len: usize, vocab_size: usize) -> Self {
        Self {
            tokens: vec![vocab_size as Token; len],
            vocab_size,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn mask_id(&self) -> Token {
        self.vocab_size as Token
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn get(&self, i: usize) -> Token {
        self.tokens[i]
    }

    pub fn is_masked_at(&self, i: usize) -> bool {
        self.tokens[i] == self.mask_id()
    }

    pub fn num_masked(&self) -> usize {
        let m = self.mask_id();
        self.tokens.iter().filter(|&&t| t == m).count()
    }

    pub fn has_mask(&self) -> bool {
        self.num_masked() > 0
    }

    pub fn masked_positions(&self) -> impl Iterator<Item = usize> + '_ {
        let m = self.mask_id();
        self.tokens
            .iter()
            .enumerate()
            .filter(move |(_, &t)| t == m)
            .map(|(i, _)| i)
    }

    pub(crate) fn set(&mut self, i: usize, tok: Token) {
        debug_assert!(tok as usize <= self.vocab_size);
        self.tokens[i] = tok;
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.tokens
    }

    /// Errors unless the sequence is free of mask tokens.
    pub fn require_clean(&self, what: &str) -> Result<()> {
        match self.masked_positions().next() {
            None => Ok(()),
            Some(i) => Err(EdlmError::precondition(format!(
                "{what} contains a mask token at position {i}"
            ))),
        }
    }

    /// Errors unless `x0` is a clean completion of `self` (same length and
    /// vocabulary, agreeing at every unmasked position of `self`).
    pub fn require_completion(&self, x0: &TokenSeq) -> Result<()> {
        if x0.len() != self.len() || x0.vocab_size != self.vocab_size {
            return Err(EdlmError::precondition(format!(
                "shape mismatch: x_t has L={} V={}, x0 has L={} V={}",
                self.len(),
                self.vocab_size,
                x0.len(),
                x0.vocab_size
            )));
        }
        x0.require_clean("x0")?;
        for (i, (&a, &b)) in self.tokens.iter().zip(&x0.tokens).enumerate() {
            if a != self.mask_id() && a != b {
                return Err(EdlmError::InconsistentPair {
                    position: i,
                    noisy: a,
                    clean: b,
                });
            }
        }
        Ok(())
    }
}
