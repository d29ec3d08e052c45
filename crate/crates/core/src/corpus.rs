//! Character-level corpora: vocabularies, tokenization, chunking and a
//! synthetic grammar generator for desk-scale experiments.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EdlmError, Result};
use crate::rng::uniform;
use crate::seq::{Token, TokenSeq};

/// Rendering of the mask id when a partially masked sequence is printed.
pub const MASK_CHAR: char = '_';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabPolicy {
    /// Space and `a`-`z`, 27 symbols (28 states with the mask).
    Text8,
    /// Every distinct character of the corpus, sorted by code point.
    Inferred,
}

impl VocabPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "text8" => Ok(Self::Text8),
            "inferred" => Ok(Self::Inferred),
            other => Err(EdlmError::Config(format!("unknown vocabulary policy '{other}'"))),
        }
    }
}

/// Bijection between characters and token ids `0..V`, ids assigned in
/// code point order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    symbols: Vec<char>,
}

impl Vocabulary {
    pub fn new(mut symbols: Vec<char>) -> Result<Self> {
        symbols.sort_unstable();
        let before = symbols.len();
        symbols.dedup();
        if symbols.is_empty() || symbols.len() != before {
            return Err(EdlmError::Data("vocabulary must be nonempty with distinct symbols".into()));
        }
        Ok(Self { symbols })
    }

    pub fn text8() -> Self {
        let symbols = std::iter::once(' ').chain('a'..='z').collect();
        Self { symbols }
    }

    pub fn infer(text: &str) -> Result<Self> {
        Self::new(text.chars().collect::<std::collections::BTreeSet<_>>().into_iter().collect())
    }

    pub fn for_policy(policy: VocabPolicy, text: &str) -> Result<Self> {
        match policy {
            VocabPolicy::Text8 => Ok(Self::text8()),
            VocabPolicy::Inferred => Self::infer(text),
        }
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn id_of(&self, c: char) -> Option<Token> {
        self.symbols.binary_search(&c).ok().map(|i| i as Token)
    }

    /// Character ids of `text`; the error names the first character
    /// outside the vocabulary and its character offset.
    pub fn encode(&self, text: &str) -> Result<Vec<Token>> {
        text.chars()
            .enumerate()
            .map(|(i, c)| {
                self.id_of(c)
                    .ok_or_else(|| EdlmError::Data(format!("character {c:?} at offset {i} is not in the vocabulary")))
            })
            .collect()
    }

    /// Inverse of [`encode`](Self::encode); the mask id prints as `_`.
    pub fn decode(&self, tokens: &[Token]) -> Result<String> {
        tokens
            .iter()
            .enumerate()
            .map(|(i, &t)| match t as usize {
                v if v < self.size() => Ok(self.symbols[v]),
                v if v == self.size() => Ok(MASK_CHAR),
                _ => Err(EdlmError::Data(format!("token {t} at position {i} is outside the vocabulary"))),
            })
            .collect()
    }
}

/// Reads a UTF-8 text file. A single trailing line break is dropped so
/// files ending in a newline work under the fixed policy.
pub fn read_corpus_text(path: &Path) -> Result<String> {
    let raw = fs::read(path).map_err(|e| EdlmError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut text = String::from_utf8(raw).map_err(|e| {
        EdlmError::Data(format!(
            "{} is not UTF-8 (byte offset {})",
            path.display(),
            e.utf8_error().valid_up_to()
        ))
    })?;
    if text.ends_with('\n') {
        text.pop();
        if text.ends_with('\r') {
            text.pop();
        }
    }
    if text.is_empty() {
        return Err(EdlmError::Data(format!("{} is empty", path.display())));
    }
    Ok(text)
}

/// Reads and tokenizes a corpus file under a vocabulary policy.
pub fn ingest_corpus(path: &Path, policy: VocabPolicy) -> Result<(Vec<Token>, Vocabulary)> {
    let text = read_corpus_text(path)?;
    let vocab = Vocabulary::for_policy(policy, &text)?;
    let ids = vocab.encode(&text)?;
    Ok((ids, vocab))
}

/// Consecutive non-overlapping windows of `len` tokens; a short tail is
/// dropped.
pub fn chunk(tokens: &[Token], len: usize, vocab_size: usize) -> Result<Vec<TokenSeq>> {
    if len == 0 {
        return Err(EdlmError::Config("sequence length must be positive".into()));
    }
    tokens
        .chunks_exact(len)
        .map(|c| TokenSeq::new(c.to_vec(), vocab_size))
        .collect()
}

/// Hex SHA-256 of a token stream.
pub fn corpus_digest(tokens: &[Token]) -> String {
    let mut h = Sha256::new();
    for t in tokens {
        h.update(t.to_le_bytes());
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

const DETERMINERS: &[&str] = &["the", "a", "one", "every", "that"];
const ADJECTIVES: &[&str] = &["red", "big", "small", "old", "quiet", "green", "brave"];
const NOUNS: &[&str] = &["cat", "dog", "bird", "fox", "child", "tree", "river", "house"];
const VERBS: &[&str] = &["sees", "likes", "finds", "chases", "hears", "paints", "follows"];
const ADVERBS: &[&str] = &["now", "again", "often", "slowly"];

fn pick<'a, R: Rng + ?Sized>(words: &[&'a str], rng: &mut R) -> &'a str {
    words[rng.random_range(0..words.len())]
}

fn noun_phrase<R: Rng + ?Sized>(out: &mut Vec<&str>, rng: &mut R) {
    out.push(pick(DETERMINERS, rng));
    if uniform(rng) < 0.5 {
        out.push(pick(ADJECTIVES, rng));
    }
    out.push(pick(NOUNS, rng));
}

/// One sentence `NP VERB NP [ADVERB]` in lowercase words.
pub fn grammar_sentence<R: Rng + ?Sized>(rng: &mut R) -> String {
    let mut words = Vec::with_capacity(8);
    noun_phrase(&mut words, rng);
    words.push(pick(VERBS, rng));
    noun_phrase(&mut words, rng);
    if uniform(rng) < 0.3 {
        words.push(pick(ADVERBS, rng));
    }
    words.join(" ")
}

/// At least `min_chars` characters of space-separated grammar sentences,
/// within the fixed 27-symbol alphabet.
pub fn synthetic_grammar_text<R: Rng + ?Sized>(min_chars: usize, rng: &mut R) -> String {
    let mut text = String::with_capacity(min_chars + 64);
    while text.len() < min_chars {
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(&grammar_sentence(rng));
    }
    text
}
