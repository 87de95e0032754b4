//! Pluggable models behind the language, entity and embedding filters, with
//! deterministic default implementations.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::corpus::{read_lines, SentencePair};
use crate::tokenizer::tokenize;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{0}")]
pub struct ProviderError(pub String);

/// Language assigned to a single token. Tokens without any letters
/// (punctuation, numbers) are `Neutral` and do not count toward the foreign
/// token fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenLanguage {
    LangA,
    LangB,
    Other,
    Neutral,
}

pub trait LanguageTagger: Send + Sync {
    fn classify(&self, token: &str) -> TokenLanguage;
}

pub trait EntityRecognizer: Send + Sync {
    /// Entity strings found in `sentence`, before normalization.
    fn extract(&self, sentence: &str) -> Result<Vec<String>, ProviderError>;

    /// Whether entities found on only one side count as a mismatch. A
    /// recognizer that only understands one of the two languages should
    /// return `false`, so pairs are compared only when both sides yield
    /// entities.
    fn one_sided_mismatch(&self) -> bool {
        true
    }
}

pub trait SentenceEmbedder: Send + Sync {
    fn embed(&self, sentence: &str) -> Result<Vec<f64>, ProviderError>;
}

fn is_latin_letter(c: char) -> bool {
    c.is_alphabetic()
        && matches!(c, 'A'..='Z' | 'a'..='z' | '\u{00C0}'..='\u{024F}' | '\u{1E00}'..='\u{1EFF}')
}

fn is_hebrew_letter(c: char) -> bool {
    c.is_alphabetic() && matches!(c, '\u{0590}'..='\u{05FF}' | '\u{FB1D}'..='\u{FB4F}')
}

/// Script-majority tagger: Latin letters mean `LangA`, Hebrew letters mean
/// `LangB`. A token needs a strict majority of its letters in one script.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptTagger;

impl LanguageTagger for ScriptTagger {
    fn classify(&self, token: &str) -> TokenLanguage {
        let (mut letters, mut latin, mut hebrew) = (0usize, 0usize, 0usize);
        for c in token.chars().filter(|c| c.is_alphabetic()) {
            letters += 1;
            if is_latin_letter(c) {
                latin += 1;
            } else if is_hebrew_letter(c) {
                hebrew += 1;
            }
        }
        if letters == 0 {
            TokenLanguage::Neutral
        } else if 2 * latin > letters {
            TokenLanguage::LangA
        } else if 2 * hebrew > letters {
            TokenLanguage::LangB
        } else {
            TokenLanguage::Other
        }
    }
}

/// Extracts runs of capitalized Latin tokens ("New York", "Paris"). A lone
/// capitalized token at the start of a sentence is skipped. Hebrew has no
/// case, so this recognizer finds nothing there and only compares pairs
/// where both sides produce entities.
#[derive(Debug, Clone, Copy, Default)]
pub struct CapitalizedEntities;

impl EntityRecognizer for CapitalizedEntities {
    fn extract(&self, sentence: &str) -> Result<Vec<String>, ProviderError> {
        let tokens = tokenize(sentence);
        let capitalized = |t: &str| t.chars().next().is_some_and(|c| c.is_uppercase() && is_latin_letter(c));
        let mut entities = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            if !capitalized(tokens[i]) {
                i += 1;
                continue;
            }
            let start = i;
            while i < tokens.len() && capitalized(tokens[i]) {
                i += 1;
            }
            if start == 0 && i == 1 {
                continue;
            }
            entities.push(tokens[start..i].join(" "));
        }
        Ok(entities)
    }

    fn one_sided_mismatch(&self) -> bool {
        false
    }
}

/// Hashes padded, lowercased character trigrams into a signed count vector.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    pub dim: usize,
    pub ngram: usize,
    pub seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self {
            dim: 256,
            ngram: 3,
            seed: 0x5eed,
        }
    }
}

fn fnv1a(seed: u64, chars: &[char]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &c in chars {
        for b in (c as u32).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl SentenceEmbedder for HashingEmbedder {
    fn embed(&self, sentence: &str) -> Result<Vec<f64>, ProviderError> {
        let mut v = vec![0.0; self.dim];
        let padded: Vec<char> = std::iter::once(' ')
            .chain(sentence.chars().flat_map(char::to_lowercase))
            .chain(std::iter::once(' '))
            .collect();
        for gram in padded.windows(self.ngram.max(1)) {
            let h = fnv1a(self.seed, gram);
            let slot = (h % self.dim as u64) as usize;
            v[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        Ok(v)
    }
}

/// Vectors computed elsewhere, looked up by sentence text.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedEmbedder {
    vectors: HashMap<String, Vec<f64>>,
}

impl PrecomputedEmbedder {
    pub fn new() -> Self {
        Self::default()
    }

    /// The first vector registered for a sentence wins.
    pub fn insert(&mut self, sentence: impl Into<String>, vector: Vec<f64>) {
        self.vectors.entry(sentence.into()).or_insert(vector);
    }

    /// Loads one vector file per side, each line aligned with the pair of the
    /// same line number.
    pub fn from_files(pairs: &[SentencePair], source_vectors: &Path, target_vectors: &Path) -> Result<Self, ProviderError> {
        let src = parse_vector_file(source_vectors)?;
        let tgt = parse_vector_file(target_vectors)?;
        for (path, vecs) in [(source_vectors, &src), (target_vectors, &tgt)] {
            if vecs.len() != pairs.len() {
                return Err(ProviderError(format!(
                    "{}: {} vectors for {} pairs",
                    path.display(),
                    vecs.len(),
                    pairs.len()
                )));
            }
        }
        let mut out = Self::new();
        for ((pair, s), t) in pairs.iter().zip(src).zip(tgt) {
            out.insert(pair.source.clone(), s);
            out.insert(pair.target.clone(), t);
        }
        Ok(out)
    }
}

/// One vector per line as space-separated decimals; all lines share a width.
pub fn parse_vector_file(path: &Path) -> Result<Vec<Vec<f64>>, ProviderError> {
    let lines = read_lines(path).map_err(|e| ProviderError(e.to_string()))?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let v = line
            .split_whitespace()
            .map(|x| x.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ProviderError(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if let Some(first) = out.first().map(Vec::len) {
            if v.len() != first {
                return Err(ProviderError(format!(
                    "{}:{}: dimension {} differs from {}",
                    path.display(),
                    i + 1,
                    v.len(),
                    first
                )));
            }
        }
        out.push(v);
    }
    Ok(out)
}

impl SentenceEmbedder for PrecomputedEmbedder {
    fn embed(&self, sentence: &str) -> Result<Vec<f64>, ProviderError> {
        self.vectors
            .get(sentence)
            .cloned()
            .ok_or_else(|| ProviderError(format!("no precomputed embedding for {sentence:?}")))
    }
}
