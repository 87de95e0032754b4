//! Single-rule predicates. Every removal threshold is strict (`>`); the
//! embedding similarity window is inclusive at both ends.

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use super::providers::{EntityRecognizer, LanguageTagger, ProviderError, SentenceEmbedder, TokenLanguage};
use crate::corpus::{Decision, SentencePair};
use crate::tokenizer::{char_count, tokenize};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FilterError {
    #[error("embedding dimension mismatch: source {source_dim}, target {target_dim}")]
    DimensionMismatch { source_dim: usize, target_dim: usize },
    #[error("embedding contains a non-finite component")]
    NonFiniteEmbedding,
    #[error("provider failed: {0}")]
    Provider(#[from] ProviderError),
}

/// Result of one rule on one pair. `Remove` carries the measured value.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Keep,
    Remove(String),
}

impl Outcome {
    pub fn decision(&self) -> Decision {
        match self {
            Outcome::Keep => Decision::Keep,
            Outcome::Remove(_) => Decision::Remove,
        }
    }

    pub fn is_keep(&self) -> bool {
        matches!(self, Outcome::Keep)
    }
}

/// Tokens and character counts of both sides, computed once per pair.
pub(crate) struct PairView<'p> {
    pub pair: &'p SentencePair,
    pub src_tokens: Vec<&'p str>,
    pub tgt_tokens: Vec<&'p str>,
    pub src_chars: usize,
    pub tgt_chars: usize,
}

impl<'p> PairView<'p> {
    pub fn new(pair: &'p SentencePair) -> Self {
        Self {
            pair,
            src_tokens: tokenize(&pair.source),
            tgt_tokens: tokenize(&pair.target),
            src_chars: char_count(&pair.source),
            tgt_chars: char_count(&pair.target),
        }
    }

    fn sides(&self) -> [(&'static str, &[&'p str], usize); 2] {
        [
            ("source", &self.src_tokens, self.src_chars),
            ("target", &self.tgt_tokens, self.tgt_chars),
        ]
    }
}

pub(crate) fn check_language(view: &PairView, tagger: &dyn LanguageTagger, max_fraction: f64) -> Outcome {
    for (side, tokens, _) in view.sides() {
        let (mut counted, mut other) = (0usize, 0usize);
        for t in tokens {
            match tagger.classify(t) {
                TokenLanguage::Neutral => {}
                TokenLanguage::Other => {
                    counted += 1;
                    other += 1;
                }
                TokenLanguage::LangA | TokenLanguage::LangB => counted += 1,
            }
        }
        let fraction = if counted == 0 { 0.0 } else { other as f64 / counted as f64 };
        if fraction > max_fraction {
            return Outcome::Remove(format!("{side} other_fraction={fraction} > {max_fraction}"));
        }
    }
    Outcome::Keep
}

pub fn language_filter(pair: &SentencePair, tagger: &dyn LanguageTagger, max_fraction: f64) -> Outcome {
    check_language(&PairView::new(pair), tagger, max_fraction)
}

/// Case-folded NFKC form used to compare entities across languages.
pub fn normalize_entity(entity: &str) -> String {
    entity.nfkc().flat_map(char::to_lowercase).collect()
}

fn entity_multiset(rec: &dyn EntityRecognizer, sentence: &str) -> Result<Vec<String>, ProviderError> {
    let mut v: Vec<String> = rec.extract(sentence)?.iter().map(|e| normalize_entity(e)).collect();
    v.sort();
    Ok(v)
}

pub fn entity_filter(pair: &SentencePair, rec: &dyn EntityRecognizer) -> Result<Outcome, FilterError> {
    let src = entity_multiset(rec, &pair.source)?;
    let tgt = entity_multiset(rec, &pair.target)?;
    if src == tgt {
        return Ok(Outcome::Keep);
    }
    if !rec.one_sided_mismatch() && (src.is_empty() || tgt.is_empty()) {
        return Ok(Outcome::Keep);
    }
    Ok(Outcome::Remove(format!(
        "source entities [{}] != target entities [{}]",
        src.join(", "),
        tgt.join(", ")
    )))
}

/// Digit sequences with `,` thousands separators stripped. A `.` or `,`
/// only belongs to a number when digits surround it; `٫` is read as `.`.
pub fn extract_numbers(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut numbers = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let mut number = String::new();
        while i < chars.len() {
            let c = chars[i];
            if c.is_ascii_digit() {
                number.push(c);
            } else if matches!(c, ',' | '.' | '\u{066B}')
                && chars.get(i + 1).is_some_and(char::is_ascii_digit)
            {
                if c != ',' {
                    number.push('.');
                }
            } else {
                break;
            }
            i += 1;
        }
        numbers.push(number);
    }
    numbers.sort();
    numbers
}

pub fn numeric_filter(pair: &SentencePair) -> Outcome {
    let src = extract_numbers(&pair.source);
    let tgt = extract_numbers(&pair.target);
    if src == tgt {
        Outcome::Keep
    } else {
        Outcome::Remove(format!(
            "source numbers [{}] != target numbers [{}]",
            src.join(", "),
            tgt.join(", ")
        ))
    }
}

pub(crate) fn check_length(view: &PairView, max_chars: usize) -> Outcome {
    for (side, _, chars) in view.sides() {
        if chars > max_chars {
            return Outcome::Remove(format!("{side} chars={chars} > {max_chars}"));
        }
    }
    Outcome::Keep
}

pub fn length_filter(pair: &SentencePair, max_chars: usize) -> Outcome {
    check_length(&PairView::new(pair), max_chars)
}

pub(crate) fn check_token_length(view: &PairView, max_token_chars: usize) -> Outcome {
    for (side, tokens, _) in view.sides() {
        let longest = tokens.iter().map(|t| char_count(t)).max().unwrap_or(0);
        if longest > max_token_chars {
            return Outcome::Remove(format!("{side} token_chars={longest} > {max_token_chars}"));
        }
    }
    Outcome::Keep
}

pub fn token_length_filter(pair: &SentencePair, max_token_chars: usize) -> Outcome {
    check_token_length(&PairView::new(pair), max_token_chars)
}

pub(crate) fn check_char_token_ratio(view: &PairView, max_ratio: f64) -> Outcome {
    for (side, tokens, chars) in view.sides() {
        if tokens.is_empty() {
            return Outcome::Remove(format!("{side} tokens=0"));
        }
        let ratio = chars as f64 / tokens.len() as f64;
        if ratio > max_ratio {
            return Outcome::Remove(format!("{side} char_token_ratio={ratio} > {max_ratio}"));
        }
    }
    Outcome::Keep
}

pub fn char_token_ratio_filter(pair: &SentencePair, max_ratio: f64) -> Outcome {
    check_char_token_ratio(&PairView::new(pair), max_ratio)
}

/// max/min of two counts: both zero is 1, exactly one zero is infinite.
pub fn symmetric_ratio(a: usize, b: usize) -> f64 {
    let (lo, hi) = (a.min(b), a.max(b));
    match (lo, hi) {
        (_, 0) => 1.0,
        (0, _) => f64::INFINITY,
        _ => hi as f64 / lo as f64,
    }
}

pub(crate) fn check_pair_token_ratio(view: &PairView, max_ratio: f64) -> Outcome {
    let ratio = symmetric_ratio(view.src_tokens.len(), view.tgt_tokens.len());
    if ratio > max_ratio {
        Outcome::Remove(format!("pair_token_ratio={ratio} > {max_ratio}"))
    } else {
        Outcome::Keep
    }
}

pub fn pair_token_ratio_filter(pair: &SentencePair, max_ratio: f64) -> Outcome {
    check_pair_token_ratio(&PairView::new(pair), max_ratio)
}

pub(crate) fn check_pair_length_ratio(view: &PairView, max_ratio: f64) -> Outcome {
    let ratio = symmetric_ratio(view.src_chars, view.tgt_chars);
    if ratio > max_ratio {
        Outcome::Remove(format!("pair_length_ratio={ratio} > {max_ratio}"))
    } else {
        Outcome::Keep
    }
}

pub fn pair_length_ratio_filter(pair: &SentencePair, max_ratio: f64) -> Outcome {
    check_pair_length_ratio(&PairView::new(pair), max_ratio)
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<Option<f64>, FilterError> {
    if a.len() != b.len() {
        return Err(FilterError::DimensionMismatch {
            source_dim: a.len(),
            target_dim: b.len(),
        });
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(FilterError::NonFiniteEmbedding);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(None);
    }
    Ok(Some((dot / (na * nb)).clamp(-1.0, 1.0)))
}

pub fn embedding_filter(pair: &SentencePair, embedder: &dyn SentenceEmbedder, lo: f64, hi: f64) -> Result<Outcome, FilterError> {
    let a = embedder.embed(&pair.source)?;
    let b = embedder.embed(&pair.target)?;
    Ok(match cosine(&a, &b)? {
        None => Outcome::Remove("zero-norm embedding".to_string()),
        Some(s) if (lo..=hi).contains(&s) => Outcome::Keep,
        Some(s) => Outcome::Remove(format!("cosine={s} outside [{lo}, {hi}]")),
    })
}
