//! Corpus-level BLEU and chrF++ against a single reference.
//!
//! Both metrics tokenize words with [`crate::tokenizer::tokenize`] unless a
//! different tokenizer is passed to the `*_with` variants. Absolute values
//! are therefore not comparable with scores computed under subword-model
//! tokenization; they are meant as a consistent development objective.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use thiserror::Error;

use crate::config::{ConfigError, KvConfig};
use crate::tokenizer::tokenize;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("{hypotheses} hypotheses but {references} references")]
    LengthMismatch { hypotheses: usize, references: usize },
    #[error("cannot score an empty corpus")]
    EmptyCorpus,
    #[error("invalid metric configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    Exp,
    None,
}

impl FromStr for Smoothing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exp" => Ok(Smoothing::Exp),
            "none" => Ok(Smoothing::None),
            other => Err(format!("unknown smoothing {other:?}")),
        }
    }
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Smoothing::Exp => "exp",
            Smoothing::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Bleu,
    Chrf,
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bleu" => Ok(Metric::Bleu),
            "chrf" | "chrf++" => Ok(Metric::Chrf),
            other => Err(format!("unknown metric {other:?} (expected bleu or chrf)")),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Bleu => "bleu",
            Metric::Chrf => "chrf",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricConfig {
    pub bleu_max_n: usize,
    pub bleu_smoothing: Smoothing,
    pub chrf_char_n: usize,
    pub chrf_word_n: usize,
    pub chrf_beta: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            bleu_max_n: 4,
            bleu_smoothing: Smoothing::Exp,
            chrf_char_n: 6,
            chrf_word_n: 2,
            chrf_beta: 2.0,
        }
    }
}

impl MetricConfig {
    pub const KEYS: [&'static str; 5] = ["bleu_max_n", "bleu_smoothing", "chrf_char_n", "chrf_word_n", "chrf_beta"];

    pub fn apply(&mut self, kv: &KvConfig) -> Result<(), ConfigError> {
        kv.check_keys(&Self::KEYS)?;
        kv.read_into("bleu_max_n", &mut self.bleu_max_n)?;
        kv.read_into("bleu_smoothing", &mut self.bleu_smoothing)?;
        kv.read_into("chrf_char_n", &mut self.chrf_char_n)?;
        kv.read_into("chrf_word_n", &mut self.chrf_word_n)?;
        kv.read_into("chrf_beta", &mut self.chrf_beta)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.insert("bleu_max_n", self.bleu_max_n);
        kv.insert("bleu_smoothing", self.bleu_smoothing);
        kv.insert("chrf_char_n", self.chrf_char_n);
        kv.insert("chrf_word_n", self.chrf_word_n);
        kv.insert("chrf_beta", self.chrf_beta);
        kv
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if self.bleu_max_n < 1 || self.chrf_char_n < 1 || self.chrf_word_n < 1 {
            return Err(MetricError::Config("n-gram orders must be at least 1".into()));
        }
        if !(self.chrf_beta > 0.0) {
            return Err(MetricError::Config(format!("beta must be positive, got {}", self.chrf_beta)));
        }
        Ok(())
    }

    /// Reproducibility line printed next to a score.
    pub fn signature(&self, metric: Metric) -> String {
        let version = env!("CARGO_PKG_VERSION");
        match metric {
            Metric::Bleu => format!(
                "bleu|nrefs:1|case:mixed|tok:rule|smooth:{}|max_n:{}|version:{version}",
                self.bleu_smoothing, self.bleu_max_n
            ),
            Metric::Chrf => format!(
                "chrf|nrefs:1|case:mixed|tok:rule|nc:{}|nw:{}|beta:{}|space:no|version:{version}",
                self.chrf_char_n, self.chrf_word_n, self.chrf_beta
            ),
        }
    }
}

pub fn rule_tokens(s: &str) -> Vec<String> {
    tokenize(s).into_iter().map(String::from).collect()
}

fn check_lengths(hyps: &[String], refs: &[String]) -> Result<(), MetricError> {
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch {
            hypotheses: hyps.len(),
            references: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}

fn ngram_counts<T: Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && items.len() >= n {
        for gram in items.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// (hypothesis n-grams, reference n-grams, clipped matches).
fn overlap<T: Hash + Eq + Clone>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    (h.values().sum(), r.values().sum(), matches)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    pub score: f64,
    /// Per-order precisions in [0, 1], after smoothing.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

pub fn bleu(hyps: &[String], refs: &[String], config: &MetricConfig) -> Result<BleuScore, MetricError> {
    bleu_with(hyps, refs, config, &rule_tokens)
}

/// Corpus BLEU.
///
/// With `Smoothing::Exp`, the k-th order that has no matches gets precision
/// `1 / (2^k · max(total, 1))`. An order for which neither hypotheses nor
/// references contain any n-gram is vacuous and counts as precision 1.
pub fn bleu_with(
    hyps: &[String],
    refs: &[String],
    config: &MetricConfig,
    tokenizer: &(dyn Fn(&str) -> Vec<String> + Sync),
) -> Result<BleuScore, MetricError> {
    check_lengths(hyps, refs)?;
    config.validate()?;
    let max_n = config.bleu_max_n;
    let (mut totals, mut ref_totals, mut matches) = (vec![0usize; max_n], vec![0usize; max_n], vec![0usize; max_n]);
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (tokenizer(h), tokenizer(r));
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=max_n {
            let (ht, rt, m) = overlap(&h, &r, n);
            totals[n - 1] += ht;
            ref_totals[n - 1] += rt;
            matches[n - 1] += m;
        }
    }

    if hyp_len == 0 {
        let score = if ref_len == 0 { 100.0 } else { 0.0 };
        return Ok(BleuScore {
            score,
            precisions: vec![score / 100.0; max_n],
            brevity_penalty: score / 100.0,
            hyp_len,
            ref_len,
        });
    }

    let mut smooth = 1.0;
    let precisions: Vec<f64> = (0..max_n)
        .map(|i| {
            if matches[i] > 0 {
                matches[i] as f64 / totals[i] as f64
            } else if totals[i] == 0 && ref_totals[i] == 0 {
                1.0
            } else {
                match config.bleu_smoothing {
                    Smoothing::Exp => {
                        smooth *= 2.0;
                        1.0 / (smooth * totals[i].max(1) as f64)
                    }
                    Smoothing::None => 0.0,
                }
            }
        })
        .collect();

    let brevity_penalty = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let score = if precisions.contains(&0.0) {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64;
        (100.0 * brevity_penalty * mean_log.exp()).clamp(0.0, 100.0)
    };
    Ok(BleuScore {
        score,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct OrderStats {
    hyp: usize,
    reference: usize,
    matches: usize,
}

impl OrderStats {
    fn add(&mut self, (hyp, reference, matches): (usize, usize, usize)) {
        self.hyp += hyp;
        self.reference += reference;
        self.matches += matches;
    }

    fn f_beta(&self, beta: f64) -> Option<f64> {
        if self.hyp == 0 && self.reference == 0 {
            return None;
        }
        let p = if self.hyp > 0 { self.matches as f64 / self.hyp as f64 } else { 0.0 };
        let r = if self.reference > 0 { self.matches as f64 / self.reference as f64 } else { 0.0 };
        let b2 = beta * beta;
        let denom = b2 * p + r;
        Some(if denom > 0.0 { (1.0 + b2) * p * r / denom } else { 0.0 })
    }
}

pub fn chrf(hyps: &[String], refs: &[String], config: &MetricConfig) -> Result<f64, MetricError> {
    chrf_with(hyps, refs, config, &rule_tokens)
}

/// Corpus chrF++: n-gram statistics are summed over the corpus per order,
/// each order yields an F-beta, and the score is their mean. Character
/// n-grams ignore whitespace. Orders with no n-grams on either side are
/// left out of the mean.
pub fn chrf_with(
    hyps: &[String],
    refs: &[String],
    config: &MetricConfig,
    tokenizer: &(dyn Fn(&str) -> Vec<String> + Sync),
) -> Result<f64, MetricError> {
    check_lengths(hyps, refs)?;
    config.validate()?;
    let mut chars = vec![OrderStats::default(); config.chrf_char_n];
    let mut words = vec![OrderStats::default(); config.chrf_word_n];
    for (h, r) in hyps.iter().zip(refs) {
        let hc: Vec<char> = h.chars().filter(|c| !c.is_whitespace()).collect();
        let rc: Vec<char> = r.chars().filter(|c| !c.is_whitespace()).collect();
        for (n, stats) in chars.iter_mut().enumerate() {
            stats.add(overlap(&hc, &rc, n + 1));
        }
        let (hw, rw) = (tokenizer(h), tokenizer(r));
        for (n, stats) in words.iter_mut().enumerate() {
            stats.add(overlap(&hw, &rw, n + 1));
        }
    }
    let scores: Vec<f64> = chars
        .iter()
        .chain(&words)
        .filter_map(|s| s.f_beta(config.chrf_beta))
        .collect();
    if scores.is_empty() {
        // Nothing on either side: the corpora are identical.
        return Ok(100.0);
    }
    Ok((100.0 * scores.iter().sum::<f64>() / scores.len() as f64).clamp(0.0, 100.0))
}

pub fn score(metric: Metric, hyps: &[String], refs: &[String], config: &MetricConfig) -> Result<f64, MetricError> {
    match metric {
        Metric::Bleu => bleu(hyps, refs, config).map(|b| b.score),
        Metric::Chrf => chrf(hyps, refs, config),
    }
}
