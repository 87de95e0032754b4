//! Stochastic decoding for backtranslation: temperature, then top-k, then
//! nucleus (top-p) truncation, then renormalization.
//!
//! Randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)`. Corpus runs give sentence `i` its own stream
//! (`set_stream(i)`), so results do not depend on the worker count or the
//! platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::config::{ConfigError, KvConfig};
use crate::corpus::SentencePair;
use crate::parallel::ordered_map;
use crate::scorers::{log_sum_exp, ScorerError, SequenceScorer, TokenId, DEFAULT_SENTINEL};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingParams {
    pub top_k: usize,
    pub top_p: f64,
    pub temperature: f64,
    /// Only 1 is supported.
    pub beam: usize,
    /// Recorded for completeness; has no effect with a single beam.
    pub length_penalty: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            top_k: 50,
            top_p: 0.93,
            temperature: 0.7,
            beam: 1,
            length_penalty: 1.0,
            max_len: 128,
            seed: 0,
        }
    }
}

impl SamplingParams {
    pub const KEYS: [&'static str; 7] = ["top_k", "top_p", "temperature", "beam", "length_penalty", "max_len", "seed"];

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        if self.top_k < 1 {
            return fail("top_k must be at least 1".into());
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return fail(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.beam != 1 {
            return fail(format!("only beam = 1 is supported for sampling, got {}", self.beam));
        }
        if self.max_len < 1 {
            return fail("max_len must be at least 1".into());
        }
        Ok(())
    }

    pub fn apply(&mut self, kv: &KvConfig) -> Result<(), ConfigError> {
        kv.check_keys(&Self::KEYS)?;
        kv.read_into("top_k", &mut self.top_k)?;
        kv.read_into("top_p", &mut self.top_p)?;
        kv.read_into("temperature", &mut self.temperature)?;
        kv.read_into("beam", &mut self.beam)?;
        kv.read_into("length_penalty", &mut self.length_penalty)?;
        kv.read_into("max_len", &mut self.max_len)?;
        kv.read_into("seed", &mut self.seed)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.insert("top_k", self.top_k);
        kv.insert("top_p", self.top_p);
        kv.insert("temperature", self.temperature);
        kv.insert("beam", self.beam);
        kv.insert("length_penalty", self.length_penalty);
        kv.insert("max_len", self.max_len);
        kv.insert("seed", self.seed);
        kv
    }
}

/// Applies temperature, top-k and nucleus truncation to a normalized
/// log-probability vector and renormalizes the survivors. Excluded entries
/// get [`DEFAULT_SENTINEL`]. Ties rank by lower index.
pub fn filter_distribution(dist: &[f64], params: &SamplingParams) -> Vec<f64> {
    let scaled: Vec<f64> = dist.iter().map(|lp| lp / params.temperature).collect();
    let lse = log_sum_exp(scaled.iter().copied());
    let mut out = vec![DEFAULT_SENTINEL; dist.len()];
    if !lse.is_finite() {
        return out;
    }
    let logp: Vec<f64> = scaled.iter().map(|s| s - lse).collect();

    let mut order: Vec<usize> = (0..dist.len()).filter(|&i| logp[i].exp() > 0.0).collect();
    order.sort_by(|&a, &b| logp[b].total_cmp(&logp[a]).then(a.cmp(&b)));
    order.truncate(params.top_k.max(1));

    let mut cumulative = 0.0;
    let mut cut = order.len();
    for (rank, &i) in order.iter().enumerate() {
        cumulative += logp[i].exp();
        if cumulative >= params.top_p {
            cut = rank + 1;
            break;
        }
    }
    order.truncate(cut);

    let kept_lse = log_sum_exp(order.iter().map(|&i| logp[i]));
    for &i in &order {
        out[i] = logp[i] - kept_lse;
    }
    out
}

/// Draws an index from a log-probability vector by inverse CDF in index
/// order.
pub fn draw<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last = None;
    for (i, lp) in dist.iter().enumerate() {
        let p = lp.exp();
        if p <= 0.0 {
            continue;
        }
        cumulative += p;
        last = Some(i);
        if u < cumulative {
            return Some(i);
        }
    }
    last
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples a continuation of `<s>` conditioned on `source` until `</s>` or
/// `max_len` tokens. The result holds neither `<s>` nor `</s>`.
pub fn sample_sequence_with_rng<R: Rng + ?Sized>(
    direct: &dyn SequenceScorer,
    source: &[TokenId],
    params: &SamplingParams,
    rng: &mut R,
) -> Result<Vec<TokenId>, ScorerError> {
    let vocab = direct.vocab();
    let (bos, eos) = (vocab.bos(), vocab.eos());
    let mut context = vec![bos];
    let mut out = Vec::new();
    while out.len() < params.max_len {
        let mut dist = direct.next_distribution(&context, Some(source))?;
        dist[bos.index()] = f64::NEG_INFINITY;
        let filtered = filter_distribution(&dist, params);
        let Some(next) = draw(&filtered, rng) else {
            break;
        };
        let next = TokenId(next as u32);
        if next == eos {
            break;
        }
        out.push(next);
        context.push(next);
    }
    Ok(out)
}

pub fn sample_sequence(
    direct: &dyn SequenceScorer,
    source: &[TokenId],
    params: &SamplingParams,
) -> Result<Vec<TokenId>, ScorerError> {
    sample_sequence_with_rng(direct, source, params, &mut rng_for(params.seed, 0))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedSentence {
    /// 0-based line of the monolingual input.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backtranslation {
    /// Synthetic text on the source side, the original sentence on the
    /// target side. Ids number the output pairs consecutively.
    pub pairs: Vec<SentencePair>,
    pub skipped: Vec<SkippedSentence>,
}

/// Translates each monolingual sentence with `direct` (a target-to-source
/// model) and pairs the sample with the original. Sentences are split on
/// whitespace into model tokens; a sentence the model cannot handle is
/// skipped and logged.
pub fn backtranslate_corpus(
    direct: &dyn SequenceScorer,
    monolingual: &[String],
    params: &SamplingParams,
    jobs: usize,
) -> Backtranslation {
    let vocab = direct.vocab();
    let results = ordered_map(monolingual, jobs, |line, sentence| {
        let tokens: Vec<&str> = sentence.split_whitespace().collect();
        let ids = vocab.encode(&tokens)?;
        let mut rng = rng_for(params.seed, line as u64);
        let sample = sample_sequence_with_rng(direct, &ids, params, &mut rng)?;
        Ok::<_, ScorerError>(vocab.decode_joined(&sample))
    });
    let mut out = Backtranslation {
        pairs: Vec::new(),
        skipped: Vec::new(),
    };
    for (line, (result, original)) in results.into_iter().zip(monolingual).enumerate() {
        match result {
            Ok(synthetic) => {
                let id = out.pairs.len();
                out.pairs.push(SentencePair::new(id, synthetic, original.clone()));
            }
            Err(e) => out.skipped.push(SkippedSentence {
                line,
                reason: e.to_string(),
            }),
        }
    }
    out
}
