//! Beam search with noisy-channel rescoring.
//!
//! Each beam item proposes its `k2` most likely next tokens under the direct
//! model. Every proposal is then rescored with
//!
//! ```text
//! score = log P(y|x) / t^lp + (δ_ch · log P(x|y) + δ_lm · log P(y)) / s
//! ```
//!
//! where `s` is the source length, `t` the candidate length (both without
//! `<s>`/`</s>`, at least 1) and `lp` the length penalty. The best `beam`
//! proposals by that score survive. Finished candidates stay in the beam and
//! compete with new proposals until every beam item has finished.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::config::{ConfigError, KvConfig};
use crate::parallel::ordered_map;
use crate::scorers::{prefix_log_prob, ScorerError, SequenceScorer, TokenId};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decoding configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("search ended without any finished hypothesis")]
    NoHypothesis,
}

impl From<ConfigError> for DecodeError {
    fn from(e: ConfigError) -> Self {
        DecodeError::Config(e.to_string())
    }
}

/// Translation direction, used to pick the tuned reranking weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    EnHe,
    HeEn,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en-he" => Ok(Direction::EnHe),
            "he-en" => Ok(Direction::HeEn),
            other => Err(format!("unknown direction {other:?} (expected en-he or he-en)")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::EnHe => "en-he",
            Direction::HeEn => "he-en",
        })
    }
}

/// When channel and language model scores enter the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RescoreMode {
    /// Rescore every proposal at every step (online reranking).
    EveryStep,
    /// Search by the direct model alone and rerank the final beam.
    FinalOnly,
}

impl FromStr for RescoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "every-step" => Ok(RescoreMode::EveryStep),
            "final-only" => Ok(RescoreMode::FinalOnly),
            other => Err(format!("unknown rescore mode {other:?} (expected every-step or final-only)")),
        }
    }
}

impl fmt::Display for RescoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RescoreMode::EveryStep => "every-step",
            RescoreMode::FinalOnly => "final-only",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodingParams {
    pub beam: usize,
    /// Proposals per beam item.
    pub k2: usize,
    pub length_penalty: f64,
    /// Output vocabulary size of the channel model.
    pub cm_top_k: usize,
    pub delta_ch: f64,
    pub delta_lm: f64,
    pub max_len: usize,
    pub rescore: RescoreMode,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            beam: 5,
            k2: 5,
            length_penalty: 1.0,
            cm_top_k: 500,
            delta_ch: 0.3,
            delta_lm: 0.3,
            max_len: 128,
            rescore: RescoreMode::EveryStep,
        }
    }
}

impl DecodingParams {
    pub const KEYS: [&'static str; 8] = [
        "beam",
        "k2",
        "length_penalty",
        "cm_top_k",
        "delta_ch",
        "delta_lm",
        "max_len",
        "rescore",
    ];

    /// Submission settings with the tuned weights for `direction`.
    pub fn preset(direction: Direction) -> Self {
        let (delta_ch, delta_lm) = match direction {
            Direction::EnHe => (0.2297, 0.2056),
            Direction::HeEn => (0.2998, 0.2594),
        };
        Self {
            delta_ch,
            delta_lm,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        if self.beam < 1 {
            return fail("beam must be at least 1".into());
        }
        if self.k2 < 1 {
            return fail("k2 must be at least 1".into());
        }
        if self.cm_top_k < 1 {
            return fail("cm_top_k must be at least 1".into());
        }
        if self.max_len < 1 {
            return fail("max_len must be at least 1".into());
        }
        if !(self.delta_ch >= 0.0 && self.delta_lm >= 0.0) || !self.delta_ch.is_finite() || !self.delta_lm.is_finite() {
            return fail(format!(
                "delta_ch and delta_lm must be non-negative, got {} and {}",
                self.delta_ch, self.delta_lm
            ));
        }
        if !(self.length_penalty >= 0.0) || !self.length_penalty.is_finite() {
            return fail(format!("length_penalty must be non-negative, got {}", self.length_penalty));
        }
        Ok(())
    }

    pub fn apply(&mut self, kv: &KvConfig) -> Result<(), ConfigError> {
        kv.check_keys(&Self::KEYS)?;
        kv.read_into("beam", &mut self.beam)?;
        kv.read_into("k2", &mut self.k2)?;
        kv.read_into("length_penalty", &mut self.length_penalty)?;
        kv.read_into("cm_top_k", &mut self.cm_top_k)?;
        kv.read_into("delta_ch", &mut self.delta_ch)?;
        kv.read_into("delta_lm", &mut self.delta_lm)?;
        kv.read_into("max_len", &mut self.max_len)?;
        kv.read_into("rescore", &mut self.rescore)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.insert("beam", self.beam);
        kv.insert("k2", self.k2);
        kv.insert("length_penalty", self.length_penalty);
        kv.insert("cm_top_k", self.cm_top_k);
        kv.insert("delta_ch", self.delta_ch);
        kv.insert("delta_lm", self.delta_lm);
        kv.insert("max_len", self.max_len);
        kv.insert("rescore", self.rescore);
        kv
    }
}

/// A partial or complete hypothesis. `tokens` never holds `<s>` or `</s>`;
/// `ended_with_eos` records whether `</s>` was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub tokens: Vec<TokenId>,
    pub direct_lp: f64,
    pub channel_lp: Option<f64>,
    pub lm_lp: Option<f64>,
    pub combined: Option<f64>,
    pub finished: bool,
    pub ended_with_eos: bool,
}

impl Candidate {
    pub fn root() -> Self {
        Self {
            tokens: Vec::new(),
            direct_lp: 0.0,
            channel_lp: None,
            lm_lp: None,
            combined: None,
            finished: false,
            ended_with_eos: false,
        }
    }

    /// Length used for normalization: token count, at least 1.
    pub fn target_len(&self) -> usize {
        self.tokens.len().max(1)
    }

    /// Direct log-probability divided by `t^length_penalty`.
    pub fn normalized_direct(&self, length_penalty: f64) -> f64 {
        self.direct_lp / (self.target_len() as f64).powf(length_penalty)
    }
}

pub fn combined_score(
    direct_lp: f64,
    channel_lp: f64,
    lm_lp: f64,
    src_len: usize,
    tgt_len: usize,
    params: &DecodingParams,
) -> f64 {
    let s = src_len.max(1) as f64;
    let t = (tgt_len.max(1) as f64).powf(params.length_penalty);
    direct_lp / t + (params.delta_ch * channel_lp + params.delta_lm * lm_lp) / s
}

/// Total order used for pruning: higher `key` first, then higher direct
/// log-probability, then lexicographically smaller tokens.
pub fn rank(a: &Candidate, b: &Candidate, key: impl Fn(&Candidate) -> f64) -> Ordering {
    key(b)
        .total_cmp(&key(a))
        .then(b.direct_lp.total_cmp(&a.direct_lp))
        .then_with(|| a.tokens.cmp(&b.tokens))
        .then(b.ended_with_eos.cmp(&a.ended_with_eos))
}

/// Keeps the best `width` candidates under [`rank`].
pub fn prune(mut candidates: Vec<Candidate>, width: usize, key: impl Fn(&Candidate) -> f64) -> Vec<Candidate> {
    candidates.sort_by(|a, b| rank(a, b, &key));
    candidates.truncate(width);
    candidates
}

fn combined_key(c: &Candidate) -> f64 {
    c.combined.unwrap_or(f64::NEG_INFINITY)
}

/// Proposes the `k2` most likely continuations of every candidate in
/// `beam`. `<s>` and zero-probability tokens are never proposed; ties go to
/// the lower token id. Proposals that emit `</s>` or reach `max_len` are
/// finished.
pub fn beam_expand(
    beam: &[Candidate],
    direct: &dyn SequenceScorer,
    source: &[TokenId],
    params: &DecodingParams,
) -> Result<Vec<Candidate>, ScorerError> {
    let vocab = direct.vocab();
    let (bos, eos) = (vocab.bos(), vocab.eos());
    let mut out = Vec::with_capacity(beam.len() * params.k2);
    let mut context = Vec::new();
    for cand in beam {
        debug_assert!(!cand.finished, "finished candidates are not expanded");
        if cand.finished {
            continue;
        }
        context.clear();
        context.push(bos);
        context.extend_from_slice(&cand.tokens);
        let dist = direct.next_distribution(&context, Some(source))?;
        let mut options: Vec<(TokenId, f64)> = dist
            .iter()
            .enumerate()
            .map(|(i, &lp)| (TokenId(i as u32), lp))
            .filter(|&(id, lp)| id != bos && lp.exp() > 0.0)
            .collect();
        options.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (tok, lp) in options.into_iter().take(params.k2) {
            let mut next = Candidate {
                tokens: cand.tokens.clone(),
                direct_lp: cand.direct_lp + lp,
                ..Candidate::root()
            };
            if tok == eos {
                next.finished = true;
                next.ended_with_eos = true;
            } else {
                next.tokens.push(tok);
                next.finished = next.tokens.len() >= params.max_len;
            }
            out.push(next);
        }
    }
    Ok(out)
}

/// Fills in channel, language-model and combined scores.
pub fn rescore(
    cand: &mut Candidate,
    channel: &dyn SequenceScorer,
    lm: &dyn SequenceScorer,
    source: &[TokenId],
    params: &DecodingParams,
) -> Result<(), ScorerError> {
    let channel_lp = prefix_log_prob(channel, source, Some(&cand.tokens), true)?;
    let lm_lp = prefix_log_prob(lm, &cand.tokens, None, cand.ended_with_eos)?;
    cand.channel_lp = Some(channel_lp);
    cand.lm_lp = Some(lm_lp);
    cand.combined = Some(combined_score(
        cand.direct_lp,
        channel_lp,
        lm_lp,
        source.len(),
        cand.tokens.len(),
        params,
    ));
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub best: Vec<TokenId>,
    /// Final beam, best first.
    pub beam: Vec<Candidate>,
}

impl DecodeResult {
    pub fn best_candidate(&self) -> &Candidate {
        &self.beam[0]
    }
}

fn check_setup(scorers: &[&dyn SequenceScorer], params: &DecodingParams) -> Result<(), DecodeError> {
    params.validate()?;
    let vocab = scorers[0].vocab();
    if vocab.is_empty() {
        return Err(ScorerError::EmptyVocabulary.into());
    }
    if scorers.iter().any(|s| s.vocab() != vocab) {
        return Err(ScorerError::VocabularyMismatch.into());
    }
    Ok(())
}

fn search(
    direct: &dyn SequenceScorer,
    source: &[TokenId],
    params: &DecodingParams,
    mut score_step: impl FnMut(&mut Candidate) -> Result<(), ScorerError>,
    key: impl Fn(&Candidate) -> f64 + Copy,
) -> Result<Vec<Candidate>, DecodeError> {
    let mut beam = vec![Candidate::root()];
    while beam.iter().any(|c| !c.finished) {
        let (mut pool, open): (Vec<Candidate>, Vec<Candidate>) = beam.into_iter().partition(|c| c.finished);
        for mut c in beam_expand(&open, direct, source, params)? {
            score_step(&mut c)?;
            pool.push(c);
        }
        if pool.is_empty() {
            return Err(DecodeError::NoHypothesis);
        }
        beam = prune(pool, params.beam, key);
    }
    Ok(beam)
}

/// Beam search with online noisy-channel rescoring. `channel` should
/// already be restricted with [`crate::scorers::restrict_output_vocab`]
/// when a smaller channel output vocabulary is wanted.
pub fn noisy_channel_decode(
    direct: &dyn SequenceScorer,
    channel: &dyn SequenceScorer,
    lm: &dyn SequenceScorer,
    source: &[TokenId],
    params: &DecodingParams,
) -> Result<DecodeResult, DecodeError> {
    check_setup(&[direct, channel, lm], params)?;
    let lp = params.length_penalty;
    let mut beam = match params.rescore {
        RescoreMode::EveryStep => search(
            direct,
            source,
            params,
            |c| rescore(c, channel, lm, source, params),
            combined_key,
        )?,
        RescoreMode::FinalOnly => search(direct, source, params, |_| Ok(()), |c| c.normalized_direct(lp))?,
    };
    if params.rescore == RescoreMode::FinalOnly {
        for c in &mut beam {
            rescore(c, channel, lm, source, params)?;
        }
    }
    beam.sort_by(|a, b| rank(a, b, combined_key));
    Ok(DecodeResult {
        best: beam[0].tokens.clone(),
        beam,
    })
}

/// Plain beam search ranked by the length-normalized direct score.
pub fn direct_decode(
    direct: &dyn SequenceScorer,
    source: &[TokenId],
    params: &DecodingParams,
) -> Result<DecodeResult, DecodeError> {
    check_setup(&[direct], params)?;
    let lp = params.length_penalty;
    let key = move |c: &Candidate| c.normalized_direct(lp);
    let beam = search(direct, source, params, |_| Ok(()), key)?;
    Ok(DecodeResult {
        best: beam[0].tokens.clone(),
        beam,
    })
}

/// Decodes every source sentence, in order, on `jobs` workers.
pub fn decode_corpus(
    direct: &dyn SequenceScorer,
    channel: Option<(&dyn SequenceScorer, &dyn SequenceScorer)>,
    sources: &[Vec<TokenId>],
    params: &DecodingParams,
    jobs: usize,
) -> Vec<Result<DecodeResult, DecodeError>> {
    ordered_map(sources, jobs, |_, src| match channel {
        Some((ch, lm)) => noisy_channel_decode(direct, ch, lm, src, params),
        None => direct_decode(direct, src, params),
    })
}
