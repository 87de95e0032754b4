use thiserror::Error;

use super::providers::{EntityRecognizer, LanguageTagger, SentenceEmbedder};
use super::rules::{self, Outcome, PairView};
use super::{FilterConfig, Rule};
use crate::config::ConfigError;
use crate::corpus::{compute_stats, CorpusStats, FilterVerdict, SentencePair};
use crate::parallel::ordered_map;

/// Rule recorded when a provider fails on a pair.
pub const PROVIDER_ERROR: &str = "provider_error";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("rule {0} is enabled but no provider was supplied for it")]
    MissingProvider(Rule),
}

/// Models backing the heuristic and embedding rules. Only rules that are
/// enabled need a provider.
#[derive(Clone, Copy, Default)]
pub struct Providers<'a> {
    pub tagger: Option<&'a dyn LanguageTagger>,
    pub entities: Option<&'a dyn EntityRecognizer>,
    pub embedder: Option<&'a dyn SentenceEmbedder>,
}

impl<'a> Providers<'a> {
    pub fn new(
        tagger: &'a dyn LanguageTagger,
        entities: &'a dyn EntityRecognizer,
        embedder: &'a dyn SentenceEmbedder,
    ) -> Self {
        Self {
            tagger: Some(tagger),
            entities: Some(entities),
            embedder: Some(embedder),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub kept: Vec<SentencePair>,
    /// One verdict per input pair, in input order.
    pub verdicts: Vec<FilterVerdict>,
    pub before: CorpusStats,
    pub after: CorpusStats,
}

pub struct Pipeline<'a> {
    config: FilterConfig,
    providers: Providers<'a>,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: FilterConfig, providers: Providers<'a>) -> Result<Self, PipelineError> {
        config.validate()?;
        for &rule in &config.enabled_rules {
            let present = match rule {
                Rule::Language => providers.tagger.is_some(),
                Rule::Entity => providers.entities.is_some(),
                Rule::Embedding => providers.embedder.is_some(),
                _ => true,
            };
            if !present {
                return Err(PipelineError::MissingProvider(rule));
            }
        }
        Ok(Self { config, providers })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    fn apply(&self, rule: Rule, view: &PairView) -> Result<Outcome, rules::FilterError> {
        let c = &self.config;
        let p = &self.providers;
        // Presence of each provider was checked in `new`.
        Ok(match rule {
            Rule::Language => rules::check_language(view, p.tagger.expect("tagger"), c.max_foreign_token_fraction),
            Rule::Entity => rules::entity_filter(view.pair, p.entities.expect("recognizer"))?,
            Rule::Numeric => rules::numeric_filter(view.pair),
            Rule::Length => rules::check_length(view, c.max_chars),
            Rule::TokenLength => rules::check_token_length(view, c.max_token_chars),
            Rule::CharTokenRatio => rules::check_char_token_ratio(view, c.max_char_token_ratio),
            Rule::PairTokenRatio => rules::check_pair_token_ratio(view, c.max_pair_token_ratio),
            Rule::PairLengthRatio => rules::check_pair_length_ratio(view, c.max_pair_length_ratio),
            Rule::Embedding => {
                rules::embedding_filter(view.pair, p.embedder.expect("embedder"), c.embed_min, c.embed_max)?
            }
        })
    }

    /// Verdict for one pair: the first enabled rule that removes it, or keep.
    pub fn verdict(&self, pair: &SentencePair) -> FilterVerdict {
        let view = PairView::new(pair);
        for &rule in &self.config.enabled_rules {
            match self.apply(rule, &view) {
                Ok(Outcome::Keep) => {}
                Ok(Outcome::Remove(detail)) => return FilterVerdict::remove(pair.id, rule.name(), detail),
                Err(e) => return FilterVerdict::remove(pair.id, PROVIDER_ERROR, format!("{rule}: {e}")),
            }
        }
        FilterVerdict::keep(pair.id)
    }

    /// Filters `pairs` on `jobs` workers. Output order always follows input
    /// order, so any worker count gives identical results.
    pub fn run(&self, pairs: &[SentencePair], jobs: usize) -> PipelineOutput
    where
        Self: Sync,
    {
        let verdicts = ordered_map(pairs, jobs, |_, p| self.verdict(p));
        let kept: Vec<SentencePair> = pairs
            .iter()
            .zip(&verdicts)
            .filter(|(_, v)| v.is_kept())
            .map(|(p, _)| p.clone())
            .collect();
        PipelineOutput {
            before: compute_stats(pairs),
            after: compute_stats(&kept),
            kept,
            verdicts,
        }
    }
}

pub fn run_pipeline(
    pairs: &[SentencePair],
    config: &FilterConfig,
    providers: Providers<'_>,
    jobs: usize,
) -> Result<PipelineOutput, PipelineError> {
    Ok(Pipeline::new(config.clone(), providers)?.run(pairs, jobs))
}
