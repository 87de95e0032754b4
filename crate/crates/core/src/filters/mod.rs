//! Parallel-corpus filters and the pipeline that chains them.
//!
//! Rules run in three groups: heuristic (language, entity, numeric), ratio
//! (length, token length, char/token, pair token, pair length) and finally
//! embedding similarity. A pair survives only if every enabled rule keeps
//! it; its verdict names the first rule that removed it.

mod pipeline;
pub mod providers;
pub mod rules;

use std::fmt;
use std::str::FromStr;

pub use pipeline::{run_pipeline, Pipeline, PipelineError, PipelineOutput, Providers, PROVIDER_ERROR};
pub use providers::{
    CapitalizedEntities, EntityRecognizer, HashingEmbedder, LanguageTagger, PrecomputedEmbedder, ProviderError,
    ScriptTagger, SentenceEmbedder, TokenLanguage,
};
pub use rules::{
    char_token_ratio_filter, embedding_filter, entity_filter, language_filter, length_filter, numeric_filter,
    pair_length_ratio_filter, pair_token_ratio_filter, token_length_filter, FilterError, Outcome,
};

use crate::config::{ConfigError, KvConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    Language,
    Entity,
    Numeric,
    Length,
    TokenLength,
    CharTokenRatio,
    PairTokenRatio,
    PairLengthRatio,
    Embedding,
}

impl Rule {
    /// Every rule in pipeline order.
    pub const ALL: [Rule; 9] = [
        Rule::Language,
        Rule::Entity,
        Rule::Numeric,
        Rule::Length,
        Rule::TokenLength,
        Rule::CharTokenRatio,
        Rule::PairTokenRatio,
        Rule::PairLengthRatio,
        Rule::Embedding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Language => "language",
            Rule::Entity => "entity",
            Rule::Numeric => "numeric",
            Rule::Length => "length",
            Rule::TokenLength => "token_length",
            Rule::CharTokenRatio => "char_token_ratio",
            Rule::PairTokenRatio => "pair_token_ratio",
            Rule::PairLengthRatio => "pair_length_ratio",
            Rule::Embedding => "embedding",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown rule {s:?}"))
    }
}

/// Comma-separated rule list, as written in config files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleList(pub Vec<Rule>);

impl FromStr for RuleList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(Rule::from_str)
            .collect::<Result<Vec<_>, _>>()
            .map(RuleList)
    }
}

impl fmt::Display for RuleList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|r| r.name()).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub max_chars: usize,
    pub max_token_chars: usize,
    pub max_char_token_ratio: f64,
    pub max_pair_token_ratio: f64,
    pub max_pair_length_ratio: f64,
    pub max_foreign_token_fraction: f64,
    pub embed_min: f64,
    pub embed_max: f64,
    /// Rules to apply, in application order.
    pub enabled_rules: Vec<Rule>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_chars: 140,
            max_token_chars: 40,
            max_char_token_ratio: 12.0,
            max_pair_token_ratio: 4.0,
            max_pair_length_ratio: 6.0,
            max_foreign_token_fraction: 0.30,
            embed_min: 0.7,
            embed_max: 0.96,
            // Embedding similarity is opt-in: the bundled embedder is a
            // hashing stand-in, not a cross-lingual model.
            enabled_rules: Rule::ALL[..8].to_vec(),
        }
    }
}

impl FilterConfig {
    pub const KEYS: [&'static str; 9] = [
        "max_chars",
        "max_token_chars",
        "max_char_token_ratio",
        "max_pair_token_ratio",
        "max_pair_length_ratio",
        "max_foreign_token_fraction",
        "embed_min",
        "embed_max",
        "enabled_rules",
    ];

    pub fn with_rules(mut self, rules: &[Rule]) -> Self {
        self.enabled_rules = rules.to_vec();
        self
    }

    pub fn is_enabled(&self, rule: Rule) -> bool {
        self.enabled_rules.contains(&rule)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("max_chars", self.max_chars as f64),
            ("max_token_chars", self.max_token_chars as f64),
            ("max_char_token_ratio", self.max_char_token_ratio),
            ("max_pair_token_ratio", self.max_pair_token_ratio),
            ("max_pair_length_ratio", self.max_pair_length_ratio),
            ("max_foreign_token_fraction", self.max_foreign_token_fraction),
            ("embed_min", self.embed_min),
            ("embed_max", self.embed_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_foreign_token_fraction > 1.0 {
            return Err(ConfigError::Invalid(format!(
                "max_foreign_token_fraction must be in [0, 1], got {}",
                self.max_foreign_token_fraction
            )));
        }
        if self.embed_min >= self.embed_max || self.embed_max > 1.0 {
            return Err(ConfigError::Invalid(format!(
                "need embed_min < embed_max <= 1, got {} and {}",
                self.embed_min, self.embed_max
            )));
        }
        let mut seen = self.enabled_rules.clone();
        seen.sort();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::Invalid("enabled_rules lists a rule twice".into()));
        }
        Ok(())
    }

    /// Overrides fields present in `kv`; unknown keys are an error.
    pub fn apply(&mut self, kv: &KvConfig) -> Result<(), ConfigError> {
        kv.check_keys(&Self::KEYS)?;
        kv.read_into("max_chars", &mut self.max_chars)?;
        kv.read_into("max_token_chars", &mut self.max_token_chars)?;
        kv.read_into("max_char_token_ratio", &mut self.max_char_token_ratio)?;
        kv.read_into("max_pair_token_ratio", &mut self.max_pair_token_ratio)?;
        kv.read_into("max_pair_length_ratio", &mut self.max_pair_length_ratio)?;
        kv.read_into("max_foreign_token_fraction", &mut self.max_foreign_token_fraction)?;
        kv.read_into("embed_min", &mut self.embed_min)?;
        kv.read_into("embed_max", &mut self.embed_max)?;
        let mut rules = RuleList(self.enabled_rules.clone());
        kv.read_into("enabled_rules", &mut rules)?;
        self.enabled_rules = rules.0;
        Ok(())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.insert("max_chars", self.max_chars);
        kv.insert("max_token_chars", self.max_token_chars);
        kv.insert("max_char_token_ratio", self.max_char_token_ratio);
        kv.insert("max_pair_token_ratio", self.max_pair_token_ratio);
        kv.insert("max_pair_length_ratio", self.max_pair_length_ratio);
        kv.insert("max_foreign_token_fraction", self.max_foreign_token_fraction);
        kv.insert("embed_min", self.embed_min);
        kv.insert("embed_max", self.embed_max);
        kv.insert("enabled_rules", RuleList(self.enabled_rules.clone()));
        kv
    }
}
