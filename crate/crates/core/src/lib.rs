//! Toolkit for the non-training side of a constrained machine translation
//! system: parallel-corpus filtering, backtranslation sampling, noisy-channel
//! beam decoding, BLEU / chrF++ scoring and the reranking-weight sweep.
//!
//! Model internals are out of reach here; every model is a
//! [`scorers::SequenceScorer`] and the bundled [`scorers::TableScorer`] lets
//! small translation tasks be spelled out as explicit probability tables.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corpus;
pub mod filters;
pub mod metrics;
pub mod reranker;
pub mod sampler;
pub mod scorers;
pub mod sweep;
pub mod tokenizer;

mod parallel;

pub use corpus::{CorpusStats, Decision, FilterVerdict, SentencePair};
pub use filters::{FilterConfig, PipelineOutput, Rule};
pub use reranker::{Candidate, DecodingParams, Direction};
pub use sampler::SamplingParams;
pub use scorers::{SequenceScorer, TableScorer, TokenId, Vocabulary};
pub use sweep::{SweepConfig, Trial};
