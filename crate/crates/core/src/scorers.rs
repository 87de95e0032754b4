//! Conditional sequence models.
//!
//! A [`SequenceScorer`] returns a log-probability vector over a shared
//! [`Vocabulary`] for the token following `context`, optionally conditioned
//! on another token sequence. The same interface houses the direct model
//! `P(y|x)`, the channel model `P(x|y)` and the language model `P(y)`.
//!
//! Tokens with zero probability carry a large negative sentinel instead of
//! negative infinity, so sums of log-probabilities stay finite.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const DEFAULT_SENTINEL: f64 = -1e9;

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScorerError {
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("token id {0} is out of range")]
    BadTokenId(u32),
    #[error("sequence must start with {BOS} and end with {EOS}")]
    Unterminated,
    #[error("duplicate vocabulary entry {0:?}")]
    DuplicateToken(String),
    #[error("vocabulary has no tokens besides {BOS} and {EOS}")]
    EmptyVocabulary,
    #[error("scorers do not share one vocabulary")]
    VocabularyMismatch,
    #[error("row for {key} sums to {sum}, not 1")]
    Unnormalized { key: String, sum: f64 },
    #[error("negative probability {prob} for {token:?}")]
    NegativeProbability { token: String, prob: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Ordered, duplicate-free token inventory. `<s>` is id 0 and `</s>` id 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn new<I, S>(tokens: I) -> Result<Self, ScorerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in [BOS.to_string(), EOS.to_string()]
            .into_iter()
            .chain(tokens.into_iter().map(Into::into))
        {
            if vocab.index.contains_key(&t) {
                return Err(ScorerError::DuplicateToken(t));
            }
            vocab.index.insert(t.clone(), TokenId(vocab.tokens.len() as u32));
            vocab.tokens.push(t);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn bos(&self) -> TokenId {
        TokenId(0)
    }

    pub fn eos(&self) -> TokenId {
        TokenId(1)
    }

    pub fn is_reserved(&self, id: TokenId) -> bool {
        id.0 < 2
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id.index()]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<TokenId>, ScorerError> {
        tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                self.id(t).ok_or_else(|| ScorerError::UnknownToken(t.to_string()))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<&str> {
        ids.iter().map(|&id| self.token(id)).collect()
    }

    pub fn decode_joined(&self, ids: &[TokenId]) -> String {
        self.decode(ids).join(" ")
    }
}

pub trait SequenceScorer: Send + Sync {
    fn vocab(&self) -> &Vocabulary;

    /// Log-probabilities of the next token after `context` (which starts
    /// with `<s>`), given `condition`.
    fn next_distribution(&self, context: &[TokenId], condition: Option<&[TokenId]>) -> Result<Vec<f64>, ScorerError>;

    /// Log-probability used for impossible tokens.
    fn sentinel(&self) -> f64 {
        DEFAULT_SENTINEL
    }
}

impl<S: SequenceScorer + ?Sized> SequenceScorer for Arc<S> {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }

    fn next_distribution(&self, context: &[TokenId], condition: Option<&[TokenId]>) -> Result<Vec<f64>, ScorerError> {
        (**self).next_distribution(context, condition)
    }

    fn sentinel(&self) -> f64 {
        (**self).sentinel()
    }
}

impl<S: SequenceScorer + ?Sized> SequenceScorer for &S {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }

    fn next_distribution(&self, context: &[TokenId], condition: Option<&[TokenId]>) -> Result<Vec<f64>, ScorerError> {
        (**self).next_distribution(context, condition)
    }

    fn sentinel(&self) -> f64 {
        (**self).sentinel()
    }
}

/// Chain-rule log-probability of `sequence`, which must be `<s> ... </s>`.
pub fn sequence_log_prob_ids(
    scorer: &dyn SequenceScorer,
    sequence: &[TokenId],
    condition: Option<&[TokenId]>,
) -> Result<f64, ScorerError> {
    let vocab = scorer.vocab();
    if sequence.len() < 2 || sequence[0] != vocab.bos() || sequence[sequence.len() - 1] != vocab.eos() {
        return Err(ScorerError::Unterminated);
    }
    let mut total = 0.0;
    for i in 1..sequence.len() {
        let dist = scorer.next_distribution(&sequence[..i], condition)?;
        let tok = sequence[i];
        total += *dist.get(tok.index()).ok_or(ScorerError::BadTokenId(tok.0))?;
    }
    Ok(total)
}

/// String form of [`sequence_log_prob_ids`].
pub fn sequence_log_prob<S: AsRef<str>>(
    scorer: &dyn SequenceScorer,
    sequence: &[S],
    condition: Option<&[S]>,
) -> Result<f64, ScorerError> {
    let vocab = scorer.vocab();
    let seq = vocab.encode(sequence)?;
    let cond = condition.map(|c| vocab.encode(c)).transpose()?;
    sequence_log_prob_ids(scorer, &seq, cond.as_deref())
}

/// Log-probability of `tokens` following `<s>`, plus `</s>` when `with_eos`.
pub fn prefix_log_prob(
    scorer: &dyn SequenceScorer,
    tokens: &[TokenId],
    condition: Option<&[TokenId]>,
    with_eos: bool,
) -> Result<f64, ScorerError> {
    let vocab = scorer.vocab();
    let mut context = Vec::with_capacity(tokens.len() + 2);
    context.push(vocab.bos());
    let mut total = 0.0;
    let eos = with_eos.then_some(vocab.eos());
    for &tok in tokens.iter().chain(eos.iter()) {
        let dist = scorer.next_distribution(&context, condition)?;
        total += *dist.get(tok.index()).ok_or(ScorerError::BadTokenId(tok.0))?;
        context.push(tok);
    }
    Ok(total)
}

/// `ln p`, or `sentinel` when `p` is zero.
pub fn log_or_sentinel(p: f64, sentinel: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        sentinel
    }
}

/// Log-sum-exp of the entries whose probability does not underflow.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Every token equally likely, `<s>` and `</s>` included.
#[derive(Debug, Clone)]
pub struct UniformScorer {
    vocab: Arc<Vocabulary>,
}

impl UniformScorer {
    pub fn new(vocab: Arc<Vocabulary>) -> Self {
        Self { vocab }
    }
}

impl SequenceScorer for UniformScorer {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, _: &[TokenId], _: Option<&[TokenId]>) -> Result<Vec<f64>, ScorerError> {
        let n = self.vocab.len();
        Ok(vec![-(n as f64).ln(); n])
    }
}

/// Which conditions a table row applies to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RowCondition {
    /// Any condition, including none.
    Any,
    /// Only unconditioned queries (language models).
    Unconditioned,
    /// Exactly this condition sequence.
    Exact(Vec<String>),
}

#[derive(Debug, Clone, Default)]
struct RowSet {
    rows: HashMap<Vec<TokenId>, Vec<f64>>,
}

impl RowSet {
    fn get(&self, context: &[TokenId]) -> Option<&Vec<f64>> {
        self.rows.get(context)
    }
}

/// Explicit conditional probability tables.
///
/// Lookup tries the longest suffix of the context first, then shorter ones
/// down to the empty context. At each length a row for the exact condition
/// (or the unconditioned set, when no condition is given) wins over a
/// wildcard row. When nothing matches the default row is used.
#[derive(Debug, Clone)]
pub struct TableScorer {
    vocab: Arc<Vocabulary>,
    exact: HashMap<Vec<TokenId>, RowSet>,
    unconditioned: RowSet,
    any: RowSet,
    default_row: Vec<f64>,
    sentinel: f64,
}

type Row = (RowCondition, Vec<String>, Vec<(String, f64)>);

pub struct TableBuilder {
    vocab: Arc<Vocabulary>,
    rows: Vec<Row>,
    default_row: Option<Vec<(String, f64)>>,
    sentinel: f64,
}

impl TableBuilder {
    pub fn sentinel(mut self, sentinel: f64) -> Self {
        self.sentinel = sentinel;
        self
    }

    pub fn row<S: AsRef<str>>(mut self, condition: RowCondition, context: &[S], probs: &[(S, f64)]) -> Self {
        self.rows.push((
            condition,
            context.iter().map(|s| s.as_ref().to_string()).collect(),
            probs.iter().map(|(t, p)| (t.as_ref().to_string(), *p)).collect(),
        ));
        self
    }

    pub fn default_row<S: AsRef<str>>(mut self, probs: &[(S, f64)]) -> Self {
        self.default_row = Some(probs.iter().map(|(t, p)| (t.as_ref().to_string(), *p)).collect());
        self
    }

    fn dense(&self, key: &str, probs: &[(String, f64)]) -> Result<Vec<f64>, ScorerError> {
        let mut p = vec![0.0; self.vocab.len()];
        for (tok, prob) in probs {
            let id = self.vocab.id(tok).ok_or_else(|| ScorerError::UnknownToken(tok.clone()))?;
            if !(*prob >= 0.0) {
                return Err(ScorerError::NegativeProbability {
                    token: tok.clone(),
                    prob: *prob,
                });
            }
            p[id.index()] += prob;
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(ScorerError::Unnormalized {
                key: key.to_string(),
                sum,
            });
        }
        Ok(p.into_iter().map(|x| log_or_sentinel(x, self.sentinel)).collect())
    }

    pub fn build(self) -> Result<TableScorer, ScorerError> {
        let n = self.vocab.len();
        let default_row = match &self.default_row {
            Some(probs) => self.dense("default", probs)?,
            None => vec![-(n as f64).ln(); n],
        };
        let mut scorer = TableScorer {
            vocab: self.vocab.clone(),
            exact: HashMap::new(),
            unconditioned: RowSet::default(),
            any: RowSet::default(),
            default_row,
            sentinel: self.sentinel,
        };
        for (cond, context, probs) in &self.rows {
            let key = format!("{cond:?} | {}", context.join(" "));
            let row = self.dense(&key, probs)?;
            let context = self.vocab.encode(context)?;
            let set = match cond {
                RowCondition::Any => &mut scorer.any,
                RowCondition::Unconditioned => &mut scorer.unconditioned,
                RowCondition::Exact(c) => scorer.exact.entry(self.vocab.encode(c)?).or_default(),
            };
            set.rows.insert(context, row);
        }
        Ok(scorer)
    }
}

impl TableScorer {
    pub fn builder(vocab: Arc<Vocabulary>) -> TableBuilder {
        TableBuilder {
            vocab,
            rows: Vec::new(),
            default_row: None,
            sentinel: DEFAULT_SENTINEL,
        }
    }

    pub fn shared_vocab(&self) -> Arc<Vocabulary> {
        self.vocab.clone()
    }

    /// Parses the table text format:
    ///
    /// ```text
    /// # comment
    /// vocab the cat sat          # required first entry; <s> and </s> are implicit
    /// sentinel -1e9              # optional
    /// default the:0.5 cat:0.5    # optional; uniform when omitted
    /// row * | <s> : the:1        # any condition
    /// row - | <s> the : cat:1    # unconditioned queries only
    /// row a b | <s> : </s>:1     # exact condition "a b"
    /// ```
    ///
    /// The context of a row is matched against suffixes of the query
    /// context; an empty context (`row * | : ...`) matches everything.
    pub fn parse(text: &str) -> Result<Self, ScorerError> {
        Self::parse_with_vocab(text, None)
    }

    /// Like [`TableScorer::parse`], but the `vocab` line must list exactly
    /// the tokens of `shared`, and the result reuses that vocabulary.
    pub fn parse_with_vocab(text: &str, shared: Option<Arc<Vocabulary>>) -> Result<Self, ScorerError> {
        let perr = |line: usize, message: String| ScorerError::Parse { line, message };
        let mut builder: Option<TableBuilder> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            if head == "vocab" {
                if builder.is_some() {
                    return Err(perr(line_no, "vocab declared twice".into()));
                }
                let vocab = Vocabulary::new(rest.split_whitespace()).map_err(|e| perr(line_no, e.to_string()))?;
                let vocab = match &shared {
                    Some(s) if **s == vocab => s.clone(),
                    Some(_) => return Err(ScorerError::VocabularyMismatch),
                    None => Arc::new(vocab),
                };
                builder = Some(TableScorer::builder(vocab));
                continue;
            }
            let b = builder
                .take()
                .ok_or_else(|| perr(line_no, "the vocab line must come first".into()))?;
            builder = Some(match head {
                "sentinel" => {
                    let s: f64 = rest.parse().map_err(|e| perr(line_no, format!("bad sentinel: {e}")))?;
                    if !(s < 0.0) || !s.is_finite() {
                        return Err(perr(line_no, "sentinel must be finite and negative".into()));
                    }
                    b.sentinel(s)
                }
                "default" => b.default_row(&parse_probs(rest).map_err(|m| perr(line_no, m))?),
                "row" => {
                    let (cond, after) = rest
                        .split_once('|')
                        .ok_or_else(|| perr(line_no, "expected `row <condition> | <context> : <probs>`".into()))?;
                    let (ctx, probs) = after
                        .split_once(" :")
                        .or_else(|| after.trim_start().strip_prefix(':').map(|p| ("", p)))
                        .ok_or_else(|| perr(line_no, "missing ` : ` before probabilities".into()))?;
                    let cond = match cond.trim() {
                        "*" => RowCondition::Any,
                        "-" => RowCondition::Unconditioned,
                        c => RowCondition::Exact(c.split_whitespace().map(String::from).collect()),
                    };
                    let ctx: Vec<&str> = ctx.split_whitespace().collect();
                    let probs = parse_probs(probs).map_err(|m| perr(line_no, m))?;
                    let probs: Vec<(&str, f64)> = probs.iter().map(|(t, p)| (t.as_str(), *p)).collect();
                    b.row(cond, &ctx, &probs)
                }
                other => return Err(perr(line_no, format!("unknown directive {other:?}"))),
            });
        }
        builder
            .ok_or_else(|| perr(0, "missing vocab line".into()))?
            .build()
    }

    pub fn load(path: &Path) -> Result<Self, ScorerError> {
        Self::load_with_vocab(path, None)
    }

    pub fn load_with_vocab(path: &Path, shared: Option<Arc<Vocabulary>>) -> Result<Self, ScorerError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScorerError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse_with_vocab(&text, shared).map_err(|e| match e {
            ScorerError::Parse { line, message } => ScorerError::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    fn lookup(&self, context: &[TokenId], condition: Option<&[TokenId]>) -> &[f64] {
        let preferred = match condition {
            Some(c) => self.exact.get(c),
            None => Some(&self.unconditioned),
        };
        for start in 0..=context.len() {
            let suffix = &context[start..];
            if let Some(row) = preferred.and_then(|set| set.get(suffix)) {
                return row;
            }
            if let Some(row) = self.any.get(suffix) {
                return row;
            }
        }
        &self.default_row
    }
}

fn parse_probs(text: &str) -> Result<Vec<(String, f64)>, String> {
    text.split_whitespace()
        .map(|entry| {
            let (tok, p) = entry
                .rsplit_once(':')
                .ok_or_else(|| format!("expected token:probability, got {entry:?}"))?;
            let p: f64 = p.parse().map_err(|e| format!("bad probability in {entry:?}: {e}"))?;
            Ok((tok.to_string(), p))
        })
        .collect()
}

impl SequenceScorer for TableScorer {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, context: &[TokenId], condition: Option<&[TokenId]>) -> Result<Vec<f64>, ScorerError> {
        Ok(self.lookup(context, condition).to_vec())
    }

    fn sentinel(&self) -> f64 {
        self.sentinel
    }
}

/// Token counts used to rank the output vocabulary of a restricted scorer.
pub type FrequencyTable = HashMap<String, u64>;

/// Counts whitespace-separated tokens over `lines`.
pub fn count_frequencies<'a>(lines: impl IntoIterator<Item = &'a str>) -> FrequencyTable {
    let mut table = FrequencyTable::new();
    for line in lines {
        for tok in line.split_whitespace() {
            *table.entry(tok.to_string()).or_default() += 1;
        }
    }
    table
}

/// Wraps a scorer so that only the `top_k` most frequent tokens (plus `<s>`
/// and `</s>`) can be produced; their probabilities are renormalized.
pub struct RestrictedScorer<S> {
    inner: S,
    allowed: Vec<bool>,
}

impl<S: SequenceScorer> RestrictedScorer<S> {
    pub fn allowed(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.allowed
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| TokenId(i as u32))
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

/// Restricts `scorer` to its `top_k` most frequent tokens. Ties, and tokens
/// missing from `frequencies`, rank by vocabulary order; with no table at all
/// the ranking is plain vocabulary order.
pub fn restrict_output_vocab<S: SequenceScorer>(
    scorer: S,
    top_k: usize,
    frequencies: Option<&FrequencyTable>,
) -> RestrictedScorer<S> {
    let vocab = scorer.vocab();
    let mut ranked: Vec<(u64, TokenId)> = (0..vocab.len() as u32)
        .map(TokenId)
        .filter(|&id| !vocab.is_reserved(id))
        .map(|id| {
            let count = frequencies.and_then(|f| f.get(vocab.token(id)).copied()).unwrap_or(0);
            (count, id)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut allowed = vec![false; vocab.len()];
    allowed[vocab.bos().index()] = true;
    allowed[vocab.eos().index()] = true;
    for (_, id) in ranked.into_iter().take(top_k.max(1)) {
        allowed[id.index()] = true;
    }
    RestrictedScorer { inner: scorer, allowed }
}

impl<S: SequenceScorer> SequenceScorer for RestrictedScorer<S> {
    fn vocab(&self) -> &Vocabulary {
        self.inner.vocab()
    }

    fn next_distribution(&self, context: &[TokenId], condition: Option<&[TokenId]>) -> Result<Vec<f64>, ScorerError> {
        let sentinel = self.inner.sentinel();
        let mut dist = self.inner.next_distribution(context, condition)?;
        let kept = || {
            dist.iter()
                .zip(&self.allowed)
                .filter(|(lp, &a)| a && lp.exp() > 0.0)
                .map(|(lp, _)| *lp)
        };
        let lse = log_sum_exp(kept().collect::<Vec<_>>());
        if !lse.is_finite() {
            // No allowed token has mass left: spread it evenly.
            let n = self.allowed.iter().filter(|&&a| a).count() as f64;
            for (lp, &a) in dist.iter_mut().zip(&self.allowed) {
                *lp = if a { -n.ln() } else { sentinel };
            }
            return Ok(dist);
        }
        for (lp, &a) in dist.iter_mut().zip(&self.allowed) {
            *lp = if a && lp.exp() > 0.0 { *lp - lse } else { sentinel };
        }
        Ok(dist)
    }

    fn sentinel(&self) -> f64 {
        self.inner.sentinel()
    }
}
