//! Parallel corpora, per-pair filter verdicts and corpus statistics.
//!
//! A parallel corpus is two aligned plaintext files with one sentence per
//! line. Pair identity is positional: the id of a pair is its 0-based line
//! number.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::ops::{Add, AddAssign};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

/// Rule name recorded on every `Keep` verdict.
pub const ALL_PASSED: &str = "all_passed";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line count mismatch: {source_path} has {source_lines} lines, {target_path} has {target_lines}")]
    LineCountMismatch {
        source_path: PathBuf,
        source_lines: usize,
        target_path: PathBuf,
        target_lines: usize,
    },
    #[error("{path}: invalid UTF-8 at byte offset {offset}")]
    InvalidUtf8 { path: PathBuf, offset: usize },
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: io::Error },
    #[error("{path}:{line}: malformed verdict record: {reason}")]
    MalformedVerdict {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, cause: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            cause,
        }
    }
}

/// One aligned source/target sentence pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SentencePair {
    pub id: usize,
    pub source: String,
    pub target: String,
}

impl SentencePair {
    pub fn new(id: usize, source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            id,
            source: source.into(),
            target: target.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Keep,
    Remove,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Keep => "keep",
            Decision::Remove => "remove",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keep" => Ok(Decision::Keep),
            "remove" => Ok(Decision::Remove),
            other => Err(format!("unknown decision {other:?}")),
        }
    }
}

/// Keep/remove decision for one pair, with the rule that fired.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterVerdict {
    pub pair_id: usize,
    pub decision: Decision,
    pub rule: String,
    pub detail: Option<String>,
}

impl FilterVerdict {
    pub fn keep(pair_id: usize) -> Self {
        Self {
            pair_id,
            decision: Decision::Keep,
            rule: ALL_PASSED.to_string(),
            detail: None,
        }
    }

    pub fn remove(pair_id: usize, rule: impl Into<String>, detail: impl Into<String>) -> Self {
        let rule = rule.into();
        debug_assert!(!rule.is_empty());
        Self {
            pair_id,
            decision: Decision::Remove,
            rule,
            detail: Some(detail.into()),
        }
    }

    pub fn is_kept(&self) -> bool {
        self.decision == Decision::Keep
    }

    /// The tab-separated record, without a line terminator.
    pub fn to_record(&self) -> String {
        let detail = self
            .detail
            .as_deref()
            .map(sanitize_field)
            .unwrap_or_default();
        format!(
            "{}\t{}\t{}\t{}",
            self.pair_id,
            self.decision,
            sanitize_field(&self.rule),
            detail
        )
    }

    pub fn parse_record(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() != 4 {
            return Err(format!("expected 4 tab-separated fields, got {}", fields.len()));
        }
        let pair_id = fields[0]
            .parse()
            .map_err(|e| format!("bad pair id {:?}: {e}", fields[0]))?;
        let decision = fields[1].parse()?;
        let detail = (!fields[3].is_empty()).then(|| fields[3].to_string());
        Ok(Self {
            pair_id,
            decision,
            rule: fields[2].to_string(),
            detail,
        })
    }
}

fn sanitize_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Pair and whitespace-word counts, the three columns of a corpus summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub pairs: u64,
    pub words_source: u64,
    pub words_target: u64,
}

impl CorpusStats {
    pub fn of_pair(pair: &SentencePair) -> Self {
        Self {
            pairs: 1,
            words_source: whitespace_words(&pair.source),
            words_target: whitespace_words(&pair.target),
        }
    }
}

impl Add for CorpusStats {
    type Output = CorpusStats;

    fn add(self, rhs: Self) -> Self {
        Self {
            pairs: self.pairs + rhs.pairs,
            words_source: self.words_source + rhs.words_source,
            words_target: self.words_target + rhs.words_target,
        }
    }
}

impl AddAssign for CorpusStats {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<'a> std::iter::Sum<&'a SentencePair> for CorpusStats {
    fn sum<I: Iterator<Item = &'a SentencePair>>(iter: I) -> Self {
        iter.map(CorpusStats::of_pair).fold(CorpusStats::default(), Add::add)
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pairs\t{}\nwords_source\t{}\nwords_target\t{}",
            self.pairs, self.words_source, self.words_target
        )
    }
}

// Word counts approximate a shell word count, so they deliberately ignore the
// filter tokenizer.
fn whitespace_words(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

pub fn compute_stats<'a, I>(pairs: I) -> CorpusStats
where
    I: IntoIterator<Item = &'a SentencePair>,
{
    pairs.into_iter().sum()
}

/// Reads a UTF-8 file and splits it into lines. A final line terminator is
/// optional; `\r\n` terminators are accepted.
pub fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CorpusError::InvalidUtf8 {
        path: path.to_path_buf(),
        offset: e.valid_up_to(),
    })?;
    Ok(split_lines(text).map(str::to_string).collect())
}

pub fn split_lines(text: &str) -> impl Iterator<Item = &str> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let empty = text.is_empty();
    body.split('\n')
        .filter(move |_| !empty)
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
}

/// Reads two aligned files into sentence pairs, in file order.
pub fn read_parallel(source_path: &Path, target_path: &Path) -> Result<Vec<SentencePair>, CorpusError> {
    let sources = read_lines(source_path)?;
    let targets = read_lines(target_path)?;
    if sources.len() != targets.len() {
        return Err(CorpusError::LineCountMismatch {
            source_path: source_path.to_path_buf(),
            source_lines: sources.len(),
            target_path: target_path.to_path_buf(),
            target_lines: targets.len(),
        });
    }
    Ok(sources
        .into_iter()
        .zip(targets)
        .enumerate()
        .map(|(id, (source, target))| SentencePair { id, source, target })
        .collect())
}

pub fn write_lines<'a, I>(path: &Path, lines: I) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = &'a str>,
{
    let file = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

/// Writes the two sides of `pairs` as aligned plaintext files.
pub fn write_parallel(pairs: &[SentencePair], source_path: &Path, target_path: &Path) -> Result<(), CorpusError> {
    write_lines(source_path, pairs.iter().map(|p| p.source.as_str()))?;
    write_lines(target_path, pairs.iter().map(|p| p.target.as_str()))
}

/// Writes one tab-separated record per verdict, ordered by pair id.
pub fn write_verdicts(verdicts: &[FilterVerdict], path: &Path) -> Result<(), CorpusError> {
    let mut sorted: Vec<&FilterVerdict> = verdicts.iter().collect();
    sorted.sort_by_key(|v| v.pair_id);
    let records: Vec<String> = sorted.iter().map(|v| v.to_record()).collect();
    write_lines(path, records.iter().map(String::as_str))
}

pub fn read_verdicts(path: &Path) -> Result<Vec<FilterVerdict>, CorpusError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, line)| {
            FilterVerdict::parse_record(line).map_err(|reason| CorpusError::MalformedVerdict {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            })
        })
        .collect()
}
