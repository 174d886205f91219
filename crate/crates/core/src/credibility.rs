//! Source rank and named-entity popularity.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::hostname;

/// Sentinel rank for hosts missing from the table when none is configured.
pub const DEFAULT_UNKNOWN_RANK: u64 = 10_000_000;

#[derive(Debug, thiserror::Error)]
pub enum CredibilityError {
    #[error("cannot parse a hostname from `{0}`")]
    UnparseableUrl(String),
    #[error("{path}:{line}: {message}")]
    Table {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid rank table: {0}")]
    InvalidTable(String),
}

/// Registered domain (public suffix + one label) of a hostname, `www.` stripped.
pub fn registered_domain(host: &str) -> String {
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host);
    psl::domain_str(host).unwrap_or(host).to_owned()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankTable {
    ranks: HashMap<String, u64>,
    default_rank: u64,
}

impl RankTable {
    /// `default_rank` must exceed every listed rank; ranks must be positive.
    pub fn new(
        ranks: impl IntoIterator<Item = (String, u64)>,
        default_rank: u64,
    ) -> Result<Self, CredibilityError> {
        let mut table = HashMap::new();
        for (domain, rank) in ranks {
            if rank == 0 {
                return Err(CredibilityError::InvalidTable(format!("{domain} has rank 0")));
            }
            table.insert(registered_domain(&domain), rank);
        }
        if let Some((d, &max)) = table.iter().max_by_key(|(_, r)| **r) {
            if max >= default_rank {
                return Err(CredibilityError::InvalidTable(format!(
                    "default rank {default_rank} does not exceed {d}={max}"
                )));
            }
        }
        Ok(RankTable {
            ranks: table,
            default_rank,
        })
    }

    /// Reads `domain<TAB>rank` lines. Without an explicit sentinel the
    /// default is `max(10_000_000, largest rank + 1)`.
    pub fn from_tsv(path: &Path, default_rank: Option<u64>) -> Result<Self, CredibilityError> {
        let text = fs::read_to_string(path).map_err(|e| CredibilityError::Table {
            path: path.to_owned(),
            line: 0,
            message: e.to_string(),
        })?;
        let mut ranks = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: &str| CredibilityError::Table {
                path: path.to_owned(),
                line: i + 1,
                message: message.to_owned(),
            };
            let (domain, rank) = line.split_once('\t').ok_or_else(|| bad("expected domain<TAB>rank"))?;
            let rank: u64 = rank.trim().parse().map_err(|_| bad("rank is not an integer"))?;
            ranks.push((domain.trim().to_owned(), rank));
        }
        let max = ranks.iter().map(|(_, r)| *r).max().unwrap_or(0);
        let default_rank = default_rank.unwrap_or(DEFAULT_UNKNOWN_RANK.max(max + 1));
        RankTable::new(ranks, default_rank)
    }

    pub fn default_rank(&self) -> u64 {
        self.default_rank
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn get(&self, domain: &str) -> Option<u64> {
        self.ranks.get(&registered_domain(domain)).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceRank {
    pub raw: u64,
    pub normalized: f64,
}

impl SourceRank {
    pub fn from_raw(raw: u64, default_rank: u64) -> Self {
        SourceRank {
            raw,
            normalized: normalize_rank(raw, default_rank),
        }
    }

    /// The rank given to a missing search result.
    pub fn missing(default_rank: u64) -> Self {
        SourceRank::from_raw(default_rank, default_rank)
    }
}

/// Log-scaled credibility: 1 for rank 1, 0 at the sentinel.
pub fn normalize_rank(raw: u64, default_rank: u64) -> f64 {
    if default_rank <= 1 {
        return if raw <= 1 { 1.0 } else { 0.0 };
    }
    let raw = raw.max(1) as f64;
    (1.0 - raw.log10() / (default_rank as f64).log10()).clamp(0.0, 1.0)
}

pub fn lookup_rank(url: &str, table: &RankTable) -> Result<SourceRank, CredibilityError> {
    let host = hostname(url).ok_or_else(|| CredibilityError::UnparseableUrl(url.to_owned()))?;
    let raw = table.get(&host).unwrap_or(table.default_rank);
    Ok(SourceRank::from_raw(raw, table.default_rank))
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have", "he",
    "her", "his", "how", "i", "if", "in", "into", "is", "it", "its", "more", "new", "no", "not",
    "of", "on", "or", "our", "over", "she", "so", "than", "that", "the", "their", "them", "then",
    "there", "these", "they", "this", "to", "up", "was", "we", "were", "what", "when", "where",
    "which", "who", "why", "will", "with", "you", "your",
];

fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word.to_lowercase().as_str())
}

fn starts_uppercase(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

/// Capitalized-span entity candidates.
///
/// Runs of capitalized words are cut at stopwords, punctuation and
/// lowercase words. Each run is emitted, and so is every contiguous sub-run
/// of two or more words, so `Michael Jordan Resigns` also yields
/// `Michael Jordan`. Output is in order of first occurrence without repeats.
pub fn extract_named_entities(title: &str, content: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |s: String| {
        if !out.contains(&s) {
            out.push(s);
        }
    };
    for text in [title, content] {
        let mut run: Vec<&str> = Vec::new();
        let mut flush = |run: &mut Vec<&str>| {
            if !run.is_empty() {
                push(run.join(" "));
                for len in (2..run.len()).rev() {
                    for start in 0..=run.len() - len {
                        push(run[start..start + len].join(" "));
                    }
                }
                run.clear();
            }
        };
        for segment in text.split_word_bounds() {
            if segment.chars().all(char::is_whitespace) {
                continue;
            }
            let is_word = segment.chars().any(char::is_alphanumeric);
            if is_word && starts_uppercase(segment) && !is_stopword(segment) {
                run.push(segment);
            } else {
                flush(&mut run);
            }
        }
        flush(&mut run);
    }
    out
}

/// Entity popularity in `[0, 1]`, keyed case-insensitively.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopularityTable {
    scores: HashMap<String, f64>,
}

impl PopularityTable {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        PopularityTable {
            scores: entries
                .into_iter()
                .map(|(k, v)| (k.to_lowercase(), v))
                .collect(),
        }
    }

    /// Reads `entity<TAB>score` lines.
    pub fn from_tsv(path: &Path) -> Result<Self, CredibilityError> {
        let text = fs::read_to_string(path).map_err(|e| CredibilityError::Table {
            path: path.to_owned(),
            line: 0,
            message: e.to_string(),
        })?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: &str| CredibilityError::Table {
                path: path.to_owned(),
                line: i + 1,
                message: message.to_owned(),
            };
            let (entity, score) = line.rsplit_once('\t').ok_or_else(|| bad("expected entity<TAB>score"))?;
            let score: f64 = score.trim().parse().map_err(|_| bad("score is not a number"))?;
            if !score.is_finite() {
                return Err(bad("score is not finite"));
            }
            entries.push((entity.trim().to_owned(), score));
        }
        Ok(PopularityTable::new(entries))
    }

    pub fn get(&self, entity: &str) -> Option<f64> {
        self.scores.get(&entity.to_lowercase()).copied()
    }

    pub fn max_score(&self) -> Option<f64> {
        self.scores.values().copied().reduce(f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NePopularity {
    /// Matched entities with their table scores.
    pub entities: Vec<(String, f64)>,
    pub aggregate: f64,
}

pub fn ne_popularity(entities: &[String], table: &PopularityTable) -> NePopularity {
    let matched: Vec<(String, f64)> = entities
        .iter()
        .filter_map(|e| table.get(e).map(|s| (e.clone(), s)))
        .collect();
    let aggregate = matched.iter().map(|(_, s)| *s).reduce(f64::max).unwrap_or(0.0);
    NePopularity {
        entities: matched,
        aggregate,
    }
}
