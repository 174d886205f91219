//! Feature blocks and named feature vectors.
//!
//! Evidence dimensions are named `<lang>_<pos>_sim` and `<lang>_<pos>_rank`
//! (NLI-based similarity uses `<lang>_<pos>_nli`), ordered by language, then
//! position, then kind. Linguistic blocks use the prefixes `ngram:`,
//! `punct_` and `read_`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::{Dataset, Label, NewsArticle};
use crate::credibility::SourceRank;
use crate::similarity::SimilarityScore;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("feature schema used before fitting")]
    NotFitted,
    #[error("no evidence for article `{0}`")]
    MissingEvidence(String),
    #[error("two evidence points for {language} position {position}")]
    DuplicatePoint { language: String, position: usize },
    #[error("text has no words")]
    EmptyText,
    #[error("invalid feature vector: {0}")]
    InvalidVector(String),
    #[error("unknown feature block `{0}`")]
    UnknownBlock(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Similarity and source rank of one search result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePoint {
    pub language: String,
    pub position: usize,
    pub sim: SimilarityScore,
    pub rank: SourceRank,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    names: Vec<String>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self, FeatureError> {
        if names.len() != values.len() {
            return Err(FeatureError::InvalidVector(format!(
                "{} names for {} values",
                names.len(),
                values.len()
            )));
        }
        let mut seen = HashSet::with_capacity(names.len());
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(FeatureError::InvalidVector(format!("duplicate name `{n}`")));
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::InvalidVector(format!("`{}` is not finite", names[i])));
        }
        Ok(FeatureVector { names, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }

    /// Appends another vector; names must stay unique.
    pub fn concat(mut self, other: FeatureVector) -> Result<Self, FeatureError> {
        self.names.extend(other.names);
        self.values.extend(other.values);
        FeatureVector::new(self.names, self.values)
    }

    /// Keeps the dimensions whose name satisfies `keep`, in order.
    pub fn select(&self, keep: impl Fn(&str) -> bool) -> FeatureVector {
        let (names, values) = self
            .iter()
            .filter(|(n, _)| keep(n))
            .map(|(n, v)| (n.to_owned(), v))
            .unzip();
        FeatureVector { names, values }
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EvidenceKind {
    Sim,
    Rank,
}

impl EvidenceKind {
    fn suffix(self) -> &'static str {
        match self {
            EvidenceKind::Sim => "sim",
            EvidenceKind::Rank => "rank",
        }
    }
}

fn index_points(
    points: &[EvidencePoint],
    top_n: usize,
) -> Result<HashMap<(&str, usize), &EvidencePoint>, FeatureError> {
    let mut index = HashMap::new();
    for p in points.iter().filter(|p| p.position >= 1 && p.position <= top_n) {
        if index.insert((p.language.as_str(), p.position), p).is_some() {
            return Err(FeatureError::DuplicatePoint {
                language: p.language.clone(),
                position: p.position,
            });
        }
    }
    Ok(index)
}

fn evidence_dims(
    points: &[EvidencePoint],
    langs: &[String],
    top_n: usize,
    kinds: impl Fn(&str) -> Vec<EvidenceKind>,
) -> Result<FeatureVector, FeatureError> {
    let index = index_points(points, top_n)?;
    let mut names = Vec::new();
    let mut values = Vec::new();
    for lang in langs {
        let kinds = kinds(lang);
        for pos in 1..=top_n {
            let point = index.get(&(lang.as_str(), pos));
            for &kind in &kinds {
                names.push(format!("{lang}_{pos}_{}", kind.suffix()));
                values.push(match (point, kind) {
                    (None, _) => 0.0,
                    (Some(p), EvidenceKind::Rank) => p.rank.normalized,
                    (Some(p), _) => p.sim.value(),
                });
            }
        }
    }
    FeatureVector::new(names, values)
}

/// `|langs| * top_n * 2` dimensions of similarity and normalized rank.
/// Points outside the layout are ignored; absent points read as zero.
pub fn assemble_ce_block(
    points: &[EvidencePoint],
    langs: &[String],
    top_n: usize,
) -> Result<FeatureVector, FeatureError> {
    evidence_dims(points, langs, top_n, |_| vec![EvidenceKind::Sim, EvidenceKind::Rank])
}

/// The English-only slice of [`assemble_ce_block`].
pub fn assemble_me_block(points: &[EvidencePoint], top_n: usize) -> Result<FeatureVector, FeatureError> {
    assemble_ce_block(points, &["en".to_owned()], top_n)
}

/// Rank dimensions only.
pub fn assemble_rank_block(
    points: &[EvidencePoint],
    langs: &[String],
    top_n: usize,
) -> Result<FeatureVector, FeatureError> {
    evidence_dims(points, langs, top_n, |_| vec![EvidenceKind::Rank])
}

fn tokens(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

fn unigrams_and_bigrams(text: &str) -> Vec<String> {
    let toks = tokens(text);
    let mut out = toks.clone();
    out.extend(toks.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfConfig {
    pub min_df: usize,
    pub max_features: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig {
            min_df: 2,
            max_features: 10_000,
        }
    }
}

/// Unigram + bigram tf-idf with smoothed idf `ln((1+D)/(1+df)) + 1` and
/// per-document L2 normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    config: TfidfConfig,
    vocabulary: Vec<String>,
    idf: Vec<f64>,
    n_docs: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TfidfVectorizer {
    pub fn fit<S: AsRef<str>>(docs: &[S], config: TfidfConfig) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in docs {
            let unique: HashSet<String> = unigrams_and_bigrams(d.as_ref()).into_iter().collect();
            for t in unique {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = df
            .into_iter()
            .filter(|(_, n)| *n >= config.min_df.max(1))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        kept.truncate(config.max_features);
        kept.sort_by(|a, b| a.0.cmp(&b.0));
        let n_docs = docs.len();
        let idf = kept
            .iter()
            .map(|(_, df)| ((1.0 + n_docs as f64) / (1.0 + *df as f64)).ln() + 1.0)
            .collect();
        let vocabulary: Vec<String> = kept.into_iter().map(|(t, _)| t).collect();
        let mut v = TfidfVectorizer {
            config,
            vocabulary,
            idf,
            n_docs,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index_of(term).map(|i| self.idf[i])
    }

    fn index_of(&self, term: &str) -> Option<usize> {
        if self.index.is_empty() && !self.vocabulary.is_empty() {
            return self.vocabulary.binary_search_by(|t| t.as_str().cmp(term)).ok();
        }
        self.index.get(term).copied()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.vocabulary.iter().map(|t| format!("ngram:{t}")).collect()
    }

    pub fn transform(&self, text: &str) -> FeatureVector {
        let mut values = vec![0.0; self.vocabulary.len()];
        for t in unigrams_and_bigrams(text) {
            if let Some(i) = self.index_of(&t) {
                values[i] += 1.0;
            }
        }
        for (v, idf) in values.iter_mut().zip(&self.idf) {
            *v *= idf;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        FeatureVector {
            names: self.feature_names(),
            values,
        }
    }

    /// Digest of the fitted vocabulary and idf weights.
    pub fn vocabulary_hash(&self) -> String {
        let mut h = Sha256::new();
        for (t, idf) in self.vocabulary.iter().zip(&self.idf) {
            h.update(t.as_bytes());
            h.update([0]);
            h.update(idf.to_bits().to_le_bytes());
        }
        h.update((self.n_docs as u64).to_le_bytes());
        hex::encode(h.finalize())
    }
}

const PUNCTUATION: [(&str, &[char]); 5] = [
    ("period", &['.']),
    ("comma", &[',']),
    ("dash", &['-', '\u{2013}', '\u{2014}']),
    ("question", &['?']),
    ("exclamation", &['!']),
];

/// Counts of `. , - ? !` plus the same counts per 100 characters.
pub fn punctuation_features(text: &str) -> FeatureVector {
    let chars = text.chars().count();
    let counts: Vec<f64> = PUNCTUATION
        .iter()
        .map(|(_, set)| text.chars().filter(|c| set.contains(c)).count() as f64)
        .collect();
    let mut names: Vec<String> = PUNCTUATION.iter().map(|(n, _)| format!("punct_{n}")).collect();
    names.extend(PUNCTUATION.iter().map(|(n, _)| format!("punct_{n}_per100")));
    let mut values = counts.clone();
    values.extend(counts.iter().map(|c| {
        if chars == 0 {
            0.0
        } else {
            c * 100.0 / chars as f64
        }
    }));
    FeatureVector { names, values }
}

const VOWELS: &str = "aeiouyàáâãäåæèéêëìíîïòóôõöøùúûüýÿœаеёиоуыэюя";

/// Vowel-group syllable estimate with a silent trailing `e`; at least one.
pub fn count_syllables(word: &str) -> usize {
    let w: Vec<char> = word.chars().flat_map(char::to_lowercase).filter(|c| c.is_alphabetic()).collect();
    if w.is_empty() {
        return 1;
    }
    let mut groups = 0;
    let mut prev_vowel = false;
    for c in &w {
        let v = VOWELS.contains(*c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = w.len();
    if groups > 1 && w[n - 1] == 'e' && !(n >= 2 && w[n - 2] == 'l') {
        groups -= 1;
    }
    groups.max(1)
}

/// Surface counts behind the readability indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadabilityStats {
    pub characters: usize,
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
    pub complex_words: usize,
    pub long_words: usize,
    pub word_types: usize,
}

fn readability_words(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| w.chars().any(char::is_alphanumeric))
        .collect()
}

impl ReadabilityStats {
    pub fn from_text(text: &str) -> Result<Self, FeatureError> {
        let words = readability_words(text);
        if words.is_empty() {
            return Err(FeatureError::EmptyText);
        }
        let sentences = text
            .split(['.', '!', '?', '\u{2026}'])
            .filter(|s| s.chars().any(char::is_alphanumeric))
            .count()
            .max(1);
        let syllables: Vec<usize> = words.iter().map(|w| count_syllables(w)).collect();
        let types: HashSet<String> = words.iter().map(|w| w.to_lowercase()).collect();
        Ok(ReadabilityStats {
            characters: words
                .iter()
                .map(|w| w.chars().filter(|c| c.is_alphanumeric()).count())
                .sum(),
            words: words.len(),
            sentences,
            syllables: syllables.iter().sum(),
            complex_words: syllables.iter().filter(|&&s| s >= 3).count(),
            long_words: words.iter().filter(|w| w.chars().count() > 6).count(),
            word_types: types.len(),
        })
    }

    fn words_per_sentence(&self) -> f64 {
        self.words as f64 / self.sentences as f64
    }

    fn per_word(&self, n: usize) -> f64 {
        n as f64 / self.words as f64
    }

    pub fn flesch_reading_ease(&self) -> f64 {
        206.835 - 1.015 * self.words_per_sentence() - 84.6 * self.per_word(self.syllables)
    }

    pub fn flesch_kincaid_grade(&self) -> f64 {
        0.39 * self.words_per_sentence() + 11.8 * self.per_word(self.syllables) - 15.59
    }

    pub fn gunning_fog(&self) -> f64 {
        0.4 * (self.words_per_sentence() + 100.0 * self.per_word(self.complex_words))
    }

    pub fn automated_readability_index(&self) -> f64 {
        4.71 * self.per_word(self.characters) + 0.5 * self.words_per_sentence() - 21.43
    }
}

pub fn readability_features(text: &str) -> Result<FeatureVector, FeatureError> {
    let s = ReadabilityStats::from_text(text)?;
    let pairs: [(&str, f64); 11] = [
        ("characters", s.characters as f64),
        ("words", s.words as f64),
        ("sentences", s.sentences as f64),
        ("syllables", s.syllables as f64),
        ("complex_words", s.complex_words as f64),
        ("long_words", s.long_words as f64),
        ("word_types", s.word_types as f64),
        ("flesch_reading_ease", s.flesch_reading_ease()),
        ("flesch_kincaid_grade", s.flesch_kincaid_grade()),
        ("gunning_fog", s.gunning_fog()),
        ("ari", s.automated_readability_index()),
    ];
    let (names, values) = pairs.iter().map(|(n, v)| (format!("read_{n}"), *v)).unzip();
    Ok(FeatureVector { names, values })
}

/// How evidence similarity was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    /// Embedding cosine with refutation overrides.
    Embedding,
    /// Entailment probability from an NLI model.
    Nli,
}

impl FromStr for Scorer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "emb" | "embedding" => Ok(Scorer::Embedding),
            "nli" => Ok(Scorer::Nli),
            other => Err(format!("unknown scorer `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    /// Similarity and rank for every language.
    CrossLingual(Scorer),
    /// Similarity and rank for English only.
    Monolingual(Scorer),
    CrossLingualRank,
    MonolingualRank,
    Ngrams,
    Punctuation,
    Readability,
    NePopularity,
}

impl Block {
    pub fn slug(self) -> &'static str {
        match self {
            Block::CrossLingual(Scorer::Embedding) => "ce-emb-rank",
            Block::CrossLingual(Scorer::Nli) => "ce-nli-rank",
            Block::Monolingual(Scorer::Embedding) => "me-emb-rank",
            Block::Monolingual(Scorer::Nli) => "me-nli-rank",
            Block::CrossLingualRank => "ce-rank",
            Block::MonolingualRank => "me-rank",
            Block::Ngrams => "ngrams",
            Block::Punctuation => "punct",
            Block::Readability => "readability",
            Block::NePopularity => "ne-pop",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Block::CrossLingual(Scorer::Embedding) => "CE Emb+Rank",
            Block::CrossLingual(Scorer::Nli) => "CE NLI+Rank",
            Block::Monolingual(Scorer::Embedding) => "ME Emb+Rank",
            Block::Monolingual(Scorer::Nli) => "ME NLI+Rank",
            Block::CrossLingualRank => "CE Rank",
            Block::MonolingualRank => "ME Rank",
            Block::Ngrams => "Ngrams",
            Block::Punctuation => "Punctuation",
            Block::Readability => "Readability",
            Block::NePopularity => "NE popularity",
        }
    }

    pub fn uses_evidence(self) -> bool {
        !matches!(self, Block::Ngrams | Block::Punctuation | Block::Readability)
    }

    /// Parses a `+`-joined list of block slugs. `linguistic` expands to
    /// ngrams, punctuation and readability.
    pub fn parse_list(spec: &str) -> Result<Vec<Block>, FeatureError> {
        let mut out = Vec::new();
        for part in spec.split('+').map(str::trim).filter(|p| !p.is_empty()) {
            let blocks: Vec<Block> = match part.to_ascii_lowercase().as_str() {
                "linguistic" | "all-linguistic" => {
                    vec![Block::Ngrams, Block::Punctuation, Block::Readability]
                }
                "ce-emb-rank" | "ce-emb" => vec![Block::CrossLingual(Scorer::Embedding)],
                "ce-nli-rank" | "ce-nli" => vec![Block::CrossLingual(Scorer::Nli)],
                "me-emb-rank" | "me-emb" => vec![Block::Monolingual(Scorer::Embedding)],
                "me-nli-rank" | "me-nli" => vec![Block::Monolingual(Scorer::Nli)],
                "ce-rank" => vec![Block::CrossLingualRank],
                "me-rank" => vec![Block::MonolingualRank],
                "ngrams" => vec![Block::Ngrams],
                "punct" | "punctuation" => vec![Block::Punctuation],
                "readability" => vec![Block::Readability],
                "ne-pop" | "ne" => vec![Block::NePopularity],
                other => return Err(FeatureError::UnknownBlock(other.to_owned())),
            };
            for b in blocks {
                if !out.contains(&b) {
                    out.push(b);
                }
            }
        }
        if out.is_empty() {
            return Err(FeatureError::UnknownBlock(spec.to_owned()));
        }
        Ok(out)
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Per-article evidence as produced by the scorers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArticleEvidence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<EvidencePoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nli: Option<Vec<EvidencePoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ne_popularity: Option<f64>,
}

impl ArticleEvidence {
    pub fn points(&self, scorer: Scorer) -> Option<&[EvidencePoint]> {
        match scorer {
            Scorer::Embedding => self.embedding.as_deref(),
            Scorer::Nli => self.nli.as_deref(),
        }
    }

    /// Any scored points, for rank-only blocks.
    pub fn any_points(&self) -> Option<&[EvidencePoint]> {
        self.embedding.as_deref().or(self.nli.as_deref())
    }
}

/// Evidence for many articles, keyed by article id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvidenceStore {
    by_article: HashMap<String, ArticleEvidence>,
}

#[derive(Serialize, Deserialize)]
struct EvidenceFile {
    article_id: String,
    #[serde(flatten)]
    evidence: ArticleEvidence,
}

impl EvidenceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, article_id: impl Into<String>, evidence: ArticleEvidence) {
        self.by_article.insert(article_id.into(), evidence);
    }

    pub fn get(&self, article_id: &str) -> Option<&ArticleEvidence> {
        self.by_article.get(article_id)
    }

    pub fn get_mut(&mut self, article_id: &str) -> Option<&mut ArticleEvidence> {
        self.by_article.get_mut(article_id)
    }

    pub fn entry(&mut self, article_id: &str) -> &mut ArticleEvidence {
        self.by_article.entry(article_id.to_owned()).or_default()
    }

    pub fn len(&self) -> usize {
        self.by_article.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_article.is_empty()
    }

    /// Writes `<dir>/<article_id>.json` per article.
    pub fn write_dir(&self, dir: &Path) -> Result<(), FeatureError> {
        let io = |path: &Path, e: std::io::Error| FeatureError::Io {
            path: path.to_owned(),
            message: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut ids: Vec<&String> = self.by_article.keys().collect();
        ids.sort();
        for id in ids {
            let path = dir.join(format!("{}.json", file_safe(id)));
            let body = serde_json::to_string_pretty(&EvidenceFile {
                article_id: id.clone(),
                evidence: self.by_article[id].clone(),
            })
            .expect("evidence serializes");
            fs::write(&path, body).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, FeatureError> {
        let io = |path: &Path, message: String| FeatureError::Io {
            path: path.to_owned(),
            message,
        };
        let mut store = EvidenceStore::new();
        for entry in fs::read_dir(dir).map_err(|e| io(dir, e.to_string()))?.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| io(&path, e.to_string()))?;
            let file: EvidenceFile =
                serde_json::from_str(&text).map_err(|e| io(&path, e.to_string()))?;
            store.insert(file.article_id, file.evidence);
        }
        Ok(store)
    }
}

/// Maps an article id to a file stem.
pub fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Extension point for blocks this crate does not implement (for example a
/// psycholinguistic lexicon or parser-derived syntax features).
pub trait CustomBlock: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    /// Sees training articles only.
    fn fit(&mut self, train: &[&NewsArticle]) -> Result<(), FeatureError>;
    fn transform(&self, article: &NewsArticle) -> Result<FeatureVector, FeatureError>;
}

/// An ordered list of blocks plus whatever state fitting produced.
#[derive(Debug)]
pub struct FeatureSchema {
    blocks: Vec<Block>,
    languages: Vec<String>,
    top_n: usize,
    tfidf_config: TfidfConfig,
    tfidf: Option<TfidfVectorizer>,
    custom: Vec<Box<dyn CustomBlock>>,
    names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaManifest {
    pub blocks: Vec<String>,
    pub languages: Vec<String>,
    pub top_n: usize,
    pub tfidf: Option<TfidfManifest>,
    pub custom_blocks: Vec<String>,
    pub n_features: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfManifest {
    pub min_df: usize,
    pub max_features: usize,
    pub vocabulary_size: usize,
    pub vocabulary_hash: String,
}

fn article_text(a: &NewsArticle) -> String {
    if a.content.is_empty() {
        a.title.clone()
    } else {
        format!("{}\n{}", a.title, a.content)
    }
}

impl FeatureSchema {
    pub fn new(blocks: Vec<Block>, languages: Vec<String>, top_n: usize) -> Self {
        FeatureSchema {
            blocks,
            languages,
            top_n,
            tfidf_config: TfidfConfig::default(),
            tfidf: None,
            custom: Vec::new(),
            names: None,
        }
    }

    pub fn with_tfidf(mut self, config: TfidfConfig) -> Self {
        self.tfidf_config = config;
        self
    }

    pub fn with_custom_block(mut self, block: Box<dyn CustomBlock>) -> Self {
        self.custom.push(block);
        self
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn top_n(&self) -> usize {
        self.top_n
    }

    pub fn is_fitted(&self) -> bool {
        self.names.is_some()
    }

    pub fn tfidf(&self) -> Option<&TfidfVectorizer> {
        self.tfidf.as_ref()
    }

    pub fn uses_evidence(&self) -> bool {
        self.blocks.iter().any(|b| b.uses_evidence())
    }

    /// Fits text-derived state on training articles. Must precede
    /// [`transform`](Self::transform).
    pub fn fit(&mut self, train: &[&NewsArticle]) -> Result<(), FeatureError> {
        if self.blocks.contains(&Block::Ngrams) {
            let docs: Vec<String> = train.iter().map(|a| article_text(a)).collect();
            self.tfidf = Some(TfidfVectorizer::fit(&docs, self.tfidf_config));
        }
        for c in &mut self.custom {
            c.fit(train)?;
        }
        self.names = None;
        let probe = NewsArticle::new("", "probe text.", "", "", Label::Unknown);
        let names = self
            .transform_unchecked(&probe, Some(&ArticleEvidence::default()), false)?
            .names;
        self.names = Some(names);
        Ok(())
    }

    pub fn fit_dataset(&mut self, train: &Dataset) -> Result<(), FeatureError> {
        let refs: Vec<&NewsArticle> = train.articles.iter().collect();
        self.fit(&refs)
    }

    pub fn feature_names(&self) -> Result<&[String], FeatureError> {
        self.names.as_deref().ok_or(FeatureError::NotFitted)
    }

    pub fn transform(
        &self,
        article: &NewsArticle,
        evidence: Option<&ArticleEvidence>,
    ) -> Result<FeatureVector, FeatureError> {
        if self.names.is_none() {
            return Err(FeatureError::NotFitted);
        }
        self.transform_unchecked(article, evidence, true)
    }

    /// Like [`transform`](Self::transform), but absent scorer output reads
    /// as zero instead of failing.
    pub fn transform_lenient(
        &self,
        article: &NewsArticle,
        evidence: Option<&ArticleEvidence>,
    ) -> Result<FeatureVector, FeatureError> {
        if self.names.is_none() {
            return Err(FeatureError::NotFitted);
        }
        let empty = ArticleEvidence::default();
        self.transform_unchecked(article, Some(evidence.unwrap_or(&empty)), false)
    }

    fn evidence_section(&self, evidence: &ArticleEvidence) -> Result<FeatureVector, FeatureError> {
        let en = "en";
        let covers = |b: &Block, lang: &str| match b {
            Block::CrossLingual(_) | Block::CrossLingualRank => true,
            Block::Monolingual(_) | Block::MonolingualRank => lang == en,
            _ => false,
        };
        let mut langs: Vec<String> = self.languages.clone();
        if self.blocks.iter().any(|b| matches!(b, Block::Monolingual(_) | Block::MonolingualRank))
            && !langs.iter().any(|l| l == en)
        {
            langs.insert(0, en.to_owned());
        }
        let langs: Vec<String> = langs
            .into_iter()
            .filter(|l| self.blocks.iter().any(|b| covers(b, l)))
            .collect();

        let emb = evidence.points(Scorer::Embedding).unwrap_or(&[]);
        let nli = evidence.points(Scorer::Nli).unwrap_or(&[]);
        let ranks = evidence.any_points().unwrap_or(&[]);
        let emb_idx = index_points(emb, self.top_n)?;
        let nli_idx = index_points(nli, self.top_n)?;
        let rank_idx = index_points(ranks, self.top_n)?;

        let mut names = Vec::new();
        let mut values = Vec::new();
        for lang in &langs {
            let want = |scorer: Scorer| {
                self.blocks.iter().any(|b| match b {
                    Block::CrossLingual(s) => *s == scorer,
                    Block::Monolingual(s) => *s == scorer && lang == en,
                    _ => false,
                })
            };
            let (want_emb, want_nli) = (want(Scorer::Embedding), want(Scorer::Nli));
            for pos in 1..=self.top_n {
                let key = (lang.as_str(), pos);
                if want_emb {
                    names.push(format!("{lang}_{pos}_sim"));
                    values.push(emb_idx.get(&key).map_or(0.0, |p| p.sim.value()));
                }
                if want_nli {
                    names.push(format!("{lang}_{pos}_nli"));
                    values.push(nli_idx.get(&key).map_or(0.0, |p| p.sim.value()));
                }
                names.push(format!("{lang}_{pos}_rank"));
                let rank = if want_emb && !want_nli {
                    emb_idx.get(&key)
                } else if want_nli && !want_emb {
                    nli_idx.get(&key)
                } else {
                    rank_idx.get(&key)
                };
                values.push(rank.map_or(0.0, |p| p.rank.normalized));
            }
        }
        FeatureVector::new(names, values)
    }

    fn transform_unchecked(
        &self,
        article: &NewsArticle,
        evidence: Option<&ArticleEvidence>,
        require_points: bool,
    ) -> Result<FeatureVector, FeatureError> {
        let mut out = FeatureVector::default();
        if self.uses_evidence() {
            let ev = evidence.ok_or_else(|| FeatureError::MissingEvidence(article.id.clone()))?;
            let has_points = self.blocks.iter().all(|b| match b {
                Block::CrossLingual(s) | Block::Monolingual(s) => ev.points(*s).is_some(),
                Block::CrossLingualRank | Block::MonolingualRank => ev.any_points().is_some(),
                _ => true,
            });
            if !has_points && require_points {
                return Err(FeatureError::MissingEvidence(article.id.clone()));
            }
            if self.blocks.iter().any(|b| !matches!(b, Block::NePopularity) && b.uses_evidence()) {
                out = out.concat(self.evidence_section(ev)?)?;
            }
        }
        let text = article_text(article);
        for block in &self.blocks {
            let part = match block {
                Block::Ngrams => self
                    .tfidf
                    .as_ref()
                    .ok_or(FeatureError::NotFitted)?
                    .transform(&text),
                Block::Punctuation => punctuation_features(&text),
                Block::Readability => match readability_features(&text) {
                    Ok(v) => v,
                    // keep columns aligned for articles without words
                    Err(FeatureError::EmptyText) => readability_features("x.")?.zeroed(),
                    Err(e) => return Err(e),
                },
                Block::NePopularity => FeatureVector {
                    names: vec!["ne_popularity".into()],
                    values: vec![evidence.and_then(|e| e.ne_popularity).unwrap_or(0.0)],
                },
                _ => continue,
            };
            out = out.concat(part)?;
        }
        for c in &self.custom {
            out = out.concat(c.transform(article)?)?;
        }
        Ok(out)
    }

    /// Digest of the fitted column layout and parameters.
    pub fn fingerprint(&self) -> Result<String, FeatureError> {
        let names = self.feature_names()?;
        let mut h = Sha256::new();
        for n in names {
            h.update(n.as_bytes());
            h.update([0]);
        }
        if let Some(t) = &self.tfidf {
            h.update(t.vocabulary_hash().as_bytes());
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn manifest(&self) -> Result<SchemaManifest, FeatureError> {
        Ok(SchemaManifest {
            blocks: self.blocks.iter().map(|b| b.slug().to_owned()).collect(),
            languages: self.languages.clone(),
            top_n: self.top_n,
            tfidf: self.tfidf.as_ref().map(|t| TfidfManifest {
                min_df: self.tfidf_config.min_df,
                max_features: self.tfidf_config.max_features,
                vocabulary_size: t.vocabulary().len(),
                vocabulary_hash: t.vocabulary_hash(),
            }),
            custom_blocks: self.custom.iter().map(|c| c.name().to_owned()).collect(),
            n_features: self.feature_names()?.len(),
            fingerprint: self.fingerprint()?,
        })
    }
}

impl FeatureVector {
    fn zeroed(mut self) -> Self {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        self
    }
}

/// Dense rows aligned with article order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            ids: indices
                .iter()
                .filter_map(|&i| self.ids.get(i).cloned())
                .collect(),
        }
    }

    /// Columns whose name satisfies `keep`.
    pub fn select_columns(&self, keep: impl Fn(&str) -> bool) -> FeatureMatrix {
        let cols: Vec<usize> = (0..self.names.len()).filter(|&c| keep(&self.names[c])).collect();
        FeatureMatrix {
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| cols.iter().map(|&c| r[c]).collect())
                .collect(),
            ids: self.ids.clone(),
        }
    }

    /// CSV with one column per dimension followed by `label`.
    pub fn write_csv(&self, path: &Path, labels: &[Label]) -> Result<(), FeatureError> {
        let err = |e: String| FeatureError::Io {
            path: path.to_owned(),
            message: e,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| err(e.to_string()))?;
        let mut header = self.names.clone();
        header.push("label".into());
        w.write_record(&header).map_err(|e| err(e.to_string()))?;
        for (row, label) in self.rows.iter().zip(labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            rec.push(label.as_str().to_owned());
            w.write_record(&rec).map_err(|e| err(e.to_string()))?;
        }
        w.flush().map_err(|e| err(e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<(FeatureMatrix, Vec<Label>), FeatureError> {
        let err = |e: String| FeatureError::Io {
            path: path.to_owned(),
            message: e,
        };
        let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
        let header: Vec<String> = r
            .headers()
            .map_err(|e| err(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if header.last().map(String::as_str) != Some("label") {
            return Err(err("last column must be `label`".into()));
        }
        let names = header[..header.len() - 1].to_vec();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            if rec.len() != header.len() {
                return Err(err(format!("row {}: {} fields", i + 2, rec.len())));
            }
            let row = rec
                .iter()
                .take(names.len())
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(format!("row {}: {e}", i + 2)))?;
            let label = rec[names.len()]
                .parse::<Label>()
                .map_err(|_| err(format!("row {}: bad label", i + 2)))?;
            rows.push(row);
            labels.push(label);
        }
        Ok((
            FeatureMatrix {
                names,
                rows,
                ids: Vec::new(),
            },
            labels,
        ))
    }

    pub fn write_manifest(manifest: &SchemaManifest, path: &Path) -> Result<(), FeatureError> {
        let mut f = fs::File::create(path).map_err(|e| FeatureError::Io {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let body = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        f.write_all(body.as_bytes()).map_err(|e| FeatureError::Io {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }
}

/// Transforms every article of `split` with a fitted schema.
///
/// In strict mode an article without evidence fails with `MissingEvidence`;
/// otherwise its evidence dimensions read as zero.
pub fn build_matrix(
    split: &Dataset,
    schema: &FeatureSchema,
    evidence: &EvidenceStore,
    strict: bool,
) -> Result<(FeatureMatrix, Vec<Label>), FeatureError> {
    let names = schema.feature_names()?.to_vec();
    let empty = ArticleEvidence::default();
    let mut rows = Vec::with_capacity(split.len());
    for a in &split.articles {
        let ev = match evidence.get(&a.id) {
            Some(e) => e,
            None if strict && schema.uses_evidence() => {
                return Err(FeatureError::MissingEvidence(a.id.clone()))
            }
            None => &empty,
        };
        let v = if strict {
            schema.transform(a, Some(ev))?
        } else {
            schema.transform_lenient(a, Some(ev))?
        };
        debug_assert_eq!(v.names(), names.as_slice());
        rows.push(v.into_values());
    }
    Ok((
        FeatureMatrix {
            names,
            rows,
            ids: split.articles.iter().map(|a| a.id.clone()).collect(),
        },
        split.articles.iter().map(|a| a.label).collect(),
    ))
}

/// Groups a block list under a human-readable combo name.
pub fn combo_name(blocks: &[Block]) -> String {
    blocks.iter().map(|b| b.display_name()).collect::<Vec<_>>().join(" + ")
}

/// Count of CE dimensions for a layout.
pub fn ce_dimension(langs: usize, top_n: usize) -> usize {
    langs * top_n * 2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn langs() -> Vec<String> {
        crate::retrieval::DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect()
    }

    fn point(lang: &str, pos: usize, sim: f64, raw: u64) -> EvidencePoint {
        EvidencePoint {
            language: lang.into(),
            position: pos,
            sim: SimilarityScore::clamped(sim),
            rank: SourceRank::from_raw(raw, 10_000_000),
        }
    }

    #[test]
    fn ce_block_layout() {
        let v = assemble_ce_block(&[point("fr", 2, 0.7, 100)], &langs(), 10).unwrap();
        assert_eq!(v.len(), 100);
        assert_eq!(v.names()[0], "en_1_sim");
        assert_eq!(v.names()[1], "en_1_rank");
        assert_eq!(v.get("fr_2_sim"), Some(0.7));
        assert!((v.get("fr_2_rank").unwrap() - (1.0 - 2.0 / 7.0)).abs() < 1e-12);
        assert_eq!(v.values().iter().filter(|x| **x != 0.0).count(), 2);
    }

    #[test]
    fn duplicate_point_rejected() {
        let pts = [point("en", 1, 0.1, 10), point("en", 1, 0.2, 10)];
        assert!(matches!(
            assemble_ce_block(&pts, &langs(), 10),
            Err(FeatureError::DuplicatePoint { .. })
        ));
    }

    #[test]
    fn me_block_is_english_slice() {
        let pts: Vec<_> = langs()
            .iter()
            .flat_map(|l| (1..=10).map(move |p| point(l, p, 0.05 * p as f64, 10 * p as u64)))
            .collect();
        let ce = assemble_ce_block(&pts, &langs(), 10).unwrap();
        let me = assemble_me_block(&pts, 10).unwrap();
        assert_eq!(ce.select(|n| n.starts_with("en_")), me);
    }

    #[test]
    fn tfidf_weights() {
        let docs = ["a b c", "a b", "c d"];
        let v = TfidfVectorizer::fit(&docs, TfidfConfig::default());
        assert_eq!(v.vocabulary(), ["a", "a b", "b", "c"]);
        let idf_a = (4.0f64 / 3.0).ln() + 1.0;
        assert!((v.idf("a").unwrap() - idf_a).abs() < 1e-12);
        let x = v.transform("a a zzz");
        assert!((x.l2_norm() - 1.0).abs() < 1e-12);
        assert_eq!(x.get("ngram:a"), Some(1.0));
        assert_eq!(v.transform("zzz").l2_norm(), 0.0);
    }

    #[test]
    fn tfidf_cap() {
        let docs = ["x y z w", "x y z w", "x y"];
        let v = TfidfVectorizer::fit(&docs, TfidfConfig { min_df: 1, max_features: 2 });
        assert_eq!(v.vocabulary(), ["x", "x y"]);
    }

    #[test]
    fn punctuation_counts() {
        let v = punctuation_features("Wait, what?! No - really.");
        assert_eq!(v.get("punct_comma"), Some(1.0));
        assert_eq!(v.get("punct_question"), Some(1.0));
        assert_eq!(v.get("punct_exclamation"), Some(1.0));
        assert_eq!(v.get("punct_dash"), Some(1.0));
        assert_eq!(v.get("punct_period"), Some(1.0));
        assert!((v.get("punct_comma_per100").unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn syllables() {
        for (w, n) in [("cat", 1), ("table", 2), ("make", 1), ("reading", 2), ("beautiful", 3), ("the", 1), ("rhythm", 1), ("42", 1)] {
            assert_eq!(count_syllables(w), n, "{w}");
        }
    }

    #[test]
    fn readability_formulas() {
        let s = ReadabilityStats::from_text("The cat sat on the mat. It was a beautiful day.").unwrap();
        assert_eq!(s.words, 11);
        assert_eq!(s.sentences, 2);
        assert_eq!(s.syllables, 13);
        assert_eq!(s.complex_words, 1);
        let fre = 206.835 - 1.015 * 5.5 - 84.6 * 13.0 / 11.0;
        assert!((s.flesch_reading_ease() - fre).abs() < 1e-9);
        assert!(matches!(readability_features("  ...  "), Err(FeatureError::EmptyText)));
    }

    #[test]
    fn block_slugs_parse() {
        let b = Block::parse_list("ce-emb-rank+linguistic").unwrap();
        assert_eq!(b.len(), 4);
        for block in &b {
            assert_eq!(Block::parse_list(block.slug()).unwrap(), vec![*block]);
        }
        assert!(Block::parse_list("bogus").is_err());
    }

    #[test]
    fn schema_requires_fit() {
        let schema = FeatureSchema::new(vec![Block::Punctuation], langs(), 10);
        let a = NewsArticle::new("a", "T", "Body.", "", Label::Fake);
        assert!(matches!(schema.transform(&a, None), Err(FeatureError::NotFitted)));
    }

    #[test]
    fn schema_strict_evidence() {
        let mut schema = FeatureSchema::new(vec![Block::CrossLingual(Scorer::Embedding)], langs(), 10);
        let a = NewsArticle::new("a", "T", "Body.", "", Label::Fake);
        schema.fit(&[&a]).unwrap();
        assert_eq!(schema.feature_names().unwrap().len(), 100);
        let ds = Dataset::new("d", vec![a]).unwrap();
        let store = EvidenceStore::new();
        assert!(matches!(
            build_matrix(&ds, &schema, &store, true),
            Err(FeatureError::MissingEvidence(_))
        ));
        let (m, _) = build_matrix(&ds, &schema, &store, false).unwrap();
        assert!(m.rows[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn combined_scorers_share_rank() {
        let mut schema = FeatureSchema::new(
            vec![Block::CrossLingual(Scorer::Embedding), Block::CrossLingual(Scorer::Nli)],
            langs(),
            10,
        );
        let a = NewsArticle::new("a", "T", "", "", Label::Fake);
        schema.fit(&[&a]).unwrap();
        assert_eq!(schema.feature_names().unwrap().len(), 150);
    }
}
