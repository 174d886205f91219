//! Content similarity between an original article and one scraped result.
//!
//! Two scorers are provided. The cosine scorer zeroes non-HTML targets and
//! targets containing a refutation lexeme, and otherwise compares title
//! embeddings. The NLI scorer asks an entailment model whether the scraped
//! text follows from a "the news ... is legit" premise built from the original.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::{EvidenceDoc, NewsArticle};
use crate::http::JsonClient;

#[derive(Debug, thiserror::Error)]
pub enum SimilarityError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("no refutation lexicon for language `{0}`")]
    MissingLexicon(String),
    #[error("invalid scorer config: {0}")]
    InvalidConfig(String),
    #[error("gold pairs contain a single class")]
    DegenerateGold,
    #[error("no gold pairs")]
    EmptyGold,
    #[error("invalid NLI scores: {0}")]
    InvalidScores(String),
    #[error("lexicon {path}: {message}")]
    Lexicon { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, SimilarityError>;
}

pub const REFERENCE_DIM: usize = 1 << 14;

/// Hashed bag of character n-grams, L2-normalized.
///
/// Text is lowercased, every non-alphanumeric character becomes a space,
/// runs of spaces collapse, and the result is padded with one space on each
/// side. Each n-gram (by Unicode scalar) is hashed with 64-bit FNV-1a into
/// one of `dim` buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceEmbedder {
    pub dim: usize,
    pub min_n: usize,
    pub max_n: usize,
}

impl Default for ReferenceEmbedder {
    fn default() -> Self {
        ReferenceEmbedder {
            dim: REFERENCE_DIM,
            min_n: 3,
            max_n: 5,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl ReferenceEmbedder {
    pub fn with_ngram_range(min_n: usize, max_n: usize) -> Self {
        assert!(min_n >= 1 && min_n <= max_n, "bad n-gram range");
        ReferenceEmbedder {
            min_n,
            max_n,
            ..Default::default()
        }
    }

    fn normalized_chars(text: &str) -> Vec<char> {
        let mut out = vec![' '];
        for c in text.chars().flat_map(char::to_lowercase) {
            let c = if c.is_alphanumeric() { c } else { ' ' };
            if !(c == ' ' && out.last() == Some(&' ')) {
                out.push(c);
            }
        }
        if out.last() != Some(&' ') {
            out.push(' ');
        }
        out
    }
}

impl Embedder for ReferenceEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, SimilarityError> {
        let chars = Self::normalized_chars(text);
        if chars.len() <= 1 {
            return Err(SimilarityError::EmptyText);
        }
        let mut values = vec![0.0; self.dim];
        let mut buf = String::new();
        for n in self.min_n..=self.max_n {
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window);
                values[(fnv1a(buf.as_bytes()) % self.dim as u64) as usize] += 1.0;
            }
        }
        let v = EmbeddingVector::new(values);
        let norm = v.norm();
        if norm == 0.0 {
            // shorter than min_n once padded
            return Err(SimilarityError::EmptyText);
        }
        Ok(EmbeddingVector::new(v.values.into_iter().map(|x| x / norm).collect()))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Embedding service behind `{texts:[...]} -> {vectors:[[...]]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    client: JsonClient,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, dim: usize, timeout: Duration) -> Self {
        HttpEmbedder {
            client: JsonClient::new(endpoint, timeout, 1),
            dim,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, SimilarityError> {
        if text.trim().is_empty() {
            return Err(SimilarityError::EmptyText);
        }
        let resp: EmbedResponse = self
            .client
            .post(&EmbedRequest { texts: &[text] })
            .map_err(SimilarityError::ProviderUnavailable)?;
        let values = resp
            .vectors
            .into_iter()
            .next()
            .ok_or_else(|| SimilarityError::ProviderUnavailable("empty vectors".into()))?;
        if values.len() != self.dim {
            return Err(SimilarityError::DimMismatch {
                left: self.dim,
                right: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SimilarityError::ProviderUnavailable("non-finite embedding".into()));
        }
        Ok(EmbeddingVector::new(values))
    }
}

/// Cosine of the angle between two vectors, in `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SimilarityError> {
    if a.dim() != b.dim() {
        return Err(SimilarityError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// A similarity in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub const ZERO: SimilarityScore = SimilarityScore(0.0);

    /// Clamps into `[0, 1]`; NaN maps to 0.
    pub fn clamped(v: f64) -> Self {
        if v.is_nan() {
            SimilarityScore(0.0)
        } else {
            SimilarityScore(v.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Case-folded whole-word refutation lexemes per language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefutationLexicon {
    by_language: BTreeMap<String, Vec<Vec<String>>>,
}

fn words_lower(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

impl Default for RefutationLexicon {
    fn default() -> Self {
        let table: [(&str, &[&str]); 5] = [
            ("en", &["fake", "false", "rumor", "lie"]),
            ("fr", &["faux", "fausse", "fausses", "fake", "rumeur", "mensonge", "intox"]),
            ("de", &["fake", "falsch", "falsche", "gerücht", "lüge", "falschmeldung"]),
            ("es", &["falso", "falsa", "falsos", "falsas", "bulo", "rumor", "mentira"]),
            ("ru", &["фейк", "ложь", "ложный", "ложная", "слух", "слухи", "неправда"]),
        ];
        let mut lex = RefutationLexicon::empty();
        for (lang, words) in table {
            lex.set(lang, words.iter().copied());
        }
        lex
    }
}

impl RefutationLexicon {
    pub fn empty() -> Self {
        RefutationLexicon {
            by_language: BTreeMap::new(),
        }
    }

    pub fn set<'a>(&mut self, lang: &str, lexemes: impl IntoIterator<Item = &'a str>) {
        let entries = lexemes
            .into_iter()
            .map(words_lower)
            .filter(|w| !w.is_empty())
            .collect();
        self.by_language.insert(lang.to_owned(), entries);
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.by_language.keys().map(String::as_str)
    }

    /// Loads every `refutation.<lang>.txt` in `dir` (one lexeme per line).
    pub fn load_dir(dir: &Path) -> Result<Self, SimilarityError> {
        let err = |path: &Path, message: String| SimilarityError::Lexicon {
            path: path.to_owned(),
            message,
        };
        let mut lex = RefutationLexicon::empty();
        let entries = fs::read_dir(dir).map_err(|e| err(dir, e.to_string()))?;
        let mut paths: Vec<PathBuf> = entries.flatten().map(|e| e.path()).collect();
        paths.sort();
        for path in paths {
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some(lang) = name
                .strip_prefix("refutation.")
                .and_then(|r| r.strip_suffix(".txt"))
            else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(|e| err(&path, e.to_string()))?;
            lex.set(lang, text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')));
        }
        Ok(lex)
    }

    /// The first lexeme of `lang` occurring in `text` as whole words.
    pub fn find(&self, lang: &str, text: &str) -> Result<Option<String>, SimilarityError> {
        let lexemes = self
            .by_language
            .get(lang)
            .ok_or_else(|| SimilarityError::MissingLexicon(lang.to_owned()))?;
        let words = words_lower(text);
        for lexeme in lexemes {
            if words.windows(lexeme.len()).any(|w| w == lexeme.as_slice()) {
                return Ok(Some(lexeme.join(" ")));
            }
        }
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    /// Translated original title against the scraped title.
    #[default]
    Title,
    /// Title plus content on both sides.
    TitleAndContent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerConfig {
    pub theta: f64,
    /// Characters of content appended to the title for NLI inputs.
    pub content_len: usize,
    pub lexicon: RefutationLexicon,
    pub compare: CompareMode,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            theta: 0.5,
            content_len: 500,
            lexicon: RefutationLexicon::default(),
            compare: CompareMode::Title,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(SimilarityError::InvalidConfig(format!(
                "theta {} outside (0, 1)",
                self.theta
            )));
        }
        if self.content_len == 0 {
            return Err(SimilarityError::InvalidConfig("content_len must be positive".into()));
        }
        Ok(())
    }
}

/// Which rule produced a cosine-scorer value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoreBranch {
    NonHtml,
    Refuted(String),
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosineOutcome {
    pub score: SimilarityScore,
    pub branch: ScoreBranch,
}

impl CosineOutcome {
    /// Support decision at threshold `theta`.
    pub fn supports(&self, theta: f64) -> bool {
        self.score.value() >= theta
    }
}

fn join_title(title: &str, content: &str) -> String {
    let content = content.trim();
    if content.is_empty() {
        title.trim().to_owned()
    } else {
        format!("{} {}", title.trim(), content)
    }
}

/// Embedding-cosine scorer with the file and refutation overrides, applied in
/// that order before any embedding is computed.
///
/// `query_title` is the original title translated into `lang`.
pub fn cosine_news_similarity(
    original: &NewsArticle,
    query_title: &str,
    evidence: &EvidenceDoc,
    lang: &str,
    cfg: &ScorerConfig,
    embedder: &dyn Embedder,
) -> Result<CosineOutcome, SimilarityError> {
    if !evidence.is_html {
        return Ok(CosineOutcome {
            score: SimilarityScore::ZERO,
            branch: ScoreBranch::NonHtml,
        });
    }
    let haystack = format!("{} {}", evidence.title, evidence.content);
    if let Some(lexeme) = cfg.lexicon.find(lang, &haystack)? {
        return Ok(CosineOutcome {
            score: SimilarityScore::ZERO,
            branch: ScoreBranch::Refuted(lexeme),
        });
    }
    let (left, right) = match cfg.compare {
        CompareMode::Title => (query_title.to_owned(), evidence.title.clone()),
        CompareMode::TitleAndContent => (
            join_title(query_title, &original.content),
            join_title(&evidence.title, &evidence.content),
        ),
    };
    let score = match (embedder.embed(&left), embedder.embed(&right)) {
        (Ok(a), Ok(b)) => match cosine_similarity(&a, &b) {
            Ok(c) => SimilarityScore::clamped(c),
            Err(SimilarityError::ZeroVector) => SimilarityScore::ZERO,
            Err(e) => return Err(e),
        },
        // an untitled result cannot be similar
        (_, Err(SimilarityError::EmptyText)) | (Err(SimilarityError::EmptyText), _) => {
            SimilarityScore::ZERO
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    Ok(CosineOutcome {
        score,
        branch: ScoreBranch::Cosine,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliClass {
    Entailment,
    Neutral,
    Contradiction,
}

/// Entailment / neutral / contradiction probabilities summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliScores {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

impl NliScores {
    pub const UNIFORM: NliScores = NliScores {
        entailment: 1.0 / 3.0,
        neutral: 1.0 / 3.0,
        contradiction: 1.0 / 3.0,
    };

    /// Rescales nonnegative raw scores onto the simplex.
    pub fn normalized(entailment: f64, neutral: f64, contradiction: f64) -> Result<Self, SimilarityError> {
        let raw = [entailment, neutral, contradiction];
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SimilarityError::InvalidScores(format!("{raw:?}")));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(SimilarityError::InvalidScores("scores sum to zero".into()));
        }
        Ok(NliScores {
            entailment: entailment / sum,
            neutral: neutral / sum,
            contradiction: contradiction / sum,
        })
    }

    /// Arg-max class; ties resolve toward entailment, then neutral.
    pub fn class(&self) -> NliClass {
        if self.entailment >= self.neutral && self.entailment >= self.contradiction {
            NliClass::Entailment
        } else if self.neutral >= self.contradiction {
            NliClass::Neutral
        } else {
            NliClass::Contradiction
        }
    }

    /// Two-class decision: entailment against neutral and contradiction merged.
    pub fn supports(&self) -> bool {
        self.entailment > self.neutral + self.contradiction
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NliInput {
    pub premise: String,
    pub hypothesis: String,
}

fn title_with_prefix(title: &str, content: &str, content_len: usize) -> String {
    let prefix: String = content.trim().chars().take(content_len).collect();
    join_title(title, &prefix)
}

/// Premise is the original wrapped as `The news "<text>" is legit`; the
/// hypothesis is the scraped result. Each text is the title followed by the
/// first `content_len` characters of its content.
pub fn build_nli_input(original: &NewsArticle, evidence: &EvidenceDoc, content_len: usize) -> NliInput {
    let premise_text = title_with_prefix(&original.title, &original.content, content_len);
    NliInput {
        premise: format!("The news \"{premise_text}\" is legit"),
        hypothesis: title_with_prefix(&evidence.title, evidence.effective_content(), content_len),
    }
}

pub trait NliModel: Send + Sync {
    fn classify(&self, input: &NliInput) -> Result<NliScores, SimilarityError>;
}

/// Always returns the uniform distribution.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformNli;

impl NliModel for UniformNli {
    fn classify(&self, _input: &NliInput) -> Result<NliScores, SimilarityError> {
        Ok(NliScores::UNIFORM)
    }
}

/// Precomputed scores keyed by exact (premise, hypothesis); uniform otherwise.
#[derive(Debug, Clone, Default)]
pub struct FixtureNli {
    table: HashMap<NliInput, NliScores>,
}

#[derive(Deserialize)]
struct FixtureNliLine {
    premise: String,
    hypothesis: String,
    entailment: f64,
    neutral: f64,
    contradiction: f64,
}

impl FixtureNli {
    pub fn insert(&mut self, input: NliInput, scores: NliScores) {
        self.table.insert(input, scores);
    }

    /// JSON lines of `{premise, hypothesis, entailment, neutral, contradiction}`.
    pub fn from_jsonl(path: &Path) -> Result<Self, SimilarityError> {
        let err = |message: String| SimilarityError::Lexicon {
            path: path.to_owned(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut f = FixtureNli::default();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let l: FixtureNliLine =
                serde_json::from_str(line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
            f.insert(
                NliInput {
                    premise: l.premise,
                    hypothesis: l.hypothesis,
                },
                NliScores::normalized(l.entailment, l.neutral, l.contradiction)?,
            );
        }
        Ok(f)
    }
}

impl NliModel for FixtureNli {
    fn classify(&self, input: &NliInput) -> Result<NliScores, SimilarityError> {
        Ok(self.table.get(input).copied().unwrap_or(NliScores::UNIFORM))
    }
}

#[derive(Deserialize)]
struct NliResponse {
    entailment: f64,
    neutral: f64,
    contradiction: f64,
}

/// NLI service behind `{premise, hypothesis} -> {entailment, neutral, contradiction}`.
#[derive(Debug, Clone)]
pub struct HttpNli {
    client: JsonClient,
}

impl HttpNli {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        HttpNli {
            client: JsonClient::new(endpoint, timeout, 1),
        }
    }
}

impl NliModel for HttpNli {
    fn classify(&self, input: &NliInput) -> Result<NliScores, SimilarityError> {
        let r: NliResponse = self
            .client
            .post(input)
            .map_err(SimilarityError::ProviderUnavailable)?;
        NliScores::normalized(r.entailment, r.neutral, r.contradiction)
    }
}

pub fn nli_news_similarity(
    original: &NewsArticle,
    evidence: &EvidenceDoc,
    cfg: &ScorerConfig,
    model: &dyn NliModel,
) -> Result<NliScores, SimilarityError> {
    model.classify(&build_nli_input(original, evidence, cfg.content_len))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldLabel {
    Support,
    NotSupport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdFit {
    pub theta: f64,
    pub accuracy: f64,
    /// Accuracy at every grid point, ascending in theta.
    pub grid: Vec<(f64, f64)>,
}

/// `0.1, 0.2, ..., 0.9`.
pub fn default_theta_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Grid search for the threshold maximizing accuracy of `score >= theta`
/// against gold support labels; ties go to the smaller threshold.
pub fn tune_threshold(pairs: &[(f64, GoldLabel)]) -> Result<ThresholdFit, SimilarityError> {
    tune_threshold_on_grid(pairs, &default_theta_grid())
}

pub fn tune_threshold_on_grid(
    pairs: &[(f64, GoldLabel)],
    grid: &[f64],
) -> Result<ThresholdFit, SimilarityError> {
    if pairs.is_empty() || grid.is_empty() {
        return Err(SimilarityError::EmptyGold);
    }
    let supports = pairs.iter().filter(|(_, g)| *g == GoldLabel::Support).count();
    if supports == 0 || supports == pairs.len() {
        return Err(SimilarityError::DegenerateGold);
    }
    let mut grid_sorted = grid.to_vec();
    grid_sorted.sort_by(f64::total_cmp);
    let results: Vec<(f64, f64)> = grid_sorted
        .iter()
        .map(|&theta| {
            let correct = pairs
                .iter()
                .filter(|(s, g)| (*s >= theta) == (*g == GoldLabel::Support))
                .count();
            (theta, correct as f64 / pairs.len() as f64)
        })
        .collect();
    let mut best = results[0];
    for &r in &results[1..] {
        if r.1 > best.1 {
            best = r;
        }
    }
    Ok(ThresholdFit {
        theta: best.0,
        accuracy: best.1,
        grid: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn doc(title: &str, is_html: bool) -> EvidenceDoc {
        EvidenceDoc {
            url: "https://example.com/a".into(),
            title: title.into(),
            content: String::new(),
            language: "en".into(),
            position: 1,
            source_domain: "example.com".into(),
            is_html,
        }
    }

    fn original(title: &str) -> NewsArticle {
        NewsArticle::new("n", title, "", "", Label::Unknown)
    }

    #[test]
    fn reference_embedding_is_unit_and_deterministic() {
        let e = ReferenceEmbedder::default();
        let a = e.embed("abc").unwrap();
        assert_eq!(a, e.embed("abc").unwrap());
        assert_eq!(a.dim(), REFERENCE_DIM);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert!(matches!(e.embed(""), Err(SimilarityError::EmptyText)));
        assert!(matches!(e.embed(" !? "), Err(SimilarityError::EmptyText)));
    }

    #[test]
    fn cosine_hand_values() {
        let a = EmbeddingVector::new(vec![1.0, 2.0, 2.0]);
        let b = EmbeddingVector::new(vec![2.0, 1.0, 2.0]);
        assert!((cosine_similarity(&a, &b).unwrap() - 8.0 / 9.0).abs() < 1e-15);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let x = EmbeddingVector::new(vec![1.0, 0.0]);
        let y = EmbeddingVector::new(vec![0.0, 1.0]);
        assert_eq!(cosine_similarity(&x, &y).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&x, &a),
            Err(SimilarityError::DimMismatch { left: 2, right: 3 })
        ));
        let z = EmbeddingVector::new(vec![0.0, 0.0]);
        assert!(matches!(cosine_similarity(&x, &z), Err(SimilarityError::ZeroVector)));
    }

    #[test]
    fn branch_precedence() {
        let cfg = ScorerConfig::default();
        let e = ReferenceEmbedder::default();
        let n = original("Lottery winner arrested");
        // file check wins even when a lexeme is present
        let out = cosine_news_similarity(&n, &n.title, &doc("fake lottery", false), "en", &cfg, &e)
            .unwrap();
        assert_eq!(out.branch, ScoreBranch::NonHtml);
        let out = cosine_news_similarity(&n, &n.title, &doc("Lottery winner FAKE story", true), "en", &cfg, &e)
            .unwrap();
        assert_eq!(out.branch, ScoreBranch::Refuted("fake".into()));
        assert_eq!(out.score.value(), 0.0);
        let out = cosine_news_similarity(&n, &n.title, &doc("Lottery winner arrested", true), "en", &cfg, &e)
            .unwrap();
        assert_eq!(out.branch, ScoreBranch::Cosine);
        assert!((out.score.value() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lexicon_is_whole_word() {
        let lex = RefutationLexicon::default();
        assert_eq!(lex.find("en", "A believable story").unwrap(), None);
        assert_eq!(lex.find("en", "That is a LIE!").unwrap(), Some("lie".into()));
        assert_eq!(
            lex.find("es", "Estas son las 50 noticias falsas").unwrap(),
            Some("falsas".into())
        );
        assert!(matches!(lex.find("xx", "lie"), Err(SimilarityError::MissingLexicon(_))));
    }

    #[test]
    fn nli_template_and_truncation() {
        let mut n = original("Israel invented a vaccine");
        n.content = "abcdefghij".into();
        let mut w = doc("Vaccine trial", true);
        w.content = "0123456789".into();
        let input = build_nli_input(&n, &w, 4);
        assert_eq!(input.premise, "The news \"Israel invented a vaccine abcd\" is legit");
        assert_eq!(input.hypothesis, "Vaccine trial 0123");
        w.is_html = false;
        assert_eq!(build_nli_input(&n, &w, 4).hypothesis, "Vaccine trial");
    }

    #[test]
    fn uniform_stub_is_not_support() {
        let s = nli_news_similarity(&original("x"), &doc("y", true), &ScorerConfig::default(), &UniformNli)
            .unwrap();
        assert!((s.entailment + s.neutral + s.contradiction - 1.0).abs() < 1e-12);
        assert!(!s.supports());
    }

    #[test]
    fn nli_normalization_and_binarization() {
        let s = NliScores::normalized(6.0, 1.0, 1.0).unwrap();
        assert!((s.entailment - 0.75).abs() < 1e-12);
        assert!(s.supports());
        let s = NliScores::normalized(0.5, 0.25, 0.25).unwrap();
        assert_eq!(s.class(), NliClass::Entailment);
        assert!(!s.supports(), "exactly half is not a majority");
        assert!(NliScores::normalized(-1.0, 1.0, 1.0).is_err());
        assert!(NliScores::normalized(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ScorerConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.theta = 1.0;
        assert!(cfg.validate().is_err());
        let cfg = ScorerConfig {
            content_len: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn threshold_edge_cases() {
        assert!(matches!(tune_threshold(&[]), Err(SimilarityError::EmptyGold)));
        assert!(matches!(
            tune_threshold(&[(0.3, GoldLabel::Support), (0.9, GoldLabel::Support)]),
            Err(SimilarityError::DegenerateGold)
        ));
        // constant scores: every theta <= 0.5 predicts support
        let pairs = [
            (0.5, GoldLabel::Support),
            (0.5, GoldLabel::Support),
            (0.5, GoldLabel::NotSupport),
        ];
        let fit = tune_threshold(&pairs).unwrap();
        assert_eq!(fit.theta, 0.1);
        assert!((fit.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(fit.grid.len(), 9);
    }
}
