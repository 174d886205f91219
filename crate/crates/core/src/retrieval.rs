//! Text extraction, title translation and per-language evidence search.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    hostname, CorpusError, EvidenceDoc, NewsArticle, QueryKey, SearchSnapshot, SnapshotStore,
};
use crate::http::JsonClient;

pub const DEFAULT_LANGUAGES: [&str; 5] = ["en", "fr", "de", "es", "ru"];
pub const DEFAULT_TOP_N: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("no title could be extracted")]
    ExtractionFailed,
    #[error("`{0}` is not a text document")]
    NonTextMedia(String),
    #[error("translator unavailable: {0}")]
    TranslatorUnavailable(String),
    #[error("unsupported language `{0}`")]
    UnsupportedLanguage(String),
    #[error("search provider failed for `{language}`: {message}")]
    ProviderFailed { language: String, message: String },
    #[error("every language failed: {0:?}")]
    AllProvidersFailed(BTreeMap<String, String>),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("fixture {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error(transparent)]
    Snapshot(#[from] CorpusError),
}

/// `true` for tags shaped like `en`, `ru`, `pt-BR`, `und`.
pub fn is_language_tag(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let primary = parts.next().unwrap_or("");
    (2..=3).contains(&primary.len())
        && primary.bytes().all(|b| b.is_ascii_lowercase())
        && parts.all(|p| (1..=8).contains(&p.len()) && p.bytes().all(|b| b.is_ascii_alphanumeric()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedText {
    pub title: String,
    pub content: String,
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Pulls title and body text out of a fetched document.
///
/// HTML titles come from `<title>`, falling back to the first non-empty
/// heading; the body is the text of the `<p>` elements. Anything that is not
/// HTML or plain text yields [`RetrievalError::NonTextMedia`].
pub fn extract_text(raw: &[u8], media_type: &str) -> Result<ExtractedText, RetrievalError> {
    let media = media_type
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase();
    if raw.starts_with(b"%PDF-") {
        return Err(RetrievalError::NonTextMedia("application/pdf".into()));
    }
    let text = String::from_utf8_lossy(raw);
    match media.as_str() {
        "text/html" | "application/xhtml+xml" => extract_html(&text),
        "text/plain" => {
            let mut lines = text.lines().map(str::trim).skip_while(|l| l.is_empty());
            let title = lines.next().map(collapse_ws).unwrap_or_default();
            if title.is_empty() {
                return Err(RetrievalError::ExtractionFailed);
            }
            let content = lines.collect::<Vec<_>>().join("\n").trim().to_owned();
            Ok(ExtractedText { title, content })
        }
        other => Err(RetrievalError::NonTextMedia(other.to_owned())),
    }
}

fn extract_html(text: &str) -> Result<ExtractedText, RetrievalError> {
    use scraper::{Html, Selector};
    let doc = Html::parse_document(text);
    let first_text = |css: &str| {
        let sel = Selector::parse(css).expect("static selector");
        doc.select(&sel)
            .map(|el| collapse_ws(&el.text().collect::<String>()))
            .find(|t| !t.is_empty())
    };
    let title = first_text("title")
        .or_else(|| first_text("h1, h2, h3, h4, h5, h6"))
        .ok_or(RetrievalError::ExtractionFailed)?;
    let p = Selector::parse("p").expect("static selector");
    let content = doc
        .select(&p)
        .map(|el| collapse_ws(&el.text().collect::<String>()))
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n");
    Ok(ExtractedText { title, content })
}

/// File extensions that point at downloads rather than web pages.
const FILE_EXTENSIONS: &[&str] = &[
    "pdf", "doc", "docx", "xls", "xlsx", "ppt", "pptx", "odt", "rtf", "txt", "csv", "zip", "rar",
    "gz", "7z", "mp3", "mp4", "avi", "mov", "jpg", "jpeg", "png", "gif", "svg", "epub",
];

/// Whether a url looks like an HTML page (as opposed to a linked file).
pub fn looks_like_html(url: &str) -> bool {
    let path = url::Url::parse(url)
        .map(|u| u.path().to_owned())
        .unwrap_or_else(|_| url.split(['?', '#']).next().unwrap_or("").to_owned());
    let last = path.rsplit('/').next().unwrap_or("");
    match last.rsplit_once('.') {
        Some((_, ext)) => !FILE_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()),
        None => true,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: String,
    pub end: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub article_id: String,
    pub languages: Vec<String>,
    pub top_n: usize,
    #[serde(default)]
    pub time_range: Option<TimeRange>,
}

impl QuerySpec {
    pub fn new(article_id: impl Into<String>) -> Self {
        QuerySpec {
            article_id: article_id.into(),
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            top_n: DEFAULT_TOP_N,
            time_range: None,
        }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.top_n == 0 {
            return Err(RetrievalError::InvalidQuery("top_n must be at least 1".into()));
        }
        if self.languages.is_empty() {
            return Err(RetrievalError::InvalidQuery("no languages".into()));
        }
        let mut seen = BTreeSet::new();
        for l in &self.languages {
            if !is_language_tag(l) {
                return Err(RetrievalError::InvalidQuery(format!("bad language tag `{l}`")));
            }
            if !seen.insert(l) {
                return Err(RetrievalError::InvalidQuery(format!("duplicate language `{l}`")));
            }
        }
        if let Some(range) = &self.time_range {
            for d in [&range.start, &range.end] {
                chrono::NaiveDate::parse_from_str(d, "%Y-%m-%d")
                    .map_err(|_| RetrievalError::InvalidQuery(format!("bad date `{d}`")))?;
            }
            if range.start > range.end {
                return Err(RetrievalError::InvalidQuery("time range ends before it starts".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslatedQuery {
    pub article_id: String,
    pub language: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Translation {
    pub text: String,
    /// Set when no translation was available and the source text was kept.
    pub fallback: bool,
}

pub trait Translator: Send + Sync {
    fn supports(&self, lang: &str) -> bool;
    fn translate(&self, text: &str, from: &str, to: &str) -> Result<Translation, RetrievalError>;
}

/// Lookup-table translator backed by `lang<TAB>source<TAB>translation` lines.
///
/// A missing entry falls back to the source text and records a warning.
#[derive(Debug, Default)]
pub struct FixtureTranslator {
    table: HashMap<(String, String), String>,
    supported: BTreeSet<String>,
    warnings: Mutex<Vec<String>>,
}

fn normalize_query(text: &str) -> String {
    collapse_ws(text).to_lowercase()
}

impl FixtureTranslator {
    pub fn new() -> Self {
        FixtureTranslator {
            supported: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn with_entry(mut self, lang: &str, source: &str, translation: &str) -> Self {
        self.insert(lang, source, translation);
        self
    }

    pub fn insert(&mut self, lang: &str, source: &str, translation: &str) {
        self.supported.insert(lang.to_owned());
        self.table
            .insert((lang.to_owned(), normalize_query(source)), translation.to_owned());
    }

    pub fn from_tsv(path: &Path) -> Result<Self, RetrievalError> {
        let text = fs::read_to_string(path).map_err(|e| RetrievalError::Fixture {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let mut t = FixtureTranslator::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(lang), Some(src), Some(dst)) if is_language_tag(lang.trim()) => {
                    t.insert(lang.trim(), src, dst.trim())
                }
                _ => {
                    return Err(RetrievalError::Fixture {
                        path: path.to_owned(),
                        message: format!("line {}: expected lang<TAB>source<TAB>translation", i + 1),
                    })
                }
            }
        }
        Ok(t)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

impl Translator for FixtureTranslator {
    fn supports(&self, lang: &str) -> bool {
        self.supported.contains(lang)
    }

    fn translate(&self, text: &str, from: &str, to: &str) -> Result<Translation, RetrievalError> {
        if !self.supports(to) {
            return Err(RetrievalError::UnsupportedLanguage(to.to_owned()));
        }
        if from == to {
            return Ok(Translation {
                text: text.to_owned(),
                fallback: false,
            });
        }
        match self.table.get(&(to.to_owned(), normalize_query(text))) {
            Some(t) => Ok(Translation {
                text: t.clone(),
                fallback: false,
            }),
            None => {
                self.warnings
                    .lock()
                    .unwrap_or_else(|p| p.into_inner())
                    .push(format!("no {from}->{to} translation for `{text}`"));
                Ok(Translation {
                    text: text.to_owned(),
                    fallback: true,
                })
            }
        }
    }
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    text: String,
}

/// Translator behind `{text, source, target} -> {text}` JSON over HTTP.
#[derive(Debug, Clone)]
pub struct HttpTranslator {
    client: JsonClient,
    supported: BTreeSet<String>,
}

impl HttpTranslator {
    pub fn new(endpoint: impl Into<String>, supported: &[String], timeout: Duration) -> Self {
        HttpTranslator {
            client: JsonClient::new(endpoint, timeout, 1),
            supported: supported.iter().cloned().collect(),
        }
    }
}

impl Translator for HttpTranslator {
    fn supports(&self, lang: &str) -> bool {
        self.supported.contains(lang)
    }

    fn translate(&self, text: &str, from: &str, to: &str) -> Result<Translation, RetrievalError> {
        if !self.supports(to) {
            return Err(RetrievalError::UnsupportedLanguage(to.to_owned()));
        }
        if from == to {
            return Ok(Translation {
                text: text.to_owned(),
                fallback: false,
            });
        }
        let resp: TranslateResponse = self
            .client
            .post(&TranslateRequest {
                text,
                source: from,
                target: to,
            })
            .map_err(RetrievalError::TranslatorUnavailable)?;
        Ok(Translation {
            text: resp.text,
            fallback: false,
        })
    }
}

/// Translates an article title into `lang`.
pub fn translate_title(
    article: &NewsArticle,
    lang: &str,
    translator: &dyn Translator,
) -> Result<(TranslatedQuery, Translation), RetrievalError> {
    if !translator.supports(lang) {
        return Err(RetrievalError::UnsupportedLanguage(lang.to_owned()));
    }
    let t = translator.translate(&article.title, &article.language, lang)?;
    if t.text.trim().is_empty() {
        return Err(RetrievalError::TranslatorUnavailable(format!(
            "empty translation into {lang}"
        )));
    }
    Ok((
        TranslatedQuery {
            article_id: article.id.clone(),
            language: lang.to_owned(),
            text: t.text.clone(),
        },
        t,
    ))
}

/// Wire request of the search adapter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    pub language: String,
    pub top_n: usize,
    #[serde(default)]
    pub time_range: Option<TimeRange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    pub title: String,
    #[serde(default)]
    pub content: String,
    pub position: usize,
    /// Overrides url-based file detection when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_html: Option<bool>,
    /// Detected page language, when it differs from the query language.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub results: Vec<SearchHit>,
}

pub trait SearchProvider: Send + Sync {
    fn search(&self, request: &SearchRequest) -> Result<SearchResponse, RetrievalError>;
}

/// One stored fixture line: a request key with its response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub query: String,
    pub language: String,
    pub results: Vec<SearchHit>,
}

/// Offline search index keyed by (normalized query, language).
#[derive(Debug, Clone, Default)]
pub struct FixtureSearchProvider {
    index: HashMap<(String, String), Vec<SearchHit>>,
}

impl FixtureSearchProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: FixtureEntry) {
        self.index
            .insert((normalize_query(&entry.query), entry.language), entry.results);
    }

    pub fn from_entries(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        let mut p = Self::new();
        for e in entries {
            p.insert(e);
        }
        p
    }

    /// Reads JSON lines of `{query, language, results}`.
    pub fn from_jsonl(path: &Path) -> Result<Self, RetrievalError> {
        let fixture = |message: String| RetrievalError::Fixture {
            path: path.to_owned(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| fixture(e.to_string()))?;
        let mut p = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: FixtureEntry = serde_json::from_str(line)
                .map_err(|e| fixture(format!("line {}: {e}", i + 1)))?;
            p.insert(e);
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

impl SearchProvider for FixtureSearchProvider {
    fn search(&self, request: &SearchRequest) -> Result<SearchResponse, RetrievalError> {
        let key = (normalize_query(&request.query), request.language.clone());
        let mut results = self.index.get(&key).cloned().unwrap_or_default();
        results.sort_by_key(|h| h.position);
        results.truncate(request.top_n);
        Ok(SearchResponse { results })
    }
}

/// External search adapter speaking the JSON wire protocol, with a timeout and
/// one retry per call.
#[derive(Debug, Clone)]
pub struct HttpSearchProvider {
    client: JsonClient,
}

impl HttpSearchProvider {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        HttpSearchProvider {
            client: JsonClient::new(endpoint, timeout, 1),
        }
    }
}

impl SearchProvider for HttpSearchProvider {
    fn search(&self, request: &SearchRequest) -> Result<SearchResponse, RetrievalError> {
        self.client
            .post(request)
            .map_err(|message| RetrievalError::ProviderFailed {
                language: request.language.clone(),
                message,
            })
    }
}

/// Converts provider hits into evidence docs: ordered by provider position,
/// truncated to `top_n`, renumbered `1..=k`.
pub fn hits_to_evidence(hits: Vec<SearchHit>, language: &str, top_n: usize) -> Vec<EvidenceDoc> {
    let mut hits = hits;
    hits.sort_by_key(|h| h.position);
    hits.into_iter()
        .take(top_n)
        .enumerate()
        .map(|(i, h)| EvidenceDoc {
            is_html: h.is_html.unwrap_or_else(|| looks_like_html(&h.url)),
            source_domain: hostname(&h.url).unwrap_or_default(),
            language: h
                .language
                .filter(|l| is_language_tag(l))
                .unwrap_or_else(|| language.to_owned()),
            url: h.url,
            title: h.title,
            content: h.content,
            position: i + 1,
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalOutcome {
    pub article_id: String,
    pub queries: Vec<TranslatedQuery>,
    /// One entry per requested language; failed languages map to an empty list.
    pub evidence: BTreeMap<String, Vec<EvidenceDoc>>,
    pub failures: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl RetrievalOutcome {
    pub fn total_docs(&self) -> usize {
        self.evidence.values().map(Vec::len).sum()
    }

    pub fn query(&self, lang: &str) -> Option<&TranslatedQuery> {
        self.queries.iter().find(|q| q.language == lang)
    }
}

/// Steps 1-3 wired together: translate, search, optionally persist.
pub struct Retriever<'a> {
    pub translator: &'a dyn Translator,
    pub provider: &'a dyn SearchProvider,
    pub store: Option<&'a SnapshotStore>,
    /// Timestamp written into snapshots; the current time when unset.
    pub captured_at: Option<String>,
}

impl<'a> Retriever<'a> {
    pub fn new(translator: &'a dyn Translator, provider: &'a dyn SearchProvider) -> Self {
        Retriever {
            translator,
            provider,
            store: None,
            captured_at: None,
        }
    }

    pub fn with_store(mut self, store: &'a SnapshotStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn retrieve(
        &self,
        article: &NewsArticle,
        spec: &QuerySpec,
    ) -> Result<RetrievalOutcome, RetrievalError> {
        spec.validate()?;
        let captured_at = self
            .captured_at
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));

        let per_language: Vec<(String, Result<(TranslatedQuery, Translation, Vec<EvidenceDoc>), String>)> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = spec
                    .languages
                    .iter()
                    .map(|lang| {
                        let captured_at = &captured_at;
                        scope.spawn(move || {
                            let r = self.fetch_language(article, spec, lang, captured_at);
                            (lang.clone(), r.map_err(|e| e.to_string()))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("language worker panicked"))
                    .collect()
            });

        let mut out = RetrievalOutcome {
            article_id: article.id.clone(),
            ..Default::default()
        };
        for (lang, result) in per_language {
            match result {
                Ok((query, translation, docs)) => {
                    if translation.fallback {
                        out.warnings
                            .push(format!("{lang}: no translation, searched untranslated title"));
                    }
                    out.queries.push(query);
                    out.evidence.insert(lang, docs);
                }
                Err(message) => {
                    out.evidence.insert(lang.clone(), Vec::new());
                    out.failures.insert(lang, message);
                }
            }
        }
        if out.failures.len() == spec.languages.len() {
            return Err(RetrievalError::AllProvidersFailed(out.failures));
        }
        Ok(out)
    }

    fn fetch_language(
        &self,
        article: &NewsArticle,
        spec: &QuerySpec,
        lang: &str,
        captured_at: &str,
    ) -> Result<(TranslatedQuery, Translation, Vec<EvidenceDoc>), RetrievalError> {
        let (query, translation) = translate_title(article, lang, self.translator)?;
        let response = self.provider.search(&SearchRequest {
            query: query.text.clone(),
            language: lang.to_owned(),
            top_n: spec.top_n,
            time_range: spec.time_range.clone(),
        })?;
        let docs = hits_to_evidence(response.results, lang, spec.top_n);
        if let Some(store) = self.store {
            store.store(&SearchSnapshot {
                query_key: QueryKey::new(&article.id, lang),
                results: docs.clone(),
                captured_at: captured_at.to_owned(),
            })?;
        }
        Ok((query, translation, docs))
    }
}

/// Reads previously captured evidence for `languages` from a snapshot store.
/// Languages without a snapshot are reported in `failures`.
pub fn load_evidence(
    store: &SnapshotStore,
    article: &NewsArticle,
    languages: &[String],
    top_n: usize,
) -> RetrievalOutcome {
    let mut out = RetrievalOutcome {
        article_id: article.id.clone(),
        ..Default::default()
    };
    for lang in languages {
        match store.load(&QueryKey::new(&article.id, lang)) {
            Ok(mut snap) => {
                snap.results.truncate(top_n);
                out.evidence.insert(lang.clone(), snap.results);
            }
            Err(e) => {
                out.evidence.insert(lang.clone(), Vec::new());
                out.failures.insert(lang.clone(), e.to_string());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn hit(pos: usize, url: &str) -> SearchHit {
        SearchHit {
            url: url.into(),
            title: format!("hit {pos}"),
            content: String::new(),
            position: pos,
            is_html: None,
            language: None,
        }
    }

    #[test]
    fn html_title_and_paragraph() {
        let page = b"<html><head><title> Plague  found </title></head><body><p>One case.</p></body></html>";
        let t = extract_text(page, "text/html; charset=utf-8").unwrap();
        assert_eq!(t.title, "Plague found");
        assert_eq!(t.content, "One case.");
    }

    #[test]
    fn pdf_is_not_text() {
        assert!(matches!(
            extract_text(b"%PDF-1.7 ...", "application/pdf"),
            Err(RetrievalError::NonTextMedia(_))
        ));
        assert!(matches!(
            extract_text(b"%PDF-1.4", "text/html"),
            Err(RetrievalError::NonTextMedia(_))
        ));
    }

    #[test]
    fn heading_fallback_pages() {
        let cases: [(&[u8], Option<&str>); 5] = [
            (b"<html><body><h1>Main</h1><p>x</p></body></html>", Some("Main")),
            (b"<html><body><h3>Third</h3><h2>Second</h2></body></html>", Some("Third")),
            (b"<html><head><title> </title></head><body><h2>Sub</h2></body></html>", Some("Sub")),
            (b"<html><body><p>only text</p></body></html>", None),
            (b"<html><body><h1></h1><h2>  </h2></body></html>", None),
        ];
        for (page, want) in cases {
            let got = extract_text(page, "text/html").map(|t| t.title);
            match want {
                Some(w) => assert_eq!(got.unwrap(), w),
                None => assert!(matches!(got, Err(RetrievalError::ExtractionFailed))),
            }
        }
    }

    #[test]
    fn plain_text_first_line_is_title() {
        let t = extract_text(b"\n  Headline\nbody one\nbody two\n", "text/plain").unwrap();
        assert_eq!(t.title, "Headline");
        assert_eq!(t.content, "body one\nbody two");
    }

    #[test]
    fn file_links_detected() {
        assert!(!looks_like_html("https://who.int/report.PDF"));
        assert!(!looks_like_html("https://x.org/a/b.docx?dl=1"));
        assert!(looks_like_html("https://edition.cnn.com/2020/07/06/asia/index.html"));
        assert!(looks_like_html("https://dw.com/en/story/a-51613992"));
    }

    #[test]
    fn language_tags() {
        assert!(is_language_tag("en"));
        assert!(is_language_tag("pt-BR"));
        assert!(is_language_tag("und"));
        assert!(!is_language_tag("EN"));
        assert!(!is_language_tag("english"));
    }

    #[test]
    fn query_spec_validation() {
        let mut q = QuerySpec::new("a");
        assert!(q.validate().is_ok());
        q.top_n = 0;
        assert!(q.validate().is_err());
        let mut q = QuerySpec::new("a");
        q.languages.push("en".into());
        assert!(q.validate().is_err());
        let mut q = QuerySpec::new("a");
        q.time_range = Some(TimeRange {
            start: "2018-01-01".into(),
            end: "2018-12-31".into(),
        });
        assert!(q.validate().is_ok());
    }

    #[test]
    fn identity_and_table_translation() {
        let t = FixtureTranslator::new().with_entry(
            "es",
            "Bubonic plague outbreak in Mongolia",
            "BROTE DE PESTE BUBÓNICA EN MONGOLIA",
        );
        let a = NewsArticle::new("p", "Bubonic plague outbreak in Mongolia", "", "", Label::Legit);
        assert_eq!(translate_title(&a, "en", &t).unwrap().0.text, a.title);
        assert_eq!(
            translate_title(&a, "es", &t).unwrap().0.text,
            "BROTE DE PESTE BUBÓNICA EN MONGOLIA"
        );
        assert!(matches!(
            translate_title(&a, "xx", &t),
            Err(RetrievalError::UnsupportedLanguage(l)) if l == "xx"
        ));
        let (q, tr) = translate_title(&a, "de", &t).unwrap();
        assert!(tr.fallback);
        assert_eq!(q.text, a.title);
        assert_eq!(t.warnings().len(), 1);
    }

    #[test]
    fn truncation_keeps_first_positions() {
        let hits: Vec<_> = (1..=12).rev().map(|p| hit(p, &format!("https://e{p}.com/"))).collect();
        let docs = hits_to_evidence(hits, "en", 10);
        assert_eq!(docs.len(), 10);
        assert_eq!(
            docs.iter().map(|d| d.position).collect::<Vec<_>>(),
            (1..=10).collect::<Vec<_>>()
        );
        assert_eq!(docs[0].source_domain, "e1.com");
        assert_eq!(docs[9].url, "https://e10.com/");
    }

    #[test]
    fn non_html_hits_flagged() {
        let docs = hits_to_evidence(vec![hit(1, "https://x.org/file.pdf")], "en", 10);
        assert!(!docs[0].is_html);
        assert_eq!(docs[0].effective_content(), "");
    }
}
