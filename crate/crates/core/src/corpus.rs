//! Articles, datasets, deterministic splits and the on-disk search snapshot store.
//!
//! The canonical article format is JSON lines with the keys
//! `id,title,content,url,label,topic,language,published`. CSV with the same
//! header names is accepted on import.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Language tag used for evidence whose language could not be determined.
pub const UNDETERMINED_LANGUAGE: &str = "und";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: invalid or missing field `{field}`")]
    SchemaViolation { row: usize, field: String },
    #[error("dataset has {len} articles, at least {min} are required")]
    TooSmall { len: usize, min: usize },
    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),
    #[error("no snapshot stored for article `{article_id}` in language `{language}`")]
    MissingSnapshot { article_id: String, language: String },
    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fake,
    Legit,
    #[default]
    Unknown,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Fake => "fake",
            Label::Legit => "legit",
            Label::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fake" | "false" => Ok(Label::Fake),
            "legit" | "true" | "real" => Ok(Label::Legit),
            "unknown" => Ok(Label::Unknown),
            _ => Err(()),
        }
    }
}

/// A labeled news item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ArticleRepr")]
pub struct NewsArticle {
    pub id: String,
    pub title: String,
    pub content: String,
    pub url: String,
    /// Lowercase hostname parsed from `url`; empty when there is no url.
    #[serde(skip)]
    pub source_domain: String,
    pub language: String,
    pub label: Label,
    pub topic: String,
    pub published: Option<String>,
}

#[derive(Deserialize)]
struct ArticleRepr {
    id: String,
    title: String,
    #[serde(default)]
    content: String,
    #[serde(default)]
    url: String,
    #[serde(default = "default_language")]
    language: String,
    label: Label,
    #[serde(default)]
    topic: String,
    #[serde(default)]
    published: Option<String>,
}

impl From<ArticleRepr> for NewsArticle {
    fn from(r: ArticleRepr) -> Self {
        NewsArticle {
            source_domain: hostname(&r.url).unwrap_or_default(),
            id: r.id,
            title: r.title,
            content: r.content,
            url: r.url,
            language: r.language,
            label: r.label,
            topic: r.topic,
            published: r.published,
        }
    }
}

fn default_language() -> String {
    "en".to_owned()
}

impl NewsArticle {
    /// Builds an article, deriving `source_domain` from `url`.
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        content: impl Into<String>,
        url: impl Into<String>,
        label: Label,
    ) -> Self {
        let url = url.into();
        NewsArticle {
            id: id.into(),
            title: title.into(),
            content: content.into(),
            source_domain: hostname(&url).unwrap_or_default(),
            url,
            language: default_language(),
            label,
            topic: String::new(),
            published: None,
        }
    }
}

/// Lowercase hostname of a url. Bare hostnames without a scheme are accepted.
pub fn hostname(raw: &str) -> Option<String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    let parsed = url::Url::parse(raw)
        .ok()
        .filter(|u| u.has_host())
        .or_else(|| url::Url::parse(&format!("http://{raw}")).ok())?;
    parsed.host_str().map(|h| h.to_ascii_lowercase())
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: Option<String>,
    title: Option<String>,
    content: Option<String>,
    url: Option<String>,
    label: Option<String>,
    topic: Option<String>,
    language: Option<String>,
    published: Option<String>,
}

impl RawRecord {
    fn validate(self, row: usize, dataset: &str) -> Result<NewsArticle, CorpusError> {
        let violation = |field: &str| CorpusError::SchemaViolation {
            row,
            field: field.to_owned(),
        };
        let title = self
            .title
            .map(|t| t.trim().to_owned())
            .filter(|t| !t.is_empty())
            .ok_or_else(|| violation("title"))?;
        let label = self
            .label
            .as_deref()
            .ok_or_else(|| violation("label"))?
            .parse::<Label>()
            .map_err(|_| violation("label"))?;
        let url = self.url.unwrap_or_default();
        let source_domain = if url.trim().is_empty() {
            String::new()
        } else {
            hostname(&url).ok_or_else(|| violation("url"))?
        };
        let published = self.published.filter(|p| !p.trim().is_empty());
        if let Some(p) = &published {
            if chrono::NaiveDate::parse_from_str(p.get(..10).unwrap_or(p), "%Y-%m-%d").is_err() {
                return Err(violation("published"));
            }
        }
        Ok(NewsArticle {
            id: self
                .id
                .filter(|i| !i.trim().is_empty())
                .unwrap_or_else(|| format!("{dataset}-{row}")),
            title,
            content: self.content.unwrap_or_default(),
            url,
            source_domain,
            language: self
                .language
                .filter(|l| !l.trim().is_empty())
                .unwrap_or_else(default_language),
            label,
            topic: self.topic.unwrap_or_default(),
            published,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

impl DatasetFormat {
    /// Guesses the format from a file extension, defaulting to JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub articles: Vec<NewsArticle>,
    pub counts: BTreeMap<Label, usize>,
}

impl Dataset {
    /// Builds a dataset; fails on duplicate ids.
    pub fn new(name: impl Into<String>, articles: Vec<NewsArticle>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for (row, a) in articles.iter().enumerate() {
            if !seen.insert(a.id.as_str()) {
                return Err(CorpusError::SchemaViolation {
                    row: row + 1,
                    field: "id".into(),
                });
            }
        }
        let counts = label_counts(&articles);
        Ok(Dataset {
            name: name.into(),
            articles,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&NewsArticle> {
        self.articles.iter().find(|a| a.id == id)
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.articles.iter().map(|a| a.id.as_str()).collect()
    }

    /// Writes the canonical JSON-lines form.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let io = |source| CorpusError::Io {
            path: path.to_owned(),
            source,
        };
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
        for a in &self.articles {
            let line = serde_json::to_string(a).expect("article serializes");
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

fn label_counts(articles: &[NewsArticle]) -> BTreeMap<Label, usize> {
    let mut counts = BTreeMap::new();
    for a in articles {
        *counts.entry(a.label).or_insert(0) += 1;
    }
    counts
}

/// Result of a lenient import: the valid articles plus every rejected row.
#[derive(Debug)]
pub struct IngestReport {
    pub dataset: Dataset,
    pub rejected: Vec<CorpusError>,
}

/// Strict import: the first malformed row aborts with its `SchemaViolation`.
pub fn ingest_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset, CorpusError> {
    let mut report = ingest_dataset_lenient(path, format)?;
    if !report.rejected.is_empty() {
        return Err(report.rejected.swap_remove(0));
    }
    Ok(report.dataset)
}

/// Lenient import: malformed rows are collected instead of failing.
pub fn ingest_dataset_lenient(
    path: &Path,
    format: DatasetFormat,
) -> Result<IngestReport, CorpusError> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_owned();
    let unreadable = |source| CorpusError::UnreadableFile {
        path: path.to_owned(),
        source,
    };
    let file = fs::File::open(path).map_err(unreadable)?;
    let mut raw_rows: Vec<(usize, Result<RawRecord, CorpusError>)> = Vec::new();
    match format {
        DatasetFormat::Jsonl => {
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(unreadable)?;
                if line.trim().is_empty() {
                    continue;
                }
                let row = i + 1;
                let parsed = serde_json::from_str::<RawRecord>(&line).map_err(|e| {
                    CorpusError::SchemaViolation {
                        row,
                        field: json_error_field(&e),
                    }
                });
                raw_rows.push((row, parsed));
            }
        }
        DatasetFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
            for (i, rec) in reader.deserialize::<RawRecord>().enumerate() {
                // header is line 1
                let row = i + 2;
                let parsed = rec.map_err(|_| CorpusError::SchemaViolation {
                    row,
                    field: "record".into(),
                });
                raw_rows.push((row, parsed));
            }
        }
    }

    let mut articles = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = BTreeSet::new();
    for (row, raw) in raw_rows {
        match raw.and_then(|r| r.validate(row, &name)) {
            Ok(a) if !seen.insert(a.id.clone()) => rejected.push(CorpusError::SchemaViolation {
                row,
                field: "id".into(),
            }),
            Ok(a) => articles.push(a),
            Err(e) => rejected.push(e),
        }
    }
    let dataset = Dataset::new(name, articles)?;
    Ok(IngestReport { dataset, rejected })
}

fn json_error_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    msg.split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| "record".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub test_frac: f64,
    pub dev_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.7,
            test_frac: 0.2,
            dev_frac: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        SplitSpec {
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<[f64; 3], CorpusError> {
        let fracs = [self.train_frac, self.test_frac, self.dev_frac];
        if fracs.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(CorpusError::InvalidSplit(format!("{fracs:?}")));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplit(format!("fractions sum to {sum}")));
        }
        Ok(fracs)
    }
}

/// The three parts of a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub dev: Dataset,
}

pub const MIN_SPLIT_SIZE: usize = 10;

/// Largest-remainder apportionment of `total` items over `fractions`.
pub(crate) fn apportion(total: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Per-label counts for each part such that the part totals follow the
/// largest-remainder apportionment of the whole dataset and every cell is the
/// floor or ceiling of its label's quota.
fn stratified_quotas(label_sizes: &[usize], fracs: &[f64; 3]) -> Vec<[usize; 3]> {
    let total: usize = label_sizes.iter().sum();
    let targets = apportion(total, fracs);
    let mut cells: Vec<[usize; 3]> = label_sizes
        .iter()
        .map(|&n| {
            let mut c = [0; 3];
            for s in 0..3 {
                c[s] = (fracs[s] * n as f64).floor() as usize;
            }
            c
        })
        .collect();
    let mut row_left: Vec<usize> = label_sizes
        .iter()
        .zip(&cells)
        .map(|(n, c)| n - c.iter().sum::<usize>())
        .collect();
    let mut col_left: Vec<usize> = (0..3)
        .map(|s| targets[s] - cells.iter().map(|c| c[s]).sum::<usize>())
        .collect();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (l, &n) in label_sizes.iter().enumerate() {
        for (s, f) in fracs.iter().enumerate() {
            let q = f * n as f64;
            candidates.push((q - q.floor(), l, s));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut bumped = vec![[false; 3]; label_sizes.len()];
    // First by fractional remainder, then any open cell, each cell at most once.
    for pass in 0..2 {
        for &(frac, l, s) in &candidates {
            if pass == 0 && frac <= 0.0 {
                continue;
            }
            if row_left[l] > 0 && col_left[s] > 0 && !bumped[l][s] {
                cells[l][s] += 1;
                bumped[l][s] = true;
                row_left[l] -= 1;
                col_left[s] -= 1;
            }
        }
    }
    // Remaining imbalance (not reachable for three parts in practice).
    for l in 0..label_sizes.len() {
        for s in 0..3 {
            while row_left[l] > 0 && col_left[s] > 0 {
                cells[l][s] += 1;
                row_left[l] -= 1;
                col_left[s] -= 1;
            }
        }
    }
    cells
}

/// Stratified, seeded train/test/dev partition.
pub fn split_dataset(d: &Dataset, spec: &SplitSpec) -> Result<Split, CorpusError> {
    let fracs = spec.validate()?;
    if d.len() < MIN_SPLIT_SIZE {
        return Err(CorpusError::TooSmall {
            len: d.len(),
            min: MIN_SPLIT_SIZE,
        });
    }
    let mut by_label: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, a) in d.articles.iter().enumerate() {
        by_label.entry(a.label).or_default().push(i);
    }
    let sizes: Vec<usize> = by_label.values().map(Vec::len).collect();
    let quotas = stratified_quotas(&sizes, &fracs);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut part_of = vec![0usize; d.len()];
    for (indices, quota) in by_label.values_mut().zip(&quotas) {
        indices.shuffle(&mut rng);
        let mut it = indices.iter();
        for (part, &n) in quota.iter().enumerate() {
            for &idx in it.by_ref().take(n) {
                part_of[idx] = part;
            }
        }
    }
    let take = |part: usize, suffix: &str| {
        let articles = d
            .articles
            .iter()
            .zip(&part_of)
            .filter(|(_, &p)| p == part)
            .map(|(a, _)| a.clone())
            .collect();
        Dataset::new(format!("{}/{}", d.name, suffix), articles).expect("ids stay unique")
    };
    Ok(Split {
        train: take(0, "train"),
        test: take(1, "test"),
        dev: take(2, "dev"),
    })
}

/// One scraped search result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceDoc {
    pub url: String,
    pub title: String,
    #[serde(default)]
    pub content: String,
    pub language: String,
    pub position: usize,
    pub source_domain: String,
    #[serde(default = "yes")]
    pub is_html: bool,
}

fn yes() -> bool {
    true
}

impl EvidenceDoc {
    /// Content as seen by the scorers: non-HTML targets have none.
    pub fn effective_content(&self) -> &str {
        if self.is_html {
            &self.content
        } else {
            ""
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QueryKey {
    pub article_id: String,
    pub language: String,
}

impl QueryKey {
    pub fn new(article_id: impl Into<String>, language: impl Into<String>) -> Self {
        QueryKey {
            article_id: article_id.into(),
            language: language.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSnapshot {
    pub query_key: QueryKey,
    pub results: Vec<EvidenceDoc>,
    pub captured_at: String,
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    captured_at: String,
    results: Vec<EvidenceDoc>,
}

/// Snapshot directory: `<root>/<article_id>/<lang>.json`.
///
/// Writes are serialized through an internal lock and land atomically via a
/// rename, so concurrent readers never observe a partial file.
#[derive(Debug)]
pub struct SnapshotStore {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl SnapshotStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SnapshotStore {
            root: root.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &QueryKey) -> PathBuf {
        self.root
            .join(path_component(&key.article_id))
            .join(format!("{}.json", path_component(&key.language)))
    }

    pub fn store(&self, snapshot: &SearchSnapshot) -> Result<PathBuf, CorpusError> {
        for (i, doc) in snapshot.results.iter().enumerate() {
            if doc.position == 0
                || (i > 0 && doc.position <= snapshot.results[i - 1].position)
            {
                return Err(CorpusError::InvalidSnapshot(format!(
                    "result {i} has position {} out of order",
                    doc.position
                )));
            }
        }
        let path = self.path_for(&snapshot.query_key);
        let dir = path.parent().expect("snapshot path has a parent");
        let io = |source| CorpusError::Io {
            path: path.clone(),
            source,
        };
        let body = serde_json::to_string_pretty(&SnapshotFile {
            captured_at: snapshot.captured_at.clone(),
            results: snapshot.results.clone(),
        })
        .expect("snapshot serializes");

        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        fs::create_dir_all(dir).map_err(io)?;
        let tmp = dir.join(format!(
            ".{}.tmp",
            path.file_name().and_then(|f| f.to_str()).unwrap_or("snapshot")
        ));
        fs::write(&tmp, body.as_bytes()).map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)?;
        Ok(path)
    }

    pub fn load(&self, key: &QueryKey) -> Result<SearchSnapshot, CorpusError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CorpusError::MissingSnapshot {
                    article_id: key.article_id.clone(),
                    language: key.language.clone(),
                })
            }
            Err(source) => return Err(CorpusError::Io { path, source }),
        };
        let file: SnapshotFile =
            serde_json::from_str(&text).map_err(|source| CorpusError::Json {
                path: path.clone(),
                source,
            })?;
        Ok(SearchSnapshot {
            query_key: key.clone(),
            results: file.results,
            captured_at: file.captured_at,
        })
    }

    pub fn contains(&self, key: &QueryKey) -> bool {
        self.path_for(key).is_file()
    }

    /// Languages stored for one article, sorted.
    pub fn languages(&self, article_id: &str) -> Vec<String> {
        let dir = self.root.join(path_component(article_id));
        let mut langs: Vec<String> = fs::read_dir(dir)
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json")
                    .filter(|s| !s.starts_with('.'))
                    .map(decode_component)
            })
            .collect();
        langs.sort();
        langs
    }
}

/// Percent-encodes anything outside `[A-Za-z0-9._-]` so ids map to one path segment.
fn path_component(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for b in raw.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'_' | b'-' => out.push(b as char),
            b'.' if raw != "." && raw != ".." => out.push('.'),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

fn decode_component(raw: &str) -> String {
    let bytes = raw.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            let hex = std::str::from_utf8(&bytes[i + 1..i + 3]).ok();
            if let Some(b) = hex.and_then(|h| u8::from_str_radix(h, 16).ok()) {
                out.push(b);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn article(id: usize, label: Label) -> NewsArticle {
        NewsArticle::new(
            format!("a{id}"),
            format!("Title {id}"),
            "",
            "https://www.example.com/x",
            label,
        )
    }

    fn balanced(fake: usize, legit: usize) -> Dataset {
        let articles = (0..fake)
            .map(|i| article(i, Label::Fake))
            .chain((fake..fake + legit).map(|i| article(i, Label::Legit)))
            .collect();
        Dataset::new("toy", articles).unwrap()
    }

    #[test]
    fn hostname_is_lowercased() {
        assert_eq!(
            hostname("https://Edition.CNN.com/2018/x").as_deref(),
            Some("edition.cnn.com")
        );
        assert_eq!(hostname("politifact.com").as_deref(), Some("politifact.com"));
        assert_eq!(hostname(""), None);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Dataset::new("d", vec![article(1, Label::Fake), article(1, Label::Legit)]);
        assert!(matches!(err, Err(CorpusError::SchemaViolation { row: 2, .. })));
    }

    #[test]
    fn apportion_matches_largest_remainder() {
        assert_eq!(apportion(2029, &[0.7, 0.2, 0.1]), vec![1420, 406, 203]);
        assert_eq!(apportion(10, &[0.7, 0.2, 0.1]), vec![7, 2, 1]);
    }

    #[test]
    fn recovery_shaped_split_sizes() {
        let d = balanced(665, 1364);
        let s = split_dataset(&d, &SplitSpec::with_seed(3)).unwrap();
        assert_eq!((s.train.len(), s.test.len(), s.dev.len()), (1420, 406, 203));
    }

    #[test]
    fn split_is_deterministic() {
        let d = balanced(5, 5);
        let a = split_dataset(&d, &SplitSpec::with_seed(7)).unwrap();
        let b = split_dataset(&d, &SplitSpec::with_seed(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_stratifies_labels() {
        let d = balanced(50, 50);
        let s = split_dataset(&d, &SplitSpec::with_seed(11)).unwrap();
        for label in [Label::Fake, Label::Legit] {
            let n = s.train.counts.get(&label).copied().unwrap_or(0);
            assert!((34..=36).contains(&n), "{label}: {n}");
        }
    }

    #[test]
    fn split_too_small() {
        let d = balanced(4, 5);
        assert!(matches!(
            split_dataset(&d, &SplitSpec::default()),
            Err(CorpusError::TooSmall { len: 9, .. })
        ));
    }

    #[test]
    fn bad_fractions_rejected() {
        let spec = SplitSpec {
            train_frac: 0.8,
            ..Default::default()
        };
        assert!(matches!(
            split_dataset(&balanced(10, 10), &spec),
            Err(CorpusError::InvalidSplit(_))
        ));
    }

    #[test]
    fn path_components_round_trip() {
        for raw in ["abc", "a/b", "..", "x y%z", "ü"] {
            let enc = path_component(raw);
            assert!(!enc.contains('/'));
            assert_eq!(decode_component(&enc), raw);
        }
    }

    #[test]
    fn label_parsing() {
        assert_eq!("FAKE".parse::<Label>(), Ok(Label::Fake));
        assert_eq!("true".parse::<Label>(), Ok(Label::Legit));
        assert!("maybe".parse::<Label>().is_err());
    }
}
