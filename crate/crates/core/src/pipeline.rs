//! End-to-end runs: configuration, provider bindings and batch execution.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Dataset, Label, NewsArticle, SnapshotStore};
use crate::credibility::{extract_named_entities, lookup_rank, ne_popularity, PopularityTable, RankTable, SourceRank};
use crate::features::{
    assemble_ce_block, file_safe, punctuation_features, readability_features, ArticleEvidence, EvidencePoint,
    FeatureVector, Scorer,
};
use crate::model::TrainedModel;
use crate::report::{build_report, render_json, render_markdown, ReportConfig, ReportVerdict, ScoredEvidence};
use crate::retrieval::{
    is_language_tag, load_evidence, FixtureSearchProvider, FixtureTranslator, HttpSearchProvider, HttpTranslator,
    QuerySpec, RetrievalOutcome, Retriever, translate_title, SearchProvider, TimeRange, Translator, DEFAULT_LANGUAGES, DEFAULT_TOP_N,
};
use crate::similarity::{
    cosine_news_similarity, nli_news_similarity, CompareMode, Embedder, FixtureNli, HttpEmbedder, HttpNli, NliModel,
    ReferenceEmbedder, RefutationLexicon, ScorerConfig, SimilarityScore, UniformNli,
};

pub const ENV_PREFIX: &str = "MULTIVERSE_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{what} not found: {path}")]
    MissingFile { what: &'static str, path: PathBuf },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{var}: {message}")]
    Env { var: String, message: String },
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {message}")]
    Stage { context: String, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl PipelineError {
    fn stage(context: impl Into<String>, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            context: context.into(),
            message: e.to_string(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.to_owned(),
            message: e.to_string(),
        }
    }
}

fn default_timeout() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TranslatorBinding {
    /// `lang<TAB>source<TAB>translation` table.
    Fixture { path: PathBuf },
    Http {
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    /// Searches with the untranslated title.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchBinding {
    /// JSON lines of `{query, language, results}`.
    Fixture { path: PathBuf },
    /// Previously captured snapshots; no search happens, titles are still translated for scoring.
    Snapshot { dir: PathBuf },
    Http {
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingBinding {
    Reference,
    Http {
        endpoint: String,
        dim: usize,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NliBinding {
    Uniform,
    Fixture { path: PathBuf },
    Http {
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bindings {
    #[serde(default = "identity_translator")]
    pub translator: TranslatorBinding,
    pub search: SearchBinding,
    #[serde(default = "reference_embedding")]
    pub embedding: EmbeddingBinding,
    #[serde(default = "uniform_nli")]
    pub nli: NliBinding,
}

fn identity_translator() -> TranslatorBinding {
    TranslatorBinding::Identity
}

fn reference_embedding() -> EmbeddingBinding {
    EmbeddingBinding::Reference
}

fn uniform_nli() -> NliBinding {
    NliBinding::Uniform
}

fn default_languages() -> Vec<String> {
    DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect()
}

fn default_top_n() -> usize {
    DEFAULT_TOP_N
}

fn default_theta() -> f64 {
    0.5
}

fn default_content_len() -> usize {
    500
}

fn default_workers() -> usize {
    4
}

fn default_report_rows() -> usize {
    3
}

fn default_scorer() -> Scorer {
    Scorer::Embedding
}

/// Everything a run needs. Relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_languages")]
    pub languages: Vec<String>,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default = "default_scorer", with = "scorer_name")]
    pub scorer: Scorer,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_content_len")]
    pub content_len: usize,
    #[serde(default)]
    pub compare: CompareMode,
    pub bindings: Bindings,
    pub rank_table: PathBuf,
    #[serde(default)]
    pub default_rank: Option<u64>,
    #[serde(default)]
    pub popularity_table: Option<PathBuf>,
    /// Directory of `refutation.<lang>.txt` files replacing the built-in lists.
    #[serde(default)]
    pub lexicon_dir: Option<PathBuf>,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Captures search results here when set.
    #[serde(default)]
    pub snapshot_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub time_range: Option<TimeRange>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_report_rows")]
    pub report_rows: usize,
}

mod scorer_name {
    use super::Scorer;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: &Scorer, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(match s {
            Scorer::Embedding => "cosine",
            Scorer::Nli => "nli",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Scorer, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// A config with fixture-free defaults around the given bindings.
    pub fn new(bindings: Bindings, rank_table: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            languages: default_languages(),
            top_n: DEFAULT_TOP_N,
            scorer: Scorer::Embedding,
            theta: 0.5,
            content_len: 500,
            compare: CompareMode::Title,
            bindings,
            rank_table: rank_table.into(),
            default_rank: None,
            popularity_table: None,
            lexicon_dir: None,
            dataset: None,
            snapshot_dir: None,
            model: None,
            time_range: None,
            seed: 0,
            workers: default_workers(),
            report_rows: default_report_rows(),
        }
    }

    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: base.to_owned(),
            message: e.to_string(),
        })?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Parses the file, applies `MULTIVERSE_*` overrides from the process
    /// environment, and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|_| ConfigError::MissingFile {
            what: "config file",
            path: path.to_owned(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml_str(&text, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_owned(),
                message,
            },
            other => other,
        })?;
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.rank_table);
        for p in [
            &mut self.popularity_table,
            &mut self.lexicon_dir,
            &mut self.dataset,
            &mut self.snapshot_dir,
            &mut self.model,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
        if let TranslatorBinding::Fixture { path } = &mut self.bindings.translator {
            resolve(base, path);
        }
        match &mut self.bindings.search {
            SearchBinding::Fixture { path } => resolve(base, path),
            SearchBinding::Snapshot { dir } => resolve(base, dir),
            SearchBinding::Http { .. } => {}
        }
        if let NliBinding::Fixture { path } = &mut self.bindings.nli {
            resolve(base, path);
        }
    }

    /// Applies `MULTIVERSE_<FIELD>` overrides for the scalar fields.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (key, value) in vars {
            let Some(field) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let bad = |message: String| ConfigError::Env {
                var: key.clone(),
                message,
            };
            let num = |v: &str| v.trim().parse::<usize>().map_err(|e| bad(e.to_string()));
            match field {
                "LANGUAGES" => {
                    self.languages = value.split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect()
                }
                "TOP_N" => self.top_n = num(&value)?,
                "SCORER" => self.scorer = value.parse().map_err(bad)?,
                "THETA" => self.theta = value.trim().parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "CONTENT_LEN" => self.content_len = num(&value)?,
                "SEED" => self.seed = value.trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "WORKERS" => self.workers = num(&value)?,
                "REPORT_ROWS" => self.report_rows = num(&value)?,
                "RANK_TABLE" => self.rank_table = PathBuf::from(value),
                "DATASET" => self.dataset = Some(PathBuf::from(value)),
                "MODEL" => self.model = Some(PathBuf::from(value)),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn scorer_config(&self) -> Result<ScorerConfig, ConfigError> {
        let lexicon = match &self.lexicon_dir {
            Some(dir) => RefutationLexicon::load_dir(dir).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => RefutationLexicon::default(),
        };
        Ok(ScorerConfig {
            theta: self.theta,
            content_len: self.content_len,
            lexicon,
            compare: self.compare,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.languages.is_empty() {
            return invalid("languages must not be empty".into());
        }
        for (i, l) in self.languages.iter().enumerate() {
            if !is_language_tag(l) {
                return invalid(format!("`{l}` is not a language tag"));
            }
            if self.languages[..i].contains(l) {
                return invalid(format!("language `{l}` listed twice"));
            }
        }
        if self.top_n == 0 || self.top_n > 100 {
            return invalid(format!("top_n {} outside 1..=100", self.top_n));
        }
        if self.workers == 0 {
            return invalid("workers must be at least 1".into());
        }
        if self.report_rows == 0 || self.report_rows > self.top_n {
            return invalid(format!("report_rows must be in 1..={}", self.top_n));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return invalid(format!("theta {} outside (0, 1)", self.theta));
        }
        if self.content_len == 0 {
            return invalid("content_len must be positive".into());
        }
        let must_exist = |what: &'static str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingFile { what, path: p.to_owned() })
            }
        };
        must_exist("rank table", &self.rank_table)?;
        if let Some(p) = &self.popularity_table {
            must_exist("popularity table", p)?;
        }
        if let Some(p) = &self.lexicon_dir {
            must_exist("lexicon directory", p)?;
        }
        if let Some(p) = &self.dataset {
            must_exist("dataset", p)?;
        }
        if let Some(p) = &self.model {
            must_exist("model", p)?;
        }
        if let TranslatorBinding::Fixture { path } = &self.bindings.translator {
            must_exist("translation fixture", path)?;
        }
        match &self.bindings.search {
            SearchBinding::Fixture { path } => must_exist("search fixture", path)?,
            SearchBinding::Snapshot { dir } => must_exist("snapshot directory", dir)?,
            SearchBinding::Http { .. } => {}
        }
        if let NliBinding::Fixture { path } = &self.bindings.nli {
            must_exist("NLI fixture", path)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// Digests of every input file the config references.
    pub fn fixture_digests(&self) -> BTreeMap<String, String> {
        let mut files: Vec<PathBuf> = vec![self.rank_table.clone()];
        files.extend(self.popularity_table.clone());
        files.extend(self.dataset.clone());
        files.extend(self.model.clone());
        if let TranslatorBinding::Fixture { path } = &self.bindings.translator {
            files.push(path.clone());
        }
        if let SearchBinding::Fixture { path } = &self.bindings.search {
            files.push(path.clone());
        }
        if let NliBinding::Fixture { path } = &self.bindings.nli {
            files.push(path.clone());
        }
        if let Some(dir) = &self.lexicon_dir {
            if let Ok(rd) = fs::read_dir(dir) {
                let mut entries: Vec<PathBuf> = rd.flatten().map(|e| e.path()).filter(|p| p.is_file()).collect();
                entries.sort();
                files.extend(entries);
            }
        }
        files
            .into_iter()
            .filter_map(|p| fs::read(&p).ok().map(|b| (p.display().to_string(), sha256_hex(&b))))
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Live provider objects built from a config.
pub struct Providers {
    pub translator: Box<dyn Translator>,
    pub search: Option<Box<dyn SearchProvider>>,
    pub snapshots: Option<SnapshotStore>,
    pub embedder: Box<dyn Embedder>,
    pub nli: Box<dyn NliModel>,
    pub ranks: RankTable,
    pub popularity: Option<PopularityTable>,
    pub scorer: ScorerConfig,
}

impl Providers {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let t = |secs: u64| Duration::from_secs(secs);
        let translator: Box<dyn Translator> = match &cfg.bindings.translator {
            TranslatorBinding::Fixture { path } => {
                Box::new(FixtureTranslator::from_tsv(path).map_err(|e| PipelineError::stage("translator", e))?)
            }
            TranslatorBinding::Http { endpoint, timeout_secs } => {
                Box::new(HttpTranslator::new(endpoint.clone(), &cfg.languages, t(*timeout_secs)))
            }
            TranslatorBinding::Identity => Box::new(FixtureTranslator::new()),
        };
        let (search, snapshots): (Option<Box<dyn SearchProvider>>, Option<SnapshotStore>) = match &cfg.bindings.search {
            SearchBinding::Fixture { path } => (
                Some(Box::new(FixtureSearchProvider::from_jsonl(path).map_err(|e| PipelineError::stage("search", e))?)),
                cfg.snapshot_dir.as_ref().map(SnapshotStore::new),
            ),
            SearchBinding::Http { endpoint, timeout_secs } => (
                Some(Box::new(HttpSearchProvider::new(endpoint.clone(), t(*timeout_secs)))),
                cfg.snapshot_dir.as_ref().map(SnapshotStore::new),
            ),
            SearchBinding::Snapshot { dir } => (None, Some(SnapshotStore::new(dir))),
        };
        let embedder: Box<dyn Embedder> = match &cfg.bindings.embedding {
            EmbeddingBinding::Reference => Box::new(ReferenceEmbedder::default()),
            EmbeddingBinding::Http {
                endpoint,
                dim,
                timeout_secs,
            } => Box::new(HttpEmbedder::new(endpoint.clone(), *dim, t(*timeout_secs))),
        };
        let nli: Box<dyn NliModel> = match &cfg.bindings.nli {
            NliBinding::Uniform => Box::new(UniformNli),
            NliBinding::Fixture { path } => {
                Box::new(FixtureNli::from_jsonl(path).map_err(|e| PipelineError::stage("nli", e))?)
            }
            NliBinding::Http { endpoint, timeout_secs } => Box::new(HttpNli::new(endpoint.clone(), t(*timeout_secs))),
        };
        let ranks = RankTable::from_tsv(&cfg.rank_table, cfg.default_rank).map_err(|e| PipelineError::stage("rank table", e))?;
        let popularity = match &cfg.popularity_table {
            Some(p) => Some(PopularityTable::from_tsv(p).map_err(|e| PipelineError::stage("popularity table", e))?),
            None => None,
        };
        Ok(Providers {
            translator,
            search,
            snapshots,
            embedder,
            nli,
            ranks,
            popularity,
            scorer: cfg.scorer_config()?,
        })
    }

    /// Steps 1-3 for one article.
    pub fn retrieve(&self, cfg: &PipelineConfig, article: &NewsArticle) -> Result<RetrievalOutcome, PipelineError> {
        match &self.search {
            Some(search) => {
                let mut r = Retriever::new(self.translator.as_ref(), search.as_ref());
                if let Some(store) = &self.snapshots {
                    r = r.with_store(store);
                }
                // fixture captures get a fixed stamp so replays hash the same
                if matches!(cfg.bindings.search, SearchBinding::Fixture { .. }) {
                    r.captured_at = Some("fixture".into());
                }
                let spec = QuerySpec {
                    article_id: article.id.clone(),
                    languages: cfg.languages.clone(),
                    top_n: cfg.top_n,
                    time_range: cfg.time_range.clone(),
                };
                r.retrieve(article, &spec).map_err(|e| PipelineError::stage(format!("retrieve {}", article.id), e))
            }
            None => {
                let store = self.snapshots.as_ref().expect("snapshot binding has a store");
                let mut out = load_evidence(store, article, &cfg.languages, cfg.top_n);
                // snapshots carry results only; queries are rebuilt for scoring
                for lang in cfg.languages.iter().filter(|l| !out.failures.contains_key(*l)) {
                    if let Ok((q, _)) = translate_title(article, lang, self.translator.as_ref()) {
                        out.queries.push(q);
                    }
                }
                if out.failures.len() == cfg.languages.len() {
                    return Err(PipelineError::stage(
                        format!("retrieve {}", article.id),
                        "no snapshots for any language",
                    ));
                }
                Ok(out)
            }
        }
    }

    /// Step 4: similarity and source rank for every retrieved document.
    pub fn score(
        &self,
        article: &NewsArticle,
        outcome: &RetrievalOutcome,
        scorer: Scorer,
    ) -> Result<Vec<ScoredEvidence>, PipelineError> {
        let mut out = Vec::with_capacity(outcome.total_docs());
        for (lang, docs) in &outcome.evidence {
            let query = outcome
                .query(lang)
                .map(|q| q.text.clone())
                .unwrap_or_else(|| article.title.clone());
            for doc in docs {
                let ctx = || format!("score {} {lang}#{}", article.id, doc.position);
                let sim = match scorer {
                    Scorer::Embedding => {
                        cosine_news_similarity(article, &query, doc, lang, &self.scorer, self.embedder.as_ref())
                            .map_err(|e| PipelineError::stage(ctx(), e))?
                            .score
                    }
                    Scorer::Nli => SimilarityScore::clamped(
                        nli_news_similarity(article, doc, &self.scorer, self.nli.as_ref())
                            .map_err(|e| PipelineError::stage(ctx(), e))?
                            .entailment,
                    ),
                };
                let rank = lookup_rank(&doc.url, &self.ranks)
                    .unwrap_or_else(|_| SourceRank::missing(self.ranks.default_rank()));
                out.push(ScoredEvidence {
                    doc: doc.clone(),
                    point: EvidencePoint {
                        language: lang.clone(),
                        position: doc.position,
                        sim,
                        rank,
                    },
                });
            }
        }
        Ok(out)
    }

    pub fn ne_popularity(&self, article: &NewsArticle) -> Option<f64> {
        self.popularity
            .as_ref()
            .map(|t| ne_popularity(&extract_named_entities(&article.title, &article.content), t).aggregate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticleStatus {
    Ok,
    Failed,
}

/// Per-article manifest, also used to skip finished work on restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleManifest {
    pub article_id: String,
    pub config_digest: String,
    pub status: ArticleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub pairs: usize,
    #[serde(default)]
    pub language_failures: BTreeMap<String, String>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<ReportVerdict>,
    /// SHA-256 over the article's output files.
    pub output_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub articles: usize,
    pub ok: usize,
    pub failed: usize,
    pub pairs: usize,
}

/// Hashed part of the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_digest: String,
    pub seed: u64,
    pub scorer: String,
    pub fixture_digests: BTreeMap<String, String>,
    pub articles: Vec<ArticleManifest>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub record: RunRecord,
    /// SHA-256 of `record`; timestamps are excluded.
    pub manifest_hash: String,
    pub started_at: String,
    pub finished_at: String,
    pub skipped: usize,
}

/// Stored per article under `features/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleFeatures {
    pub article_id: String,
    pub label: Label,
    pub features: FeatureVector,
    pub evidence: ArticleEvidence,
}

/// Output locations of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputTree {
    pub root: PathBuf,
}

impl OutputTree {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputTree { root: root.into() }
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn evidence(&self) -> PathBuf {
        self.root.join("features").join("evidence")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn manifests(&self) -> PathBuf {
        self.root.join("manifests")
    }

    pub fn create(&self) -> Result<(), PipelineError> {
        for d in [self.features(), self.evidence(), self.reports(), self.models(), self.manifests()] {
            fs::create_dir_all(&d).map_err(|e| PipelineError::io(&d, e))?;
        }
        Ok(())
    }

    pub fn article_manifest(&self, id: &str) -> PathBuf {
        self.manifests().join(format!("{}.json", file_safe(id)))
    }

    pub fn run_manifest(&self) -> PathBuf {
        self.manifests().join("run.json")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

/// Model inputs are looked up by feature name among the CE block and the
/// text-only blocks computed here.
pub fn verdict_for(model: &TrainedModel, article: &NewsArticle, ce: &FeatureVector, ne: Option<f64>) -> Result<ReportVerdict, String> {
    let text = format!("{}\n{}", article.title, article.content);
    let mut named: BTreeMap<String, f64> = ce.iter().map(|(n, v)| (n.to_owned(), v)).collect();
    named.extend(punctuation_features(&text).iter().map(|(n, v)| (n.to_owned(), v)));
    if let Ok(r) = readability_features(&text) {
        named.extend(r.iter().map(|(n, v)| (n.to_owned(), v)));
    }
    named.insert("ne_popularity".into(), ne.unwrap_or(0.0));
    let row = model
        .feature_names
        .iter()
        .map(|n| named.get(n).copied().ok_or_else(|| format!("model feature `{n}` is not available per article")))
        .collect::<Result<Vec<f64>, String>>()?;
    Ok(ReportVerdict::from_model(model, &row))
}

fn process_article(
    cfg: &PipelineConfig,
    providers: &Providers,
    model: Option<&TrainedModel>,
    out: &OutputTree,
    article: &NewsArticle,
    config_digest: &str,
) -> ArticleManifest {
    let mut manifest = ArticleManifest {
        article_id: article.id.clone(),
        config_digest: config_digest.to_owned(),
        status: ArticleStatus::Ok,
        error: None,
        pairs: 0,
        language_failures: BTreeMap::new(),
        warnings: Vec::new(),
        verdict: None,
        output_digest: String::new(),
    };
    let result = (|| -> Result<(), PipelineError> {
        let outcome = providers.retrieve(cfg, article)?;
        manifest.language_failures = outcome.failures.clone();
        manifest.warnings = outcome.warnings.clone();
        let scored = providers.score(article, &outcome, cfg.scorer)?;
        manifest.pairs = scored.len();
        let points: Vec<EvidencePoint> = scored.iter().map(|s| s.point.clone()).collect();
        let ce = assemble_ce_block(&points, &cfg.languages, cfg.top_n).map_err(|e| PipelineError::stage(&article.id, e))?;
        let ne = providers.ne_popularity(article);
        let mut evidence = ArticleEvidence {
            ne_popularity: ne,
            ..Default::default()
        };
        match cfg.scorer {
            Scorer::Embedding => evidence.embedding = Some(points),
            Scorer::Nli => evidence.nli = Some(points),
        }
        if let Some(m) = model {
            manifest.verdict = Some(verdict_for(m, article, &ce, ne).map_err(|e| PipelineError::stage(&article.id, e))?);
        }
        let report_cfg = ReportConfig {
            k: cfg.report_rows,
            languages: cfg.languages.clone(),
        };
        let report = build_report(article, &scored, &report_cfg, Some(providers.translator.as_ref()), manifest.verdict)
            .map_err(|e| PipelineError::stage(&article.id, e))?;
        let safe = file_safe(&article.id);
        let features = serde_json::to_string_pretty(&ArticleFeatures {
            article_id: article.id.clone(),
            label: article.label,
            features: ce,
            evidence: evidence.clone(),
        })
        .expect("features serialize");
        let md = render_markdown(&report);
        let json = render_json(&report);
        let evidence_json = serde_json::to_string_pretty(&serde_json::json!({
            "article_id": article.id,
            "embedding": evidence.embedding,
            "nli": evidence.nli,
            "ne_popularity": evidence.ne_popularity,
        }))
        .expect("evidence serializes");
        write(&out.features().join(format!("{safe}.json")), features.as_bytes())?;
        write(&out.evidence().join(format!("{safe}.json")), evidence_json.as_bytes())?;
        write(&out.reports().join(format!("{safe}.md")), md.as_bytes())?;
        write(&out.reports().join(format!("{safe}.json")), json.as_bytes())?;
        let mut h = Sha256::new();
        for part in [features.as_bytes(), md.as_bytes(), json.as_bytes()] {
            h.update(part);
        }
        manifest.output_digest = hex::encode(h.finalize());
        Ok(())
    })();
    if let Err(e) = result {
        manifest.status = ArticleStatus::Failed;
        manifest.error = Some(e.to_string());
    }
    manifest
}

fn finished(out: &OutputTree, id: &str, digest: &str) -> Option<ArticleManifest> {
    let text = fs::read_to_string(out.article_manifest(id)).ok()?;
    let m: ArticleManifest = serde_json::from_str(&text).ok()?;
    (m.status == ArticleStatus::Ok && m.config_digest == digest).then_some(m)
}

/// Runs Steps 1-5 over `dataset`, writing `features/`, `reports/` and
/// `manifests/` under `out`. Articles fail independently; finished articles
/// with a matching config digest are skipped.
pub fn run_pipeline(cfg: &PipelineConfig, dataset: &Dataset, out: &OutputTree) -> Result<PipelineRun, PipelineError> {
    cfg.validate()?;
    out.create()?;
    let started_at = now();
    let providers = Providers::from_config(cfg)?;
    let model = match &cfg.model {
        Some(p) => Some(TrainedModel::load(p).map_err(|e| PipelineError::stage("model", e))?),
        None => None,
    };
    let digest = cfg.digest();
    let results: Mutex<Vec<Option<ArticleManifest>>> = Mutex::new(vec![None; dataset.len()]);
    let skipped = AtomicUsize::new(0);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.min(dataset.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(article) = dataset.articles.get(i) else {
                    break;
                };
                let m = match finished(out, &article.id, &digest) {
                    Some(m) => {
                        skipped.fetch_add(1, Ordering::Relaxed);
                        m
                    }
                    None => {
                        let m = process_article(cfg, &providers, model.as_ref(), out, article, &digest);
                        let body = serde_json::to_string_pretty(&m).expect("manifest serializes");
                        // a failed write only costs a redo on restart
                        let _ = fs::write(out.article_manifest(&article.id), body);
                        m
                    }
                };
                results.lock().expect("results lock")[i] = Some(m);
            });
        }
    });
    let articles: Vec<ArticleManifest> = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|m| m.expect("every article processed"))
        .collect();
    write_feature_csv(out, &articles)?;
    let ok = articles.iter().filter(|m| m.status == ArticleStatus::Ok).count();
    let record = RunRecord {
        config_digest: digest,
        seed: cfg.seed,
        scorer: match cfg.scorer {
            Scorer::Embedding => "cosine".into(),
            Scorer::Nli => "nli".into(),
        },
        fixture_digests: cfg.fixture_digests(),
        summary: RunSummary {
            articles: articles.len(),
            ok,
            failed: articles.len() - ok,
            pairs: articles.iter().map(|m| m.pairs).sum(),
        },
        articles,
    };
    let manifest = RunManifest {
        manifest_hash: sha256_hex(serde_json::to_string(&record).expect("record serializes").as_bytes()),
        record,
        started_at,
        finished_at: now(),
        skipped: skipped.into_inner(),
    };
    let path = out.run_manifest();
    write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes").as_bytes())?;
    Ok(PipelineRun {
        manifest,
        manifest_path: path,
    })
}

/// Collects per-article CE vectors into `features/ce.csv`.
fn write_feature_csv(out: &OutputTree, articles: &[ArticleManifest]) -> Result<(), PipelineError> {
    let mut names: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for m in articles.iter().filter(|m| m.status == ArticleStatus::Ok) {
        let path = out.features().join(format!("{}.json", file_safe(&m.article_id)));
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        let f: ArticleFeatures = serde_json::from_str(&text).map_err(|e| PipelineError::io(&path, e))?;
        if names.is_none() {
            names = Some(f.features.names().to_vec());
        }
        ids.push(f.article_id);
        labels.push(f.label);
        rows.push(f.features.into_values());
    }
    let Some(names) = names else {
        return Ok(());
    };
    let matrix = crate::features::FeatureMatrix { names, rows, ids };
    let path = out.features().join("ce.csv");
    matrix.write_csv(&path, &labels).map_err(|e| PipelineError::io(&path, e))
}

/// Loads the evidence store written by a previous run.
pub fn load_run_evidence(out: &OutputTree) -> Result<crate::features::EvidenceStore, PipelineError> {
    crate::features::EvidenceStore::read_dir(&out.evidence()).map_err(|e| PipelineError::io(&out.evidence(), e))
}
