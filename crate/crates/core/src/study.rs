//! Human annotation study: assignment, records, agreement and accuracy.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EvidenceDoc, Label, NewsArticle};
use crate::retrieval::Translator;

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("infeasible plan: {annotators} annotators x {per_annotator} != {articles} articles x {per_article}")]
    InfeasiblePlan {
        annotators: usize,
        per_annotator: usize,
        articles: usize,
        per_article: usize,
    },
    #[error("no records")]
    NoRecords,
    #[error("need at least two items with two or more ratings")]
    InsufficientData,
    #[error("no gold label for article `{0}`")]
    MissingGold(String),
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("unknown article `{0}`")]
    UnknownArticle(String),
    #[error("`{annotator}` is not assigned to article `{article}`")]
    NotAssigned { annotator: String, article: String },
    #[error("{remaining} pairs of `{article}` still unlabeled")]
    PairsIncomplete { article: String, remaining: usize },
    #[error("invalid study: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Log { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairLabel {
    #[serde(alias = "support")]
    Support,
    #[serde(alias = "refute")]
    Refute,
    #[serde(alias = "not_enough_info", alias = "nei", alias = "NEI")]
    NotEnoughInfo,
}

impl PairLabel {
    pub const ALL: [PairLabel; 3] = [PairLabel::Support, PairLabel::Refute, PairLabel::NotEnoughInfo];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    #[serde(alias = "Fake")]
    Fake,
    #[serde(alias = "Legit", alias = "true", alias = "real")]
    Legit,
}

impl From<Verdict> for Label {
    fn from(v: Verdict) -> Label {
        match v {
            Verdict::Fake => Label::Fake,
            Verdict::Legit => Label::Legit,
        }
    }
}

/// One task per evidence document, with English renderings of foreign
/// titles when the translator has them.
pub fn tasks_for_article(
    article: &NewsArticle,
    evidence: &[EvidenceDoc],
    translator: Option<&dyn Translator>,
) -> Vec<AnnotationTask> {
    evidence
        .iter()
        .map(|doc| {
            let translation = if doc.language == "en" {
                None
            } else {
                translator
                    .and_then(|t| t.translate(&doc.title, &doc.language, "en").ok())
                    .filter(|t| !t.fallback)
                    .map(|t| t.text)
            };
            AnnotationTask::new(article.clone(), doc.clone(), translation)
        })
        .collect()
}

/// One original/evidence pair shown to annotators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub original: NewsArticle,
    pub evidence: EvidenceDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<String>,
}

impl AnnotationTask {
    pub fn new(original: NewsArticle, evidence: EvidenceDoc, translation: Option<String>) -> Self {
        AnnotationTask {
            task_id: format!("{}:{}:{}", original.id, evidence.language, evidence.position),
            original,
            evidence,
            translation,
        }
    }

    pub fn article_id(&self) -> &str {
        &self.original.id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub task_id: String,
    pub annotator_id: String,
    pub label: PairLabel,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub article_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub articles_per_annotator: usize,
    pub annotators_per_article: usize,
    pub seed: u64,
    /// Annotator id to assigned article ids, in presentation order.
    pub assignment: BTreeMap<String, Vec<String>>,
}

impl StudyPlan {
    pub fn annotators_for(&self, article_id: &str) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, arts)| arts.iter().any(|a| a == article_id))
            .map(|(ann, _)| ann.as_str())
            .collect()
    }

    pub fn is_assigned(&self, annotator: &str, article_id: &str) -> bool {
        self.assignment
            .get(annotator)
            .is_some_and(|arts| arts.iter().any(|a| a == article_id))
    }
}

/// Seeded balanced assignment: the shuffled article list is repeated
/// `per_article` times and cut into consecutive windows of `per_annotator`,
/// so nobody sees an article twice and every article gets exactly
/// `per_article` annotators.
pub fn create_study(
    articles: &[String],
    annotators: &[String],
    per_annotator: usize,
    per_article: usize,
    seed: u64,
) -> Result<StudyPlan, StudyError> {
    let infeasible = || StudyError::InfeasiblePlan {
        annotators: annotators.len(),
        per_annotator,
        articles: articles.len(),
        per_article,
    };
    if annotators.len() * per_annotator != articles.len() * per_article
        || per_annotator > articles.len()
        || per_article > annotators.len()
        || articles.is_empty()
    {
        return Err(infeasible());
    }
    let uniq: BTreeSet<&String> = articles.iter().collect();
    let uniq_ann: BTreeSet<&String> = annotators.iter().collect();
    if uniq.len() != articles.len() || uniq_ann.len() != annotators.len() {
        return Err(StudyError::Invalid("duplicate article or annotator id".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<String> = articles.to_vec();
    order.shuffle(&mut rng);
    let mut people: Vec<String> = annotators.to_vec();
    people.shuffle(&mut rng);
    let slots: Vec<&String> = order.iter().cycle().take(articles.len() * per_article).collect();
    let assignment = people
        .into_iter()
        .zip(slots.chunks(per_annotator))
        .map(|(ann, chunk)| (ann, chunk.iter().map(|s| (*s).clone()).collect()))
        .collect();
    Ok(StudyPlan {
        articles_per_annotator: per_annotator,
        annotators_per_article: per_article,
        seed,
        assignment,
    })
}

fn strict_majority<T: Copy + Ord>(items: &[T]) -> Result<Option<T>, StudyError> {
    if items.is_empty() {
        return Err(StudyError::NoRecords);
    }
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    for &i in items {
        *counts.entry(i).or_insert(0) += 1;
    }
    Ok(counts
        .into_iter()
        .find(|(_, c)| 2 * c > items.len())
        .map(|(v, _)| v))
}

/// Strict majority; anything else is `NotEnoughInfo`.
pub fn majority_label(labels: &[PairLabel]) -> Result<PairLabel, StudyError> {
    Ok(strict_majority(labels)?.unwrap_or(PairLabel::NotEnoughInfo))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictVote {
    Fake,
    Legit,
    Undecided,
}

pub fn majority_verdict(verdicts: &[Verdict]) -> Result<VerdictVote, StudyError> {
    Ok(match strict_majority(verdicts)? {
        Some(Verdict::Fake) => VerdictVote::Fake,
        Some(Verdict::Legit) => VerdictVote::Legit,
        None => VerdictVote::Undecided,
    })
}

const MISSING: u8 = u8::MAX;

/// Nominal Krippendorff's alpha over coded ratings.
///
/// `cells` is row-major `annotators x items`; `u8::MAX` marks a missing
/// rating. Uses the coincidence-matrix identities
/// `sum_{c!=k} o_ck = sum_u (m_u^2 - sum_c n_uc^2) / (m_u - 1)` and
/// `sum_{c!=k} n_c n_k = n^2 - sum_c n_c^2`.
pub fn krippendorff_alpha_codes(cells: &[u8], annotators: usize, items: usize) -> Result<f64, StudyError> {
    assert_eq!(cells.len(), annotators * items, "matrix shape");
    // slot 255 absorbs missing cells so the counting loops stay branch-free
    let mut totals = [0u32; 256];
    let mut per_item = [0u32; 256];
    let mut used_codes = [0u8; 255];
    let mut used = 0usize;
    let mut disagreement = 0.0;
    let mut pairable_items = 0;
    let mut n = 0u64;
    for u in 0..items {
        let column = (0..annotators).map(|a| cells[a * items + u]);
        let mut m = 0u32;
        for v in column.clone() {
            per_item[v as usize] += 1;
            m += u32::from(v != MISSING);
        }
        if m >= 2 {
            pairable_items += 1;
            n += m as u64;
            // sum_c n_uc^2 == sum over the unit's ratings of n_u(rating)
            let mut sq = 0u64;
            for v in column.clone() {
                sq += u64::from(v != MISSING) * per_item[v as usize] as u64;
                if v != MISSING && totals[v as usize] == 0 {
                    used_codes[used] = v;
                    used += 1;
                }
                totals[v as usize] += 1;
            }
            disagreement += ((m as u64 * m as u64) - sq) as f64 / (m - 1) as f64;
        }
        for v in column {
            per_item[v as usize] = 0;
        }
    }
    if pairable_items < 2 {
        return Err(StudyError::InsufficientData);
    }
    if disagreement == 0.0 || used < 2 {
        return Ok(1.0);
    }
    let sum_sq: u64 = used_codes[..used].iter().map(|&v| totals[v as usize] as u64 * totals[v as usize] as u64).sum();
    let expected = (n * n - sum_sq) as f64;
    Ok(1.0 - (n as f64 - 1.0) * disagreement / expected)
}

/// Nominal Krippendorff's alpha over `annotators x items`; `None` cells are
/// ignored. Perfect agreement gives 1.0.
pub fn krippendorff_alpha<T: Ord>(matrix: &[Vec<Option<T>>]) -> Result<f64, StudyError> {
    let items = matrix.iter().map(Vec::len).max().unwrap_or(0);
    let mut codes: BTreeMap<&T, u8> = BTreeMap::new();
    let mut cells = vec![MISSING; matrix.len() * items];
    for (a, row) in matrix.iter().enumerate() {
        for (u, v) in row.iter().enumerate() {
            if let Some(v) = v {
                let next = codes.len();
                if next >= MISSING as usize {
                    return Err(StudyError::Invalid("more than 254 distinct values".into()));
                }
                let code = *codes.entry(v).or_insert(next as u8);
                cells[a * items + u] = code;
            }
        }
    }
    krippendorff_alpha_codes(&cells, matrix.len(), items)
}

pub type AnswerCounts = BTreeMap<PairLabel, usize>;

/// Answer counts per evidence language, split by the original's gold label.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LanguageDistribution {
    pub fake: BTreeMap<String, AnswerCounts>,
    pub legit: BTreeMap<String, AnswerCounts>,
    /// Records whose task or gold label could not be resolved.
    pub excluded: usize,
}

impl LanguageDistribution {
    pub fn total(&self) -> usize {
        self.fake
            .values()
            .chain(self.legit.values())
            .flat_map(|c| c.values())
            .sum::<usize>()
            + self.excluded
    }

    pub fn count(&self, gold: Label, language: &str, answer: PairLabel) -> usize {
        let side = match gold {
            Label::Fake => &self.fake,
            _ => &self.legit,
        };
        side.get(language).and_then(|c| c.get(&answer)).copied().unwrap_or(0)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Label | Language | Support | Refute | NotEnoughInfo |\n|---|---|---|---|---|\n");
        for (name, side) in [("fake", &self.fake), ("legit", &self.legit)] {
            for (lang, c) in side {
                let g = |l| c.get(&l).copied().unwrap_or(0);
                out.push_str(&format!(
                    "| {name} | {lang} | {} | {} | {} |\n",
                    g(PairLabel::Support),
                    g(PairLabel::Refute),
                    g(PairLabel::NotEnoughInfo)
                ));
            }
        }
        out
    }
}

fn zero_counts() -> AnswerCounts {
    PairLabel::ALL.iter().map(|&l| (l, 0)).collect()
}

/// `index` maps task id to (evidence language, gold label of the original).
pub fn language_distribution(
    records: &[AnnotationRecord],
    index: &HashMap<String, (String, Label)>,
) -> LanguageDistribution {
    let mut d = LanguageDistribution::default();
    for (lang, _) in index.values() {
        d.fake.entry(lang.clone()).or_insert_with(zero_counts);
        d.legit.entry(lang.clone()).or_insert_with(zero_counts);
    }
    for r in records {
        let side = match index.get(&r.task_id) {
            Some((lang, Label::Fake)) => d.fake.get_mut(lang),
            Some((lang, Label::Legit)) => d.legit.get_mut(lang),
            _ => None,
        };
        match side {
            Some(c) => *c.entry(r.label).or_insert(0) += 1,
            None => d.excluded += 1,
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Fraction of all verdicts matching gold.
    pub overall: f64,
    /// Mean of per-annotator accuracies.
    pub mean_per_annotator: f64,
    pub per_annotator: BTreeMap<String, f64>,
}

pub fn annotator_accuracy(
    verdicts: &[VerdictRecord],
    gold: &HashMap<String, Label>,
) -> Result<AccuracyReport, StudyError> {
    if verdicts.is_empty() {
        return Err(StudyError::NoRecords);
    }
    let mut per: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut hits = 0;
    for v in verdicts {
        let g = gold
            .get(&v.article_id)
            .filter(|l| **l != Label::Unknown)
            .ok_or_else(|| StudyError::MissingGold(v.article_id.clone()))?;
        let ok = Label::from(v.verdict) == *g;
        hits += ok as usize;
        let e = per.entry(v.annotator_id.clone()).or_insert((0, 0));
        e.0 += ok as usize;
        e.1 += 1;
    }
    let per_annotator: BTreeMap<String, f64> = per
        .into_iter()
        .map(|(a, (h, n))| (a, h as f64 / n as f64))
        .collect();
    Ok(AccuracyReport {
        overall: hits as f64 / verdicts.len() as f64,
        mean_per_annotator: per_annotator.values().sum::<f64>() / per_annotator.len() as f64,
        per_annotator,
    })
}

/// Everything needed to (re)open a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDefinition {
    pub id: String,
    pub plan: StudyPlan,
    pub tasks: Vec<AnnotationTask>,
}

impl StudyDefinition {
    /// Builds a plan over the articles present in `tasks`.
    pub fn new(
        id: impl Into<String>,
        tasks: Vec<AnnotationTask>,
        annotators: &[String],
        per_annotator: usize,
        per_article: usize,
        seed: u64,
    ) -> Result<Self, StudyError> {
        let mut articles: Vec<String> = Vec::new();
        for t in &tasks {
            if !articles.iter().any(|a| a == t.article_id()) {
                articles.push(t.article_id().to_owned());
            }
        }
        let plan = create_study(&articles, annotators, per_annotator, per_article, seed)?;
        let def = StudyDefinition {
            id: id.into(),
            plan,
            tasks,
        };
        def.validate()?;
        Ok(def)
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        let mut ids = BTreeSet::new();
        for t in &self.tasks {
            if !ids.insert(t.task_id.as_str()) {
                return Err(StudyError::Invalid(format!("duplicate task `{}`", t.task_id)));
            }
            if t.evidence.position == 0 || t.evidence.position > 10 {
                return Err(StudyError::Invalid(format!("task `{}` has position {}", t.task_id, t.evidence.position)));
            }
        }
        let articles: BTreeSet<&str> = self.tasks.iter().map(|t| t.article_id()).collect();
        for (ann, arts) in &self.plan.assignment {
            if let Some(a) = arts.iter().find(|a| !articles.contains(a.as_str())) {
                return Err(StudyError::Invalid(format!("`{ann}` assigned unknown article `{a}`")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StudyError> {
        let err = |message: String| StudyError::Log {
            path: path.to_owned(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let def: StudyDefinition = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        def.validate()?;
        Ok(def)
    }

    pub fn save(&self, path: &Path) -> Result<(), StudyError> {
        let body = serde_json::to_string_pretty(self).expect("study serializes");
        fs::write(path, body).map_err(|e| StudyError::Log {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }
}

/// One line of the record log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Label(AnnotationRecord),
    Verdict(VerdictRecord),
}

/// Append-only JSON-lines log. Replay keeps the last record per key.
#[derive(Debug)]
pub struct RecordLog {
    path: PathBuf,
    file: File,
    lines: usize,
}

impl RecordLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<(Self, Vec<LogEntry>), StudyError> {
        let path = path.into();
        let err = |message: String| StudyError::Log {
            path: path.clone(),
            message,
        };
        let mut entries = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(|e| err(e.to_string()))?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| err(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                entries.push(serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| err(e.to_string()))?;
        let lines = entries.len();
        Ok((RecordLog { path, file, lines }, entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn append(&mut self, entry: &LogEntry) -> Result<(), StudyError> {
        let mut line = serde_json::to_string(entry).expect("entry serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| StudyError::Log {
                path: self.path.clone(),
                message: e.to_string(),
            })?;
        self.lines += 1;
        Ok(())
    }

    /// Rewrites the log with only the live entries.
    pub fn compact(&mut self, live: &[LogEntry]) -> Result<(), StudyError> {
        let err = |message: String| StudyError::Log {
            path: self.path.clone(),
            message,
        };
        let tmp = self.path.with_extension("jsonl.tmp");
        {
            let mut f = File::create(&tmp).map_err(|e| err(e.to_string()))?;
            for e in live {
                writeln!(f, "{}", serde_json::to_string(e).expect("entry serializes")).map_err(|e| err(e.to_string()))?;
            }
            f.sync_all().map_err(|e| err(e.to_string()))?;
        }
        fs::rename(&tmp, &self.path).map_err(|e| err(e.to_string()))?;
        self.file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| err(e.to_string()))?;
        self.lines = live.len();
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NextTask {
    Label { task: AnnotationTask, article_position: usize, remaining_pairs: usize },
    Verdict { article_id: String, original: NewsArticle },
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub task_id: String,
    pub annotator_id: String,
    pub label: PairLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSubmission {
    pub article_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome<R> {
    pub record: R,
    /// True when this record supersedes an earlier one for the same key.
    pub superseded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub labels: Completion,
    pub verdicts: Completion,
    pub per_annotator: BTreeMap<String, Completion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyStats {
    /// Agreement over pair labels (annotators x tasks).
    pub alpha: Option<f64>,
    /// Agreement over final verdicts (annotators x articles).
    pub verdict_alpha: Option<f64>,
    pub distributions: LanguageDistribution,
    pub accuracy: Option<AccuracyReport>,
    pub majority_labels: BTreeMap<String, PairLabel>,
    pub majority_verdicts: BTreeMap<String, VerdictVote>,
    pub label_records: usize,
    pub verdict_records: usize,
}

#[derive(Debug, Default)]
struct StudyState {
    labels: BTreeMap<(String, String), AnnotationRecord>,
    verdicts: BTreeMap<(String, String), VerdictRecord>,
}

impl StudyState {
    fn apply(&mut self, e: LogEntry) -> bool {
        match e {
            LogEntry::Label(r) => self
                .labels
                .insert((r.task_id.clone(), r.annotator_id.clone()), r)
                .is_some(),
            LogEntry::Verdict(v) => self
                .verdicts
                .insert((v.article_id.clone(), v.annotator_id.clone()), v)
                .is_some(),
        }
    }

    fn live(&self) -> Vec<LogEntry> {
        self.labels
            .values()
            .cloned()
            .map(LogEntry::Label)
            .chain(self.verdicts.values().cloned().map(LogEntry::Verdict))
            .collect()
    }
}

type Clock = Box<dyn Fn() -> String + Send + Sync>;

/// A running study. Writes are serialized; reads see a consistent snapshot.
pub struct Study {
    def: StudyDefinition,
    task_index: HashMap<String, usize>,
    by_article: BTreeMap<String, Vec<usize>>,
    state: RwLock<StudyState>,
    log: Option<Mutex<RecordLog>>,
    clock: Clock,
    compact_after: usize,
}

impl fmt::Debug for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Study").field("id", &self.def.id).finish_non_exhaustive()
    }
}

impl Study {
    pub fn new(def: StudyDefinition) -> Result<Self, StudyError> {
        def.validate()?;
        let task_index = def.tasks.iter().enumerate().map(|(i, t)| (t.task_id.clone(), i)).collect();
        let mut by_article: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, t) in def.tasks.iter().enumerate() {
            by_article.entry(t.article_id().to_owned()).or_default().push(i);
        }
        Ok(Study {
            def,
            task_index,
            by_article,
            state: RwLock::new(StudyState::default()),
            log: None,
            clock: Box::new(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)),
            compact_after: 1024,
        })
    }

    /// Attaches a record log, replaying any existing entries.
    pub fn with_log(mut self, path: impl Into<PathBuf>) -> Result<Self, StudyError> {
        let (log, entries) = RecordLog::open(path)?;
        {
            let mut st = self.state.write().expect("study lock");
            for e in entries {
                st.apply(e);
            }
        }
        self.log = Some(Mutex::new(log));
        Ok(self)
    }

    pub fn with_clock(mut self, clock: impl Fn() -> String + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    /// Compacts once the log holds this many superseded lines.
    pub fn with_compaction_threshold(mut self, superseded: usize) -> Self {
        self.compact_after = superseded.max(1);
        self
    }

    pub fn id(&self) -> &str {
        &self.def.id
    }

    pub fn definition(&self) -> &StudyDefinition {
        &self.def
    }

    pub fn task(&self, task_id: &str) -> Option<&AnnotationTask> {
        self.task_index.get(task_id).map(|&i| &self.def.tasks[i])
    }

    fn assigned(&self, annotator: &str) -> Result<&[String], StudyError> {
        self.def
            .plan
            .assignment
            .get(annotator)
            .map(Vec::as_slice)
            .ok_or_else(|| StudyError::UnknownAnnotator(annotator.to_owned()))
    }

    pub fn next_task(&self, annotator: &str) -> Result<NextTask, StudyError> {
        let arts = self.assigned(annotator)?;
        let st = self.state.read().expect("study lock");
        for (pos, art) in arts.iter().enumerate() {
            let tasks = self.by_article.get(art).map(Vec::as_slice).unwrap_or(&[]);
            let open: Vec<usize> = tasks
                .iter()
                .copied()
                .filter(|&i| !st.labels.contains_key(&(self.def.tasks[i].task_id.clone(), annotator.to_owned())))
                .collect();
            if let Some(&first) = open.first() {
                return Ok(NextTask::Label {
                    task: self.def.tasks[first].clone(),
                    article_position: pos + 1,
                    remaining_pairs: open.len(),
                });
            }
            if !st.verdicts.contains_key(&(art.clone(), annotator.to_owned())) {
                let original = tasks
                    .first()
                    .map(|&i| self.def.tasks[i].original.clone())
                    .ok_or_else(|| StudyError::UnknownArticle(art.clone()))?;
                return Ok(NextTask::Verdict {
                    article_id: art.clone(),
                    original,
                });
            }
        }
        Ok(NextTask::Done)
    }

    fn commit(&self, entry: LogEntry) -> Result<bool, StudyError> {
        let mut st = self.state.write().expect("study lock");
        if let Some(log) = &self.log {
            let mut log = log.lock().expect("log lock");
            log.append(&entry)?;
            let superseded = st.apply(entry);
            let live = st.labels.len() + st.verdicts.len();
            if log.lines() >= live + self.compact_after {
                log.compact(&st.live())?;
            }
            Ok(superseded)
        } else {
            Ok(st.apply(entry))
        }
    }

    pub fn submit_label(&self, s: LabelSubmission) -> Result<SubmitOutcome<AnnotationRecord>, StudyError> {
        let task = self.task(&s.task_id).ok_or_else(|| StudyError::UnknownTask(s.task_id.clone()))?;
        self.assigned(&s.annotator_id)?;
        if !self.def.plan.is_assigned(&s.annotator_id, task.article_id()) {
            return Err(StudyError::NotAssigned {
                annotator: s.annotator_id,
                article: task.article_id().to_owned(),
            });
        }
        let record = AnnotationRecord {
            task_id: s.task_id,
            annotator_id: s.annotator_id,
            label: s.label,
            timestamp: (self.clock)(),
        };
        let superseded = self.commit(LogEntry::Label(record.clone()))?;
        Ok(SubmitOutcome { record, superseded })
    }

    /// Accepted only after every pair of the article is labeled by this
    /// annotator.
    pub fn submit_verdict(&self, s: VerdictSubmission) -> Result<SubmitOutcome<VerdictRecord>, StudyError> {
        let tasks = self
            .by_article
            .get(&s.article_id)
            .ok_or_else(|| StudyError::UnknownArticle(s.article_id.clone()))?;
        self.assigned(&s.annotator_id)?;
        if !self.def.plan.is_assigned(&s.annotator_id, &s.article_id) {
            return Err(StudyError::NotAssigned {
                annotator: s.annotator_id,
                article: s.article_id,
            });
        }
        let remaining = {
            let st = self.state.read().expect("study lock");
            tasks
                .iter()
                .filter(|&&i| !st.labels.contains_key(&(self.def.tasks[i].task_id.clone(), s.annotator_id.clone())))
                .count()
        };
        if remaining > 0 {
            return Err(StudyError::PairsIncomplete {
                article: s.article_id,
                remaining,
            });
        }
        let record = VerdictRecord {
            article_id: s.article_id,
            annotator_id: s.annotator_id,
            verdict: s.verdict,
            timestamp: (self.clock)(),
        };
        let superseded = self.commit(LogEntry::Verdict(record.clone()))?;
        Ok(SubmitOutcome { record, superseded })
    }

    pub fn label_records(&self) -> Vec<AnnotationRecord> {
        self.state.read().expect("study lock").labels.values().cloned().collect()
    }

    pub fn verdict_records(&self) -> Vec<VerdictRecord> {
        self.state.read().expect("study lock").verdicts.values().cloned().collect()
    }

    pub fn gold(&self) -> HashMap<String, Label> {
        self.def
            .tasks
            .iter()
            .map(|t| (t.article_id().to_owned(), t.original.label))
            .collect()
    }

    pub fn progress(&self) -> Progress {
        let st = self.state.read().expect("study lock");
        let mut per_annotator = BTreeMap::new();
        let (mut done_l, mut total_l, mut done_v, mut total_v) = (0, 0, 0, 0);
        for (ann, arts) in &self.def.plan.assignment {
            let (mut done, mut total) = (0, 0);
            for art in arts {
                let tasks = self.by_article.get(art).map(Vec::as_slice).unwrap_or(&[]);
                let labeled = tasks
                    .iter()
                    .filter(|&&i| st.labels.contains_key(&(self.def.tasks[i].task_id.clone(), ann.clone())))
                    .count();
                let verdict = st.verdicts.contains_key(&(art.clone(), ann.clone())) as usize;
                done_l += labeled;
                total_l += tasks.len();
                done_v += verdict;
                total_v += 1;
                done += labeled + verdict;
                total += tasks.len() + 1;
            }
            per_annotator.insert(ann.clone(), Completion { completed: done, total });
        }
        Progress {
            labels: Completion {
                completed: done_l,
                total: total_l,
            },
            verdicts: Completion {
                completed: done_v,
                total: total_v,
            },
            per_annotator,
        }
    }

    pub fn stats(&self) -> StudyStats {
        let (labels, verdicts) = {
            let st = self.state.read().expect("study lock");
            (
                st.labels.values().cloned().collect::<Vec<_>>(),
                st.verdicts.values().cloned().collect::<Vec<_>>(),
            )
        };
        let annotators: Vec<&String> = self.def.plan.assignment.keys().collect();
        let ann_pos: HashMap<&str, usize> = annotators.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();

        let mut label_matrix: Vec<Vec<Option<PairLabel>>> = vec![vec![None; self.def.tasks.len()]; annotators.len()];
        let mut by_task: BTreeMap<String, Vec<PairLabel>> = BTreeMap::new();
        for r in &labels {
            if let (Some(&a), Some(&t)) = (ann_pos.get(r.annotator_id.as_str()), self.task_index.get(&r.task_id)) {
                label_matrix[a][t] = Some(r.label);
            }
            by_task.entry(r.task_id.clone()).or_default().push(r.label);
        }
        let articles: Vec<&String> = self.by_article.keys().collect();
        let art_pos: HashMap<&str, usize> = articles.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        let mut verdict_matrix: Vec<Vec<Option<Verdict>>> = vec![vec![None; articles.len()]; annotators.len()];
        let mut by_article: BTreeMap<String, Vec<Verdict>> = BTreeMap::new();
        for v in &verdicts {
            if let (Some(&a), Some(&u)) = (ann_pos.get(v.annotator_id.as_str()), art_pos.get(v.article_id.as_str())) {
                verdict_matrix[a][u] = Some(v.verdict);
            }
            by_article.entry(v.article_id.clone()).or_default().push(v.verdict);
        }
        let index: HashMap<String, (String, Label)> = self
            .def
            .tasks
            .iter()
            .map(|t| (t.task_id.clone(), (t.evidence.language.clone(), t.original.label)))
            .collect();
        StudyStats {
            alpha: krippendorff_alpha(&label_matrix).ok(),
            verdict_alpha: krippendorff_alpha(&verdict_matrix).ok(),
            distributions: language_distribution(&labels, &index),
            accuracy: annotator_accuracy(&verdicts, &self.gold()).ok(),
            majority_labels: by_task
                .into_iter()
                .map(|(t, ls)| (t, majority_label(&ls).expect("non-empty")))
                .collect(),
            majority_verdicts: by_article
                .into_iter()
                .map(|(a, vs)| (a, majority_verdict(&vs).expect("non-empty")))
                .collect(),
            label_records: labels.len(),
            verdict_records: verdicts.len(),
        }
    }

    /// Rewrites the log with live records only.
    pub fn compact(&self) -> Result<(), StudyError> {
        let st = self.state.write().expect("study lock");
        if let Some(log) = &self.log {
            log.lock().expect("log lock").compact(&st.live())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use PairLabel::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn plan_is_balanced() {
        let plan = create_study(&ids("a", 20), &ids("p", 6), 10, 3, 7).unwrap();
        for arts in plan.assignment.values() {
            assert_eq!(arts.len(), 10);
            let uniq: BTreeSet<_> = arts.iter().collect();
            assert_eq!(uniq.len(), 10);
        }
        for a in ids("a", 20) {
            assert_eq!(plan.annotators_for(&a).len(), 3);
        }
        assert_eq!(plan, create_study(&ids("a", 20), &ids("p", 6), 10, 3, 7).unwrap());
    }

    #[test]
    fn plan_infeasible() {
        assert!(matches!(
            create_study(&ids("a", 20), &ids("p", 5), 10, 3, 0),
            Err(StudyError::InfeasiblePlan { .. })
        ));
    }

    #[test]
    fn votes() {
        assert_eq!(majority_label(&[Support, Support, Refute]).unwrap(), Support);
        assert_eq!(majority_label(&[Support, Refute, NotEnoughInfo]).unwrap(), NotEnoughInfo);
        assert_eq!(
            majority_verdict(&[Verdict::Fake, Verdict::Fake, Verdict::Legit]).unwrap(),
            VerdictVote::Fake
        );
        assert_eq!(majority_verdict(&[Verdict::Fake, Verdict::Legit]).unwrap(), VerdictVote::Undecided);
        assert!(matches!(majority_label(&[]), Err(StudyError::NoRecords)));
    }

    #[test]
    fn alpha_known_values() {
        let agree = vec![vec![Some('a'), Some('b'), Some('c')]; 3];
        assert_eq!(krippendorff_alpha(&agree).unwrap(), 1.0);
        // [[A,B],[B,A]]: o_AB = o_BA = 2, n_A = n_B = 2, n = 4
        let swap = vec![vec![Some('A'), Some('B')], vec![Some('B'), Some('A')]];
        let expected = 1.0 - 3.0 * 4.0 / (16.0 - 8.0);
        assert!((krippendorff_alpha(&swap).unwrap() - expected).abs() < 1e-12);
        let single = vec![vec![Some(1)], vec![Some(1)]];
        assert!(matches!(krippendorff_alpha(&single), Err(StudyError::InsufficientData)));
    }

    #[test]
    fn accuracy() {
        let v = |a: &str, ann: &str, verdict| VerdictRecord {
            article_id: a.into(),
            annotator_id: ann.into(),
            verdict,
            timestamp: String::new(),
        };
        let gold: HashMap<String, Label> = [("x".into(), Label::Fake), ("y".into(), Label::Legit)].into();
        let vs = [
            v("x", "p", Verdict::Fake),
            v("y", "p", Verdict::Legit),
            v("x", "q", Verdict::Fake),
            v("y", "q", Verdict::Fake),
        ];
        assert_eq!(annotator_accuracy(&vs, &gold).unwrap().overall, 0.75);
        assert!(matches!(
            annotator_accuracy(&[v("z", "p", Verdict::Fake)], &gold),
            Err(StudyError::MissingGold(_))
        ));
    }

    #[test]
    fn empty_distribution() {
        let index: HashMap<String, (String, Label)> = [("t".into(), ("fr".into(), Label::Fake))].into();
        let d = language_distribution(&[], &index);
        assert_eq!(d.total(), 0);
        assert_eq!(d.count(Label::Fake, "fr", Support), 0);
    }
}
