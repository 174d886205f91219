//! Per-article evidence reports in markdown and JSON.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{EvidenceDoc, Label, NewsArticle};
use crate::features::EvidencePoint;
use crate::model::TrainedModel;
use crate::retrieval::{Translator, DEFAULT_LANGUAGES};

pub const DEFAULT_REPORT_ROWS: usize = 3;
const UNTRANSLATED: &str = "[untranslated]";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no evidence for article `{0}`")]
    NoEvidence(String),
    #[error("k must be positive")]
    InvalidK,
}

/// A search result together with its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEvidence {
    pub doc: EvidenceDoc,
    pub point: EvidencePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub position: usize,
    pub title: String,
    /// `None` for English sections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub translation_missing: bool,
    pub url: String,
    pub source_domain: String,
    pub source_rank: u64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSection {
    pub language: String,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportVerdict {
    pub label: Label,
    /// Classifier probability of `fake`.
    pub score: f64,
}

impl ReportVerdict {
    pub fn from_model(model: &TrainedModel, row: &[f64]) -> Self {
        let score = model.predict_proba(row);
        ReportVerdict {
            label: model.predict_row(row),
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportArticle {
    pub id: String,
    pub title: String,
    pub url: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub original: ReportArticle,
    pub sections: Vec<ReportSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<ReportVerdict>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportConfig {
    pub k: usize,
    /// Section order; languages not listed follow alphabetically.
    pub languages: Vec<String>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            k: DEFAULT_REPORT_ROWS,
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Top-`k` rows per language, by search position. Values are copied from
/// the evidence points unchanged.
pub fn build_report(
    article: &NewsArticle,
    evidence: &[ScoredEvidence],
    cfg: &ReportConfig,
    translator: Option<&dyn Translator>,
    verdict: Option<ReportVerdict>,
) -> Result<EvidenceReport, ReportError> {
    if cfg.k == 0 {
        return Err(ReportError::InvalidK);
    }
    let mut by_lang: BTreeMap<&str, Vec<&ScoredEvidence>> = BTreeMap::new();
    for e in evidence {
        by_lang.entry(e.point.language.as_str()).or_default().push(e);
    }
    let mut order: Vec<&str> = cfg
        .languages
        .iter()
        .map(String::as_str)
        .filter(|l| by_lang.contains_key(l))
        .collect();
    order.extend(by_lang.keys().copied().filter(|l| !cfg.languages.iter().any(|c| c == l)));

    let mut sections = Vec::new();
    for lang in order {
        let mut items = by_lang.remove(lang).unwrap_or_default();
        items.sort_by_key(|e| e.point.position);
        items.dedup_by_key(|e| e.point.position);
        let rows = items
            .into_iter()
            .take(cfg.k)
            .map(|e| {
                let (translation, translation_missing) = if lang == "en" {
                    (None, false)
                } else {
                    match translator.map(|t| t.translate(&e.doc.title, lang, "en")) {
                        Some(Ok(t)) if !t.fallback => (Some(t.text), false),
                        _ => (Some(format!("{} {UNTRANSLATED}", e.doc.title)), true),
                    }
                };
                ReportRow {
                    position: e.point.position,
                    title: e.doc.title.clone(),
                    translation,
                    translation_missing,
                    url: e.doc.url.clone(),
                    source_domain: e.doc.source_domain.clone(),
                    source_rank: e.point.rank.raw,
                    similarity: e.point.sim.value(),
                }
            })
            .collect();
        sections.push(ReportSection {
            language: lang.to_owned(),
            rows,
        });
    }
    if sections.is_empty() {
        return Err(ReportError::NoEvidence(article.id.clone()));
    }
    Ok(EvidenceReport {
        original: ReportArticle {
            id: article.id.clone(),
            title: article.title.clone(),
            url: article.url.clone(),
            label: article.label,
        },
        sections,
        verdict,
    })
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace(['\n', '\r'], " ")
}

pub fn render_markdown(report: &EvidenceReport) -> String {
    let mut out = format!("# {}\n\n", cell(&report.original.title));
    out.push_str(&format!("- Article: `{}`\n", report.original.id));
    if !report.original.url.is_empty() {
        out.push_str(&format!("- URL: <{}>\n", report.original.url));
    }
    out.push_str(&format!("- Gold label: {}\n", report.original.label));
    if let Some(v) = &report.verdict {
        out.push_str(&format!("- Verdict: {} (p_fake = {:.2})\n", v.label, v.score));
    }
    for s in &report.sections {
        out.push_str(&format!("\n## {}\n\n", s.language));
        out.push_str("| Title | English translation | Source rank↓ | Similarity↑ |\n");
        out.push_str("|---|---|---:|---:|\n");
        for r in &s.rows {
            out.push_str(&format!(
                "| {} | {} | {} | {:.2} |\n",
                cell(&r.title),
                r.translation.as_deref().map_or("--".to_owned(), cell),
                r.source_rank,
                r.similarity
            ));
        }
    }
    out
}

pub fn render_json(report: &EvidenceReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Json => "json",
        }
    }
}

pub fn render(report: &EvidenceReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Json => render_json(report),
    }
    .into_bytes()
}
