#![allow(dead_code)]

use std::path::{Path, PathBuf};

use multiverse::corpus::{hostname, EvidenceDoc, NewsArticle};
use multiverse::credibility::{SourceRank, DEFAULT_UNKNOWN_RANK};
use multiverse::features::EvidencePoint;
use multiverse::report::ScoredEvidence;
use multiverse::retrieval::FixtureTranslator;
use multiverse::similarity::SimilarityScore;
use serde::Deserialize;

pub fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

#[derive(Deserialize)]
struct Row {
    language: String,
    position: usize,
    title: String,
    #[serde(default)]
    translation: Option<String>,
    url: String,
    rank: u64,
    sim: f64,
}

#[derive(Deserialize)]
struct ReportFixture {
    article: NewsArticle,
    rows: Vec<Row>,
}

pub struct GoldenReport {
    pub article: NewsArticle,
    pub evidence: Vec<ScoredEvidence>,
    pub translator: FixtureTranslator,
    pub expected_markdown: String,
}

/// Loads `report_<name>.json` and its expected `report_<name>.md`.
pub fn golden_report(name: &str) -> GoldenReport {
    let text = std::fs::read_to_string(fixture_path(&format!("report_{name}.json"))).unwrap();
    let fx: ReportFixture = serde_json::from_str(&text).unwrap();
    let mut translator = FixtureTranslator::new();
    let evidence = fx
        .rows
        .into_iter()
        .map(|r| {
            if let Some(t) = &r.translation {
                translator.insert("en", &r.title, t);
            }
            ScoredEvidence {
                doc: EvidenceDoc {
                    source_domain: hostname(&r.url).unwrap_or_default(),
                    url: r.url,
                    title: r.title,
                    content: String::new(),
                    language: r.language.clone(),
                    position: r.position,
                    is_html: true,
                },
                point: EvidencePoint {
                    language: r.language,
                    position: r.position,
                    sim: SimilarityScore::clamped(r.sim),
                    rank: SourceRank::from_raw(r.rank, DEFAULT_UNKNOWN_RANK),
                },
            }
        })
        .collect();
    GoldenReport {
        article: fx.article,
        evidence,
        translator,
        expected_markdown: std::fs::read_to_string(fixture_path(&format!("report_{name}.md"))).unwrap(),
    }
}
