//! Deterministic corpora for demos and tests.
//!
//! [`fixture_corpus`] builds the 20-article study set with offline
//! translations, search results and a rank table. [`h1_corpus`] generates
//! scored evidence where legit news is echoed by many languages and fake
//! news is not.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Label, NewsArticle};
use crate::credibility::{RankTable, SourceRank, DEFAULT_UNKNOWN_RANK};
use crate::features::{ArticleEvidence, EvidencePoint, EvidenceStore};
use crate::retrieval::{FixtureEntry, FixtureSearchProvider, FixtureTranslator, SearchHit, DEFAULT_LANGUAGES};
use crate::similarity::SimilarityScore;

const STUDY_NEWS: [(&str, &str, Label); 20] = [
    ("Lottery winner arrested for dumping $200,000 of manure on ex-boss’ lawn", "https://worldnewsdailyreport.com/lottery-winner-arrested-for-dumping-200000-of-manure-on-ex-boss-lawn/", Label::Fake),
    ("Woman sues Samsung for $1.8M after cell phone gets stuck inside her vagina", "https://worldnewsdailyreport.com/woman-sues-samsung-for-1-8m-after-cell-phone-gets-stuck-inside-her-vagina/comment-page-58/", Label::Fake),
    ("BREAKING: Michael Jordan Resigns From The Board At Nike-Takes 'Air Jordans' With Him", "https://www.newsbreak.com/news/944830700924/breaking-michael-jordan-resigns-from-the-board-at-nike-takes-air-jordans-with-him", Label::Fake),
    ("Donald Trump Ends School Shootings By Banning Schools", "https://www.8shit.net/donald-trump-ends-school-shootings-banning-schools/", Label::Fake),
    ("New mosquito species discovered that can get you pregnant with a single bite", "https://thereisnews.com/new-mosquito-species-discovered-can-make-you-pregnant/", Label::Fake),
    ("Obama Announces Bid To Become UN Secretary General", "https://www.pinterest.com/pin/465630048969491948/", Label::Fake),
    ("Lil Tay Rushed To Hospital After Being Beat By Group Of Children At A Playground", "https://www.huzlers.com/lil-tay-rushed-to-hospital-after-being-beat-by-group-of-children-at-a-playground/", Label::Fake),
    ("Post Malone's Tour Manager Quits Says Post Malone Smells Like Expired Milk And Moldy Cheese", "https://www.huzlers.com/post-malones-tour-manager-quits-says-post-malone-smells-like-expired-milk-and-moldy-cheese/", Label::Fake),
    ("Putin: Clinton Illegally Accepted $400 Million From Russia During Election", "https://newspunch.com/putin-clinton-campaign-400-million-russia/", Label::Fake),
    ("Elon Musk: 99.9% Of Media Is Owned By The 'New World Order'", "https://newspunch.com/elon-musk-media-owned-new-world-order/", Label::Fake),
    ("Scientists Develop New Method to Create Stem Cells Without Killing Human Embryos", "https://www.christianpost.com/news/scientists-develop-new-method-to-create-stem-cells-without-killing-human-embryos.html", Label::Legit),
    ("Luis Palau Diagnosed With Stage 4 Lung Cancer", "https://cnnw.com/luis-palau-diagnosed-with-stage-4-lung-cancer/", Label::Legit),
    ("1st black woman nominated to be Marine brigadier general", "https://edition.cnn.com/2018/04/12/politics/marine-corps-brigadier-general-first-black-female/index.html", Label::Legit),
    ("Disney CEO Bob Iger revealed that he seriously explored running for president", "https://www.businessinsider.com/disney-ceo-bob-iger-says-he-considered-running-for-president-oprah-pushed-2018-4", Label::Legit),
    ("Trump Has Canceled Via Twitter His G20 Meeting With Vladimir Putin", "https://www.buzzfeednews.com/article/emilytamkin/trump-g20-putin-russia", Label::Legit),
    ("US Mexico and Canada sign new USMCA trade deal", "https://www.dw.com/en/us-mexico-canada-sign-usmca-trade-deal/a-51613992", Label::Legit),
    ("Afghanistan Women children among 23 killed in US attack UN", "https://www.aljazeera.com/news/2018/11/30/afghanistan-women-children-among-23-killed-in-us-attack-un", Label::Legit),
    ("UNESCO adds reggae music to global cultural heritage list", "https://www.aljazeera.com/features/2018/11/29/unesco-adds-reggae-music-to-global-cultural-heritage-list", Label::Legit),
    ("The Saudi women detained for demanding basic human rights", "https://www.aljazeera.com/news/2018/11/29/the-saudi-women-detained-for-demanding-basic-human-rights/", Label::Legit),
    ("Georgia ruling party candidate Zurabishvili wins presidential runoff", "https://www.aljazeera.com/news/2018/11/30/ex-envoy-wins-georgia-presidency-vote-to-be-challenged", Label::Legit),
];

/// The 20 study articles: 10 fake, then 10 legit.
pub fn study_articles() -> Vec<NewsArticle> {
    STUDY_NEWS
        .iter()
        .enumerate()
        .map(|(i, (title, url, label))| {
            let kind = if *label == Label::Fake { "fake" } else { "legit" };
            NewsArticle::new(format!("{kind}-{:02}", i % 10 + 1), *title, "", *url, *label)
        })
        .collect()
}

const MAINSTREAM: [(&str, u64); 15] = [
    ("cnn.com", 91),
    ("bbc.co.uk", 102),
    ("nytimes.com", 118),
    ("theguardian.com", 147),
    ("reuters.com", 265),
    ("lemonde.fr", 284),
    ("lefigaro.fr", 496),
    ("spiegel.de", 928),
    ("zeit.de", 1807),
    ("elpais.com", 436),
    ("20minutos.es", 453),
    ("ria.ru", 8425),
    ("lenta.ru", 2137),
    ("dw.com", 1950),
    ("aljazeera.com", 1570),
];

const FRINGE: [(&str, u64); 8] = [
    ("politifact.com", 15947),
    ("snopes.com", 5798),
    ("worldnewsdailyreport.com", 314_849),
    ("huzlers.com", 210_332),
    ("newspunch.com", 98_112),
    ("thereisnews.com", 1_204_881),
    ("satirewire.net", 642_117),
    ("dailybuzzlive.com", 550_043),
];

fn refutation_word(lang: &str) -> &'static str {
    match lang {
        "fr" => "faux",
        "de" => "falsch",
        "es" => "falso",
        "ru" => "фейк",
        _ => "fake",
    }
}

fn pseudo_translation(title: &str, lang: &str) -> String {
    if lang == "en" {
        title.to_owned()
    } else {
        format!("{title} [{lang}]")
    }
}

fn host_slug(title: &str) -> String {
    let s: String = title
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    s.split('-').filter(|p| !p.is_empty()).take(8).collect::<Vec<_>>().join("-")
}

const UNRELATED: [&str; 6] = [
    "Weather forecast for the weekend",
    "Local football club wins the cup",
    "Stock markets close mixed",
    "Recipe of the day: summer salad",
    "Traffic update for the city centre",
    "New smartphone models reviewed",
];

fn hits_for(article: &NewsArticle, lang: &str) -> Vec<SearchHit> {
    let q = pseudo_translation(&article.title, lang);
    let slug = host_slug(&article.title);
    let mut hits = Vec::with_capacity(10);
    let mut push = |title: String, url: String, is_html: Option<bool>| {
        let position = hits.len() + 1;
        hits.push(SearchHit {
            url,
            title,
            content: String::new(),
            position,
            is_html,
            language: None,
        });
    };
    let mainstream = |i: usize| MAINSTREAM[(i * 7 + lang.len() * 3 + slug.len()) % MAINSTREAM.len()].0;
    if article.label == Label::Legit {
        for i in 0..7 {
            push(q.clone(), format!("https://www.{}/{lang}/{slug}-{i}", mainstream(i)), None);
        }
        push(format!("Analysis: {q}"), format!("https://www.{}/{lang}/analysis-{slug}", mainstream(7)), None);
        push(format!("{q} - what we know"), format!("https://www.{}/{lang}/explainer-{slug}", mainstream(8)), None);
        push(UNRELATED[slug.len() % UNRELATED.len()].to_owned(), format!("https://www.{}/{lang}/misc", mainstream(9)), None);
    } else {
        push(
            format!("{q}: {}", refutation_word(lang)),
            format!("https://www.politifact.com/{lang}/{slug}"),
            None,
        );
        push(
            format!("Was it real? {}", q),
            format!("https://www.snopes.com/{lang}/{slug}.pdf"),
            Some(false),
        );
        push(q.clone(), format!("https://{}/{lang}/{slug}", FRINGE[2 + slug.len() % 6].0), None);
        for i in 0..7 {
            push(
                UNRELATED[(i + slug.len()) % UNRELATED.len()].to_owned(),
                format!("https://www.{}/{lang}/story-{i}", MAINSTREAM[(i * 5 + slug.len()) % MAINSTREAM.len()].0),
                None,
            );
        }
    }
    hits
}

/// Offline inputs for a full pipeline run over the study articles.
#[derive(Debug)]
pub struct FixtureCorpus {
    pub dataset: Dataset,
    pub translations: Vec<(String, String, String)>,
    pub search: Vec<FixtureEntry>,
    pub ranks: Vec<(String, u64)>,
}

pub fn fixture_corpus() -> FixtureCorpus {
    let articles = study_articles();
    let mut translations = Vec::new();
    let mut search = Vec::new();
    for a in &articles {
        for lang in DEFAULT_LANGUAGES {
            if lang != "en" {
                translations.push((lang.to_owned(), a.title.clone(), pseudo_translation(&a.title, lang)));
            }
            search.push(FixtureEntry {
                query: pseudo_translation(&a.title, lang),
                language: lang.to_owned(),
                results: hits_for(a, lang),
            });
        }
    }
    let ranks = MAINSTREAM
        .iter()
        .chain(FRINGE.iter())
        .map(|(d, r)| (d.to_string(), *r))
        .collect();
    FixtureCorpus {
        dataset: Dataset::new("study", articles).expect("unique ids"),
        translations,
        search,
        ranks,
    }
}

/// File locations written by [`FixtureCorpus::write_to`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixturePaths {
    pub dataset: PathBuf,
    pub translations: PathBuf,
    pub search: PathBuf,
    pub ranks: PathBuf,
    pub config: PathBuf,
}

impl FixtureCorpus {
    pub fn translator(&self) -> FixtureTranslator {
        let mut t = FixtureTranslator::new();
        for (lang, src, dst) in &self.translations {
            t.insert(lang, src, dst);
        }
        t
    }

    pub fn search_provider(&self) -> FixtureSearchProvider {
        FixtureSearchProvider::from_entries(self.search.iter().cloned())
    }

    pub fn rank_table(&self) -> RankTable {
        RankTable::new(self.ranks.iter().cloned(), DEFAULT_UNKNOWN_RANK).expect("valid ranks")
    }

    /// Writes the corpus plus a ready-to-run `multiverse.toml` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<FixturePaths> {
        fs::create_dir_all(dir)?;
        let paths = FixturePaths {
            dataset: dir.join("dataset.jsonl"),
            translations: dir.join("translations.tsv"),
            search: dir.join("search.jsonl"),
            ranks: dir.join("ranks.tsv"),
            config: dir.join("multiverse.toml"),
        };
        self.dataset
            .write_jsonl(&paths.dataset)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let mut t = fs::File::create(&paths.translations)?;
        for (lang, src, dst) in &self.translations {
            writeln!(t, "{lang}\t{src}\t{dst}")?;
        }
        let mut s = fs::File::create(&paths.search)?;
        for e in &self.search {
            writeln!(s, "{}", serde_json::to_string(e).expect("entry serializes"))?;
        }
        let mut r = fs::File::create(&paths.ranks)?;
        for (d, rank) in &self.ranks {
            writeln!(r, "{d}\t{rank}")?;
        }
        fs::write(
            &paths.config,
            "languages = [\"en\", \"fr\", \"de\", \"es\", \"ru\"]\n\
             top_n = 10\n\
             scorer = \"cosine\"\n\
             theta = 0.5\n\
             content_len = 500\n\
             rank_table = \"ranks.tsv\"\n\
             dataset = \"dataset.jsonl\"\n\
             seed = 0\n\
             workers = 4\n\
             \n\
             [bindings.translator]\n\
             kind = \"fixture\"\n\
             path = \"translations.tsv\"\n\
             \n\
             [bindings.search]\n\
             kind = \"fixture\"\n\
             path = \"search.jsonl\"\n\
             \n\
             [bindings.embedding]\n\
             kind = \"reference\"\n\
             \n\
             [bindings.nli]\n\
             kind = \"uniform\"\n",
        )?;
        Ok(paths)
    }
}

/// Knobs of the generated evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct H1Config {
    pub articles: usize,
    pub seed: u64,
    pub languages: Vec<String>,
    pub top_n: usize,
    /// Per-position chance of a relevant English result, legit vs fake.
    pub english_relevant: (f64, f64),
    /// Same for every other language.
    pub foreign_relevant: (f64, f64),
    /// Spread of `log10(rank)` for each class.
    pub log_rank_legit: (f64, f64),
    pub log_rank_fake: (f64, f64),
}

impl Default for H1Config {
    fn default() -> Self {
        H1Config {
            articles: 400,
            seed: 7,
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            top_n: 10,
            english_relevant: (0.35, 0.25),
            foreign_relevant: (0.7, 0.15),
            log_rank_legit: (2.0, 6.0),
            log_rank_fake: (2.2, 6.2),
        }
    }
}

/// Balanced articles with embedding evidence at every position.
///
/// A relevant result scores in `[0.55, 0.95]`; otherwise it is either
/// refuted (exactly 0) or unrelated (`[0, 0.3]`).
pub fn h1_corpus(cfg: &H1Config) -> (Dataset, EvidenceStore) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut articles = Vec::with_capacity(cfg.articles);
    let mut store = EvidenceStore::new();
    for i in 0..cfg.articles {
        let label = if i % 2 == 0 { Label::Legit } else { Label::Fake };
        let id = format!("h1-{i:04}");
        articles.push(NewsArticle::new(
            &id,
            format!("Synthetic headline number {i}"),
            "Body text.",
            "",
            label,
        ));
        let mut points = Vec::with_capacity(cfg.languages.len() * cfg.top_n);
        for lang in &cfg.languages {
            let (pl, pf) = if lang == "en" {
                cfg.english_relevant
            } else {
                cfg.foreign_relevant
            };
            let p = if label == Label::Legit { pl } else { pf };
            let (lo, hi) = if label == Label::Legit {
                cfg.log_rank_legit
            } else {
                cfg.log_rank_fake
            };
            for position in 1..=cfg.top_n {
                let sim = if rng.random::<f64>() < p {
                    rng.random_range(0.55..0.95)
                } else if rng.random::<f64>() < 0.5 {
                    0.0
                } else {
                    rng.random_range(0.0..0.3)
                };
                let raw = 10f64.powf(rng.random_range(lo..hi)).round().max(1.0) as u64;
                points.push(EvidencePoint {
                    language: lang.clone(),
                    position,
                    sim: SimilarityScore::clamped(sim),
                    rank: SourceRank::from_raw(raw.min(DEFAULT_UNKNOWN_RANK), DEFAULT_UNKNOWN_RANK),
                });
            }
        }
        store.insert(
            id,
            ArticleEvidence {
                embedding: Some(points),
                ..Default::default()
            },
        );
    }
    (Dataset::new("h1", articles).expect("unique ids"), store)
}

/// `n` rows of `dim` features where only `informative` separates the
/// classes (by sign); the rest are uniform noise.
pub fn separable_matrix(n: usize, dim: usize, informative: usize, seed: u64) -> (crate::features::FeatureMatrix, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let fake = i % 2 == 0;
        let mut row: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let margin = rng.random_range(0.2..1.0);
        row[informative] = if fake { margin } else { -margin };
        rows.push(row);
        labels.push(if fake { Label::Fake } else { Label::Legit });
    }
    (
        crate::features::FeatureMatrix {
            names: (0..dim).map(|j| format!("x{j}")).collect(),
            rows,
            ids: (0..n).map(|i| format!("row-{i}")).collect(),
        },
        labels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_set_composition() {
        let a = study_articles();
        assert_eq!(a.len(), 20);
        assert_eq!(a.iter().filter(|a| a.label == Label::Fake).count(), 10);
        assert_eq!(a[0].source_domain, "worldnewsdailyreport.com");
    }

    #[test]
    fn fixture_hits_are_complete() {
        let c = fixture_corpus();
        assert_eq!(c.search.len(), 100);
        assert!(c.search.iter().all(|e| e.results.len() == 10));
    }

    #[test]
    fn h1_is_deterministic() {
        let cfg = H1Config {
            articles: 20,
            ..Default::default()
        };
        let (d1, s1) = h1_corpus(&cfg);
        let (d2, s2) = h1_corpus(&cfg);
        assert_eq!(d1.articles, d2.articles);
        assert_eq!(s1, s2);
        assert_eq!(s1.get("h1-0000").unwrap().embedding.as_ref().unwrap().len(), 50);
    }
}
