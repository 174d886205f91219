use std::fs;
use std::path::{Path, PathBuf};

use multiverse::corpus::{
    ingest_dataset, ingest_dataset_lenient, split_dataset, Dataset, DatasetFormat, EvidenceDoc, Label, NewsArticle,
    SplitSpec,
};
use multiverse::features::{
    assemble_ce_block, build_matrix, file_safe, Block, EvidencePoint, EvidenceStore, FeatureMatrix, FeatureSchema,
    Scorer,
};
use multiverse::model::{
    ablate, evaluate, feature_importance, train, AblationConfig, CvConfig, EvalReport, ModelKind, TrainConfig,
    TrainedModel,
};
use multiverse::pipeline::{
    load_run_evidence, run_pipeline, verdict_for, ArticleStatus, OutputTree, PipelineConfig, Providers, SearchBinding,
};
use multiverse::report::{build_report, render, ReportConfig, ReportFormat};
use multiverse::retrieval::{DEFAULT_LANGUAGES, DEFAULT_TOP_N};
use multiverse::similarity::{tune_threshold, GoldLabel};
use multiverse::study::{tasks_for_article, Study, StudyDefinition};
use multiverse::synthetic::{fixture_corpus, h1_corpus, H1Config};
use multiverse_server::Registry;
use serde::Deserialize;

use crate::error::{invalid, runtime, CliError};
use crate::{
    AblateArgs, Cli, Command, CvArgs, EvaluateArgs, FeaturizeArgs, FixturesArgs, IngestArgs, InputFormat, ModelArg,
    Provider, ReportArgs, ReportFormatArg, RetrieveArgs, RunArgs, ScoreArgs, ScorerArg, StatsFormat, StudyCommand,
    StudyCreateArgs, StudyServeArgs, StudyStatsArgs, TrainArgs, TuneThetaArgs,
};

type Result<T> = std::result::Result<T, CliError>;

struct Ctx {
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: OutputTree,
}

impl Ctx {
    fn config(&self) -> Result<PipelineConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| invalid("this command needs --config <file>"))?;
        let mut cfg = PipelineConfig::load(path)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    fn optional_config(&self) -> Result<Option<PipelineConfig>> {
        self.config.as_ref().map(|_| self.config()).transpose()
    }

    fn seed(&self, cfg: Option<&PipelineConfig>) -> u64 {
        self.seed.or(cfg.map(|c| c.seed)).unwrap_or(0)
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        config: cli.config,
        seed: cli.seed,
        out: OutputTree::new(cli.out),
    };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Retrieve(a) => retrieve(&ctx, a),
        Command::Score(a) => score(&ctx, a),
        Command::Featurize(a) => featurize(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Cv(a) => cv(&ctx, a),
        Command::Ablate(a) => ablate_cmd(&ctx, a),
        Command::TuneTheta(a) => tune_theta(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::Run(a) => run(&ctx, a),
        Command::Study(StudyCommand::Create(a)) => study_create(&ctx, a),
        Command::Study(StudyCommand::Serve(a)) => study_serve(a),
        Command::Study(StudyCommand::Stats(a)) => study_stats(a),
        Command::Fixtures(a) => fixtures(a),
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{what} not found: {}", path.display())))
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn to_json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable output")
}

fn load_dataset(arg: Option<PathBuf>, cfg: Option<&PipelineConfig>) -> Result<Dataset> {
    let path = arg
        .or_else(|| cfg.and_then(|c| c.dataset.clone()))
        .ok_or_else(|| invalid("no dataset: pass --dataset or set `dataset` in the config"))?;
    require_file(&path, "dataset")?;
    Ok(ingest_dataset(&path, DatasetFormat::from_path(&path))?)
}

fn find<'a>(ds: &'a Dataset, id: &str) -> Result<&'a NewsArticle> {
    ds.get(id).ok_or_else(|| invalid(format!("unknown article `{id}`")))
}

fn layout(cfg: Option<&PipelineConfig>) -> (Vec<String>, usize) {
    match cfg {
        Some(c) => (c.languages.clone(), c.top_n),
        None => (DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(), DEFAULT_TOP_N),
    }
}

fn model_kind(m: ModelArg) -> ModelKind {
    match m {
        ModelArg::Boosted => ModelKind::Boosted,
        ModelArg::Logistic => ModelKind::Logistic,
    }
}

fn counts(ds: &Dataset) -> (usize, usize) {
    let fake = ds.articles.iter().filter(|a| a.label == Label::Fake).count();
    (fake, ds.len() - fake)
}

fn ingest(ctx: &Ctx, a: IngestArgs) -> Result<()> {
    require_file(&a.path, "dataset")?;
    let format = match a.format {
        InputFormat::Auto => DatasetFormat::from_path(&a.path),
        InputFormat::Jsonl => DatasetFormat::Jsonl,
        InputFormat::Csv => DatasetFormat::Csv,
    };
    let dataset = if a.lenient {
        let report = ingest_dataset_lenient(&a.path, format)?;
        for e in &report.rejected {
            eprintln!("skipped {e}");
        }
        report.dataset
    } else {
        ingest_dataset(&a.path, format)?
    };
    let root = &ctx.out.root;
    fs::create_dir_all(root).map_err(|e| runtime(format!("{}: {e}", root.display())))?;
    let target = root.join("dataset.jsonl");
    dataset.write_jsonl(&target)?;
    let (fake, legit) = counts(&dataset);
    println!("{} articles ({fake} fake, {legit} legit) -> {}", dataset.len(), target.display());
    if a.split {
        let cfg = ctx.optional_config()?;
        let split = split_dataset(&dataset, &SplitSpec::with_seed(ctx.seed(cfg.as_ref())))?;
        for (name, part) in [("train", &split.train), ("test", &split.test), ("dev", &split.dev)] {
            let p = root.join(format!("{name}.jsonl"));
            part.write_jsonl(&p)?;
            println!("{name}: {} articles -> {}", part.len(), p.display());
        }
    }
    Ok(())
}

fn binding_kind(b: &SearchBinding) -> &'static str {
    match b {
        SearchBinding::Fixture { .. } => "fixture",
        SearchBinding::Snapshot { .. } => "snapshot",
        SearchBinding::Http { .. } => "http",
    }
}

fn retrieve(ctx: &Ctx, a: RetrieveArgs) -> Result<()> {
    let mut cfg = ctx.config()?;
    if let Some(l) = a.langs {
        cfg.languages = l;
    }
    if let Some(t) = a.top {
        cfg.top_n = t;
        cfg.report_rows = cfg.report_rows.min(t);
    }
    if let Some(d) = a.snapshot_dir {
        cfg.snapshot_dir = Some(d);
    }
    let matches = match (a.provider, &cfg.bindings.search) {
        (None, _) => true,
        (Some(Provider::Live), b) => matches!(b, SearchBinding::Http { .. }),
        (Some(Provider::Fixture), b) => !matches!(b, SearchBinding::Http { .. }),
    };
    if !matches {
        return Err(invalid(format!(
            "--provider {:?} does not match the configured `{}` search binding",
            a.provider.expect("checked"),
            binding_kind(&cfg.bindings.search)
        )));
    }
    cfg.validate()?;
    let ds = load_dataset(a.dataset, Some(&cfg))?;
    let article = find(&ds, &a.article)?;
    let providers = Providers::from_config(&cfg)?;
    let outcome = providers.retrieve(&cfg, article)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if a.json {
        println!(
            "{}",
            to_json(&serde_json::json!({
                "article_id": outcome.article_id,
                "queries": outcome.queries,
                "evidence": outcome.evidence,
                "failures": outcome.failures,
                "warnings": outcome.warnings,
            }))
        );
        return Ok(());
    }
    for lang in &cfg.languages {
        let docs: &[EvidenceDoc] = outcome.evidence.get(lang).map(Vec::as_slice).unwrap_or(&[]);
        let query = outcome.query(lang).map(|q| q.text.as_str()).unwrap_or("");
        match outcome.failures.get(lang) {
            Some(f) => println!("[{lang}] failed: {f}"),
            None => println!("[{lang}] {query} ({} results)", docs.len()),
        }
        for d in docs {
            println!("  {}\t{}\t{}", d.position, d.url, d.title);
        }
    }
    Ok(())
}

fn scorer_of(s: ScorerArg) -> Scorer {
    match s {
        ScorerArg::Cosine => Scorer::Embedding,
        ScorerArg::Nli => Scorer::Nli,
    }
}

fn score(ctx: &Ctx, a: ScoreArgs) -> Result<()> {
    let mut cfg = ctx.config()?;
    if let Some(s) = a.scorer {
        cfg.scorer = scorer_of(s);
    }
    let ds = load_dataset(a.dataset, Some(&cfg))?;
    let articles: Vec<&NewsArticle> = match &a.article {
        Some(id) => vec![find(&ds, id)?],
        None => ds.articles.iter().collect(),
    };
    let providers = Providers::from_config(&cfg)?;
    ctx.out.create()?;
    let mut store = load_run_evidence(&ctx.out).unwrap_or_default();
    let (mut pairs, mut failed) = (0, 0);
    for article in &articles {
        let scored = match providers
            .retrieve(&cfg, article)
            .and_then(|o| providers.score(article, &o, cfg.scorer))
        {
            Ok(s) => s,
            Err(e) => {
                eprintln!("{}: {e}", article.id);
                failed += 1;
                continue;
            }
        };
        if a.article.is_some() {
            for s in &scored {
                println!(
                    "{}\t{}\t{:.4}\t{}\t{}",
                    s.point.language,
                    s.point.position,
                    s.point.sim.value(),
                    s.point.rank.raw,
                    s.doc.url
                );
            }
        }
        pairs += scored.len();
        let points: Vec<EvidencePoint> = scored.into_iter().map(|s| s.point).collect();
        let entry = store.entry(&article.id);
        match cfg.scorer {
            Scorer::Embedding => entry.embedding = Some(points),
            Scorer::Nli => entry.nli = Some(points),
        }
        if let Some(ne) = providers.ne_popularity(article) {
            entry.ne_popularity = Some(ne);
        }
    }
    store.write_dir(&ctx.out.evidence())?;
    println!(
        "scored {pairs} pairs over {} articles -> {}",
        articles.len() - failed,
        ctx.out.evidence().display()
    );
    if failed > 0 {
        return Err(runtime(format!("{failed} articles failed")));
    }
    Ok(())
}

fn load_evidence_for(ctx: &Ctx, dir: Option<PathBuf>, blocks: &[Block]) -> Result<EvidenceStore> {
    let dir = dir.unwrap_or_else(|| ctx.out.evidence());
    if !blocks.iter().any(|b| b.uses_evidence()) {
        return Ok(EvidenceStore::new());
    }
    if !dir.is_dir() {
        return Err(invalid(format!(
            "no evidence at {}; run `multiverse run` or `multiverse score` first",
            dir.display()
        )));
    }
    Ok(EvidenceStore::read_dir(&dir)?)
}

fn slug(blocks: &[Block]) -> String {
    blocks.iter().map(|b| b.slug()).collect::<Vec<_>>().join("+")
}

fn featurize(ctx: &Ctx, a: FeaturizeArgs) -> Result<()> {
    let cfg = ctx.optional_config()?;
    let blocks = Block::parse_list(&a.blocks)?;
    let ds = load_dataset(a.dataset, cfg.as_ref())?;
    let evidence = load_evidence_for(ctx, None, &blocks)?;
    let missing = ds.articles.iter().filter(|x| evidence.get(&x.id).is_none()).count();
    if missing > 0 && blocks.iter().any(|b| b.uses_evidence()) {
        eprintln!("warning: {missing} articles have no evidence; their evidence columns are zero");
    }
    let (languages, top_n) = layout(cfg.as_ref());
    let mut schema = FeatureSchema::new(blocks.clone(), languages, top_n);
    let name = slug(&blocks);
    let dir = ctx.out.features();
    let parts: Vec<(String, Dataset)> = if a.split {
        let split = split_dataset(&ds, &SplitSpec::with_seed(ctx.seed(cfg.as_ref())))?;
        schema.fit_dataset(&split.train)?;
        vec![(format!("{name}.train"), split.train), (format!("{name}.test"), split.test)]
    } else {
        schema.fit_dataset(&ds)?;
        vec![(name.clone(), ds)]
    };
    for (stem, part) in &parts {
        let (m, labels) = build_matrix(part, &schema, &evidence, false)?;
        let path = dir.join(format!("{stem}.csv"));
        fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
        m.write_csv(&path, &labels)?;
        println!("{} x {} -> {}", m.n_rows(), m.n_cols(), path.display());
    }
    FeatureMatrix::write_manifest(&schema.manifest()?, &dir.join(format!("{name}.schema.json")))?;
    Ok(())
}

fn train_cmd(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    require_file(&a.features, "feature matrix")?;
    let (m, labels) = FeatureMatrix::read_csv(&a.features)?;
    let kind = model_kind(a.model);
    let cfg = TrainConfig {
        kind,
        seed: ctx.seed(None),
        ..TrainConfig::default()
    };
    let model = train(&m, &labels, &cfg)?;
    let stem = a.features.file_stem().and_then(|s| s.to_str()).unwrap_or("features");
    let path = ctx.out.models().join(format!("{stem}.{kind}.json"));
    fs::create_dir_all(ctx.out.models()).map_err(|e| runtime(e.to_string()))?;
    model.save(&path)?;
    let fit = evaluate(&model, &m, &labels)?;
    println!(
        "{kind} on {} x {}: training F1 {:.3} -> {}",
        m.n_rows(),
        m.n_cols(),
        fit.f1,
        path.display()
    );
    for (name, imp) in feature_importance(&model).into_iter().take(a.top_features) {
        println!("  {name}\t{imp:.4}");
    }
    Ok(())
}

fn print_eval(r: &EvalReport) {
    println!(
        "precision {:.3}  recall {:.3}  f1 {:.3}  accuracy {:.3}",
        r.precision, r.recall, r.f1, r.accuracy
    );
    let c = &r.counts;
    println!("tp {}  fp {}  tn {}  fn {}", c.tp, c.fp, c.tn, c.fn_);
}

fn evaluate_cmd(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    require_file(&a.model, "model")?;
    require_file(&a.features, "feature matrix")?;
    let model = TrainedModel::load(&a.model)?;
    let (m, labels) = FeatureMatrix::read_csv(&a.features)?;
    let r = evaluate(&model, &m, &labels)?;
    print_eval(&r);
    let stem = a.features.file_stem().and_then(|s| s.to_str()).unwrap_or("features");
    write_file(&ctx.out.reports().join(format!("eval-{stem}.json")), to_json(&r))
}

fn ablation_cfg(ctx: &Ctx, cfg: Option<&PipelineConfig>, folds: usize, model: ModelArg, baseline: usize) -> AblationConfig {
    let (languages, top_n) = layout(cfg);
    let seed = ctx.seed(cfg);
    AblationConfig {
        languages,
        top_n,
        train: TrainConfig {
            kind: model_kind(model),
            seed,
            ..TrainConfig::default()
        },
        cv: CvConfig { folds, seed },
        baseline,
        ..AblationConfig::default()
    }
}

fn cv(ctx: &Ctx, a: CvArgs) -> Result<()> {
    let cfg = ctx.optional_config()?;
    let blocks = Block::parse_list(&a.blocks)?;
    let ds = load_dataset(a.dataset, cfg.as_ref())?;
    let evidence = load_evidence_for(ctx, a.evidence, &blocks)?;
    let name = slug(&blocks);
    let table = ablate(&ds, &evidence, &[blocks], &ablation_cfg(ctx, cfg.as_ref(), a.folds, a.model, 0))?;
    let report = &table.rows[0].cv;
    for (i, f) in report.folds.iter().enumerate() {
        println!("fold {}: precision {:.3} recall {:.3} f1 {:.3}", i + 1, f.precision, f.recall, f.f1);
    }
    println!(
        "{}: precision {:.3} ± {:.3}  recall {:.3} ± {:.3}  f1 {:.3} ± {:.3}",
        table.rows[0].combo,
        report.precision.mean,
        report.precision.std,
        report.recall.mean,
        report.recall.std,
        report.f1.mean,
        report.f1.std
    );
    write_file(&ctx.out.reports().join(format!("cv-{name}.json")), to_json(report))
}

fn ablate_cmd(ctx: &Ctx, a: AblateArgs) -> Result<()> {
    let cfg = ctx.optional_config()?;
    if a.combos.is_empty() {
        return Err(invalid("--combos needs at least one combination"));
    }
    let combos = a
        .combos
        .iter()
        .map(|c| Block::parse_list(c))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let ds = load_dataset(a.dataset, cfg.as_ref())?;
    let all: Vec<Block> = combos.iter().flatten().copied().collect();
    let evidence = load_evidence_for(ctx, a.evidence, &all)?;
    let table = ablate(&ds, &evidence, &combos, &ablation_cfg(ctx, cfg.as_ref(), a.folds, a.model, a.baseline))?;
    let md = table.to_markdown();
    print!("{md}");
    let dir = ctx.out.reports();
    write_file(&dir.join("ablation.md"), &md)?;
    write_file(&dir.join("ablation.csv"), table.to_csv())?;
    write_file(&dir.join("ablation.json"), to_json(&table))
}

#[derive(Deserialize)]
struct GoldRow {
    sim: f64,
    gold: String,
}

fn tune_theta(ctx: &Ctx, a: TuneThetaArgs) -> Result<()> {
    require_file(&a.gold, "gold pairs")?;
    let mut reader = csv::Reader::from_path(&a.gold).map_err(|e| runtime(format!("{}: {e}", a.gold.display())))?;
    let mut pairs = Vec::new();
    for (i, row) in reader.deserialize::<GoldRow>().enumerate() {
        let row = row.map_err(|e| invalid(format!("{} row {}: {e}", a.gold.display(), i + 2)))?;
        let gold = match row.gold.trim().to_ascii_lowercase().as_str() {
            "support" | "supports" | "1" | "true" => GoldLabel::Support,
            _ => GoldLabel::NotSupport,
        };
        pairs.push((row.sim, gold));
    }
    let fit = tune_threshold(&pairs)?;
    for (theta, acc) in &fit.grid {
        println!("theta {theta:.1}\taccuracy {acc:.4}");
    }
    println!("chosen theta {:.1} (accuracy {:.4}, {} pairs)", fit.theta, fit.accuracy, pairs.len());
    write_file(&ctx.out.reports().join("theta.json"), to_json(&fit))
}

fn report(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    let cfg = ctx.config()?;
    let ds = load_dataset(a.dataset, Some(&cfg))?;
    let article = find(&ds, &a.article)?;
    let providers = Providers::from_config(&cfg)?;
    let outcome = providers.retrieve(&cfg, article)?;
    let scored = providers.score(article, &outcome, cfg.scorer)?;
    let model_path = a.model.or_else(|| cfg.model.clone());
    let verdict = match model_path {
        Some(p) => {
            require_file(&p, "model")?;
            let model = TrainedModel::load(&p)?;
            let points: Vec<EvidencePoint> = scored.iter().map(|s| s.point.clone()).collect();
            let ce = assemble_ce_block(&points, &cfg.languages, cfg.top_n)?;
            Some(verdict_for(&model, article, &ce, providers.ne_popularity(article)).map_err(invalid)?)
        }
        None => None,
    };
    let rc = ReportConfig {
        k: a.top.unwrap_or(cfg.report_rows),
        languages: cfg.languages.clone(),
    };
    let rep = build_report(article, &scored, &rc, Some(providers.translator.as_ref()), verdict)?;
    let format = match a.format {
        ReportFormatArg::Md => ReportFormat::Markdown,
        ReportFormatArg::Json => ReportFormat::Json,
    };
    let bytes = render(&rep, format);
    let path = ctx
        .out
        .reports()
        .join(format!("{}.{}", file_safe(&article.id), format.extension()));
    write_file(&path, &bytes)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}

fn run(ctx: &Ctx, a: RunArgs) -> Result<()> {
    let mut cfg = ctx.config()?;
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(m) = a.model {
        cfg.model = Some(m);
    }
    let ds = load_dataset(a.dataset, Some(&cfg))?;
    let run = run_pipeline(&cfg, &ds, &ctx.out)?;
    let rec = &run.manifest.record;
    for m in rec.articles.iter().filter(|m| m.status == ArticleStatus::Failed) {
        eprintln!("{}: {}", m.article_id, m.error.as_deref().unwrap_or("failed"));
    }
    let s = &rec.summary;
    println!(
        "{} articles: {} ok, {} failed, {} skipped; {} scored pairs",
        s.articles, s.ok, s.failed, run.manifest.skipped, s.pairs
    );
    println!("manifest {} ({})", run.manifest_path.display(), run.manifest.manifest_hash);
    if s.ok == 0 && s.articles > 0 {
        return Err(runtime("every article failed"));
    }
    Ok(())
}

fn study_create(ctx: &Ctx, a: StudyCreateArgs) -> Result<()> {
    let cfg = ctx.config()?;
    let top = a.top.unwrap_or(cfg.top_n);
    let ds = load_dataset(a.dataset, Some(&cfg))?;
    let providers = Providers::from_config(&cfg)?;
    let mut tasks = Vec::new();
    for article in &ds.articles {
        let outcome = providers.retrieve(&cfg, article)?;
        let docs: Vec<EvidenceDoc> = cfg
            .languages
            .iter()
            .flat_map(|l| outcome.evidence.get(l).into_iter().flatten().take(top).cloned())
            .collect();
        tasks.extend(tasks_for_article(article, &docs, Some(providers.translator.as_ref())));
    }
    let def = StudyDefinition::new(&a.id, tasks, &a.annotators, a.per_annotator, a.per_article, ctx.seed(Some(&cfg)))?;
    let path = ctx.out.root.join("study").join(format!("{}.json", file_safe(&a.id)));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    def.save(&path)?;
    println!(
        "study `{}`: {} pairs over {} articles, {} annotators -> {}",
        def.id,
        def.tasks.len(),
        def.tasks.iter().map(|t| t.article_id()).collect::<std::collections::BTreeSet<_>>().len(),
        a.annotators.len(),
        path.display()
    );
    Ok(())
}

fn open_study(path: &Path, log_dir: Option<&Path>) -> Result<Study> {
    require_file(path, "study definition")?;
    let def = StudyDefinition::load(path)?;
    let dir = log_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
    let log = dir.join(format!("{}.records.jsonl", file_safe(&def.id)));
    Ok(Study::new(def)?.with_log(log)?)
}

fn study_serve(a: StudyServeArgs) -> Result<()> {
    let registry = Registry::new();
    for p in &a.studies {
        let study = registry.insert(open_study(p, a.log_dir.as_deref())?);
        eprintln!("loaded study `{}` ({} pairs)", study.id(), study.definition().tasks.len());
    }
    multiverse_server::run_blocking(&format!("{}:{}", a.host, a.port), registry).map_err(runtime)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into())
}

fn study_stats(a: StudyStatsArgs) -> Result<()> {
    let study = open_study(&a.study, a.log_dir.as_deref())?;
    let stats = study.stats();
    let progress = study.progress();
    match a.format {
        StatsFormat::Json => println!(
            "{}",
            to_json(&serde_json::json!({"stats": stats, "progress": progress}))
        ),
        StatsFormat::Md => {
            println!("# Study {}\n", study.id());
            println!("- labels: {} / {}", progress.labels.completed, progress.labels.total);
            println!("- verdicts: {} / {}", progress.verdicts.completed, progress.verdicts.total);
            println!("- alpha (pair labels): {}", fmt_opt(stats.alpha));
            println!("- alpha (verdicts): {}", fmt_opt(stats.verdict_alpha));
            match &stats.accuracy {
                Some(acc) => println!(
                    "- annotator accuracy: {:.3} overall, {:.3} mean per annotator",
                    acc.overall, acc.mean_per_annotator
                ),
                None => println!("- annotator accuracy: n/a"),
            }
            println!("\n{}", stats.distributions.to_markdown());
        }
    }
    Ok(())
}

fn fixtures(a: FixturesArgs) -> Result<()> {
    let corpus = fixture_corpus();
    let paths = corpus.write_to(&a.dir).map_err(|e| runtime(format!("{}: {e}", a.dir.display())))?;
    println!("fixture corpus ({} articles) -> {}", corpus.dataset.len(), paths.config.display());
    if let Some(n) = a.h1 {
        if n < 10 {
            return Err(invalid("--h1 needs at least 10 articles"));
        }
        let (ds, store) = h1_corpus(&H1Config {
            articles: n,
            ..H1Config::default()
        });
        let dir = a.dir.join("h1");
        fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
        ds.write_jsonl(&dir.join("dataset.jsonl"))?;
        store.write_dir(&dir.join("evidence"))?;
        println!("synthetic corpus ({n} articles) -> {}", dir.display());
    }
    Ok(())
}
