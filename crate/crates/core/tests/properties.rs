use multiverse::corpus::{EvidenceDoc, Label, NewsArticle};
use multiverse::credibility::{normalize_rank, registered_domain, SourceRank};
use multiverse::features::{
    assemble_ce_block, count_syllables, ce_dimension, EvidencePoint, TfidfConfig, TfidfVectorizer,
};
use multiverse::model::{evaluate_predictions, paired_t_test, stratified_folds};
use multiverse::similarity::{
    cosine_news_similarity, cosine_similarity, tune_threshold, Embedder, GoldLabel, ReferenceEmbedder, ScorerConfig,
    SimilarityScore,
};
use multiverse::study::{create_study, krippendorff_alpha, majority_label, majority_verdict, PairLabel, Verdict};
use proptest::prelude::*;

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Fake), Just(Label::Legit)]
}

fn pair_label() -> impl Strategy<Value = PairLabel> {
    prop_oneof![Just(PairLabel::Support), Just(PairLabel::Refute), Just(PairLabel::NotEnoughInfo)]
}

fn doc(title: &str, lang: &str, is_html: bool) -> EvidenceDoc {
    EvidenceDoc {
        url: "https://example.org/a".into(),
        title: title.into(),
        content: String::new(),
        language: lang.into(),
        position: 1,
        source_domain: "example.org".into(),
        is_html,
    }
}

proptest! {
    #[test]
    fn metrics_bounded_and_consistent(pairs in prop::collection::vec((label(), label()), 0..60)) {
        let (g, p): (Vec<Label>, Vec<Label>) = pairs.into_iter().unzip();
        let r = evaluate_predictions(&g, &p).unwrap();
        prop_assert_eq!(r.counts.total(), g.len());
        for v in [r.precision, r.recall, r.f1, r.accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(r.f1 <= r.precision.max(r.recall) + 1e-12);
        prop_assert!(r.f1 + 1e-12 >= r.precision.min(r.recall) || r.f1 == 0.0);
    }

    #[test]
    fn self_prediction_is_perfect(g in prop::collection::vec(label(), 1..40)) {
        let r = evaluate_predictions(&g, &g).unwrap();
        prop_assert_eq!(r.accuracy, 1.0);
        if g.contains(&Label::Fake) {
            prop_assert_eq!(r.f1, 1.0);
        }
    }

    #[test]
    fn reference_cosine_in_unit_range(a in "[a-zA-Z ]{1,40}", b in "[a-zA-Z ]{1,40}") {
        let e = ReferenceEmbedder::default();
        if let (Ok(x), Ok(y)) = (e.embed(&a), e.embed(&b)) {
            let c = cosine_similarity(&x, &y).unwrap_or(0.0);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&c));
            let c2 = cosine_similarity(&y, &x).unwrap_or(0.0);
            prop_assert!((c - c2).abs() < 1e-12);
        }
    }

    #[test]
    fn scorer_respects_overrides(title in "[a-z]{3,10}( [a-z]{3,10}){0,5}", html in any::<bool>()) {
        let article = NewsArticle::new("a", title.clone(), "", "", Label::Fake);
        let cfg = ScorerConfig::default();
        let e = ReferenceEmbedder::default();
        let plain = cosine_news_similarity(&article, &title, &doc(&title, "en", html), "en", &cfg, &e).unwrap();
        if html {
            prop_assert_eq!(plain.score.value(), 1.0);
        } else {
            prop_assert_eq!(plain.score.value(), 0.0);
        }
        let refuted = format!("{title} is false");
        let r = cosine_news_similarity(&article, &title, &doc(&refuted, "en", true), "en", &cfg, &e).unwrap();
        prop_assert_eq!(r.score.value(), 0.0);
    }

    #[test]
    fn similarity_score_clamps(v in any::<f64>()) {
        let s = SimilarityScore::clamped(v).value();
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn rank_normalization_monotone(a in 1u64..100_000_000, b in 1u64..100_000_000) {
        let d = 10_000_000;
        let (na, nb) = (normalize_rank(a, d), normalize_rank(b, d));
        prop_assert!((0.0..=1.0).contains(&na));
        if a <= b {
            prop_assert!(na >= nb);
        }
        prop_assert_eq!(SourceRank::from_raw(a, d).normalized, na);
    }

    #[test]
    fn registered_domain_strips_subdomains(sub in "[a-z]{1,8}", name in "[a-z]{3,10}") {
        prop_assert_eq!(registered_domain(&format!("{sub}.{name}.co.uk")), format!("{name}.co.uk"));
        prop_assert_eq!(registered_domain(&format!("{name}.com")), format!("{name}.com"));
    }

    #[test]
    fn ce_block_dimension(langs in 1usize..6, top_n in 1usize..11, filled in prop::collection::vec((0usize..6, 1usize..12, 0.0f64..1.0), 0..40)) {
        let all = ["en", "fr", "de", "es", "ru", "it"];
        let languages: Vec<String> = all[..langs].iter().map(|s| s.to_string()).collect();
        let mut points: Vec<EvidencePoint> = Vec::new();
        for (l, pos, sim) in filled {
            let language = all[l].to_string();
            if points.iter().any(|p| p.language == language && p.position == pos) {
                continue;
            }
            points.push(EvidencePoint {
                language,
                position: pos,
                sim: SimilarityScore::clamped(sim),
                rank: SourceRank::from_raw(100, 10_000_000),
            });
        }
        let v = assemble_ce_block(&points, &languages, top_n).unwrap();
        prop_assert_eq!(v.len(), ce_dimension(langs, top_n));
        prop_assert!(v.values().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn tfidf_rows_unit_norm(docs in prop::collection::vec("[a-c]{1,2}( [a-c]{1,2}){1,6}", 3..12)) {
        let tf = TfidfVectorizer::fit(&docs, TfidfConfig::default());
        for d in &docs {
            let v = tf.transform(d);
            let n = v.l2_norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
        }
        let mut sorted = tf.vocabulary().to_vec();
        sorted.sort();
        prop_assert_eq!(sorted, tf.vocabulary().to_vec());
    }

    #[test]
    fn syllables_at_least_one(w in "\\PC{0,12}") {
        prop_assert!(count_syllables(&w) >= 1);
    }

    #[test]
    fn majority_is_permutation_invariant(mut ls in prop::collection::vec(pair_label(), 1..8), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let before = majority_label(&ls).unwrap();
        ls.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(before, majority_label(&ls).unwrap());
        let vs: Vec<Verdict> = ls.iter().map(|l| if *l == PairLabel::Support { Verdict::Legit } else { Verdict::Fake }).collect();
        let mut shuffled = vs.clone();
        shuffled.reverse();
        prop_assert_eq!(majority_verdict(&vs).unwrap(), majority_verdict(&shuffled).unwrap());
    }

    #[test]
    fn alpha_invariant_under_relabeling(matrix in prop::collection::vec(prop::collection::vec(prop::option::of(0u8..3), 5), 3)) {
        let relabeled: Vec<Vec<Option<u8>>> = matrix.iter().map(|r| r.iter().map(|c| c.map(|v| (v + 1) % 3)).collect()).collect();
        match (krippendorff_alpha(&matrix), krippendorff_alpha(&relabeled)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!(a <= 1.0 + 1e-12);
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn alpha_drops_when_consensus_broken(values in prop::collection::vec(0u8..3, 4..8), flip in 0usize..8) {
        let distinct = values.iter().collect::<std::collections::BTreeSet<_>>().len();
        prop_assume!(distinct >= 2);
        let consensus: Vec<Vec<Option<u8>>> = (0..3).map(|_| values.iter().map(|v| Some(*v)).collect()).collect();
        prop_assert_eq!(krippendorff_alpha(&consensus).unwrap(), 1.0);
        let mut broken = consensus.clone();
        let i = flip % values.len();
        broken[0][i] = Some((values[i] + 1) % 3);
        prop_assert!(krippendorff_alpha(&broken).unwrap() < 1.0);
    }

    #[test]
    fn plans_are_balanced(annotators in 2usize..8, per_article in 1usize..4, articles in 1usize..20, seed in any::<u64>()) {
        prop_assume!(per_article <= annotators);
        prop_assume!((articles * per_article) % annotators == 0);
        let per_annotator = articles * per_article / annotators;
        prop_assume!(per_annotator <= articles);
        let arts: Vec<String> = (0..articles).map(|i| format!("a{i}")).collect();
        let anns: Vec<String> = (0..annotators).map(|i| format!("p{i}")).collect();
        let plan = create_study(&arts, &anns, per_annotator, per_article, seed).unwrap();
        for a in &arts {
            prop_assert_eq!(plan.annotators_for(a).len(), per_article);
        }
        for list in plan.assignment.values() {
            prop_assert_eq!(list.len(), per_annotator);
        }
    }

    #[test]
    fn folds_partition_and_stratify(n_fake in 5usize..40, n_legit in 5usize..40, seed in any::<u64>()) {
        let labels: Vec<Label> = (0..n_fake).map(|_| Label::Fake).chain((0..n_legit).map(|_| Label::Legit)).collect();
        let folds = stratified_folds(&labels, 5, seed).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for f in &folds {
            let fakes = f.iter().filter(|&&i| labels[i] == Label::Fake).count();
            prop_assert!(fakes.abs_diff(n_fake / 5) <= 1);
        }
    }

    #[test]
    fn t_test_antisymmetric(a in prop::collection::vec(0.0f64..1.0, 3..10), shift in -0.5f64..0.5) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x + shift + 0.01 * i as f64).collect();
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!((ab.t + ba.t).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn tuned_theta_on_grid(scores in prop::collection::vec(0.0f64..1.0, 4..50)) {
        let pairs: Vec<(f64, GoldLabel)> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, if i % 2 == 0 { GoldLabel::Support } else { GoldLabel::NotSupport }))
            .collect();
        let fit = tune_threshold(&pairs).unwrap();
        prop_assert!((1..=9).any(|k| (fit.theta - k as f64 / 10.0).abs() < 1e-12));
        let best = fit.grid.iter().map(|g| g.1).fold(0.0, f64::max);
        prop_assert_eq!(fit.accuracy, best);
    }
}
