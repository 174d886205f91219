use std::collections::HashMap;

use multiverse::corpus::{EvidenceDoc, Label, NewsArticle};
use multiverse::credibility::normalize_rank;
use multiverse::features::{TfidfConfig, TfidfVectorizer};
use multiverse::model::{paired_t_test, TTestFlag};
use multiverse::similarity::{build_nli_input, cosine_similarity, Embedder, ReferenceEmbedder};
use multiverse::study::krippendorff_alpha;

fn exact_ngrams(text: &str) -> HashMap<String, f64> {
    let mut norm = String::from(" ");
    for c in text.to_lowercase().chars() {
        let c = if c.is_alphanumeric() { c } else { ' ' };
        if !(c == ' ' && norm.ends_with(' ')) {
            norm.push(c);
        }
    }
    if !norm.ends_with(' ') {
        norm.push(' ');
    }
    let chars: Vec<char> = norm.chars().collect();
    let mut counts = HashMap::new();
    for n in 3..=5 {
        for w in chars.windows(n) {
            *counts.entry(w.iter().collect::<String>()).or_insert(0.0) += 1.0;
        }
    }
    counts
}

fn fnv_bucket(gram: &str, dim: u64) -> String {
    let h = gram
        .bytes()
        .fold(14_695_981_039_346_656_037u64, |h, b| (h ^ b as u64).wrapping_mul(1_099_511_628_211));
    (h % dim).to_string()
}

fn hashed(counts: HashMap<String, f64>) -> HashMap<String, f64> {
    let mut out = HashMap::new();
    for (g, c) in counts {
        *out.entry(fnv_bucket(&g, 1 << 14)).or_insert(0.0) += c;
    }
    out
}

fn cosine_of(x: &HashMap<String, f64>, y: &HashMap<String, f64>) -> f64 {
    let dot: f64 = x.iter().map(|(k, v)| v * y.get(k).unwrap_or(&0.0)).sum();
    let nx = x.values().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.values().map(|v| v * v).sum::<f64>().sqrt();
    dot / (nx * ny)
}

#[test]
fn reference_embedder_matches_ngram_oracle() {
    let pairs = [
        ("Bubonic plague outbreak in Mongolia", "Bubonic plague: Case found in China's Inner Mongolia - CNN"),
        ("Lottery winner arrested for dumping manure", "Lottery winner arrested for dumping $200,000 of manure on ex-boss' lawn"),
        ("Teenager dies of Black Death in Mongolia", "Weather forecast for the weekend"),
        ("В Монголии произошла вспышка бубонной чумы", "Возвращение Черной смерти: главное о вспышке бубонной чумы"),
        ("same text", "SAME   text!"),
    ];
    let e = ReferenceEmbedder::default();
    for (a, b) in pairs {
        let got = cosine_similarity(&e.embed(a).unwrap(), &e.embed(b).unwrap()).unwrap();
        let (x, y) = (exact_ngrams(a), exact_ngrams(b));
        let want = cosine_of(&hashed(x.clone()), &hashed(y.clone()));
        assert!((got - want).abs() < 1e-9, "{a} / {b}: {got} vs {want}");
        // bucket collisions only nudge the value
        assert!((got - cosine_of(&x, &y)).abs() < 0.05, "{a} / {b}");
    }
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let t = x + 7.5;
    let s: f64 = C[0] + (1..9).map(|i| C[i] / (x + i as f64)).sum::<f64>();
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

/// Two-sided p from Simpson integration of the t density on [0, |t|].
fn simpson_p(t: f64, df: f64) -> f64 {
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let f = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let n = 20_000;
    let h = t.abs() / n as f64;
    let mut s = f(0.0) + f(t.abs());
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

#[test]
fn t_test_p_matches_quadrature() {
    let cases: [(&[f64], &[f64]); 4] = [
        (&[0.81, 0.79, 0.84, 0.80, 0.83], &[0.70, 0.74, 0.69, 0.73, 0.71]),
        (&[0.5, 0.6, 0.55, 0.52, 0.58], &[0.51, 0.57, 0.56, 0.50, 0.60]),
        (&[1.0, 2.0, 3.0], &[1.5, 1.0, 3.2]),
        (&[0.9, 0.91, 0.95, 0.92, 0.97, 0.93, 0.90, 0.94, 0.96, 0.91], &[0.6, 0.7, 0.65, 0.66, 0.72, 0.61, 0.69, 0.63, 0.7, 0.64]),
    ];
    for (a, b) in cases {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let t = mean / (sd / n.sqrt());
        let r = paired_t_test(a, b).unwrap();
        assert!((r.t - t).abs() < 1e-9, "t {} vs {t}", r.t);
        assert_eq!(r.df, d.len() - 1);
        let want = simpson_p(t, n - 1.0);
        assert!((r.p_value - want).abs() < 1e-6, "p {} vs {want}", r.p_value);
    }
}

#[test]
fn t_test_degenerate_conventions() {
    let same = paired_t_test(&[0.5, 0.6, 0.7], &[0.5, 0.6, 0.7]).unwrap();
    assert_eq!((same.t, same.p_value, same.flag), (0.0, 1.0, Some(TTestFlag::IdenticalSamples)));
    let shifted = paired_t_test(&[0.6, 0.7, 0.8], &[0.5, 0.6, 0.7]).unwrap();
    assert_eq!(shifted.p_value, 0.0);
    assert_eq!(shifted.t, f64::INFINITY);
    assert_eq!(shifted.flag, Some(TTestFlag::ZeroVariance));
    assert!(paired_t_test(&[1.0], &[2.0]).is_err());
}

#[test]
fn alpha_two_by_two_hand_calculation() {
    // units (A,B) and (B,A): o_AB = o_BA = 2, n_A = n_B = 2, n = 4
    // D_o = 4, D_e = (2*2 + 2*2) / 3 = 8/3, alpha = 1 - 4 / (8/3) = -0.5
    let m = vec![vec![Some('A'), Some('B')], vec![Some('B'), Some('A')]];
    assert!((krippendorff_alpha(&m).unwrap() - (-0.5)).abs() < 1e-12);
    // three coders, two units: (A,A,B) and (B,B,B)
    // o_AA = 1, o_AB = o_BA = 1, o_BB = 3; n_A = 2, n_B = 4, n = 6
    // alpha = 1 - (n-1) * 2 / (2 * n_A * n_B) = 1 - 5 * 2 / 16 = 0.375
    let m = vec![vec![Some('A'), Some('B')], vec![Some('A'), Some('B')], vec![Some('B'), Some('B')]];
    assert!((krippendorff_alpha(&m).unwrap() - 0.375).abs() < 1e-12);
}

#[test]
fn tfidf_weights_by_hand() {
    let docs = ["red apple", "red car", "blue car"];
    let tf = TfidfVectorizer::fit(&docs, TfidfConfig { min_df: 2, max_features: 100 });
    assert_eq!(tf.vocabulary(), ["car", "red"]);
    let idf = ((1.0f64 + 3.0) / (1.0 + 2.0)).ln() + 1.0;
    assert!((tf.idf("red").unwrap() - idf).abs() < 1e-12);
    let v = tf.transform("red red car apple");
    // raw weights 2*idf and 1*idf, then L2
    let (r, c) = (2.0 * idf, idf);
    let norm = (r * r + c * c).sqrt();
    assert!((v.get("ngram:red").unwrap() - r / norm).abs() < 1e-12);
    assert!((v.get("ngram:car").unwrap() - c / norm).abs() < 1e-12);
}

#[test]
fn rank_normalization_values() {
    assert_eq!(normalize_rank(1, 10_000_000), 1.0);
    assert!((normalize_rank(1000, 10_000_000) - (1.0 - 3.0 / 7.0)).abs() < 1e-12);
    assert_eq!(normalize_rank(10_000_000, 10_000_000), 0.0);
    assert_eq!(normalize_rank(50_000_000, 10_000_000), 0.0);
}

#[test]
fn nli_premise_format() {
    let original = NewsArticle::new("a", "Plague found", "One case in Mongolia was confirmed.", "", Label::Legit);
    let doc = EvidenceDoc {
        url: "https://example.org/x".into(),
        title: "Case confirmed".into(),
        content: "Officials confirmed a case.".into(),
        language: "en".into(),
        position: 1,
        source_domain: "example.org".into(),
        is_html: true,
    };
    let input = build_nli_input(&original, &doc, 8);
    assert_eq!(input.premise, "The news \"Plague found One case\" is legit");
    assert_eq!(input.hypothesis, "Case confirmed Official");
}
