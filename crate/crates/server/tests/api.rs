use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use multiverse::corpus::{EvidenceDoc, Label, NewsArticle};
use multiverse::study::{tasks_for_article, NextTask, Study, StudyDefinition, StudyStats};
use multiverse_server::{router, ErrorBody, Registry};
use serde_json::{json, Value};
use tower::ServiceExt;

const ANNOTATORS: [&str; 3] = ["ann-a", "ann-b", "ann-c"];

fn docs(article: &str) -> Vec<EvidenceDoc> {
    ["en", "de"]
        .iter()
        .flat_map(|l| {
            (1..=2).map(move |p| EvidenceDoc {
                url: format!("https://news.example/{article}/{l}/{p}"),
                title: format!("{article} {l} {p}"),
                content: String::new(),
                language: l.to_string(),
                position: p,
                source_domain: "news.example".into(),
                is_html: true,
            })
        })
        .collect()
}

fn registry() -> Registry {
    let fake = NewsArticle::new("f1", "Fake claim", "", "", Label::Fake);
    let legit = NewsArticle::new("l1", "Real event", "", "", Label::Legit);
    let mut tasks = tasks_for_article(&fake, &docs("f1"), None);
    tasks.extend(tasks_for_article(&legit, &docs("l1"), None));
    let annotators: Vec<String> = ANNOTATORS.iter().map(|s| s.to_string()).collect();
    let def = StudyDefinition::new("pilot", tasks, &annotators, 2, 3, 7).unwrap();
    let reg = Registry::new();
    reg.insert(Study::new(def).unwrap());
    reg
}

async fn call(reg: &Registry, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(reg.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

/// Scripted client: Refute for fake pairs, Support for legit, gold verdict.
async fn run_session(reg: &Registry, annotator: &str) -> usize {
    let mut labeled = 0;
    loop {
        let (status, v) = call(reg, "GET", &format!("/study/pilot/next-task?annotator={annotator}"), None).await;
        assert_eq!(status, StatusCode::OK);
        match serde_json::from_value::<NextTask>(v).unwrap() {
            NextTask::Label { task, .. } => {
                let label = if task.original.label == Label::Fake { "Refute" } else { "Support" };
                let body = json!({"task_id": task.task_id, "annotator_id": annotator, "label": label});
                let (status, out) = call(reg, "POST", "/study/pilot/labels", Some(body)).await;
                assert_eq!(status, StatusCode::CREATED, "{out}");
                assert_eq!(out["superseded"], false);
                labeled += 1;
            }
            NextTask::Verdict { article_id, original } => {
                let verdict = if original.label == Label::Fake { "fake" } else { "legit" };
                let body = json!({"article_id": article_id, "annotator_id": annotator, "verdict": verdict});
                let (status, out) = call(reg, "POST", "/study/pilot/verdicts", Some(body)).await;
                assert_eq!(status, StatusCode::CREATED, "{out}");
            }
            NextTask::Done => return labeled,
        }
    }
}

#[tokio::test]
async fn scripted_sessions_reach_full_agreement() {
    let reg = registry();
    for a in ANNOTATORS {
        assert_eq!(run_session(&reg, a).await, 8);
    }
    let (status, progress) = call(&reg, "GET", "/study/pilot/progress", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(progress["labels"], json!({"completed": 24, "total": 24}));
    assert_eq!(progress["verdicts"], json!({"completed": 6, "total": 6}));
    // per annotator: 8 labels + 2 verdicts
    assert_eq!(progress["per_annotator"]["ann-b"], json!({"completed": 10, "total": 10}));

    let (status, raw) = call(&reg, "GET", "/study/pilot/stats", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(raw["alpha"], 1.0);
    let stats: StudyStats = serde_json::from_value(raw.clone()).unwrap();
    assert_eq!(stats.verdict_alpha, Some(1.0));
    assert_eq!(stats.accuracy.unwrap().overall, 1.0);
    // Figure-3 shape: per gold class, per language, every answer column
    let refuted = json!({"Support": 0, "Refute": 6, "NotEnoughInfo": 0});
    let supported = json!({"Support": 6, "Refute": 0, "NotEnoughInfo": 0});
    assert_eq!(raw["distributions"]["fake"]["en"], refuted);
    assert_eq!(raw["distributions"]["fake"]["de"], refuted);
    assert_eq!(raw["distributions"]["legit"]["en"], supported);
    assert_eq!(raw["distributions"]["legit"]["de"], supported);
    assert_eq!(stats.distributions.total(), stats.label_records);
}

#[tokio::test]
async fn resubmission_supersedes() {
    let reg = registry();
    let (_, v) = call(&reg, "GET", "/study/pilot/next-task?annotator=ann-a", None).await;
    let task_id = v["task"]["task_id"].as_str().unwrap().to_string();
    let body = |label: &str| json!({"task_id": task_id, "annotator_id": "ann-a", "label": label});
    let (_, first) = call(&reg, "POST", "/study/pilot/labels", Some(body("nei"))).await;
    assert_eq!(first["superseded"], false);
    let (status, second) = call(&reg, "POST", "/study/pilot/labels", Some(body("support"))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(second["superseded"], true);
    assert_eq!(second["record"]["label"], "Support");
    let (_, stats) = call(&reg, "GET", "/study/pilot/stats", None).await;
    assert_eq!(stats["label_records"], 1);
}

async fn expect_error(reg: &Registry, method: &str, uri: &str, body: Option<Value>, status: StatusCode, code: &str) {
    let (got, v) = call(reg, method, uri, body).await;
    assert_eq!(got, status, "{uri}: {v}");
    let err: ErrorBody = serde_json::from_value(v).unwrap();
    assert_eq!(err.error, code);
    assert!(!err.message.is_empty());
}

#[tokio::test]
async fn errors_map_to_statuses() {
    let reg = registry();
    expect_error(&reg, "GET", "/study/nope/stats", None, StatusCode::NOT_FOUND, "unknown_study").await;
    expect_error(&reg, "GET", "/study/pilot/next-task", None, StatusCode::BAD_REQUEST, "bad_request").await;
    expect_error(&reg, "GET", "/study/pilot/next-task?annotator=zed", None, StatusCode::NOT_FOUND, "unknown_annotator").await;
    let label = json!({"task_id": "zz:en:1", "annotator_id": "ann-a", "label": "Support"});
    expect_error(&reg, "POST", "/study/pilot/labels", Some(label), StatusCode::NOT_FOUND, "unknown_task").await;
    let bad_label = json!({"task_id": "f1:en:1", "annotator_id": "ann-a", "label": "maybe"});
    expect_error(&reg, "POST", "/study/pilot/labels", Some(bad_label), StatusCode::BAD_REQUEST, "bad_request").await;
    let early = json!({"article_id": "f1", "annotator_id": "ann-a", "verdict": "fake"});
    expect_error(&reg, "POST", "/study/pilot/verdicts", Some(early), StatusCode::CONFLICT, "pairs_incomplete").await;
    let unknown = json!({"article_id": "x9", "annotator_id": "ann-a", "verdict": "fake"});
    expect_error(&reg, "POST", "/study/pilot/verdicts", Some(unknown), StatusCode::NOT_FOUND, "unknown_article").await;
    expect_error(&reg, "GET", "/nowhere", None, StatusCode::NOT_FOUND, "no_route").await;
}

#[tokio::test]
async fn lists_studies() {
    let reg = registry();
    let (status, v) = call(&reg, "GET", "/studies", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!(["pilot"]));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn serves_over_tcp() {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(multiverse_server::serve(listener, registry(), async {
        let _ = rx.await;
    }));
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    stream
        .write_all(b"GET /study/pilot/progress HTTP/1.1\r\nhost: localhost\r\nconnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"), "{buf}");
    assert!(buf.contains("\"total\":24"), "{buf}");
    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}
