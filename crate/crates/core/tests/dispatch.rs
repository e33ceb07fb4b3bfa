use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::Router;
use metafuse_core::allocator::Quota;
use metafuse_core::dispatcher::{DispatchPlan, Dispatcher, LocalEngine};
use metafuse_core::model::{EndpointKind, EngineDescriptor, EngineStatus, Query, SearchResult};

async fn mock(router: Router) -> String {
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    format!("http://{addr}")
}

fn items(n: usize) -> String {
    let items: Vec<_> = (0..n)
        .map(|i| serde_json::json!({"url": format!("https://m.example/{i}"), "title": format!("t{i}"), "snippet": "s"}))
        .collect();
    serde_json::json!({ "items": items }).to_string()
}

fn plan(engines: Vec<(EngineDescriptor, usize)>, deadline_ms: u64) -> DispatchPlan {
    let targets = engines
        .into_iter()
        .map(|(e, count)| {
            let quota = Quota { engine_id: e.id.clone(), count };
            (e, quota)
        })
        .collect();
    DispatchPlan::new(Query::parse("web search").unwrap(), targets, deadline_ms).unwrap()
}

#[tokio::test]
async fn failures_are_isolated_per_engine() {
    let base = mock(
        Router::new()
            .route("/ok", get(|| async { items(5) }))
            .route("/boom", get(|| async { (StatusCode::INTERNAL_SERVER_ERROR, "no") }))
            .route("/garbage", get(|| async { "{not json" }))
            .route("/slow", get(|| async {
                tokio::time::sleep(Duration::from_millis(800)).await;
                items(1)
            })),
    )
    .await;
    let engine = |id: &str, path: &str, timeout| EngineDescriptor::http_get(id, &format!("{base}/{path}?q={{query}}"), timeout);
    let lists = Dispatcher::new()
        .dispatch_all(&plan(
            vec![
                (engine("ok", "ok", 1000), 10),
                (engine("boom", "boom", 1000), 10),
                (engine("garbage", "garbage", 1000), 10),
                (engine("slow", "slow", 150), 10),
                (EngineDescriptor::http_get("refused", "http://127.0.0.1:1/?q={query}", 500), 10),
            ],
            2_000,
        ))
        .await;
    let statuses: Vec<(&str, EngineStatus)> = lists.iter().map(|l| (l.engine_id.as_str(), l.status)).collect();
    assert_eq!(
        statuses,
        vec![
            ("ok", EngineStatus::Ok),
            ("boom", EngineStatus::HttpError),
            ("garbage", EngineStatus::ParseError),
            ("slow", EngineStatus::Timeout),
            ("refused", EngineStatus::HttpError),
        ]
    );
    assert_eq!(lists[0].results.len(), 5);
    assert!(lists[1..].iter().all(|l| l.results.is_empty()));
    assert!(lists.iter().all(|l| l.is_well_formed()));
}

#[tokio::test]
async fn results_are_truncated_to_quota() {
    // the engine ignores `count` and always returns 12 items
    let base = mock(Router::new().route("/s", get(|| async { items(12) }))).await;
    let e = EngineDescriptor::http_get("E", &format!("{base}/s?q={{query}}"), 1000);
    let lists = Dispatcher::new().dispatch_all(&plan(vec![(e, 4)], 1000)).await;
    let ranks: Vec<u32> = lists[0].results.iter().map(|r| r.rank).collect();
    assert_eq!(ranks, vec![1, 2, 3, 4]);
}

#[tokio::test]
async fn deadline_caps_engine_timeout() {
    let base = mock(Router::new().route("/slow", get(|| async {
        tokio::time::sleep(Duration::from_millis(600)).await;
        items(1)
    })))
    .await;
    let e = EngineDescriptor::http_get("E", &format!("{base}/slow?q={{query}}"), 5_000);
    let started = Instant::now();
    let lists = Dispatcher::new().dispatch_all(&plan(vec![(e, 3)], 200)).await;
    assert_eq!(lists[0].status, EngineStatus::Timeout);
    assert!(started.elapsed() < Duration::from_millis(500));
}

#[tokio::test]
async fn post_engines_receive_form_body() {
    let base = mock(Router::new().route(
        "/search",
        post(|body: String| async move {
            assert_eq!(body, "q=web%20search&count=2");
            items(2)
        }),
    ))
    .await;
    let mut e = EngineDescriptor::http_get("P", &format!("{base}/search"), 1000);
    e.endpoint_kind = EndpointKind::HttpPost;
    let lists = Dispatcher::new().dispatch_all(&plan(vec![(e, 2)], 1000)).await;
    assert_eq!(lists[0].status, EngineStatus::Ok);
    assert_eq!(lists[0].results.len(), 2);
}

struct Fixed(Duration);

impl LocalEngine for Fixed {
    fn search(&self, terms: &[String], count: usize) -> Vec<SearchResult> {
        (0..count)
            .map(|i| SearchResult::new("L", &format!("https://local.example/{}/{i}", terms.join("-")), "t", "s", None).unwrap())
            .collect()
    }

    fn latency(&self) -> Duration {
        self.0
    }
}

#[tokio::test]
async fn local_engines_run_concurrently() {
    let mut dispatcher = Dispatcher::new();
    let mut targets = Vec::new();
    for (i, ms) in [100u64, 200, 300].into_iter().enumerate() {
        let id = format!("L{i}");
        dispatcher = dispatcher.with_local(&id, Arc::new(Fixed(Duration::from_millis(ms))));
        let mut e = EngineDescriptor::http_get(&id, "", 1000);
        e.endpoint_kind = EndpointKind::InProcessSim;
        targets.push((e, 3));
    }
    let started = Instant::now();
    let lists = dispatcher.dispatch_all(&plan(targets, 2_000)).await;
    let wall = started.elapsed();
    assert!(wall < Duration::from_millis(550), "{wall:?}");
    assert!(lists.iter().all(|l| l.status == EngineStatus::Ok && l.results.len() == 3));
    assert_eq!(lists[0].results[0].url, "https://local.example/web-search/0");
}
