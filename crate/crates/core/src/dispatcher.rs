//! Query dispatch: per-engine query translation, concurrent fan-out with
//! timeouts, and parsing of heterogeneous JSON responses.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::future::join_all;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde_json::Value;

use crate::allocator::Quota;
use crate::error::{Error, Result};
use crate::model::{EndpointKind, EngineDescriptor, EngineStatus, ParserSpec, Query, RankedList, SearchResult, QUERY_PLACEHOLDER};

/// RFC 3986 unreserved characters stay literal; everything else is escaped.
const QUERY_ENCODE_SET: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

pub const MAX_REDIRECTS: usize = 3;

pub fn encode_component(text: &str) -> String {
    utf8_percent_encode(text, QUERY_ENCODE_SET).to_string()
}

/// A request ready to be sent to one engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutboundRequest {
    Get { url: String },
    Post { url: String, body: String },
    Local { terms: Vec<String>, count: usize },
}

/// Translates the query into the engine's request form, asking for `count`
/// results.
///
/// GET engines get the space-joined, percent-encoded terms substituted into
/// the `{query}` placeholder followed by a `count=` parameter. POST engines
/// get a form body `q=<terms>&count=<n>` and their URL is used verbatim.
pub fn translate_query(query: &Query, engine: &EngineDescriptor, count: usize) -> Result<OutboundRequest> {
    let template_error = |reason: &str| Error::TemplateError {
        engine_id: engine.id.clone(),
        reason: reason.to_string(),
    };
    let encoded = encode_component(&query.terms.join(" "));
    match engine.endpoint_kind {
        EndpointKind::HttpGet => {
            if engine.url_template.matches(QUERY_PLACEHOLDER).count() != 1 {
                return Err(template_error("url_template needs exactly one {query} placeholder"));
            }
            let mut url = engine.url_template.replace(QUERY_PLACEHOLDER, &encoded);
            url.push(if url.contains('?') { '&' } else { '?' });
            url.push_str(&format!("count={count}"));
            Ok(OutboundRequest::Get { url })
        }
        EndpointKind::HttpPost => {
            if engine.url_template.contains(QUERY_PLACEHOLDER) {
                return Err(template_error("http_post sends the query in the body; url_template must not contain {query}"));
            }
            Ok(OutboundRequest::Post {
                url: engine.url_template.clone(),
                body: format!("q={encoded}&count={count}"),
            })
        }
        EndpointKind::InProcessSim => Ok(OutboundRequest::Local {
            terms: query.terms.clone(),
            count,
        }),
    }
}

fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    let path = path.strip_prefix("$.").or_else(|| path.strip_prefix('$')).unwrap_or(path);
    path.split('.')
        .filter(|seg| !seg.is_empty())
        .try_fold(value, |node, seg| match node {
            Value::Object(map) => map.get(seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
            _ => None,
        })
}

/// Extracts ranked results from an engine response body.
///
/// The URL field is required; a missing title or snippet becomes an empty
/// string and a missing or non-numeric score leaves `native_score` unset.
pub fn parse_response(raw_body: &[u8], parser: &ParserSpec, engine_id: &str) -> Result<Vec<SearchResult>> {
    let fail = |reason: String| Error::ParseFailure {
        engine_id: engine_id.to_string(),
        reason,
    };
    let doc: Value = serde_json::from_slice(raw_body).map_err(|e| fail(format!("invalid JSON: {e}")))?;
    let items = lookup(&doc, &parser.items_path)
        .ok_or_else(|| fail(format!("no value at `{}`", parser.items_path)))?
        .as_array()
        .ok_or_else(|| fail(format!("`{}` is not an array", parser.items_path)))?;

    let text = |item: &Value, field: &str| lookup(item, field).and_then(Value::as_str).unwrap_or_default().to_string();

    let mut results = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let url = lookup(item, &parser.url_field)
            .and_then(Value::as_str)
            .ok_or_else(|| fail(format!("item {i} has no string `{}`", parser.url_field)))?;
        let score = parser
            .score_field
            .as_deref()
            .and_then(|f| lookup(item, f))
            .and_then(Value::as_f64);
        let mut result = SearchResult::new(engine_id, url, &text(item, &parser.title_field), &text(item, &parser.snippet_field), score)
            .map_err(|e| fail(format!("item {i}: {e}")))?;
        result.rank = i as u32 + 1;
        results.push(result);
    }
    Ok(results)
}

/// An engine answered in-process instead of over HTTP.
pub trait LocalEngine: Send + Sync {
    fn search(&self, terms: &[String], count: usize) -> Vec<SearchResult>;

    /// Artificial delay applied before answering.
    fn latency(&self) -> Duration {
        Duration::ZERO
    }
}

#[derive(Debug, Clone)]
pub struct Target {
    pub engine: EngineDescriptor,
    pub quota: Quota,
}

#[derive(Debug, Clone)]
pub struct DispatchPlan {
    pub query: Query,
    pub targets: Vec<Target>,
    pub deadline_ms: u64,
}

impl DispatchPlan {
    pub fn new(query: Query, targets: Vec<(EngineDescriptor, Quota)>, deadline_ms: u64) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Dispatch("plan has no targets".into()));
        }
        if let Some((disabled, _)) = targets.iter().find(|(e, _)| !e.enabled) {
            return Err(Error::Dispatch(format!("engine `{}` is disabled", disabled.id)));
        }
        Ok(DispatchPlan {
            query,
            targets: targets.into_iter().map(|(engine, quota)| Target { engine, quota }).collect(),
            deadline_ms: deadline_ms.max(1),
        })
    }
}

enum FetchError {
    Http(String),
    Parse(String),
}

impl fmt::Display for FetchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FetchError::Http(m) | FetchError::Parse(m) => f.write_str(m),
        }
    }
}

/// Fans a plan out to every target concurrently.
///
/// Holds no per-query state and can be shared across request handlers.
#[derive(Clone)]
pub struct Dispatcher {
    http: reqwest::Client,
    local: HashMap<String, Arc<dyn LocalEngine>>,
}

impl Default for Dispatcher {
    fn default() -> Self {
        Dispatcher::new()
    }
}

impl Dispatcher {
    pub fn new() -> Self {
        let http = reqwest::Client::builder()
            .redirect(reqwest::redirect::Policy::limited(MAX_REDIRECTS))
            .build()
            .expect("http client configuration is static");
        Dispatcher {
            http,
            local: HashMap::new(),
        }
    }

    /// Registers an in-process engine answering for `engine_id`.
    pub fn with_local(mut self, engine_id: &str, engine: Arc<dyn LocalEngine>) -> Self {
        self.local.insert(engine_id.to_string(), engine);
        self
    }

    /// One `RankedList` per target, in plan order. Each target gets
    /// `min(timeout_ms, deadline_ms)`; failures are reported per engine.
    pub async fn dispatch_all(&self, plan: &DispatchPlan) -> Vec<RankedList> {
        let requests = plan
            .targets
            .iter()
            .map(|target| self.dispatch_one(&plan.query, target, plan.deadline_ms));
        join_all(requests).await
    }

    async fn dispatch_one(&self, query: &Query, target: &Target, deadline_ms: u64) -> RankedList {
        let engine = &target.engine;
        let budget = Duration::from_millis(engine.timeout_ms.min(deadline_ms));
        let started = Instant::now();
        let outcome = tokio::time::timeout(budget, self.fetch(query, engine, target.quota.count)).await;
        let latency_ms = started.elapsed().as_secs_f64() * 1000.0;

        match outcome {
            Ok(Ok(mut results)) => {
                results.truncate(target.quota.count);
                RankedList::ok(&engine.id, results, latency_ms)
            }
            Ok(Err(err)) => {
                tracing::warn!(engine = %engine.id, error = %err, "engine request failed");
                let status = match err {
                    FetchError::Http(_) => EngineStatus::HttpError,
                    FetchError::Parse(_) => EngineStatus::ParseError,
                };
                RankedList::failed(&engine.id, status, latency_ms)
            }
            Err(_) => {
                tracing::warn!(engine = %engine.id, budget_ms = budget.as_millis() as u64, "engine timed out");
                RankedList::failed(&engine.id, EngineStatus::Timeout, latency_ms)
            }
        }
    }

    async fn fetch(&self, query: &Query, engine: &EngineDescriptor, count: usize) -> std::result::Result<Vec<SearchResult>, FetchError> {
        let request = translate_query(query, engine, count).map_err(|e| FetchError::Http(e.to_string()))?;
        let response = match request {
            OutboundRequest::Local { terms, count } => {
                let local = self
                    .local
                    .get(&engine.id)
                    .ok_or_else(|| FetchError::Http(format!("no in-process engine registered for `{}`", engine.id)))?;
                tokio::time::sleep(local.latency()).await;
                return Ok(local.search(&terms, count));
            }
            OutboundRequest::Get { url } => self.http.get(url).send().await,
            OutboundRequest::Post { url, body } => {
                self.http
                    .post(url)
                    .header(reqwest::header::CONTENT_TYPE, "application/x-www-form-urlencoded")
                    .body(body)
                    .send()
                    .await
            }
        }
        .map_err(|e| FetchError::Http(e.to_string()))?;

        let status = response.status();
        if !status.is_success() {
            return Err(FetchError::Http(format!("status {status}")));
        }
        let body = response.bytes().await.map_err(|e| FetchError::Http(e.to_string()))?;
        parse_response(&body, &engine.parser, &engine.id).map_err(|e| FetchError::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParserFormat;

    fn get_engine(template: &str) -> EngineDescriptor {
        EngineDescriptor::http_get("e", template, 1000)
    }

    #[test]
    fn get_translation() {
        let q = Query::parse("web search").unwrap();
        let req = translate_query(&q, &get_engine("http://e/q?s={query}"), 10).unwrap();
        assert_eq!(req, OutboundRequest::Get { url: "http://e/q?s=web%20search&count=10".into() });
        let req = translate_query(&q, &get_engine("http://e/{query}"), 3).unwrap();
        assert_eq!(req, OutboundRequest::Get { url: "http://e/web%20search?count=3".into() });
    }

    #[test]
    fn reserved_characters_are_encoded() {
        let q = Query::parse("a&b c++").unwrap();
        let OutboundRequest::Get { url } = translate_query(&q, &get_engine("http://e/q?s={query}"), 1).unwrap() else {
            panic!("expected GET");
        };
        assert_eq!(url, "http://e/q?s=a%26b%20c%2B%2B&count=1");
    }

    #[test]
    fn post_translation() {
        let q = Query::parse("web search").unwrap();
        let mut engine = get_engine("http://e/search");
        engine.endpoint_kind = EndpointKind::HttpPost;
        let req = translate_query(&q, &engine, 10).unwrap();
        // oracle: encode through the url crate's form serializer and undo `+`
        let oracle = url::form_urlencoded::Serializer::new(String::new())
            .append_pair("q", "web search")
            .append_pair("count", "10")
            .finish()
            .replace('+', "%20");
        assert_eq!(req, OutboundRequest::Post { url: "http://e/search".into(), body: oracle });

        engine.url_template = "http://e/search?s={query}".into();
        assert!(matches!(translate_query(&q, &engine, 10), Err(Error::TemplateError { .. })));
    }

    #[test]
    fn get_without_placeholder_is_a_template_error() {
        let q = Query::parse("x").unwrap();
        assert!(matches!(translate_query(&q, &get_engine("http://e/q"), 1), Err(Error::TemplateError { .. })));
    }

    #[test]
    fn parses_items_in_order() {
        let body = br#"{"items":[
            {"url":"http://A.com/1/","title":"one","snippet":"s1"},
            {"url":"http://a.com/2","title":"two","snippet":"s2"},
            {"url":"http://a.com/3","title":"three","snippet":"s3"}]}"#;
        let results = parse_response(body, &ParserSpec::default(), "e").unwrap();
        assert_eq!(results.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(results[0].canonical_url, "http://a.com/1");
        assert_eq!(results[0].url, "http://A.com/1/");
        assert!(results.iter().all(|r| r.native_score.is_none()));
    }

    #[test]
    fn empty_items_is_fine() {
        assert!(parse_response(br#"{"items":[]}"#, &ParserSpec::default(), "e").unwrap().is_empty());
    }

    #[test]
    fn missing_url_fails() {
        let body = br#"{"items":[{"title":"no url"}]}"#;
        assert!(matches!(parse_response(body, &ParserSpec::default(), "e"), Err(Error::ParseFailure { .. })));
        assert!(parse_response(b"<html>", &ParserSpec::default(), "e").is_err());
        assert!(parse_response(br#"{"items":{}}"#, &ParserSpec::default(), "e").is_err());
    }

    #[test]
    fn nested_paths_and_scores() {
        let parser = ParserSpec {
            format: ParserFormat::JsonPaths,
            items_path: "$.data.web.0.hits".into(),
            url_field: "link.href".into(),
            title_field: "name".into(),
            snippet_field: "desc".into(),
            score_field: Some("relevance".into()),
        };
        let body = br#"{"data":{"web":[{"hits":[
            {"link":{"href":"https://b.org/x"},"name":"X","relevance":0.7},
            {"link":{"href":"https://b.org/y"},"name":"Y","relevance":"high"}]}]}}"#;
        let results = parse_response(body, &parser, "e").unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].native_score, Some(0.7));
        assert_eq!(results[1].native_score, None);
        assert_eq!(results[1].snippet, "");
    }
}
