//! Domain types shared by every stage of the pipeline, plus query
//! normalization and URL canonicalization.
//!
//! Field names are part of the JSON API and serialize in snake_case.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::{Error, Result};

/// Presentation mode of a merged response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// One section per engine, no post-processing.
    Grouped,
    /// A single fused and deduplicated ranking.
    #[default]
    Unified,
}

impl FromStr for MergeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grouped" => Ok(MergeMode::Grouped),
            "unified" => Ok(MergeMode::Unified),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for MergeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MergeMode::Grouped => "grouped",
            MergeMode::Unified => "unified",
        })
    }
}

/// Rank-only fusion used in unified mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    RoundRobin,
    Borda,
    #[default]
    Rrf,
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round_robin" => Ok(FusionMethod::RoundRobin),
            "borda" => Ok(FusionMethod::Borda),
            "rrf" => Ok(FusionMethod::Rrf),
            other => Err(Error::UnknownFusion(other.to_string())),
        }
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMethod::RoundRobin => "round_robin",
            FusionMethod::Borda => "borda",
            FusionMethod::Rrf => "rrf",
        })
    }
}

/// A normalized user query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub raw_text: String,
    pub terms: Vec<String>,
    pub limit: usize,
    pub mode: MergeMode,
    pub fusion: FusionMethod,
}

impl Query {
    pub fn new(raw_text: &str, limit: usize, mode: MergeMode, fusion: FusionMethod) -> Result<Self> {
        let terms = normalize_query(raw_text)?;
        Ok(Query {
            raw_text: raw_text.to_string(),
            terms,
            limit: limit.max(1),
            mode,
            fusion,
        })
    }

    /// Shorthand for a unified RRF query with a limit of 10.
    pub fn parse(raw_text: &str) -> Result<Self> {
        Query::new(raw_text, 10, MergeMode::Unified, FusionMethod::Rrf)
    }
}

// Sentence punctuation stripped from token edges. Symbols such as `+` or `#`
// are kept so that tokens like `c++` and `c#` survive.
const EDGE_PUNCTUATION: &[char] = &[
    '.', ',', '!', '?', ';', ':', '"', '\'', '(', ')', '[', ']', '{', '}', '`', '\u{201c}',
    '\u{201d}', '\u{2018}', '\u{2019}', '\u{ab}', '\u{bb}', '\u{bf}', '\u{a1}',
];

/// Splits text into lowercase tokens with edge punctuation trimmed. Never fails;
/// used for both queries and document text.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| raw.to_lowercase())
        .map(|lower| lower.trim_matches(EDGE_PUNCTUATION).to_string())
        .filter(|tok| !tok.is_empty())
        .collect()
}

/// Normalizes raw query text into ordered search terms.
pub fn normalize_query(raw_text: &str) -> Result<Vec<String>> {
    let terms = tokenize(raw_text);
    if terms.is_empty() {
        return Err(Error::EmptyQuery);
    }
    Ok(terms)
}

/// Canonical form of a URL, used as the deduplication key.
///
/// Scheme and host are lowercased, default ports dropped, the fragment
/// removed, trailing slashes trimmed from non-root paths and query pairs
/// sorted by key then value. Path case is preserved.
pub fn canonicalize_url(raw: &str) -> Result<String> {
    let mut url = Url::parse(raw.trim()).map_err(|e| Error::MalformedUrl {
        url: raw.to_string(),
        reason: e.to_string(),
    })?;

    url.set_fragment(None);

    if !url.cannot_be_a_base() {
        let trimmed = url.path().trim_end_matches('/');
        let path = if trimmed.is_empty() { "/".to_string() } else { trimmed.to_string() };
        url.set_path(&path);
    }

    let sorted_query = url.query().map(|query| {
        let mut pairs: Vec<&str> = query.split('&').filter(|pair| !pair.is_empty()).collect();
        // stable sort: repeated keys stay as distinct entries
        pairs.sort_by(|a, b| split_pair(a).cmp(&split_pair(b)));
        pairs.join("&")
    });
    match sorted_query {
        Some(q) if !q.is_empty() => url.set_query(Some(&q)),
        _ => url.set_query(None),
    }

    Ok(url.to_string())
}

fn split_pair(pair: &str) -> (&str, &str) {
    pair.split_once('=').unwrap_or((pair, ""))
}

/// How results are extracted from an engine's JSON response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserFormat {
    #[default]
    JsonPaths,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParserSpec {
    #[serde(default)]
    pub format: ParserFormat,
    /// Dot-separated path to the array of result items. Numeric segments
    /// index into arrays; an optional leading `$.` is ignored.
    pub items_path: String,
    pub url_field: String,
    pub title_field: String,
    pub snippet_field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_field: Option<String>,
}

impl Default for ParserSpec {
    /// Matches the `{"items":[{"url","title","snippet"}]}` shape served by
    /// simulated engines.
    fn default() -> Self {
        ParserSpec {
            format: ParserFormat::JsonPaths,
            items_path: "items".to_string(),
            url_field: "url".to_string(),
            title_field: "title".to_string(),
            snippet_field: "snippet".to_string(),
            score_field: None,
        }
    }
}

impl ParserSpec {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, value) in [
            ("items_path", &self.items_path),
            ("url_field", &self.url_field),
            ("title_field", &self.title_field),
            ("snippet_field", &self.snippet_field),
        ] {
            if value.trim().is_empty() {
                return Err(format!("parser.{name} must not be empty"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    HttpGet,
    HttpPost,
    InProcessSim,
}

pub const QUERY_PLACEHOLDER: &str = "{query}";

/// Registration record for one component search engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineDescriptor {
    pub id: String,
    pub name: String,
    pub endpoint_kind: EndpointKind,
    pub url_template: String,
    #[serde(default)]
    pub parser: ParserSpec,
    pub timeout_ms: u64,
    #[serde(default = "default_enabled")]
    pub enabled: bool,
}

fn default_enabled() -> bool {
    true
}

impl EngineDescriptor {
    /// GET engine with the default parser.
    pub fn http_get(id: &str, url_template: &str, timeout_ms: u64) -> Self {
        EngineDescriptor {
            id: id.to_string(),
            name: id.to_string(),
            endpoint_kind: EndpointKind::HttpGet,
            url_template: url_template.to_string(),
            parser: ParserSpec::default(),
            timeout_ms,
            enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidDescriptor {
            engine_id: self.id.clone(),
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(fail("id must not be empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(fail("timeout_ms must be positive".into()));
        }
        let placeholders = self.url_template.matches(QUERY_PLACEHOLDER).count();
        match self.endpoint_kind {
            EndpointKind::HttpGet if placeholders != 1 => {
                return Err(fail(format!(
                    "url_template must contain exactly one {QUERY_PLACEHOLDER} placeholder, found {placeholders}"
                )))
            }
            // the query travels in the form body
            EndpointKind::HttpPost if placeholders != 0 => {
                return Err(fail(format!(
                    "http_post url_template must not contain {QUERY_PLACEHOLDER}"
                )))
            }
            _ => {}
        }
        self.parser.validate().map_err(fail)
    }
}

/// One result as returned by one engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub canonical_url: String,
    pub title: String,
    pub snippet: String,
    pub rank: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_score: Option<f64>,
    pub engine_id: String,
}

impl SearchResult {
    /// Builds a result with its canonical URL filled in. The rank is
    /// provisional until the result is placed in a [`RankedList`].
    pub fn new(
        engine_id: &str,
        url: &str,
        title: &str,
        snippet: &str,
        native_score: Option<f64>,
    ) -> Result<Self> {
        Ok(SearchResult {
            url: url.to_string(),
            canonical_url: canonicalize_url(url)?,
            title: title.to_string(),
            snippet: snippet.to_string(),
            rank: 1,
            native_score,
            engine_id: engine_id.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineStatus {
    Ok,
    Timeout,
    HttpError,
    ParseError,
}

impl EngineStatus {
    pub fn is_ok(self) -> bool {
        self == EngineStatus::Ok
    }
}

impl fmt::Display for EngineStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineStatus::Ok => "ok",
            EngineStatus::Timeout => "timeout",
            EngineStatus::HttpError => "http_error",
            EngineStatus::ParseError => "parse_error",
        })
    }
}

/// One engine's ordered response to one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub engine_id: String,
    pub results: Vec<SearchResult>,
    pub latency_ms: f64,
    pub status: EngineStatus,
}

impl RankedList {
    /// Successful list; ranks are reassigned as 1..n in the given order.
    pub fn ok(engine_id: &str, results: Vec<SearchResult>, latency_ms: f64) -> Self {
        let results = results
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.rank = i as u32 + 1;
                r.engine_id = engine_id.to_string();
                r
            })
            .collect();
        RankedList {
            engine_id: engine_id.to_string(),
            results,
            latency_ms: latency_ms.max(0.0),
            status: EngineStatus::Ok,
        }
    }

    /// Failed list; always empty.
    pub fn failed(engine_id: &str, status: EngineStatus, latency_ms: f64) -> Self {
        RankedList {
            engine_id: engine_id.to_string(),
            results: Vec::new(),
            latency_ms: latency_ms.max(0.0),
            status,
        }
    }

    /// Convenience for tests and simulations: builds an ok list from bare URLs.
    pub fn from_urls<S: AsRef<str>>(engine_id: &str, urls: &[S]) -> Result<Self> {
        let results = urls
            .iter()
            .map(|u| SearchResult::new(engine_id, u.as_ref(), u.as_ref(), "", None))
            .collect::<Result<Vec<_>>>()?;
        Ok(RankedList::ok(engine_id, results, 0.0))
    }

    pub fn truncate(&mut self, len: usize) {
        self.results.truncate(len);
    }

    pub fn canonical_urls(&self) -> impl Iterator<Item = &str> {
        self.results.iter().map(|r| r.canonical_url.as_str())
    }

    /// True when ranks are exactly 1..n and a failed status carries no results.
    pub fn is_well_formed(&self) -> bool {
        let consecutive = self
            .results
            .iter()
            .enumerate()
            .all(|(i, r)| r.rank as usize == i + 1);
        consecutive && (self.status.is_ok() || self.results.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub engine_id: String,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedItem {
    pub canonical_url: String,
    pub title: String,
    pub snippet: String,
    pub fused_score: f64,
    pub contributions: Vec<Contribution>,
    pub final_rank: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineError {
    pub engine_id: String,
    pub status: EngineStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedResponse {
    pub mode: MergeMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<RankedList>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Vec<MergedItem>>,
    pub per_engine_latency_ms: BTreeMap<String, f64>,
    pub total_ms: f64,
    pub errors: Vec<EngineError>,
}

impl MergedResponse {
    pub(crate) fn bookkeeping(lists: &[RankedList]) -> (BTreeMap<String, f64>, f64, Vec<EngineError>) {
        let latency: BTreeMap<String, f64> = lists
            .iter()
            .map(|l| (l.engine_id.clone(), l.latency_ms))
            .collect();
        let max_responder = lists
            .iter()
            .filter(|l| l.status.is_ok())
            .map(|l| l.latency_ms)
            .fold(0.0, f64::max);
        let errors = lists
            .iter()
            .filter(|l| !l.status.is_ok())
            .map(|l| EngineError {
                engine_id: l.engine_id.clone(),
                status: l.status,
            })
            .collect();
        (latency, max_responder, errors)
    }

    /// Number of engines that answered with status ok.
    pub fn responders(&self) -> usize {
        self.per_engine_latency_ms.len().saturating_sub(self.errors.len())
    }

    /// Overrides `total_ms` with a measured wall time, never going below
    /// the slowest responder.
    pub fn with_total_ms(mut self, wall_ms: f64) -> Self {
        self.total_ms = self.total_ms.max(wall_ms);
        self
    }
}
