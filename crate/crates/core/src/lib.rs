//! Core of the metafuse metasearch engine.
//!
//! A query flows through four stages: [`selector`] picks engines,
//! [`allocator`] splits the result budget, [`dispatcher`] fans the query out
//! over HTTP and parses responses, and [`merger`] presents the lists grouped
//! or fused into one deduplicated ranking. [`simnet`] provides simulated
//! engines for testing and [`metrics`]/[`report`] measure the outcome.

pub mod allocator;
pub mod api;
pub mod dispatcher;
pub mod error;
pub mod merger;
pub mod metrics;
pub mod model;
pub mod report;
pub mod selector;
pub mod simnet;

pub use error::{Error, Result};
pub use model::{
    canonicalize_url, normalize_query, Contribution, EndpointKind, EngineDescriptor, EngineError, EngineStatus,
    FusionMethod, MergeMode, MergedItem, MergedResponse, ParserSpec, Query, RankedList, SearchResult,
};
