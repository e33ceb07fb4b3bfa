//! Simulated component engines over synthetic corpora.
//!
//! Corpora are generated deterministically from a seed, engines rank by raw
//! term frequency, and [`server::serve_sim_engines`] exposes each engine on a
//! loopback HTTP port speaking the default [`ParserSpec`] shape.
//!
//! [`ParserSpec`]: crate::model::ParserSpec

mod scenario;
pub mod server;

use std::collections::{BTreeSet, HashSet};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dispatcher::LocalEngine;
use crate::error::{Error, Result};
use crate::model::{tokenize, SearchResult};

pub use scenario::{load_scenario, parse_scenario, EngineRecipe, ScenarioSpec, SimEngineSpec, SimScenario, Topic, TopicRecipe};
pub use server::{serve_sim_engines, SimNet};

const TITLE_WORDS: u32 = 4;
const BODY_WORDS: u32 = 30;
const SNIPPET_WORDS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub doc_id: String,
    pub url: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub relevant_topics: BTreeSet<String>,
}

impl CorpusDoc {
    fn snippet(&self) -> String {
        self.body
            .split_whitespace()
            .take(SNIPPET_WORDS)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn word(rng: &mut ChaCha8Rng, vocabulary_size: u32) -> String {
    // squared uniform skews toward low indices, giving a few common words
    let u: f64 = rng.gen();
    let idx = ((u * u) * vocabulary_size as f64) as u32;
    format!("w{}", idx.min(vocabulary_size - 1))
}

fn words(rng: &mut ChaCha8Rng, vocabulary_size: u32, n: u32) -> String {
    (0..n).map(|_| word(rng, vocabulary_size)).collect::<Vec<_>>().join(" ")
}

/// Generates `n_docs` documents. `round(overlap_fraction * n_docs)` of them
/// are copies (same URL and content) of documents drawn from
/// `partner_corpus`; the rest are fresh documents whose URLs are unique to
/// `seed`.
pub fn generate_corpus(
    seed: u64,
    n_docs: usize,
    vocabulary_size: usize,
    overlap_fraction: f64,
    partner_corpus: Option<&[CorpusDoc]>,
) -> Result<Vec<CorpusDoc>> {
    if !(0.0..=1.0).contains(&overlap_fraction) {
        return Err(Error::InvalidFraction(format!("{overlap_fraction} is outside [0, 1]")));
    }
    if n_docs == 0 {
        return Err(Error::ScenarioInvalid("n_docs must be at least 1".into()));
    }
    let copies = (overlap_fraction * n_docs as f64).round() as usize;
    let partner = match (copies, partner_corpus) {
        (0, _) => &[][..],
        (_, None) => {
            return Err(Error::InvalidFraction(format!(
                "overlap fraction {overlap_fraction} needs a partner corpus"
            )))
        }
        (_, Some(p)) if p.len() < copies => {
            return Err(Error::InvalidFraction(format!(
                "partner corpus has {} docs, {copies} copies requested",
                p.len()
            )))
        }
        (_, Some(p)) => p,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary_size.clamp(1, u32::MAX as usize) as u32;

    let mut picks: Vec<usize> = (0..partner.len()).collect();
    picks.shuffle(&mut rng);
    let mut corpus: Vec<CorpusDoc> = picks[..copies].iter().map(|&i| partner[i].clone()).collect();

    corpus.extend((0..n_docs - copies).map(|i| CorpusDoc {
        doc_id: format!("s{seed}-d{i}"),
        url: format!("https://sim{seed}.example/doc/{i}"),
        title: words(&mut rng, vocab, TITLE_WORDS),
        body: words(&mut rng, vocab, BODY_WORDS),
        relevant_topics: BTreeSet::new(),
    }));
    Ok(corpus)
}

/// Raw term-frequency score of a document for the given terms.
pub fn term_frequency(doc: &CorpusDoc, terms: &[String]) -> usize {
    let wanted: HashSet<&str> = terms.iter().map(String::as_str).collect();
    tokenize(&doc.title)
        .iter()
        .chain(tokenize(&doc.body).iter())
        .filter(|tok| wanted.contains(tok.as_str()))
        .count()
}

/// Documents with a nonzero term-frequency score, best first, ties by doc_id.
pub fn sim_engine_search<'a>(corpus: &'a [CorpusDoc], terms: &[String], top_k: usize) -> Vec<&'a CorpusDoc> {
    let mut scored: Vec<(usize, &CorpusDoc)> = corpus
        .iter()
        .map(|doc| (term_frequency(doc, terms), doc))
        .filter(|(score, _)| *score > 0)
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.doc_id.cmp(&b.1.doc_id)));
    scored.into_iter().take(top_k).map(|(_, doc)| doc).collect()
}

/// A simulated engine, answering either in-process or behind a server.
#[derive(Debug, Clone)]
pub struct SimEngine {
    pub spec: SimEngineSpec,
}

impl SimEngine {
    pub fn new(spec: SimEngineSpec) -> Self {
        SimEngine { spec }
    }

    pub fn engine_id(&self) -> &str {
        &self.spec.engine_id
    }

    /// Ranked hits, capped by both `count` and the engine's `top_k`.
    pub fn ranked(&self, terms: &[String], count: usize) -> Vec<&CorpusDoc> {
        let k = count.min(self.spec.top_k);
        if k == 0 {
            return Vec::new();
        }
        sim_engine_search(&self.spec.corpus, terms, k)
    }
}

impl LocalEngine for SimEngine {
    fn search(&self, terms: &[String], count: usize) -> Vec<SearchResult> {
        self.ranked(terms, count)
            .into_iter()
            .enumerate()
            .filter_map(|(i, doc)| {
                let mut r = SearchResult::new(&self.spec.engine_id, &doc.url, &doc.title, &doc.snippet(), None).ok()?;
                r.rank = i as u32 + 1;
                Some(r)
            })
            .collect()
    }

    fn latency(&self) -> Duration {
        Duration::from_secs_f64(self.spec.latency_ms.max(0.0) / 1000.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, title: &str, body: &str) -> CorpusDoc {
        CorpusDoc {
            doc_id: id.into(),
            url: format!("http://s.example/{id}"),
            title: title.into(),
            body: body.into(),
            relevant_topics: BTreeSet::new(),
        }
    }

    fn terms(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn urls(corpus: &[CorpusDoc]) -> BTreeSet<String> {
        corpus.iter().map(|d| d.url.clone()).collect()
    }

    #[test]
    fn zero_overlap_gives_disjoint_urls() {
        let a = generate_corpus(1, 50, 100, 0.0, None).unwrap();
        let b = generate_corpus(2, 50, 100, 0.0, Some(&a)).unwrap();
        assert!(urls(&a).is_disjoint(&urls(&b)));
        assert_eq!(urls(&a).len(), 50);
    }

    #[test]
    fn full_overlap_gives_identical_urls() {
        let a = generate_corpus(1, 40, 100, 0.0, None).unwrap();
        let b = generate_corpus(9, 40, 100, 1.0, Some(&a)).unwrap();
        assert_eq!(urls(&a), urls(&b));
    }

    #[test]
    fn partial_overlap_copies_rounded_count() {
        let a = generate_corpus(1, 200, 100, 0.0, None).unwrap();
        let b = generate_corpus(2, 200, 100, 0.013, Some(&a)).unwrap();
        // round(0.013 * 200) = 3
        assert_eq!(urls(&a).intersection(&urls(&b)).count(), 3);
        assert_eq!(b.len(), 200);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_corpus(42, 30, 80, 0.0, None).unwrap();
        let b = generate_corpus(42, 30, 80, 0.0, None).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        assert_ne!(a, generate_corpus(43, 30, 80, 0.0, None).unwrap());
    }

    #[test]
    fn invalid_fractions() {
        assert!(matches!(generate_corpus(1, 10, 10, 1.5, None), Err(Error::InvalidFraction(_))));
        assert!(matches!(generate_corpus(1, 10, 10, f64::NAN, None), Err(Error::InvalidFraction(_))));
        assert!(matches!(generate_corpus(1, 10, 10, 0.5, None), Err(Error::InvalidFraction(_))));
        let small = generate_corpus(1, 2, 10, 0.0, None).unwrap();
        assert!(matches!(generate_corpus(2, 10, 10, 0.5, Some(&small)), Err(Error::InvalidFraction(_))));
    }

    #[test]
    fn both_terms_outrank_one() {
        let corpus = vec![doc("d1", "rust", "nothing"), doc("d2", "rust", "compiler")];
        let hits = sim_engine_search(&corpus, &terms("rust compiler"), 10);
        assert_eq!(hits.iter().map(|d| d.doc_id.as_str()).collect::<Vec<_>>(), vec!["d2", "d1"]);
    }

    #[test]
    fn no_match_is_empty() {
        let corpus = vec![doc("d1", "rust", "")];
        assert!(sim_engine_search(&corpus, &terms("cooking"), 10).is_empty());
    }

    #[test]
    fn ties_break_by_doc_id() {
        let corpus = vec![doc("d9", "web", ""), doc("d1", "", "web"), doc("d5", "web", "")];
        let hits = sim_engine_search(&corpus, &terms("web"), 2);
        assert_eq!(hits.iter().map(|d| d.doc_id.as_str()).collect::<Vec<_>>(), vec!["d1", "d5"]);
    }

    #[test]
    fn counts_raw_term_frequency() {
        let d = doc("d", "Web web", "the WEB engine, web.");
        assert_eq!(term_frequency(&d, &terms("web")), 4);
        assert_eq!(term_frequency(&d, &terms("web engine")), 5);
    }

    #[test]
    fn local_engine_respects_top_k_and_count() {
        let corpus: Vec<CorpusDoc> = (0..20).map(|i| doc(&format!("d{i:02}"), "web", "")).collect();
        let engine = SimEngine::new(SimEngineSpec {
            engine_id: "E".into(),
            corpus,
            latency_ms: 0.0,
            top_k: 7,
        });
        assert_eq!(engine.search(&terms("web"), 5).len(), 5);
        assert_eq!(engine.search(&terms("web"), 50).len(), 7);
        let ranks: Vec<u32> = engine.search(&terms("web"), 50).iter().map(|r| r.rank).collect();
        assert_eq!(ranks, (1..=7).collect::<Vec<_>>());
    }
}
