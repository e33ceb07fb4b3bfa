//! Scenario descriptions: a generator recipe ([`ScenarioSpec`]) and its
//! materialized form ([`SimScenario`]). Scenario files may contain either.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate_corpus, CorpusDoc, SimEngine};
use crate::error::{Error, Result};
use crate::model::{canonicalize_url, tokenize, Query};

// How often planted query terms repeat in a relevant document's body.
const RELEVANT_REPEATS: usize = 3;
// Separates the topic-planting RNG stream from corpus generation.
const TOPIC_STREAM: u64 = 0x7091_c5ee_d000_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEngineSpec {
    pub engine_id: String,
    pub corpus: Vec<CorpusDoc>,
    pub latency_ms: f64,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub topic: String,
    pub query_terms: Vec<String>,
    pub relevant_doc_ids: Vec<String>,
}

/// A fully materialized scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub seed: u64,
    pub engines: Vec<SimEngineSpec>,
    #[serde(default)]
    pub topics: Vec<Topic>,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::ScenarioInvalid(msg));
        if self.engines.is_empty() {
            return invalid("engines: at least one engine is required".into());
        }
        let mut ids = HashSet::new();
        let mut doc_ids = HashSet::new();
        for (i, engine) in self.engines.iter().enumerate() {
            if engine.engine_id.trim().is_empty() {
                return invalid(format!("engines[{i}].engine_id: must not be empty"));
            }
            if !ids.insert(engine.engine_id.as_str()) {
                return invalid(format!("engines[{i}].engine_id: duplicate id `{}`", engine.engine_id));
            }
            if !engine.latency_ms.is_finite() || engine.latency_ms < 0.0 {
                return invalid(format!("engines[{i}].latency_ms: must be nonnegative"));
            }
            if engine.top_k == 0 {
                return invalid(format!("engines[{i}].top_k: must be at least 1"));
            }
            let mut urls = HashSet::new();
            for (j, doc) in engine.corpus.iter().enumerate() {
                if !urls.insert(doc.url.as_str()) {
                    return invalid(format!("engines[{i}].corpus[{j}].url: duplicate url `{}`", doc.url));
                }
                if canonicalize_url(&doc.url).is_err() {
                    return invalid(format!("engines[{i}].corpus[{j}].url: not an absolute url"));
                }
                doc_ids.insert(doc.doc_id.as_str());
            }
        }
        for (t, topic) in self.topics.iter().enumerate() {
            if tokenize(&topic.query_terms.join(" ")).is_empty() {
                return invalid(format!("topics[{t}].query_terms: must contain a searchable term"));
            }
            if let Some(missing) = topic.relevant_doc_ids.iter().find(|id| !doc_ids.contains(id.as_str())) {
                return invalid(format!("topics[{t}].relevant_doc_ids: unknown doc `{missing}`"));
            }
        }
        Ok(())
    }

    pub fn engine_ids(&self) -> Vec<String> {
        self.engines.iter().map(|e| e.engine_id.clone()).collect()
    }

    pub fn sim_engines(&self) -> Vec<SimEngine> {
        self.engines.iter().cloned().map(SimEngine::new).collect()
    }

    /// Canonical URLs of the documents relevant to `topic`.
    pub fn relevant_urls(&self, topic: &Topic) -> BTreeSet<String> {
        let wanted: HashSet<&str> = topic.relevant_doc_ids.iter().map(String::as_str).collect();
        self.engines
            .iter()
            .flat_map(|e| e.corpus.iter())
            .filter(|d| wanted.contains(d.doc_id.as_str()))
            .filter_map(|d| canonicalize_url(&d.url).ok())
            .collect()
    }

    pub fn topic_query(&self, topic: &Topic) -> Result<Query> {
        Query::parse(&topic.query_terms.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineRecipe {
    pub engine_id: String,
    pub n_docs: usize,
    #[serde(default)]
    pub latency_ms: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub overlap_fraction: f64,
    /// Earlier engine whose corpus supplies the overlapping documents.
    #[serde(default)]
    pub partner: Option<String>,
}

fn default_top_k() -> usize {
    10
}

fn default_vocabulary() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicRecipe {
    pub topic: String,
    pub query_terms: Vec<String>,
    /// Number of relevant documents planted in each listed engine.
    pub relevant_per_engine: BTreeMap<String, usize>,
    /// Irrelevant documents per engine that mention the first query term once.
    #[serde(default)]
    pub noise_per_engine: usize,
}

/// A generator recipe. Materializing the same recipe always yields the same
/// scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    #[serde(default = "default_vocabulary")]
    pub vocabulary_size: usize,
    pub engines: Vec<EngineRecipe>,
    #[serde(default)]
    pub topics: Vec<TopicRecipe>,
}

fn engine_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(index as u64 + 1)
}

impl ScenarioSpec {
    pub fn materialize(&self) -> Result<SimScenario> {
        let invalid = |msg: String| Error::ScenarioInvalid(msg);
        let mut corpora: Vec<Vec<CorpusDoc>> = Vec::with_capacity(self.engines.len());
        let mut index_of: HashMap<&str, usize> = HashMap::new();

        for (i, recipe) in self.engines.iter().enumerate() {
            if index_of.contains_key(recipe.engine_id.as_str()) {
                return Err(invalid(format!("engines[{i}].engine_id: duplicate id `{}`", recipe.engine_id)));
            }
            let partner = match &recipe.partner {
                None => None,
                Some(p) => {
                    let idx = index_of.get(p.as_str()).ok_or_else(|| {
                        invalid(format!("engines[{i}].partner: `{p}` is not an earlier engine"))
                    })?;
                    Some(corpora[*idx].as_slice())
                }
            };
            let corpus = generate_corpus(
                engine_seed(self.seed, i),
                recipe.n_docs,
                self.vocabulary_size,
                recipe.overlap_fraction,
                partner,
            )
            .map_err(|e| invalid(format!("engines[{i}]: {e}")))?;
            corpora.push(corpus);
            index_of.insert(&recipe.engine_id, i);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ TOPIC_STREAM);
        let mut used: HashSet<String> = HashSet::new();
        let mut topics = Vec::with_capacity(self.topics.len());

        for (t, recipe) in self.topics.iter().enumerate() {
            let terms = tokenize(&recipe.query_terms.join(" "));
            if terms.is_empty() {
                return Err(invalid(format!("topics[{t}].query_terms: must contain a searchable term")));
            }
            let mut relevant_doc_ids = Vec::new();
            for (engine_id, &count) in &recipe.relevant_per_engine {
                let idx = *index_of.get(engine_id.as_str()).ok_or_else(|| {
                    invalid(format!("topics[{t}].relevant_per_engine: unknown engine `{engine_id}`"))
                })?;
                let picked = pick_unused(&corpora[idx], count, &mut used, &mut rng)
                    .map_err(|have| invalid(format!("topics[{t}].relevant_per_engine.{engine_id}: only {have} unused docs")))?;
                for url in picked {
                    plant(&mut corpora, &url, |doc| {
                        let phrase = terms.join(" ");
                        doc.title = format!("{phrase} {}", doc.title);
                        for _ in 0..RELEVANT_REPEATS {
                            doc.body.push(' ');
                            doc.body.push_str(&phrase);
                        }
                        doc.relevant_topics.insert(recipe.topic.clone());
                    });
                    let id = corpora.iter().flatten().find(|d| d.url == url).map(|d| d.doc_id.clone());
                    relevant_doc_ids.extend(id);
                }
            }
            if recipe.noise_per_engine > 0 {
                for idx in 0..corpora.len() {
                    let picked = pick_unused(&corpora[idx], recipe.noise_per_engine, &mut used, &mut rng)
                        .map_err(|have| invalid(format!("topics[{t}].noise_per_engine: engine {idx} has only {have} unused docs")))?;
                    for url in picked {
                        plant(&mut corpora, &url, |doc| {
                            doc.body.push(' ');
                            doc.body.push_str(&terms[0]);
                        });
                    }
                }
            }
            relevant_doc_ids.sort();
            relevant_doc_ids.dedup();
            topics.push(Topic {
                topic: recipe.topic.clone(),
                query_terms: terms,
                relevant_doc_ids,
            });
        }

        let engines = self
            .engines
            .iter()
            .zip(corpora)
            .map(|(recipe, corpus)| SimEngineSpec {
                engine_id: recipe.engine_id.clone(),
                corpus,
                latency_ms: recipe.latency_ms,
                top_k: recipe.top_k,
            })
            .collect();
        let scenario = SimScenario {
            seed: self.seed,
            engines,
            topics,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}


/// Picks `count` documents not used by any earlier topic, returning their
/// URLs, or the number available when there are too few.
fn pick_unused(
    corpus: &[CorpusDoc],
    count: usize,
    used: &mut HashSet<String>,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<Vec<String>, usize> {
    let mut candidates: Vec<&CorpusDoc> = corpus.iter().filter(|d| !used.contains(&d.url)).collect();
    if candidates.len() < count {
        return Err(candidates.len());
    }
    candidates.shuffle(rng);
    let picked: Vec<String> = candidates[..count].iter().map(|d| d.url.clone()).collect();
    used.extend(picked.iter().cloned());
    Ok(picked)
}

/// Applies `edit` to every copy of the document at `url`, keeping shared
/// documents identical across engines.
fn plant<F: Fn(&mut CorpusDoc)>(corpora: &mut [Vec<CorpusDoc>], url: &str, edit: F) {
    for doc in corpora.iter_mut().flatten().filter(|d| d.url == url) {
        edit(doc);
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioFile {
    Materialized(SimScenario),
    Recipe(ScenarioSpec),
}

/// Parses a scenario document, either a recipe or a materialized scenario.
/// `seed_override` replaces a recipe's seed before generation.
pub fn parse_scenario(text: &str, seed_override: Option<u64>) -> Result<SimScenario> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::ScenarioInvalid(format!("invalid JSON: {e}")))?;
    let is_materialized = value
        .get("engines")
        .and_then(|e| e.as_array())
        .and_then(|e| e.first())
        .map(|first| first.get("corpus").is_some())
        .unwrap_or(false);

    let field_error = |e: serde_path_to_error::Error<serde_json::Error>| {
        Error::ScenarioInvalid(format!("{}: {}", e.path(), e.inner()))
    };
    let file = if is_materialized {
        ScenarioFile::Materialized(serde_path_to_error::deserialize(value).map_err(field_error)?)
    } else {
        ScenarioFile::Recipe(serde_path_to_error::deserialize(value).map_err(field_error)?)
    };
    match file {
        ScenarioFile::Materialized(s) => {
            s.validate()?;
            Ok(s)
        }
        ScenarioFile::Recipe(mut spec) => {
            if let Some(seed) = seed_override {
                spec.seed = seed;
            }
            spec.materialize()
        }
    }
}

pub fn load_scenario(path: &Path, seed_override: Option<u64>) -> Result<SimScenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ScenarioInvalid(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text, seed_override)
}
