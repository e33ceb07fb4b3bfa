use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use metafuse_client::{ClientError, MetafuseClient};
use metafuse_core::api::SearchRequest;
use metafuse_core::dispatcher::LocalEngine;
use metafuse_core::merger::merge_unified;
use metafuse_core::metrics::{coverage_union, overlap_pairwise, precision_at_k};
use metafuse_core::model::{FusionMethod, MergeMode, MergedResponse, RankedList};
use metafuse_core::report::{render_table, run_table2_report, ReportConfig};
use metafuse_core::simnet::{load_scenario, serve_sim_engines, SimScenario};
use metafuse_service::{load_config, resolve_config_path, spawn_local};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_ALL_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "metafuse", version, about = "Federated metasearch over multiple search engines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one query and print the merged results.
    Search {
        query: String,
        /// Comma-separated engine ids to query instead of automatic selection.
        #[arg(long, value_delimiter = ',')]
        engines: Option<Vec<String>>,
        #[arg(long)]
        mode: Option<MergeMode>,
        #[arg(long)]
        fusion: Option<FusionMethod>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Running service to query; without it an embedded service is started.
        #[arg(long, env = "METAFUSE_SERVER")]
        server: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Regenerate a scenario and run its topics, or serve its engines.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        serve: bool,
    },
    /// Compare single engines against metasearch over a scenario.
    Report {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        fusion: Option<FusionMethod>,
        /// JSON sidecar path; defaults to `<scenario>.report.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Search {
            query,
            engines,
            mode,
            fusion,
            limit,
            format,
            server,
            config,
        } => {
            let request = SearchRequest {
                query,
                engines,
                mode,
                fusion,
                limit,
            };
            cmd_search(request, format, server, config).await
        }
        Command::Simulate { scenario, seed, serve } => cmd_simulate(&scenario, seed, serve).await.map(|_| 0),
        Command::Report {
            scenario,
            k,
            seed,
            fusion,
            out,
        } => cmd_report(&scenario, k, seed, fusion, out).await.map(|_| 0),
        Command::Serve { config } => cmd_serve(config).await.map(|_| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

async fn cmd_search(request: SearchRequest, format: Format, server: Option<String>, config: Option<PathBuf>) -> anyhow::Result<u8> {
    // keeps an embedded service alive for the duration of the call
    let mut _embedded = None;
    let base = match server {
        Some(url) => url,
        None => {
            let path = resolve_config_path(config.as_deref());
            let config = load_config(&path).with_context(|| format!("loading {}", path.display()))?;
            let service = spawn_local(config).await?;
            let url = service.base_url();
            _embedded = Some(service);
            url
        }
    };
    let client = MetafuseClient::new(&base)?;
    let response = match client.search(&request).await {
        Ok(r) => r,
        Err(ClientError::Api { status: 400, code, message }) => {
            eprintln!("error: {code}: {message}");
            return Ok(EXIT_USAGE);
        }
        Err(err) => return Err(err.into()),
    };

    match format {
        Format::Json => emit(&(serde_json::to_string_pretty(&response)? + "\n"))?,
        Format::Table => emit(&render_response(&response))?,
    }
    for err in &response.errors {
        eprintln!("{}: {}", err.engine_id, serde_json::to_value(err.status)?.as_str().unwrap_or("error"));
    }
    Ok(if response.responders() == 0 { EXIT_ALL_FAILED } else { 0 })
}

/// Writes data to stdout; a closed pipe is not an error.
fn emit(text: &str) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other,
    }
}

fn render_response(response: &MergedResponse) -> String {
    let mut out = String::new();
    if let Some(items) = &response.items {
        for item in items {
            let engines: Vec<&str> = item.contributions.iter().map(|c| c.engine_id.as_str()).collect();
            out.push_str(&format!(
                "{:>3}. {:.4}  {}\n     {}  [{}]\n",
                item.final_rank,
                item.fused_score,
                item.title,
                item.canonical_url,
                engines.join(",")
            ));
        }
    }
    if let Some(groups) = &response.groups {
        for group in groups {
            out.push_str(&format!("== {} ({:.0} ms)\n", group.engine_id, group.latency_ms));
            for r in &group.results {
                out.push_str(&format!("{:>3}. {}\n     {}\n", r.rank, r.title, r.canonical_url));
            }
        }
    }
    out.push_str(&format!("total {:.0} ms\n", response.total_ms));
    out
}

/// Runs every topic against the in-process engines. Contains no timings, so
/// identical inputs produce identical bytes.
fn simulate_topics(scenario: &SimScenario) -> anyhow::Result<serde_json::Value> {
    let engines = scenario.sim_engines();
    let mut topics = Vec::with_capacity(scenario.topics.len());
    for topic in &scenario.topics {
        let query = scenario.topic_query(topic)?;
        let relevant = scenario.relevant_urls(topic);
        let lists: Vec<RankedList> = engines
            .iter()
            .map(|e| RankedList::ok(e.engine_id(), e.search(&query.terms, e.spec.top_k), 0.0))
            .collect();
        let merged = merge_unified(&lists, query.fusion, query.limit);
        let unified: Vec<String> = merged.items.unwrap_or_default().into_iter().map(|i| i.canonical_url).collect();

        let mut per_engine = BTreeMap::new();
        let mut precision = BTreeMap::new();
        for list in &lists {
            let urls: Vec<String> = list.canonical_urls().map(str::to_string).collect();
            precision.insert(list.engine_id.clone(), precision_at_k(&urls, &relevant, query.limit));
            per_engine.insert(list.engine_id.clone(), urls);
        }
        let sets: Vec<_> = per_engine.values().map(|v| v.iter().cloned().collect()).collect();
        topics.push(serde_json::json!({
            "topic": topic.topic,
            "query_terms": topic.query_terms,
            "relevant": relevant.len(),
            "per_engine": per_engine,
            "unified": unified,
            "precision_at_k": precision,
            "unified_precision_at_k": precision_at_k(&unified, &relevant, query.limit),
            "union_coverage": coverage_union(&sets, &relevant).ok(),
            "mean_pairwise_overlap": overlap_pairwise(&lists, query.limit).ok(),
        }));
    }
    Ok(serde_json::json!({
        "seed": scenario.seed,
        "engines": scenario.engines.iter().map(|e| serde_json::json!({
            "engine_id": e.engine_id,
            "documents": e.corpus.len(),
            "latency_ms": e.latency_ms,
            "top_k": e.top_k,
        })).collect::<Vec<_>>(),
        "topics": topics,
    }))
}

async fn cmd_simulate(path: &Path, seed: Option<u64>, serve: bool) -> anyhow::Result<()> {
    let scenario = load_scenario(path, seed)?;
    if !serve {
        emit(&(serde_json::to_string_pretty(&simulate_topics(&scenario)?)? + "\n"))?;
        return Ok(());
    }
    let net = serve_sim_engines(&scenario).await?;
    let endpoints: BTreeMap<&str, &str> = net.endpoints().iter().map(|(id, url)| (id.as_str(), url.as_str())).collect();
    emit(&(serde_json::to_string_pretty(&endpoints)? + "\n"))?;
    eprintln!("serving {} engines; Ctrl-C to stop", endpoints.len());
    tokio::signal::ctrl_c().await?;
    net.shutdown();
    Ok(())
}

fn sidecar_path(scenario: &Path) -> PathBuf {
    let stem = scenario.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    scenario.with_file_name(format!("{stem}.report.json"))
}

async fn cmd_report(path: &Path, k: usize, seed: Option<u64>, fusion: Option<FusionMethod>, out: Option<PathBuf>) -> anyhow::Result<()> {
    let scenario = load_scenario(path, seed)?;
    let mut config = ReportConfig { k, ..ReportConfig::default() };
    if let Some(f) = fusion {
        config.fusion = f;
    }
    let report = run_table2_report(&scenario, &config).await?;
    emit(&render_table(&report))?;
    let out = out.unwrap_or_else(|| sidecar_path(path));
    std::fs::write(&out, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

async fn cmd_serve(config: Option<PathBuf>) -> anyhow::Result<()> {
    let path = resolve_config_path(config.as_deref());
    let config = load_config(&path).with_context(|| format!("loading {}", path.display()))?;
    metafuse_service::serve(config).await?;
    Ok(())
}
