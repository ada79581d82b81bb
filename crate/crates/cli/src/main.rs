//! `spark`: operator CLI for ingestion, epoch management, querying, and
//! serving. All stdout payloads are single JSON documents; diagnostics
//! go to stderr. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use spark_core::config::{Config, Transport};
use spark_core::evalkit;
use spark_core::server::{self, SparkService};

#[derive(Parser)]
#[command(name = "spark", version, about = "Shared experiential memory for coding agents")]
struct Cli {
    /// Pretty-print JSON output for humans.
    #[arg(long, global = true)]
    pretty: bool,
    /// Config file path (overrides SPARK_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest documentation blobs from a JSONL file.
    Ingest {
        /// JSONL file, one doc blob per line.
        #[arg(long)]
        input: PathBuf,
        /// Default source name for entries that omit one.
        #[arg(long)]
        source: Option<String>,
    },
    /// Memory epoch management.
    Epoch {
        #[command(subcommand)]
        command: EpochCommand,
    },
    /// Ask for a recommendation.
    Query {
        #[arg(long)]
        problem: String,
        /// Optional code context.
        #[arg(long, default_value = "")]
        context: String,
        /// Pin to a specific epoch (default: latest).
        #[arg(long)]
        epoch: Option<u64>,
    },
    /// Current memory counts.
    Stats,
    /// Export the curated memory state as JSON.
    Export {
        /// Epoch to export (default: latest).
        #[arg(long)]
        epoch: Option<u64>,
    },
    /// Run the tool server.
    Serve {
        #[arg(long, value_parser = parse_transport)]
        transport: Option<Transport>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Generate synthetic experiential traces from problem/solution pairs.
    SynthTraces {
        /// Text file, one problem per line.
        #[arg(long)]
        problems: PathBuf,
        /// Text file, one reference solution per line, aligned with --problems.
        #[arg(long)]
        solutions: PathBuf,
    },
    /// Aggregate judge scores into a report.
    Eval {
        /// JSONL of score or band records.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_parser = ["quality", "helpfulness"])]
        mode: String,
    },
}

#[derive(Subcommand)]
enum EpochCommand {
    /// Consume new traces and commit the next epoch.
    Run,
}

fn parse_transport(s: &str) -> Result<Transport, String> {
    match s {
        "stdio" => Ok(Transport::Stdio),
        "http" => Ok(Transport::Http),
        _ => Err(format!("expected stdio or http, got {s}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli_config: &Option<PathBuf>) -> Result<Config> {
    match cli_config {
        Some(path) => Ok(Config::load(path)?),
        None => Ok(Config::from_env()?),
    }
}

fn print_json(pretty: bool, value: &serde_json::Value) -> Result<()> {
    let out = if pretty {
        serde_json::to_string_pretty(value)?
    } else {
        serde_json::to_string(value)?
    };
    println!("{out}");
    Ok(())
}

fn service(config: &Config) -> Result<Arc<SparkService>> {
    Ok(Arc::new(SparkService::new(config)?))
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.config)?;
    let pretty = cli.pretty;
    match cli.command {
        Command::Ingest { input, source } => {
            let raw = std::fs::read_to_string(&input)
                .with_context(|| format!("cannot read {}", input.display()))?;
            let mut blobs = Vec::new();
            for line in raw.lines().filter(|l| !l.trim().is_empty()) {
                let mut value: serde_json::Value =
                    serde_json::from_str(line).context("malformed JSONL line")?;
                if let (Some(obj), Some(source)) = (value.as_object_mut(), &source) {
                    obj.entry("source").or_insert_with(|| json!(source));
                }
                blobs.push(value);
            }
            let service = service(&config)?;
            let response = server::dispatch(
                &service,
                &json!({ "jsonrpc": "2.0", "id": 0, "method": "ingest_documentation",
                         "params": { "blobs": blobs } }),
            );
            finish_rpc(pretty, response)
        }
        Command::Epoch { command: EpochCommand::Run } => {
            let service = service(&config)?;
            let report = service.learning().run_epoch()?;
            print_json(pretty, &serde_json::to_value(report)?)
        }
        Command::Query { problem, context, epoch } => {
            let service = service(&config)?;
            let rec = service.retrieval().recommend_at_epoch(&problem, &context, epoch)?;
            print_json(pretty, &serde_json::to_value(rec)?)
        }
        Command::Stats => {
            let service = service(&config)?;
            let response = server::dispatch(
                &service,
                &json!({ "jsonrpc": "2.0", "id": 0, "method": "memory_stats" }),
            );
            finish_rpc(pretty, response)
        }
        Command::Export { epoch } => {
            let service = service(&config)?;
            let snapshot = service.store().load_snapshot(epoch)?;
            print_json(
                pretty,
                &json!({
                    "epoch_number": snapshot.epoch_number,
                    "committed_at": snapshot.committed_at,
                    "doc_corpus_version": snapshot.doc_corpus_version,
                    "stats": snapshot.stats,
                    "insights": &*snapshot.insights,
                }),
            )
        }
        Command::Serve { transport, port } => {
            let mut config = config;
            if let Some(t) = transport {
                config.server.transport = t;
            }
            if let Some(p) = port {
                config.server.port = p;
            }
            let service = service(&config)?;
            server::serve(service, &config)?;
            Ok(())
        }
        Command::SynthTraces { problems, solutions } => {
            let problems = read_lines(&problems)?;
            let solutions = read_lines(&solutions)?;
            let service = service(&config)?;
            let traces = service.learning().generate_synthetic_traces(&problems, &solutions)?;
            for trace in &traces {
                println!("{}", serde_json::to_string(trace)?);
            }
            Ok(())
        }
        Command::Eval { scores, mode } => {
            let raw = std::fs::read_to_string(&scores)
                .with_context(|| format!("cannot read {}", scores.display()))?;
            let report = match mode.as_str() {
                "quality" => {
                    let records = evalkit::score_records_from_jsonl(&raw)?;
                    serde_json::to_value(evalkit::aggregate_quality(&records)?)?
                }
                _ => {
                    let records = evalkit::band_records_from_jsonl(&raw)?;
                    serde_json::to_value(evalkit::aggregate_helpfulness(&records)?)?
                }
            };
            print_json(pretty, &report)
        }
    }
}

fn read_lines(path: &PathBuf) -> Result<Vec<String>> {
    Ok(std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(String::from)
        .collect())
}

/// Unwrap a dispatch response: result goes to stdout, errors exit 1.
fn finish_rpc(pretty: bool, response: serde_json::Value) -> Result<()> {
    if let Some(err) = response.get("error") {
        let message = err.get("message").and_then(|m| m.as_str()).unwrap_or("unknown error");
        bail!("{message}");
    }
    let result = response
        .get("result")
        .cloned()
        .ok_or_else(|| anyhow!("malformed rpc response"))?;
    print_json(pretty, &result)
}
