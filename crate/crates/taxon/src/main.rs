use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use taxon::api;
use taxon::clock::SystemClock;
use taxon::ontology::{self, OntologyError};
use taxon::service::{Service, ServiceConfig, ServiceError};
use taxon::store::{ImportReport, Store, StoreError};
use taxon_core::search::{SearchIndex, SearchParams, DEFAULT_DESCRIPTION_WEIGHT};
use taxon_core::{SearchError, TaskId};

#[derive(Parser)]
#[command(name = "taxon", version, about = "Taxonomy-driven sound annotation")]
struct Cli {
    /// Output style: tab/colon separated lines, or one JSON document.
    #[arg(long, global = true, value_enum, default_value_t = Format::Lines)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Lines,
    Structured,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(clap::Args)]
struct DbArg {
    /// Database file.
    #[arg(long, env = "TAXON_DB")]
    db: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate an ontology document and store it.
    IngestOntology {
        #[arg(long)]
        file: PathBuf,
        #[command(flatten)]
        db: DbArg,
    },
    /// Import sounds, one JSON object per line.
    ImportSounds {
        #[arg(long)]
        file: PathBuf,
        #[command(flatten)]
        db: DbArg,
    },
    /// Import candidate labels, one {sound_id, category_id, source} per line.
    ImportCandidates {
        #[arg(long)]
        file: PathBuf,
        #[command(flatten)]
        db: DbArg,
    },
    /// Re-import a dataset written by `export`.
    ImportDataset {
        #[arg(long)]
        file: PathBuf,
        #[command(flatten)]
        db: DbArg,
    },
    /// Write annotations as newline-delimited JSON.
    Export {
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated provenances to include (default: all).
        #[arg(long)]
        provenance: Option<String>,
        #[command(flatten)]
        db: DbArg,
    },
    /// Per-task timing and label counts for submitted tasks.
    Stats {
        /// Comma-separated task ids (default: every submitted task).
        #[arg(long)]
        tasks: Option<String>,
        #[command(flatten)]
        db: DbArg,
    },
    /// Search category names and descriptions.
    Search {
        query: String,
        #[arg(long, default_value_t = SearchParams::default().limit)]
        limit: usize,
        #[arg(long, default_value_t = SearchParams::default().threshold)]
        threshold: f64,
        #[arg(long, env = "TAXON_DESCRIPTION_WEIGHT", default_value_t = DEFAULT_DESCRIPTION_WEIGHT)]
        description_weight: f64,
        #[command(flatten)]
        db: DbArg,
    },
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        db: DbArg,
        /// Directory served under /audio/.
        #[arg(long, env = "TAXON_AUDIO_DIR")]
        audio_dir: Option<PathBuf>,
        #[arg(long, env = "TAXON_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "TAXON_BIND", default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        /// Allow refinement rows to move to sibling categories.
        #[arg(long, env = "TAXON_SIBLING_MOVES", value_enum, default_value_t = Toggle::On)]
        sibling_moves: Toggle,
        #[arg(long, env = "TAXON_DESCRIPTION_WEIGHT", default_value_t = DEFAULT_DESCRIPTION_WEIGHT)]
        description_weight: f64,
        /// JSON service config (session settings, assignments).
        #[arg(long, env = "TAXON_CONFIG")]
        config: Option<PathBuf>,
    },
}

/// An error with a stable machine-readable code.
#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
struct Coded {
    code: &'static str,
    message: String,
}

fn coded(code: &'static str, message: impl std::fmt::Display) -> anyhow::Error {
    Coded {
        code,
        message: message.to_string(),
    }
    .into()
}

impl From<OntologyError> for Coded {
    fn from(e: OntologyError) -> Self {
        Coded {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl From<StoreError> for Coded {
    fn from(e: StoreError) -> Self {
        Coded {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl From<ServiceError> for Coded {
    fn from(e: ServiceError) -> Self {
        Coded {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl From<SearchError> for Coded {
    fn from(e: SearchError) -> Self {
        Coded {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

fn open_store(path: &Path) -> Result<Store, Coded> {
    Ok(Store::open(path)?)
}

fn emit(format: Format, pairs: &[(&str, serde_json::Value)]) {
    match format {
        Format::Lines => {
            for (k, v) in pairs {
                match v {
                    serde_json::Value::String(s) => println!("{k}: {s}"),
                    other => println!("{k}: {other}"),
                }
            }
        }
        Format::Structured => {
            let map: serde_json::Map<String, serde_json::Value> =
                pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
            println!("{}", serde_json::Value::Object(map));
        }
    }
}

fn report(format: Format, r: &ImportReport) {
    for e in &r.rejected {
        eprintln!("{e}");
    }
    emit(
        format,
        &[
            ("added", json!(r.added)),
            ("unchanged", json!(r.unchanged)),
            ("rejected", json!(r.rejected.len())),
        ],
    );
}

fn open_input(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).map_err(|e| coded("ParseError", format!("{}: {e}", path.display())))?;
    Ok(BufReader::new(f))
}

#[derive(Serialize)]
struct SearchLine<'a> {
    score: f64,
    id: &'a str,
    name: &'a str,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let format = cli.format;
    match cli.command {
        Command::IngestOntology { file, db } => {
            let taxonomy = ontology::load_ontology_file(&file).map_err(Coded::from)?;
            let mut store = open_store(&db.db)?;
            let changed = store.set_taxonomy(&taxonomy).map_err(Coded::from)?;
            tracing::info!(changed, "taxonomy stored");
            emit(
                format,
                &[
                    ("categories", json!(taxonomy.len())),
                    ("edges", json!(taxonomy.edge_count())),
                    ("roots", json!(taxonomy.roots().len())),
                ],
            );
        }
        Command::ImportSounds { file, db } => {
            let input = open_input(&file)?;
            let mut store = open_store(&db.db)?;
            let r = store.import_sounds(input).map_err(Coded::from)?;
            report(format, &r);
        }
        Command::ImportCandidates { file, db } => {
            let input = open_input(&file)?;
            let mut store = open_store(&db.db)?;
            let r = store
                .import_candidates(input, chrono::Utc::now())
                .map_err(Coded::from)?;
            report(format, &r);
        }
        Command::ImportDataset { file, db } => {
            let input = open_input(&file)?;
            let mut store = open_store(&db.db)?;
            let r = store.import_dataset(input).map_err(Coded::from)?;
            report(format, &r);
        }
        Command::Export { out, provenance, db } => {
            let filter =
                api::parse_provenances(provenance.as_deref()).map_err(|m| coded("InvalidRequest", m))?;
            let store = open_store(&db.db)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(file);
            let n = store.export_dataset(&filter, &mut w).map_err(Coded::from)?;
            w.flush()?;
            emit(format, &[("exported", json!(n))]);
        }
        Command::Stats { tasks, db } => {
            let store = open_store(&db.db)?;
            let ids = tasks
                .as_deref()
                .map(|raw| {
                    raw.split(',')
                        .map(|s| TaskId::new(s.trim()).map_err(|_| coded("InvalidRequest", "empty task id")))
                        .collect::<anyhow::Result<Vec<_>>>()
                })
                .transpose()?;
            let stats = store.compute_stats(ids.as_deref()).map_err(Coded::from)?;
            match format {
                Format::Lines => {
                    for s in &stats {
                        let kind = serde_json::to_value(s.kind)?;
                        println!(
                            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                            s.task_id,
                            s.annotator_id,
                            kind.as_str().unwrap_or_default(),
                            s.duration_s,
                            s.label_count,
                            s.verdict_counts.present,
                            s.verdict_counts.not_present,
                            s.verdict_counts.unsure
                        );
                    }
                }
                Format::Structured => println!("{}", serde_json::to_string(&stats)?),
            }
        }
        Command::Search {
            query,
            limit,
            threshold,
            description_weight,
            db,
        } => {
            let store = open_store(&db.db)?;
            let taxonomy = store.taxonomy().ok_or(StoreError::NoTaxonomy).map_err(Coded::from)?;
            let index = SearchIndex::build(taxonomy, description_weight).map_err(Coded::from)?;
            let hits = index
                .search(&query, &SearchParams { limit, threshold })
                .map_err(Coded::from)?;
            let lines: Vec<SearchLine<'_>> = hits
                .iter()
                .map(|h| SearchLine {
                    score: h.score,
                    id: h.category_id.as_str(),
                    name: taxonomy.get(&h.category_id).map(|c| c.name.as_str()).unwrap_or(""),
                })
                .collect();
            match format {
                Format::Lines => {
                    for l in &lines {
                        println!("{}\t{}\t{}", l.score, l.id, l.name);
                    }
                }
                Format::Structured => println!("{}", serde_json::to_string(&lines)?),
            }
        }
        Command::Serve {
            db,
            audio_dir,
            port,
            bind,
            sibling_moves,
            description_weight,
            config,
        } => {
            let mut cfg: ServiceConfig = match config {
                Some(path) => {
                    let raw = std::fs::read(&path)
                        .map_err(|e| coded("ParseError", format!("{}: {e}", path.display())))?;
                    serde_json::from_slice(&raw).map_err(|e| coded("ParseError", e))?
                }
                None => ServiceConfig::default(),
            };
            cfg.session.sibling_moves = sibling_moves == Toggle::On;
            cfg.description_weight = description_weight;
            let store = open_store(&db.db)?;
            let service = Service::new(store, cfg, Arc::new(SystemClock)).map_err(Coded::from)?;
            let app = api::router(Arc::new(service), audio_dir);
            let addr = SocketAddr::new(bind, port);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                tracing::info!(%addr, "listening");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("TAXON_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<Coded>() {
                Some(c) => eprintln!("error: {c}"),
                None => eprintln!("error: Internal: {e:#}"),
            }
            ExitCode::FAILURE
        }
    }
}
