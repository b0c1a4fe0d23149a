//! Command-line entry points.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (malformed trace,
//! unknown dataset, bad range), 3 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tracescope_core::query::{top_contexts, Cancel, ContextSummary};
use tracescope_core::tracegen::{generate, CounterSpec, GenConfig};
use tracescope_core::{BuildOptions, Dataset};

use crate::api::{self, ApiConfig, AppState};
use crate::error::{ApiError, ErrorKind};
use crate::service::{execute, Answer, Params, Query, DEFAULT_OVERDRAW};
use crate::store::Store;

#[derive(Debug, Parser)]
#[command(
    name = "tracescope",
    version,
    about = "Bundle, query and serve task-parallel execution traces"
)]
pub struct Cli {
    /// Dataset store location.
    #[arg(long, global = true, env = "TRACESCOPE_DATA_DIR", default_value = "tracescope-data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a trace, build its indices and store the bundle.
    Bundle {
        trace: PathBuf,
        #[arg(long)]
        label: String,
        /// Time bins of the summed area tables (a power of two).
        #[arg(long, default_value_t = BuildOptions::default().bin_count)]
        bins: u32,
    },
    /// List bundled datasets.
    List,
    /// Delete a bundled dataset.
    Delete { dataset_id: String },
    /// Run the HTTP API.
    Serve {
        /// 0 picks a free port; the bound address is printed on startup.
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Bins for datasets uploaded through the API.
        #[arg(long, default_value_t = BuildOptions::default().bin_count)]
        bins: u32,
        /// Default overdraw factor for pixel queries.
        #[arg(long, default_value_t = DEFAULT_OVERDRAW)]
        overdraw: f64,
    },
    /// Summary statistics of a bundled dataset.
    Stats {
        dataset_id: String,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Write a query result as CSV.
    Export(ExportArgs),
    /// Generate a synthetic trace.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Utilization,
    Histogram,
    Boxplot,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub dataset_id: String,
    #[arg(value_enum)]
    pub kind: ExportKind,
    #[arg(long)]
    pub t0: Option<u64>,
    #[arg(long)]
    pub t1: Option<u64>,
    /// Pixel count (utilization, boxplot).
    #[arg(long)]
    pub width: Option<u32>,
    /// Histogram bin count.
    #[arg(long, default_value_t = 32)]
    pub bins: u32,
    /// Histogram scale: linear or log.
    #[arg(long)]
    pub scale: Option<String>,
    /// Restrict to a tree node's subtree (utilization, histogram).
    #[arg(long)]
    pub node: Option<u32>,
    /// Counter name (boxplot); defaults to the first counter.
    #[arg(long)]
    pub counter: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub locations: u32,
    #[arg(long, default_value_t = 1000)]
    pub intervals: u32,
    #[arg(long, default_value_t = 4)]
    pub depth: u32,
    /// Comma-separated counter names; empty for none.
    #[arg(long, default_value = "PAPI_TOT_CYC")]
    pub counters: String,
    /// Samples per counter and location.
    #[arg(long, default_value_t = 64)]
    pub samples: u32,
    #[arg(long)]
    pub allow_overlap: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the ground truth as JSON.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

fn io_error(context: impl std::fmt::Display, e: std::io::Error) -> ApiError {
    ApiError::new(ErrorKind::Io, "IO_ERROR", format!("{context}: {e}"))
}

fn open_store(dir: &Path) -> Result<Store, ApiError> {
    Ok(Store::open(dir)?)
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            for d in &e.details {
                eprintln!("  {d}");
            }
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), ApiError> {
    match cli.command {
        Command::Bundle { trace, label, bins } => bundle(&cli.data_dir, &trace, &label, bins),
        Command::List => {
            for meta in open_store(&cli.data_dir)?.list()? {
                println!(
                    "{}\t{}\t{} intervals\t{} locations",
                    meta.dataset_id, meta.label, meta.interval_count, meta.location_count
                );
            }
            Ok(())
        }
        Command::Delete { dataset_id } => {
            open_store(&cli.data_dir)?.delete(&dataset_id)?;
            println!("deleted {dataset_id}");
            Ok(())
        }
        Command::Serve {
            port,
            host,
            bins,
            overdraw,
        } => serve(&cli.data_dir, &host, port, bins, overdraw),
        Command::Stats { dataset_id, json } => stats(&cli.data_dir, &dataset_id, json),
        Command::Export(args) => export(&cli.data_dir, &args),
        Command::Gen(args) => gen(&args),
    }
}

fn bundle(data_dir: &Path, trace: &Path, label: &str, bins: u32) -> Result<(), ApiError> {
    let store = open_store(data_dir)?;
    let outcome = store
        .bundle(trace, label, BuildOptions { bin_count: bins })
        .map_err(|e| match e {
            crate::store::StoreError::Io(io) => io_error(trace.display(), io),
            other => other.into(),
        })?;
    println!("{}", outcome.dataset_id);
    if outcome.cached {
        println!("already bundled; reused the existing bundle");
    }
    let mut counts = std::collections::BTreeMap::new();
    for w in &outcome.warnings {
        *counts.entry(w.code.as_str()).or_insert(0usize) += 1;
    }
    if counts.is_empty() {
        println!("no warnings");
    }
    for (code, n) in counts {
        println!("warning {code}: {n}");
    }
    Ok(())
}

fn serve(data_dir: &Path, host: &str, port: u16, bins: u32, overdraw: f64) -> Result<(), ApiError> {
    if !bins.is_power_of_two() {
        return Err(ApiError::bad_request(format!("--bins {bins} is not a power of two")));
    }
    let store = Arc::new(open_store(data_dir)?);
    let config = ApiConfig {
        build: BuildOptions { bin_count: bins },
        overdraw,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| io_error("starting runtime", e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| io_error(format!("binding {host}:{port}"), e))?;
        let addr = listener
            .local_addr()
            .map_err(|e| io_error("reading bound address", e))?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        log::info!("serving {} on {addr}", data_dir.display());
        api::serve(listener, AppState::new(store, config))
            .await
            .map_err(|e| io_error("serving", e))
    })
}

/// Duration percentile by nearest rank over ascending `sorted`.
fn percentile(sorted: &[u64], p: f64) -> u64 {
    let rank = (p * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Serialize)]
pub struct DurationSummary {
    pub min: u64,
    pub median: u64,
    pub p99: u64,
    pub max: u64,
}

#[derive(Debug, Serialize)]
pub struct Stats {
    pub dataset_id: String,
    pub label: String,
    pub interval_count: u64,
    pub location_count: u32,
    pub span: u64,
    pub durations: Option<DurationSummary>,
    pub top_contexts: Vec<ContextSummary>,
}

pub fn stats_of(ds: &Dataset) -> Stats {
    let d = &ds.index.durations;
    Stats {
        dataset_id: ds.meta.dataset_id.clone(),
        label: ds.meta.label.clone(),
        interval_count: ds.meta.interval_count,
        location_count: ds.meta.location_count,
        span: ds.span(),
        durations: (!d.is_empty()).then(|| DurationSummary {
            min: d[0],
            median: percentile(d, 0.5),
            p99: percentile(d, 0.99),
            max: d[d.len() - 1],
        }),
        top_contexts: top_contexts(ds, 10),
    }
}

fn stats(data_dir: &Path, id: &str, json: bool) -> Result<(), ApiError> {
    let ds = open_store(data_dir)?.load(id)?;
    let s = stats_of(&ds);
    if json {
        println!("{}", serde_json::to_string_pretty(&s).expect("stats serialize"));
        return Ok(());
    }
    println!("dataset    {} ({})", s.dataset_id, s.label);
    println!("intervals  {}", s.interval_count);
    println!("locations  {}", s.location_count);
    println!("span       {} ticks", s.span);
    if let Some(d) = &s.durations {
        println!(
            "durations  min {}  median {}  p99 {}  max {}",
            d.min, d.median, d.p99, d.max
        );
    }
    println!("top contexts by subtree duration:");
    for (i, c) in s.top_contexts.iter().enumerate() {
        println!(
            "  {:>2}. {}  subtree {}  intervals {}",
            i + 1,
            c.path,
            c.subtree_duration,
            c.interval_count
        );
    }
    Ok(())
}

/// Run an export through the same query path as the API, without overdraw.
fn export_answer(ds: &Dataset, args: &ExportArgs) -> Result<Answer, ApiError> {
    let mut params = Params::new();
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            params.insert(k.to_owned(), v);
        }
    };
    set("t0", args.t0.map(|v| v.to_string()));
    set("t1", args.t1.map(|v| v.to_string()));
    set("width", args.width.map(|v| v.to_string()));
    set("node", args.node.map(|v| v.to_string()));
    let endpoint = match args.kind {
        ExportKind::Utilization => "utilization",
        ExportKind::Histogram => {
            set("bins", Some(args.bins.to_string()));
            set("scale", args.scale.clone());
            "histogram"
        }
        ExportKind::Boxplot => {
            let name = match &args.counter {
                Some(c) => c.clone(),
                None => ds
                    .meta
                    .counter_names
                    .first()
                    .cloned()
                    .ok_or_else(|| ApiError::bad_request("dataset has no counters"))?,
            };
            set("name", Some(name));
            "counter"
        }
    };
    let query = Query::parse(ds, endpoint, &params, 1.0)?;
    execute(ds, &query, Cancel::NEVER)
}

/// CSV text for an exported answer.
pub fn export_csv(answer: &Answer) -> Result<Vec<u8>, ApiError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let edge = |t0: u64, t1: u64, width: u32, i: usize| t0 as f64 + (t1 - t0) as f64 * i as f64 / width as f64;
    let csv_err = |e: csv::Error| ApiError::new(ErrorKind::Internal, "INTERNAL", e.to_string());
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    match answer {
        Answer::Utilization(u) => {
            let s = &u.series;
            w.write_record(["pixel", "t_start", "t_end", "utilization"])
                .map_err(csv_err)?;
            for (i, v) in s.values.iter().enumerate() {
                let row = [
                    i.to_string(),
                    edge(s.t0, s.t1, s.width, i).to_string(),
                    edge(s.t0, s.t1, s.width, i + 1).to_string(),
                    v.to_string(),
                ];
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        Answer::Histogram(h) => {
            w.write_record(["bin", "lower", "upper", "count"]).map_err(csv_err)?;
            for (i, c) in h.counts.iter().enumerate() {
                let row = [
                    i.to_string(),
                    h.bin_edges[i].to_string(),
                    h.bin_edges[i + 1].to_string(),
                    c.to_string(),
                ];
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        Answer::Counter(b) => {
            w.write_record(["pixel", "t_start", "t_end", "min", "max", "mean", "stddev"])
                .map_err(csv_err)?;
            for (i, p) in b.pixels.iter().enumerate() {
                let row = [
                    i.to_string(),
                    edge(b.t0, b.t1, b.width, i).to_string(),
                    edge(b.t0, b.t1, b.width, i + 1).to_string(),
                    opt(p.map(|s| s.min)),
                    opt(p.map(|s| s.max)),
                    opt(p.map(|s| s.mean)),
                    opt(p.map(|s| s.stddev)),
                ];
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        _ => return Err(ApiError::bad_request("this query cannot be exported")),
    }
    w.into_inner()
        .map_err(|e| ApiError::new(ErrorKind::Internal, "INTERNAL", e.to_string()))
}

fn export(data_dir: &Path, args: &ExportArgs) -> Result<(), ApiError> {
    let ds = open_store(data_dir)?.load(&args.dataset_id)?;
    let answer = export_answer(&ds, args)?;
    let bytes = export_csv(&answer)?;
    std::fs::write(&args.out, bytes).map_err(|e| io_error(args.out.display(), e))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn gen(args: &GenArgs) -> Result<(), ApiError> {
    if args.locations == 0 || args.intervals == 0 {
        return Err(ApiError::bad_request("--locations and --intervals must be at least 1"));
    }
    let config = GenConfig {
        seed: args.seed,
        locations: args.locations,
        intervals: args.intervals,
        depth: args.depth,
        counters: CounterSpec {
            names: args
                .counters
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
            samples: args.samples,
        },
        allow_overlap: args.allow_overlap,
    };
    let generated = generate(&config);
    std::fs::write(&args.out, &generated.text).map_err(|e| io_error(args.out.display(), e))?;
    if let Some(path) = &args.truth {
        let json = serde_json::to_vec_pretty(&generated.truth).expect("ground truth serializes");
        std::fs::write(path, json).map_err(|e| io_error(path.display(), e))?;
    }
    println!("wrote {} ({} intervals)", args.out.display(), args.intervals);
    Ok(())
}
