//! `concord` — offline runs, reports and the HTTP service.
//!
//! Every operation runs in-process unless `--server URL` is given, in which
//! case the same request is sent to a running service.

use std::fs;
use std::io::{BufReader, Read};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand};
use concord_client::Client;
use concord_core::api::{self, BacktestRequest, BacktestResponse};
use concord_core::backtest::{Baseline, BacktestResult, ReflectionSettings};
use concord_core::config::AppConfig;
use concord_core::consensus::ReportInput;
use concord_core::market_data::{load_info_items, write_price_csv, InfoItem};
use concord_core::memory::ReflectionConfig;
use concord_core::session::{SessionKey, SessionKind, SessionStore};
use concord_core::synthetic::{synthetic_items, synthetic_series, GbmParams, ItemParams};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "concord", version, about = "Selective multi-agent consensus trading and backtesting")]
struct Cli {
    /// TOML config file; built-in defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` from the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Send operations to a running service instead of running them here.
    #[arg(long, global = true, value_name = "URL")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a price CSV, or generate a seeded synthetic ticker.
    Ingest(IngestArgs),
    /// Multi-horizon temporal summary as of a date.
    Signals(SignalsArgs),
    /// Score a JSON array of analyst reports and split high/low confidence.
    Consensus(ConsensusArgs),
    /// Run one or more strategies over a price file and write artifacts.
    Backtest(BacktestArgs),
    /// Metrics (and preference-region placement) of a saved backtest result.
    Metrics(MetricsArgs),
    /// Append one reflection to a memory snapshot.
    Reflect(ReflectArgs),
    /// Risk-return table and convergence curve over saved results.
    Report(ReportArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Read or write human-session records.
    #[command(subcommand)]
    Session(SessionCommand),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    ticker: String,
    /// Price CSV (date,open,high,low,close,volume).
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    csv: Option<PathBuf>,
    #[arg(long)]
    synthetic: bool,
    #[arg(long, requires = "synthetic")]
    start: Option<NaiveDate>,
    #[arg(long, requires = "synthetic")]
    end: Option<NaiveDate>,
    /// First date that receives synthetic analyst items.
    #[arg(long, requires = "synthetic")]
    items_from: Option<NaiveDate>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct SignalsArgs {
    #[arg(long)]
    ticker: String,
    #[arg(long)]
    prices: PathBuf,
    #[arg(long)]
    as_of: Option<NaiveDate>,
    #[arg(long, default_value_t = 100_000.0)]
    cash: f64,
    #[arg(long, default_value_t = 0)]
    shares: u64,
}

#[derive(Args)]
struct ConsensusArgs {
    /// JSON array of `{source, domain, body}` reports.
    #[arg(long)]
    reports: PathBuf,
    /// Information cutoff (RFC 3339).
    #[arg(long)]
    cutoff: DateTime<Utc>,
}

#[derive(Args)]
struct BacktestArgs {
    #[arg(long)]
    ticker: String,
    #[arg(long)]
    prices: PathBuf,
    /// Newline-delimited JSON analyst items (for the `agents` strategy).
    #[arg(long)]
    items: Option<PathBuf>,
    /// `agents`, `always-hold`, a baseline name, or `all`. Repeatable.
    #[arg(long = "strategy", default_value = "all")]
    strategies: Vec<String>,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    end: Option<NaiveDate>,
    /// Reflect with the default short and long configurations.
    #[arg(long)]
    reflect: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// A `result.json` written by `backtest`.
    #[arg(long)]
    result: PathBuf,
}

#[derive(Args)]
struct ReflectArgs {
    /// Memory snapshot; rewritten in place unless `--write` is given.
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long)]
    write: Option<PathBuf>,
    /// `short`, `long`, or a path to a JSON reflection config.
    #[arg(long = "reflection", default_value = "short")]
    reflection: String,
    #[arg(long)]
    date: NaiveDate,
}

#[derive(Args)]
struct ReportArgs {
    /// `result.json` files written by `backtest`.
    #[arg(required = true)]
    results: Vec<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Overrides `service.bind`.
    #[arg(long)]
    bind: Option<SocketAddr>,
    /// Overrides `service.data_dir`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct KeyArgs {
    #[arg(long)]
    user: String,
    #[arg(long)]
    ticker: String,
    #[arg(long, value_parser = parse_kind)]
    kind: SessionKind,
}

fn parse_kind(s: &str) -> std::result::Result<SessionKind, String> {
    s.parse().map_err(|e: concord_core::session::SessionError| e.to_string())
}

#[derive(Subcommand)]
enum SessionCommand {
    /// Print a stored record (latest version unless `--version`).
    Get {
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long)]
        version: Option<u32>,
    },
    /// Store a record from a file (or `-` for stdin); prints the new version.
    Put {
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long)]
        file: PathBuf,
    },
}

struct Ctx {
    config: AppConfig,
    out: PathBuf,
    client: Option<Client>,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

async fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    let ctx = Ctx {
        out: cli.out.clone().unwrap_or_else(|| config.output_dir.clone()),
        client: cli.server.as_deref().map(Client::new),
        config,
    };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Signals(a) => signals(&ctx, a).await,
        Command::Consensus(a) => consensus(&ctx, a).await,
        Command::Backtest(a) => backtest(&ctx, a).await,
        Command::Metrics(a) => metrics(&ctx, a).await,
        Command::Reflect(a) => reflect(&ctx, a).await,
        Command::Report(a) => report(&ctx, a).await,
        Command::Serve(a) => serve(&ctx, a).await,
        Command::Session(c) => session(&ctx, c).await,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("response serializes") + "\n"
}

fn ingest(ctx: &Ctx, a: IngestArgs) -> Result<()> {
    let prices = ctx.out.join(format!("{}.csv", a.ticker));
    let series = if a.synthetic {
        let start = a.start.context("--start is required with --synthetic")?;
        let end = a.end.context("--end is required with --synthetic")?;
        let series = synthetic_series(&a.ticker, start, end, &GbmParams::default(), a.seed)?;
        let items = synthetic_items(&series, a.items_from.unwrap_or(start), &ItemParams::default(), a.seed);
        let jsonl: String = items
            .iter()
            .map(|i| serde_json::to_string(i).expect("item serializes") + "\n")
            .collect();
        let path = ctx.out.join(format!("{}.items.jsonl", a.ticker));
        write(&path, jsonl)?;
        println!("{} items -> {}", items.len(), path.display());
        series
    } else {
        let csv = a.csv.expect("clap enforces --csv or --synthetic");
        api::series_from_csv(&a.ticker, &read(&csv)?)?
    };
    let mut buf = Vec::new();
    write_price_csv(&series, &mut buf)?;
    write(&prices, buf)?;
    println!("{} bars -> {}", series.len(), prices.display());
    Ok(())
}

async fn signals(ctx: &Ctx, a: SignalsArgs) -> Result<()> {
    let req = api::SignalsRequest {
        ticker: a.ticker,
        prices_csv: read(&a.prices)?,
        as_of: a.as_of,
        cash: a.cash,
        shares: a.shares,
        config: Some(ctx.config.signals.clone()),
    };
    let summary = match &ctx.client {
        Some(c) => c.signals(&req).await?,
        None => api::signals(&req)?,
    };
    print!("{}", to_json(&summary));
    Ok(())
}

async fn consensus(ctx: &Ctx, a: ConsensusArgs) -> Result<()> {
    let reports: Vec<ReportInput> =
        serde_json::from_str(&read(&a.reports)?).with_context(|| format!("parsing {}", a.reports.display()))?;
    let req = api::ConsensusRequest {
        reports,
        cutoff: a.cutoff,
        params: Some(ctx.config.consensus.clone()),
    };
    let outcome = match &ctx.client {
        Some(c) => c.consensus(&req).await?,
        None => api::consensus(&req)?,
    };
    print!("{}", to_json(&outcome));
    Ok(())
}

fn expand_strategies(names: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for n in names {
        if n == "all" {
            out.push(api::AGENTS.to_string());
            out.extend(Baseline::ALL.iter().map(|b| b.as_str().to_string()));
        } else {
            out.push(n.clone());
        }
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|n| seen.insert(n.clone()));
    out
}

async fn backtest(ctx: &Ctx, a: BacktestArgs) -> Result<()> {
    let prices_csv = read(&a.prices)?;
    let items: Vec<InfoItem> = match &a.items {
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            load_info_items(BufReader::new(f))?
        }
        None => Vec::new(),
    };
    let mut config = ctx.config.backtest.clone();
    // Snapshots are written per strategy below.
    config.snapshot = None;
    config.start = a.start.or(config.start);
    config.end = a.end.or(config.end);
    if a.reflect && config.reflection.is_none() {
        config.reflection = Some(ReflectionSettings::default());
    }

    let dir = ctx.out.join(&a.ticker);
    let mut results = Vec::new();
    for strategy in expand_strategies(&a.strategies) {
        let req = BacktestRequest {
            ticker: a.ticker.clone(),
            prices_csv: prices_csv.clone(),
            strategy: strategy.clone(),
            items: if strategy == api::AGENTS { items.clone() } else { Vec::new() },
            config: Some(config.clone()),
            baselines: Some(ctx.config.baselines.clone()),
            roster: Some(ctx.config.roster.clone()),
            trader: ctx.config.trader.clone(),
            consensus: Some(ctx.config.consensus.clone()),
            signals: Some(ctx.config.signals.clone()),
            max_in_flight: Some(ctx.config.max_in_flight),
            include_archive: strategy == api::AGENTS,
        };
        let resp: BacktestResponse = match &ctx.client {
            Some(c) => c.backtest(&req).await?,
            None => api::backtest(&req).await?,
        };
        let sdir = dir.join(&strategy);
        write(&sdir.join("result.json"), to_json(&resp.result))?;
        write(&sdir.join("trades.jsonl"), resp.result.trade_log_jsonl())?;
        write(&sdir.join("metrics.json"), to_json(&resp.result.metrics))?;
        write(&sdir.join("memory.jsonl"), &resp.memory_snapshot)?;
        if let Some(archive) = &resp.archive {
            let jsonl: String = archive
                .iter()
                .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
                .collect();
            write(&sdir.join("decisions.jsonl"), jsonl)?;
        }
        let m = &resp.result.metrics;
        println!(
            "{:<13} CR {:>8.2}%  AR {:>8.2}%  SR {:>6}  MDD {:>6.2}%  -> {}",
            strategy,
            m.cr,
            m.ar,
            m.sharpe.value().map_or("n/a".into(), |s| format!("{s:.3}")),
            m.mdd,
            sdir.display()
        );
        results.push(resp.result);
    }
    write_report(ctx, &dir, results).await
}

async fn write_report(ctx: &Ctx, dir: &Path, results: Vec<BacktestResult>) -> Result<()> {
    let req = api::ReportRequest {
        results,
        region: ctx.config.preference.clone(),
    };
    let resp = match &ctx.client {
        Some(c) => c.report(&req).await?,
        None => api::report(&req)?,
    };
    write(&dir.join("risk_return.csv"), &resp.risk_return_csv)?;
    println!("risk-return table -> {}", dir.join("risk_return.csv").display());
    if let Some(csv) = &resp.convergence_csv {
        write(&dir.join("convergence.csv"), csv)?;
        println!("convergence curve -> {}", dir.join("convergence.csv").display());
    }
    Ok(())
}

fn load_result(path: &Path) -> Result<BacktestResult> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

async fn metrics(ctx: &Ctx, a: MetricsArgs) -> Result<()> {
    let result = load_result(&a.result)?;
    let req = api::MetricsRequest {
        values: result.value_series(),
        config: Some(ctx.config.backtest.metrics.clone()),
        region: ctx.config.preference.clone(),
    };
    let resp = match &ctx.client {
        Some(c) => c.metrics(&req).await?,
        None => api::metrics(&req)?,
    };
    print!("{}", to_json(&resp));
    Ok(())
}

async fn reflect(ctx: &Ctx, a: ReflectArgs) -> Result<()> {
    let config = match a.reflection.as_str() {
        "short" => ReflectionConfig::short(),
        "long" => ReflectionConfig::long(),
        path => serde_json::from_str(&read(Path::new(path))?).with_context(|| format!("parsing {path}"))?,
    };
    let req = api::ReflectRequest {
        snapshot: read(&a.snapshot)?,
        config,
        provider: ctx.config.backtest.reflection.as_ref().map(|r| r.provider.clone()),
        date: a.date,
    };
    let resp = match &ctx.client {
        Some(c) => c.reflect(&req).await?,
        None => api::reflect_snapshot(&req).await?,
    };
    write(a.write.as_ref().unwrap_or(&a.snapshot), &resp.snapshot)?;
    print!("{}", to_json(&resp.reflection));
    Ok(())
}

async fn report(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    let results = a.results.iter().map(|p| load_result(p)).collect::<Result<Vec<_>>>()?;
    write_report(ctx, &ctx.out, results).await
}

async fn serve(ctx: &Ctx, a: ServeArgs) -> Result<()> {
    if ctx.client.is_some() {
        bail!("`serve` does not take --server");
    }
    let svc = &ctx.config.service;
    let addr = match a.bind {
        Some(b) => b,
        None => svc.bind.parse().with_context(|| format!("service.bind `{}`", svc.bind))?,
    };
    let data_dir = a.data_dir.unwrap_or_else(|| svc.data_dir.clone());
    let state = concord_server::AppState::new(SessionStore::on_disk(data_dir));
    concord_server::serve(addr, state, svc.cors_origin.as_deref()).await?;
    Ok(())
}

async fn session(ctx: &Ctx, cmd: SessionCommand) -> Result<()> {
    let local = || SessionStore::on_disk(ctx.config.service.data_dir.clone());
    match cmd {
        SessionCommand::Get { key, version } => {
            let key = SessionKey::new(&key.user, &key.ticker, key.kind)?;
            let (v, body) = match &ctx.client {
                Some(c) => c.get_session(&key, version).await?,
                None => local().get(&key, version).await?,
            };
            eprintln!("{} v{v}", key.path());
            println!("{}", String::from_utf8_lossy(&body));
        }
        SessionCommand::Put { key, file } => {
            let key = SessionKey::new(&key.user, &key.ticker, key.kind)?;
            let body = if file == Path::new("-") {
                let mut buf = Vec::new();
                std::io::stdin().read_to_end(&mut buf)?;
                buf
            } else {
                fs::read(&file).with_context(|| format!("reading {}", file.display()))?
            };
            let v = match &ctx.client {
                Some(c) => c.put_session(&key, body).await?,
                None => local().put(&key, &body).await?,
            };
            println!("{} v{v}", key.path());
        }
    }
    Ok(())
}
