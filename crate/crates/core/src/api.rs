//! Request/response bodies of the service operations and the handlers that
//! serve them. The HTTP server and the in-process CLI both call these.

use std::io::BufReader;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::backtest::{
    run_backtest, AlwaysHold, BacktestConfig, BacktestResult, Baseline, BaselineParams, BaselineStrategy,
    Portfolio, Strategy,
};
use crate::config::default_roster;
use crate::consensus::{run_consensus, ConsensusOutcome, ConsensusParams, GrammarExtractor, HashEmbedder, ReportInput};
use crate::error::{Error, Result};
use crate::market_data::{load_price_series, parse_price_csv, InfoItem, PriceSeries, PriceSource};
use crate::memory::{reflect, MemoryBank, Reflection, ReflectionConfig};
use crate::metrics::{
    compute_metrics, preference_region, ConvergenceCurve, MetricsConfig, MetricsDigest, PreferenceRegion,
    RegionPlacement,
};
use crate::orchestration::{DecisionRecord, Roster, Trader};
use crate::pipeline::AgentPipeline;
use crate::provider::{MockBehavior, ProviderSpec};
use crate::report::{convergence, risk_return_csv, risk_return_rows, RiskReturnRow};
use crate::signals::{summary_table, SignalConfig, TemporalSummary};

/// Every bar of a price CSV, sorted and de-duplicated.
pub fn series_from_csv(ticker: &str, csv: &str) -> Result<PriceSeries> {
    let bars = parse_price_csv(csv.as_bytes())?;
    let (Some(first), Some(last)) = (
        bars.iter().map(|b| b.date).min(),
        bars.iter().map(|b| b.date).max(),
    ) else {
        return Err(Error::Ingestion("price file has no rows".into()));
    };
    let span = (last - first).num_days() as u32 + 1;
    load_price_series(&PriceSource::Bytes(csv.as_bytes()), ticker, last, span.max(360))
}

fn default_cash() -> f64 {
    100_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalsRequest {
    pub ticker: String,
    pub prices_csv: String,
    /// Last bar used; defaults to the newest bar.
    #[serde(default)]
    pub as_of: Option<NaiveDate>,
    #[serde(default = "default_cash")]
    pub cash: f64,
    #[serde(default)]
    pub shares: u64,
    #[serde(default)]
    pub config: Option<SignalConfig>,
}

pub fn signals(req: &SignalsRequest) -> Result<TemporalSummary> {
    let series = series_from_csv(&req.ticker, &req.prices_csv)?;
    let series = match req.as_of {
        Some(d) => series
            .up_to(d)
            .ok_or_else(|| Error::Precondition(format!("no bars on or before {d}")))?,
        None => series,
    };
    let portfolio = Portfolio {
        cash: req.cash,
        shares: req.shares,
        last_mark: series.last().close,
    };
    summary_table(&series, &portfolio, &req.config.clone().unwrap_or_default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusRequest {
    pub reports: Vec<ReportInput>,
    pub cutoff: DateTime<Utc>,
    #[serde(default)]
    pub params: Option<ConsensusParams>,
}

pub fn consensus(req: &ConsensusRequest) -> Result<ConsensusOutcome> {
    run_consensus(
        &req.reports,
        &GrammarExtractor,
        &HashEmbedder::default(),
        &req.params.clone().unwrap_or_default(),
        req.cutoff,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestRequest {
    pub ticker: String,
    pub prices_csv: String,
    /// A baseline name, `agents` or `always-hold`.
    pub strategy: String,
    #[serde(default)]
    pub items: Vec<InfoItem>,
    #[serde(default)]
    pub config: Option<BacktestConfig>,
    #[serde(default)]
    pub baselines: Option<BaselineParams>,
    #[serde(default)]
    pub roster: Option<Vec<ProviderSpec>>,
    #[serde(default)]
    pub trader: Option<ProviderSpec>,
    #[serde(default)]
    pub consensus: Option<ConsensusParams>,
    #[serde(default)]
    pub signals: Option<SignalConfig>,
    /// Concurrent provider calls per domain; defaults to 4.
    #[serde(default)]
    pub max_in_flight: Option<usize>,
    #[serde(default)]
    pub include_archive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResponse {
    pub result: BacktestResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archive: Option<Vec<DecisionRecord>>,
    /// Memory-bank snapshot (newline-delimited JSON) at the end of the run.
    pub memory_snapshot: String,
}

pub const AGENTS: &str = "agents";
pub const ALWAYS_HOLD: &str = "always-hold";

fn build_strategy(req: &BacktestRequest) -> Result<Box<dyn Strategy>> {
    match req.strategy.as_str() {
        ALWAYS_HOLD => Ok(Box::new(AlwaysHold)),
        AGENTS => {
            let roster = Roster::from_specs(&req.roster.clone().unwrap_or_else(default_roster))?;
            let trader = match &req.trader {
                Some(spec) => Trader::Provider {
                    provider: spec.build().map_err(|e| Error::Provider {
                        provider: spec.provider_id.clone(),
                        message: e.to_string(),
                    })?,
                    spec: spec.clone(),
                },
                None => Trader::Policy,
            };
            let mut p = AgentPipeline::new(&req.ticker, req.items.clone(), roster, trader);
            if let Some(c) = &req.consensus {
                p.consensus = c.clone();
            }
            if let Some(s) = &req.signals {
                p.signals = s.clone();
            }
            if let Some(n) = req.max_in_flight {
                if n == 0 {
                    return Err(Error::Config {
                        field: "max_in_flight".into(),
                        message: "must be at least 1".into(),
                    });
                }
                p.max_in_flight = n;
            }
            Ok(Box::new(p))
        }
        name => {
            let baseline: Baseline = name.parse().map_err(|message| Error::Config {
                field: "strategy".into(),
                message,
            })?;
            Ok(Box::new(BaselineStrategy {
                baseline,
                params: req.baselines.clone().unwrap_or_default(),
            }))
        }
    }
}

pub async fn backtest(req: &BacktestRequest) -> Result<BacktestResponse> {
    let config = req.config.clone().unwrap_or_default();
    if config.snapshot.is_some() {
        // The memory snapshot is returned in the response instead.
        return Err(Error::Config {
            field: "config.snapshot".into(),
            message: "not accepted by this operation".into(),
        });
    }
    let series = series_from_csv(&req.ticker, &req.prices_csv)?;
    let mut strategy = build_strategy(req)?;
    let mut result = run_backtest(strategy.as_mut(), &series, &config).await?;
    let archive = std::mem::take(&mut result.archive);
    let mut snapshot = Vec::new();
    result.memory.write_snapshot(&mut snapshot)?;
    Ok(BacktestResponse {
        result,
        archive: req.include_archive.then_some(archive),
        memory_snapshot: String::from_utf8(snapshot).expect("snapshot is UTF-8"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRequest {
    pub values: Vec<f64>,
    #[serde(default)]
    pub config: Option<MetricsConfig>,
    #[serde(default)]
    pub region: Option<PreferenceRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsResponse {
    pub digest: MetricsDigest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<RegionPlacement>,
}

pub fn metrics(req: &MetricsRequest) -> Result<MetricsResponse> {
    let digest = compute_metrics(&req.values, &req.config.clone().unwrap_or_default())?;
    let placement = match &req.region {
        Some(r) => {
            r.validate()?;
            Some(preference_region(digest.mdd, digest.cr, r))
        }
        None => None,
    };
    Ok(MetricsResponse { digest, placement })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectRequest {
    /// Memory-bank snapshot (newline-delimited JSON).
    pub snapshot: String,
    pub config: ReflectionConfig,
    #[serde(default)]
    pub provider: Option<ProviderSpec>,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectResponse {
    pub reflection: Reflection,
    /// The snapshot with the new reflection appended.
    pub snapshot: String,
}

pub async fn reflect_snapshot(req: &ReflectRequest) -> Result<ReflectResponse> {
    let mut bank = MemoryBank::read_snapshot(BufReader::new(req.snapshot.as_bytes()))?;
    let spec = req
        .provider
        .clone()
        .unwrap_or_else(|| ProviderSpec::mock("reflector", 0, MockBehavior::Faithful));
    let provider = spec.build().map_err(|e| Error::Provider {
        provider: spec.provider_id.clone(),
        message: e.to_string(),
    })?;
    let reflection = reflect(&mut bank, &req.config, provider.as_ref(), req.date).await?;
    let mut out = Vec::new();
    bank.write_snapshot(&mut out)?;
    Ok(ReflectResponse {
        reflection,
        snapshot: String::from_utf8(out).expect("snapshot is UTF-8"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRequest {
    pub results: Vec<BacktestResult>,
    #[serde(default)]
    pub region: Option<PreferenceRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub rows: Vec<RiskReturnRow>,
    pub risk_return_csv: String,
    pub convergence: Option<ConvergenceCurve>,
    pub convergence_csv: Option<String>,
}

pub fn report(req: &ReportRequest) -> Result<ReportResponse> {
    if let Some(r) = &req.region {
        r.validate()?;
    }
    let rows = risk_return_rows(&req.results, req.region.as_ref());
    let curve = convergence(&req.results)?;
    Ok(ReportResponse {
        risk_return_csv: risk_return_csv(&rows),
        rows,
        convergence_csv: curve.as_ref().map(ConvergenceCurve::to_csv),
        convergence: curve,
    })
}

/// Machine-readable error body shared by the service and its client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PutResponse {
    pub key: String,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionsResponse {
    pub key: String,
    pub versions: Vec<u32>,
}

pub const VERSION_HEADER: &str = "x-session-version";
