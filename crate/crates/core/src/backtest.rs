//! Portfolio accounting, trade execution, the daily simulation loop and the
//! rule-based baseline strategies.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use async_trait::async_trait;
use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{PriceBar, PriceSeries};
use crate::memory::{reflect, MemoryBank, MemoryConfig, ReflectionConfig, TradeRecord};
use crate::metrics::{compute_metrics, DayTrace, MetricsConfig, MetricsDigest};
use crate::orchestration::{DecisionRecord, TradeDecision};
use crate::provider::ProviderSpec;
use crate::signals::Action;
use crate::stats::{mean, sample_std, DEGENERATE_STD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub cash: f64,
    pub shares: u64,
    pub last_mark: f64,
}

impl Portfolio {
    pub fn new(cash: f64) -> Self {
        Self {
            cash,
            shares: 0,
            last_mark: 0.0,
        }
    }

    pub fn value(&self) -> f64 {
        self.cash + self.shares as f64 * self.last_mark
    }

    pub fn value_at(&self, price: f64) -> f64 {
        self.cash + self.shares as f64 * price
    }

    pub fn mark(&mut self, price: f64) {
        self.last_mark = price;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationMode {
    /// Every non-HOLD decision trades 100%.
    Full,
    /// Decisions keep their chosen percentage.
    #[default]
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeeModel {
    #[default]
    Zero,
    /// Fraction of traded notional.
    Proportional { rate: f64 },
    /// Flat amount per executed trade.
    Fixed { amount: f64 },
}

impl FeeModel {
    pub fn fee(&self, notional: f64) -> f64 {
        match *self {
            FeeModel::Zero => 0.0,
            FeeModel::Proportional { rate } => notional * rate,
            FeeModel::Fixed { amount } => amount,
        }
    }
}

pub const FLAG_INSUFFICIENT_CASH: &str = "insufficient-cash";
pub const FLAG_NO_POSITION: &str = "no-position";

/// Applies `decision` at `price` using whole shares, rounding down.
pub fn execute(
    decision: &TradeDecision,
    portfolio: &Portfolio,
    price: f64,
    date: NaiveDate,
    fees: &FeeModel,
) -> Result<(Portfolio, TradeRecord)> {
    if !(price.is_finite() && price > 0.0) {
        return Err(Error::Precondition(format!("execution price {price} must be positive")));
    }
    decision.validate().map_err(Error::Decision)?;
    let mut next = portfolio.clone();
    next.mark(price);
    let pre_value = portfolio.value_at(price);
    let fraction = f64::from(decision.trade_pct) / 100.0;
    let mut flags = Vec::new();

    let q: i64 = match decision.action {
        Action::Hold => 0,
        Action::Buy => {
            let budget = fraction * portfolio.cash;
            // The tiny relative bump keeps 0.5 * 1000 / 100 from flooring to 4.
            let mut n = (budget / price * (1.0 + 1e-12)).floor() as u64;
            while n > 0 && n as f64 * price + fees.fee(n as f64 * price) > portfolio.cash {
                n -= 1;
            }
            if n == 0 {
                flags.push(FLAG_INSUFFICIENT_CASH.to_string());
            }
            n as i64
        }
        Action::Sell => {
            let n = (fraction * portfolio.shares as f64 * (1.0 + 1e-12)).floor() as u64;
            let n = n.min(portfolio.shares);
            if n == 0 {
                flags.push(FLAG_NO_POSITION.to_string());
            }
            -(n as i64)
        }
    };

    let (action, pct) = if q == 0 {
        (Action::Hold, 0)
    } else {
        (decision.action, decision.trade_pct)
    };
    if q > 0 {
        let notional = q as f64 * price;
        next.cash = (next.cash - notional - fees.fee(notional)).max(0.0);
        next.shares += q as u64;
    } else if q < 0 {
        let notional = q.unsigned_abs() as f64 * price;
        next.cash += notional - fees.fee(notional);
        next.shares -= q.unsigned_abs();
    }
    let mut record = TradeRecord::new(date, action, pct, q, price, pre_value);
    record.flags = flags;
    Ok((next, record))
}

/// What a strategy sees on one trading day.
pub struct DayContext<'a> {
    pub date: NaiveDate,
    pub cutoff: DateTime<Utc>,
    /// Bars up to and including `date`.
    pub history: &'a PriceSeries,
    pub portfolio: &'a Portfolio,
    pub memory: &'a MemoryBank,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutput {
    pub decision: TradeDecision,
    pub archive: Option<DecisionRecord>,
}

impl From<TradeDecision> for StrategyOutput {
    fn from(decision: TradeDecision) -> Self {
        Self {
            decision,
            archive: None,
        }
    }
}

#[async_trait]
pub trait Strategy: Send {
    fn name(&self) -> String;
    async fn decide(&mut self, ctx: &DayContext<'_>) -> Result<StrategyOutput>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionSettings {
    pub configs: Vec<ReflectionConfig>,
    pub provider: ProviderSpec,
}

impl Default for ReflectionSettings {
    fn default() -> Self {
        Self {
            configs: vec![ReflectionConfig::short(), ReflectionConfig::long()],
            provider: ProviderSpec::mock("reflector", 0, crate::provider::MockBehavior::Faithful),
        }
    }
}

fn default_cutoff() -> NaiveTime {
    NaiveTime::from_hms_opt(13, 0, 0).expect("valid time")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub initial_cash: f64,
    pub allocation: AllocationMode,
    pub fees: FeeModel,
    /// Information cutoff within each trading day (UTC); execution is at the close.
    pub cutoff_time: NaiveTime,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    /// Calendar days of history required before `start`.
    pub min_history_days: u32,
    pub memory: MemoryConfig,
    pub reflection: Option<ReflectionSettings>,
    pub snapshot: Option<PathBuf>,
    pub metrics: MetricsConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            initial_cash: 100_000.0,
            allocation: AllocationMode::Partial,
            fees: FeeModel::Zero,
            cutoff_time: default_cutoff(),
            start: None,
            end: None,
            min_history_days: 0,
            memory: MemoryConfig::default(),
            reflection: None,
            snapshot: None,
            metrics: MetricsConfig::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_cash.is_finite() && self.initial_cash > 0.0) {
            return Err(Error::Config {
                field: "backtest.initial_cash".into(),
                message: "must be positive".into(),
            });
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if s > e {
                return Err(Error::Config {
                    field: "backtest.start".into(),
                    message: format!("start {s} is after end {e}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyValue {
    pub date: NaiveDate,
    pub value: f64,
    pub cash: f64,
    pub shares: u64,
    pub close: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub ticker: String,
    pub strategy: String,
    pub values: Vec<DailyValue>,
    pub trades: Vec<TradeRecord>,
    pub decisions: Vec<TradeDecision>,
    /// `{ticker}/{date}` ids of archived decision records.
    pub archive_ids: Vec<String>,
    #[serde(skip)]
    pub archive: Vec<DecisionRecord>,
    pub traces: Vec<DayTrace>,
    pub metrics: MetricsDigest,
    /// Final memory bank, including reflections.
    #[serde(skip)]
    pub memory: MemoryBank,
}

impl BacktestResult {
    pub fn value_series(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.value).collect()
    }

    pub fn trade_log_jsonl(&self) -> String {
        self.trades
            .iter()
            .map(|t| serde_json::to_string(t).expect("record serializes") + "\n")
            .collect()
    }
}

pub async fn run_backtest(
    strategy: &mut dyn Strategy,
    series: &PriceSeries,
    config: &BacktestConfig,
) -> Result<BacktestResult> {
    config.validate()?;
    let days: Vec<&PriceBar> = series
        .bars()
        .iter()
        .filter(|b| config.start.is_none_or(|s| b.date >= s) && config.end.is_none_or(|e| b.date <= e))
        .collect();
    let Some(first_day) = days.first() else {
        return Err(Error::Precondition("no trading days in the requested range".into()));
    };
    let history_days = (first_day.date - series.first().date).num_days();
    if history_days < i64::from(config.min_history_days) {
        return Err(Error::Precondition(format!(
            "series starts {} days before {}, {} required",
            history_days, first_day.date, config.min_history_days
        )));
    }

    let reflector = match &config.reflection {
        Some(r) => Some((
            r,
            r.provider.build().map_err(|e| Error::Provider {
                provider: r.provider.provider_id.clone(),
                message: e.to_string(),
            })?,
        )),
        None => None,
    };
    let mut memory = MemoryBank::new(config.memory.clone());
    if let Some(path) = &config.snapshot {
        memory = memory.with_snapshot(path);
    }
    let mut portfolio = Portfolio::new(config.initial_cash);
    let mut daily_returns: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    let mut prev_value = config.initial_cash;
    let mut result = BacktestResult {
        ticker: series.ticker().to_string(),
        strategy: strategy.name(),
        values: Vec::with_capacity(days.len()),
        trades: Vec::new(),
        decisions: Vec::new(),
        archive_ids: Vec::new(),
        archive: Vec::new(),
        traces: Vec::new(),
        metrics: compute_metrics(&[1.0, 1.0], &config.metrics)?,
        memory: MemoryBank::default(),
    };

    for bar in days {
        let Some(history) = series.up_to(bar.date) else {
            tracing::warn!(date = %bar.date, "no history for day; skipped");
            continue;
        };
        let mut day_flags = Vec::new();
        if let Some((settings, provider)) = &reflector {
            if !memory.is_empty() {
                for rc in &settings.configs {
                    if let Err(e) = reflect(&mut memory, rc, provider.as_ref(), bar.date).await {
                        tracing::warn!(date = %bar.date, config = %rc.name, error = %e, "reflection skipped");
                        day_flags.push(format!("reflection-skipped:{}", rc.name));
                    }
                }
            }
        }
        portfolio.mark(bar.close);
        let ctx = DayContext {
            date: bar.date,
            cutoff: bar.date.and_time(config.cutoff_time).and_utc(),
            history: &history,
            portfolio: &portfolio,
            memory: &memory,
        };
        let output = match strategy.decide(&ctx).await {
            Ok(o) => o,
            Err(e) => {
                tracing::warn!(date = %bar.date, error = %e, "strategy failed; holding");
                TradeDecision::failed(e).into()
            }
        };
        let mut decision = output.decision;
        if config.allocation == AllocationMode::Full && decision.action != Action::Hold {
            decision.trade_pct = 100;
        }
        let (next, mut record) = match execute(&decision, &portfolio, bar.close, bar.date, &config.fees) {
            Ok(done) => done,
            Err(e) => {
                decision = TradeDecision {
                    stage_trace: decision.stage_trace,
                    ..TradeDecision::failed(&e)
                };
                execute(&decision, &portfolio, bar.close, bar.date, &config.fees)?
            }
        };
        if let Some(err) = &decision.error {
            record.flags.push(format!("decision-error:{err}"));
        }
        record.flags.extend(day_flags);
        portfolio = next;
        memory.append_trade(record)?;

        let value = portfolio.value();
        daily_returns.insert(bar.date, value / prev_value - 1.0);
        prev_value = value;
        memory.backfill(
            bar.date,
            &|d| history.close_as_of(d),
            &|d| daily_returns.get(&d).copied(),
        )?;

        if !decision.stage_trace.is_empty() {
            result.traces.push(DayTrace {
                date: bar.date,
                stages: decision.stage_trace.iter().map(|s| (s.stage, s.action)).collect(),
                final_action: decision.action,
                error: decision.error.is_some(),
            });
        }
        if let Some(archive) = output.archive {
            result.archive_ids.push(format!("{}/{}", archive.ticker, archive.date));
            result.archive.push(archive);
        }
        result.values.push(DailyValue {
            date: bar.date,
            value,
            cash: portfolio.cash,
            shares: portfolio.shares,
            close: bar.close,
        });
        result.decisions.push(decision);
    }

    result.metrics = compute_metrics(&result.value_series(), &config.metrics)?;
    result.trades = memory.records().to_vec();
    result.memory = memory;
    Ok(result)
}

// ---- indicators -------------------------------------------------------------

/// Simple moving average; `None` until `n` values are available.
pub fn sma(xs: &[f64], n: usize) -> Vec<Option<f64>> {
    (0..xs.len())
        .map(|i| (n > 0 && i + 1 >= n).then(|| mean(&xs[i + 1 - n..=i])))
        .collect()
}

/// Exponential moving average seeded with the first value.
pub fn ema(xs: &[f64], n: usize) -> Vec<f64> {
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut out = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        out.push(if i == 0 { x } else { alpha * x + (1.0 - alpha) * out[i - 1] });
    }
    out
}

/// MACD line and its signal line.
pub fn macd(xs: &[f64], fast: usize, slow: usize, signal: usize) -> (Vec<f64>, Vec<f64>) {
    let f = ema(xs, fast);
    let s = ema(xs, slow);
    let line: Vec<f64> = f.iter().zip(&s).map(|(a, b)| a - b).collect();
    let sig = ema(&line, signal);
    (line, sig)
}

/// Wilder RSI; `None` for the first `n` values.
pub fn rsi(xs: &[f64], n: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; xs.len()];
    if n == 0 || xs.len() <= n {
        return out;
    }
    let change = |i: usize| xs[i] - xs[i - 1];
    let mut gain = (1..=n).map(|i| change(i).max(0.0)).sum::<f64>() / n as f64;
    let mut loss = (1..=n).map(|i| (-change(i)).max(0.0)).sum::<f64>() / n as f64;
    let value = |g: f64, l: f64| {
        if l == 0.0 {
            if g == 0.0 {
                50.0
            } else {
                100.0
            }
        } else {
            100.0 - 100.0 / (1.0 + g / l)
        }
    };
    out[n] = Some(value(gain, loss));
    for i in n + 1..xs.len() {
        let c = change(i);
        gain = (gain * (n as f64 - 1.0) + c.max(0.0)) / n as f64;
        loss = (loss * (n as f64 - 1.0) + (-c).max(0.0)) / n as f64;
        out[i] = Some(value(gain, loss));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kdj {
    pub k: f64,
    pub d: f64,
    pub j: f64,
}

/// Stochastic K/D/J with K and D starting at 50.
pub fn kdj(bars: &[PriceBar], n: usize, k_smooth: usize, d_smooth: usize) -> Vec<Option<Kdj>> {
    let mut out = vec![None; bars.len()];
    let (mut k, mut d) = (50.0, 50.0);
    for i in 0..bars.len() {
        if n == 0 || i + 1 < n {
            continue;
        }
        let w = &bars[i + 1 - n..=i];
        let low = w.iter().map(|b| b.low).fold(f64::MAX, f64::min);
        let high = w.iter().map(|b| b.high).fold(f64::MIN, f64::max);
        let rsv = if high - low > 0.0 {
            100.0 * (bars[i].close - low) / (high - low)
        } else {
            50.0
        };
        k = ((k_smooth as f64 - 1.0) * k + rsv) / k_smooth as f64;
        d = ((d_smooth as f64 - 1.0) * d + k) / d_smooth as f64;
        out[i] = Some(Kdj { k, d, j: 3.0 * k - 2.0 * d });
    }
    out
}

/// Z-score of each value against its trailing `n`-value mean and sample std.
pub fn zscore(xs: &[f64], n: usize) -> Vec<Option<f64>> {
    (0..xs.len())
        .map(|i| {
            if n < 2 || i + 1 < n {
                return None;
            }
            let w = &xs[i + 1 - n..=i];
            let sd = sample_std(w);
            Some(if sd <= DEGENERATE_STD { 0.0 } else { (xs[i] - mean(w)) / sd })
        })
        .collect()
}

// ---- baselines --------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    BuyAndHold,
    Macd,
    KdjRsi,
    Zmr,
    Sma,
}

impl Baseline {
    pub const ALL: [Baseline; 5] = [
        Baseline::BuyAndHold,
        Baseline::Macd,
        Baseline::KdjRsi,
        Baseline::Zmr,
        Baseline::Sma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::BuyAndHold => "buy-and-hold",
            Baseline::Macd => "macd",
            Baseline::KdjRsi => "kdj-rsi",
            Baseline::Zmr => "zmr",
            Baseline::Sma => "sma",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Baseline::ALL.iter().map(|b| b.as_str()).collect();
                format!("unknown baseline `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub macd_fast: usize,
    pub macd_slow: usize,
    pub macd_signal: usize,
    pub kdj_n: usize,
    pub kdj_k: usize,
    pub kdj_d: usize,
    pub kdj_overbought: f64,
    pub kdj_oversold: f64,
    pub rsi_n: usize,
    pub rsi_overbought: f64,
    pub rsi_oversold: f64,
    pub zmr_window: usize,
    pub zmr_entry: f64,
    pub zmr_exit: f64,
    pub sma_short: usize,
    pub sma_long: usize,
    pub trade_pct: u8,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            macd_fast: 12,
            macd_slow: 26,
            macd_signal: 9,
            kdj_n: 9,
            kdj_k: 3,
            kdj_d: 3,
            kdj_overbought: 80.0,
            kdj_oversold: 20.0,
            rsi_n: 14,
            rsi_overbought: 70.0,
            rsi_oversold: 30.0,
            zmr_window: 20,
            zmr_entry: 2.0,
            zmr_exit: 0.0,
            sma_short: 10,
            sma_long: 30,
            trade_pct: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BaselineState {
    pub holding: bool,
}

fn signal(action: Action, pct: u8, why: String) -> TradeDecision {
    match action {
        Action::Hold => TradeDecision::hold(why),
        a => TradeDecision {
            action: a,
            trade_pct: pct,
            confidence: 100.0,
            rationale: why,
            stage_trace: Vec::new(),
            error: None,
        },
    }
}

/// Today's baseline decision from bars up to today. Enters only when flat and
/// exits only when holding.
pub fn baseline_signal(
    baseline: Baseline,
    history: &PriceSeries,
    state: BaselineState,
    params: &BaselineParams,
) -> TradeDecision {
    let closes = history.closes();
    let n = closes.len();
    let pct = params.trade_pct;
    let enter = |cond: bool, why: String| {
        if cond && !state.holding {
            signal(Action::Buy, pct, why)
        } else {
            TradeDecision::hold(why)
        }
    };
    let exit = |cond: bool, why: String| {
        if cond && state.holding {
            signal(Action::Sell, pct, why)
        } else {
            TradeDecision::hold(why)
        }
    };
    match baseline {
        Baseline::BuyAndHold => enter(true, "buy and hold".into()),
        Baseline::Macd => {
            if n < 2 {
                return TradeDecision::hold("insufficient history");
            }
            let (line, sig) = macd(&closes, params.macd_fast, params.macd_slow, params.macd_signal);
            let (prev, now) = (line[n - 2] - sig[n - 2], line[n - 1] - sig[n - 1]);
            if prev <= 0.0 && now > 0.0 {
                enter(true, format!("MACD crossed above signal ({now:.4})"))
            } else if prev >= 0.0 && now < 0.0 {
                exit(true, format!("MACD crossed below signal ({now:.4})"))
            } else {
                TradeDecision::hold("no MACD crossover")
            }
        }
        Baseline::KdjRsi => {
            let k = kdj(history.bars(), params.kdj_n, params.kdj_k, params.kdj_d)[n - 1];
            let r = rsi(&closes, params.rsi_n)[n - 1];
            let (Some(k), Some(r)) = (k, r) else {
                return TradeDecision::hold("insufficient history");
            };
            let why = format!("K {:.2}, RSI {:.2}", k.k, r);
            if k.k >= params.kdj_overbought && r >= params.rsi_overbought {
                exit(true, format!("overbought: {why}"))
            } else if k.k <= params.kdj_oversold && r <= params.rsi_oversold {
                enter(true, format!("oversold: {why}"))
            } else {
                TradeDecision::hold(why)
            }
        }
        Baseline::Zmr => {
            let Some(z) = zscore(&closes, params.zmr_window)[n - 1] else {
                return TradeDecision::hold("insufficient history");
            };
            if state.holding {
                exit(z >= params.zmr_exit, format!("z {z:.3}"))
            } else {
                enter(z <= -params.zmr_entry, format!("z {z:.3}"))
            }
        }
        Baseline::Sma => {
            if n < params.sma_long + 1 {
                return TradeDecision::hold("insufficient history");
            }
            let short = sma(&closes, params.sma_short);
            let long = sma(&closes, params.sma_long);
            let diff = |i: usize| short[i].zip(long[i]).map(|(s, l)| s - l);
            let (Some(prev), Some(now)) = (diff(n - 2), diff(n - 1)) else {
                return TradeDecision::hold("insufficient history");
            };
            if prev <= 0.0 && now > 0.0 {
                enter(true, "short SMA crossed above long SMA".into())
            } else if prev >= 0.0 && now < 0.0 {
                exit(true, "short SMA crossed below long SMA".into())
            } else {
                TradeDecision::hold("no SMA crossover")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineStrategy {
    pub baseline: Baseline,
    pub params: BaselineParams,
}

impl BaselineStrategy {
    pub fn new(baseline: Baseline) -> Self {
        Self {
            baseline,
            params: BaselineParams::default(),
        }
    }
}

#[async_trait]
impl Strategy for BaselineStrategy {
    fn name(&self) -> String {
        self.baseline.to_string()
    }

    async fn decide(&mut self, ctx: &DayContext<'_>) -> Result<StrategyOutput> {
        let state = BaselineState {
            holding: ctx.portfolio.shares > 0,
        };
        Ok(baseline_signal(self.baseline, ctx.history, state, &self.params).into())
    }
}

/// Holds cash every day.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysHold;

#[async_trait]
impl Strategy for AlwaysHold {
    fn name(&self) -> String {
        "always-hold".into()
    }

    async fn decide(&mut self, _ctx: &DayContext<'_>) -> Result<StrategyOutput> {
        Ok(TradeDecision::hold("hold").into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(n: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Duration::days(n)
    }

    fn decision(action: Action, pct: u8) -> TradeDecision {
        TradeDecision {
            action,
            trade_pct: pct,
            confidence: 50.0,
            rationale: String::new(),
            stage_trace: Vec::new(),
            error: None,
        }
    }

    fn series(closes: &[f64]) -> PriceSeries {
        let dates: Vec<_> = (0..closes.len() as i64).map(d).collect();
        PriceSeries::from_closes("T", &dates, closes).unwrap()
    }

    #[test]
    fn buy_half_of_cash() {
        let p = Portfolio::new(1000.0);
        let (next, rec) = execute(&decision(Action::Buy, 50), &p, 100.0, d(0), &FeeModel::Zero).unwrap();
        assert_eq!(rec.shares_changed, 5);
        assert_eq!(next.cash, 500.0);
        assert_eq!(next.shares, 5);
        assert_eq!(rec.direction, 1);
        assert_eq!(rec.pre_trade_value, 1000.0);
    }

    #[test]
    fn sell_floors_share_count() {
        let p = Portfolio {
            cash: 0.0,
            shares: 10,
            last_mark: 90.0,
        };
        let (next, rec) = execute(&decision(Action::Sell, 25), &p, 100.0, d(0), &FeeModel::Zero).unwrap();
        assert_eq!(rec.shares_changed, -2);
        assert_eq!(next.cash, 200.0);
        assert_eq!(next.shares, 8);
        assert_eq!(rec.direction, -1);
    }

    #[test]
    fn hold_changes_nothing() {
        let p = Portfolio {
            cash: 10.0,
            shares: 3,
            last_mark: 5.0,
        };
        let (next, rec) = execute(&TradeDecision::hold(""), &p, 5.0, d(0), &FeeModel::Zero).unwrap();
        assert_eq!(next, p);
        assert_eq!(rec.direction, 0);
    }

    #[test]
    fn unaffordable_buy_degrades_to_hold() {
        let p = Portfolio::new(50.0);
        let (next, rec) = execute(&decision(Action::Buy, 100), &p, 100.0, d(0), &FeeModel::Zero).unwrap();
        assert_eq!(rec.action, Action::Hold);
        assert_eq!(rec.flags, vec![FLAG_INSUFFICIENT_CASH.to_string()]);
        assert_eq!(next.cash, 50.0);
    }

    #[test]
    fn fees_never_overdraw() {
        let p = Portfolio::new(1000.0);
        let fees = FeeModel::Proportional { rate: 0.01 };
        let (next, rec) = execute(&decision(Action::Buy, 100), &p, 100.0, d(0), &fees).unwrap();
        assert_eq!(rec.shares_changed, 9);
        assert!(next.cash >= 0.0);
    }

    #[test]
    fn rejects_bad_price() {
        assert!(execute(&TradeDecision::hold(""), &Portfolio::new(1.0), 0.0, d(0), &FeeModel::Zero).is_err());
    }

    #[test]
    fn rsi_of_rising_series_is_100() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(rsi(&xs, 14)[19], Some(100.0));
        assert_eq!(rsi(&xs, 14)[13], None);
    }

    #[test]
    fn ema_of_constant_is_constant() {
        assert!(ema(&[3.0; 40], 12).iter().all(|&v| v == 3.0));
    }

    #[test]
    fn macd_is_silent_on_constant_prices() {
        let s = series(&[10.0; 60]);
        for i in 1..=60 {
            let h = s.up_to(d(i - 1)).unwrap();
            for holding in [false, true] {
                let dec = baseline_signal(Baseline::Macd, &h, BaselineState { holding }, &BaselineParams::default());
                assert_eq!(dec.action, Action::Hold);
            }
        }
    }

    #[test]
    fn zmr_enters_on_deep_dip() {
        let mut closes = vec![100.0, 101.0].repeat(10);
        closes.push(80.0);
        let dec = baseline_signal(
            Baseline::Zmr,
            &series(&closes),
            BaselineState::default(),
            &BaselineParams::default(),
        );
        assert_eq!(dec.action, Action::Buy);
        assert_eq!(dec.trade_pct, 100);
    }

    #[test]
    fn baseline_names_round_trip() {
        for b in Baseline::ALL {
            assert_eq!(b.as_str().parse::<Baseline>().unwrap(), b);
        }
        assert!("momentum".parse::<Baseline>().is_err());
    }

    #[tokio::test]
    async fn always_hold_is_flat() {
        let s = series(&[10.0, 11.0, 9.0, 12.0]);
        let r = run_backtest(&mut AlwaysHold, &s, &BacktestConfig::default()).await.unwrap();
        assert!(r.value_series().iter().all(|&v| v == 100_000.0));
        assert_eq!(r.metrics.mdd, 0.0);
        assert_eq!(r.values.len(), 4);
    }
}
