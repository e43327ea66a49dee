//! Append-only trade memory with leakage-safe retrospective backfill and
//! short/long-horizon reflection.
//!
//! Horizon outcomes start empty on every record and are filled only once the
//! bank clock has reached `record.date + h`. Filled values are never revised.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::provider::{ChatProvider, ChatRequest, OutputSchema};
use crate::signals::Action;
use crate::stats::{index_slope, mean, population_std, DEGENERATE_STD};

pub const SNAPSHOT_FORMAT: &str = "concord-memory-bank";
pub const SNAPSHOT_VERSION: u32 = 1;

/// A Sharpe ratio, or the marker for a degenerate sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sharpe {
    Value(f64),
    Undefined,
}

impl Sharpe {
    pub fn value(self) -> Option<f64> {
        match self {
            Sharpe::Value(v) => Some(v),
            Sharpe::Undefined => None,
        }
    }
}

impl fmt::Display for Sharpe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sharpe::Value(v) => write!(f, "{v:+.4}"),
            Sharpe::Undefined => f.write_str("n/a"),
        }
    }
}

impl Serialize for Sharpe {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sharpe::Value(v) => s.serialize_f64(*v),
            Sharpe::Undefined => s.serialize_str("n/a"),
        }
    }
}

impl<'de> Deserialize<'de> for Sharpe {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Sharpe::Value(v)),
            Raw::Text(t) if t == "n/a" => Ok(Sharpe::Undefined),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad sharpe `{t}`"))),
        }
    }
}

/// Outcomes of one record at one horizon; every field starts empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HorizonOutcome {
    /// Realized return in percent of pre-trade value.
    pub ret: Option<f64>,
    pub sharpe: Option<Sharpe>,
    pub ret_slope: Option<f64>,
    pub sharpe_slope: Option<f64>,
    /// Bank clock when `ret` was filled.
    pub filled_at: Option<NaiveDate>,
}

impl HorizonOutcome {
    pub fn is_empty(&self) -> bool {
        self.ret.is_none()
            && self.sharpe.is_none()
            && self.ret_slope.is_none()
            && self.sharpe_slope.is_none()
            && self.filled_at.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub date: NaiveDate,
    pub action: Action,
    pub trade_pct: u8,
    /// Signed share change: positive for buys, negative for sells.
    pub shares_changed: i64,
    pub entry_price: f64,
    pub pre_trade_value: f64,
    pub direction: i8,
    #[serde(default)]
    pub horizons: BTreeMap<u32, HorizonOutcome>,
    #[serde(default)]
    pub reflections: Vec<String>,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl TradeRecord {
    pub fn new(
        date: NaiveDate,
        action: Action,
        trade_pct: u8,
        shares_changed: i64,
        entry_price: f64,
        pre_trade_value: f64,
    ) -> Self {
        let direction = match shares_changed.signum() {
            0 => 0,
            s => s as i8,
        };
        Self {
            date,
            action,
            trade_pct,
            shares_changed,
            entry_price,
            pre_trade_value,
            direction,
            horizons: BTreeMap::new(),
            reflections: Vec::new(),
            flags: Vec::new(),
        }
    }

    pub fn outcome(&self, h: u32) -> Option<&HorizonOutcome> {
        self.horizons.get(&h)
    }

    pub fn ret(&self, h: u32) -> Option<f64> {
        self.outcome(h).and_then(|o| o.ret)
    }

    pub fn sharpe(&self, h: u32) -> Option<Sharpe> {
        self.outcome(h).and_then(|o| o.sharpe)
    }
}

/// Which daily returns feed a record's horizon Sharpe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharpeAnchor {
    /// The `h` calendar days ending at the evaluation date `t + h`.
    #[default]
    EvaluationDate,
    /// The `h` calendar days ending at the trade date `t`.
    TradeDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub horizons: Vec<u32>,
    pub slope_window: usize,
    pub sharpe_min_horizon: u32,
    pub sharpe_min_points: usize,
    pub sharpe_anchor: SharpeAnchor,
    pub annualization_days: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            horizons: crate::market_data::HorizonSet::DEFAULT.to_vec(),
            slope_window: 5,
            sharpe_min_horizon: 7,
            sharpe_min_points: 3,
            sharpe_anchor: SharpeAnchor::EvaluationDate,
            annualization_days: 252.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Bull,
    Bear,
    Trader,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionConfig {
    pub name: String,
    pub horizons: Vec<u32>,
    pub window: usize,
    pub role: Role,
}

impl ReflectionConfig {
    pub fn short() -> Self {
        Self {
            name: "short".into(),
            horizons: vec![1, 7, 14],
            window: 5,
            role: Role::Trader,
        }
    }

    pub fn long() -> Self {
        Self {
            name: "long".into(),
            horizons: vec![28, 90, 180, 360],
            window: 5,
            role: Role::Trader,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonDigest {
    pub horizon: u32,
    pub realized: usize,
    pub mean_return: Option<f64>,
    pub latest_return: Option<f64>,
    pub mean_sharpe: Option<f64>,
    pub latest_sharpe: Option<Sharpe>,
    pub latest_return_slope: Option<f64>,
    pub latest_sharpe_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceDigest {
    pub records: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub buys: usize,
    pub sells: usize,
    pub holds: usize,
    pub horizons: Vec<HorizonDigest>,
}

impl PerformanceDigest {
    pub fn has_outcomes(&self) -> bool {
        self.horizons.iter().any(|h| h.realized > 0)
    }

    pub fn horizon(&self, h: u32) -> Option<&HorizonDigest> {
        self.horizons.iter().find(|d| d.horizon == h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub id: String,
    pub date: NaiveDate,
    pub config: String,
    pub role: Role,
    pub text: String,
    pub source: String,
    pub digest: PerformanceDigest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
// Adjacent tagging avoids buffering, which would break integer map keys.
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
enum SnapshotLine {
    Header {
        format: String,
        version: u32,
        config: MemoryConfig,
        clock: Option<NaiveDate>,
    },
    Record(TradeRecord),
    Reflection(Reflection),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryBank {
    config: MemoryConfig,
    records: Vec<TradeRecord>,
    reflections: Vec<Reflection>,
    clock: Option<NaiveDate>,
    snapshot_path: Option<PathBuf>,
}

impl MemoryBank {
    pub fn new(config: MemoryConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    /// Writes a snapshot after every append and backfill.
    pub fn with_snapshot(mut self, path: impl Into<PathBuf>) -> Self {
        self.snapshot_path = Some(path.into());
        self
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn records(&self) -> &[TradeRecord] {
        &self.records
    }

    pub fn reflections(&self) -> &[Reflection] {
        &self.reflections
    }

    pub fn clock(&self) -> Option<NaiveDate> {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn append_trade(&mut self, record: TradeRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.date <= last.date {
                return Err(Error::Ordering {
                    date: record.date,
                    last: last.date,
                });
            }
        }
        if record.horizons.values().any(|o| !o.is_empty()) {
            return Err(Error::Leakage(format!(
                "record {} arrived with horizon outcomes already set",
                record.date
            )));
        }
        self.records.push(record);
        self.persist()
    }

    /// Fills every horizon outcome that has become observable by `now`.
    ///
    /// `price_lookup` returns the entry price observable on a date and
    /// `daily_returns` the portfolio return of a date (fraction). Returns the
    /// number of fields written.
    pub fn backfill(
        &mut self,
        now: NaiveDate,
        price_lookup: &dyn Fn(NaiveDate) -> Option<f64>,
        daily_returns: &dyn Fn(NaiveDate) -> Option<f64>,
    ) -> Result<usize> {
        self.clock = Some(self.clock.map_or(now, |c| c.max(now)));
        let cfg = self.config.clone();
        let mut filled = 0;
        for record in &mut self.records {
            for &h in &cfg.horizons {
                let eval = record.date + Duration::days(i64::from(h));
                if eval > now || record.ret(h).is_some() {
                    continue;
                }
                let Some(exit_price) = price_lookup(eval) else {
                    tracing::debug!(date = %record.date, h, "no price for backfill yet");
                    continue;
                };
                let ret = if record.direction == 0 {
                    0.0
                } else {
                    let pnl = (exit_price - record.entry_price)
                        * f64::from(record.direction)
                        * record.shares_changed.unsigned_abs() as f64;
                    100.0 * pnl / record.pre_trade_value
                };
                let outcome = record.horizons.entry(h).or_default();
                outcome.ret = Some(ret);
                outcome.filled_at = Some(now);
                filled += 1;
                if h >= cfg.sharpe_min_horizon {
                    let anchor = match cfg.sharpe_anchor {
                        SharpeAnchor::EvaluationDate => eval,
                        SharpeAnchor::TradeDate => record.date,
                    };
                    outcome.sharpe = Some(horizon_sharpe(anchor, h, daily_returns, &cfg));
                    filled += 1;
                }
            }
        }
        filled += self.fill_slopes();
        self.persist()?;
        Ok(filled)
    }

    fn fill_slopes(&mut self) -> usize {
        let w = self.config.slope_window;
        let mut filled = 0;
        for &h in &self.config.horizons.clone() {
            let ret_slopes = rolling_slopes_by(&self.records, w, |r| r.ret(h));
            let sr_slopes =
                rolling_slopes_by(&self.records, w, |r| r.sharpe(h).and_then(Sharpe::value));
            for (record, (rs, ss)) in self.records.iter_mut().zip(ret_slopes.into_iter().zip(sr_slopes)) {
                let Some(outcome) = record.horizons.get_mut(&h) else {
                    continue;
                };
                if outcome.ret_slope.is_none() && rs.is_some() {
                    outcome.ret_slope = rs;
                    filled += 1;
                }
                if outcome.sharpe_slope.is_none() && ss.is_some() {
                    outcome.sharpe_slope = ss;
                    filled += 1;
                }
            }
        }
        filled
    }

    pub fn add_reflection(&mut self, reflection: Reflection) -> Result<()> {
        if let Some(last) = self.records.last_mut() {
            if last.date <= reflection.date {
                last.reflections.push(reflection.id.clone());
            }
        }
        self.reflections.push(reflection);
        self.persist()
    }

    /// Most recent reflection generated under `config` for `role`.
    pub fn latest_reflection(&self, config: &str, role: Role) -> Option<&Reflection> {
        self.reflections
            .iter()
            .rev()
            .find(|r| r.config == config && r.role == role)
    }

    pub fn digest(&self, horizons: &[u32]) -> PerformanceDigest {
        let count = |a: Action| self.records.iter().filter(|r| r.action == a).count();
        let horizons = horizons
            .iter()
            .map(|&h| {
                let rets: Vec<f64> = self.records.iter().filter_map(|r| r.ret(h)).collect();
                let sharpes: Vec<f64> = self
                    .records
                    .iter()
                    .filter_map(|r| r.sharpe(h).and_then(Sharpe::value))
                    .collect();
                let latest_filled = self.records.iter().rev().find(|r| r.ret(h).is_some());
                let outcome = latest_filled.and_then(|r| r.outcome(h));
                let latest_slope = |f: fn(&HorizonOutcome) -> Option<f64>| {
                    self.records
                        .iter()
                        .rev()
                        .find_map(|r| r.outcome(h).and_then(f))
                };
                HorizonDigest {
                    horizon: h,
                    realized: rets.len(),
                    mean_return: (!rets.is_empty()).then(|| mean(&rets)),
                    latest_return: outcome.and_then(|o| o.ret),
                    mean_sharpe: (!sharpes.is_empty()).then(|| mean(&sharpes)),
                    latest_sharpe: outcome.and_then(|o| o.sharpe),
                    latest_return_slope: latest_slope(|o| o.ret_slope),
                    latest_sharpe_slope: latest_slope(|o| o.sharpe_slope),
                }
            })
            .collect();
        PerformanceDigest {
            records: self.records.len(),
            first_date: self.records.first().map(|r| r.date),
            last_date: self.records.last().map(|r| r.date),
            buys: count(Action::Buy),
            sells: count(Action::Sell),
            holds: count(Action::Hold),
            horizons,
        }
    }

    fn persist(&self) -> Result<()> {
        if let Some(path) = &self.snapshot_path {
            let tmp = path.with_extension("tmp");
            {
                let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
                self.write_snapshot(&mut f)?;
                f.flush()?;
            }
            std::fs::rename(tmp, path)?;
        }
        Ok(())
    }

    pub fn write_snapshot(&self, mut w: impl Write) -> Result<()> {
        let header = SnapshotLine::Header {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            config: self.config.clone(),
            clock: self.clock,
        };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for r in &self.records {
            writeln!(w, "{}", serde_json::to_string(&SnapshotLine::Record(r.clone()))?)?;
        }
        for r in &self.reflections {
            writeln!(w, "{}", serde_json::to_string(&SnapshotLine::Reflection(r.clone()))?)?;
        }
        Ok(())
    }

    pub fn read_snapshot(r: impl BufRead) -> Result<Self> {
        let mut bank: Option<MemoryBank> = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: SnapshotLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                row: i + 1,
                message: e.to_string(),
            })?;
            match (parsed, bank.as_mut()) {
                (
                    SnapshotLine::Header {
                        format,
                        version,
                        config,
                        clock,
                    },
                    None,
                ) => {
                    if format != SNAPSHOT_FORMAT || version != SNAPSHOT_VERSION {
                        return Err(Error::Parse {
                            row: i + 1,
                            message: format!("unsupported snapshot {format} v{version}"),
                        });
                    }
                    let mut b = MemoryBank::new(config);
                    b.clock = clock;
                    bank = Some(b);
                }
                (SnapshotLine::Record(rec), Some(b)) => b.records.push(rec),
                (SnapshotLine::Reflection(rf), Some(b)) => b.reflections.push(rf),
                _ => {
                    return Err(Error::Parse {
                        row: i + 1,
                        message: "snapshot must start with exactly one header".into(),
                    })
                }
            }
        }
        bank.ok_or_else(|| Error::Parse {
            row: 0,
            message: "empty snapshot".into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_snapshot(std::io::BufReader::new(f))
    }
}

/// Annualized Sharpe of the daily returns in `(anchor - h, anchor]`, with
/// population standard deviation.
fn horizon_sharpe(
    anchor: NaiveDate,
    h: u32,
    daily_returns: &dyn Fn(NaiveDate) -> Option<f64>,
    cfg: &MemoryConfig,
) -> Sharpe {
    let sample: Vec<f64> = (0..i64::from(h))
        .rev()
        .filter_map(|back| daily_returns(anchor - Duration::days(back)))
        .collect();
    if sample.len() < cfg.sharpe_min_points {
        return Sharpe::Undefined;
    }
    let sd = population_std(&sample);
    if sd <= DEGENERATE_STD {
        return Sharpe::Undefined;
    }
    Sharpe::Value(cfg.annualization_days.sqrt() * mean(&sample) / sd)
}

fn rolling_slopes_by(
    records: &[TradeRecord],
    w: usize,
    value: impl Fn(&TradeRecord) -> Option<f64>,
) -> Vec<Option<f64>> {
    let mut seen: Vec<f64> = Vec::new();
    records
        .iter()
        .map(|r| {
            let v = value(r)?;
            seen.push(v);
            (w >= 2 && seen.len() >= w)
                .then(|| index_slope(&seen[seen.len() - w..]))
                .flatten()
        })
        .collect()
}

/// Least-squares slope of each record's last `w` realized returns at `h`
/// (itself included), against trade index `0..w`.
pub fn rolling_slopes(bank: &MemoryBank, h: u32, w: usize) -> Result<Vec<Option<f64>>> {
    if w < 2 {
        return Err(Error::Precondition("slope window must be at least 2".into()));
    }
    Ok(rolling_slopes_by(&bank.records, w, |r| r.ret(h)))
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:+.4}%"))
}

fn fmt_num(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:+.4}"))
}

pub fn slope_tag(slope: Option<f64>) -> &'static str {
    match slope {
        Some(s) if s > 0.0 => "improving",
        Some(s) if s < 0.0 => "deteriorating",
        Some(_) => "flat",
        None => "n/a",
    }
}

pub const REFLECTION_INSTRUCTIONS: &str = "\
Review the realized outcomes above. For each horizon, state whether the strategy is \
improving or deteriorating and why. Recommend concrete adjustments to confidence, \
risk posture and position sizing for the next decision. Do not speculate about \
prices that have not been observed.";

/// Deterministic prompt with overview, per-horizon summaries and instructions.
pub fn reflection_prompt(bank: &MemoryBank, config: &ReflectionConfig) -> Result<String> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    let digest = bank.digest(&config.horizons);
    Ok(render_prompt(&digest, config))
}

fn render_prompt(digest: &PerformanceDigest, config: &ReflectionConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "## Dataset overview");
    let span = match (digest.first_date, digest.last_date) {
        (Some(a), Some(b)) => format!("{a} to {b}"),
        _ => "n/a".into(),
    };
    let _ = writeln!(out, "Records: {} ({span})", digest.records);
    let _ = writeln!(
        out,
        "Actions: BUY {}, SELL {}, HOLD {}",
        digest.buys, digest.sells, digest.holds
    );
    let hs: Vec<String> = config.horizons.iter().map(u32::to_string).collect();
    let _ = writeln!(
        out,
        "Horizon configuration: {} ({}), role {:?}",
        config.name,
        hs.join(", "),
        config.role
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "## Per-horizon performance");
    if !digest.has_outcomes() {
        let _ = writeln!(out, "Realized outcomes: none");
    }
    for d in &digest.horizons {
        let latest_sr = d.latest_sharpe.map_or("n/a".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "h={}: realized {}/{}, mean return {}, latest return {}, mean Sharpe {}, latest Sharpe {}, return slope {} ({}), Sharpe slope {} ({})",
            d.horizon,
            d.realized,
            digest.records,
            fmt_pct(d.mean_return),
            fmt_pct(d.latest_return),
            fmt_num(d.mean_sharpe),
            latest_sr,
            fmt_num(d.latest_return_slope),
            slope_tag(d.latest_return_slope),
            fmt_num(d.latest_sharpe_slope),
            slope_tag(d.latest_sharpe_slope),
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "## Reflection instructions");
    let _ = writeln!(out, "{REFLECTION_INSTRUCTIONS}");
    out
}

pub const REFLECTION_SYSTEM_PROMPT: &str =
    "You are a trading performance reviewer. Answer in plain text.";

/// Generates a reflection through `provider` and stores it in the bank.
pub async fn reflect(
    bank: &mut MemoryBank,
    config: &ReflectionConfig,
    provider: &dyn ChatProvider,
    date: NaiveDate,
) -> Result<Reflection> {
    let prompt = reflection_prompt(bank, config)?;
    let digest = bank.digest(&config.horizons);
    let response = provider
        .complete(&ChatRequest {
            system: REFLECTION_SYSTEM_PROMPT.into(),
            user: prompt,
            schema: OutputSchema::Reflection,
        })
        .await
        .map_err(|e| Error::Provider {
            provider: provider.id().to_string(),
            message: e.to_string(),
        })?;
    let reflection = Reflection {
        id: format!("{}-{:?}-{}", config.name, config.role, date).to_lowercase(),
        date,
        config: config.name.clone(),
        role: config.role,
        text: response.text,
        source: provider.id().to_string(),
        digest,
    };
    bank.add_reflection(reflection.clone())?;
    Ok(reflection)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + Duration::days(i64::from(day))
    }

    fn buy(day: u32, q: i64, price: f64, value: f64) -> TradeRecord {
        TradeRecord::new(d(day), Action::Buy, 50, q, price, value)
    }

    #[test]
    fn append_enforces_order_and_emptiness() {
        let mut bank = MemoryBank::new(MemoryConfig::default());
        bank.append_trade(buy(1, 10, 100.0, 1000.0)).unwrap();
        assert_eq!(bank.len(), 1);
        assert!(matches!(
            bank.append_trade(buy(1, 10, 100.0, 1000.0)),
            Err(Error::Ordering { .. })
        ));
        let mut pre = buy(2, 1, 1.0, 1.0);
        pre.horizons.insert(1, HorizonOutcome {
            ret: Some(1.0),
            ..Default::default()
        });
        assert!(matches!(bank.append_trade(pre), Err(Error::Leakage(_))));
    }

    #[test]
    fn realized_return_arithmetic() {
        let mut bank = MemoryBank::new(MemoryConfig {
            horizons: vec![7],
            ..Default::default()
        });
        bank.append_trade(buy(0, 10, 100.0, 1000.0)).unwrap();
        bank.backfill(d(7), &|_| Some(105.0), &|_| Some(0.0)).unwrap();
        assert_eq!(bank.records()[0].ret(7), Some(5.0));
        // flat daily returns: degenerate Sharpe
        assert_eq!(bank.records()[0].sharpe(7), Some(Sharpe::Undefined));
    }

    #[test]
    fn hold_has_zero_return() {
        let mut bank = MemoryBank::new(MemoryConfig::default());
        bank.append_trade(TradeRecord::new(d(0), Action::Hold, 0, 0, 100.0, 1000.0))
            .unwrap();
        bank.backfill(d(400), &|_| Some(150.0), &|_| Some(0.01)).unwrap();
        for h in HorizonSetDefault::all() {
            assert_eq!(bank.records()[0].ret(h), Some(0.0));
        }
    }

    struct HorizonSetDefault;
    impl HorizonSetDefault {
        fn all() -> Vec<u32> {
            crate::market_data::HorizonSet::DEFAULT.to_vec()
        }
    }

    #[test]
    fn equal_daily_returns_give_undefined_sharpe() {
        let cfg = MemoryConfig::default();
        assert_eq!(
            horizon_sharpe(d(10), 7, &|_| Some(0.001), &cfg),
            Sharpe::Undefined
        );
    }

    #[test]
    fn too_few_points_give_undefined_sharpe() {
        let cfg = MemoryConfig::default();
        let only_two = |day: NaiveDate| (day >= d(9)).then_some(0.01 * day.format("%d").to_string().parse::<f64>().unwrap());
        assert_eq!(horizon_sharpe(d(10), 7, &only_two, &cfg), Sharpe::Undefined);
    }

    #[test]
    fn sell_pnl_uses_share_magnitude() {
        let mut bank = MemoryBank::new(MemoryConfig {
            horizons: vec![1],
            ..Default::default()
        });
        bank.append_trade(TradeRecord::new(d(0), Action::Sell, 50, -4, 100.0, 1000.0))
            .unwrap();
        bank.backfill(d(1), &|_| Some(110.0), &|_| None).unwrap();
        // selling before a rise loses the upside
        assert_eq!(bank.records()[0].ret(1), Some(-4.0));
    }

    #[test]
    fn prompt_filters_horizons_and_tags_slopes() {
        let mut bank = MemoryBank::new(MemoryConfig::default());
        for i in 0..6 {
            bank.append_trade(buy(i, 1, 100.0, 1000.0)).unwrap();
        }
        let price = |day: NaiveDate| Some(100.0 + (day - d(0)).num_days() as f64);
        bank.backfill(d(30), &price, &|_| Some(0.0)).unwrap();
        let prompt = reflection_prompt(&bank, &ReflectionConfig::short()).unwrap();
        assert!(prompt.contains("h=1:") && prompt.contains("h=7:") && prompt.contains("h=14:"));
        assert!(!prompt.contains("h=28:"));
        assert!(prompt.contains("(flat)") || prompt.contains("(improving)") || prompt.contains("(deteriorating)"));
    }

    #[test]
    fn empty_bank_prompt_errors() {
        let bank = MemoryBank::new(MemoryConfig::default());
        assert!(matches!(
            reflection_prompt(&bank, &ReflectionConfig::short()),
            Err(Error::EmptyBank)
        ));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut bank = MemoryBank::new(MemoryConfig::default());
        bank.append_trade(buy(0, 3, 100.0, 1000.0)).unwrap();
        bank.backfill(d(20), &|_| Some(101.0), &|day| Some(day.format("%d").to_string().parse::<f64>().unwrap() / 1000.0))
            .unwrap();
        let mut buf = Vec::new();
        bank.write_snapshot(&mut buf).unwrap();
        let back = MemoryBank::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back.records(), bank.records());
        assert_eq!(back.clock(), bank.clock());
    }
}
