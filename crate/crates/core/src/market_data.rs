//! Price and report ingestion with decision-time gating.
//!
//! Horizons are calendar-day windows evaluated over whatever trading bars fall
//! inside them. Missing bars (weekends, holidays) are never interpolated.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
}

impl PriceBar {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err("prices must be finite and positive".into());
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("low {} above min(open, close)", self.low));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!("high {} below max(open, close)", self.high));
        }
        Ok(())
    }

    /// A bar whose open, high, low and close all equal `close`.
    pub fn flat(date: NaiveDate, close: f64, volume: u64) -> Self {
        Self {
            date,
            open: close,
            high: close,
            low: close,
            close,
            volume,
        }
    }
}

/// Date-ordered daily bars for one ticker. Dates are strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    ticker: String,
    bars: Vec<PriceBar>,
}

impl PriceSeries {
    pub fn new(ticker: impl Into<String>, bars: Vec<PriceBar>) -> Result<Self> {
        if bars.is_empty() {
            return Err(Error::Precondition("price series must be non-empty".into()));
        }
        for (i, bar) in bars.iter().enumerate() {
            bar.validate().map_err(|message| Error::Parse { row: i + 1, message })?;
        }
        if let Some(w) = bars.windows(2).find(|w| w[0].date >= w[1].date) {
            return Err(Error::Precondition(format!(
                "bars not strictly increasing: {} then {}",
                w[0].date, w[1].date
            )));
        }
        Ok(Self {
            ticker: ticker.into(),
            bars,
        })
    }

    /// Builds a series from closes on consecutive entries of `dates`, flat bars.
    pub fn from_closes(ticker: &str, dates: &[NaiveDate], closes: &[f64]) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::Shape(format!(
                "{} dates for {} closes",
                dates.len(),
                closes.len()
            )));
        }
        let bars = dates
            .iter()
            .zip(closes)
            .map(|(d, c)| PriceBar::flat(*d, *c, 1_000))
            .collect();
        Self::new(ticker, bars)
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn bars(&self) -> &[PriceBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn first(&self) -> &PriceBar {
        &self.bars[0]
    }

    pub fn last(&self) -> &PriceBar {
        &self.bars[self.bars.len() - 1]
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    pub fn bar_on(&self, date: NaiveDate) -> Option<&PriceBar> {
        self.bars
            .binary_search_by_key(&date, |b| b.date)
            .ok()
            .map(|i| &self.bars[i])
    }

    /// Close of the last bar dated on or before `date`.
    pub fn close_as_of(&self, date: NaiveDate) -> Option<f64> {
        let idx = self.bars.partition_point(|b| b.date <= date);
        idx.checked_sub(1).map(|i| self.bars[i].close)
    }

    /// History visible on `date`: every bar dated on or before it.
    pub fn up_to(&self, date: NaiveDate) -> Option<PriceSeries> {
        let idx = self.bars.partition_point(|b| b.date <= date);
        (idx > 0).then(|| PriceSeries {
            ticker: self.ticker.clone(),
            bars: self.bars[..idx].to_vec(),
        })
    }

    /// Multiplies every price by `factor`; volumes are untouched.
    pub fn scaled(&self, factor: f64) -> PriceSeries {
        PriceSeries {
            ticker: self.ticker.clone(),
            bars: self
                .bars
                .iter()
                .map(|b| PriceBar {
                    open: b.open * factor,
                    high: b.high * factor,
                    low: b.low * factor,
                    close: b.close * factor,
                    ..*b
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoDomain {
    Fundamentals,
    Market,
    News,
    Sentiment,
    Temporal,
}

impl InfoDomain {
    pub const REPORT_DOMAINS: [InfoDomain; 4] = [
        InfoDomain::Fundamentals,
        InfoDomain::Market,
        InfoDomain::News,
        InfoDomain::Sentiment,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            InfoDomain::Fundamentals => "fundamentals",
            InfoDomain::Market => "market",
            InfoDomain::News => "news",
            InfoDomain::Sentiment => "sentiment",
            InfoDomain::Temporal => "temporal",
        }
    }
}

impl fmt::Display for InfoDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InfoDomain {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fundamentals" => Ok(InfoDomain::Fundamentals),
            "market" => Ok(InfoDomain::Market),
            "news" => Ok(InfoDomain::News),
            "sentiment" => Ok(InfoDomain::Sentiment),
            "temporal" => Ok(InfoDomain::Temporal),
            other => Err(format!("unknown domain `{other}`")),
        }
    }
}

/// One timestamped piece of information from an external source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoItem {
    pub id: String,
    pub domain: InfoDomain,
    pub payload: String,
    pub as_of: DateTime<Utc>,
    pub source: String,
}

/// Reads newline-delimited JSON info items. Items missing `as_of` are rejected.
pub fn load_info_items(reader: impl std::io::BufRead) -> Result<Vec<InfoItem>> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: InfoItem = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row: i + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonSet(Vec<u32>);

impl HorizonSet {
    pub const DEFAULT: [u32; 7] = [1, 7, 14, 28, 90, 180, 360];

    pub fn new(mut horizons: Vec<u32>) -> Result<Self> {
        horizons.sort_unstable();
        horizons.dedup();
        if horizons.is_empty() || horizons[0] == 0 {
            return Err(Error::Precondition(
                "horizons must be non-empty and positive".into(),
            ));
        }
        Ok(Self(horizons))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn max(&self) -> u32 {
        *self.0.last().expect("non-empty")
    }
}

impl Default for HorizonSet {
    fn default() -> Self {
        Self(Self::DEFAULT.to_vec())
    }
}

/// Opaque descriptor handed to an external market-data client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchDescriptor {
    pub url: String,
    pub ticker: String,
}

/// Pluggable market-data client; must return CSV bytes in the standard layout.
pub trait MarketDataClient: Send + Sync {
    fn fetch(&self, descriptor: &FetchDescriptor) -> Result<Vec<u8>>;
}

pub enum PriceSource<'a> {
    Csv(PathBuf),
    Bytes(&'a [u8]),
    Fetch {
        descriptor: FetchDescriptor,
        client: &'a dyn MarketDataClient,
    },
}

impl<'a> PriceSource<'a> {
    pub fn csv(path: impl AsRef<Path>) -> Self {
        PriceSource::Csv(path.as_ref().to_path_buf())
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    date: String,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    volume: u64,
}

/// Loads bars dated in `(end_date - max_lookback, end_date]`, sorted, one per date.
///
/// When a date repeats, the row appearing last in the file wins.
pub fn load_price_series(
    source: &PriceSource<'_>,
    ticker: &str,
    end_date: NaiveDate,
    max_lookback: u32,
) -> Result<PriceSeries> {
    let horizons = HorizonSet::default();
    if max_lookback < horizons.max() {
        return Err(Error::Precondition(format!(
            "max_lookback {max_lookback} is shorter than the longest horizon {}",
            horizons.max()
        )));
    }
    let bars = match source {
        PriceSource::Csv(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
            parse_price_csv(file)?
        }
        PriceSource::Bytes(bytes) => parse_price_csv(*bytes)?,
        PriceSource::Fetch { descriptor, client } => {
            let bytes = client.fetch(descriptor)?;
            parse_price_csv(bytes.as_slice())?
        }
    };

    let start = end_date - Duration::days(i64::from(max_lookback));
    let mut in_window: Vec<PriceBar> = bars
        .into_iter()
        .filter(|b| b.date > start && b.date <= end_date)
        .collect();
    // stable: equal dates keep file order, so the last duplicate stays last
    in_window.sort_by_key(|b| b.date);
    let mut deduped: Vec<PriceBar> = Vec::with_capacity(in_window.len());
    for bar in in_window {
        match deduped.last_mut() {
            Some(prev) if prev.date == bar.date => *prev = bar,
            _ => deduped.push(bar),
        }
    }
    if deduped.is_empty() {
        return Err(Error::EmptyWindow {
            end_date,
            lookback_days: max_lookback,
        });
    }
    PriceSeries::new(ticker, deduped)
}

/// Parses every row of a `date,open,high,low,close,volume` CSV, in file order.
pub fn parse_price_csv(reader: impl Read) -> Result<Vec<PriceBar>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, message: e.to_string() })?
        .clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != CSV_HEADER {
        return Err(Error::Parse {
            row: 0,
            message: format!("expected header {:?}, found {:?}", CSV_HEADER, found),
        });
    }
    let mut bars = Vec::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|e| Error::Parse {
            row: row_no,
            message: format!("bad date `{}`: {e}", row.date),
        })?;
        let bar = PriceBar {
            date,
            open: row.open,
            high: row.high,
            low: row.low,
            close: row.close,
            volume: row.volume,
        };
        bar.validate().map_err(|message| Error::Parse { row: row_no, message })?;
        bars.push(bar);
    }
    Ok(bars)
}

pub fn write_price_csv(series: &PriceSeries, writer: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)
        .map_err(|e| Error::Ingestion(e.to_string()))?;
    for b in series.bars() {
        w.write_record([
            b.date.to_string(),
            format!("{:.6}", b.open),
            format!("{:.6}", b.high),
            format!("{:.6}", b.low),
            format!("{:.6}", b.close),
            b.volume.to_string(),
        ])
        .map_err(|e| Error::Ingestion(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Bars covering the last `h` calendar days up to and including `as_of`.
///
/// Fails with [`Error::ShortWindow`] when the series does not reach back `h` days.
pub fn window(series: &PriceSeries, h: u32, as_of: NaiveDate) -> Result<PriceSeries> {
    if h == 0 {
        return Err(Error::Precondition("window length must be positive".into()));
    }
    let first = series.first().date;
    if as_of < first {
        return Err(Error::Precondition(format!(
            "as_of {as_of} precedes the first bar {first}"
        )));
    }
    let available = (as_of - first).num_days() + 1;
    if i64::from(h) > available {
        return Err(Error::ShortWindow {
            requested: h,
            available: available as u32,
            bars: series.len(),
        });
    }
    window_clipped(series, h, as_of)
}

/// Like [`window`], but silently uses whatever history exists.
pub fn window_clipped(series: &PriceSeries, h: u32, as_of: NaiveDate) -> Result<PriceSeries> {
    let start = as_of - Duration::days(i64::from(h));
    let bars: Vec<PriceBar> = series
        .bars()
        .iter()
        .filter(|b| b.date > start && b.date <= as_of)
        .copied()
        .collect();
    if bars.is_empty() {
        return Err(Error::EmptyWindow {
            end_date: as_of,
            lookback_days: h,
        });
    }
    Ok(PriceSeries {
        ticker: series.ticker.clone(),
        bars,
    })
}

/// Splits items into those visible at `cutoff` and those dated after it.
pub fn gate_by_timestamp(
    items: Vec<InfoItem>,
    cutoff: DateTime<Utc>,
) -> (Vec<InfoItem>, Vec<InfoItem>) {
    items.into_iter().partition(|item| item.as_of <= cutoff)
}
