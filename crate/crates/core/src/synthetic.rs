//! Seeded synthetic prices and analyst items for offline runs and tests.

use chrono::{Datelike, Duration, NaiveDate, NaiveTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::market_data::{InfoDomain, InfoItem, PriceBar, PriceSeries};
use crate::stats::mean;

#[derive(Debug, Clone, PartialEq)]
pub struct GbmParams {
    pub start_price: f64,
    /// Daily drift of log returns.
    pub drift: f64,
    /// Daily volatility of log returns.
    pub volatility: f64,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            start_price: 100.0,
            drift: 0.0004,
            volatility: 0.015,
        }
    }
}

pub fn is_weekday(d: NaiveDate) -> bool {
    !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Weekday bars from `start` through `end` following geometric Brownian motion.
pub fn synthetic_series(
    ticker: &str,
    start: NaiveDate,
    end: NaiveDate,
    params: &GbmParams,
    seed: u64,
) -> Result<PriceSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shock = Normal::new(params.drift, params.volatility.max(0.0))
        .expect("finite normal parameters");
    let mut bars = Vec::new();
    let mut close = params.start_price;
    let mut day = start;
    while day <= end {
        if is_weekday(day) {
            let open = close;
            close = open * shock.sample(&mut rng).exp();
            let wick = 1.0 + rng.random_range(0.0..0.01);
            bars.push(PriceBar {
                date: day,
                open,
                high: open.max(close) * wick,
                low: open.min(close) / wick,
                close,
                volume: rng.random_range(500_000..5_000_000),
            });
        }
        day += Duration::days(1);
    }
    PriceSeries::new(ticker, bars)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemParams {
    /// Hour (UTC) at which regular items are published.
    pub publish: NaiveTime,
    /// Probability that an item is published after the trading-day cutoff.
    pub late_item_rate: f64,
    /// Probability that an on-time item carries a claim dated tomorrow.
    pub leaked_claim_rate: f64,
}

impl Default for ItemParams {
    fn default() -> Self {
        Self {
            publish: NaiveTime::from_hms_opt(9, 0, 0).expect("valid time"),
            late_item_rate: 0.1,
            leaked_claim_rate: 0.05,
        }
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// One item per report domain for each bar dated `from` or later. Claims are
/// derived only from closes up to the previous bar plus seeded noise.
pub fn synthetic_items(series: &PriceSeries, from: NaiveDate, params: &ItemParams, seed: u64) -> Vec<InfoItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_17e5);
    let closes = series.closes();
    let ticker = series.ticker();
    let mut items = Vec::new();
    for (i, bar) in series.bars().iter().enumerate() {
        if bar.date < from || i < 30 {
            continue;
        }
        let past = &closes[..i];
        let last = past[past.len() - 1];
        let ma10 = mean(&past[past.len() - 10..]);
        let ma30 = mean(&past[past.len() - 30..]);
        let ret5 = last / past[past.len() - 6] - 1.0;
        let publish = bar.date.and_time(params.publish).and_utc();
        let stamp = |t: chrono::DateTime<chrono::Utc>| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true);

        for domain in InfoDomain::REPORT_DOMAINS {
            let noisy = |rng: &mut ChaCha8Rng, base: i8| if rng.random_bool(0.2) { -base } else { base };
            let mut lines = match domain {
                InfoDomain::Fundamentals => {
                    let eps = 1.5 + rng.random_range(-0.3..0.3);
                    vec![
                        format!("fundamentals | {ticker} | eps-beat-consensus | {:+} | value={eps:.2} EPS", noisy(&mut rng, 1)),
                        format!("fundamentals | {ticker} | revenue-growth | {:+} | value={:.1} %", sign(ret5).max(0), 5.0 + rng.random_range(-2.0..2.0)),
                    ]
                }
                InfoDomain::Market => vec![
                    format!("market | {ticker} | 10d-MA-above-30d-MA | {:+} | ", sign(ma10 - ma30)),
                    format!("market | {ticker} | 5d-return | {:+} | value={:.2} %", sign(ret5), 100.0 * ret5),
                ],
                InfoDomain::News => vec![format!(
                    "news | {ticker} | product-coverage | {:+} | ",
                    noisy(&mut rng, sign(ret5))
                )],
                InfoDomain::Sentiment => vec![format!(
                    "sentiment | {ticker} | analyst-rating | {:+} | value={:.1} score",
                    noisy(&mut rng, sign(ma10 - ma30)),
                    3.0 + rng.random_range(-1.0..1.0)
                )],
                InfoDomain::Temporal => unreachable!("not a report domain"),
            };
            let late = rng.random_bool(params.late_item_rate);
            let as_of = if late {
                bar.date.and_hms_opt(18, 0, 0).expect("valid time").and_utc()
            } else {
                publish
            };
            let leak = !late && rng.random_bool(params.leaked_claim_rate);
            for (k, line) in lines.iter_mut().enumerate() {
                let claim_time = if leak && k == 0 { as_of + Duration::days(1) } else { as_of };
                line.push_str(&format!(" | {}", stamp(claim_time)));
            }
            items.push(InfoItem {
                id: format!("{ticker}-{}-{domain}", bar.date),
                domain,
                payload: lines.join("\n"),
                as_of,
                source: "synthetic".into(),
            });
        }
    }
    items
}
