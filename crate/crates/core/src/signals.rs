//! Deterministic, price-only temporal signals.
//!
//! Everything here is a pure function of a [`PriceSeries`] (plus the current
//! position for the recommendation). Prices enter only through ratios, so
//! every output except raw price levels is invariant to rescaling the series.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backtest::Portfolio;
use crate::error::{Error, Result};
use crate::fixed;
use crate::market_data::{window, window_clipped, PriceSeries};
use crate::stats::{mean, median, polyfit, sample_std, simple_returns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrendLabel {
    StrongUp,
    Up,
    Sideways,
    Down,
    StrongDown,
}

impl TrendLabel {
    pub fn sign(self) -> i8 {
        match self {
            TrendLabel::StrongUp | TrendLabel::Up => 1,
            TrendLabel::Sideways => 0,
            TrendLabel::Down | TrendLabel::StrongDown => -1,
        }
    }

    /// Position on the ordinal scale, StrongDown = 0 .. StrongUp = 4.
    pub fn rank(self) -> u8 {
        match self {
            TrendLabel::StrongDown => 0,
            TrendLabel::Down => 1,
            TrendLabel::Sideways => 2,
            TrendLabel::Up => 3,
            TrendLabel::StrongUp => 4,
        }
    }
}

impl fmt::Display for TrendLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrendLabel::StrongUp => "STRONG_UP",
            TrendLabel::Up => "UP",
            TrendLabel::Sideways => "SIDEWAYS",
            TrendLabel::Down => "DOWN",
            TrendLabel::StrongDown => "STRONG_DOWN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    Up,
    Down,
    Uncertain,
}

impl Direction {
    pub fn sign(self) -> i8 {
        match self {
            Direction::Up => 1,
            Direction::Down => -1,
            Direction::Uncertain => 0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "UP",
            Direction::Down => "DOWN",
            Direction::Uncertain => "UNCERTAIN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Buy,
    Sell,
    Hold,
}

impl Action {
    pub fn sign(self) -> i8 {
        match self {
            Action::Buy => 1,
            Action::Sell => -1,
            Action::Hold => 0,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Buy => "BUY",
            Action::Sell => "SELL",
            Action::Hold => "HOLD",
        })
    }
}

impl std::str::FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BUY" => Ok(Action::Buy),
            "SELL" => Ok(Action::Sell),
            "HOLD" => Ok(Action::Hold),
            other => Err(format!("unknown action `{other}`")),
        }
    }
}

/// Weights of the four components of the recommendation confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfidenceWeights {
    pub trend_consistency: f64,
    pub forecast_confidence: f64,
    pub return_strength: f64,
    pub magnitude: f64,
}

impl Default for ConfidenceWeights {
    fn default() -> Self {
        Self {
            trend_consistency: 0.3,
            forecast_confidence: 0.3,
            return_strength: 0.2,
            magnitude: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub poly_degree: usize,
    pub change_weight: f64,
    pub slope_weight: f64,
    pub strong_threshold: f64,
    pub trend_threshold: f64,
    pub decision_margin: i32,
    pub roc_threshold: f64,
    pub max_magnitude: f64,
    /// Returns per rolling volatility estimate.
    pub vol_window: usize,
    /// Calendar days of rolling volatility used for the median reference.
    pub vol_reference_days: u32,
    pub short_trend_days: u32,
    pub long_trend_days: u32,
    pub weights: ConfidenceWeights,
    /// 5-day return at which the return-strength component saturates.
    pub strength_saturation: f64,
    pub large_position_confidence: f64,
    pub large_position_pct: u8,
    pub small_position_confidence: f64,
    pub small_position_pct: u8,
    pub summary_horizons: Vec<u32>,
    pub support_lookback: usize,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            poly_degree: 2,
            change_weight: 0.7,
            slope_weight: 0.3,
            strong_threshold: 0.08,
            trend_threshold: 0.02,
            decision_margin: 1,
            roc_threshold: 0.01,
            max_magnitude: 0.02,
            vol_window: 10,
            vol_reference_days: 90,
            short_trend_days: 7,
            long_trend_days: 28,
            weights: ConfidenceWeights::default(),
            strength_saturation: 0.05,
            large_position_confidence: 75.0,
            large_position_pct: 50,
            small_position_confidence: 60.0,
            small_position_pct: 25,
            summary_horizons: vec![7, 28, 90, 180, 360],
            support_lookback: 20,
        }
    }
}

impl SignalConfig {
    pub fn label(&self, score: f64) -> TrendLabel {
        let magnitude = score.abs();
        if magnitude >= self.strong_threshold {
            if score > 0.0 {
                TrendLabel::StrongUp
            } else {
                TrendLabel::StrongDown
            }
        } else if magnitude >= self.trend_threshold {
            if score > 0.0 {
                TrendLabel::Up
            } else {
                TrendLabel::Down
            }
        } else {
            TrendLabel::Sideways
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonStats {
    pub horizon: u32,
    pub bars: usize,
    #[serde(serialize_with = "fixed::f64")]
    pub cum_return: f64,
    #[serde(serialize_with = "fixed::f64")]
    pub realized_vol: f64,
    #[serde(serialize_with = "fixed::f64")]
    pub high: f64,
    #[serde(serialize_with = "fixed::f64")]
    pub low: f64,
    #[serde(serialize_with = "fixed::f64")]
    pub current: f64,
    #[serde(serialize_with = "fixed::f64")]
    pub avg_volume: f64,
    pub trend: TrendLabel,
    #[serde(serialize_with = "fixed::f64")]
    pub trend_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextDayForecast {
    pub direction: Direction,
    #[serde(serialize_with = "fixed::f64")]
    pub expected_magnitude: f64,
    #[serde(serialize_with = "fixed::f64")]
    pub confidence: f64,
    pub bullish_score: i32,
    pub bearish_score: i32,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRecommendation {
    pub action: Action,
    pub position_pct: u8,
    #[serde(serialize_with = "fixed::f64")]
    pub confidence: f64,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalSummary {
    pub ticker: String,
    pub as_of: NaiveDate,
    #[serde(serialize_with = "fixed::f64")]
    pub current_price: f64,
    #[serde(serialize_with = "fixed::map_f64")]
    pub horizon_returns: BTreeMap<u32, f64>,
    #[serde(serialize_with = "fixed::map_f64")]
    pub horizon_vols: BTreeMap<u32, f64>,
    pub horizon_trends: BTreeMap<u32, TrendLabel>,
    pub forecast: NextDayForecast,
    #[serde(serialize_with = "fixed::opt_f64")]
    pub support_level: Option<f64>,
    #[serde(serialize_with = "fixed::opt_f64")]
    pub resistance_level: Option<f64>,
    #[serde(serialize_with = "fixed::f64")]
    pub trend_alignment: f64,
    pub proposal: SignalRecommendation,
}

impl TemporalSummary {
    /// Stable key-ordered JSON record.
    pub fn to_record(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Human-readable table used in prompts and stage payloads.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Temporal Signals Summary Table ({} {})", self.ticker, self.as_of);
        let _ = writeln!(out, "Current Price: ${:.2}", self.current_price);
        for (h, r) in &self.horizon_returns {
            let vol = self.horizon_vols.get(h).copied().unwrap_or(0.0);
            let trend = self
                .horizon_trends
                .get(h)
                .map(|t| t.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{}-day Return: {:+.2}% (vol {:.2}%, trend {})",
                h,
                r * 100.0,
                vol * 100.0,
                trend
            );
        }
        let _ = writeln!(
            out,
            "Next-day Prediction: {} {:.2}% (confidence {:.0}%)",
            self.forecast.direction,
            self.forecast.expected_magnitude * 100.0,
            self.forecast.confidence
        );
        let level = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("${x:.2}"));
        let _ = writeln!(out, "Key Support Level: {}", level(self.support_level));
        let _ = writeln!(out, "Key Resistance Level: {}", level(self.resistance_level));
        let _ = writeln!(out, "Trend Alignment Score: {:.0}/100", self.trend_alignment);
        let _ = writeln!(
            out,
            "Temporal-signal-driven proposal: {} {}%",
            self.proposal.action, self.proposal.position_pct
        );
        out
    }
}

/// Trend score and label of a close sequence. Fits a lower-degree polynomial
/// when there are too few points for the configured degree.
fn trend_of_closes(closes: &[f64], cfg: &SignalConfig) -> (f64, TrendLabel) {
    if closes.len() < 2 {
        return (0.0, TrendLabel::Sideways);
    }
    let base = closes[0];
    let ys: Vec<f64> = closes.iter().map(|c| c / base).collect();
    let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
    let degree = cfg.poly_degree.min(ys.len() - 1);
    let Some(poly) = polyfit(&xs, &ys, degree) else {
        return (0.0, TrendLabel::Sideways);
    };
    let end = (ys.len() - 1) as f64;
    // normalized closes start at 1, so changes are already fractions of the start price
    let fitted_change = poly.eval(end) - poly.eval(0.0);
    let terminal_slope = poly.derivative_at(end);
    let score = cfg.change_weight * fitted_change + cfg.slope_weight * terminal_slope * end;
    (score, cfg.label(score))
}

pub fn trend_score(series: &PriceSeries, cfg: &SignalConfig) -> Result<(f64, TrendLabel)> {
    if series.len() < 3 {
        return Err(Error::ShortWindow {
            requested: 3,
            available: series.len() as u32,
            bars: series.len(),
        });
    }
    Ok(trend_of_closes(&series.closes(), cfg))
}

pub fn horizon_stats(series: &PriceSeries, h: u32, cfg: &SignalConfig) -> Result<HorizonStats> {
    let as_of = series.last().date;
    let w = window(series, h, as_of)?;
    if w.len() < 2 {
        return Err(Error::ShortWindow {
            requested: h,
            available: (as_of - series.first().date).num_days() as u32 + 1,
            bars: w.len(),
        });
    }
    let closes = w.closes();
    let returns = simple_returns(&closes);
    let (trend_score, trend) = trend_of_closes(&closes, cfg);
    Ok(HorizonStats {
        horizon: h,
        bars: w.len(),
        cum_return: closes[closes.len() - 1] / closes[0] - 1.0,
        realized_vol: sample_std(&returns),
        high: w.bars().iter().map(|b| b.high).fold(f64::MIN, f64::max),
        low: w.bars().iter().map(|b| b.low).fold(f64::MAX, f64::min),
        current: closes[closes.len() - 1],
        avg_volume: mean(&w.bars().iter().map(|b| b.volume as f64).collect::<Vec<_>>()),
        trend,
        trend_score,
    })
}

fn trailing_mean(closes: &[f64], n: usize) -> f64 {
    mean(&closes[closes.len() - n..])
}

fn clipped_trend(series: &PriceSeries, days: u32, cfg: &SignalConfig) -> TrendLabel {
    window_clipped(series, days, series.last().date)
        .map(|w| trend_of_closes(&w.closes(), cfg).1)
        .unwrap_or(TrendLabel::Sideways)
}

fn rate_of_change(closes: &[f64], lag: usize) -> f64 {
    let n = closes.len();
    closes[n - 1] / closes[n - 1 - lag] - 1.0
}

pub fn predict_next_day(series: &PriceSeries, cfg: &SignalConfig) -> Result<NextDayForecast> {
    if series.len() < 20 {
        return Err(Error::ShortWindow {
            requested: 20,
            available: series.len() as u32,
            bars: series.len(),
        });
    }
    let closes = series.closes();
    let price = closes[closes.len() - 1];
    let (ma5, ma10, ma20) = (
        trailing_mean(&closes, 5),
        trailing_mean(&closes, 10),
        trailing_mean(&closes, 20),
    );
    let mut bull = 0;
    let mut bear = 0;
    let mut notes: Vec<String> = Vec::new();

    if price > ma5 && price > ma10 && price > ma20 {
        bull += 2;
        notes.push("price above MA5/MA10/MA20 (+2 bullish)".into());
    } else if price < ma5 && price < ma10 && price < ma20 {
        bear += 2;
        notes.push("price below MA5/MA10/MA20 (+2 bearish)".into());
    }

    let roc5 = rate_of_change(&closes, 5);
    if roc5 > cfg.roc_threshold {
        bull += 1;
        notes.push(format!("5-day ROC {:+.2}% (+1 bullish)", roc5 * 100.0));
    } else if roc5 < -cfg.roc_threshold {
        bear += 1;
        notes.push(format!("5-day ROC {:+.2}% (+1 bearish)", roc5 * 100.0));
    }

    for (name, days) in [("1-week", cfg.short_trend_days), ("1-month", cfg.long_trend_days)] {
        match clipped_trend(series, days, cfg).sign() {
            1 => {
                bull += 1;
                notes.push(format!("{name} trend up (+1 bullish)"));
            }
            -1 => {
                bear += 1;
                notes.push(format!("{name} trend down (+1 bearish)"));
            }
            _ => {}
        }
    }

    if volatility_elevated(series, cfg) && bull != bear {
        if bull > bear {
            bull -= 1;
        } else {
            bear -= 1;
        }
        notes.push("recent volatility above its median (-1 leading side)".into());
    }

    let diff = bull - bear;
    let direction = if diff >= cfg.decision_margin {
        Direction::Up
    } else if -diff >= cfg.decision_margin {
        Direction::Down
    } else {
        Direction::Uncertain
    };
    // 2 (MA) + 1 (ROC) + 2 (trend agreement)
    const MAX_POINTS: f64 = 5.0;
    let confidence = (100.0 * f64::from(diff.abs()) / MAX_POINTS).clamp(0.0, 100.0);
    let expected_magnitude = (roc5.abs() / 5.0).clamp(0.0, cfg.max_magnitude);
    if notes.is_empty() {
        notes.push("no rule fired".into());
    }
    Ok(NextDayForecast {
        direction,
        expected_magnitude,
        confidence,
        bullish_score: bull,
        bearish_score: bear,
        rationale: format!("bullish {bull} vs bearish {bear}: {}", notes.join("; ")),
    })
}

/// Latest rolling volatility strictly above the median of its recent history.
fn volatility_elevated(series: &PriceSeries, cfg: &SignalConfig) -> bool {
    let Ok(reference) = window_clipped(series, cfg.vol_reference_days, series.last().date) else {
        return false;
    };
    let returns = simple_returns(&reference.closes());
    let n = cfg.vol_window.max(2);
    if returns.len() < n {
        return false;
    }
    let rolling: Vec<f64> = returns.windows(n).map(sample_std).collect();
    let latest = rolling[rolling.len() - 1];
    median(&rolling).is_some_and(|m| latest > m)
}

/// Per-horizon trend labels over clipped windows; never fails on short history.
fn clipped_labels(series: &PriceSeries, cfg: &SignalConfig) -> Vec<TrendLabel> {
    cfg.summary_horizons
        .iter()
        .map(|h| clipped_trend(series, *h, cfg))
        .collect()
}

pub fn recommend(
    series: &PriceSeries,
    portfolio: &Portfolio,
    cfg: &SignalConfig,
) -> Result<SignalRecommendation> {
    let forecast = predict_next_day(series, cfg)?;
    Ok(recommend_from(series, &forecast, portfolio, cfg))
}

fn recommend_from(
    series: &PriceSeries,
    forecast: &NextDayForecast,
    portfolio: &Portfolio,
    cfg: &SignalConfig,
) -> SignalRecommendation {
    let dir = forecast.direction.sign();
    let labels = clipped_labels(series, cfg);
    let agreeing = labels.iter().filter(|l| l.sign() == dir).count();
    let trend_consistency = 100.0 * agreeing as f64 / labels.len().max(1) as f64;
    let roc5 = rate_of_change(&series.closes(), 5);
    let return_strength =
        100.0 * (f64::from(dir) * roc5 / cfg.strength_saturation).clamp(0.0, 1.0);
    let magnitude = if cfg.max_magnitude > 0.0 {
        100.0 * forecast.expected_magnitude / cfg.max_magnitude
    } else {
        0.0
    };
    let w = &cfg.weights;
    let confidence = (w.trend_consistency * trend_consistency
        + w.forecast_confidence * forecast.confidence
        + w.return_strength * return_strength
        + w.magnitude * magnitude)
        .clamp(0.0, 100.0);

    let size = if confidence >= cfg.large_position_confidence {
        cfg.large_position_pct
    } else if confidence >= cfg.small_position_confidence {
        cfg.small_position_pct
    } else {
        0
    };
    let holding = portfolio.shares > 0;
    let (action, position_pct) = match forecast.direction {
        _ if size == 0 => (Action::Hold, 0),
        Direction::Up => (Action::Buy, size),
        Direction::Down if holding => (Action::Sell, size),
        _ => (Action::Hold, 0),
    };
    let rationale = format!(
        "forecast {} ({:.0}); trend consistency {:.0}, return strength {:.0}, magnitude {:.0} -> confidence {:.1}; position {}",
        forecast.direction,
        forecast.confidence,
        trend_consistency,
        return_strength,
        magnitude,
        confidence,
        if holding { "held" } else { "flat" }
    );
    SignalRecommendation {
        action,
        position_pct,
        confidence,
        rationale,
    }
}

/// Support is the highest recent swing low at or below the current price,
/// resistance the lowest recent swing high at or above it.
fn support_resistance(series: &PriceSeries, lookback: usize) -> (Option<f64>, Option<f64>) {
    let bars = series.bars();
    let recent = &bars[bars.len().saturating_sub(lookback)..];
    let current = series.last().close;
    let mut support: Option<f64> = None;
    let mut resistance: Option<f64> = None;
    for i in 1..recent.len().saturating_sub(1) {
        let (prev, bar, next) = (&recent[i - 1], &recent[i], &recent[i + 1]);
        if bar.low <= prev.low && bar.low <= next.low && bar.low <= current {
            support = Some(support.map_or(bar.low, |s| s.max(bar.low)));
        }
        if bar.high >= prev.high && bar.high >= next.high && bar.high >= current {
            resistance = Some(resistance.map_or(bar.high, |r| r.min(bar.high)));
        }
    }
    (support, resistance)
}

/// Percentage of labels sharing the most common trend sign.
pub fn trend_alignment(labels: &[TrendLabel]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let count = |s: i8| labels.iter().filter(|l| l.sign() == s).count();
    let majority = [1, 0, -1].into_iter().map(count).max().unwrap_or(0);
    100.0 * majority as f64 / labels.len() as f64
}

pub fn summary_table(
    series: &PriceSeries,
    portfolio: &Portfolio,
    cfg: &SignalConfig,
) -> Result<TemporalSummary> {
    let mut horizon_returns = BTreeMap::new();
    let mut horizon_vols = BTreeMap::new();
    let mut horizon_trends = BTreeMap::new();
    for &h in &cfg.summary_horizons {
        let stats = horizon_stats(series, h, cfg)?;
        horizon_returns.insert(h, stats.cum_return);
        horizon_vols.insert(h, stats.realized_vol);
        horizon_trends.insert(h, stats.trend);
    }
    let forecast = predict_next_day(series, cfg)?;
    let proposal = recommend_from(series, &forecast, portfolio, cfg);
    let (support_level, resistance_level) = support_resistance(series, cfg.support_lookback);
    let labels: Vec<TrendLabel> = horizon_trends.values().copied().collect();
    Ok(TemporalSummary {
        ticker: series.ticker().to_string(),
        as_of: series.last().date,
        current_price: series.last().close,
        horizon_returns,
        horizon_vols,
        horizon_trends,
        forecast,
        support_level,
        resistance_level,
        trend_alignment: trend_alignment(&labels),
        proposal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn daily(closes: &[f64]) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
        let dates: Vec<NaiveDate> = (0..closes.len())
            .map(|i| start + Duration::days(i as i64))
            .collect();
        PriceSeries::from_closes("TEST", &dates, closes).unwrap()
    }

    fn cfg() -> SignalConfig {
        SignalConfig::default()
    }

    #[test]
    fn two_point_return() {
        let s = daily(&[100.0, 110.0]);
        let st = horizon_stats(&s, 2, &cfg()).unwrap();
        assert!((st.cum_return - 0.10).abs() < 1e-15);
        assert_eq!(st.bars, 2);
    }

    #[test]
    fn constant_series_stats() {
        let s = daily(&[50.0; 10]);
        let st = horizon_stats(&s, 7, &cfg()).unwrap();
        assert_eq!(st.cum_return, 0.0);
        assert_eq!(st.realized_vol, 0.0);
        assert_eq!(st.trend, TrendLabel::Sideways);
        assert!(st.low <= st.current && st.current <= st.high);
    }

    #[test]
    fn single_bar_window_is_short() {
        let s = daily(&[50.0; 10]);
        assert!(matches!(horizon_stats(&s, 1, &cfg()), Err(Error::ShortWindow { .. })));
    }

    #[test]
    fn trend_needs_three_bars() {
        assert!(trend_score(&daily(&[1.0, 2.0]), &cfg()).is_err());
    }

    #[test]
    fn linear_up_trend_is_positive() {
        let closes: Vec<f64> = (100..=120).map(f64::from).collect();
        let (score, label) = trend_score(&daily(&closes), &cfg()).unwrap();
        assert!(score > 0.0);
        assert!(matches!(label, TrendLabel::Up | TrendLabel::StrongUp));
        // linear: fitted change = 0.2 and slope * span = 0.2
        assert!((score - 0.2).abs() < 1e-9);
    }

    #[test]
    fn flat_forecast_is_uncertain() {
        let f = predict_next_day(&daily(&[42.0; 30]), &cfg()).unwrap();
        assert_eq!(f.direction, Direction::Uncertain);
        assert_eq!(f.expected_magnitude, 0.0);
        assert_eq!(f.bullish_score, f.bearish_score);
    }

    #[test]
    fn forecast_needs_twenty_bars() {
        assert!(matches!(
            predict_next_day(&daily(&[1.0; 19]), &cfg()),
            Err(Error::ShortWindow { .. })
        ));
    }

    #[test]
    fn weak_signals_hold() {
        let r = recommend(&daily(&[42.0; 30]), &Portfolio::new(1000.0), &cfg()).unwrap();
        assert_eq!(r.action, Action::Hold);
        assert_eq!(r.position_pct, 0);
    }

    #[test]
    fn alignment_counts_majority_sign() {
        use TrendLabel::*;
        assert_eq!(trend_alignment(&[Up, StrongUp, Up, Down, Sideways]), 60.0);
        assert_eq!(trend_alignment(&[Sideways; 5]), 100.0);
    }
}
