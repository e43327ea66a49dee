//! Plot-ready tables: risk–return placement, preference distances and
//! stage-convergence curves.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backtest::BacktestResult;
use crate::error::Result;
use crate::memory::Sharpe;
use crate::metrics::{preference_region, stage_convergence, ConvergenceCurve, DayTrace, PreferenceRegion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReturnRow {
    pub ticker: String,
    pub strategy: String,
    pub cr: f64,
    pub ar: f64,
    pub sharpe: Sharpe,
    pub volatility: f64,
    pub mdd: f64,
    pub distance: Option<f64>,
    pub inside: Option<bool>,
}

pub fn risk_return_rows(results: &[BacktestResult], region: Option<&PreferenceRegion>) -> Vec<RiskReturnRow> {
    results
        .iter()
        .map(|r| {
            let placement = region.map(|reg| preference_region(r.metrics.mdd, r.metrics.cr, reg));
            RiskReturnRow {
                ticker: r.ticker.clone(),
                strategy: r.strategy.clone(),
                cr: r.metrics.cr,
                ar: r.metrics.ar,
                sharpe: r.metrics.sharpe,
                volatility: r.metrics.volatility,
                mdd: r.metrics.mdd,
                distance: placement.map(|p| p.distance),
                inside: placement.map(|p| p.inside),
            }
        })
        .collect()
}

fn sharpe_cell(s: Sharpe) -> String {
    match s.value() {
        Some(v) => format!("{v:.6}"),
        None => "n/a".into(),
    }
}

pub fn risk_return_csv(rows: &[RiskReturnRow]) -> String {
    let mut out = String::from("ticker,strategy,cr,ar,sharpe,volatility,mdd,distance,inside\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{},{:.6},{:.6},{},{}\n",
            r.ticker,
            r.strategy,
            r.cr,
            r.ar,
            sharpe_cell(r.sharpe),
            r.volatility,
            r.mdd,
            r.distance.map(|d| format!("{d:.6}")).unwrap_or_default(),
            r.inside.map(|b| b.to_string()).unwrap_or_default(),
        ));
    }
    out
}

/// Convergence over every stage trace in `results`, if any day has one.
pub fn convergence(results: &[BacktestResult]) -> Result<Option<ConvergenceCurve>> {
    let traces: Vec<DayTrace> = results.iter().flat_map(|r| r.traces.iter().cloned()).collect();
    if traces.iter().all(|t| t.error) {
        return Ok(None);
    }
    stage_convergence(&traces).map(Some)
}

/// Writes `risk_return.csv` and, when stage traces exist, `convergence.csv`.
pub fn write_report(dir: &Path, results: &[BacktestResult], region: Option<&PreferenceRegion>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("risk_return.csv");
    std::fs::write(&path, risk_return_csv(&risk_return_rows(results, region)))?;
    written.push(path);
    if let Some(curve) = convergence(results)? {
        let path = dir.join("convergence.csv");
        std::fs::write(&path, curve.to_csv())?;
        written.push(path);
    }
    Ok(written)
}
