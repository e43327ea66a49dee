//! Portfolio metrics, the human-aligned preference region, and stage convergence.
//!
//! The Sharpe ratio here uses the sample standard deviation of simple
//! returns; the memory bank's horizon Sharpe uses the population form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::Sharpe;
use crate::orchestration::StageId;
use crate::signals::Action;
use crate::stats::{mean, sample_std, simple_returns, DEGENERATE_STD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Trading days per year.
    pub periods_per_year: f64,
    /// Risk-free rate per period.
    pub risk_free: f64,
    /// Optional benchmark returns; stored for active-return analysis, not used in the digest.
    pub benchmark: Option<Vec<f64>>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            periods_per_year: 252.0,
            risk_free: 0.0,
            benchmark: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDigest {
    /// Cumulative return, percent.
    pub cr: f64,
    /// Annualized return, percent.
    pub ar: f64,
    pub sharpe: Sharpe,
    pub annualized_sharpe: Sharpe,
    /// Sample standard deviation of per-period returns.
    pub volatility: f64,
    /// Maximum drawdown, percent.
    pub mdd: f64,
    pub mean_return: f64,
    pub periods: usize,
}

/// Maximum drawdown in percent via the running peak.
pub fn max_drawdown(values: &[f64]) -> f64 {
    let mut peak = f64::MIN;
    let mut worst = 0.0_f64;
    for &v in values {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    100.0 * worst
}

pub fn compute_metrics(values: &[f64], config: &MetricsConfig) -> Result<MetricsDigest> {
    if values.len() < 2 {
        return Err(Error::Precondition("metrics need at least two values".into()));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Precondition("values must be finite and positive".into()));
    }
    if config.periods_per_year <= 0.0 {
        return Err(Error::Config {
            field: "metrics.periods_per_year".into(),
            message: "must be positive".into(),
        });
    }
    let first = values[0];
    let last = values[values.len() - 1];
    let returns = simple_returns(values);
    let periods = returns.len();
    let mean_return = mean(&returns);
    let volatility = sample_std(&returns);
    let (sharpe, annualized_sharpe) = if volatility <= DEGENERATE_STD {
        (Sharpe::Undefined, Sharpe::Undefined)
    } else {
        let k = config.periods_per_year;
        (
            Sharpe::Value((mean_return - config.risk_free) / volatility),
            Sharpe::Value((mean_return - config.risk_free) * k / (volatility * k.sqrt())),
        )
    };
    let growth = last / first;
    Ok(MetricsDigest {
        cr: (growth - 1.0) * 100.0,
        ar: (growth.powf(config.periods_per_year / periods as f64) - 1.0) * 100.0,
        sharpe,
        annualized_sharpe,
        volatility,
        mdd: max_drawdown(values),
        mean_return,
        periods,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRegion {
    pub mu_mdd: f64,
    pub mu_cr: f64,
    pub sigma_mdd: f64,
    pub sigma_cr: f64,
    #[serde(default = "default_region_size")]
    pub c: f64,
}

fn default_region_size() -> f64 {
    1.0
}

impl PreferenceRegion {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_mdd > 0.0 && self.sigma_cr > 0.0) {
            return Err(Error::Precondition("region standard errors must be positive".into()));
        }
        if !(self.c > 0.0) {
            return Err(Error::Precondition("region size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPlacement {
    pub distance: f64,
    pub inside: bool,
}

/// Normalized squared distance of `(mdd, cr)` from the region centre; the
/// boundary counts as inside.
pub fn preference_region(mdd: f64, cr: f64, region: &PreferenceRegion) -> RegionPlacement {
    let dx = (mdd - region.mu_mdd) / region.sigma_mdd;
    let dy = (cr - region.mu_cr) / region.sigma_cr;
    let distance = dx * dx + dy * dy;
    RegionPlacement {
        distance,
        inside: distance <= region.c,
    }
}

/// One day's stage-by-stage provisional actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTrace {
    pub date: chrono::NaiveDate,
    pub stages: Vec<(StageId, Action)>,
    pub final_action: Action,
    #[serde(default)]
    pub error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub stages: Vec<StageId>,
    pub fractions: Vec<f64>,
    pub days: usize,
}

impl ConvergenceCurve {
    /// `stage,convergence` CSV rows in stage order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,convergence,days\n");
        for (s, f) in self.stages.iter().zip(&self.fractions) {
            out.push_str(&format!("{},{:.6},{}\n", s, f, self.days));
        }
        out
    }
}

/// Per-stage fraction of days whose provisional action equals the final one.
/// Error-flagged days are skipped.
pub fn stage_convergence(traces: &[DayTrace]) -> Result<ConvergenceCurve> {
    let eligible: Vec<&DayTrace> = traces.iter().filter(|t| !t.error).collect();
    let Some(first) = eligible.first() else {
        return Err(Error::Shape("no eligible days for convergence".into()));
    };
    let stages: Vec<StageId> = first.stages.iter().map(|(s, _)| *s).collect();
    for t in &eligible {
        let ids: Vec<StageId> = t.stages.iter().map(|(s, _)| *s).collect();
        if ids != stages {
            return Err(Error::Shape(format!(
                "trace for {} has stages {:?}, expected {:?}",
                t.date, ids, stages
            )));
        }
    }
    let mut matches = vec![0usize; stages.len()];
    for t in &eligible {
        for (i, (_, a)) in t.stages.iter().enumerate() {
            if *a == t.final_action {
                matches[i] += 1;
            }
        }
    }
    let n = eligible.len();
    Ok(ConvergenceCurve {
        stages,
        fractions: matches.iter().map(|&m| m as f64 / n as f64).collect(),
        days: n,
    })
}
