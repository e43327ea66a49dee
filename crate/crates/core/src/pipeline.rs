//! The multi-analyst trading agent as a backtest strategy.

use std::sync::Arc;

use async_trait::async_trait;
use chrono::Duration;

use crate::backtest::{DayContext, Strategy, StrategyOutput};
use crate::consensus::{ClaimExtractor, ConsensusParams, Embedder, EvidenceSummary, GrammarExtractor, HashEmbedder};
use crate::error::Result;
use crate::market_data::{gate_by_timestamp, InfoDomain, InfoItem};
use crate::memory::Role;
use crate::orchestration::{
    consolidate_research, credibility_summarize, decide_trade, fan_out_domain_reports, DecisionRecord,
    ReportContext, Roster, Trader,
};
use crate::signals::{summary_table, SignalConfig};

pub struct AgentPipeline {
    pub ticker: String,
    /// Every item known for the ticker; each day sees only those gated at its cutoff.
    pub items: Vec<InfoItem>,
    pub roster: Roster,
    pub trader: Trader,
    pub signals: SignalConfig,
    pub consensus: ConsensusParams,
    pub extractor: Arc<dyn ClaimExtractor>,
    pub embedder: Arc<dyn Embedder>,
    pub max_in_flight: usize,
    /// Calendar days of items (ending on the trading day) offered to analysts.
    pub item_lookback_days: i64,
    /// Reflection configs whose latest entry is injected into each brief.
    pub reflection_configs: Vec<String>,
}

impl AgentPipeline {
    pub fn new(ticker: impl Into<String>, items: Vec<InfoItem>, roster: Roster, trader: Trader) -> Self {
        Self {
            ticker: ticker.into(),
            items,
            roster,
            trader,
            signals: SignalConfig::default(),
            consensus: ConsensusParams::default(),
            extractor: Arc::new(GrammarExtractor),
            embedder: Arc::new(HashEmbedder::default()),
            max_in_flight: 4,
            item_lookback_days: 0,
            reflection_configs: vec!["short".into(), "long".into()],
        }
    }
}

#[async_trait]
impl Strategy for AgentPipeline {
    fn name(&self) -> String {
        format!("agents[{}]", self.roster.ids().join(","))
    }

    async fn decide(&mut self, ctx: &DayContext<'_>) -> Result<StrategyOutput> {
        let earliest = ctx.date - Duration::days(self.item_lookback_days);
        let candidates: Vec<InfoItem> = self
            .items
            .iter()
            .filter(|i| {
                let day = i.as_of.date_naive();
                day >= earliest && day <= ctx.date
            })
            .cloned()
            .collect();
        let (admitted, flagged) = gate_by_timestamp(candidates, ctx.cutoff);

        let temporal = summary_table(ctx.history, ctx.portfolio, &self.signals)?;
        let report_ctx = ReportContext {
            ticker: self.ticker.clone(),
            cutoff: ctx.cutoff,
            items: admitted.clone(),
            temporal: Some(temporal.clone()),
        };
        let mut evidence = EvidenceSummary::empty(ctx.cutoff);
        let mut failures = Vec::new();
        for domain in InfoDomain::REPORT_DOMAINS {
            if !admitted.iter().any(|i| i.domain == domain) {
                continue;
            }
            let fan = fan_out_domain_reports(domain, &report_ctx, &self.roster, self.max_in_flight).await?;
            failures.extend(fan.failures);
            let outcome = credibility_summarize(
                &fan.reports,
                &self.consensus,
                ctx.cutoff,
                self.extractor.as_ref(),
                self.embedder.as_ref(),
            )?;
            evidence.merge(outcome.summary);
        }

        let reflections = self
            .reflection_configs
            .iter()
            .filter_map(|name| ctx.memory.latest_reflection(name, Role::Trader))
            .filter(|r| r.date <= ctx.date)
            .cloned()
            .collect();
        let provenance = admitted.iter().map(|i| i.id.clone()).collect();
        let brief = consolidate_research(evidence, temporal, reflections, provenance);
        let decision = decide_trade(&brief, ctx.portfolio, &self.trader).await?;
        let archive = DecisionRecord {
            ticker: self.ticker.clone(),
            date: ctx.date,
            brief,
            decision: decision.clone(),
            failures,
            flagged_items: flagged.into_iter().map(|i| i.id).collect(),
        };
        Ok(StrategyOutput {
            decision,
            archive: Some(archive),
        })
    }
}
