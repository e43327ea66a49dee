//! Analyst fan-out, credibility scoring, research consolidation and the
//! final trade decision.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use futures::stream::{self, StreamExt};
use futures::FutureExt;
use serde::{Deserialize, Serialize};

use crate::backtest::Portfolio;
use crate::consensus::{
    run_consensus, ClaimExtractor, ConsensusOutcome, ConsensusParams, Embedder, EvidenceSummary,
    GroupDigest, ReportInput,
};
use crate::error::{Error, Result};
use crate::market_data::{InfoDomain, InfoItem};
use crate::memory::Reflection;
use crate::provider::{
    complete_with_retry, ChatProvider, ChatRequest, OutputSchema, ProviderSpec, ITEMS_HEADER,
};
use crate::signals::{Action, SignalRecommendation, TemporalSummary};

/// Ordered information stages of one trading day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageId {
    D0,
    D1,
    D2,
    D3,
    D4,
    Final,
}

impl StageId {
    pub const ALL: [StageId; 6] = [
        StageId::D0,
        StageId::D1,
        StageId::D2,
        StageId::D3,
        StageId::D4,
        StageId::Final,
    ];

    /// Information domain revealed at this stage, if any.
    pub fn domain(self) -> Option<InfoDomain> {
        match self {
            StageId::D0 => Some(InfoDomain::Temporal),
            StageId::D1 => Some(InfoDomain::Fundamentals),
            StageId::D2 => Some(InfoDomain::Market),
            StageId::D3 => Some(InfoDomain::News),
            StageId::D4 => Some(InfoDomain::Sentiment),
            StageId::Final => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageId::D0 => "d0",
            StageId::D1 => "d1",
            StageId::D2 => "d2",
            StageId::D3 => "d3",
            StageId::D4 => "d4",
            StageId::Final => "final",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub report_id: usize,
    pub provider_id: String,
    pub domain: InfoDomain,
    pub body: String,
    pub as_of: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderFailure {
    pub provider_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanOut {
    pub reports: Vec<DomainReport>,
    pub failures: Vec<ProviderFailure>,
}

/// Providers in a fixed order; ids are unique.
#[derive(Clone)]
pub struct Roster {
    members: Vec<(ProviderSpec, Arc<dyn ChatProvider>)>,
}

impl Roster {
    pub fn from_specs(specs: &[ProviderSpec]) -> Result<Self> {
        let members = specs
            .iter()
            .map(|s| {
                s.build()
                    .map(|p| (s.clone(), p))
                    .map_err(|e| Error::Provider {
                        provider: s.provider_id.clone(),
                        message: e.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(members)
    }

    pub fn from_parts(members: Vec<(ProviderSpec, Arc<dyn ChatProvider>)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (spec, _) in &members {
            if !seen.insert(spec.provider_id.clone()) {
                return Err(Error::Config {
                    field: "roster".into(),
                    message: format!("duplicate provider id `{}`", spec.provider_id),
                });
            }
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.members.iter().map(|(s, _)| s.provider_id.as_str()).collect()
    }
}

/// Information an analyst sees for one domain on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportContext {
    pub ticker: String,
    pub cutoff: DateTime<Utc>,
    pub items: Vec<InfoItem>,
    pub temporal: Option<TemporalSummary>,
}

pub const ANALYST_SYSTEM_PROMPT: &str = "\
You are a financial analyst. Report only facts supported by the items provided. \
Write one claim per line as: domain | subject | predicate | polarity (-1, 0 or +1) | \
[value=<number> <unit>] | timestamp. Do not recommend trades or position sizes.";

fn analyst_prompt(domain: &InfoDomain, ctx: &ReportContext) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Ticker: {}", ctx.ticker);
    let _ = writeln!(out, "Decision cutoff: {}", ctx.cutoff.to_rfc3339());
    let _ = writeln!(out, "Domain: {domain}");
    if let Some(t) = &ctx.temporal {
        let _ = writeln!(out, "\n## Temporal summary\n{}", t.render_table());
    }
    let _ = writeln!(out, "{ITEMS_HEADER}");
    for item in ctx.items.iter().filter(|i| &i.domain == domain) {
        for line in item.payload.lines() {
            let _ = writeln!(out, "{line}");
        }
    }
    out
}

/// Queries every provider for a `domain` report, at most `max_in_flight` at a
/// time, and returns successful reports in roster order.
pub async fn fan_out_domain_reports(
    domain: InfoDomain,
    ctx: &ReportContext,
    roster: &Roster,
    max_in_flight: usize,
) -> Result<FanOut> {
    if roster.is_empty() {
        return Err(Error::Precondition("roster must not be empty".into()));
    }
    if let Some(late) = ctx.items.iter().find(|i| i.as_of > ctx.cutoff) {
        return Err(Error::Precondition(format!(
            "item {} is dated after the cutoff; gate the context first",
            late.id
        )));
    }
    let request = ChatRequest {
        system: ANALYST_SYSTEM_PROMPT.into(),
        user: analyst_prompt(&domain, ctx),
        schema: OutputSchema::DomainReport,
    };
    let request = Arc::new(request);
    let calls: Vec<_> = roster
        .members
        .iter()
        .cloned()
        .map(|(spec, provider)| {
            let request = Arc::clone(&request);
            async move {
                let outcome = complete_with_retry(provider.as_ref(), &spec, &request).await;
                (spec.provider_id, outcome)
            }
            .boxed()
        })
        .collect();
    let results: Vec<_> = stream::iter(calls)
        .buffered(max_in_flight.max(1))
        .collect()
        .await;

    let mut fan = FanOut {
        reports: Vec::new(),
        failures: Vec::new(),
    };
    for (provider_id, outcome) in results {
        match outcome {
            Ok(resp) if !resp.text.trim().is_empty() => fan.reports.push(DomainReport {
                report_id: fan.reports.len() + 1,
                provider_id,
                domain: domain.clone(),
                body: resp.text,
                as_of: ctx.cutoff,
            }),
            Ok(_) => fan.failures.push(ProviderFailure {
                provider_id,
                error: "empty report".into(),
            }),
            Err(e) => {
                tracing::warn!(provider = %provider_id, %domain, error = %e, "analyst failed");
                fan.failures.push(ProviderFailure {
                    provider_id,
                    error: e.to_string(),
                });
            }
        }
    }
    if fan.reports.is_empty() {
        return Err(Error::Orchestration(format!(
            "all {} providers failed for {domain}",
            roster.len()
        )));
    }
    Ok(fan)
}

/// Scores a set of domain reports. Only the reports given count toward support.
pub fn credibility_summarize(
    reports: &[DomainReport],
    params: &ConsensusParams,
    cutoff: DateTime<Utc>,
    extractor: &dyn ClaimExtractor,
    embedder: &dyn Embedder,
) -> Result<ConsensusOutcome> {
    let inputs: Vec<ReportInput> = reports
        .iter()
        .map(|r| ReportInput {
            source: r.provider_id.clone(),
            domain: r.domain.clone(),
            body: r.body.clone(),
        })
        .collect();
    run_consensus(&inputs, extractor, embedder, params, cutoff)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchBrief {
    pub evidence: EvidenceSummary,
    pub temporal: TemporalSummary,
    pub reflections: Vec<Reflection>,
    pub narrative: String,
    /// Ids of the info items the brief was built from.
    pub provenance: Vec<String>,
}

pub const SECTION_TEMPORAL: &str = "## Temporal summary";
pub const SECTION_HIGH: &str = "## High-confidence evidence";
pub const SECTION_REFLECTIONS: &str = "## Reflections";
pub const SECTION_LOW: &str = "## Low-confidence caveats";

fn digest_line(d: &GroupDigest) -> String {
    let reason = d
        .demotion
        .map(|r| format!(", {}", serde_json::to_value(r).unwrap().as_str().unwrap_or("")))
        .unwrap_or_default();
    format!(
        "- [{}] {} (consistency {:.2}, score {:.2}, sources {}{})",
        d.domain,
        d.market_signal,
        d.consistency,
        d.score,
        d.source.join("+"),
        reason
    )
}

pub fn consolidate_research(
    evidence: EvidenceSummary,
    temporal: TemporalSummary,
    reflections: Vec<Reflection>,
    provenance: Vec<String>,
) -> ResearchBrief {
    let mut n = String::new();
    let _ = writeln!(n, "{SECTION_TEMPORAL}\n{}", temporal.render_table());
    let _ = writeln!(n, "{SECTION_HIGH}");
    if evidence.high_confidence.is_empty() {
        let _ = writeln!(n, "(none)");
    }
    for d in &evidence.high_confidence {
        let _ = writeln!(n, "{}", digest_line(d));
    }
    if !reflections.is_empty() {
        let _ = writeln!(n, "\n{SECTION_REFLECTIONS}");
        for r in &reflections {
            let _ = writeln!(n, "[{} / {:?}] {}", r.config, r.role, r.text);
        }
    }
    let _ = writeln!(n, "\n{SECTION_LOW}");
    if evidence.low_confidence.is_empty() {
        let _ = writeln!(n, "(none)");
    }
    for d in &evidence.low_confidence {
        let _ = writeln!(n, "{}", digest_line(d));
    }
    if !evidence.leakage_flags.is_empty() {
        let _ = writeln!(n, "Leakage audit: {} future-dated claims excluded", evidence.leakage_flags.len());
    }
    ResearchBrief {
        evidence,
        temporal,
        reflections,
        narrative: n,
        provenance,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageAction {
    pub stage: StageId,
    pub action: Action,
    pub trade_pct: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeDecision {
    pub action: Action,
    pub trade_pct: u8,
    pub confidence: f64,
    pub rationale: String,
    pub stage_trace: Vec<StageAction>,
    #[serde(default)]
    pub error: Option<String>,
}

pub const TRADE_SIZES: [u8; 5] = [0, 25, 50, 75, 100];

impl TradeDecision {
    pub fn new(action: Action, trade_pct: u8, confidence: f64, rationale: impl Into<String>) -> Result<Self> {
        let d = Self {
            action,
            trade_pct,
            confidence,
            rationale: rationale.into(),
            stage_trace: Vec::new(),
            error: None,
        };
        d.validate().map_err(Error::Decision)?;
        Ok(d)
    }

    pub fn hold(rationale: impl Into<String>) -> Self {
        Self {
            action: Action::Hold,
            trade_pct: 0,
            confidence: 0.0,
            rationale: rationale.into(),
            stage_trace: Vec::new(),
            error: None,
        }
    }

    /// HOLD 0% carrying the failure that produced it.
    pub fn failed(error: impl fmt::Display) -> Self {
        let msg = error.to_string();
        Self {
            error: Some(msg.clone()),
            ..Self::hold(format!("decision failed: {msg}"))
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !TRADE_SIZES.contains(&self.trade_pct) {
            return Err(format!("trade_pct {} not in {:?}", self.trade_pct, TRADE_SIZES));
        }
        if self.action == Action::Hold && self.trade_pct != 0 {
            return Err("HOLD must carry trade_pct 0".into());
        }
        if self.action != Action::Hold && self.trade_pct == 0 {
            return Err(format!("{} needs a non-zero trade_pct", self.action));
        }
        if !(0.0..=100.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 100]", self.confidence));
        }
        Ok(())
    }
}

/// Who makes the final call.
#[derive(Clone)]
pub enum Trader {
    /// Deterministic rule: follow the temporal proposal unless high-confidence
    /// evidence points the other way.
    Policy,
    Provider {
        spec: ProviderSpec,
        provider: Arc<dyn ChatProvider>,
    },
}

fn net_polarity<'a>(digests: impl Iterator<Item = &'a GroupDigest>) -> i64 {
    digests.map(|d| i64::from(d.polarity)).sum()
}

fn follow_or_hold(proposal: &SignalRecommendation, net: i64) -> (Action, u8) {
    let dir = i64::from(proposal.action.sign());
    if proposal.action == Action::Hold || (net != 0 && net.signum() == -dir) {
        (Action::Hold, 0)
    } else {
        (proposal.action, proposal.position_pct)
    }
}

/// Provisional action after each information stage, plus the pre-reflection
/// decision of the last stage.
fn staged_policy(brief: &ResearchBrief) -> Vec<StageAction> {
    let proposal = &brief.temporal.proposal;
    let mut trace = vec![StageAction {
        stage: StageId::D0,
        action: proposal.action,
        trade_pct: proposal.position_pct,
    }];
    let mut seen: Vec<InfoDomain> = Vec::new();
    for stage in [StageId::D1, StageId::D2, StageId::D3, StageId::D4] {
        seen.push(stage.domain().expect("report stage"));
        let net = net_polarity(
            brief
                .evidence
                .high_confidence
                .iter()
                .filter(|d| seen.contains(&d.domain)),
        );
        let (action, trade_pct) = follow_or_hold(proposal, net);
        trace.push(StageAction {
            stage,
            action,
            trade_pct,
        });
    }
    trace
}

/// Steps the size down by 25 for each reflection whose recent return slopes
/// are deteriorating on average.
fn reflection_sizing(action: Action, pct: u8, reflections: &[Reflection]) -> (Action, u8, Vec<String>) {
    let mut pct = pct;
    let mut notes = Vec::new();
    for r in reflections {
        let slopes: Vec<f64> = r
            .digest
            .horizons
            .iter()
            .filter_map(|h| h.latest_return_slope)
            .collect();
        if !slopes.is_empty() && crate::stats::mean(&slopes) < 0.0 && pct > 0 {
            pct -= 25;
            notes.push(format!("{} reflection deteriorating: size -25", r.config));
        }
    }
    if pct == 0 {
        (Action::Hold, 0, notes)
    } else {
        (action, pct, notes)
    }
}

pub const TRADER_SYSTEM_PROMPT: &str = "\
You are the trader. Decide today's action from the research brief. Respond with only a JSON \
object {\"action\": \"BUY|SELL|HOLD\", \"trade_pct\": 0|25|50|75|100, \"confidence\": 0-100, \
\"rationale\": \"...\"}. HOLD requires trade_pct 0.";

#[derive(Deserialize)]
struct TraderOutput {
    action: String,
    trade_pct: u8,
    confidence: f64,
    rationale: String,
}

fn parse_trader_output(text: &str) -> std::result::Result<TradeDecision, String> {
    let start = text.find('{').ok_or("no JSON object in output")?;
    let end = text.rfind('}').ok_or("no JSON object in output")?;
    let raw: TraderOutput =
        serde_json::from_str(&text[start..=end]).map_err(|e| format!("invalid JSON: {e}"))?;
    let action: Action = raw.action.parse()?;
    let d = TradeDecision {
        action,
        trade_pct: raw.trade_pct,
        confidence: raw.confidence,
        rationale: raw.rationale,
        stage_trace: Vec::new(),
        error: None,
    };
    d.validate()?;
    Ok(d)
}

pub async fn decide_trade(
    brief: &ResearchBrief,
    portfolio: &Portfolio,
    trader: &Trader,
) -> Result<TradeDecision> {
    let mut trace = staged_policy(brief);
    let last = *trace.last().expect("non-empty trace");
    let mut decision = match trader {
        Trader::Policy => {
            let (action, pct, notes) =
                reflection_sizing(last.action, last.trade_pct, &brief.reflections);
            let net = net_polarity(brief.evidence.high_confidence.iter());
            let mut rationale = format!(
                "temporal proposal {} {}%; high-confidence evidence net polarity {:+}",
                brief.temporal.proposal.action, brief.temporal.proposal.position_pct, net
            );
            for n in notes {
                rationale.push_str("; ");
                rationale.push_str(&n);
            }
            TradeDecision {
                action,
                trade_pct: pct,
                confidence: brief.temporal.proposal.confidence,
                rationale,
                stage_trace: Vec::new(),
                error: None,
            }
        }
        Trader::Provider { spec, provider } => {
            let user = format!(
                "{}\nPortfolio: cash {:.2}, shares {}\n",
                brief.narrative, portfolio.cash, portfolio.shares
            );
            let mut request = ChatRequest {
                system: TRADER_SYSTEM_PROMPT.into(),
                user,
                schema: OutputSchema::TradeDecision,
            };
            let mut outcome = Err(String::new());
            for attempt in 0..2 {
                let text = complete_with_retry(provider.as_ref(), spec, &request)
                    .await
                    .map_err(|e| Error::Decision(format!("{}: {e}", spec.provider_id)))?
                    .text;
                outcome = parse_trader_output(&text);
                match &outcome {
                    Ok(_) => break,
                    Err(problem) if attempt == 0 => {
                        request.user.push_str(&format!(
                            "\nYour previous output was rejected ({problem}). Reply with only the JSON object."
                        ));
                    }
                    Err(_) => {}
                }
            }
            outcome.map_err(Error::Decision)?
        }
    };
    if decision.action == Action::Sell && portfolio.shares == 0 {
        decision = TradeDecision {
            rationale: format!("{}; no position to sell", decision.rationale),
            ..TradeDecision::hold("")
        };
    }
    trace.push(StageAction {
        stage: StageId::Final,
        action: decision.action,
        trade_pct: decision.trade_pct,
    });
    decision.stage_trace = trace;
    Ok(decision)
}

/// Archived per (ticker, date).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub ticker: String,
    pub date: NaiveDate,
    pub brief: ResearchBrief,
    pub decision: TradeDecision,
    pub failures: Vec<ProviderFailure>,
    pub flagged_items: Vec<String>,
}
