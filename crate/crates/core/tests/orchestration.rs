mod common;

use chrono::{DateTime, Utc};
use common::{d, ts};
use concord_core::backtest::{run_backtest, BacktestConfig, Portfolio};
use concord_core::consensus::{run_consensus, Demotion, EvidenceSummary, GrammarExtractor, HashEmbedder, ReportInput};
use concord_core::market_data::{InfoDomain, InfoItem};
use concord_core::orchestration::{
    consolidate_research, credibility_summarize, decide_trade, fan_out_domain_reports, ReportContext, ResearchBrief,
    Roster, StageId, Trader, SECTION_HIGH, SECTION_LOW, SECTION_REFLECTIONS, SECTION_TEMPORAL,
};
use concord_core::pipeline::AgentPipeline;
use concord_core::provider::{MockBehavior, ProviderSpec};
use concord_core::signals::{summary_table, Action, SignalConfig, TemporalSummary};
use concord_core::synthetic::{synthetic_items, synthetic_series, GbmParams, ItemParams};
use concord_core::Error;

const CUTOFF: &str = "2024-01-02T13:00:00Z";

fn mocks(behaviors: &[MockBehavior]) -> Roster {
    let specs: Vec<ProviderSpec> = behaviors
        .iter()
        .enumerate()
        .map(|(i, b)| ProviderSpec::mock(&format!("mock-{}", i + 1), i as u64, b.clone()))
        .collect();
    Roster::from_specs(&specs).unwrap()
}

fn item(id: &str, payload: &str, as_of: &str) -> InfoItem {
    InfoItem {
        id: id.into(),
        domain: InfoDomain::News,
        payload: payload.into(),
        as_of: ts(as_of),
        source: "wire".into(),
    }
}

fn context() -> ReportContext {
    ReportContext {
        ticker: "NVDA".into(),
        cutoff: ts(CUTOFF),
        items: vec![
            item("n1", "news | NVDA | product-launch | +1 | | 2024-01-02T08:00:00Z", "2024-01-02T08:00:00Z"),
            item("n2", "news | NVDA | analyst-upgrade | +1 | value=12 % | 2024-01-02T09:00:00Z", "2024-01-02T09:00:00Z"),
        ],
        temporal: None,
    }
}

fn report(source: &str, body: &str) -> ReportInput {
    ReportInput {
        source: source.into(),
        domain: InfoDomain::News,
        body: body.into(),
    }
}

fn consensus(reports: &[ReportInput]) -> EvidenceSummary {
    run_consensus(
        reports,
        &GrammarExtractor,
        &HashEmbedder::default(),
        &Default::default(),
        ts(CUTOFF),
    )
    .unwrap()
    .summary
}

#[tokio::test]
async fn fan_out_keeps_roster_order_and_repeats() {
    let roster = mocks(&[MockBehavior::Faithful, MockBehavior::Faithful, MockBehavior::Faithful]);
    let a = fan_out_domain_reports(InfoDomain::News, &context(), &roster, 2).await.unwrap();
    let b = fan_out_domain_reports(InfoDomain::News, &context(), &roster, 4).await.unwrap();
    let ids: Vec<&str> = a.reports.iter().map(|r| r.provider_id.as_str()).collect();
    assert_eq!(ids, ["mock-1", "mock-2", "mock-3"]);
    assert_eq!(a.reports.iter().map(|r| r.report_id).collect::<Vec<_>>(), [1, 2, 3]);
    assert_eq!(a, b);
    assert!(a.failures.is_empty());
}

#[tokio::test]
async fn failed_provider_is_logged_and_excluded_from_support() {
    let roster = mocks(&[MockBehavior::Faithful, MockBehavior::Fail, MockBehavior::Faithful]);
    let fan = fan_out_domain_reports(InfoDomain::News, &context(), &roster, 4).await.unwrap();
    assert_eq!(fan.reports.len(), 2);
    assert_eq!(fan.failures.len(), 1);
    assert_eq!(fan.failures[0].provider_id, "mock-2");

    let outcome = credibility_summarize(&fan.reports, &Default::default(), ts(CUTOFF), &GrammarExtractor, &HashEmbedder::default()).unwrap();
    assert_eq!(outcome.summary.report_count, 2);
    for g in &outcome.groups {
        assert_eq!(g.supp, 1.0);
    }
}

#[tokio::test]
async fn fan_out_preconditions() {
    let empty = Roster::from_specs(&[]).unwrap();
    assert!(matches!(
        fan_out_domain_reports(InfoDomain::News, &context(), &empty, 4).await,
        Err(Error::Precondition(_))
    ));

    let all_fail = mocks(&[MockBehavior::Fail, MockBehavior::Fail]);
    assert!(matches!(
        fan_out_domain_reports(InfoDomain::News, &context(), &all_fail, 4).await,
        Err(Error::Orchestration(_))
    ));

    let mut late = context();
    late.items.push(item("n3", "news | NVDA | recall | -1 | | 2024-01-02T15:00:00Z", "2024-01-02T15:00:00Z"));
    let roster = mocks(&[MockBehavior::Faithful]);
    assert!(matches!(
        fan_out_domain_reports(InfoDomain::News, &late, &roster, 4).await,
        Err(Error::Precondition(_))
    ));
}

#[test]
fn duplicate_provider_ids_are_rejected() {
    let spec = ProviderSpec::mock("same", 1, MockBehavior::Faithful);
    assert!(Roster::from_specs(&[spec.clone(), spec]).is_err());
}

#[test]
fn agreeing_reports_form_one_high_confidence_group() {
    let line = "- news | NVDA | product-launch | +1 | | 2024-01-02T08:00:00Z";
    let s = consensus(&[report("a", line), report("b", line), report("c", line)]);
    assert_eq!(s.high_confidence.len(), 1);
    assert!(s.low_confidence.is_empty());
    assert_eq!(s.high_confidence[0].consistency, 1.0);
    assert_eq!(s.high_confidence[0].source, ["a", "b", "c"]);
}

#[test]
fn opposite_polarity_is_demoted() {
    let s = consensus(&[
        report("a", "news | NVDA | guidance | +1 | | 2024-01-02T08:00:00Z"),
        report("b", "news | NVDA | guidance | -1 | | 2024-01-02T08:00:00Z"),
    ]);
    assert!(s.high_confidence.is_empty());
    assert_eq!(s.low_confidence[0].demotion, Some(Demotion::PolarityConflict));
}

#[test]
fn future_dated_claim_is_flagged() {
    let on_time = "news | NVDA | guidance | +1 | | 2024-01-02T08:00:00Z";
    let s = consensus(&[
        report("a", on_time),
        report("b", on_time),
        report("c", "news | NVDA | guidance | +1 | | 2024-01-03T08:00:00Z"),
    ]);
    assert_eq!(s.leakage_flags.len(), 1);
    assert_eq!(s.leakage_flags[0].report_id, 3);
    assert_eq!(s.low_confidence[0].demotion, Some(Demotion::Leakage));
}

#[test]
fn permuting_reports_keeps_scores() {
    let bodies = [
        "news | NVDA | guidance | +1 | value=3 % | 2024-01-02T08:00:00Z\nnews | NVDA | recall | -1 | | 2024-01-02T08:00:00Z",
        "news | NVDA | guidance | +1 | value=3.4 % | 2024-01-02T08:00:00Z",
        "news | NVDA | recall | -1 | | 2024-01-02T08:00:00Z\nnews | AMD | launch | +1 | | 2024-01-02T08:00:00Z",
    ];
    let forward: Vec<ReportInput> = bodies.iter().enumerate().map(|(i, b)| report(&format!("r{i}"), b)).collect();
    let mut backward = forward.clone();
    backward.reverse();
    let scores = |rs: &[ReportInput]| {
        let mut s: Vec<String> = run_consensus(rs, &GrammarExtractor, &HashEmbedder::default(), &Default::default(), ts(CUTOFF))
            .unwrap()
            .groups
            .iter()
            .map(|g| format!("{:.12} {:.12} {:.12}", g.supp, g.coh, g.score))
            .collect();
        s.sort();
        s
    };
    assert_eq!(scores(&forward), scores(&backward));
}

fn temporal(action: Action, pct: u8) -> TemporalSummary {
    let series = synthetic_series("NVDA", d("2022-06-01"), d("2024-01-02"), &GbmParams::default(), 3).unwrap();
    let mut t = summary_table(&series, &Portfolio::new(100_000.0), &SignalConfig::default()).unwrap();
    t.proposal.action = action;
    t.proposal.position_pct = pct;
    t
}

fn brief(action: Action, pct: u8, evidence: EvidenceSummary) -> ResearchBrief {
    consolidate_research(evidence, temporal(action, pct), Vec::new(), Vec::new())
}

fn polar(domain: &str, polarity: &str) -> EvidenceSummary {
    let line = format!("{domain} | NVDA | outlook | {polarity} | | 2024-01-02T08:00:00Z");
    let domain: InfoDomain = domain.parse().unwrap();
    let reports: Vec<ReportInput> = ["a", "b", "c"]
        .iter()
        .map(|s| ReportInput {
            source: s.to_string(),
            domain: domain.clone(),
            body: line.clone(),
        })
        .collect();
    run_consensus(&reports, &GrammarExtractor, &HashEmbedder::default(), &Default::default(), ts(CUTOFF))
        .unwrap()
        .summary
}

#[test]
fn narrative_sections_follow_fixed_order() {
    let mut evidence = polar("news", "+1");
    evidence.merge(consensus(&[
        report("a", "news | NVDA | guidance | +1 | | 2024-01-02T08:00:00Z"),
        report("b", "news | NVDA | guidance | -1 | | 2024-01-02T08:00:00Z"),
    ]));
    let b = brief(Action::Buy, 50, evidence.clone());
    let pos = |s: &str| b.narrative.find(s);
    assert!(pos(SECTION_REFLECTIONS).is_none());
    let (t, h, l) = (pos(SECTION_TEMPORAL).unwrap(), pos(SECTION_HIGH).unwrap(), pos(SECTION_LOW).unwrap());
    assert!(t < h && h < l);
    let again = brief(Action::Buy, 50, evidence);
    assert_eq!(b.narrative, again.narrative);
}

#[tokio::test]
async fn policy_follows_agreeing_evidence() {
    let b = brief(Action::Buy, 50, polar("news", "+1"));
    let decision = decide_trade(&b, &Portfolio::new(10_000.0), &Trader::Policy).await.unwrap();
    assert_eq!((decision.action, decision.trade_pct), (Action::Buy, 50));
    let stages: Vec<StageId> = decision.stage_trace.iter().map(|s| s.stage).collect();
    assert_eq!(stages, StageId::ALL);
}

#[tokio::test]
async fn policy_holds_on_contradiction() {
    let b = brief(Action::Buy, 50, polar("market", "-1"));
    let decision = decide_trade(&b, &Portfolio::new(10_000.0), &Trader::Policy).await.unwrap();
    assert_eq!((decision.action, decision.trade_pct), (Action::Hold, 0));
    // the contradiction appears at the market stage (d2), not before
    let trace: Vec<Action> = decision.stage_trace.iter().map(|s| s.action).collect();
    assert_eq!(trace, [Action::Buy, Action::Buy, Action::Hold, Action::Hold, Action::Hold, Action::Hold]);
}

#[tokio::test]
async fn policy_without_evidence_follows_proposal() {
    let b = brief(Action::Buy, 25, EvidenceSummary::empty(ts(CUTOFF)));
    let decision = decide_trade(&b, &Portfolio::new(10_000.0), &Trader::Policy).await.unwrap();
    assert_eq!((decision.action, decision.trade_pct), (Action::Buy, 25));

    let sell = brief(Action::Sell, 50, EvidenceSummary::empty(ts(CUTOFF)));
    let flat = decide_trade(&sell, &Portfolio::new(10_000.0), &Trader::Policy).await.unwrap();
    assert_eq!(flat.action, Action::Hold);
}

fn provider_trader(behavior: MockBehavior) -> Trader {
    let spec = ProviderSpec::mock("trader", 9, behavior);
    Trader::Provider {
        provider: spec.build().unwrap(),
        spec,
    }
}

#[tokio::test]
async fn provider_trader_uses_the_structured_contract() {
    let b = brief(Action::Buy, 50, EvidenceSummary::empty(ts(CUTOFF)));
    let decision = decide_trade(&b, &Portfolio::new(10_000.0), &provider_trader(MockBehavior::Faithful))
        .await
        .unwrap();
    assert_eq!((decision.action, decision.trade_pct), (Action::Buy, 50));

    let err = decide_trade(&b, &Portfolio::new(10_000.0), &provider_trader(MockBehavior::Malformed)).await;
    assert!(matches!(err, Err(Error::Decision(_))));
}

fn cutoff_of(date: chrono::NaiveDate) -> DateTime<Utc> {
    date.and_hms_opt(13, 0, 0).unwrap().and_utc()
}

#[tokio::test]
async fn malformed_trader_degrades_to_flagged_hold() {
    let series = synthetic_series("ERR", d("2022-12-01"), d("2024-01-12"), &GbmParams::default(), 4).unwrap();
    let items = synthetic_items(&series, d("2024-01-02"), &ItemParams::default(), 4);
    let roster = mocks(&[MockBehavior::Faithful, MockBehavior::Faithful]);
    let mut pipeline = AgentPipeline::new("ERR", items, roster, provider_trader(MockBehavior::Malformed));
    let config = BacktestConfig {
        start: Some(d("2024-01-02")),
        ..BacktestConfig::default()
    };
    let result = run_backtest(&mut pipeline, &series, &config).await.unwrap();
    assert!(!result.decisions.is_empty());
    for decision in &result.decisions {
        assert_eq!((decision.action, decision.trade_pct), (Action::Hold, 0));
        assert!(decision.error.is_some());
    }
    assert!(result.traces.iter().all(|t| t.error));
}

#[tokio::test]
async fn flagged_items_never_reach_a_brief() {
    let series = synthetic_series("TNT", d("2022-12-01"), d("2024-02-16"), &GbmParams::default(), 6).unwrap();
    let params = ItemParams {
        late_item_rate: 0.4,
        ..ItemParams::default()
    };
    let items = synthetic_items(&series, d("2024-01-02"), &params, 6);
    let roster = mocks(&[
        MockBehavior::Faithful,
        MockBehavior::Noisy {
            drop_rate: 0.2,
            flip_rate: 0.2,
            jitter: 0.5,
        },
        MockBehavior::Faithful,
    ]);
    let mut pipeline = AgentPipeline::new("TNT", items.clone(), roster, Trader::Policy);
    let config = BacktestConfig {
        start: Some(d("2024-01-02")),
        ..BacktestConfig::default()
    };
    let result = run_backtest(&mut pipeline, &series, &config).await.unwrap();
    let mut flagged_total = 0;
    for record in &result.archive {
        let cutoff = cutoff_of(record.date);
        flagged_total += record.flagged_items.len();
        for id in &record.brief.provenance {
            assert!(!record.flagged_items.contains(id), "{id} was flagged but used");
            let used = items.iter().find(|i| &i.id == id).unwrap();
            assert!(used.as_of <= cutoff);
        }
    }
    assert!(flagged_total > 0, "fixture should contain late items");
}

#[tokio::test]
async fn pipeline_is_repeatable() {
    let run = || async {
        let series = synthetic_series("REP", d("2022-12-01"), d("2024-01-31"), &GbmParams::default(), 8).unwrap();
        let items = synthetic_items(&series, d("2024-01-02"), &ItemParams::default(), 8);
        let roster = mocks(&[MockBehavior::Faithful, MockBehavior::Faithful, MockBehavior::Faithful]);
        let mut p = AgentPipeline::new("REP", items, roster, Trader::Policy);
        let config = BacktestConfig {
            start: Some(d("2024-01-02")),
            ..BacktestConfig::default()
        };
        run_backtest(&mut p, &series, &config).await.unwrap()
    };
    let (a, b) = (run().await, run().await);
    assert_eq!(a.decisions, b.decisions);
    assert_eq!(a.archive, b.archive);
}
