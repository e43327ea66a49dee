#![allow(dead_code)]

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use concord_core::consensus::{Claim, ClaimValue};
use concord_core::market_data::{InfoDomain, PriceSeries};
use concord_core::orchestration::StageId;
use concord_core::session::{
    DayRecord, Demographics, FinalExtras, HumanSession, PortfolioState, StageEntry, SCHEMA_VERSION,
};
use concord_core::signals::Action;
use rand::Rng;

pub fn d(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

pub fn ts(s: &str) -> DateTime<Utc> {
    DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
}

/// One bar per calendar day starting 2022-01-01.
pub fn daily(closes: &[f64]) -> PriceSeries {
    let start = d("2022-01-01");
    let dates: Vec<NaiveDate> = (0..closes.len()).map(|i| start + Duration::days(i as i64)).collect();
    PriceSeries::from_closes("TEST", &dates, closes).unwrap()
}

pub fn claim(report_id: usize, subject: &str, predicate: &str, polarity: i8, value: Option<(f64, &str)>) -> Claim {
    Claim {
        report_id,
        domain: InfoDomain::Market,
        subject: subject.into(),
        predicate: predicate.into(),
        polarity,
        value: value.map(|(amount, unit)| ClaimValue {
            amount,
            unit: unit.into(),
        }),
        as_of: Utc.with_ymd_and_hms(2024, 1, 2, 9, 0, 0).unwrap(),
        text: format!("{subject} {predicate}"),
    }
}

pub fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

const ACTIONS: [Action; 3] = [Action::Buy, Action::Sell, Action::Hold];

fn stage_entry(rng: &mut impl Rng, stage: StageId) -> StageEntry {
    let flagged = matches!(stage, StageId::D1 | StageId::D2 | StageId::D3 | StageId::D4);
    StageEntry {
        stage,
        action: ACTIONS[rng.random_range(0..3)],
        reliability: rng.random_range(1..=100),
        rationale: format!("note {}", rng.random_range(0..10_000)),
        leakage_flag: flagged.then(|| rng.random_bool(0.5)),
        time_on_stage_ms: rng.random_bool(0.5).then(|| rng.random_range(0..600_000)),
    }
}

fn day_record(rng: &mut impl Rng, day: u32, stages: usize) -> DayRecord {
    let is_final = stages == StageId::ALL.len();
    DayRecord {
        day,
        date: rng
            .random_bool(0.5)
            .then(|| d("2024-01-01") + Duration::days(i64::from(day))),
        stages: StageId::ALL[..stages].iter().map(|&s| stage_entry(rng, s)).collect(),
        final_extras: is_final.then(|| FinalExtras {
            most_influential: ["news", "market", "fundamentals"][rng.random_range(0..3)].into(),
            most_reliable: ["sentiment", "temporal"][rng.random_range(0..2)].into(),
            trade_size: [25, 50, 75, 100][rng.random_range(0..4)],
        }),
    }
}

/// A schema-valid session: finalized days followed by an optional partial day.
pub fn random_session(rng: &mut impl Rng, user: &str, ticker: &str) -> HumanSession {
    let complete = rng.random_range(0..5u32);
    let mut days: Vec<DayRecord> = (1..=complete).map(|i| day_record(rng, i, 6)).collect();
    if rng.random_bool(0.6) {
        let partial = rng.random_range(1..=5);
        days.push(day_record(rng, complete + 1, partial));
    }
    HumanSession {
        schema_version: SCHEMA_VERSION,
        user_id: user.into(),
        demographics: Demographics {
            education: "bachelor".into(),
            finance_experience: ["none", "some", "professional"][rng.random_range(0..3)].into(),
        },
        ticker: ticker.into(),
        current_day: complete + 1,
        days,
        portfolio: PortfolioState {
            schema_version: SCHEMA_VERSION,
            user_id: user.into(),
            ticker: ticker.into(),
            day: complete,
            cash: f64::from(rng.random_range(0..1_000_000u32)) / 100.0,
            shares: rng.random_range(0..500),
            last_price: f64::from(rng.random_range(1..100_000u32)) / 100.0,
        },
    }
}
