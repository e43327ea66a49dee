//! Selective consensus over atomic claims extracted from independent reports.
//!
//! Reports are parsed into schema claims, claims are embedded, and a
//! cross-report similarity graph is thresholded into connected components.
//! Each component is scored by how many reports back it (support) and how
//! tightly its members agree (cohesion); the evidence summary then promotes
//! well-supported groups and demotes conflicting or future-dated ones.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed;
use crate::market_data::InfoDomain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimValue {
    pub amount: f64,
    pub unit: String,
}

/// One normalized assertion. Its id is its index in the owning [`ClaimBatch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub report_id: usize,
    pub domain: InfoDomain,
    pub subject: String,
    pub predicate: String,
    pub polarity: i8,
    pub value: Option<ClaimValue>,
    pub as_of: DateTime<Utc>,
    pub text: String,
}

impl Claim {
    /// Renders the claim in the one-line grammar accepted by [`parse_claim_line`].
    pub fn to_line(&self) -> String {
        let value = self
            .value
            .as_ref()
            .map(|v| {
                if v.unit.is_empty() {
                    format!("value={}", v.amount)
                } else {
                    format!("value={} {}", v.amount, v.unit)
                }
            })
            .unwrap_or_default();
        format!(
            "{} | {} | {} | {:+} | {} | {}",
            self.domain,
            self.subject,
            self.predicate,
            self.polarity,
            value,
            self.as_of.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        )
    }
}

fn parse_polarity(s: &str) -> std::result::Result<i8, String> {
    match s.replace('\u{2212}', "-").as_str() {
        "+1" | "1" => Ok(1),
        "0" | "+0" | "-0" => Ok(0),
        "-1" => Ok(-1),
        other => Err(format!("polarity must be -1, 0 or +1, got `{other}`")),
    }
}

fn parse_value(s: &str) -> std::result::Result<Option<ClaimValue>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    let s = s.strip_prefix("value=").unwrap_or(s).trim();
    let mut parts = s.splitn(2, char::is_whitespace);
    let number = parts.next().unwrap_or_default();
    let amount: f64 = number
        .parse()
        .map_err(|_| format!("value `{number}` is not a number"))?;
    if !amount.is_finite() {
        return Err(format!("value `{number}` is not finite"));
    }
    let unit = parts.next().unwrap_or_default().trim().to_string();
    Ok(Some(ClaimValue { amount, unit }))
}

pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(s) {
        return Ok(ts.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
        .map_err(|_| format!("bad timestamp `{s}`"))
}

/// Parses `domain | subject | predicate | polarity | [value unit] | timestamp`.
///
/// Lines without a `|` are prose and yield `Ok(None)`. A leading bullet
/// marker (`-`, `*` or `•`) is ignored.
pub fn parse_claim_line(
    line: &str,
    report_id: usize,
    domain: InfoDomain,
) -> std::result::Result<Option<Claim>, String> {
    let trimmed = line.trim();
    let body = trimmed
        .strip_prefix("- ")
        .or_else(|| trimmed.strip_prefix("* "))
        .or_else(|| trimmed.strip_prefix("• "))
        .unwrap_or(trimmed);
    if !body.contains('|') {
        return Ok(None);
    }
    let fields: Vec<&str> = body.split('|').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(format!("expected 6 fields, found {}", fields.len()));
    }
    let line_domain: InfoDomain = fields[0].parse()?;
    if line_domain != domain {
        return Err(format!("claim domain `{line_domain}` in a {domain} report"));
    }
    if fields[1].is_empty() || fields[2].is_empty() {
        return Err("subject and predicate must be non-empty".into());
    }
    Ok(Some(Claim {
        report_id,
        domain,
        subject: fields[1].to_string(),
        predicate: fields[2].to_string(),
        polarity: parse_polarity(fields[3])?,
        value: parse_value(fields[4])?,
        as_of: parse_timestamp(fields[5])?,
        text: body.to_string(),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedClaim {
    pub report_id: usize,
    pub line_no: usize,
    pub line: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub claims: Vec<Claim>,
    pub rejected: Vec<RejectedClaim>,
}

/// Turns a free-text report into schema claims.
pub trait ClaimExtractor: Send + Sync {
    fn extract(&self, report_id: usize, domain: InfoDomain, body: &str) -> Result<Extraction>;
}

/// Deterministic extractor for the one-claim-per-line grammar.
#[derive(Debug, Clone, Copy, Default)]
pub struct GrammarExtractor;

impl ClaimExtractor for GrammarExtractor {
    fn extract(&self, report_id: usize, domain: InfoDomain, body: &str) -> Result<Extraction> {
        let mut out = Extraction::default();
        for (i, line) in body.lines().enumerate() {
            match parse_claim_line(line, report_id, domain.clone()) {
                Ok(Some(claim)) => out.claims.push(claim),
                Ok(None) => {}
                Err(reason) => out.rejected.push(RejectedClaim {
                    report_id,
                    line_no: i + 1,
                    line: line.to_string(),
                    reason,
                }),
            }
        }
        Ok(out)
    }
}

pub fn normalize_claims(
    report: &str,
    report_id: usize,
    domain: InfoDomain,
    extractor: &dyn ClaimExtractor,
) -> Result<Extraction> {
    if report.trim().is_empty() {
        return Err(Error::Extraction {
            report_id,
            message: "empty report".into(),
        });
    }
    let extraction = extractor.extract(report_id, domain, report)?;
    for r in &extraction.rejected {
        tracing::warn!(report_id, line = r.line_no, reason = %r.reason, "rejected claim");
    }
    Ok(extraction)
}

/// Maps a claim to a unit vector of fixed dimension.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, claim: &Claim) -> Vec<f64>;
}

/// Hashes normalized subject, predicate and polarity tokens into a fixed
/// number of buckets. Claims with the same schema triple embed identically.
///
/// The polarity token carries half weight so that opposite-polarity claims
/// about the same subject and predicate remain close enough to be grouped
/// (and then flagged as conflicting).
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 64 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn tokens(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, claim: &Claim) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let mut add = |token: String, weight: f64| {
            v[(fnv1a(token.as_bytes()) % self.dim as u64) as usize] += weight;
        };
        for t in tokens(&claim.subject) {
            add(format!("s:{t}"), 1.0);
        }
        for t in tokens(&claim.predicate) {
            add(format!("p:{t}"), 1.0);
        }
        add(format!("polarity:{}", claim.polarity), 0.5);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusParams {
    /// Weight of semantic similarity in the hybrid score.
    pub lambda: f64,
    /// Scale of numeric agreement, in the value's unit.
    pub sigma: f64,
    /// Edge threshold of the similarity graph.
    pub tau: f64,
    /// Weight of support in the consensus score.
    pub alpha: f64,
    pub high_conf_threshold: f64,
    /// Optional per-unit multipliers applied to `sigma`.
    pub unit_scales: BTreeMap<String, f64>,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        Self {
            lambda: 0.6,
            sigma: 1.0,
            tau: 0.75,
            alpha: 0.5,
            high_conf_threshold: 0.6,
            unit_scales: BTreeMap::new(),
        }
    }
}

impl ConsensusParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: format!("consensus.{field}"),
                message: message.into(),
            })
        };
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda", "must lie in [0, 1]");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma", "must be positive");
        }
        if !self.tau.is_finite() {
            return bad("tau", "must be finite");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", "must lie in [0, 1]");
        }
        if self.unit_scales.values().any(|s| !(*s > 0.0)) {
            return bad("unit_scales", "scales must be positive");
        }
        Ok(())
    }

    fn sigma_for(&self, unit: &str) -> f64 {
        self.sigma * self.unit_scales.get(unit).copied().unwrap_or(1.0)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `exp(-|x - y| / sigma)`.
pub fn numeric_agreement(x: f64, y: f64, sigma: f64) -> f64 {
    (-(x - y).abs() / sigma).exp()
}

/// Hybrid claim similarity. Numeric agreement enters only when both claims
/// carry values in the same unit; otherwise the score is purely semantic.
pub fn hybrid_similarity(
    a: &Claim,
    a_vec: &[f64],
    b: &Claim,
    b_vec: &[f64],
    params: &ConsensusParams,
) -> f64 {
    let sem = cosine(a_vec, b_vec);
    match (&a.value, &b.value) {
        (Some(x), Some(y)) if x.unit == y.unit => {
            let num = numeric_agreement(x.amount, y.amount, params.sigma_for(&x.unit));
            params.lambda * sem + (1.0 - params.lambda) * num
        }
        _ => sem,
    }
}

/// Claims from all reports of one batch, indexed by claim id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimBatch {
    pub claims: Vec<Claim>,
    /// Label of each report (provider id); `report_id` is 1-based into this list.
    pub report_sources: Vec<String>,
}

impl ClaimBatch {
    /// Flattens per-report claim lists; report `i` (0-based) becomes report id `i + 1`.
    pub fn from_reports(reports: Vec<(String, Vec<Claim>)>) -> Self {
        let mut claims = Vec::new();
        let mut report_sources = Vec::new();
        for (i, (source, cs)) in reports.into_iter().enumerate() {
            report_sources.push(source);
            claims.extend(cs.into_iter().map(|mut c| {
                c.report_id = i + 1;
                c
            }));
        }
        Self {
            claims,
            report_sources,
        }
    }

    pub fn report_count(&self) -> usize {
        self.report_sources.len()
    }

    pub fn embed(&self, embedder: &dyn Embedder) -> Vec<Vec<f64>> {
        self.claims.iter().map(|c| embedder.embed(c)).collect()
    }
}

/// Symmetric matrix of pairwise hybrid similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn compute(claims: &[Claim], embeddings: &[Vec<f64>], params: &ConsensusParams) -> Self {
        let n = claims.len();
        Self::from_fn(n, |i, j| {
            hybrid_similarity(&claims[i], &embeddings[i], &claims[j], &embeddings[j], params)
        })
    }

    /// Builds the matrix from `f(i, j)` for `i < j`; the diagonal is 1.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![1.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let s = f(i, j);
                values[i * n + j] = s;
                values[j * n + i] = s;
            }
        }
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// A connected component of the similarity graph, before scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimGroup {
    pub members: Vec<usize>,
    /// Distinct contributing report ids, ascending.
    pub reports: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusGroup {
    pub members: Vec<usize>,
    pub reports: Vec<usize>,
    #[serde(serialize_with = "fixed::f64")]
    pub supp: f64,
    #[serde(serialize_with = "fixed::f64")]
    pub coh: f64,
    #[serde(serialize_with = "fixed::f64")]
    pub score: f64,
    pub high_confidence: bool,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so roots are stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Connected components over edges between claims of different reports with
/// similarity at least `tau`. Groups are ordered by their smallest claim id.
pub fn build_consensus_groups(
    claims: &[Claim],
    similarities: &SimilarityMatrix,
    params: &ConsensusParams,
) -> Vec<ClaimGroup> {
    let n = claims.len();
    let mut dsu = DisjointSet::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if claims[i].report_id != claims[j].report_id && similarities.get(i, j) >= params.tau {
                dsu.union(i, j);
            }
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = dsu.find(i);
        by_root.entry(root).or_default().push(i);
    }
    let mut groups: Vec<ClaimGroup> = by_root
        .into_values()
        .map(|members| {
            let reports: BTreeSet<usize> = members.iter().map(|&m| claims[m].report_id).collect();
            ClaimGroup {
                members,
                reports: reports.into_iter().collect(),
            }
        })
        .collect();
    groups.sort_by_key(|g| g.members[0]);
    groups
}

/// Support, cohesion and consensus score of one group.
///
/// Cohesion averages over every member pair, including pairs from the same
/// report; a singleton has cohesion 0.
pub fn score_group(
    group: &ClaimGroup,
    report_count: usize,
    similarities: &SimilarityMatrix,
    params: &ConsensusParams,
) -> ConsensusGroup {
    let supp = group.reports.len() as f64 / report_count.max(1) as f64;
    let k = group.members.len();
    let coh = if k < 2 {
        0.0
    } else {
        let mut sum = 0.0;
        for (a, &u) in group.members.iter().enumerate() {
            for &v in &group.members[a + 1..] {
                sum += similarities.get(u, v);
            }
        }
        2.0 * sum / (k * (k - 1)) as f64
    };
    let score = params.alpha * supp + (1.0 - params.alpha) * coh;
    ConsensusGroup {
        members: group.members.clone(),
        reports: group.reports.clone(),
        supp,
        coh,
        score,
        high_confidence: score >= params.high_conf_threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceLevel {
    High,
    Low,
}

impl fmt::Display for ConfidenceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfidenceLevel::High => "high",
            ConfidenceLevel::Low => "low",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Demotion {
    Leakage,
    PolarityConflict,
    WeakConsensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDigest {
    pub members: Vec<usize>,
    pub domain: InfoDomain,
    pub subject: String,
    pub market_signal: String,
    /// Sign of the summed member polarities.
    pub polarity: i8,
    pub source: Vec<String>,
    #[serde(serialize_with = "fixed::f64")]
    pub consistency: f64,
    #[serde(serialize_with = "fixed::f64")]
    pub cohesion: f64,
    #[serde(serialize_with = "fixed::f64")]
    pub score: f64,
    pub confidence: ConfidenceLevel,
    pub demotion: Option<Demotion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageFlag {
    pub claim_id: usize,
    pub report_id: usize,
    pub as_of: DateTime<Utc>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSummary {
    pub cutoff: DateTime<Utc>,
    pub report_count: usize,
    pub high_confidence: Vec<GroupDigest>,
    pub low_confidence: Vec<GroupDigest>,
    pub leakage_flags: Vec<LeakageFlag>,
}

impl EvidenceSummary {
    pub fn empty(cutoff: DateTime<Utc>) -> Self {
        Self {
            cutoff,
            report_count: 0,
            high_confidence: Vec::new(),
            low_confidence: Vec::new(),
            leakage_flags: Vec::new(),
        }
    }

    /// Appends another summary's digests, keeping each list sorted by score.
    pub fn merge(&mut self, other: EvidenceSummary) {
        self.report_count = self.report_count.max(other.report_count);
        self.high_confidence.extend(other.high_confidence);
        self.low_confidence.extend(other.low_confidence);
        self.leakage_flags.extend(other.leakage_flags);
        let by_score = |a: &GroupDigest, b: &GroupDigest| b.score.total_cmp(&a.score);
        self.high_confidence.sort_by(by_score);
        self.low_confidence.sort_by(by_score);
    }

    pub fn to_record(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

fn sign(x: i64) -> i8 {
    x.signum() as i8
}

/// Splits scored groups into high- and low-confidence digests.
///
/// Rules apply in order: any member dated after `cutoff` demotes the group
/// (and is flagged); members of opposite polarity demote it; otherwise the
/// group is high-confidence iff its score clears the threshold.
pub fn partition_evidence(
    groups: &[ConsensusGroup],
    batch: &ClaimBatch,
    cutoff: DateTime<Utc>,
    params: &ConsensusParams,
) -> EvidenceSummary {
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| groups[b].score.total_cmp(&groups[a].score).then(a.cmp(&b)));

    let mut summary = EvidenceSummary {
        cutoff,
        report_count: batch.report_count(),
        high_confidence: Vec::new(),
        low_confidence: Vec::new(),
        leakage_flags: Vec::new(),
    };
    for gi in order {
        let group = &groups[gi];
        let members: Vec<&Claim> = group.members.iter().map(|&m| &batch.claims[m]).collect();
        let leaked: Vec<usize> = group
            .members
            .iter()
            .copied()
            .filter(|&m| batch.claims[m].as_of > cutoff)
            .collect();
        for &m in &leaked {
            let c = &batch.claims[m];
            summary.leakage_flags.push(LeakageFlag {
                claim_id: m,
                report_id: c.report_id,
                as_of: c.as_of,
                text: c.text.clone(),
            });
        }
        let has_pos = members.iter().any(|c| c.polarity > 0);
        let has_neg = members.iter().any(|c| c.polarity < 0);
        let demotion = if !leaked.is_empty() {
            Some(Demotion::Leakage)
        } else if has_pos && has_neg {
            Some(Demotion::PolarityConflict)
        } else if group.score < params.high_conf_threshold {
            Some(Demotion::WeakConsensus)
        } else {
            None
        };
        let head = members[0];
        let polarity = sign(members.iter().map(|c| i64::from(c.polarity)).sum());
        let digest = GroupDigest {
            members: group.members.clone(),
            domain: head.domain.clone(),
            subject: head.subject.clone(),
            market_signal: format!("{} {} ({:+})", head.subject, head.predicate, polarity),
            polarity,
            source: group
                .reports
                .iter()
                .map(|r| {
                    batch
                        .report_sources
                        .get(r - 1)
                        .cloned()
                        .unwrap_or_else(|| format!("report-{r}"))
                })
                .collect(),
            consistency: group.supp,
            cohesion: group.coh,
            score: group.score,
            confidence: if demotion.is_none() {
                ConfidenceLevel::High
            } else {
                ConfidenceLevel::Low
            },
            demotion,
        };
        if digest.confidence == ConfidenceLevel::High {
            summary.high_confidence.push(digest);
        } else {
            summary.low_confidence.push(digest);
        }
    }
    summary.leakage_flags.sort_by_key(|f| f.claim_id);
    summary
}

/// Everything the deterministic scorer produced for one batch of reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusOutcome {
    pub summary: EvidenceSummary,
    pub groups: Vec<ConsensusGroup>,
    pub batch: ClaimBatch,
    pub rejected: Vec<RejectedClaim>,
}

/// A report as seen by the scorer: source label, domain and body text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportInput {
    pub source: String,
    pub domain: InfoDomain,
    pub body: String,
}

/// Extraction, embedding, grouping, scoring and partitioning in one pass.
pub fn run_consensus(
    reports: &[ReportInput],
    extractor: &dyn ClaimExtractor,
    embedder: &dyn Embedder,
    params: &ConsensusParams,
    cutoff: DateTime<Utc>,
) -> Result<ConsensusOutcome> {
    if reports.is_empty() {
        return Err(Error::Precondition("consensus needs at least one report".into()));
    }
    params.validate()?;
    let mut per_report = Vec::with_capacity(reports.len());
    let mut rejected = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let ex = normalize_claims(&r.body, i + 1, r.domain.clone(), extractor)?;
        rejected.extend(ex.rejected);
        per_report.push((r.source.clone(), ex.claims));
    }
    let batch = ClaimBatch::from_reports(per_report);
    let embeddings = batch.embed(embedder);
    let similarities = SimilarityMatrix::compute(&batch.claims, &embeddings, params);
    let groups: Vec<ConsensusGroup> = build_consensus_groups(&batch.claims, &similarities, params)
        .iter()
        .map(|g| score_group(g, batch.report_count(), &similarities, params))
        .collect();
    let summary = partition_evidence(&groups, &batch, cutoff, params);
    Ok(ConsensusOutcome {
        summary,
        groups,
        batch,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    fn claim(report_id: usize, subject: &str, predicate: &str, polarity: i8) -> Claim {
        Claim {
            report_id,
            domain: InfoDomain::Market,
            subject: subject.into(),
            predicate: predicate.into(),
            polarity,
            value: None,
            as_of: ts("2024-03-01"),
            text: String::new(),
        }
    }

    #[test]
    fn grammar_maps_fields() {
        let c = parse_claim_line(
            "- market | AAPL | 10d-MA-above-30d-MA | +1 | | 2024-03-01",
            1,
            InfoDomain::Market,
        )
        .unwrap()
        .unwrap();
        assert_eq!(c.polarity, 1);
        assert_eq!(c.value, None);
        assert_eq!(c.subject, "AAPL");
        assert_eq!(c.as_of, ts("2024-03-01T00:00:00Z"));

        let v = parse_claim_line(
            "fundamentals | AAPL | eps-beat | +1 | value=1.85 EPS | 2024-03-01",
            2,
            InfoDomain::Fundamentals,
        )
        .unwrap()
        .unwrap();
        assert_eq!(
            v.value,
            Some(ClaimValue {
                amount: 1.85,
                unit: "EPS".into()
            })
        );
    }

    #[test]
    fn prose_is_skipped_and_bad_lines_rejected() {
        let body = "Summary of the day\nmarket | AAPL | up | +2 | | 2024-03-01\nmarket | AAPL | up | +1 | | 2024-03-01\n";
        let ex = normalize_claims(body, 1, InfoDomain::Market, &GrammarExtractor).unwrap();
        assert_eq!(ex.claims.len(), 1);
        assert_eq!(ex.rejected.len(), 1);
        assert_eq!(ex.rejected[0].line_no, 2);
    }

    #[test]
    fn domain_mismatch_is_rejected() {
        assert!(parse_claim_line("news | A | b | 0 | | 2024-01-01", 1, InfoDomain::Market).is_err());
    }

    #[test]
    fn empty_report_is_an_error() {
        assert!(matches!(
            normalize_claims("  ", 3, InfoDomain::News, &GrammarExtractor),
            Err(Error::Extraction { report_id: 3, .. })
        ));
    }

    #[test]
    fn identical_claims_have_similarity_one() {
        let mut c = claim(1, "AAPL", "eps", 1);
        c.value = Some(ClaimValue {
            amount: 2.0,
            unit: "EPS".into(),
        });
        let e = HashEmbedder::default().embed(&c);
        for lambda in [0.0, 0.3, 1.0] {
            let p = ConsensusParams {
                lambda,
                ..Default::default()
            };
            assert!((hybrid_similarity(&c, &e, &c, &e, &p) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn opposite_polarity_stays_above_tau() {
        let emb = HashEmbedder::default();
        let a = claim(1, "AAPL", "revenue-growth", 1);
        let b = claim(2, "AAPL", "revenue-growth", -1);
        let s = cosine(&emb.embed(&a), &emb.embed(&b));
        assert!(s >= ConsensusParams::default().tau, "{s}");
    }

    #[test]
    fn singleton_scoring_convention() {
        let m = SimilarityMatrix::from_fn(1, |_, _| unreachable!());
        let g = ClaimGroup {
            members: vec![0],
            reports: vec![1],
        };
        let p = ConsensusParams::default();
        let s = score_group(&g, 4, &m, &p);
        assert_eq!(s.supp, 0.25);
        assert_eq!(s.coh, 0.0);
        assert_eq!(s.score, 0.25 * p.alpha);
    }

    #[test]
    fn same_report_claims_never_link() {
        let claims = vec![claim(1, "A", "x", 1), claim(1, "A", "x", 1)];
        let m = SimilarityMatrix::from_fn(2, |_, _| 1.0);
        let groups = build_consensus_groups(&claims, &m, &ConsensusParams::default());
        assert_eq!(groups.len(), 2);
    }
}
