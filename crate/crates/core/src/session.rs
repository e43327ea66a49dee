//! Human-session records and their versioned key-value storage.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestration::{StageId, TRADE_SIZES};
use crate::signals::Action;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionKind {
    SessionExport,
    PortfolioState,
    ProgressMarker,
}

impl SessionKind {
    pub const ALL: [SessionKind; 3] = [
        SessionKind::SessionExport,
        SessionKind::PortfolioState,
        SessionKind::ProgressMarker,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SessionKind::SessionExport => "session-export",
            SessionKind::PortfolioState => "portfolio-state",
            SessionKind::ProgressMarker => "progress-marker",
        }
    }
}

impl fmt::Display for SessionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SessionKind {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, SessionError> {
        SessionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SessionError::BadKey(format!("unknown session kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionKey {
    pub user_id: String,
    pub ticker: String,
    pub kind: SessionKind,
}

fn check_segment(what: &str, s: &str) -> Result<(), SessionError> {
    let ok = !s.is_empty()
        && s.len() <= 128
        && s != "."
        && s != ".."
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(SessionError::BadKey(format!(
            "{what} `{s}` must be 1-128 characters of [A-Za-z0-9._-]"
        )))
    }
}

impl SessionKey {
    pub fn new(user_id: &str, ticker: &str, kind: SessionKind) -> Result<Self, SessionError> {
        check_segment("user id", user_id)?;
        check_segment("ticker", ticker)?;
        Ok(Self {
            user_id: user_id.into(),
            ticker: ticker.into(),
            kind,
        })
    }

    /// `sessions/{user}/{ticker}/{kind}`
    pub fn path(&self) -> String {
        format!("sessions/{}/{}/{}", self.user_id, self.ticker, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demographics {
    pub education: String,
    pub finance_experience: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageEntry {
    pub stage: StageId,
    pub action: Action,
    pub reliability: u8,
    pub rationale: String,
    /// Whether model-generated decisions were visible; stages d1-d4 only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leakage_flag: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_on_stage_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalExtras {
    pub most_influential: String,
    pub most_reliable: String,
    pub trade_size: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DayRecord {
    pub day: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    pub stages: Vec<StageEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_extras: Option<FinalExtras>,
}

impl DayRecord {
    pub fn is_final(&self) -> bool {
        self.stages.last().is_some_and(|s| s.stage == StageId::Final)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioState {
    pub schema_version: u32,
    pub user_id: String,
    pub ticker: String,
    pub day: u32,
    pub cash: f64,
    pub shares: u64,
    pub last_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgressMarker {
    pub schema_version: u32,
    pub user_id: String,
    pub ticker: String,
    pub day: u32,
    pub stage: StageId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanSession {
    pub schema_version: u32,
    pub user_id: String,
    pub demographics: Demographics,
    pub ticker: String,
    pub current_day: u32,
    pub days: Vec<DayRecord>,
    pub portfolio: PortfolioState,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("invalid body at `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("invalid key: {0}")]
    BadKey(String),
    #[error("not found")]
    NotFound,
    #[error("day {day} is finalized and cannot be changed")]
    Locked { day: u32 },
    #[error("storage failure: {0}")]
    Storage(String),
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> SessionError {
    SessionError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, SessionError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        invalid(if path == "." { "$".into() } else { path }, e.into_inner().to_string())
    })
}

fn check_owner(key: &SessionKey, schema: u32, user: &str, ticker: &str) -> Result<(), SessionError> {
    if schema != SCHEMA_VERSION {
        return Err(invalid("schema_version", format!("unsupported version {schema}")));
    }
    if user != key.user_id {
        return Err(invalid("user_id", format!("`{user}` does not match key user `{}`", key.user_id)));
    }
    if ticker != key.ticker {
        return Err(invalid("ticker", format!("`{ticker}` does not match key ticker `{}`", key.ticker)));
    }
    Ok(())
}

/// Stage order, field ranges and final-stage extras of one day.
pub fn validate_day(day: &DayRecord, path: &str) -> Result<(), SessionError> {
    if day.stages.is_empty() {
        return Err(invalid(format!("{path}.stages"), "a day needs at least stage d0"));
    }
    if day.stages.len() > StageId::ALL.len() {
        return Err(invalid(format!("{path}.stages"), "more than six stages"));
    }
    for (i, entry) in day.stages.iter().enumerate() {
        let p = format!("{path}.stages[{i}]");
        let expected = StageId::ALL[i];
        if entry.stage != expected {
            return Err(invalid(
                format!("{p}.stage"),
                format!("stage order violation: expected {expected}, found {}", entry.stage),
            ));
        }
        if !(1..=100).contains(&entry.reliability) {
            return Err(invalid(format!("{p}.reliability"), format!("{} outside 1..=100", entry.reliability)));
        }
        let needs_flag = matches!(entry.stage, StageId::D1 | StageId::D2 | StageId::D3 | StageId::D4);
        match (needs_flag, entry.leakage_flag.is_some()) {
            (true, false) => return Err(invalid(format!("{p}.leakage_flag"), "required on stages d1-d4")),
            (false, true) => return Err(invalid(format!("{p}.leakage_flag"), "only allowed on stages d1-d4")),
            _ => {}
        }
    }
    match (&day.final_extras, day.is_final()) {
        (Some(extras), true) => {
            if !TRADE_SIZES[1..].contains(&extras.trade_size) {
                return Err(invalid(
                    format!("{path}.final_extras.trade_size"),
                    format!("{} not in {{25, 50, 75, 100}}", extras.trade_size),
                ));
            }
            if extras.most_influential.trim().is_empty() {
                return Err(invalid(format!("{path}.final_extras.most_influential"), "required"));
            }
            if extras.most_reliable.trim().is_empty() {
                return Err(invalid(format!("{path}.final_extras.most_reliable"), "required"));
            }
        }
        (None, true) => return Err(invalid(format!("{path}.final_extras"), "required once the final stage is submitted")),
        (Some(_), false) => return Err(invalid(format!("{path}.final_extras"), "only allowed with the final stage")),
        (None, false) => {}
    }
    Ok(())
}

fn validate_portfolio(p: &PortfolioState, path: &str) -> Result<(), SessionError> {
    if !(p.cash.is_finite() && p.cash >= 0.0) {
        return Err(invalid(format!("{path}cash"), "must be finite and non-negative"));
    }
    if !(p.last_price.is_finite() && p.last_price >= 0.0) {
        return Err(invalid(format!("{path}last_price"), "must be finite and non-negative"));
    }
    Ok(())
}

pub fn validate_session(key: &SessionKey, s: &HumanSession) -> Result<(), SessionError> {
    check_owner(key, s.schema_version, &s.user_id, &s.ticker)?;
    for (i, day) in s.days.iter().enumerate() {
        let path = format!("days[{i}]");
        if i > 0 && day.day <= s.days[i - 1].day {
            return Err(invalid(format!("{path}.day"), "day indices must strictly increase"));
        }
        if i + 1 < s.days.len() && !day.is_final() {
            return Err(invalid(format!("{path}.stages"), "only the last day may be incomplete"));
        }
        validate_day(day, &path)?;
    }
    check_owner(key, s.portfolio.schema_version, &s.portfolio.user_id, &s.portfolio.ticker)
        .map_err(|e| match e {
            SessionError::Invalid { path, message } => invalid(format!("portfolio.{path}"), message),
            other => other,
        })?;
    validate_portfolio(&s.portfolio, "portfolio.")
}

/// Parses and validates `body` as the record type for `key.kind`.
pub fn validate_body(key: &SessionKey, body: &[u8]) -> Result<(), SessionError> {
    match key.kind {
        SessionKind::SessionExport => validate_session(key, &parse::<HumanSession>(body)?),
        SessionKind::PortfolioState => {
            let p: PortfolioState = parse(body)?;
            check_owner(key, p.schema_version, &p.user_id, &p.ticker)?;
            validate_portfolio(&p, "")
        }
        SessionKind::ProgressMarker => {
            let m: ProgressMarker = parse(body)?;
            check_owner(key, m.schema_version, &m.user_id, &m.ticker)
        }
    }
}

/// Raw versioned storage. Versions start at 1 and are never overwritten.
pub trait KvBackend: Send + Sync {
    fn versions(&self, key: &SessionKey) -> Result<Vec<u32>, SessionError>;
    fn read(&self, key: &SessionKey, version: u32) -> Result<Option<Vec<u8>>, SessionError>;
    fn write(&self, key: &SessionKey, version: u32, body: &[u8]) -> Result<(), SessionError>;
}

#[derive(Debug, Default)]
pub struct MemoryBackend {
    data: Mutex<BTreeMap<(SessionKey, u32), Vec<u8>>>,
}

impl KvBackend for MemoryBackend {
    fn versions(&self, key: &SessionKey) -> Result<Vec<u32>, SessionError> {
        let data = self.data.lock().expect("backend lock");
        Ok(data.keys().filter(|(k, _)| k == key).map(|(_, v)| *v).collect())
    }

    fn read(&self, key: &SessionKey, version: u32) -> Result<Option<Vec<u8>>, SessionError> {
        Ok(self.data.lock().expect("backend lock").get(&(key.clone(), version)).cloned())
    }

    fn write(&self, key: &SessionKey, version: u32, body: &[u8]) -> Result<(), SessionError> {
        let mut data = self.data.lock().expect("backend lock");
        if data.contains_key(&(key.clone(), version)) {
            return Err(SessionError::Storage(format!("{} v{version} already exists", key.path())));
        }
        data.insert((key.clone(), version), body.to_vec());
        Ok(())
    }
}

/// Files under `{root}/sessions/{user}/{ticker}/{kind}/v{n}.json`.
#[derive(Debug, Clone)]
pub struct FsBackend {
    root: PathBuf,
}

impl FsBackend {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn dir(&self, key: &SessionKey) -> PathBuf {
        self.root.join(key.path())
    }
}

fn storage(e: std::io::Error) -> SessionError {
    SessionError::Storage(e.to_string())
}

fn version_of(path: &Path) -> Option<u32> {
    path.file_name()?
        .to_str()?
        .strip_prefix('v')?
        .strip_suffix(".json")?
        .parse()
        .ok()
}

impl KvBackend for FsBackend {
    fn versions(&self, key: &SessionKey) -> Result<Vec<u32>, SessionError> {
        let dir = self.dir(key);
        let entries = match std::fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(storage(e)),
        };
        let mut versions = Vec::new();
        for entry in entries {
            if let Some(v) = version_of(&entry.map_err(storage)?.path()) {
                versions.push(v);
            }
        }
        versions.sort_unstable();
        Ok(versions)
    }

    fn read(&self, key: &SessionKey, version: u32) -> Result<Option<Vec<u8>>, SessionError> {
        match std::fs::read(self.dir(key).join(format!("v{version}.json"))) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(storage(e)),
        }
    }

    fn write(&self, key: &SessionKey, version: u32, body: &[u8]) -> Result<(), SessionError> {
        let dir = self.dir(key);
        std::fs::create_dir_all(&dir).map_err(storage)?;
        let tmp = dir.join(format!(".v{version}.json.tmp"));
        std::fs::write(&tmp, body).map_err(storage)?;
        let target = dir.join(format!("v{version}.json"));
        if target.exists() {
            let _ = std::fs::remove_file(&tmp);
            return Err(SessionError::Storage(format!("{} v{version} already exists", key.path())));
        }
        std::fs::rename(&tmp, &target).map_err(storage)
    }
}

/// Validating, versioning store with writes serialized per key.
pub struct SessionStore {
    backend: Arc<dyn KvBackend>,
    locks: Mutex<HashMap<SessionKey, Arc<tokio::sync::Mutex<()>>>>,
}

impl SessionStore {
    pub fn new(backend: Arc<dyn KvBackend>) -> Self {
        Self {
            backend,
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn in_memory() -> Self {
        Self::new(Arc::new(MemoryBackend::default()))
    }

    pub fn on_disk(root: impl Into<PathBuf>) -> Self {
        Self::new(Arc::new(FsBackend::new(root)))
    }

    fn lock_for(&self, key: &SessionKey) -> Arc<tokio::sync::Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table")
            .entry(key.clone())
            .or_default()
            .clone()
    }

    pub fn versions(&self, key: &SessionKey) -> Result<Vec<u32>, SessionError> {
        self.backend.versions(key)
    }

    /// Validates and stores `body` verbatim; returns its version.
    pub async fn put(&self, key: &SessionKey, body: &[u8]) -> Result<u32, SessionError> {
        validate_body(key, body)?;
        let lock = self.lock_for(key);
        let _guard = lock.lock().await;
        let latest = self.backend.versions(key)?.into_iter().max();
        if let (SessionKind::SessionExport, Some(v)) = (key.kind, latest) {
            if let Some(prev) = self.backend.read(key, v)? {
                check_locked_days(&prev, body)?;
            }
        }
        let version = latest.unwrap_or(0) + 1;
        self.backend.write(key, version, body)?;
        Ok(version)
    }

    /// Latest version unless `version` is given.
    pub async fn get(&self, key: &SessionKey, version: Option<u32>) -> Result<(u32, Vec<u8>), SessionError> {
        let version = match version {
            Some(v) => v,
            None => self.backend.versions(key)?.into_iter().max().ok_or(SessionError::NotFound)?,
        };
        self.backend
            .read(key, version)?
            .map(|b| (version, b))
            .ok_or(SessionError::NotFound)
    }
}

/// Days finalized in the previous version must reappear unchanged.
fn check_locked_days(prev: &[u8], next: &[u8]) -> Result<(), SessionError> {
    let Ok(prev) = serde_json::from_slice::<HumanSession>(prev) else {
        return Ok(());
    };
    let next: HumanSession = parse(next)?;
    for day in prev.days.iter().filter(|d| d.is_final()) {
        if next.days.iter().find(|d| d.day == day.day) != Some(day) {
            return Err(SessionError::Locked { day: day.day });
        }
    }
    Ok(())
}
