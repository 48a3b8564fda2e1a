//! Traffic data model and the line-oriented JSON wire format.
//!
//! Each non-empty line is one event:
//!
//! ```text
//! {"session_id":"sim-0001","seq":0,"kind":"http","payload":"GET /home","label":"benign"}
//! ```
//!
//! `label` is only written by the simulator.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::TrafficError;
use crate::normalize::{normalize_http, normalize_sql, HttpRequestKey, SqlQueryKey, StaticExtensions};

const FIELDS: [&str; 5] = ["session_id", "seq", "kind", "payload", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Http,
    Sql,
}

/// The four corruption classes the simulator injects and the detector hints at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    DirectDb,
    SqlInjection,
    PrivilegeEscalation,
    HijackSession,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [
        AttackKind::DirectDb,
        AttackKind::SqlInjection,
        AttackKind::PrivilegeEscalation,
        AttackKind::HijackSession,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::DirectDb => "direct_db",
            AttackKind::SqlInjection => "sql_injection",
            AttackKind::PrivilegeEscalation => "privilege_escalation",
            AttackKind::HijackSession => "hijack_session",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase().replace('-', "_");
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == wanted)
            .ok_or_else(|| format!("unknown attack kind {s:?}"))
    }
}

/// Ground-truth tag carried by simulated traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Benign,
    DirectDb,
    SqlInjection,
    PrivilegeEscalation,
    HijackSession,
}

impl Label {
    pub fn attack(self) -> Option<AttackKind> {
        match self {
            Label::Benign => None,
            Label::DirectDb => Some(AttackKind::DirectDb),
            Label::SqlInjection => Some(AttackKind::SqlInjection),
            Label::PrivilegeEscalation => Some(AttackKind::PrivilegeEscalation),
            Label::HijackSession => Some(AttackKind::HijackSession),
        }
    }
}

impl From<AttackKind> for Label {
    fn from(kind: AttackKind) -> Self {
        match kind {
            AttackKind::DirectDb => Label::DirectDb,
            AttackKind::SqlInjection => Label::SqlInjection,
            AttackKind::PrivilegeEscalation => Label::PrivilegeEscalation,
            AttackKind::HijackSession => Label::HijackSession,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficEvent {
    pub session_id: String,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl TrafficEvent {
    pub fn http(session_id: impl Into<String>, seq: u64, payload: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            seq,
            kind: EventKind::Http,
            payload: payload.into(),
            label: None,
        }
    }

    pub fn sql(session_id: impl Into<String>, seq: u64, payload: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            seq,
            kind: EventKind::Sql,
            payload: payload.into(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort on the first malformed line; unknown fields are malformed.
    #[default]
    Strict,
    /// Skip malformed lines, collecting one error per line; unknown fields are ignored.
    Lenient,
}

#[derive(Debug, Default)]
pub struct ParsedLog {
    pub events: Vec<TrafficEvent>,
    /// Always empty in strict mode.
    pub rejected: Vec<TrafficError>,
}

pub fn parse_traffic_log<R: BufRead>(reader: R, mode: ParseMode) -> Result<ParsedLog, TrafficError> {
    let mut parsed = ParsedLog::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line, mode) {
            Ok(event) => parsed.events.push(event),
            Err(cause) => {
                let err = TrafficError::MalformedRecord {
                    line_no: idx + 1,
                    cause,
                };
                match mode {
                    ParseMode::Strict => return Err(err),
                    ParseMode::Lenient => parsed.rejected.push(err),
                }
            }
        }
    }
    Ok(parsed)
}

pub fn parse_traffic_str(text: &str, mode: ParseMode) -> Result<ParsedLog, TrafficError> {
    parse_traffic_log(text.as_bytes(), mode)
}

fn parse_record(line: &str, mode: ParseMode) -> Result<TrafficEvent, String> {
    match mode {
        ParseMode::Lenient => serde_json::from_str(line).map_err(|e| e.to_string()),
        ParseMode::Strict => {
            let object: serde_json::Map<String, serde_json::Value> =
                serde_json::from_str(line).map_err(|e| e.to_string())?;
            if let Some(unknown) = object.keys().find(|k| !FIELDS.contains(&k.as_str())) {
                return Err(format!("unknown field `{unknown}`"));
            }
            serde_json::from_value(serde_json::Value::Object(object)).map_err(|e| e.to_string())
        }
    }
}

/// Inverse of [`parse_traffic_log`]: one JSON object per line, LF-terminated.
pub fn render_traffic_log<W: Write>(events: &[TrafficEvent], mut sink: W) -> io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut sink, event)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

pub fn render_traffic_string(events: &[TrafficEvent]) -> String {
    let mut buf = Vec::new();
    render_traffic_log(events, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpEvent {
    pub seq: u64,
    pub key: HttpRequestKey,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SqlEvent {
    pub seq: u64,
    pub key: SqlQueryKey,
    pub raw: String,
}

/// All events of one session, split by tier and ordered by `seq`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionTrace {
    pub session_id: String,
    /// First non-benign label seen in the session, else `Benign` if any event was labeled.
    pub label: Option<Label>,
    pub http: Vec<HttpEvent>,
    pub sql: Vec<SqlEvent>,
}

impl SessionTrace {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            label: None,
            http: Vec::new(),
            sql: Vec::new(),
        }
    }

    /// Builder used heavily in tests: raw payloads are normalized on the way in.
    pub fn with_request(mut self, raw: &str) -> Result<Self, TrafficError> {
        let (key, _) = normalize_http(raw, &StaticExtensions::default())?;
        let seq = self.next_seq();
        self.http.push(HttpEvent {
            seq,
            key,
            raw: raw.to_string(),
        });
        Ok(self)
    }

    pub fn with_query(mut self, raw: &str) -> Self {
        let seq = self.next_seq();
        self.sql.push(SqlEvent {
            seq,
            key: normalize_sql(raw),
            raw: raw.to_string(),
        });
        self
    }

    fn next_seq(&self) -> u64 {
        let last_http = self.http.last().map(|e| e.seq + 1).unwrap_or(0);
        let last_sql = self.sql.last().map(|e| e.seq + 1).unwrap_or(0);
        last_http.max(last_sql)
    }

    /// Distinct request keys in order of first appearance.
    pub fn distinct_requests(&self) -> Vec<&HttpRequestKey> {
        let mut seen = HashSet::new();
        self.http
            .iter()
            .map(|e| &e.key)
            .filter(|k| seen.insert(*k))
            .collect()
    }

    /// Distinct query keys in order of first appearance.
    pub fn distinct_queries(&self) -> Vec<&SqlQueryKey> {
        let mut seen = HashSet::new();
        self.sql
            .iter()
            .map(|e| &e.key)
            .filter(|k| seen.insert(*k))
            .collect()
    }

    pub fn query_set(&self) -> BTreeSet<&SqlQueryKey> {
        self.sql.iter().map(|e| &e.key).collect()
    }

    pub fn event_count(&self) -> usize {
        self.http.len() + self.sql.len()
    }
}

/// Splits events into per-session traces, normalizing every payload.
///
/// Traces come out in order of first appearance, events inside a trace in
/// `seq` order.
pub fn group_by_session(events: &[TrafficEvent]) -> Result<Vec<SessionTrace>, TrafficError> {
    let exts = StaticExtensions::default();
    let mut order: Vec<&str> = Vec::new();
    let mut buckets: HashMap<&str, Vec<&TrafficEvent>> = HashMap::new();
    for event in events {
        let bucket = buckets.entry(event.session_id.as_str()).or_insert_with(|| {
            order.push(event.session_id.as_str());
            Vec::new()
        });
        bucket.push(event);
    }

    let mut traces = Vec::with_capacity(order.len());
    for session_id in order {
        let mut bucket = buckets.remove(session_id).unwrap_or_default();
        bucket.sort_by_key(|e| e.seq);
        if let Some(pair) = bucket.windows(2).find(|w| w[0].seq == w[1].seq) {
            return Err(TrafficError::DuplicateSeq {
                session_id: session_id.to_string(),
                seq: pair[0].seq,
            });
        }

        let mut trace = SessionTrace::new(session_id);
        for event in bucket {
            trace.label = merge_label(trace.label, event.label);
            match event.kind {
                EventKind::Http => {
                    let (key, _) = normalize_http(&event.payload, &exts)?;
                    trace.http.push(HttpEvent {
                        seq: event.seq,
                        key,
                        raw: event.payload.clone(),
                    });
                }
                EventKind::Sql => trace.sql.push(SqlEvent {
                    seq: event.seq,
                    key: normalize_sql(&event.payload),
                    raw: event.payload.clone(),
                }),
            }
        }
        traces.push(trace);
    }
    Ok(traces)
}

fn merge_label(current: Option<Label>, next: Option<Label>) -> Option<Label> {
    match (current, next) {
        (Some(Label::Benign), Some(next)) | (None, Some(next)) => Some(next),
        (current, _) => current,
    }
}
