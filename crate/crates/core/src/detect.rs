//! Session classification against a trained [`MappingModel`].
//!
//! Rules, applied in order to one session:
//!
//! 1. A request with a mapping `r -> Q` needs every query of `Q` in the
//!    session; present members of `Q` are marked either way.
//! 2. Empty-query requests are accepted and mark nothing.
//! 3. Remaining unmarked queries that belong to NMR are marked.
//! 4. Any request not covered by rules 1-2 and any query still unmarked is a
//!    violation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::model::MappingModel;
use crate::normalize::{HttpRequestKey, SqlQueryKey};
use crate::traffic::{AttackKind, SessionTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingMappedQuery,
    UnknownRequest,
    UnmarkedQuery,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A mapped request ran without (all of) its causal queries.
    MissingMappedQuery {
        request: HttpRequestKey,
        expected: BTreeSet<SqlQueryKey>,
    },
    /// A request that is neither mapped nor an empty-query request.
    UnknownRequest(HttpRequestKey),
    /// A query no rule accounted for.
    UnmarkedQuery(SqlQueryKey),
}

impl Violation {
    pub fn kind(&self) -> ViolationKind {
        match self {
            Violation::MissingMappedQuery { .. } => ViolationKind::MissingMappedQuery,
            Violation::UnknownRequest(_) => ViolationKind::UnknownRequest,
            Violation::UnmarkedQuery(_) => ViolationKind::UnmarkedQuery,
        }
    }

    pub fn subject(&self) -> String {
        match self {
            Violation::MissingMappedQuery { request, .. } | Violation::UnknownRequest(request) => {
                request.to_string()
            }
            Violation::UnmarkedQuery(query) => query.to_string(),
        }
    }

    pub fn expected(&self) -> Option<&BTreeSet<SqlQueryKey>> {
        match self {
            Violation::MissingMappedQuery { expected, .. } => Some(expected),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Benign,
    Suspicious,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionVerdict {
    pub session_id: String,
    pub status: Status,
    pub violations: Vec<Violation>,
    /// Heuristic; never affects `status`.
    pub attack_hint: Option<AttackKind>,
}

impl SessionVerdict {
    pub fn is_suspicious(&self) -> bool {
        self.status == Status::Suspicious
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub sessions: usize,
    pub benign: usize,
    pub suspicious: usize,
    pub missing_mapped_query: usize,
    pub unknown_request: usize,
    pub unmarked_query: usize,
}

impl Totals {
    pub fn from_verdicts(verdicts: &[SessionVerdict]) -> Self {
        let mut totals = Totals {
            sessions: verdicts.len(),
            ..Totals::default()
        };
        for verdict in verdicts {
            match verdict.status {
                Status::Benign => totals.benign += 1,
                Status::Suspicious => totals.suspicious += 1,
            }
            for violation in &verdict.violations {
                match violation.kind() {
                    ViolationKind::MissingMappedQuery => totals.missing_mapped_query += 1,
                    ViolationKind::UnknownRequest => totals.unknown_request += 1,
                    ViolationKind::UnmarkedQuery => totals.unmarked_query += 1,
                }
            }
        }
        totals
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionReport {
    pub verdicts: Vec<SessionVerdict>,
    pub totals: Totals,
}

pub fn detect_session(model: &MappingModel, trace: &SessionTrace) -> SessionVerdict {
    let present = trace.query_set();
    let mut marked: BTreeSet<&SqlQueryKey> = BTreeSet::new();
    let mut violations = Vec::new();

    for r in trace.distinct_requests() {
        match model.mapped_queries(r) {
            Some(expected) if !expected.is_empty() => {
                let mut complete = true;
                for q in expected {
                    if present.contains(q) {
                        marked.insert(q);
                    } else {
                        complete = false;
                    }
                }
                if !complete {
                    violations.push(Violation::MissingMappedQuery {
                        request: r.clone(),
                        expected: expected.clone(),
                    });
                }
            }
            _ if model.is_empty_query_request(r) => {}
            _ => violations.push(Violation::UnknownRequest(r.clone())),
        }
    }

    for q in trace.distinct_queries() {
        if marked.contains(q) || model.nmr().contains(q) {
            continue;
        }
        violations.push(Violation::UnmarkedQuery(q.clone()));
    }

    let attack_hint = classify_hint(&violations, trace, model);
    SessionVerdict {
        session_id: trace.session_id.clone(),
        status: if violations.is_empty() {
            Status::Benign
        } else {
            Status::Suspicious
        },
        violations,
        attack_hint,
    }
}

pub fn detect_all(model: &MappingModel, traces: &[SessionTrace]) -> DetectionReport {
    let verdicts: Vec<SessionVerdict> = traces.iter().map(|t| detect_session(model, t)).collect();
    let totals = Totals::from_verdicts(&verdicts);
    DetectionReport { verdicts, totals }
}

fn hint_rank(kind: AttackKind) -> u8 {
    match kind {
        AttackKind::DirectDb => 3,
        AttackKind::SqlInjection => 2,
        AttackKind::PrivilegeEscalation => 1,
        AttackKind::HijackSession => 0,
    }
}

/// Labels a violation list with the most likely attack class.
///
/// Precedence when several apply: DirectDb, SqlInjection,
/// PrivilegeEscalation, HijackSession. Unknown requests contribute no hint.
pub fn classify_hint(
    violations: &[Violation],
    trace: &SessionTrace,
    model: &MappingModel,
) -> Option<AttackKind> {
    let unknown_requests = violations
        .iter()
        .filter(|v| v.kind() == ViolationKind::UnknownRequest)
        .count();
    let has_dynamic_request = trace.http.iter().any(|e| !model.is_static_request(&e.key));

    violations
        .iter()
        .filter_map(|v| match v {
            Violation::MissingMappedQuery { .. } => Some(AttackKind::HijackSession),
            Violation::UnknownRequest(_) => None,
            Violation::UnmarkedQuery(q) if model.queries().contains(q) => {
                Some(AttackKind::PrivilegeEscalation)
            }
            Violation::UnmarkedQuery(_) if unknown_requests > 0 => None,
            Violation::UnmarkedQuery(_) if has_dynamic_request => Some(AttackKind::SqlInjection),
            Violation::UnmarkedQuery(_) => Some(AttackKind::DirectDb),
        })
        .max_by_key(|k| hint_rank(*k))
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct AttackLogLine {
    pub session_id: String,
    pub violation: ViolationKind,
    pub subject: String,
    pub hint: Option<AttackKind>,
    pub detail: Option<Vec<String>>,
}

/// One JSON line per violation of every suspicious session, in report order.
pub fn write_attack_log<W: Write>(report: &DetectionReport, mut sink: W) -> io::Result<()> {
    for verdict in report.verdicts.iter().filter(|v| v.is_suspicious()) {
        for violation in &verdict.violations {
            let line = AttackLogLine {
                session_id: verdict.session_id.clone(),
                violation: violation.kind(),
                subject: violation.subject(),
                hint: verdict.attack_hint,
                detail: violation
                    .expected()
                    .map(|qs| qs.iter().map(ToString::to_string).collect()),
            };
            serde_json::to_writer(&mut sink, &line)?;
            sink.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub kind: ViolationKind,
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub session_id: String,
    pub status: Status,
    pub hint: Option<AttackKind>,
    pub violations: Vec<ViolationRecord>,
}

/// Machine-readable detection report written next to the attack log.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReportDocument {
    pub totals: Totals,
    pub verdicts: Vec<VerdictRecord>,
}

impl ReportDocument {
    pub fn from_report(report: &DetectionReport) -> Self {
        let verdicts = report
            .verdicts
            .iter()
            .map(|v| VerdictRecord {
                session_id: v.session_id.clone(),
                status: v.status,
                hint: v.attack_hint,
                violations: v
                    .violations
                    .iter()
                    .map(|violation| ViolationRecord {
                        kind: violation.kind(),
                        subject: violation.subject(),
                        expected: violation
                            .expected()
                            .map(|qs| qs.iter().map(ToString::to_string).collect()),
                    })
                    .collect(),
            })
            .collect();
        Self {
            totals: report.totals,
            verdicts,
        }
    }

    pub fn statuses(&self) -> BTreeMap<&str, (Status, Option<AttackKind>)> {
        self.verdicts
            .iter()
            .map(|v| (v.session_id.as_str(), (v.status, v.hint)))
            .collect()
    }
}
