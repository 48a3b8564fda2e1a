//! Scoring detection verdicts against simulator ground truth.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::detect::Status;
use crate::traffic::{AttackKind, Label, TrafficEvent};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("session {0:?} has events without a ground-truth label")]
    Unlabeled(String),
    #[error("report has no verdict for session {0:?}")]
    MissingVerdict(String),
}

/// Per-session ground truth in order of first appearance.
pub fn session_labels(events: &[TrafficEvent]) -> Result<Vec<(String, Label)>, EvalError> {
    let mut order: Vec<(String, Label)> = Vec::new();
    let mut position: BTreeMap<&str, usize> = BTreeMap::new();
    for event in events {
        let label = event
            .label
            .ok_or_else(|| EvalError::Unlabeled(event.session_id.clone()))?;
        match position.get(event.session_id.as_str()) {
            Some(&i) => {
                if order[i].1 == Label::Benign {
                    order[i].1 = label;
                }
            }
            None => {
                position.insert(event.session_id.as_str(), order.len());
                order.push((event.session_id.clone(), label));
            }
        }
    }
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_negative: usize,
    pub false_positive: usize,
    pub true_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackMetrics {
    pub sessions: usize,
    pub detected: usize,
    /// `None` when no session carries this label.
    pub detection_rate: Option<f64>,
    pub hint_correct: usize,
    pub hint_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub sessions: usize,
    pub confusion: Confusion,
    pub detection_rate: Option<f64>,
    pub false_positive_rate: Option<f64>,
    pub per_attack: BTreeMap<AttackKind, AttackMetrics>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Joins verdicts to labels by session id. A session counts as detected iff
/// its verdict is suspicious; hints are scored separately.
pub fn evaluate(
    labels: &[(String, Label)],
    verdicts: &BTreeMap<&str, (Status, Option<AttackKind>)>,
) -> Result<Metrics, EvalError> {
    let mut confusion = Confusion::default();
    let mut per_kind: BTreeMap<AttackKind, (usize, usize, usize)> = BTreeMap::new();
    for (session_id, label) in labels {
        let (status, hint) = verdicts
            .get(session_id.as_str())
            .copied()
            .ok_or_else(|| EvalError::MissingVerdict(session_id.clone()))?;
        let flagged = status == Status::Suspicious;
        match label.attack() {
            None if flagged => confusion.false_positive += 1,
            None => confusion.true_negative += 1,
            Some(kind) => {
                let entry = per_kind.entry(kind).or_default();
                entry.0 += 1;
                if flagged {
                    confusion.true_positive += 1;
                    entry.1 += 1;
                } else {
                    confusion.false_negative += 1;
                }
                if hint == Some(kind) {
                    entry.2 += 1;
                }
            }
        }
    }

    let per_attack = per_kind
        .into_iter()
        .map(|(kind, (sessions, detected, hint_correct))| {
            (
                kind,
                AttackMetrics {
                    sessions,
                    detected,
                    detection_rate: ratio(detected, sessions),
                    hint_correct,
                    hint_accuracy: ratio(hint_correct, sessions),
                },
            )
        })
        .collect();
    Ok(Metrics {
        sessions: labels.len(),
        confusion,
        detection_rate: ratio(
            confusion.true_positive,
            confusion.true_positive + confusion.false_negative,
        ),
        false_positive_rate: ratio(
            confusion.false_positive,
            confusion.false_positive + confusion.true_negative,
        ),
        per_attack,
    })
}

fn pct(value: Option<f64>) -> String {
    value.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.confusion;
        writeln!(f, "sessions: {}", self.sessions)?;
        writeln!(
            f,
            "confusion: tp={} fn={} fp={} tn={}",
            c.true_positive, c.false_negative, c.false_positive, c.true_negative
        )?;
        writeln!(f, "detection rate: {}", pct(self.detection_rate))?;
        write!(f, "false positive rate: {}", pct(self.false_positive_rate))?;
        for (kind, m) in &self.per_attack {
            write!(
                f,
                "\n  {kind}: {}/{} detected (rate {}), hint accuracy {}",
                m.detected,
                m.sessions,
                pct(m.detection_rate),
                pct(m.hint_accuracy)
            )?;
        }
        Ok(())
    }
}
