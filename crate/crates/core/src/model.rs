//! Deterministic request-to-query mappings and the model document.
//!
//! A query `q` maps to request `r` when both were seen in exactly the same
//! training sessions and that session set is larger than the threshold `t`.
//! Queries that never map land in NMR; requests that never map join the
//! empty-query set alongside static files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::index::SessionIndex;
use crate::normalize::{HttpRequestKey, SqlQueryKey};

pub const MODEL_FORMAT_VERSION: u64 = 1;

/// Minimum evidence: a session-set match counts only if it covers more than `t` sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Threshold(u64);

impl Threshold {
    pub fn new(t: u64) -> Result<Self, ModelError> {
        if t == 0 {
            Err(ModelError::InvalidThreshold(t))
        } else {
            Ok(Self(t))
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Self(1)
    }
}

impl TryFrom<u64> for Threshold {
    type Error = ModelError;

    fn try_from(t: u64) -> Result<Self, Self::Error> {
        Threshold::new(t)
    }
}

impl From<Threshold> for u64 {
    fn from(t: Threshold) -> u64 {
        t.0
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A pair whose session sets matched but covered too few sessions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InsufficientPair {
    pub request: HttpRequestKey,
    pub query: SqlQueryKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingModel {
    pub(crate) ms: BTreeMap<HttpRequestKey, BTreeSet<SqlQueryKey>>,
    pub(crate) eqs_requests: BTreeSet<HttpRequestKey>,
    pub(crate) nmr: BTreeSet<SqlQueryKey>,
    pub(crate) req: BTreeSet<HttpRequestKey>,
    pub(crate) sql: BTreeSet<SqlQueryKey>,
    pub(crate) threshold: Threshold,
    pub(crate) insufficient: BTreeSet<InsufficientPair>,
}

impl MappingModel {
    pub fn empty(threshold: Threshold) -> Self {
        Self {
            ms: BTreeMap::new(),
            eqs_requests: BTreeSet::new(),
            nmr: BTreeSet::new(),
            req: BTreeSet::new(),
            sql: BTreeSet::new(),
            threshold,
            insufficient: BTreeSet::new(),
        }
    }

    /// The mapped query set of `r`, if `r` has a deterministic mapping.
    pub fn mapped_queries(&self, r: &HttpRequestKey) -> Option<&BTreeSet<SqlQueryKey>> {
        self.ms.get(r)
    }

    pub fn mappings(&self) -> &BTreeMap<HttpRequestKey, BTreeSet<SqlQueryKey>> {
        &self.ms
    }

    pub fn empty_query_requests(&self) -> &BTreeSet<HttpRequestKey> {
        &self.eqs_requests
    }

    pub fn is_empty_query_request(&self, r: &HttpRequestKey) -> bool {
        self.eqs_requests.contains(r)
    }

    /// Requests known only as static files, i.e. never seen as dynamic in training.
    pub fn is_static_request(&self, r: &HttpRequestKey) -> bool {
        self.eqs_requests.contains(r) && !self.req.contains(r)
    }

    pub fn nmr(&self) -> &BTreeSet<SqlQueryKey> {
        &self.nmr
    }

    pub fn requests(&self) -> &BTreeSet<HttpRequestKey> {
        &self.req
    }

    pub fn queries(&self) -> &BTreeSet<SqlQueryKey> {
        &self.sql
    }

    pub fn threshold(&self) -> Threshold {
        self.threshold
    }

    pub fn is_complete(&self) -> bool {
        self.insufficient.is_empty()
    }

    pub fn insufficient(&self) -> &BTreeSet<InsufficientPair> {
        &self.insufficient
    }

    pub fn counts(&self) -> ModelCounts {
        ModelCounts {
            requests: self.req.len(),
            queries: self.sql.len(),
            mapped_requests: self.ms.len(),
            mapped_queries: self.sql.len() - self.nmr.len(),
            empty_query_requests: self.eqs_requests.len(),
            nmr: self.nmr.len(),
            insufficient: self.insufficient.len(),
        }
    }

    /// Checks the structural invariants a loaded or hand-built model must satisfy.
    pub fn validate(&self) -> Result<(), ModelError> {
        let corrupt = |msg: String| Err(ModelError::CorruptModel(msg));
        let mut marked = BTreeSet::new();
        for (r, queries) in &self.ms {
            if !self.req.contains(r) {
                return corrupt(format!("mapped request {r} is not in requests"));
            }
            if queries.is_empty() {
                return corrupt(format!("mapping for {r} is empty"));
            }
            if self.eqs_requests.contains(r) {
                return corrupt(format!("mapped request {r} is also an empty-query request"));
            }
            marked.extend(queries.iter());
        }
        if let Some(q) = marked.iter().find(|q| self.nmr.contains(*q)) {
            return corrupt(format!("query {q} is both mapped and in nmr"));
        }
        let covered: BTreeSet<&SqlQueryKey> = marked.into_iter().chain(self.nmr.iter()).collect();
        if !covered.iter().copied().eq(self.sql.iter()) {
            return corrupt("mapped queries and nmr do not partition queries".to_string());
        }
        if let Some(r) = self.req.iter().find(|r| !self.ms.contains_key(*r) && !self.eqs_requests.contains(*r)) {
            return corrupt(format!("unmapped request {r} is missing from the empty-query set"));
        }
        if let Some(pair) = self
            .insufficient
            .iter()
            .find(|p| !self.req.contains(&p.request) || !self.sql.contains(&p.query))
        {
            return corrupt(format!("insufficient pair ({}, {}) names unknown keys", pair.request, pair.query));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelCounts {
    pub requests: usize,
    pub queries: usize,
    pub mapped_requests: usize,
    pub mapped_queries: usize,
    pub empty_query_requests: usize,
    pub nmr: usize,
    pub insufficient: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelBuildReport {
    /// False iff some pair matched on session sets but lacked evidence.
    pub complete: bool,
    pub insufficient_pairs: Vec<InsufficientPair>,
    pub counts: ModelCounts,
}

impl fmt::Display for ModelBuildReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.counts;
        writeln!(
            f,
            "requests={} queries={} mapped_requests={} mapped_queries={} empty_query_requests={} nmr={}",
            c.requests, c.queries, c.mapped_requests, c.mapped_queries, c.empty_query_requests, c.nmr
        )?;
        if self.complete {
            write!(f, "model complete")
        } else {
            write!(f, "model incomplete: need more training sessions for {} pair(s)", self.insufficient_pairs.len())?;
            for pair in &self.insufficient_pairs {
                write!(f, "\n  {} -> {}", pair.request, pair.query)?;
            }
            Ok(())
        }
    }
}

/// Derives the mapping model from a session index.
///
/// Never aborts on thin evidence: pairs that match but fail the threshold are
/// recorded and the model is flagged incomplete.
pub fn build_mapping(index: &SessionIndex, t: Threshold) -> (MappingModel, ModelBuildReport) {
    let mut model = MappingModel::empty(t);
    model.req = index.ar.keys().cloned().collect();
    model.sql = index.aq.keys().cloned().collect();
    model.eqs_requests = index.eqs_requests.clone();

    let mut marked: BTreeSet<&SqlQueryKey> = BTreeSet::new();
    for (r, r_sessions) in &index.ar {
        for (q, q_sessions) in &index.aq {
            if r_sessions.len() != q_sessions.len() || r_sessions != q_sessions {
                continue;
            }
            if r_sessions.len() as u64 > t.get() {
                model.ms.entry(r.clone()).or_default().insert(q.clone());
                marked.insert(q);
            } else {
                model.insufficient.insert(InsufficientPair {
                    request: r.clone(),
                    query: q.clone(),
                });
            }
        }
    }

    model.nmr = index
        .aq
        .keys()
        .filter(|q| !marked.contains(q))
        .cloned()
        .collect();
    for r in index.ar.keys() {
        if !model.ms.contains_key(r) {
            model.eqs_requests.insert(r.clone());
        }
    }

    let report = ModelBuildReport {
        complete: model.is_complete(),
        insufficient_pairs: model.insufficient.iter().cloned().collect(),
        counts: model.counts(),
    };
    (model, report)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    version: u64,
    threshold_t: u64,
    complete: bool,
    requests: Vec<HttpRequestKey>,
    static_requests: Vec<HttpRequestKey>,
    queries: Vec<SqlQueryKey>,
    mappings: Vec<MappingEntry>,
    nmr: Vec<SqlQueryKey>,
    insufficient: Vec<InsufficientPair>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingEntry {
    request: HttpRequestKey,
    queries: Vec<SqlQueryKey>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u64,
}

fn sorted_rendered<'a, T: fmt::Display + Clone + 'a>(items: impl IntoIterator<Item = &'a T>) -> Vec<T> {
    let mut out: Vec<(String, T)> = items.into_iter().map(|i| (i.to_string(), i.clone())).collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.into_iter().map(|(_, i)| i).collect()
}

/// Pretty-printed JSON with every collection sorted by its rendered text.
pub fn serialize_model(model: &MappingModel) -> String {
    let mut mappings: Vec<MappingEntry> = model
        .ms
        .iter()
        .map(|(r, qs)| MappingEntry {
            request: r.clone(),
            queries: sorted_rendered(qs),
        })
        .collect();
    mappings.sort_by_key(|m| m.request.to_string());
    let mut insufficient: Vec<InsufficientPair> = model.insufficient.iter().cloned().collect();
    insufficient.sort_by_key(|p| (p.request.to_string(), p.query.to_string()));

    let doc = ModelDocument {
        version: MODEL_FORMAT_VERSION,
        threshold_t: model.threshold.get(),
        complete: model.is_complete(),
        requests: sorted_rendered(&model.req),
        static_requests: sorted_rendered(&model.eqs_requests),
        queries: sorted_rendered(&model.sql),
        mappings,
        nmr: sorted_rendered(&model.nmr),
        insufficient,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("model document is always serializable");
    text.push('\n');
    text
}

pub fn deserialize_model(document: &str) -> Result<MappingModel, ModelError> {
    let probe: VersionProbe =
        serde_json::from_str(document).map_err(|e| ModelError::CorruptModel(e.to_string()))?;
    if probe.version != MODEL_FORMAT_VERSION {
        return Err(ModelError::UnsupportedVersion(probe.version));
    }
    let doc: ModelDocument =
        serde_json::from_str(document).map_err(|e| ModelError::CorruptModel(e.to_string()))?;
    let threshold = Threshold::new(doc.threshold_t).map_err(|e| ModelError::CorruptModel(e.to_string()))?;

    let mut ms: BTreeMap<HttpRequestKey, BTreeSet<SqlQueryKey>> = BTreeMap::new();
    for entry in doc.mappings {
        let request = entry.request.to_string();
        if ms.insert(entry.request, entry.queries.into_iter().collect()).is_some() {
            return Err(ModelError::CorruptModel(format!("duplicate mapping for {request}")));
        }
    }
    let model = MappingModel {
        ms,
        eqs_requests: doc.static_requests.into_iter().collect(),
        nmr: doc.nmr.into_iter().collect(),
        req: doc.requests.into_iter().collect(),
        sql: doc.queries.into_iter().collect(),
        threshold,
        insufficient: doc.insufficient.into_iter().collect(),
    };
    model.validate()?;
    if model.is_complete() != doc.complete {
        return Err(ModelError::CorruptModel(
            "complete flag disagrees with the insufficient list".to_string(),
        ));
    }
    Ok(model)
}
