//! Per-key session sets built from training traffic.
//!
//! For every dynamic request `r` the index records the set of sessions in
//! which `r` was seen, and likewise for every query `q`. Static requests are
//! remembered but carry no session set.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::IndexError;
use crate::normalize::{HttpRequestKey, SqlQueryKey, StaticExtensions};
use crate::traffic::SessionTrace;

pub type SessionSet = BTreeSet<String>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionIndex {
    pub(crate) eqs_requests: BTreeSet<HttpRequestKey>,
    pub(crate) ar: BTreeMap<HttpRequestKey, SessionSet>,
    pub(crate) aq: BTreeMap<SqlQueryKey, SessionSet>,
    pub(crate) all_sessions: SessionSet,
}

#[derive(Debug, Clone, Copy)]
pub enum IndexKey<'a> {
    Request(&'a HttpRequestKey),
    Query(&'a SqlQueryKey),
}

impl<'a> From<&'a HttpRequestKey> for IndexKey<'a> {
    fn from(key: &'a HttpRequestKey) -> Self {
        IndexKey::Request(key)
    }
}

impl<'a> From<&'a SqlQueryKey> for IndexKey<'a> {
    fn from(key: &'a SqlQueryKey) -> Self {
        IndexKey::Query(key)
    }
}

static EMPTY: SessionSet = BTreeSet::new();

impl SessionIndex {
    /// Distinct dynamic requests (keys of the request-to-sessions map).
    pub fn requests(&self) -> impl Iterator<Item = &HttpRequestKey> {
        self.ar.keys()
    }

    pub fn queries(&self) -> impl Iterator<Item = &SqlQueryKey> {
        self.aq.keys()
    }

    pub fn static_requests(&self) -> &BTreeSet<HttpRequestKey> {
        &self.eqs_requests
    }

    pub fn all_sessions(&self) -> &SessionSet {
        &self.all_sessions
    }

    pub fn request_sessions(&self) -> &BTreeMap<HttpRequestKey, SessionSet> {
        &self.ar
    }

    pub fn query_sessions(&self) -> &BTreeMap<SqlQueryKey, SessionSet> {
        &self.aq
    }

    /// Sessions containing `key`; empty for unknown keys and static requests.
    pub fn sessions_of<'a>(&self, key: impl Into<IndexKey<'a>>) -> &SessionSet {
        match key.into() {
            IndexKey::Request(r) => self.ar.get(r),
            IndexKey::Query(q) => self.aq.get(q),
        }
        .unwrap_or(&EMPTY)
    }

    pub fn is_empty(&self) -> bool {
        self.all_sessions.is_empty()
    }

    /// Per-key set union. Both sides must have been built with the same static
    /// extension set; overlapping session IDs are merged, not rejected.
    pub fn merge(mut self, other: SessionIndex) -> SessionIndex {
        self.eqs_requests.extend(other.eqs_requests);
        for (r, sessions) in other.ar {
            self.ar.entry(r).or_default().extend(sessions);
        }
        for (q, sessions) in other.aq {
            self.aq.entry(q).or_default().extend(sessions);
        }
        self.all_sessions.extend(other.all_sessions);
        self
    }
}

pub fn build_index(
    sessions: &[SessionTrace],
    static_extensions: &StaticExtensions,
) -> Result<SessionIndex, IndexError> {
    let mut index = SessionIndex::default();
    for trace in sessions {
        if !index.all_sessions.insert(trace.session_id.clone()) {
            return Err(IndexError::DuplicateSessionId(trace.session_id.clone()));
        }
        for event in &trace.http {
            if static_extensions.is_static(&event.key) {
                if !index.eqs_requests.contains(&event.key) {
                    index.eqs_requests.insert(event.key.clone());
                }
            } else {
                insert_session(&mut index.ar, &event.key, &trace.session_id);
            }
        }
        for event in &trace.sql {
            insert_session(&mut index.aq, &event.key, &trace.session_id);
        }
    }
    Ok(index)
}

fn insert_session<K: Ord + Clone>(map: &mut BTreeMap<K, SessionSet>, key: &K, session_id: &str) {
    let sessions = match map.get_mut(key) {
        Some(sessions) => sessions,
        None => map.entry(key.clone()).or_default(),
    };
    if !sessions.contains(session_id) {
        sessions.insert(session_id.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(id: &str, requests: &[&str], queries: &[&str]) -> SessionTrace {
        let mut t = SessionTrace::new(id);
        for r in requests {
            t = t.with_request(r).unwrap();
        }
        for q in queries {
            t = t.with_query(q);
        }
        t
    }

    fn set(ids: &[&str]) -> SessionSet {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn no_sessions_no_sets() {
        let index = build_index(&[], &StaticExtensions::default()).unwrap();
        assert!(index.is_empty());
        assert_eq!(index.requests().count(), 0);
        assert_eq!(index.queries().count(), 0);
        assert!(index.static_requests().is_empty());
    }

    #[test]
    fn three_session_recount() {
        let sessions = vec![
            trace("S1", &["GET /r1"], &["select 1"]),
            trace("S2", &["GET /r1"], &["select 2"]),
            trace("S3", &["GET /r2.html"], &[]),
        ];
        let index = build_index(&sessions, &StaticExtensions::default()).unwrap();
        let r1 = &sessions[0].http[0].key;
        let r2 = &sessions[2].http[0].key;
        let q1 = &sessions[0].sql[0].key;
        assert_eq!(index.sessions_of(r1), &set(&["S1", "S2"]));
        assert_eq!(index.sessions_of(q1), &set(&["S1", "S2"]));
        assert_eq!(index.static_requests().iter().collect::<Vec<_>>(), [r2]);
        assert_eq!(index.all_sessions(), &set(&["S1", "S2", "S3"]));
        assert!(index.sessions_of(r2).is_empty());
        let unknown = trace("X", &["GET /nowhere"], &[]).http[0].key.clone();
        assert!(index.sessions_of(&unknown).is_empty());
    }

    #[test]
    fn repeated_request_counts_session_once() {
        let sessions = vec![trace("S1", &["GET /r1", "GET /r1?a=1"], &["select 1", "select 9"])];
        let index = build_index(&sessions, &StaticExtensions::default()).unwrap();
        assert_eq!(index.sessions_of(&sessions[0].http[0].key), &set(&["S1"]));
        assert_eq!(index.requests().count(), 2);
        assert_eq!(index.queries().count(), 1);
    }

    #[test]
    fn duplicate_session_id_rejected() {
        let sessions = vec![trace("S1", &["GET /a"], &[]), trace("S1", &["GET /b"], &[])];
        assert_eq!(
            build_index(&sessions, &StaticExtensions::default()),
            Err(IndexError::DuplicateSessionId("S1".into()))
        );
    }

    #[test]
    fn query_only_and_static_only_sessions() {
        let sessions = vec![trace("S1", &[], &["select 1"]), trace("S2", &["GET /x.css"], &[])];
        let index = build_index(&sessions, &StaticExtensions::default()).unwrap();
        assert_eq!(index.all_sessions().len(), 2);
        assert_eq!(index.requests().count(), 0);
        assert_eq!(index.static_requests().len(), 1);
    }
}
