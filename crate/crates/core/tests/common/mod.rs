#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tierguard_core::model::InsufficientPair;
use tierguard_core::{
    normalize_http, normalize_sql, HttpRequestKey, MappingModel, SessionTrace, SqlQueryKey, StaticExtensions,
    TrafficEvent,
};

/// Small random corpus: ≤10 sessions, ≤8 distinct requests, ≤8 distinct queries.
///
/// Queries mostly follow a parent request so that session-set equality
/// actually occurs; a few stray in at random.
pub fn random_corpus(seed: u64) -> Vec<TrafficEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sessions = rng.gen_range(0..=10);
    let requests = rng.gen_range(1..=8usize);
    let queries = rng.gen_range(1..=8usize);
    let parents: Vec<Option<usize>> = (0..queries)
        .map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(0..requests)))
        .collect();
    let statics: Vec<bool> = (0..requests).map(|_| rng.gen_bool(0.2)).collect();

    let mut events = Vec::new();
    for s in 0..sessions {
        let id = format!("s{s}");
        let mut seq = 0;
        let mut next = || {
            seq += 1;
            seq
        };
        let present: Vec<bool> = (0..requests).map(|_| rng.gen_bool(0.5)).collect();
        for (r, here) in present.iter().enumerate() {
            if !here {
                continue;
            }
            for _ in 0..rng.gen_range(1..=2) {
                let raw = if statics[r] {
                    format!("GET /asset{r}.css")
                } else {
                    format!("get /page{r}?v={}&k={}", rng.gen_range(0..100), rng.gen_range(0..9))
                };
                events.push(TrafficEvent::http(&id, next(), raw));
            }
        }
        for (q, parent) in parents.iter().enumerate() {
            let include = match parent {
                Some(p) if present[*p] && !statics[*p] => rng.gen_bool(0.9),
                _ => rng.gen_bool(0.15),
            };
            if include {
                let raw = format!("SELECT c{q} FROM t{q} WHERE id = {}", rng.gen_range(0..1000));
                events.push(TrafficEvent::sql(&id, next(), raw));
            }
        }
    }
    events
}

/// Expected model contents computed straight from the raw traces, pair by pair.
#[derive(Debug, PartialEq, Eq)]
pub struct OracleModel {
    pub ms: BTreeMap<HttpRequestKey, BTreeSet<SqlQueryKey>>,
    pub eqs: BTreeSet<HttpRequestKey>,
    pub nmr: BTreeSet<SqlQueryKey>,
    pub req: BTreeSet<HttpRequestKey>,
    pub sql: BTreeSet<SqlQueryKey>,
    pub insufficient: BTreeSet<InsufficientPair>,
}

impl OracleModel {
    pub fn of(model: &MappingModel) -> Self {
        Self {
            ms: model.mappings().clone(),
            eqs: model.empty_query_requests().clone(),
            nmr: model.nmr().clone(),
            req: model.requests().clone(),
            sql: model.queries().clone(),
            insufficient: model.insufficient().clone(),
        }
    }
}

pub fn brute_force_model(events: &[TrafficEvent], t: u64) -> OracleModel {
    let exts = StaticExtensions::default();
    let mut sessions: Vec<&str> = events.iter().map(|e| e.session_id.as_str()).collect();
    sessions.sort();
    sessions.dedup();

    let mut req = BTreeSet::new();
    let mut statics = BTreeSet::new();
    let mut sql = BTreeSet::new();
    for e in events {
        match e.kind {
            tierguard_core::EventKind::Http => {
                let (key, is_static) = normalize_http(&e.payload, &exts).unwrap();
                if is_static {
                    statics.insert(key);
                } else {
                    req.insert(key);
                }
            }
            tierguard_core::EventKind::Sql => {
                sql.insert(normalize_sql(&e.payload));
            }
        }
    }

    let sessions_with_request = |r: &HttpRequestKey| -> BTreeSet<&str> {
        sessions
            .iter()
            .copied()
            .filter(|s| {
                events.iter().any(|e| {
                    e.session_id == *s
                        && e.kind == tierguard_core::EventKind::Http
                        && normalize_http(&e.payload, &exts).unwrap().0 == *r
                })
            })
            .collect()
    };
    let sessions_with_query = |q: &SqlQueryKey| -> BTreeSet<&str> {
        sessions
            .iter()
            .copied()
            .filter(|s| {
                events.iter().any(|e| {
                    e.session_id == *s && e.kind == tierguard_core::EventKind::Sql && normalize_sql(&e.payload) == *q
                })
            })
            .collect()
    };

    let mut ms: BTreeMap<HttpRequestKey, BTreeSet<SqlQueryKey>> = BTreeMap::new();
    let mut insufficient = BTreeSet::new();
    for r in &req {
        for q in &sql {
            let a = sessions_with_request(r);
            let b = sessions_with_query(q);
            if a == b {
                if a.len() as u64 > t {
                    ms.entry(r.clone()).or_default().insert(q.clone());
                } else {
                    insufficient.insert(InsufficientPair {
                        request: r.clone(),
                        query: q.clone(),
                    });
                }
            }
        }
    }
    let marked: BTreeSet<&SqlQueryKey> = ms.values().flatten().collect();
    let nmr = sql.iter().filter(|q| !marked.contains(q)).cloned().collect();
    let mut eqs = statics;
    eqs.extend(req.iter().filter(|r| !ms.contains_key(*r)).cloned());
    OracleModel {
        ms,
        eqs,
        nmr,
        req,
        sql,
        insufficient,
    }
}

pub fn trace(id: &str, requests: &[&str], queries: &[&str]) -> SessionTrace {
    let mut t = SessionTrace::new(id);
    for r in requests {
        t = t.with_request(r).unwrap();
    }
    for q in queries {
        t = t.with_query(q);
    }
    t
}
