//! Seeded multitier traffic generation and attack injection.
//!
//! Every session draws from its own ChaCha stream selected by the session
//! ordinal, so output depends only on `(profile, n, seed)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimulationError;
use crate::normalize::{normalize_http, normalize_sql, SqlQueryKey, StaticExtensions};
use crate::traffic::{AttackKind, EventKind, Label, TrafficEvent};

/// Queries only an administrator page may issue. The login profile never emits them.
pub const PRIVILEGED_TEMPLATES: [&str; 2] = [
    "SELECT id, name, password, role FROM users WHERE role = ?",
    "UPDATE users SET role = ? WHERE id = ?",
];

/// Queries no page of the built-in profiles emits.
pub const FOREIGN_TEMPLATES: [&str; 3] = [
    "SELECT card_number, cvv FROM payments WHERE user_id = ?",
    "DELETE FROM audit_log WHERE created < ?",
    "SELECT table_name FROM information_schema.tables",
];

const TAUTOLOGY: &str = " OR '1'='1'";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageSpec {
    pub method: String,
    pub path: String,
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(rename = "static", default)]
    pub is_static: bool,
    #[serde(default)]
    pub query_templates: Vec<String>,
    /// Optional pages are visited by roughly half of the sessions.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub optional: bool,
}

impl PageSpec {
    fn dynamic(method: &str, path: &str, params: &[&str], queries: &[&str]) -> Self {
        Self {
            method: method.to_string(),
            path: path.to_string(),
            params: params.iter().map(|p| p.to_string()).collect(),
            is_static: false,
            query_templates: queries.iter().map(|q| q.to_string()).collect(),
            optional: false,
        }
    }

    fn static_file(path: &str) -> Self {
        Self {
            method: "GET".to_string(),
            path: path.to_string(),
            params: Vec::new(),
            is_static: true,
            query_templates: Vec::new(),
            optional: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionShape {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppProfile {
    pub name: String,
    pub pages: Vec<PageSpec>,
    pub session_shape: SessionShape,
}

impl AppProfile {
    pub fn from_json(text: &str) -> Result<Self, SimulationError> {
        let profile: AppProfile =
            serde_json::from_str(text).map_err(|e| SimulationError::InvalidProfile(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile is always serializable")
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let invalid = |msg: String| Err(SimulationError::InvalidProfile(msg));
        if self.pages.is_empty() {
            return invalid("profile has no pages".into());
        }
        if self.session_shape.min > self.session_shape.max {
            return invalid(format!(
                "session_shape.min {} exceeds max {}",
                self.session_shape.min, self.session_shape.max
            ));
        }
        for page in &self.pages {
            if page.is_static && !page.query_templates.is_empty() {
                return invalid(format!("static page {} lists query templates", page.path));
            }
            let line = format!("{} {}", page.method, page.path);
            if normalize_http(&line, &StaticExtensions::default()).is_err() || page.path.contains('?') {
                return invalid(format!("page request {line:?} is not a method and path"));
            }
            if page.params.iter().any(|p| p.is_empty() || p.contains(['&', '=', '#', ' '])) {
                return invalid(format!("page {} has an unusable parameter name", page.path));
            }
        }
        Ok(())
    }
}

/// Register, log in, browse, log out. Every page is visited in every session.
pub fn builtin_login_profile() -> AppProfile {
    AppProfile {
        name: "login".to_string(),
        pages: vec![
            PageSpec::static_file("/register.html"),
            PageSpec::dynamic(
                "POST",
                "/register",
                &["email", "pw", "user"],
                &["INSERT INTO users (name, password, email) VALUES (?, ?, ?)"],
            ),
            PageSpec::dynamic(
                "POST",
                "/login",
                &["pw", "user"],
                &["SELECT id, password FROM users WHERE name = ?"],
            ),
            PageSpec::dynamic(
                "GET",
                "/home",
                &[],
                &["SELECT name, email FROM profiles WHERE user_id = ?"],
            ),
            PageSpec::dynamic(
                "GET",
                "/logout",
                &[],
                &["UPDATE sessions SET active = ? WHERE user_id = ?"],
            ),
        ],
        session_shape: SessionShape { min: 5, max: 9 },
    }
}

/// The login flow plus optional administrator pages that issue the privileged queries.
pub fn builtin_admin_profile() -> AppProfile {
    let mut profile = builtin_login_profile();
    profile.name = "login-admin".to_string();
    let logout = profile.pages.pop().expect("login profile ends with logout");
    let mut list_users = PageSpec::dynamic("GET", "/admin/users", &[], &[PRIVILEGED_TEMPLATES[0]]);
    list_users.optional = true;
    let mut set_role = PageSpec::dynamic("POST", "/admin/role", &["role", "user"], &[PRIVILEGED_TEMPLATES[1]]);
    set_role.optional = true;
    profile.pages.extend([list_users, set_role, logout]);
    profile
}

pub fn builtin_profile(name: &str) -> Option<AppProfile> {
    match name {
        "login" => Some(builtin_login_profile()),
        "login-admin" | "admin" => Some(builtin_admin_profile()),
        _ => None,
    }
}

pub fn session_id(ordinal: usize) -> String {
    format!("sim-{ordinal:04}")
}

fn session_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn literal(rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.5) {
        rng.gen_range(1..100_000u32).to_string()
    } else {
        format!("'v{:06x}'", rng.gen_range(0..0x100_0000u32))
    }
}

/// Replaces every `?` in a template with a fresh literal.
pub fn instantiate(template: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    for c in template.chars() {
        if c == '?' {
            out.push_str(&literal(rng));
        } else {
            out.push(c);
        }
    }
    out
}

fn request_line(page: &PageSpec, rng: &mut ChaCha8Rng) -> String {
    let mut line = format!("{} {}", page.method, page.path);
    for (i, name) in page.params.iter().enumerate() {
        line.push(if i == 0 { '?' } else { '&' });
        line.push_str(&format!("{name}=x{}", rng.gen_range(0..10_000u32)));
    }
    line
}

fn page_visits(profile: &AppProfile, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut visits: Vec<usize> = (0..profile.pages.len())
        .filter(|&i| !profile.pages[i].optional || rng.gen_bool(0.5))
        .collect();
    if visits.is_empty() {
        visits.push(rng.gen_range(0..profile.pages.len()));
    }

    let shape = profile.session_shape;
    let target = rng.gen_range(shape.min..=shape.max);
    let pool_end = if visits.len() >= 2 { visits.len() - 1 } else { visits.len() };
    let revisit_pool: Vec<usize> = visits[..pool_end]
        .iter()
        .copied()
        .filter(|&i| !profile.pages[i].is_static)
        .collect();
    if revisit_pool.is_empty() {
        return visits;
    }
    while visits.len() < target {
        let page = revisit_pool[rng.gen_range(0..revisit_pool.len())];
        let at = if visits.len() >= 2 { visits.len() - 1 } else { visits.len() };
        visits.insert(at, page);
    }
    visits
}

/// `n` benign sessions `sim-0001 ..`, each walking the profile in page order.
///
/// Dynamic page visits emit the request followed by their queries; literal
/// values change on every visit while skeletons stay fixed.
pub fn generate_sessions(profile: &AppProfile, n: usize, seed: u64) -> Result<Vec<TrafficEvent>, SimulationError> {
    profile.validate()?;
    let mut events = Vec::new();
    for ordinal in 1..=n {
        let mut rng = session_rng(seed, ordinal as u64);
        let id = session_id(ordinal);
        let mut seq = 0u64;
        let mut push = |kind: EventKind, payload: String, events: &mut Vec<TrafficEvent>| {
            events.push(TrafficEvent {
                session_id: id.clone(),
                seq,
                kind,
                payload,
                label: Some(Label::Benign),
            });
            seq += 1;
        };
        for page_idx in page_visits(profile, &mut rng) {
            let page = &profile.pages[page_idx];
            push(EventKind::Http, request_line(page, &mut rng), &mut events);
            for template in &page.query_templates {
                push(EventKind::Sql, instantiate(template, &mut rng), &mut events);
            }
        }
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    kind: AttackKind,
    rate: f64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, rate: f64) -> Result<Self, SimulationError> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(SimulationError::InvalidRate(rate));
        }
        Ok(Self { kind, rate })
    }

    pub fn kind(&self) -> AttackKind {
        self.kind
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

#[derive(Default)]
struct Corruption {
    removed: BTreeSet<usize>,
    rewritten: HashMap<usize, String>,
    appended: Vec<String>,
}

/// Corrupts `⌈rate · sessions⌉` benign sessions (fewer if not enough are
/// eligible) and relabels every event of a corrupted session.
pub fn inject_attacks(events: &[TrafficEvent], spec: &AttackSpec, seed: u64) -> Result<Vec<TrafficEvent>, SimulationError> {
    let mut order: Vec<&str> = Vec::new();
    let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
    for (idx, event) in events.iter().enumerate() {
        members
            .entry(event.session_id.as_str())
            .or_insert_with(|| {
                order.push(event.session_id.as_str());
                Vec::new()
            })
            .push(idx);
    }
    if spec.rate > 0.0 && order.is_empty() {
        return Err(SimulationError::EmptyCorpus);
    }
    if spec.rate == 0.0 {
        return Ok(events.to_vec());
    }
    for idxs in members.values_mut() {
        idxs.sort_by_key(|&i| events[i].seq);
    }

    let candidates: Vec<usize> = order
        .iter()
        .enumerate()
        .filter(|(_, id)| {
            let idxs = &members[*id];
            idxs.iter().all(|&i| events[i].label == Some(Label::Benign)) && is_eligible(spec.kind, events, idxs)
        })
        .map(|(ordinal, _)| ordinal)
        .collect();
    let wanted = ((spec.rate * order.len() as f64).ceil() as usize).min(candidates.len());
    let mut selector = session_rng(seed, 0);
    let mut chosen: Vec<usize> = sample(&mut selector, candidates.len(), wanted)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    chosen.sort_unstable();

    let mut corruptions: BTreeMap<&str, Corruption> = BTreeMap::new();
    for ordinal in chosen {
        let id = order[ordinal];
        let mut rng = session_rng(seed, ordinal as u64 + 1);
        corruptions.insert(id, corrupt(spec.kind, events, &members[id], &mut rng));
    }

    let last_index: HashMap<&str, usize> = members
        .iter()
        .map(|(id, idxs)| (*id, idxs.iter().copied().max().unwrap_or(0)))
        .collect();
    let label = Label::from(spec.kind);
    let mut out = Vec::with_capacity(events.len() + corruptions.len());
    for (idx, event) in events.iter().enumerate() {
        let id = event.session_id.as_str();
        let Some(corruption) = corruptions.get(id) else {
            out.push(event.clone());
            continue;
        };
        if !corruption.removed.contains(&idx) {
            let mut event = event.clone();
            if let Some(payload) = corruption.rewritten.get(&idx) {
                event.payload = payload.clone();
            }
            event.label = Some(label);
            out.push(event);
        }
        if last_index[id] == idx {
            let mut seq = members[id].iter().map(|&i| events[i].seq).max().unwrap_or(0);
            for payload in &corruption.appended {
                seq += 1;
                out.push(TrafficEvent {
                    session_id: id.to_string(),
                    seq,
                    kind: EventKind::Sql,
                    payload: payload.clone(),
                    label: Some(label),
                });
            }
        }
    }
    Ok(out)
}

fn is_eligible(kind: AttackKind, events: &[TrafficEvent], idxs: &[usize]) -> bool {
    match kind {
        AttackKind::DirectDb | AttackKind::PrivilegeEscalation => true,
        AttackKind::SqlInjection => idxs.iter().any(|&i| events[i].kind == EventKind::Sql),
        AttackKind::HijackSession => !caused_queries(events, idxs).is_empty(),
    }
}

/// Dynamic request payload → indices of the SQL events that follow its visits.
fn caused_queries(events: &[TrafficEvent], idxs: &[usize]) -> BTreeMap<String, Vec<usize>> {
    let exts = StaticExtensions::default();
    let mut caused: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for &i in idxs {
        match events[i].kind {
            EventKind::Http => {
                current = normalize_http(&events[i].payload, &exts)
                    .ok()
                    .filter(|(_, is_static)| !is_static)
                    .map(|(key, _)| key.to_string());
            }
            EventKind::Sql => {
                if let Some(key) = &current {
                    caused.entry(key.clone()).or_default().push(i);
                }
            }
        }
    }
    caused
}

fn corrupt(kind: AttackKind, events: &[TrafficEvent], idxs: &[usize], rng: &mut ChaCha8Rng) -> Corruption {
    let mut corruption = Corruption::default();
    match kind {
        AttackKind::DirectDb => {
            let template = FOREIGN_TEMPLATES[rng.gen_range(0..FOREIGN_TEMPLATES.len())];
            corruption.appended.push(instantiate(template, rng));
        }
        AttackKind::PrivilegeEscalation => {
            let present: BTreeSet<SqlQueryKey> = idxs
                .iter()
                .filter(|&&i| events[i].kind == EventKind::Sql)
                .map(|&i| normalize_sql(&events[i].payload))
                .collect();
            let fresh: Vec<&str> = PRIVILEGED_TEMPLATES
                .iter()
                .copied()
                .filter(|t| !present.contains(&normalize_sql(t)))
                .collect();
            let pool = if fresh.is_empty() { PRIVILEGED_TEMPLATES.to_vec() } else { fresh };
            let template = pool[rng.gen_range(0..pool.len())];
            corruption.appended.push(instantiate(template, rng));
        }
        AttackKind::SqlInjection => {
            let queries: Vec<usize> = idxs.iter().copied().filter(|&i| events[i].kind == EventKind::Sql).collect();
            let with_where: Vec<usize> = queries
                .iter()
                .copied()
                .filter(|&i| normalize_sql(&events[i].payload).skeleton().contains(" where "))
                .collect();
            let pool = if with_where.is_empty() { queries } else { with_where };
            let target = pool[rng.gen_range(0..pool.len())];
            corruption
                .rewritten
                .insert(target, format!("{}{TAUTOLOGY}", events[target].payload));
        }
        AttackKind::HijackSession => {
            let caused = caused_queries(events, idxs);
            let keys: Vec<&String> = caused.keys().collect();
            let victim = keys[rng.gen_range(0..keys.len())];
            corruption.removed.extend(caused[victim].iter().copied());
        }
    }
    corruption
}
