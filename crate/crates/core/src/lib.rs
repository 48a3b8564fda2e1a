//! Anomaly detection for multitier web applications.
//!
//! Training traffic is split into sessions; for every front-end request and
//! back-end query the engine records which sessions contained it. A query is
//! causally mapped to a request when both were seen in exactly the same
//! sessions (and often enough). At detection time a session is suspicious
//! when a mapped request runs without its queries, a request was never seen
//! in training, or a query is not accounted for by any rule.
//!
//! Pipeline: [`traffic::parse_traffic_log`] → [`traffic::group_by_session`] →
//! [`index::build_index`] → [`model::build_mapping`] → [`detect::detect_all`].

pub mod detect;
pub mod error;
pub mod eval;
pub mod index;
pub mod model;
pub mod normalize;
pub mod simulate;
pub mod traffic;

pub use detect::{
    classify_hint, detect_all, detect_session, write_attack_log, DetectionReport, SessionVerdict, Status,
    Violation, ViolationKind,
};
pub use error::{IndexError, ModelError, SimulationError, TrafficError};
pub use index::{build_index, SessionIndex};
pub use model::{build_mapping, deserialize_model, serialize_model, MappingModel, ModelBuildReport, Threshold};
pub use normalize::{normalize_http, normalize_sql, HttpRequestKey, SqlQueryKey, StaticExtensions};
pub use simulate::{builtin_login_profile, generate_sessions, inject_attacks, AppProfile, AttackSpec};
pub use traffic::{
    group_by_session, parse_traffic_log, render_traffic_log, AttackKind, EventKind, Label, ParseMode, SessionTrace,
    TrafficEvent,
};

/// Parse, group, index and map in one call.
pub fn train(
    traces: &[SessionTrace],
    static_extensions: &StaticExtensions,
    threshold: Threshold,
) -> Result<(MappingModel, ModelBuildReport), IndexError> {
    let index = build_index(traces, static_extensions)?;
    Ok(build_mapping(&index, threshold))
}
