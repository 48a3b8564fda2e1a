//! Python bindings. Traffic crosses the boundary as JSON Lines text and
//! reports come back as plain dicts.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyAny;
use tierguard_core::detect::ReportDocument;
use tierguard_core::simulate::builtin_profile;
use tierguard_core::traffic::{parse_traffic_str, render_traffic_string};
use tierguard_core::{
    detect_all, deserialize_model, generate_sessions, group_by_session, inject_attacks, serialize_model, AttackKind,
    AttackSpec, ParseMode, Threshold, TrafficEvent,
};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn extensions(static_extensions: Option<Vec<String>>) -> tierguard_core::StaticExtensions {
    static_extensions.map_or_else(Default::default, tierguard_core::StaticExtensions::new)
}

fn events_of(traffic: &str, lenient: bool) -> PyResult<Vec<TrafficEvent>> {
    let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
    Ok(parse_traffic_str(traffic, mode).map_err(value_error)?.events)
}

fn to_python<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Canonical request key and whether it counts as static.
#[pyfunction]
#[pyo3(signature = (raw, static_extensions=None))]
fn normalize_http(raw: &str, static_extensions: Option<Vec<String>>) -> PyResult<(String, bool)> {
    let (key, is_static) = tierguard_core::normalize_http(raw, &extensions(static_extensions)).map_err(value_error)?;
    Ok((key.to_string(), is_static))
}

#[pyfunction]
fn normalize_sql(raw: &str) -> String {
    tierguard_core::normalize_sql(raw).skeleton().to_string()
}

/// Generate labelled traffic as JSON Lines text.
#[pyfunction]
#[pyo3(signature = (sessions, seed=0, profile="login", attacks=Vec::new(), attack_rate=0.1))]
fn simulate(sessions: usize, seed: u64, profile: &str, attacks: Vec<String>, attack_rate: f64) -> PyResult<String> {
    let profile = builtin_profile(profile).ok_or_else(|| value_error(format!("unknown built-in profile {profile:?}")))?;
    let mut events = generate_sessions(&profile, sessions, seed).map_err(value_error)?;
    for (i, name) in attacks.iter().enumerate() {
        let kind: AttackKind = name.parse().map_err(value_error)?;
        let spec = AttackSpec::new(kind, attack_rate).map_err(value_error)?;
        events = inject_attacks(&events, &spec, seed.wrapping_add(i as u64 + 1)).map_err(value_error)?;
    }
    Ok(render_traffic_string(&events))
}

#[pyclass(name = "MappingModel", module = "tierguard", frozen)]
struct PyMappingModel {
    inner: tierguard_core::MappingModel,
}

#[pymethods]
impl PyMappingModel {
    #[staticmethod]
    #[pyo3(signature = (traffic, threshold=1, static_extensions=None, lenient=false))]
    fn train(traffic: &str, threshold: u64, static_extensions: Option<Vec<String>>, lenient: bool) -> PyResult<Self> {
        let threshold = Threshold::new(threshold).map_err(value_error)?;
        let traces = group_by_session(&events_of(traffic, lenient)?).map_err(value_error)?;
        let (inner, _) =
            tierguard_core::train(&traces, &extensions(static_extensions), threshold).map_err(value_error)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(document: &str) -> PyResult<Self> {
        Ok(Self { inner: deserialize_model(document).map_err(value_error)? })
    }

    fn to_json(&self) -> String {
        serialize_model(&self.inner)
    }

    #[getter]
    fn complete(&self) -> bool {
        self.inner.is_complete()
    }

    #[getter]
    fn threshold(&self) -> u64 {
        self.inner.threshold().get()
    }

    /// Request key to its mapped query skeletons.
    fn mappings(&self) -> BTreeMap<String, Vec<String>> {
        self.inner
            .mappings()
            .iter()
            .map(|(r, qs)| (r.to_string(), qs.iter().map(|q| q.to_string()).collect()))
            .collect()
    }

    fn nmr(&self) -> Vec<String> {
        self.inner.nmr().iter().map(|q| q.to_string()).collect()
    }

    fn insufficient(&self) -> Vec<(String, String)> {
        self.inner.insufficient().iter().map(|p| (p.request.to_string(), p.query.to_string())).collect()
    }

    /// Report dict with `totals` and per-session `verdicts`.
    #[pyo3(signature = (traffic, lenient=false))]
    fn detect<'py>(&self, py: Python<'py>, traffic: &str, lenient: bool) -> PyResult<Bound<'py, PyAny>> {
        let traces = group_by_session(&events_of(traffic, lenient)?).map_err(value_error)?;
        let report = detect_all(&self.inner, &traces);
        to_python(py, &ReportDocument::from_report(&report))
    }

    fn __repr__(&self) -> String {
        let c = self.inner.counts();
        format!(
            "MappingModel(requests={}, queries={}, complete={})",
            c.requests,
            c.queries,
            if self.inner.is_complete() { "True" } else { "False" }
        )
    }
}

#[pymodule]
fn tierguard(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normalize_http, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_sql, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_class::<PyMappingModel>()?;
    Ok(())
}
