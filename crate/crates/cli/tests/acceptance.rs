//! Acceptance criteria, one line of output per criterion.
//!
//! Runs without the libtest harness so the PASS/FAIL lines always print.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;
use tierguard_cli::{run, EXIT_INCOMPLETE, EXIT_OK};
use tierguard_core::traffic::{parse_traffic_str, render_traffic_string};
use tierguard_core::{
    build_index, build_mapping, deserialize_model, group_by_session, normalize_http, normalize_sql, serialize_model,
    AttackKind, ParseMode, StaticExtensions, Threshold, TrafficEvent,
};

type Outcome = Result<String, String>;

fn tg(args: &[&str]) -> i32 {
    run(std::iter::once("tierguard").chain(args.iter().copied()))
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(elapsed < Duration::from_secs(limit_secs), || {
        format!("took {elapsed:.2?}, limit {limit_secs} s")
    })
}

fn simulate(dir: &Path, name: &str, n: usize, seed: u64, extra: &[&str]) -> Result<PathBuf, String> {
    let out = dir.join(name);
    let (n, seed) = (n.to_string(), seed.to_string());
    let mut args = vec!["simulate", "--builtin-profile", "--sessions", &n, "--seed", &seed, "--out", s(&out)];
    args.extend_from_slice(extra);
    let code = tg(&args);
    ensure(code == EXIT_OK, || format!("simulate exited {code}"))?;
    Ok(out)
}

fn train(traffic: &Path, model: &Path, t: u64) -> i32 {
    let t = t.to_string();
    tg(&["train", "--traffic", s(traffic), "--threshold", &t, "--model", s(model)])
}

fn detect(model: &Path, traffic: &Path, report: &Path) -> Result<Value, String> {
    let code = tg(&["detect", "--model", s(model), "--traffic", s(traffic), "--report", s(report)]);
    ensure(code == EXIT_OK, || format!("detect exited {code}"))?;
    Ok(json(report))
}

/// 1. Mapping equals the brute-force enumerator on 500 random corpora.
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut mappings = 0;
    for seed in 0..500u64 {
        let t = 1 + seed % 3;
        let events = common::random_corpus(seed);
        let traces = group_by_session(&events).map_err(|e| e.to_string())?;
        let index = build_index(&traces, &StaticExtensions::default()).map_err(|e| e.to_string())?;
        let (model, _) = build_mapping(&index, Threshold::new(t).unwrap());
        let expected = common::brute_force_model(&events, t);
        ensure(common::OracleModel::of(&model) == expected, || {
            format!("corpus seed {seed}, t = {t} disagrees with the oracle")
        })?;
        mappings += model.mappings().len();
    }
    within(start.elapsed(), 10)?;
    Ok(format!("500 corpora, {mappings} mappings, {:.2?}", start.elapsed()))
}

/// 2. Complete models classify their own training traffic as benign.
fn training_closure() -> Outcome {
    let dir = TempDir::new().unwrap();
    let mut checked = 0;
    for (n, seed) in [(3, 1), (5, 2), (20, 3), (64, 4), (200, 5)] {
        let traffic = simulate(dir.path(), "train.jsonl", n, seed, &[])?;
        let model = dir.path().join("model.json");
        if train(&traffic, &model, 1) != EXIT_OK {
            continue;
        }
        let report = detect(&model, &traffic, &dir.path().join("report.json"))?;
        ensure(report["totals"]["suspicious"] == 0, || format!("n = {n}: {}", report["totals"]))?;
        checked += 1;
    }
    ensure(checked == 5, || format!("only {checked} of 5 corpora trained complete"))?;

    let traffic = simulate(dir.path(), "big.jsonl", 1000, 6, &[])?;
    let model = dir.path().join("big-model.json");
    let start = Instant::now();
    let code = train(&traffic, &model, 1);
    ensure(code == EXIT_OK, || format!("1000-session train exited {code}"))?;
    let report = detect(&model, &traffic, &dir.path().join("big-report.json"))?;
    let elapsed = start.elapsed();
    ensure(report["totals"]["suspicious"] == 0, || format!("1000 sessions: {}", report["totals"]))?;
    within(elapsed, 5)?;
    Ok(format!("6 corpora re-detected clean, 1000 sessions in {elapsed:.2?}"))
}

/// 3. Every injected class is caught and untouched sessions stay benign.
fn attack_matrix() -> Outcome {
    let dir = TempDir::new().unwrap();
    let start = Instant::now();
    let training = simulate(dir.path(), "train.jsonl", 200, 11, &[])?;
    let model = dir.path().join("model.json");
    let code = train(&training, &model, 1);
    ensure(code == EXIT_OK, || format!("train exited {code}"))?;

    let mut summary = Vec::new();
    for (i, kind) in AttackKind::ALL.into_iter().enumerate() {
        let name = kind.as_str();
        let traffic = simulate(
            dir.path(),
            &format!("{name}.jsonl"),
            200,
            100 + i as u64,
            &["--attack", name, "--attack-rate", "0.25"],
        )?;
        let report = dir.path().join(format!("{name}-report.json"));
        detect(&model, &traffic, &report)?;
        let code = tg(&["eval", "--report", s(&report), "--traffic", s(&traffic)]);
        ensure(code == EXIT_OK, || format!("eval exited {code}"))?;
        let metrics = json(&dir.path().join(format!("{name}-report.metrics.json")));
        let rate = &metrics["per_attack"][name]["detection_rate"];
        let fpr = &metrics["false_positive_rate"];
        ensure(rate == 1.0, || format!("{name}: detection rate {rate}"))?;
        ensure(fpr == 0.0, || format!("{name}: false positive rate {fpr}"))?;
        summary.push(format!("{name} 1.0"));
    }
    within(start.elapsed(), 10)?;
    Ok(format!("{}, FPR 0.0, {:.2?}", summary.join(", "), start.elapsed()))
}

/// 4. Requests seen in exactly two sessions map at t = 1 and not at t = 2.
fn threshold_behavior() -> Outcome {
    let dir = TempDir::new().unwrap();
    let traffic = simulate(dir.path(), "two.jsonl", 2, 21, &[])?;
    let events = parse_traffic_str(&fs::read_to_string(&traffic).unwrap(), ParseMode::Strict)
        .map_err(|e| e.to_string())?
        .events;
    let traces = group_by_session(&events).map_err(|e| e.to_string())?;
    let index = build_index(&traces, &StaticExtensions::default()).map_err(|e| e.to_string())?;
    ensure(index.request_sessions().values().all(|s| s.len() == 2), || {
        "corpus has a request outside exactly two sessions".into()
    })?;

    let model = dir.path().join("m.json");
    let at_one = train(&traffic, &model, 1);
    ensure(at_one == EXIT_OK && json(&model)["complete"] == true, || format!("t = 1 exited {at_one}"))?;
    let at_two = train(&traffic, &model, 2);
    let doc = json(&model);
    let pairs = doc["insufficient"].as_array().map_or(0, Vec::len);
    ensure(at_two == EXIT_INCOMPLETE && pairs > 0 && doc["complete"] == false, || {
        format!("t = 2 exited {at_two} with {pairs} insufficient pairs")
    })?;
    Ok(format!("t=1 exit 0, t=2 exit 4 with {pairs} insufficient pairs"))
}

/// 5. Round-trips and byte-identical reruns.
fn determinism() -> Outcome {
    for seed in 0..100u64 {
        let events = common::random_corpus(10_000 + seed);
        let traces = group_by_session(&events).map_err(|e| e.to_string())?;
        let index = build_index(&traces, &StaticExtensions::default()).map_err(|e| e.to_string())?;
        let (model, _) = build_mapping(&index, Threshold::new(1 + seed % 3).unwrap());
        let back = deserialize_model(&serialize_model(&model)).map_err(|e| e.to_string())?;
        ensure(back == model, || format!("model {seed} did not round-trip"))?;
    }

    let mut runs: Vec<[Vec<u8>; 4]> = Vec::new();
    for _ in 0..3 {
        let dir = TempDir::new().unwrap();
        let training = simulate(dir.path(), "train.jsonl", 60, 31, &[])?;
        let test = simulate(dir.path(), "test.jsonl", 60, 32, &["--attack", "sql_injection", "--attack", "hijack_session"])?;
        let model = dir.path().join("model.json");
        ensure(train(&training, &model, 1) == EXIT_OK, || "train failed".into())?;
        let report = dir.path().join("report.json");
        detect(&model, &test, &report)?;
        let read = |p: PathBuf| fs::read(p).unwrap();
        runs.push([
            read(test),
            read(model),
            read(report),
            read(dir.path().join("report.attacks.jsonl")),
        ]);
    }
    ensure(runs.windows(2).all(|w| w[0] == w[1]), || "pipeline outputs differ between runs".into())?;

    let dir = TempDir::new().unwrap();
    let training = simulate(dir.path(), "train.jsonl", 40, 41, &["--attack", "direct_db"])?;
    let events = parse_traffic_str(&fs::read_to_string(&training).unwrap(), ParseMode::Strict)
        .map_err(|e| e.to_string())?
        .events;
    let mut sessions: Vec<Vec<TrafficEvent>> = Vec::new();
    for event in events {
        match sessions.last_mut() {
            Some(last) if last[0].session_id == event.session_id => last.push(event),
            _ => sessions.push(vec![event]),
        }
    }
    sessions.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    let permuted = dir.path().join("permuted.jsonl");
    fs::write(&permuted, render_traffic_string(&sessions.concat())).unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    train(&training, &a, 1);
    train(&permuted, &b, 1);
    ensure(fs::read(&a).unwrap() == fs::read(&b).unwrap(), || "permuted training changed model bytes".into())?;
    Ok("100 model round-trips, 3 identical pipeline runs, permutation-stable model".into())
}

fn fuzz_sql(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 24] = [
        "SELECT", "from", "WHERE", "id", "t1.col", " ", "  ", "\n", "=", "<>", "'", "''", "\"", "\\", "--", "/*",
        "*/", "#", "42", "3.14", "0x1F", "$1", "(", ",",
    ];
    let len = rng.gen_range(0..24);
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.15) {
                char::from_u32(rng.gen_range(0x20..0x3000)).unwrap_or('x').to_string()
            } else {
                PIECES[rng.gen_range(0..PIECES.len())].to_string()
            }
        })
        .collect()
}

fn fuzz_http(rng: &mut ChaCha8Rng) -> String {
    const METHODS: [&str; 5] = ["GET", "post", "Put", "DELETE", "x"];
    const PIECES: [&str; 14] = ["/", "//", "a", "login", ".html", ".PNG", "?", "&", "=", "#", "x=1", "p", "%20", "."];
    let mut line = String::from(METHODS[rng.gen_range(0..METHODS.len())]);
    line.push(' ');
    for _ in 0..rng.gen_range(1..12) {
        line.push_str(PIECES[rng.gen_range(0..PIECES.len())]);
    }
    if rng.gen_bool(0.2) {
        line.push_str(" HTTP/1.1");
    }
    line
}

/// 6. Normalizer idempotence and literal-free skeletons on fuzzed input.
fn normalization_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let exts = StaticExtensions::default();
    let mut http_ok = 0;
    for i in 0..10_000 {
        let raw = fuzz_sql(&mut rng);
        let once = normalize_sql(&raw);
        ensure(normalize_sql(once.skeleton()) == once, || format!("sql #{i} not idempotent: {raw:?}"))?;
        ensure(!once.skeleton().contains(['\'', '"']), || format!("sql #{i} keeps a quote: {raw:?}"))?;
        let digit_only = once
            .skeleton()
            .split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '$'))
            .any(|tok| !tok.is_empty() && tok.chars().all(|c| c.is_ascii_digit()));
        ensure(!digit_only, || format!("sql #{i} keeps a numeric literal: {raw:?}"))?;

        let raw = fuzz_http(&mut rng);
        if let Ok((key, is_static)) = normalize_http(&raw, &exts) {
            let again = normalize_http(&key.to_string(), &exts).map_err(|e| e.to_string())?;
            ensure(again == (key.clone(), is_static), || format!("http #{i} not idempotent: {raw:?}"))?;
            let mut names = key.param_names().to_vec();
            names.dedup();
            ensure(!key.path().contains('?') && names.len() == key.param_names().len(), || {
                format!("http #{i} malformed key: {raw:?}")
            })?;
            http_ok += 1;
        }
    }
    within(start.elapsed(), 5)?;
    Ok(format!("10000 sql + 10000 http inputs ({http_ok} parsable), {:.2?}", start.elapsed()))
}

/// 7. Train on 10k sessions and detect 10k sessions in under 30 s.
fn scale_smoke() -> Outcome {
    let dir = TempDir::new().unwrap();
    let training = simulate(dir.path(), "train.jsonl", 10_000, 71, &[])?;
    let test = simulate(dir.path(), "test.jsonl", 10_000, 72, &["--attack", "direct_db", "--attack-rate", "0.01"])?;
    let events = fs::read_to_string(&training).unwrap().lines().count();
    let model = dir.path().join("model.json");
    let start = Instant::now();
    let code = train(&training, &model, 1);
    ensure(code == EXIT_OK, || format!("train exited {code}"))?;
    let report = detect(&model, &test, &dir.path().join("report.json"))?;
    let elapsed = start.elapsed();
    ensure(report["totals"]["suspicious"] == 100, || format!("totals {}", report["totals"]))?;
    within(elapsed, 30)?;
    Ok(format!("{events} training events, train+detect {elapsed:.2?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 oracle equivalence", oracle_equivalence),
        ("2 training closure", training_closure),
        ("3 attack matrix", attack_matrix),
        ("4 threshold behavior", threshold_behavior),
        ("5 determinism and round-trips", determinism),
        ("6 normalization properties", normalization_properties),
        ("7 scale smoke test", scale_smoke),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why})");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
