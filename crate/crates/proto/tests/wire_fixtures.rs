//! The committed corpus under `fixtures/wire/` must match what this crate
//! emits, and every file there must decode and re-encode to the same bytes.
//! `TK_BLESS=1 cargo test -p tk-proto --test wire_fixtures` rewrites it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value as Json};
use tk_core::codec::{self, Decoded};
use tk_core::exec::{self, CheckpointReason, ExecConfig};
use tk_core::types::{infer_graph, Type};
use tk_core::value::{Label, Ports, Value};
use tk_core::worker::{FunctionIndex, RunContext};
use tk_core::{builtins, corpus, doubles};
use tk_proto::wire::{type_error_to_json, ResumeRequest, RunRequest, SubmitRequest};
use tk_proto::{ErrorBody, JobOptions, JobRecord, JobState};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/wire")
}

fn ports<const N: usize>(entries: [(&'static str, Value); N]) -> Ports {
    entries.into_iter().map(|(k, v)| (Label::from_static(k), v)).collect()
}

fn counting_checkpoint(at: u64) -> Vec<u8> {
    let index = FunctionIndex::builtin();
    let plan = exec::prepare(&corpus::counting_loop(5, 0), Ports::new(), &index).unwrap();
    let seen = Arc::new(Mutex::new(None));
    let sink = Arc::clone(&seen);
    let config = ExecConfig {
        checkpoint_loop_iterations: true,
        on_checkpoint: Some(Arc::new(move |reason, bytes| {
            if matches!(reason, CheckpointReason::LoopIteration { iter, .. } if iter == at) {
                *sink.lock().unwrap() = Some(bytes);
            }
        })),
        ..ExecConfig::sequential()
    };
    exec::run(&plan, &index, &config).result.unwrap();
    let bytes = seen.lock().unwrap().take();
    bytes.expect("checkpoint taken")
}

fn fixtures() -> Vec<(String, Json)> {
    let mut out: Vec<(String, Json)> = Vec::new();
    let mut put = |dir: &str, name: &str, j: Json| out.push((format!("{dir}/{name}.json"), j));

    let values = [
        ("bool", Value::Bool(true)),
        ("int_negative", Value::Int(-3)),
        ("int_max", Value::Int(i64::MAX)),
        ("float", Value::Float(0.4)),
        ("float_integral", Value::Float(2.0)),
        ("float_tiny", Value::Float(5e-324)),
        ("float_nan", Value::Float(f64::NAN)),
        ("float_neg_infinity", Value::Float(f64::NEG_INFINITY)),
        ("str_unicode", Value::str("zé ∑ \"q\"\n")),
        ("pair", Value::pair(Value::Int(1), Value::str("s"))),
        ("vec_empty", Value::vec([])),
        ("vec_floats", Value::floats(&[0.2, 0.2])),
        (
            "map",
            Value::map([(Value::str("b"), Value::Int(2)), (Value::str("a"), Value::Int(1))]).unwrap(),
        ),
        (
            "struct",
            Value::structure([(Label::from_static("y"), Value::Bool(false)), (Label::from_static("x"), Value::Int(0))]),
        ),
        ("variant", Value::variant(Label::from_static("break"), Value::Int(3))),
        ("graph_thunk", Value::graph(corpus::zexp_to_parity())),
    ];
    for (name, v) in &values {
        put("values", name, codec::value_to_json(v));
    }

    let sig = builtins::signature();
    let annotated = infer_graph(&corpus::zexp_to_parity(), &sig).unwrap().graph;
    for (name, g) in [
        ("zexp_to_parity", corpus::zexp_to_parity()),
        ("zexp_to_parity_annotated", annotated),
        ("passthrough", corpus::passthrough("v")),
        ("initial", corpus::initial()),
        ("counting_loop", corpus::counting_loop(5, 0)),
        ("match_dispatch", corpus::match_dispatch("break")),
        ("boxed_parity", corpus::boxed_parity()),
        ("zne", corpus::zne()),
        ("variational", corpus::variational(1e-6)),
    ] {
        put("graphs", name, codec::graph_to_json(&g));
    }

    for (name, t) in [
        ("float", Type::Float),
        ("vec_pair", Type::vec(Type::pair(Type::Int, Type::Str))),
        ("map", Type::map(Type::Str, Type::Float)),
    ] {
        put("types", name, codec::type_to_json(&t));
    }

    for f in ["eval", "partial", "switch", "push", "make_pair", "fsub", "fdiv", "make_struct", "parallel", "loop"] {
        let s = sig.get(&tk_core::value::FunctionName::builtin(f)).unwrap();
        put("schemes", f, codec::scheme_to_json(s));
    }

    put("signatures", "builtin", codec::signature_to_json(&sig));
    put("signatures", "empty", codec::signature_to_json(&tk_core::signature::Signature::new()));
    let mut mock = doubles::index().signature().without_namespace(builtins::NAMESPACE).without_namespace("optimizer");
    mock.idempotent = true;
    put("signatures", "mock", codec::signature_to_json(&mock));

    let ctx = RunContext {
        callback: "http://127.0.0.1:8080".into(),
        job: "3f2b6c1e-0000-4000-8000-000000000001".into(),
        token: Some("secret".into()),
    };
    put(
        "requests",
        "run_exponent",
        RunRequest {
            inputs: ports([("a", Value::Float(2.0)), ("b", Value::Float(3.0))]),
            context: ctx.clone(),
        }
        .to_json(),
    );
    put(
        "requests",
        "run_no_token",
        RunRequest {
            inputs: ports([("value", Value::Int(1))]),
            context: RunContext { token: None, ..ctx.clone() },
        }
        .to_json(),
    );
    put(
        "requests",
        "submit_parity",
        SubmitRequest {
            graph: corpus::zexp_to_parity(),
            inputs: ports([("x", Value::Float(0.2))]),
            options: JobOptions {
                max_loop_iters: Some(1000),
                max_concurrency: Some(4),
            },
        }
        .to_json(),
    );
    let ckpt = counting_checkpoint(3);
    put("checkpoints", "counting_loop_iter3", codec::parse(std::str::from_utf8(&ckpt).unwrap()).unwrap());
    put("requests", "resume_counting", ResumeRequest::new(&ckpt).unwrap().to_json());

    put("responses", "outputs_exponent", tk_proto::wire::outputs_to_json(&ports([("value", Value::Float(8.0))])));
    put("responses", "job_id", json!({ "id": ctx.job }));
    for (name, state) in [
        ("job_running", JobState::Running),
        ("job_done", JobState::Done(ports([("parity", Value::Float(0.4))]))),
        ("job_failed", JobState::Failed(ErrorBody::new("MaxIterations", "loop exceeded 2 iterations at 3"))),
        ("job_cancelled", JobState::Cancelled),
    ] {
        let r = JobRecord {
            id: ctx.job.clone(),
            graph_hash: exec::graph_hash(&corpus::zexp_to_parity()),
            state,
        };
        put("responses", name, r.to_json());
    }

    let bad = {
        let mut b = tk_core::graph::GraphBuilder::named("bad");
        let k = b.constant(Value::str("s"));
        let f = b.function("builtin/fsub");
        b.edge(k, "value", f, "a");
        b.from_input("b", f, "b");
        b.to_output(f, "value", "value");
        b.build().unwrap()
    };
    let e = exec::prepare(&bad, Ports::new(), &FunctionIndex::builtin()).unwrap_err();
    put("errors", "type_error", ErrorBody::from_prepare(&e).to_json());
    put("errors", "unknown_function", ErrorBody::new("UnknownFunction", "unknown function missing/f").to_json());
    put("errors", "unauthorized", ErrorBody::new("Unauthorized", "missing or wrong token").to_json());
    let mut failed = ErrorBody::new("FunctionFailed", "boom");
    failed.detail = Some(json!({ "traceback": ["line 1"] }));
    put("errors", "function_failed", failed.to_json());
    if let Some(first) = e.type_errors().first() {
        put("errors", "type_error_entry", type_error_to_json(first));
    }
    out
}

/// Decodes `j` as the kind its directory holds and encodes it again.
fn reencode(dir: &str, name: &str, j: &Json) -> Decoded<Json> {
    Ok(match dir {
        "values" => codec::value_to_json(&codec::value_from_json(j, "")?),
        "graphs" => codec::graph_to_json(&codec::graph_from_json(j, "")?),
        "types" => codec::type_to_json(&codec::type_from_json(j, "")?),
        "schemes" => codec::scheme_to_json(&codec::scheme_from_json(j, "")?),
        "signatures" => codec::signature_to_json(&codec::signature_from_json(j, "")?),
        "requests" if name.starts_with("run") => RunRequest::from_json(j)?.to_json(),
        "requests" if name.starts_with("submit") => SubmitRequest::from_json(j)?.to_json(),
        "requests" if name.starts_with("resume") => ResumeRequest::from_json(j)?.to_json(),
        "responses" if name.starts_with("outputs") => tk_proto::wire::outputs_to_json(&tk_proto::wire::outputs_from_json(j)?),
        "responses" if name.starts_with("job_id") => json!({ "id": tk_proto::wire::job_id_from_json(j)? }),
        "responses" => JobRecord::from_json(j)?.to_json(),
        "errors" if name.ends_with("_entry") => j.clone(),
        "errors" => ErrorBody::from_json(j)?.to_json(),
        "checkpoints" => {
            let bytes = codec::canonical(j).into_bytes();
            exec::restore(&bytes, &BTreeMap::new(), &FunctionIndex::builtin())
                .map_err(|e| codec::DecodeError::new("", e.to_string()))?;
            j.clone()
        }
        other => panic!("no decoder for fixtures/wire/{other}"),
    })
}

#[test]
fn corpus_matches_encoder() {
    let root = root();
    let bless = std::env::var_os("TK_BLESS").is_some();
    let mut stale = Vec::new();
    for (rel, j) in fixtures() {
        let path = root.join(&rel);
        let text = codec::canonical(&j);
        if bless {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &text).unwrap();
        } else if std::fs::read_to_string(&path).ok().as_deref() != Some(text.as_str()) {
            stale.push(rel);
        }
    }
    assert!(stale.is_empty(), "fixtures out of date (rerun with TK_BLESS=1): {stale:?}");
}

#[test]
fn every_fixture_round_trips_byte_identically() {
    let mut seen = 0;
    for dir in std::fs::read_dir(root()).unwrap() {
        let dir = dir.unwrap().path();
        let dname = dir.file_name().unwrap().to_str().unwrap().to_string();
        for f in std::fs::read_dir(&dir).unwrap() {
            let path = f.unwrap().path();
            let name = path.file_stem().unwrap().to_str().unwrap().to_string();
            let text = std::fs::read_to_string(&path).unwrap();
            let j = codec::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let again = reencode(&dname, &name, &j).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(codec::canonical(&again), text, "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 40, "only {seen} fixtures");
}

#[test]
fn decoders_reject_malformed_input() {
    for (text, path) in [
        (r#"{"float":"nan"}"#, "/float"),
        (r#"{"int":1,"str":"x"}"#, ""),
        (r#"{"vec":[{"int":1},{"bogus":{}}]}"#, "/vec/1"),
    ] {
        let err = codec::value_from_json(&codec::parse(text).unwrap(), "").unwrap_err();
        assert_eq!(err.path, path, "{text}");
    }
    let err = RunRequest::from_json(&json!({ "inputs": {} })).unwrap_err();
    assert_eq!(err.path, "/context");
}
