use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value as Json;
use tk_core::{codec, corpus, GraphBuilder, Value};

fn tk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tk"))
        .args(args)
        .env_remove("TIERKREIS_TOKEN")
        .env_remove("TIERKREIS_WORKERS")
        .env_remove("TIERKREIS_BIND")
        .output()
        .expect("spawn tk")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Json {
    serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("{e}: {:?}", stdout(o)))
}

fn graph_file(dir: &Path, name: &str, g: &tk_core::Graph) -> String {
    let p = dir.join(format!("{name}.tkg.json"));
    std::fs::write(&p, codec::serialize_graph(g)).unwrap();
    p.to_str().unwrap().to_string()
}

fn wire_graph(name: &str) -> String {
    let p: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../fixtures/wire/graphs/{name}.json"));
    p.to_str().unwrap().to_string()
}

/// `tk serve` on an ephemeral port; killed on drop.
struct Serve {
    child: Child,
    url: String,
}

impl Serve {
    fn start(extra: &[&str]) -> Serve {
        let mut child = Command::new(env!("CARGO_BIN_EXE_tk"))
            .args(["serve", "--bind", "127.0.0.1:0"])
            .args(extra)
            .env_remove("TIERKREIS_TOKEN")
            .env_remove("TIERKREIS_WORKERS")
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let doc: Json = serde_json::from_str(&line).unwrap();
        Serve {
            url: doc["url"].as_str().unwrap().to_string(),
            child,
        }
    }
}

impl Drop for Serve {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[test]
fn run_prints_outputs() {
    let o = tk(&["run", &wire_graph("zexp_to_parity"), "--input", "x=0.2"]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o), "{\"parity\":{\"float\":0.4}}\n");
}

#[test]
fn sequential_runs_are_byte_identical() {
    let g = wire_graph("zne");
    let dir = tempfile::tempdir().unwrap();
    let runner = dir.path().join("runner.tkv.json");
    std::fs::write(&runner, codec::serialize_value(&Value::graph(corpus::constant_runner(0.25)))).unwrap();
    let runner = format!("runner=@{}", runner.display());
    let args = ["run", &g, "--mock", "--jobs", "1", "--input", "circuit=c", "--input", &runner];
    let a = tk(&args);
    let b = tk(&args);
    assert!(a.status.success(), "{a:?}");
    assert_eq!(a.stdout, b.stdout);
    let seeded = tk(&[&args[..], &["--seed", "7"]].concat());
    assert_eq!(seeded.stdout, a.stdout);
}

#[test]
fn check_annotates_edges() {
    let o = tk(&["check", &wire_graph("zexp_to_parity")]);
    assert!(o.status.success(), "{o:?}");
    let doc = json(&o);
    let lines = doc["annotations"].as_array().unwrap();
    assert_eq!(lines.len(), 6);
    assert!(lines[..5].iter().all(|l| l.as_str().unwrap().ends_with(": Float")), "{lines:?}");
    assert_eq!(lines[5], "scheme: (x: Float) -> (parity: Float)");
}

#[test]
fn check_reports_located_type_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = GraphBuilder::new();
    let s = b.constant(Value::str("s"));
    let f = b.function("builtin/fsub");
    b.edge(s, "value", f, "a");
    b.from_input("x", f, "b");
    b.to_output(f, "value", "value");
    let bad = graph_file(dir.path(), "bad", &b.build().unwrap());
    let o = tk(&["check", &bad]);
    assert_eq!(o.status.code(), Some(1));
    let err = &json(&o)["error"];
    assert_eq!(err["kind"], "TypeError");
    let at = &err["locations"][0]["at"];
    assert_eq!(at["dst"][1], "a", "{err}");
    assert!(!o.stderr.is_empty());

    let mut b = GraphBuilder::new();
    let f = b.function("nowhere/f");
    b.to_output(f, "value", "value");
    let unknown = graph_file(dir.path(), "unknown", &b.build_raw());
    let o = tk(&["check", &unknown]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["error"]["kind"], "UnknownFunction");
}

#[test]
fn iteration_cap_is_a_user_error() {
    let o = tk(&["run", &wire_graph("counting_loop"), "--max-loop-iters", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["error"]["kind"], "MaxIterations");
    let o = tk(&["run", &wire_graph("counting_loop")]);
    assert_eq!(stdout(&o), "{\"value\":{\"int\":5}}\n");
}

#[test]
fn bad_input_exits_one() {
    let o = tk(&["run", &wire_graph("zexp_to_parity"), "--input", "x=hello"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["error"]["kind"], "InputMismatch");
    let o = tk(&["run", &wire_graph("zexp_to_parity"), "--input", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(tk(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn viz_writes_dot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.dot");
    let o = tk(&["viz", &wire_graph("initial"), "--types", "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let dot = std::fs::read_to_string(&out).unwrap();
    assert!(dot.starts_with("digraph"), "{dot}");
    assert!(dot.contains("Vec(Float)"));
    let o = tk(&["viz", &wire_graph("zexp_to_parity")]);
    assert!(json(&o)["dot"].as_str().unwrap().contains("fsub"));
}

#[test]
fn signature_lists_builtins() {
    let o = tk(&["signature"]);
    let doc = json(&o);
    assert!(doc["namespaces"]["builtin"]["functions"]["loop"].is_object());
    let o = tk(&["signature", "--mock", "--text"]);
    let text = stdout(&o);
    assert!(text.contains("mock/sleep_ms: (ms: Int) -> (value: Int)\n"), "{text}");
}

#[test]
fn remote_runs_match_local_runs() {
    let server = Serve::start(&["--mock"]);
    let dir = tempfile::tempdir().unwrap();
    for ex in corpus::examples() {
        let g = graph_file(dir.path(), ex.name, &ex.graph);
        let mut inputs = Vec::new();
        for (k, v) in &ex.inputs {
            let p = dir.path().join(format!("{}_{k}.tkv.json", ex.name));
            std::fs::write(&p, codec::serialize_value(v)).unwrap();
            inputs.push("--input".to_string());
            inputs.push(format!("{k}=@{}", p.display()));
        }
        let inputs: Vec<&str> = inputs.iter().map(String::as_str).collect();
        let local = tk(&[&["run", g.as_str(), "--mock"][..], &inputs].concat());
        assert!(local.status.success(), "{}: {local:?}", ex.name);
        let remote = tk(&[&["submit", server.url.as_str(), g.as_str(), "--await"][..], &inputs].concat());
        assert!(remote.status.success(), "{}: {remote:?}", ex.name);
        assert_eq!(stdout(&local), stdout(&remote), "{}", ex.name);
    }
}

#[test]
fn jobs_cancel_checkpoint_and_resume() {
    let server = Serve::start(&["--token", "s3cret"]);
    let dir = tempfile::tempdir().unwrap();
    let g = graph_file(dir.path(), "forever", &corpus::counting_loop(i64::MAX, 0));
    let url = server.url.as_str();

    let o = tk(&["submit", url, &g]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
    assert_eq!(json(&o)["error"]["kind"], "Unauthorized");

    let o = tk(&["submit", url, &g, "--token", "s3cret"]);
    assert!(o.status.success(), "{o:?}");
    let id = json(&o)["id"].as_str().unwrap().to_string();
    let o = tk(&["job", url, &id, "--token", "s3cret"]);
    assert_eq!(json(&o)["status"], "running");

    let o = tk(&["job", url, &id, "--cancel", "--token", "s3cret"]);
    assert_eq!(json(&o)["status"], "cancelled", "{o:?}");
    let ckpt = dir.path().join("job.ckpt.json");
    let o = tk(&["job", url, &id, "--checkpoint", ckpt.to_str().unwrap(), "--token", "s3cret"]);
    assert!(o.status.success(), "{o:?}");
    assert!(json(&o)["bytes"].as_u64().unwrap() > 0);

    let o = tk(&["resume", url, ckpt.to_str().unwrap(), "--max-loop-iters", "3", "--await", "--token", "s3cret"]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
    assert_eq!(json(&o)["error"]["kind"], "MaxIterations");
}

#[test]
fn unreachable_runtime_exits_two() {
    let o = tk(&["submit", "http://127.0.0.1:1", &wire_graph("zexp_to_parity"), "--input", "x=0.2"]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}
