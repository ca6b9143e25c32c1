use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use tk_core::corpus;
use tk_core::doubles;
use tk_core::exec::{self, CheckpointReason, ExecConfig, ExecErrorKind, FireOrder, Job, JobStatus, PrepareError, RestoreError};
use tk_core::types::{Row, Type, TypeScheme};
use tk_core::worker::{FnWorker, FunctionIndex};
use tk_core::{GraphBuilder, Label, Ports, Value};

fn ports<const N: usize>(entries: [(&'static str, Value); N]) -> Ports {
    entries.into_iter().map(|(k, v)| (Label::from_static(k), v)).collect()
}

fn run(g: &tk_core::Graph, inputs: Ports, config: &ExecConfig) -> Result<Ports, exec::ExecError> {
    let index = doubles::index();
    let plan = exec::prepare(g, inputs, &index).expect("graph type-checks");
    exec::run(&plan, &index, config).result
}

#[test]
fn parity_values() {
    let g = corpus::zexp_to_parity();
    for (x, want) in [(0.2, 0.4), (0.0, 0.5), (1.0, 0.0)] {
        let out = run(&g, ports([("x", Value::Float(x))]), &ExecConfig::default()).unwrap();
        assert_eq!(out["parity"], Value::Float(want), "x = {x}");
    }
}

#[test]
fn corpus_runs_in_every_order() {
    let index = doubles::index();
    for ex in corpus::examples() {
        let plan = exec::prepare(&ex.graph, ex.inputs.clone(), &index).unwrap_or_else(|e| panic!("{}: {e}", ex.name));
        let reference = exec::run(&plan, &index, &ExecConfig::sequential());
        let reference = reference.result.unwrap_or_else(|e| panic!("{}: {e}", ex.name));
        assert_eq!(reference, exec::run(&plan, &index, &ExecConfig::default()).result.unwrap(), "{}", ex.name);
        for seed in 0..4 {
            let out = exec::run(&plan, &index, &ExecConfig::seeded(seed)).result.unwrap();
            assert_eq!(out, reference, "{} seed {seed}", ex.name);
        }
    }
}

#[test]
fn example_results() {
    let index = doubles::index();
    let by_name: BTreeMap<&str, Ports> = corpus::examples()
        .into_iter()
        .map(|ex| {
            let plan = exec::prepare(&ex.graph, ex.inputs, &index).unwrap();
            (ex.name, exec::run(&plan, &index, &ExecConfig::sequential()).result.unwrap())
        })
        .collect();
    assert_eq!(by_name["passthrough"]["v"], Value::Int(7));
    assert_eq!(by_name["boxed_parity"]["parity"], Value::Float(0.5));
    assert_eq!(by_name["counting_loop"]["value"], Value::Int(8));
    assert_eq!(by_name["match_break"]["value"], Value::Int(13));
    assert_eq!(by_name["match_continue"]["value"], Value::Int(6));
    assert_eq!(by_name["partial_then_eval"]["parity"], Value::Float(0.4));
    assert_eq!(by_name["parallel_eval"]["parity"], Value::Float(0.4));
    assert_eq!(by_name["parallel_eval"]["y"], Value::Int(1));
    let c = doubles::cost(&[0.2, 0.2]);
    assert_eq!(
        by_name["initial"]["value"],
        Value::vec([Value::pair(Value::floats(&[0.2, 0.2]), Value::Float(c))])
    );
}

#[test]
fn sleepers_overlap() {
    let g = corpus::sleepers(150);
    let config = ExecConfig {
        max_concurrency: 3,
        ..ExecConfig::default()
    };
    let t = Instant::now();
    let out = run(&g, Ports::new(), &config).unwrap();
    let parallel = t.elapsed();
    assert_eq!(out["value"], Value::Int(450));
    let t = Instant::now();
    run(&g, Ports::new(), &ExecConfig::sequential()).unwrap();
    let sequential = t.elapsed();
    assert!(sequential >= Duration::from_millis(450), "{sequential:?}");
    if cfg!(feature = "parallel") {
        assert!(parallel < Duration::from_millis(400), "{parallel:?}");
    }
}

#[test]
fn loop_frames_stay_bounded() {
    let index = doubles::index();
    let g = corpus::counting_loop_from_input(1000);
    let plan = exec::prepare(&g, ports([("start", Value::Int(0))]), &index).unwrap();
    let out = exec::run(&plan, &index, &ExecConfig::default());
    assert_eq!(out.result.unwrap()["value"], Value::Int(1000));
    assert!(out.stats.peak_frames <= 4, "{:?}", out.stats);
    assert_eq!(out.stats.unsafe_fires, 0);
    assert_eq!(out.stats.slot_violations, 0);
}

#[test]
fn iteration_cap() {
    let config = ExecConfig {
        max_loop_iters: Some(5),
        ..ExecConfig::default()
    };
    let err = run(&corpus::counting_loop(100, 0), Ports::new(), &config).unwrap_err();
    assert_eq!(err.kind, ExecErrorKind::MaxIterations(5));
    assert_eq!(err.path.len(), 1);
    // 5 activations are enough to count from 0 to 4 and break.
    assert!(run(&corpus::counting_loop(4, 0), Ports::new(), &config).is_ok());
}

fn bad_index(out: Value) -> FunctionIndex {
    let scheme = TypeScheme::monomorphic(Row::closed([("x", Type::Int)]), Row::closed([("value", Type::Int)]));
    let w = FnWorker::new().function("bad/f", scheme, move |_, _| Ok(ports([("value", out.clone())])));
    FunctionIndex::builtin().with_worker("bad", Arc::new(w)).unwrap()
}

#[test]
fn worker_output_is_checked() {
    let mut b = GraphBuilder::new();
    let f = b.function("bad/f");
    b.from_input("x", f, "x");
    b.to_output(f, "value", "value");
    let g = b.build().unwrap();
    for concurrency in [1, 4] {
        let index = bad_index(Value::str("nope"));
        let plan = exec::prepare(&g, ports([("x", Value::Int(1))]), &index).unwrap();
        let config = ExecConfig {
            max_concurrency: concurrency,
            ..ExecConfig::default()
        };
        let err = exec::run(&plan, &index, &config).result.unwrap_err();
        match err.kind {
            ExecErrorKind::OutputTypeViolation { function, port, .. } => {
                assert_eq!(function.to_string(), "bad/f");
                assert_eq!(port.as_str(), "value");
            }
            other => panic!("{other:?}"),
        }
        let index = bad_index(Value::Int(2));
        let plan = exec::prepare(&g, ports([("x", Value::Int(1))]), &index).unwrap();
        assert_eq!(exec::run(&plan, &index, &config).result.unwrap()["value"], Value::Int(2));
    }
}

#[test]
fn prepare_rejects() {
    let index = doubles::index();
    let g = corpus::zexp_to_parity();
    match exec::prepare(&g, ports([("x", Value::Int(1))]), &index) {
        Err(PrepareError::InputMismatch(errs)) => assert!(!errs.is_empty()),
        other => panic!("{other:?}"),
    }
    let mut b = GraphBuilder::new();
    let f = b.function("nowhere/f");
    b.to_output(f, "value", "value");
    let g = b.build_raw();
    match exec::prepare(&g, Ports::new(), &index) {
        Err(PrepareError::UnknownFunction(f)) => assert_eq!(f.to_string(), "nowhere/f"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn builtin_failure_is_located() {
    let mut b = GraphBuilder::new();
    let inner = {
        let mut b = GraphBuilder::new();
        let d = b.function("builtin/idiv_checked");
        b.from_input("a", d, "a");
        b.from_input("b", d, "b");
        b.to_output(d, "value", "value");
        b.build().unwrap()
    };
    let bx = b.boxed(inner, None);
    b.from_input("a", bx, "a");
    b.from_input("b", bx, "b");
    b.to_output(bx, "value", "value");
    let g = b.build().unwrap();
    let err = run(&g, ports([("a", Value::Int(1)), ("b", Value::Int(0))]), &ExecConfig::default()).unwrap_err();
    assert!(matches!(err.kind, ExecErrorKind::Builtin { .. }), "{err:?}");
    assert_eq!(err.path.len(), 2);
}

fn loop_checkpoints(limit: i64) -> (Ports, Vec<(u64, Vec<u8>)>) {
    let index = doubles::index();
    let g = corpus::counting_loop(limit, 0);
    let plan = exec::prepare(&g, Ports::new(), &index).unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&seen);
    let config = ExecConfig {
        checkpoint_loop_iterations: true,
        on_checkpoint: Some(Arc::new(move |reason, bytes| {
            if let CheckpointReason::LoopIteration { iter, .. } = reason {
                sink.lock().unwrap().push((iter, bytes));
            }
        })),
        ..ExecConfig::default()
    };
    let out = exec::run(&plan, &index, &config).result.unwrap();
    let cps = seen.lock().unwrap().clone();
    (out, cps)
}

#[test]
fn resume_from_every_iteration() {
    let index = doubles::index();
    let (want, cps) = loop_checkpoints(20);
    assert_eq!(want["value"], Value::Int(20));
    assert_eq!(cps.iter().map(|c| c.0).collect::<Vec<_>>(), (1..=21).collect::<Vec<_>>());
    for (iter, bytes) in &cps {
        let state = exec::restore(bytes, &BTreeMap::new(), &index).unwrap();
        for config in [ExecConfig::sequential(), ExecConfig::default()] {
            let got = exec::resume(state.clone(), &index, &config).result.unwrap();
            assert_eq!(got, want, "iteration {iter}");
        }
    }
}

#[test]
fn checkpoint_is_canonical() {
    let index = doubles::index();
    let (_, cps) = loop_checkpoints(3);
    for (_, bytes) in &cps {
        let state = exec::restore(bytes, &BTreeMap::new(), &index).unwrap();
        let again = tk_core::codec::canonical(&exec::checkpoint_json(&state));
        assert_eq!(again.as_bytes(), &bytes[..]);
    }
}

#[test]
fn missing_graph_hash() {
    let index = doubles::index();
    let (_, cps) = loop_checkpoints(3);
    let mut doc: serde_json::Value = serde_json::from_slice(&cps[1].1).unwrap();
    let graphs = doc["graphs"].as_object_mut().unwrap();
    let victim = graphs.keys().next().unwrap().clone();
    graphs.remove(&victim);
    let bytes = serde_json::to_vec(&doc).unwrap();
    match exec::restore(&bytes, &BTreeMap::new(), &index) {
        Err(RestoreError::GraphHashMissing(h)) => assert_eq!(h, victim),
        other => panic!("{other:?}"),
    }
}

#[test]
fn cancel_and_checkpoint_a_job() {
    let index = Arc::new(doubles::index());
    let g = corpus::counting_loop(i64::MAX, 0);
    let plan = exec::prepare(&g, Ports::new(), &index).unwrap();
    let job = Job::start(plan, Arc::clone(&index), ExecConfig::default());
    std::thread::sleep(Duration::from_millis(20));
    assert_eq!(job.status(), JobStatus::Running);
    let live = job.checkpoint().expect("running jobs snapshot");
    assert!(exec::restore(&live, &BTreeMap::new(), &index).is_ok());
    job.cancel();
    assert_eq!(job.wait(), JobStatus::Cancelled);
    let last = job.checkpoint().expect("cancelled jobs keep their state");
    let state = exec::restore(&last, &BTreeMap::new(), &index).unwrap();
    let config = ExecConfig {
        max_loop_iters: Some(1),
        ..ExecConfig::default()
    };
    let err = exec::resume(state, &index, &config).result.unwrap_err();
    assert!(matches!(err.kind, ExecErrorKind::MaxIterations(1)));
}

#[test]
fn job_completes() {
    let index = Arc::new(doubles::index());
    let plan = exec::prepare(&corpus::zexp_to_parity(), ports([("x", Value::Float(0.0))]), &index).unwrap();
    let job = Job::start(plan, index, ExecConfig::default());
    match job.wait_timeout(Duration::from_secs(5)) {
        Some(JobStatus::Done(out)) => assert_eq!(out["parity"], Value::Float(0.5)),
        other => panic!("{other:?}"),
    }
    assert!(job.checkpoint().is_none());
}

#[test]
fn after_fire_checkpoints_resume() {
    let index = doubles::index();
    let ex = corpus::examples().into_iter().find(|e| e.name == "zne").unwrap();
    let plan = exec::prepare(&ex.graph, ex.inputs, &index).unwrap();
    let want = exec::run(&plan, &index, &ExecConfig::sequential()).result.unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&seen);
    let config = ExecConfig {
        order: FireOrder::Seeded(3),
        checkpoint_after_fires: (1..40).collect(),
        on_checkpoint: Some(Arc::new(move |_, b| sink.lock().unwrap().push(b))),
        ..ExecConfig::default()
    };
    assert_eq!(exec::run(&plan, &index, &config).result.unwrap(), want);
    let cps = seen.lock().unwrap().clone();
    assert!(cps.len() > 10);
    for bytes in cps {
        let state = exec::restore(&bytes, &BTreeMap::new(), &index).unwrap();
        assert_eq!(exec::resume(state, &index, &ExecConfig::default()).result.unwrap(), want);
    }
}

#[test]
fn variational_converges() {
    let index = doubles::index();
    let plan = exec::prepare(&corpus::variational(1e-6), Ports::new(), &index).unwrap();
    let out = exec::run(&plan, &index, &ExecConfig::default());
    let result = out.result.unwrap();
    let cost = result["cost"].as_float().unwrap();
    assert!((cost + 1.0).abs() < 1e-3, "{cost}");
    assert!(out.stats.activations < 520);
}

fn edit_nodes(g: &tk_core::Graph, keep: impl Fn(&tk_core::Node) -> Option<tk_core::Node>) -> tk_core::Graph {
    let nodes: Vec<_> = g.nodes().iter().filter_map(keep).collect();
    let ids: std::collections::BTreeSet<_> = nodes.iter().map(|n| n.id).collect();
    let edges = g
        .edges()
        .iter()
        .filter(|e| ids.contains(&e.src.node) && ids.contains(&e.dst.node))
        .cloned()
        .collect();
    tk_core::Graph::from_parts(g.name.clone(), nodes, edges)
}

#[test]
fn resume_after_deleting_consumed_constant() {
    let index = doubles::index();
    let (want, cps) = loop_checkpoints(20);
    let root = corpus::counting_loop(20, 0);
    let edited = edit_nodes(&root, |n| match n.kind {
        tk_core::NodeKind::Const(Value::Int(0)) => None,
        _ => Some(n.clone()),
    });
    assert_eq!(edited.nodes().len() + 1, root.nodes().len());
    let replacements = BTreeMap::from([(exec::graph_hash(&root), edited)]);
    for (iter, bytes) in &cps {
        let state = exec::restore(bytes, &replacements, &index).unwrap_or_else(|e| panic!("iteration {iter}: {e}"));
        assert_eq!(exec::resume(state, &index, &ExecConfig::default()).result.unwrap(), want);
    }
}

#[test]
fn resume_with_incompatible_body() {
    let index = doubles::index();
    let (_, cps) = loop_checkpoints(20);
    let body = corpus::counting_body(20);
    let fsub: tk_core::FunctionName = "builtin/fsub".parse().unwrap();
    let edited = edit_nodes(&body, |n| {
        let mut n = n.clone();
        if matches!(&n.kind, tk_core::NodeKind::Function(f) if f.name == "ilt") {
            n.kind = tk_core::NodeKind::Function(fsub.clone());
        }
        Some(n)
    });
    let replacements = BTreeMap::from([(exec::graph_hash(&body), edited)]);
    match exec::restore(&cps[5].1, &replacements, &index) {
        Err(RestoreError::ResumeTypeError { errors, .. }) => assert!(!errors.is_empty()),
        other => panic!("{other:?}"),
    }
}
