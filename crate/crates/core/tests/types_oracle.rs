mod common;

use common::oracle;

#[test]
fn universe_size() {
    // 3 base types, 12 of depth 1, 228 of depth 2.
    assert_eq!(oracle::universe().len(), 243);
}

#[test]
fn random_graphs_agree_with_oracle() {
    let sigs = tk_core::builtins::signature();
    let universe = oracle::universe();
    let mut ok = 0;
    let mut truncated = 0;
    for seed in 0..1000 {
        let g = oracle::random_graph(seed);
        assert!(g.nodes().iter().filter(|n| !matches!(&n.kind, tk_core::NodeKind::Function(f) if f.name == "copy")).count() <= 10);
        let r = oracle::check_graph(&g, &sigs, &universe);
        assert!(r.failures.is_empty(), "seed {seed}: {:?}\n{}", r.failures, tk_core::codec::serialize_graph(&g));
        assert_eq!(r.lacks_violations, 0, "seed {seed}");
        ok += r.inferred_ok as usize;
        truncated += r.truncated;
    }
    eprintln!("{ok} of 1000 inferred, {truncated} components truncated");
    // Both outcomes should be well represented.
    assert!(ok > 200 && ok < 900, "{ok} of 1000 inferred");
    assert!(truncated < 100, "{truncated}");
}

#[test]
fn oracle_rejects_float_str() {
    let mut b = tk_core::GraphBuilder::new();
    let s = b.constant(tk_core::Value::str("s"));
    let f = b.function("builtin/fsub");
    b.edge(s, "value", f, "a");
    b.from_input("x", f, "b");
    b.to_output(f, "value", "value");
    let g = b.build().unwrap();
    let p = oracle::problem(&g);
    let universe = oracle::universe();
    assert!(oracle::components(&p).iter().any(|c| oracle::solve(&p, c, &universe, 1).found.is_empty()));
}

#[test]
fn oracle_counts_pairs() {
    let g = oracle::pairer();
    let p = oracle::problem(&g);
    let universe = oracle::universe();
    let comps = oracle::components(&p);
    assert_eq!(comps.len(), 1);
    // Pair components range over the 15 types of depth <= 1.
    assert_eq!(oracle::solve(&p, &comps[0], &universe, 1_000_000).found.len(), 225);
}

#[test]
fn eval_input_takes_thunk_type() {
    let mut b = tk_core::GraphBuilder::new();
    let c = b.constant(tk_core::Value::graph(tk_core::corpus::zexp_to_parity()));
    let e = b.function("builtin/eval");
    b.edge(c, "value", e, "thunk");
    b.from_input("x", e, "x");
    b.to_output(e, "parity", "parity");
    let g = b.build().unwrap();
    let sigs = tk_core::builtins::signature();
    let r = oracle::check_graph(&g, &sigs, &oracle::universe());
    assert!(r.inferred_ok && r.failures.is_empty(), "{:?}", r.failures);
}
