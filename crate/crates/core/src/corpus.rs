//! Example programs: the small graphs used in tests, benches and docs.
//!
//! Graphs that call `mock/*` or `optimizer/*` need a worker providing those
//! namespaces; [`crate::doubles`] has in-process ones.

use crate::graph::{Graph, GraphBuilder, NodeId};
use crate::value::Value;

fn build(b: GraphBuilder) -> Graph {
    b.build().expect("corpus graph is structurally valid")
}

/// f(x) = (1 - x) / 2.
pub fn zexp_to_parity() -> Graph {
    let mut b = GraphBuilder::named("zexp_to_parity");
    let one = b.constant(1.0);
    let fsub = b.function("builtin/fsub");
    let two = b.constant(2.0);
    let fdiv = b.function("builtin/fdiv");
    b.edge(one, "value", fsub, "a");
    b.from_input("x", fsub, "b");
    b.edge(fsub, "value", fdiv, "a");
    b.edge(two, "value", fdiv, "b");
    b.to_output(fdiv, "value", "parity");
    build(b)
}

/// Input `label` wired straight to output `label`.
pub fn passthrough(label: &str) -> Graph {
    let mut b = GraphBuilder::named("passthrough");
    let (i, o) = (b.input(), b.output());
    b.edge(i, label, o, label);
    build(b)
}

/// Evaluates the `run` thunk at [0.2, 0.2] and returns [(x, f(x))].
pub fn initial() -> Graph {
    let mut b = GraphBuilder::named("initial");
    let x = b.constant(Value::floats(&[0.2, 0.2]));
    let eval = b.function("builtin/eval");
    let pair = b.function("builtin/make_pair");
    let empty = b.constant(Value::vec([]));
    let push = b.function("builtin/push");
    b.from_input("run", eval, "thunk");
    b.edge(x, "value", eval, "value");
    b.edge(x, "value", pair, "first");
    b.edge(eval, "value", pair, "second");
    b.edge(empty, "value", push, "vec");
    b.edge(pair, "pair", push, "item");
    b.to_output(push, "vec", "value");
    build(b)
}

/// Wraps its `value` input in `Variant(tag, value)`.
pub fn tagger(tag: &str) -> Graph {
    let mut b = GraphBuilder::named(tag);
    let t = b.tag(tag);
    b.from_input("value", t, "value");
    b.to_output(t, "value", "value");
    build(b)
}

/// `(value: Int) -> continue(value + step)`.
pub fn increment_and_continue(step: i64) -> Graph {
    let mut b = GraphBuilder::named("continue");
    let k = b.constant(step);
    let add = b.function("builtin/iadd");
    let t = b.tag("continue");
    b.from_input("value", add, "a");
    b.edge(k, "value", add, "b");
    b.edge(add, "value", t, "value");
    b.to_output(t, "value", "value");
    build(b)
}

fn switch_eval(b: &mut GraphBuilder, pred: (NodeId, &str), if_true: Graph, if_false: Graph, arg: (NodeId, &str)) -> NodeId {
    let t = b.constant(Value::graph(if_true));
    let f = b.constant(Value::graph(if_false));
    let sw = b.function("builtin/switch");
    let eval = b.function("builtin/eval");
    b.edge(pred.0, pred.1, sw, "pred");
    b.edge(t, "value", sw, "if_true");
    b.edge(f, "value", sw, "if_false");
    b.edge(sw, "value", eval, "thunk");
    b.edge(arg.0, arg.1, eval, "value");
    eval
}

/// Loop body: continue(v + 1) while v < limit, else break(v).
pub fn counting_body(limit: i64) -> Graph {
    let mut b = GraphBuilder::named("count");
    let lim = b.constant(limit);
    let lt = b.function("builtin/ilt");
    let i = b.input();
    b.from_input("value", lt, "a");
    b.edge(lim, "value", lt, "b");
    let eval = switch_eval(&mut b, (lt, "value"), increment_and_continue(1), tagger("break"), (i, "value"));
    b.to_output(eval, "value", "value");
    build(b)
}

/// Runs [`counting_body`] from `start`; the result is `max(start, limit)`.
pub fn counting_loop(limit: i64, start: i64) -> Graph {
    let mut b = GraphBuilder::named("counting_loop");
    let body = b.constant(Value::graph(counting_body(limit)));
    let init = b.constant(start);
    let lp = b.function("builtin/loop");
    b.edge(body, "value", lp, "body");
    b.edge(init, "value", lp, "value");
    b.to_output(lp, "value", "value");
    build(b)
}

/// Counting loop whose start value is the graph input `start`.
pub fn counting_loop_from_input(limit: i64) -> Graph {
    let mut b = GraphBuilder::named("counting_loop");
    let body = b.constant(Value::graph(counting_body(limit)));
    let lp = b.function("builtin/loop");
    b.edge(body, "value", lp, "body");
    b.from_input("start", lp, "value");
    b.to_output(lp, "value", "value");
    build(b)
}

/// Loop body that breaks straight away.
pub fn break_body() -> Graph {
    tagger("break")
}

/// Cost evaluation with a captured circuit `_c0`:
/// `(value: Vec(Float), _c0: Str) -> (value: Float)`.
pub fn run_circuit() -> Graph {
    let mut b = GraphBuilder::named("run_circuit");
    let run = b.function("mock/run_circuit");
    let drop = b.function("builtin/discard");
    b.from_input("value", run, "params");
    b.from_input("_c0", drop, "value");
    b.to_output(run, "value", "value");
    build(b)
}

/// Variational loop body over a history `Vec(Pair(Vec(Float), Float))`.
/// The cost thunk arrives through the captured `_c0` input.
pub fn variational_body(tol: f64) -> Graph {
    let mut b = GraphBuilder::named("variational_body");
    let pop = b.function("builtin/pop");
    let unpack = b.function("builtin/unpack_pair");
    let step = b.function("optimizer/new_params");
    let cost = b.function("builtin/eval");
    let pair = b.function("builtin/make_pair");
    let push = b.function("builtin/push");
    let conv = b.function("optimizer/converged");
    let tol = b.constant(tol);
    let i = b.input();

    b.from_input("value", pop, "vec");
    b.edge(pop, "item", unpack, "pair");
    b.edge(unpack, "first", step, "params");
    b.edge(unpack, "second", step, "cost");
    b.from_input("value", step, "history");
    b.from_input("_c0", cost, "thunk");
    b.edge(step, "value", cost, "value");
    b.edge(step, "value", pair, "first");
    b.edge(cost, "value", pair, "second");
    b.edge(i, "value", push, "vec");
    b.edge(pair, "pair", push, "item");
    b.edge(push, "vec", conv, "history");
    b.edge(tol, "value", conv, "tol");
    let eval = switch_eval(&mut b, (conv, "value"), tagger("break"), tagger("continue"), (push, "vec"));
    b.to_output(eval, "value", "value");
    build(b)
}

/// The whole variational program: capture a circuit into the cost graph,
/// compute the initial history with [`initial`], then loop
/// [`variational_body`] until converged. Outputs the final `params` and `cost`.
pub fn variational(tol: f64) -> Graph {
    let mut b = GraphBuilder::named("main");
    let circuit = b.constant("ansatz");
    let cost_graph = b.constant(Value::graph(run_circuit()));
    let bind_circuit = b.function("builtin/partial");
    b.edge(cost_graph, "value", bind_circuit, "thunk");
    b.edge(circuit, "value", bind_circuit, "_c0");

    let init = b.boxed(initial(), Some("initial"));
    b.edge(bind_circuit, "value", init, "run");

    let body = b.constant(Value::graph(variational_body(tol)));
    let bind_cost = b.function("builtin/partial");
    b.edge(body, "value", bind_cost, "thunk");
    b.edge(bind_circuit, "value", bind_cost, "_c0");

    let lp = b.function("builtin/loop");
    b.edge(bind_cost, "value", lp, "body");
    b.edge(init, "value", lp, "value");

    let pop = b.function("builtin/pop");
    let unpack = b.function("builtin/unpack_pair");
    b.edge(lp, "value", pop, "vec");
    b.edge(pop, "item", unpack, "pair");
    b.to_output(unpack, "first", "params");
    b.to_output(unpack, "second", "cost");
    build(b)
}

/// `(a, b, c) -> [a, b, c]`.
pub fn make_list3() -> Graph {
    let mut b = GraphBuilder::named("make_list");
    let mut acc = (b.constant(Value::vec([])), "value");
    for port in ["a", "b", "c"] {
        let push = b.function("builtin/push");
        b.edge(acc.0, acc.1, push, "vec");
        b.from_input(port, push, "item");
        acc = (push, "vec");
    }
    b.to_output(acc.0, acc.1, "value");
    build(b)
}

/// Folds the input circuit three ways, runs each fold through the `runner`
/// thunk in parallel and collects the results.
pub fn zne() -> Graph {
    let mut b = GraphBuilder::named("zne");
    let list = b.boxed(make_list3(), Some("make_list(3)"));
    for (factor, port) in [(1i64, "a"), (3, "b"), (5, "c")] {
        let k = b.constant(factor);
        let fold = b.function("mock/zne_fold");
        let eval = b.function("builtin/eval");
        b.from_input("circuit", fold, "circuit");
        b.edge(k, "value", fold, "factor");
        b.from_input("runner", eval, "thunk");
        b.edge(fold, "value", eval, "circuit");
        b.edge(eval, "value", list, port);
    }
    b.to_output(list, "value", "values");
    build(b)
}

/// A runner for [`zne`]: `(circuit: Str) -> (value: Float)`, ignoring the circuit.
pub fn constant_runner(x: f64) -> Graph {
    let mut b = GraphBuilder::named("runner");
    let drop = b.function("builtin/discard");
    let k = b.constant(x);
    b.from_input("circuit", drop, "value");
    b.to_output(k, "value", "value");
    build(b)
}

/// Tags `x` with `tag` and dispatches on it with a Match node:
/// `break` adds 10, `continue` doubles.
pub fn match_dispatch(tag: &str) -> Graph {
    let mut add = GraphBuilder::named("on_break");
    let ten = add.constant(10i64);
    let f = add.function("builtin/iadd");
    add.from_input("value", f, "a");
    add.edge(ten, "value", f, "b");
    add.to_output(f, "value", "value");

    let mut dbl = GraphBuilder::named("on_continue");
    let two = dbl.constant(2i64);
    let g = dbl.function("builtin/imul");
    dbl.from_input("value", g, "a");
    dbl.edge(two, "value", g, "b");
    dbl.to_output(g, "value", "value");

    let mut b = GraphBuilder::named("match_dispatch");
    let t = b.tag(tag);
    let on_break = b.constant(Value::graph(build(add)));
    let on_continue = b.constant(Value::graph(build(dbl)));
    let m = b.match_node();
    let eval = b.function("builtin/eval");
    b.from_input("x", t, "value");
    b.edge(t, "value", m, "variant");
    b.edge(on_break, "value", m, "break");
    b.edge(on_continue, "value", m, "continue");
    b.edge(m, "thunk", eval, "thunk");
    b.to_output(eval, "value", "value");
    build(b)
}

/// [`zexp_to_parity`] inside a Box.
pub fn boxed_parity() -> Graph {
    let mut b = GraphBuilder::named("boxed_parity");
    let inner = b.boxed(zexp_to_parity(), Some("zexp_to_parity"));
    b.from_input("x", inner, "x");
    b.to_output(inner, "parity", "parity");
    build(b)
}

/// Three `mock/sleep_ms(ms)` calls joined by two `iadd`s.
pub fn sleepers(ms: i64) -> Graph {
    let mut b = GraphBuilder::named("sleepers");
    let k = b.constant(ms);
    let s: Vec<NodeId> = (0..3).map(|_| b.function("mock/sleep_ms")).collect();
    for &n in &s {
        b.edge(k, "value", n, "ms");
    }
    let add1 = b.function("builtin/iadd");
    let add2 = b.function("builtin/iadd");
    b.edge(s[0], "value", add1, "a");
    b.edge(s[1], "value", add1, "b");
    b.edge(add1, "value", add2, "a");
    b.edge(s[2], "value", add2, "b");
    b.to_output(add2, "value", "value");
    build(b)
}

/// `eval(partial(zexp_to_parity, x = x))`.
pub fn partial_then_eval() -> Graph {
    let mut b = GraphBuilder::named("partial_then_eval");
    let g = b.constant(Value::graph(zexp_to_parity()));
    let p = b.function("builtin/partial");
    let e = b.function("builtin/eval");
    b.edge(g, "value", p, "thunk");
    b.from_input("x", p, "x");
    b.edge(p, "value", e, "thunk");
    b.to_output(e, "parity", "parity");
    build(b)
}

/// `eval(parallel(zexp_to_parity, passthrough y), x, y)`.
pub fn parallel_eval() -> Graph {
    let mut b = GraphBuilder::named("parallel_eval");
    let a = b.constant(Value::graph(zexp_to_parity()));
    let c = b.constant(Value::graph(passthrough("y")));
    let par = b.function("builtin/parallel");
    let e = b.function("builtin/eval");
    b.edge(a, "value", par, "a");
    b.edge(c, "value", par, "b");
    b.edge(par, "value", e, "thunk");
    b.from_input("x", e, "x");
    b.from_input("y", e, "y");
    b.to_output(e, "parity", "parity");
    b.to_output(e, "y", "y");
    build(b)
}

/// A named corpus entry with inputs it runs on.
pub struct Example {
    pub name: &'static str,
    pub graph: Graph,
    pub inputs: crate::value::Ports,
}

fn ports<const N: usize>(entries: [(&'static str, Value); N]) -> crate::value::Ports {
    entries.into_iter().map(|(k, v)| (k.into(), v)).collect()
}

/// Every example paired with runnable inputs. Needs the `mock` and
/// `optimizer` doubles alongside the builtins.
pub fn examples() -> Vec<Example> {
    vec![
        Example { name: "zexp_to_parity", graph: zexp_to_parity(), inputs: ports([("x", Value::Float(0.2))]) },
        Example { name: "passthrough", graph: passthrough("v"), inputs: ports([("v", Value::Int(7))]) },
        Example {
            name: "initial",
            graph: initial(),
            inputs: ports([("run", Value::graph(crate::builtins::partial_graph(&run_circuit(), &ports([("_c0", Value::str("c"))])).expect("_c0 is an input")))]),
        },
        Example { name: "boxed_parity", graph: boxed_parity(), inputs: ports([("x", Value::Float(0.0))]) },
        Example { name: "counting_loop", graph: counting_loop(8, 0), inputs: ports([]) },
        Example { name: "match_break", graph: match_dispatch("break"), inputs: ports([("x", Value::Int(3))]) },
        Example { name: "match_continue", graph: match_dispatch("continue"), inputs: ports([("x", Value::Int(3))]) },
        Example {
            name: "zne",
            graph: zne(),
            inputs: ports([("circuit", Value::str("c")), ("runner", Value::graph(constant_runner(0.25)))]),
        },
        Example { name: "partial_then_eval", graph: partial_then_eval(), inputs: ports([("x", Value::Float(0.2))]) },
        Example {
            name: "parallel_eval",
            graph: parallel_eval(),
            inputs: ports([("x", Value::Float(0.2)), ("y", Value::Int(1))]),
        },
        Example { name: "variational", graph: variational(1e-6), inputs: ports([]) },
    ]
}
