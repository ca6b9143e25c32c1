//! The `builtin` namespace: host functions plus the higher-order controls
//! whose execution belongs to the executor.
//!
//! Integer arithmetic wraps on overflow (two's complement, 64 bits);
//! `idiv_checked` is the one integer operation that can fail.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::graph::{ports, Edge, Graph, Node, NodeId, NodeKind, PortRef};
use crate::signature::Signature;
use crate::types::{Row, SchemeConstraint, Type, TypeScheme, VarKind};
use crate::value::{FunctionName, Label, Ports, Value};

pub const NAMESPACE: &str = "builtin";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuiltinError {
    #[error("missing input port {0:?}")]
    MissingInput(Label),
    #[error("input {port:?} should be {expected}, got {found}")]
    BadInput {
        port: Label,
        expected: &'static str,
        found: &'static str,
    },
    #[error("pop on an empty vector")]
    EmptyVec,
    #[error("integer division by zero")]
    DivByZero,
    #[error("key {0} not in map")]
    MissingKey(String),
    #[error("graph has no input port {0:?}")]
    UnknownPort(Label),
    #[error("port {0:?} appears in both graphs")]
    DuplicatePort(Label),
    #[error("map key of kind {0} is not hashable")]
    Unhashable(&'static str),
}

pub type HostFn = fn(&Ports) -> Result<Ports, BuiltinError>;

#[derive(Clone, Copy)]
pub enum Implementation {
    Host(HostFn),
    /// eval, partial and loop: the executor owns their semantics.
    Executor,
}

impl std::fmt::Debug for Implementation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Implementation::Host(_) => f.write_str("Host"),
            Implementation::Executor => f.write_str("Executor"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FunctionDecl {
    pub name: FunctionName,
    pub scheme: TypeScheme,
    pub implementation: Implementation,
}

fn rv(n: u32) -> Row {
    Row::var(n)
}

fn tv(n: u32) -> Type {
    Type::var(n)
}

fn types(n: u32) -> Vec<(VarKind, u32)> {
    (0..n).map(|i| (VarKind::Type, i)).collect()
}

fn rows(n: u32) -> Vec<(VarKind, u32)> {
    (0..n).map(|i| (VarKind::Row, i)).collect()
}

fn mono(inputs: Row, outputs: Row) -> TypeScheme {
    TypeScheme::monomorphic(inputs, outputs)
}

fn poly(vars: Vec<(VarKind, u32)>, inputs: Row, outputs: Row) -> TypeScheme {
    TypeScheme {
        vars,
        constraints: Vec::new(),
        body: crate::types::GraphType { inputs, outputs },
    }
}

fn lacks(row: u32, label: &'static str) -> SchemeConstraint {
    SchemeConstraint::Lacks {
        row: crate::types::RowVar(row),
        label: Label::from_static(label),
    }
}

fn partition(a: u32, b: u32, whole: u32) -> SchemeConstraint {
    SchemeConstraint::Partition {
        a: rv(a),
        b: rv(b),
        whole: rv(whole),
    }
}

fn binary(a: Type, b: Type, out: Type) -> TypeScheme {
    mono(Row::closed([("a", a), ("b", b)]), Row::closed([("value", out)]))
}

fn unary(a: Type, out: Type) -> TypeScheme {
    mono(Row::closed([("value", a)]), Row::closed([("value", out)]))
}

fn schemes() -> Vec<(&'static str, TypeScheme, Implementation)> {
    use Implementation::{Executor, Host};
    let thunk = |i: u32, o: u32| Type::graph(rv(i), rv(o));
    vec![
        // eval: forall I, O. (thunk: Graph(I -> O) | I) -> O
        (
            "eval",
            TypeScheme {
                vars: rows(2),
                constraints: vec![lacks(0, "thunk")],
                body: crate::types::GraphType {
                    inputs: Row::open([("thunk", thunk(0, 1))], 0),
                    outputs: rv(1),
                },
            },
            Executor,
        ),
        // partial: forall I, I1, I2, O. I1 ⊔ I2 ~ I => (thunk: Graph(I -> O) | I1) -> (value: Graph(I2 -> O))
        (
            "partial",
            TypeScheme {
                vars: rows(4),
                constraints: vec![lacks(1, "thunk"), partition(1, 2, 0)],
                body: crate::types::GraphType {
                    inputs: Row::open([("thunk", thunk(0, 3))], 1),
                    outputs: Row::closed([("value", thunk(2, 3))]),
                },
            },
            Executor,
        ),
        (
            "switch",
            poly(
                types(1),
                Row::closed([("pred", Type::Bool), ("if_true", tv(0)), ("if_false", tv(0))]),
                Row::closed([("value", tv(0))]),
            ),
            Host(switch),
        ),
        (
            "push",
            poly(
                types(1),
                Row::closed([("vec", Type::vec(tv(0))), ("item", tv(0))]),
                Row::closed([("vec", Type::vec(tv(0)))]),
            ),
            Host(push),
        ),
        (
            "pop",
            poly(
                types(1),
                Row::closed([("vec", Type::vec(tv(0)))]),
                Row::closed([("vec", Type::vec(tv(0))), ("item", tv(0))]),
            ),
            Host(pop),
        ),
        (
            "make_pair",
            poly(
                types(2),
                Row::closed([("first", tv(0)), ("second", tv(1))]),
                Row::closed([("pair", Type::pair(tv(0), tv(1)))]),
            ),
            Host(make_pair),
        ),
        (
            "unpack_pair",
            poly(
                types(2),
                Row::closed([("pair", Type::pair(tv(0), tv(1)))]),
                Row::closed([("first", tv(0)), ("second", tv(1))]),
            ),
            Host(unpack_pair),
        ),
        ("fsub", binary(Type::Float, Type::Float, Type::Float), Host(fsub)),
        ("fdiv", binary(Type::Float, Type::Float, Type::Float), Host(fdiv)),
        ("fadd", binary(Type::Float, Type::Float, Type::Float), Host(fadd)),
        ("fmul", binary(Type::Float, Type::Float, Type::Float), Host(fmul)),
        ("fpow", binary(Type::Float, Type::Float, Type::Float), Host(fpow)),
        ("fneg", unary(Type::Float, Type::Float), Host(fneg)),
        ("flt", binary(Type::Float, Type::Float, Type::Bool), Host(flt)),
        ("fgt", binary(Type::Float, Type::Float, Type::Bool), Host(fgt)),
        (
            "feq_approx",
            mono(
                Row::closed([("a", Type::Float), ("b", Type::Float), ("eps", Type::Float)]),
                Row::closed([("value", Type::Bool)]),
            ),
            Host(feq_approx),
        ),
        ("iadd", binary(Type::Int, Type::Int, Type::Int), Host(iadd)),
        ("isub", binary(Type::Int, Type::Int, Type::Int), Host(isub)),
        ("imul", binary(Type::Int, Type::Int, Type::Int), Host(imul)),
        ("idiv_checked", binary(Type::Int, Type::Int, Type::Int), Host(idiv_checked)),
        ("ilt", binary(Type::Int, Type::Int, Type::Bool), Host(ilt)),
        ("int_to_float", unary(Type::Int, Type::Float), Host(int_to_float)),
        ("and_", binary(Type::Bool, Type::Bool, Type::Bool), Host(and)),
        ("or_", binary(Type::Bool, Type::Bool, Type::Bool), Host(or)),
        ("not_", unary(Type::Bool, Type::Bool), Host(not)),
        // make_struct: R -> (struct: Struct(R))
        (
            "make_struct",
            poly(rows(1), rv(0), Row::closed([("struct", Type::Struct(rv(0)))])),
            Host(make_struct),
        ),
        (
            "unpack_struct",
            poly(rows(1), Row::closed([("struct", Type::Struct(rv(0)))]), rv(0)),
            Host(unpack_struct),
        ),
        (
            "insert_map",
            poly(
                types(2),
                Row::closed([("map", Type::map(tv(0), tv(1))), ("key", tv(0)), ("value", tv(1))]),
                Row::closed([("map", Type::map(tv(0), tv(1)))]),
            ),
            Host(insert_map),
        ),
        (
            "remove_map",
            poly(
                types(2),
                Row::closed([("map", Type::map(tv(0), tv(1))), ("key", tv(0))]),
                Row::closed([("map", Type::map(tv(0), tv(1))), ("value", tv(1))]),
            ),
            Host(remove_map),
        ),
        // parallel: forall I, I1, I2, O, O1, O2. I1 ⊔ I2 ~ I, O1 ⊔ O2 ~ O =>
        //   (a: Graph(I1 -> O1), b: Graph(I2 -> O2)) -> (value: Graph(I -> O))
        (
            "parallel",
            TypeScheme {
                vars: rows(6),
                constraints: vec![partition(1, 2, 0), partition(4, 5, 3)],
                body: crate::types::GraphType {
                    inputs: Row::closed([("a", thunk(1, 4)), ("b", thunk(2, 5))]),
                    outputs: Row::closed([("value", thunk(0, 3))]),
                },
            },
            Host(parallel),
        ),
        // loop: forall V, R. (body: Graph((value: V) -> (value: Variant(continue: V, break: R))), value: V) -> (value: R)
        (
            "loop",
            poly(
                types(2),
                Row::closed([
                    (
                        "body",
                        Type::graph(
                            Row::closed([("value", tv(0))]),
                            Row::closed([(
                                "value",
                                Type::Variant(Row::closed([("continue", tv(0)), ("break", tv(1))])),
                            )]),
                        ),
                    ),
                    ("value", tv(0)),
                ]),
                Row::closed([("value", tv(1))]),
            ),
            Executor,
        ),
        (
            "copy",
            poly(
                types(1),
                Row::closed([("value", tv(0))]),
                Row::closed([(ports::COPY_0, tv(0)), (ports::COPY_1, tv(0))]),
            ),
            Host(copy),
        ),
        ("discard", poly(types(1), Row::closed([("value", tv(0))]), Row::empty()), Host(discard)),
        ("id", poly(types(1), Row::closed([("value", tv(0))]), Row::closed([("value", tv(0))])), Host(id)),
    ]
}

fn table() -> &'static (BTreeMap<String, FunctionDecl>, Signature) {
    static TABLE: OnceLock<(BTreeMap<String, FunctionDecl>, Signature)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut decls = BTreeMap::new();
        let mut sig = Signature::new();
        for (name, scheme, implementation) in schemes() {
            let f = FunctionName::builtin(name);
            sig.insert(f.clone(), scheme.clone());
            decls.insert(
                name.to_string(),
                FunctionDecl {
                    name: f,
                    scheme,
                    implementation,
                },
            );
        }
        (decls, sig)
    })
}

/// Declaration of `builtin/<name>`.
pub fn lookup(name: &str) -> Option<&'static FunctionDecl> {
    table().0.get(name)
}

pub fn decls() -> impl Iterator<Item = &'static FunctionDecl> {
    table().0.values()
}

pub fn signature() -> Signature {
    table().1.clone()
}

pub fn signature_static() -> &'static Signature {
    &table().1
}

fn get<'a>(inputs: &'a Ports, port: &'static str) -> Result<&'a Value, BuiltinError> {
    inputs
        .get(port)
        .ok_or_else(|| BuiltinError::MissingInput(Label::from_static(port)))
}

fn bad(port: &'static str, expected: &'static str, found: &Value) -> BuiltinError {
    BuiltinError::BadInput {
        port: Label::from_static(port),
        expected,
        found: found.kind_name(),
    }
}

fn float(inputs: &Ports, port: &'static str) -> Result<f64, BuiltinError> {
    let v = get(inputs, port)?;
    v.as_float().ok_or_else(|| bad(port, "Float", v))
}

fn int(inputs: &Ports, port: &'static str) -> Result<i64, BuiltinError> {
    let v = get(inputs, port)?;
    v.as_int().ok_or_else(|| bad(port, "Int", v))
}

fn boolean(inputs: &Ports, port: &'static str) -> Result<bool, BuiltinError> {
    let v = get(inputs, port)?;
    v.as_bool().ok_or_else(|| bad(port, "Bool", v))
}

fn vector<'a>(inputs: &'a Ports, port: &'static str) -> Result<&'a Arc<Vec<Value>>, BuiltinError> {
    match get(inputs, port)? {
        Value::Vec(items) => Ok(items),
        v => Err(bad(port, "Vec", v)),
    }
}

fn map<'a>(inputs: &'a Ports, port: &'static str) -> Result<&'a Arc<BTreeMap<Value, Value>>, BuiltinError> {
    match get(inputs, port)? {
        Value::Map(m) => Ok(m),
        v => Err(bad(port, "Map", v)),
    }
}

fn graph<'a>(inputs: &'a Ports, port: &'static str) -> Result<&'a Arc<Graph>, BuiltinError> {
    let v = get(inputs, port)?;
    v.as_graph().ok_or_else(|| bad(port, "Graph", v))
}

fn out(port: &'static str, v: Value) -> Ports {
    [(Label::from_static(port), v)].into_iter().collect()
}

fn value(v: Value) -> Ports {
    out(ports::VALUE, v)
}

fn switch(i: &Ports) -> Result<Ports, BuiltinError> {
    let pick = if boolean(i, "pred")? { "if_true" } else { "if_false" };
    Ok(value(get(i, pick)?.clone()))
}

fn push(i: &Ports) -> Result<Ports, BuiltinError> {
    let mut items = vector(i, "vec")?.as_ref().clone();
    items.push(get(i, "item")?.clone());
    Ok(out("vec", Value::Vec(Arc::new(items))))
}

fn pop(i: &Ports) -> Result<Ports, BuiltinError> {
    let mut items = vector(i, "vec")?.as_ref().clone();
    let item = items.pop().ok_or(BuiltinError::EmptyVec)?;
    let mut o = out("vec", Value::Vec(Arc::new(items)));
    o.insert(Label::from_static("item"), item);
    Ok(o)
}

fn make_pair(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(out("pair", Value::pair(get(i, "first")?.clone(), get(i, "second")?.clone())))
}

fn unpack_pair(i: &Ports) -> Result<Ports, BuiltinError> {
    match get(i, "pair")? {
        Value::Pair(p) => {
            let mut o = out("first", p.0.clone());
            o.insert(Label::from_static("second"), p.1.clone());
            Ok(o)
        }
        v => Err(bad("pair", "Pair", v)),
    }
}

fn fsub(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Float(float(i, "a")? - float(i, "b")?)))
}

fn fdiv(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Float(float(i, "a")? / float(i, "b")?)))
}

fn fadd(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Float(float(i, "a")? + float(i, "b")?)))
}

fn fmul(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Float(float(i, "a")? * float(i, "b")?)))
}

fn fpow(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Float(float(i, "a")?.powf(float(i, "b")?))))
}

fn fneg(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Float(-float(i, "value")?)))
}

fn flt(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Bool(float(i, "a")? < float(i, "b")?)))
}

fn fgt(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Bool(float(i, "a")? > float(i, "b")?)))
}

fn feq_approx(i: &Ports) -> Result<Ports, BuiltinError> {
    let (a, b, eps) = (float(i, "a")?, float(i, "b")?, float(i, "eps")?);
    Ok(value(Value::Bool((a - b).abs() <= eps)))
}

fn iadd(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Int(int(i, "a")?.wrapping_add(int(i, "b")?))))
}

fn isub(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Int(int(i, "a")?.wrapping_sub(int(i, "b")?))))
}

fn imul(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Int(int(i, "a")?.wrapping_mul(int(i, "b")?))))
}

fn idiv_checked(i: &Ports) -> Result<Ports, BuiltinError> {
    let b = int(i, "b")?;
    if b == 0 {
        return Err(BuiltinError::DivByZero);
    }
    Ok(value(Value::Int(int(i, "a")?.wrapping_div(b))))
}

fn ilt(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Bool(int(i, "a")? < int(i, "b")?)))
}

fn int_to_float(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Float(int(i, "value")? as f64)))
}

fn and(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Bool(boolean(i, "a")? && boolean(i, "b")?)))
}

fn or(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Bool(boolean(i, "a")? || boolean(i, "b")?)))
}

fn not(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(Value::Bool(!boolean(i, "value")?)))
}

fn make_struct(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(out("struct", Value::structure(i.clone())))
}

fn unpack_struct(i: &Ports) -> Result<Ports, BuiltinError> {
    match get(i, "struct")? {
        Value::Struct(fields) => Ok(fields.as_ref().clone()),
        v => Err(bad("struct", "Struct", v)),
    }
}

fn insert_map(i: &Ports) -> Result<Ports, BuiltinError> {
    let key = get(i, "key")?.clone();
    key.check_hashable().map_err(|e| BuiltinError::Unhashable(e.0))?;
    let mut m = map(i, "map")?.as_ref().clone();
    m.insert(key, get(i, "value")?.clone());
    Ok(out("map", Value::Map(Arc::new(m))))
}

fn remove_map(i: &Ports) -> Result<Ports, BuiltinError> {
    let key = get(i, "key")?;
    let mut m = map(i, "map")?.as_ref().clone();
    let v = m.remove(key).ok_or_else(|| BuiltinError::MissingKey(key.to_string()))?;
    let mut o = out("map", Value::Map(Arc::new(m)));
    o.insert(Label::from_static("value"), v);
    Ok(o)
}

fn copy(i: &Ports) -> Result<Ports, BuiltinError> {
    let v = get(i, "value")?;
    let mut o = out(ports::COPY_0, v.clone());
    o.insert(Label::from_static(ports::COPY_1), v.clone());
    Ok(o)
}

fn discard(i: &Ports) -> Result<Ports, BuiltinError> {
    get(i, "value")?;
    Ok(Ports::new())
}

fn id(i: &Ports) -> Result<Ports, BuiltinError> {
    Ok(value(get(i, "value")?.clone()))
}

fn parallel(i: &Ports) -> Result<Ports, BuiltinError> {
    let g = parallel_graph(graph(i, "a")?, graph(i, "b")?)?;
    Ok(value(Value::graph(g)))
}

/// Plugs `supplied` into the matching inputs of `g` as Const nodes.
pub fn partial_graph(g: &Graph, supplied: &Ports) -> Result<Graph, BuiltinError> {
    let input = g.input_node().expect("valid graph");
    let labels = g.input_labels();
    if let Some(l) = supplied.keys().find(|l| !labels.contains(l)) {
        return Err(BuiltinError::UnknownPort(l.clone()));
    }
    if supplied.is_empty() {
        return Ok(g.clone());
    }
    let mut next = g.max_node_id().map_or(0, |n| n.0 + 1);
    let mut nodes = g.nodes().to_vec();
    let mut edges = Vec::with_capacity(g.edges().len());
    for e in g.edges() {
        match supplied.get(&e.src.port) {
            Some(v) if e.src.node == input => {
                let id = NodeId(next);
                next += 1;
                nodes.push(Node {
                    id,
                    kind: NodeKind::Const(v.clone()),
                });
                edges.push(Edge {
                    src: PortRef::new(id, ports::VALUE),
                    dst: e.dst.clone(),
                    ty: e.ty.clone(),
                });
            }
            _ => edges.push(e.clone()),
        }
    }
    Ok(Graph::from_parts(g.name.clone(), nodes, edges))
}

/// Both graphs side by side, each inside a Box node.
pub fn parallel_graph(a: &Arc<Graph>, b: &Arc<Graph>) -> Result<Graph, BuiltinError> {
    let (ai, bi) = (a.input_labels(), b.input_labels());
    if let Some(l) = ai.iter().find(|l| bi.contains(l)) {
        return Err(BuiltinError::DuplicatePort(l.clone()));
    }
    let (ao, bo) = (a.output_labels(), b.output_labels());
    if let Some(l) = ao.iter().find(|l| bo.contains(l)) {
        return Err(BuiltinError::DuplicatePort(l.clone()));
    }
    let (input, output) = (NodeId(0), NodeId(1));
    let mut nodes = vec![
        Node {
            id: input,
            kind: NodeKind::Input,
        },
        Node {
            id: output,
            kind: NodeKind::Output,
        },
    ];
    let mut edges = Vec::new();
    for (k, (g, ins, outs)) in [(a, &ai, &ao), (b, &bi, &bo)].into_iter().enumerate() {
        let id = NodeId(2 + k as u32);
        nodes.push(Node {
            id,
            kind: NodeKind::Box {
                graph: Arc::clone(g),
                label: g.name.clone(),
            },
        });
        for l in ins {
            edges.push(Edge {
                src: PortRef::new(input, l.clone()),
                dst: PortRef::new(id, l.clone()),
                ty: None,
            });
        }
        for l in outs {
            edges.push(Edge {
                src: PortRef::new(id, l.clone()),
                dst: PortRef::new(output, l.clone()),
                ty: None,
            });
        }
    }
    Ok(Graph::from_parts(None, nodes, edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(name: &str, inputs: &[(&'static str, Value)]) -> Result<Ports, BuiltinError> {
        let ports: Ports = inputs.iter().map(|(l, v)| (Label::from_static(l), v.clone())).collect();
        match lookup(name).unwrap().implementation {
            Implementation::Host(f) => f(&ports),
            Implementation::Executor => panic!("{name} is executor-handled"),
        }
    }

    fn one(p: Ports, port: &str) -> Value {
        p.get(port).cloned().unwrap()
    }

    #[test]
    fn table_two_names_present() {
        for n in ["eval", "partial", "switch", "push", "make_pair", "fsub", "fdiv", "make_struct", "parallel", "loop"] {
            assert!(signature().contains(&FunctionName::builtin(n)), "{n}");
        }
    }

    #[test]
    fn fsub_fdiv_compose() {
        let a = one(call("fsub", &[("a", 1.0.into()), ("b", 0.2.into())]).unwrap(), "value");
        assert_eq!(a, Value::Float(0.8));
        let b = one(call("fdiv", &[("a", 0.8.into()), ("b", 2.0.into())]).unwrap(), "value");
        assert_eq!(b, Value::Float(0.4));
    }

    #[test]
    fn push_then_pop() {
        let pushed = one(call("push", &[("vec", Value::vec([])), ("item", Value::Int(5))]).unwrap(), "vec");
        assert_eq!(pushed, Value::vec([Value::Int(5)]));
        let popped = call("pop", &[("vec", pushed)]).unwrap();
        assert_eq!(popped["vec"], Value::vec([]));
        assert_eq!(popped["item"], Value::Int(5));
        assert_eq!(call("pop", &[("vec", Value::vec([]))]), Err(BuiltinError::EmptyVec));
    }

    #[test]
    fn make_pair_builds_pair() {
        let p = one(
            call("make_pair", &[("first", Value::floats(&[0.2, 0.2])), ("second", 0.4.into())]).unwrap(),
            "pair",
        );
        assert_eq!(p, Value::pair(Value::floats(&[0.2, 0.2]), Value::Float(0.4)));
    }

    #[test]
    fn switch_picks_branch() {
        let t = call("switch", &[("pred", true.into()), ("if_true", Value::Int(1)), ("if_false", Value::Int(2))]);
        assert_eq!(one(t.unwrap(), "value"), Value::Int(1));
        let f = call("switch", &[("pred", false.into()), ("if_true", Value::Int(1)), ("if_false", Value::Int(2))]);
        assert_eq!(one(f.unwrap(), "value"), Value::Int(2));
    }

    #[test]
    fn integer_ops_wrap_and_check() {
        let w = call("iadd", &[("a", Value::Int(i64::MAX)), ("b", Value::Int(1))]).unwrap();
        assert_eq!(w["value"], Value::Int(i64::MIN));
        assert_eq!(call("idiv_checked", &[("a", Value::Int(1)), ("b", Value::Int(0))]), Err(BuiltinError::DivByZero));
        assert_eq!(
            one(call("idiv_checked", &[("a", Value::Int(7)), ("b", Value::Int(2))]).unwrap(), "value"),
            Value::Int(3)
        );
    }

    #[test]
    fn maps_insert_remove() {
        let m = one(
            call("insert_map", &[("map", Value::map([]).unwrap()), ("key", Value::Int(1)), ("value", Value::str("a"))])
                .unwrap(),
            "map",
        );
        let r = call("remove_map", &[("map", m), ("key", Value::Int(1))]).unwrap();
        assert_eq!(r["value"], Value::str("a"));
        assert_eq!(r["map"], Value::map([]).unwrap());
        assert!(matches!(
            call("remove_map", &[("map", Value::map([]).unwrap()), ("key", Value::Int(1))]),
            Err(BuiltinError::MissingKey(_))
        ));
    }

    #[test]
    fn structs_round_trip() {
        let s = call("make_struct", &[("x", Value::Int(1)), ("y", Value::str("b"))]).unwrap();
        let back = call("unpack_struct", &[("struct", s["struct"].clone())]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back["y"], Value::str("b"));
    }

    #[test]
    fn partial_without_inputs_is_identity() {
        let g = crate::corpus::zexp_to_parity();
        assert_eq!(partial_graph(&g, &Ports::new()).unwrap(), g);
        let bad: Ports = [(Label::from_static("nope"), Value::Int(0))].into_iter().collect();
        assert_eq!(partial_graph(&g, &bad), Err(BuiltinError::UnknownPort(Label::from_static("nope"))));
    }

    #[test]
    fn partial_removes_supplied_input() {
        let g = crate::corpus::zexp_to_parity();
        let x: Ports = [(Label::from_static("x"), Value::Float(0.2))].into_iter().collect();
        let p = partial_graph(&g, &x).unwrap();
        assert!(p.input_labels().is_empty());
        assert_eq!(p.output_labels(), g.output_labels());
    }

    #[test]
    fn parallel_rejects_shared_ports() {
        let g = Arc::new(crate::corpus::passthrough("x"));
        assert!(matches!(parallel_graph(&g, &g), Err(BuiltinError::DuplicatePort(_))));
        let h = Arc::new(crate::corpus::passthrough("y"));
        let both = parallel_graph(&g, &h).unwrap();
        assert_eq!(both.input_labels().len(), 2);
    }
}
