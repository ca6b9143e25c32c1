//! Canonical JSON for values, graphs, types, schemes and signatures.
//!
//! Objects are emitted with sorted keys and no whitespace, so equal data
//! always serialises to equal bytes. Decoders report a JSON-pointer path
//! to the first offending element.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Map, Number, Value as Json};
use thiserror::Error;

use crate::graph::{Edge, Graph, Node, NodeId, NodeKind, PortRef};
use crate::signature::Signature;
use crate::types::{GraphType, Row, RowVar, SchemeConstraint, Type, TypeScheme, VarKind};
use crate::value::{FunctionName, Label, Ports, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("decode error at {path:?}: {message}")]
pub struct DecodeError {
    pub path: String,
    pub message: String,
}

impl DecodeError {
    pub fn new(path: &str, message: impl Into<String>) -> Self {
        DecodeError {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

pub type Decoded<T> = Result<T, DecodeError>;

/// Compact output with sorted keys.
pub fn canonical(j: &Json) -> String {
    serde_json::to_string(j).expect("JSON values always serialise")
}

pub fn parse(text: &str) -> Decoded<Json> {
    serde_json::from_str(text).map_err(|e| DecodeError::new("", format!("invalid JSON: {e}")))
}

pub fn child(path: &str, key: impl std::fmt::Display) -> String {
    let key = key.to_string().replace('~', "~0").replace('/', "~1");
    format!("{path}/{key}")
}

pub fn object<'a>(j: &'a Json, path: &str) -> Decoded<&'a Map<String, Json>> {
    j.as_object().ok_or_else(|| DecodeError::new(path, "expected an object"))
}

pub fn array<'a>(j: &'a Json, path: &str) -> Decoded<&'a Vec<Json>> {
    j.as_array().ok_or_else(|| DecodeError::new(path, "expected an array"))
}

pub fn field<'a>(obj: &'a Map<String, Json>, key: &str, path: &str) -> Decoded<&'a Json> {
    obj.get(key)
        .ok_or_else(|| DecodeError::new(&child(path, key), "missing field"))
}

pub fn string<'a>(j: &'a Json, path: &str) -> Decoded<&'a str> {
    j.as_str().ok_or_else(|| DecodeError::new(path, "expected a string"))
}

pub fn u32_of(j: &Json, path: &str) -> Decoded<u32> {
    j.as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| DecodeError::new(path, "expected a non-negative integer"))
}

pub fn label_of(s: &str, path: &str) -> Decoded<Label> {
    Label::new(s).map_err(|e| DecodeError::new(path, e.to_string()))
}

/// The single `{"key": payload}` pair of a tagged object.
fn tagged<'a>(j: &'a Json, path: &str) -> Decoded<(&'a str, &'a Json)> {
    let obj = object(j, path)?;
    if obj.len() != 1 {
        return Err(DecodeError::new(path, "expected exactly one key"));
    }
    let (k, v) = obj.iter().next().expect("one entry");
    Ok((k.as_str(), v))
}

fn empty_object(j: &Json, path: &str) -> Decoded<()> {
    match object(j, path)?.is_empty() {
        true => Ok(()),
        false => Err(DecodeError::new(path, "expected {}")),
    }
}

// ---- values -------------------------------------------------------------

pub fn float_to_json(x: f64) -> Json {
    if x.is_nan() {
        Json::from("NaN")
    } else if x.is_infinite() {
        Json::from(if x > 0.0 { "Infinity" } else { "-Infinity" })
    } else {
        Json::Number(Number::from_f64(x).expect("finite"))
    }
}

fn float_of(j: &Json, path: &str) -> Decoded<f64> {
    match j {
        Json::Number(n) => n.as_f64().ok_or_else(|| DecodeError::new(path, "expected a float")),
        Json::String(s) => match s.as_str() {
            "NaN" => Ok(f64::NAN),
            "Infinity" => Ok(f64::INFINITY),
            "-Infinity" => Ok(f64::NEG_INFINITY),
            _ => Err(DecodeError::new(path, "expected a float or NaN/Infinity/-Infinity")),
        },
        _ => Err(DecodeError::new(path, "expected a float")),
    }
}

pub fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Bool(b) => json!({ "bool": b }),
        Value::Int(n) => json!({ "int": n }),
        Value::Float(x) => json!({ "float": float_to_json(*x) }),
        Value::Str(s) => json!({ "str": s }),
        Value::Pair(p) => json!({ "pair": { "first": value_to_json(&p.0), "second": value_to_json(&p.1) } }),
        Value::Vec(items) => json!({ "vec": items.iter().map(value_to_json).collect::<Vec<_>>() }),
        Value::Map(m) => json!({
            "map": m.iter().map(|(k, v)| json!([value_to_json(k), value_to_json(v)])).collect::<Vec<_>>()
        }),
        Value::Struct(fields) => {
            let obj: Map<String, Json> = fields
                .iter()
                .map(|(l, v)| (l.to_string(), value_to_json(v)))
                .collect();
            json!({ "struct": obj })
        }
        Value::Variant(tag, inner) => json!({ "variant": { "tag": tag.as_str(), "value": value_to_json(inner) } }),
        Value::Graph(g) => json!({ "graph": graph_to_json(g) }),
    }
}

pub fn value_from_json(j: &Json, path: &str) -> Decoded<Value> {
    let (kind, body) = tagged(j, path)?;
    let here = child(path, kind);
    match kind {
        "bool" => body.as_bool().map(Value::Bool).ok_or_else(|| DecodeError::new(&here, "expected a boolean")),
        "int" => body.as_i64().map(Value::Int).ok_or_else(|| DecodeError::new(&here, "expected a 64-bit integer")),
        "float" => float_of(body, &here).map(Value::Float),
        "str" => string(body, &here).map(Value::str),
        "pair" => {
            let obj = object(body, &here)?;
            let first = value_from_json(field(obj, "first", &here)?, &child(&here, "first"))?;
            let second = value_from_json(field(obj, "second", &here)?, &child(&here, "second"))?;
            Ok(Value::pair(first, second))
        }
        "vec" => {
            let items = array(body, &here)?;
            let mut out = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                out.push(value_from_json(item, &child(&here, i))?);
            }
            Ok(Value::Vec(Arc::new(out)))
        }
        "map" => {
            let entries = array(body, &here)?;
            let mut out = BTreeMap::new();
            for (i, entry) in entries.iter().enumerate() {
                let at = child(&here, i);
                let kv = array(entry, &at)?;
                if kv.len() != 2 {
                    return Err(DecodeError::new(&at, "expected a [key, value] pair"));
                }
                let k = value_from_json(&kv[0], &child(&at, 0))?;
                k.check_hashable().map_err(|e| DecodeError::new(&child(&at, 0), e.to_string()))?;
                let v = value_from_json(&kv[1], &child(&at, 1))?;
                if out.insert(k, v).is_some() {
                    return Err(DecodeError::new(&at, "duplicate map key"));
                }
            }
            Ok(Value::Map(Arc::new(out)))
        }
        "struct" => {
            let obj = object(body, &here)?;
            let mut fields = BTreeMap::new();
            for (k, v) in obj {
                let at = child(&here, k);
                fields.insert(label_of(k, &at)?, value_from_json(v, &at)?);
            }
            Ok(Value::Struct(Arc::new(fields)))
        }
        "variant" => {
            let obj = object(body, &here)?;
            let tag_at = child(&here, "tag");
            let tag = label_of(string(field(obj, "tag", &here)?, &tag_at)?, &tag_at)?;
            let inner = value_from_json(field(obj, "value", &here)?, &child(&here, "value"))?;
            Ok(Value::variant(tag, inner))
        }
        "graph" => graph_from_json(body, &here).map(Value::graph),
        other => Err(DecodeError::new(path, format!("unknown value kind {other:?}"))),
    }
}

pub fn ports_to_json(p: &Ports) -> Json {
    Json::Object(p.iter().map(|(l, v)| (l.to_string(), value_to_json(v))).collect())
}

pub fn ports_from_json(j: &Json, path: &str) -> Decoded<Ports> {
    let obj = object(j, path)?;
    let mut out = Ports::new();
    for (k, v) in obj {
        let at = child(path, k);
        out.insert(label_of(k, &at)?, value_from_json(v, &at)?);
    }
    Ok(out)
}

pub fn serialize_value(v: &Value) -> String {
    canonical(&value_to_json(v))
}

pub fn deserialize_value(text: &str) -> Decoded<Value> {
    value_from_json(&parse(text)?, "")
}

// ---- graphs -------------------------------------------------------------

fn port_ref_json(p: &PortRef) -> Json {
    json!([p.node.0, p.port.as_str()])
}

fn port_ref_of(j: &Json, path: &str) -> Decoded<PortRef> {
    let arr = array(j, path)?;
    if arr.len() != 2 {
        return Err(DecodeError::new(path, "expected [node id, port]"));
    }
    let node = NodeId(u32_of(&arr[0], &child(path, 0))?);
    let port_at = child(path, 1);
    let port = label_of(string(&arr[1], &port_at)?, &port_at)?;
    Ok(PortRef { node, port })
}

fn kind_to_json(k: &NodeKind) -> Json {
    match k {
        NodeKind::Input => json!({ "input": {} }),
        NodeKind::Output => json!({ "output": {} }),
        NodeKind::Const(v) => json!({ "const": { "value": value_to_json(v) } }),
        NodeKind::Function(f) => json!({ "function": { "name": f.to_string() } }),
        NodeKind::Box { graph, label } => {
            let mut body = Map::new();
            body.insert("graph".into(), graph_to_json(graph));
            if let Some(l) = label {
                body.insert("label".into(), Json::from(l.as_str()));
            }
            json!({ "box": body })
        }
        NodeKind::Match => json!({ "match": {} }),
        NodeKind::Tag(t) => json!({ "tag": { "tag": t.as_str() } }),
    }
}

fn kind_of(j: &Json, path: &str) -> Decoded<NodeKind> {
    let (kind, body) = tagged(j, path)?;
    let here = child(path, kind);
    match kind {
        "input" => empty_object(body, &here).map(|_| NodeKind::Input),
        "output" => empty_object(body, &here).map(|_| NodeKind::Output),
        "match" => empty_object(body, &here).map(|_| NodeKind::Match),
        "const" => {
            let obj = object(body, &here)?;
            Ok(NodeKind::Const(value_from_json(field(obj, "value", &here)?, &child(&here, "value"))?))
        }
        "function" => {
            let obj = object(body, &here)?;
            let at = child(&here, "name");
            let name: FunctionName = string(field(obj, "name", &here)?, &at)?
                .parse()
                .map_err(|e: crate::value::NameError| DecodeError::new(&at, e.to_string()))?;
            Ok(NodeKind::Function(name))
        }
        "box" => {
            let obj = object(body, &here)?;
            let graph = graph_from_json(field(obj, "graph", &here)?, &child(&here, "graph"))?;
            let label = match obj.get("label") {
                None => None,
                Some(l) => Some(string(l, &child(&here, "label"))?.to_string()),
            };
            Ok(NodeKind::Box {
                graph: Arc::new(graph),
                label,
            })
        }
        "tag" => {
            let obj = object(body, &here)?;
            let at = child(&here, "tag");
            Ok(NodeKind::Tag(label_of(string(field(obj, "tag", &here)?, &at)?, &at)?))
        }
        other => Err(DecodeError::new(path, format!("unknown node kind {other:?}"))),
    }
}

pub fn graph_to_json(g: &Graph) -> Json {
    let mut obj = Map::new();
    if let Some(name) = &g.name {
        obj.insert("name".into(), Json::from(name.as_str()));
    }
    let nodes: Vec<Json> = g
        .nodes()
        .iter()
        .map(|n| json!({ "id": n.id.0, "kind": kind_to_json(&n.kind) }))
        .collect();
    let edges: Vec<Json> = g
        .edges()
        .iter()
        .map(|e| {
            let mut o = Map::new();
            o.insert("src".into(), port_ref_json(&e.src));
            o.insert("dst".into(), port_ref_json(&e.dst));
            if let Some(t) = &e.ty {
                o.insert("type".into(), type_to_json(t));
            }
            Json::Object(o)
        })
        .collect();
    obj.insert("nodes".into(), Json::Array(nodes));
    obj.insert("edges".into(), Json::Array(edges));
    Json::Object(obj)
}

pub fn graph_from_json(j: &Json, path: &str) -> Decoded<Graph> {
    let obj = object(j, path)?;
    let name = match obj.get("name") {
        None => None,
        Some(n) => Some(string(n, &child(path, "name"))?.to_string()),
    };
    let nodes_at = child(path, "nodes");
    let mut nodes = Vec::new();
    for (i, n) in array(field(obj, "nodes", path)?, &nodes_at)?.iter().enumerate() {
        let at = child(&nodes_at, i);
        let o = object(n, &at)?;
        let id = NodeId(u32_of(field(o, "id", &at)?, &child(&at, "id"))?);
        let kind = kind_of(field(o, "kind", &at)?, &child(&at, "kind"))?;
        nodes.push(Node { id, kind });
    }
    let edges_at = child(path, "edges");
    let mut edges = Vec::new();
    for (i, e) in array(field(obj, "edges", path)?, &edges_at)?.iter().enumerate() {
        let at = child(&edges_at, i);
        let o = object(e, &at)?;
        let src = port_ref_of(field(o, "src", &at)?, &child(&at, "src"))?;
        let dst = port_ref_of(field(o, "dst", &at)?, &child(&at, "dst"))?;
        let ty = match o.get("type") {
            None | Some(Json::Null) => None,
            Some(t) => Some(type_from_json(t, &child(&at, "type"))?),
        };
        edges.push(Edge { src, dst, ty });
    }
    Ok(Graph::from_parts(name, nodes, edges))
}

pub fn serialize_graph(g: &Graph) -> String {
    canonical(&graph_to_json(g))
}

pub fn deserialize_graph(text: &str) -> Decoded<Graph> {
    graph_from_json(&parse(text)?, "")
}

// ---- types --------------------------------------------------------------

pub fn type_to_json(t: &Type) -> Json {
    match t {
        Type::Bool => json!({ "bool": {} }),
        Type::Int => json!({ "int": {} }),
        Type::Float => json!({ "float": {} }),
        Type::Str => json!({ "str": {} }),
        Type::Pair(a, b) => json!({ "pair": { "first": type_to_json(a), "second": type_to_json(b) } }),
        Type::Vec(a) => json!({ "vec": type_to_json(a) }),
        Type::Map(k, v) => json!({ "map": { "key": type_to_json(k), "value": type_to_json(v) } }),
        Type::Struct(r) => json!({ "struct": row_to_json(r) }),
        Type::Variant(r) => json!({ "variant": row_to_json(r) }),
        Type::Graph(g) => json!({ "graph": { "inputs": row_to_json(&g.inputs), "outputs": row_to_json(&g.outputs) } }),
        Type::Var(v) => json!({ "var": v.0 }),
    }
}

pub fn type_from_json(j: &Json, path: &str) -> Decoded<Type> {
    let (kind, body) = tagged(j, path)?;
    let here = child(path, kind);
    match kind {
        "bool" => empty_object(body, &here).map(|_| Type::Bool),
        "int" => empty_object(body, &here).map(|_| Type::Int),
        "float" => empty_object(body, &here).map(|_| Type::Float),
        "str" => empty_object(body, &here).map(|_| Type::Str),
        "pair" => {
            let obj = object(body, &here)?;
            let a = type_from_json(field(obj, "first", &here)?, &child(&here, "first"))?;
            let b = type_from_json(field(obj, "second", &here)?, &child(&here, "second"))?;
            Ok(Type::pair(a, b))
        }
        "vec" => Ok(Type::vec(type_from_json(body, &here)?)),
        "map" => {
            let obj = object(body, &here)?;
            let k = type_from_json(field(obj, "key", &here)?, &child(&here, "key"))?;
            let v = type_from_json(field(obj, "value", &here)?, &child(&here, "value"))?;
            Ok(Type::map(k, v))
        }
        "struct" => Ok(Type::Struct(row_from_json(body, &here)?)),
        "variant" => Ok(Type::Variant(row_from_json(body, &here)?)),
        "graph" => {
            let obj = object(body, &here)?;
            let inputs = row_from_json(field(obj, "inputs", &here)?, &child(&here, "inputs"))?;
            let outputs = row_from_json(field(obj, "outputs", &here)?, &child(&here, "outputs"))?;
            Ok(Type::graph(inputs, outputs))
        }
        "var" => Ok(Type::var(u32_of(body, &here)?)),
        other => Err(DecodeError::new(path, format!("unknown type kind {other:?}"))),
    }
}

pub fn row_to_json(r: &Row) -> Json {
    let entries: Map<String, Json> = r
        .entries
        .iter()
        .map(|(l, t)| (l.to_string(), type_to_json(t)))
        .collect();
    let rest = match r.rest {
        Some(v) => json!({ "var": v.0 }),
        None => Json::Null,
    };
    json!({ "entries": entries, "rest": rest })
}

pub fn row_from_json(j: &Json, path: &str) -> Decoded<Row> {
    let obj = object(j, path)?;
    let entries_at = child(path, "entries");
    let mut entries = BTreeMap::new();
    for (k, v) in object(field(obj, "entries", path)?, &entries_at)? {
        let at = child(&entries_at, k);
        entries.insert(label_of(k, &at)?, type_from_json(v, &at)?);
    }
    let rest_at = child(path, "rest");
    let rest = match field(obj, "rest", path)? {
        Json::Null => None,
        other => {
            let o = object(other, &rest_at)?;
            Some(RowVar(u32_of(field(o, "var", &rest_at)?, &child(&rest_at, "var"))?))
        }
    };
    Ok(Row { entries, rest })
}

pub fn scheme_to_json(s: &TypeScheme) -> Json {
    let forall: Vec<Json> = s
        .vars
        .iter()
        .map(|(k, n)| json!([if *k == VarKind::Type { "t" } else { "r" }, n]))
        .collect();
    let constraints: Vec<Json> = s
        .constraints
        .iter()
        .map(|c| match c {
            SchemeConstraint::Lacks { row, label } => json!({ "lacks": { "row": row.0, "label": label.as_str() } }),
            SchemeConstraint::Partition { a, b, whole } => json!({
                "partition": { "a": row_to_json(a), "b": row_to_json(b), "whole": row_to_json(whole) }
            }),
        })
        .collect();
    json!({
        "forall": forall,
        "constraints": constraints,
        "inputs": row_to_json(&s.body.inputs),
        "outputs": row_to_json(&s.body.outputs),
    })
}

pub fn scheme_from_json(j: &Json, path: &str) -> Decoded<TypeScheme> {
    let obj = object(j, path)?;
    let forall_at = child(path, "forall");
    let mut vars = Vec::new();
    for (i, v) in array(field(obj, "forall", path)?, &forall_at)?.iter().enumerate() {
        let at = child(&forall_at, i);
        let pair = array(v, &at)?;
        if pair.len() != 2 {
            return Err(DecodeError::new(&at, "expected [\"t\"|\"r\", id]"));
        }
        let kind = match string(&pair[0], &child(&at, 0))? {
            "t" => VarKind::Type,
            "r" => VarKind::Row,
            _ => return Err(DecodeError::new(&child(&at, 0), "expected \"t\" or \"r\"")),
        };
        vars.push((kind, u32_of(&pair[1], &child(&at, 1))?));
    }
    let cs_at = child(path, "constraints");
    let mut constraints = Vec::new();
    for (i, c) in array(field(obj, "constraints", path)?, &cs_at)?.iter().enumerate() {
        let at = child(&cs_at, i);
        let (kind, body) = tagged(c, &at)?;
        let here = child(&at, kind);
        let o = object(body, &here)?;
        constraints.push(match kind {
            "lacks" => {
                let row = RowVar(u32_of(field(o, "row", &here)?, &child(&here, "row"))?);
                let label_at = child(&here, "label");
                let label = label_of(string(field(o, "label", &here)?, &label_at)?, &label_at)?;
                SchemeConstraint::Lacks { row, label }
            }
            "partition" => SchemeConstraint::Partition {
                a: row_from_json(field(o, "a", &here)?, &child(&here, "a"))?,
                b: row_from_json(field(o, "b", &here)?, &child(&here, "b"))?,
                whole: row_from_json(field(o, "whole", &here)?, &child(&here, "whole"))?,
            },
            other => return Err(DecodeError::new(&at, format!("unknown constraint {other:?}"))),
        });
    }
    let inputs = row_from_json(field(obj, "inputs", path)?, &child(path, "inputs"))?;
    let outputs = row_from_json(field(obj, "outputs", path)?, &child(path, "outputs"))?;
    Ok(TypeScheme {
        vars,
        constraints,
        body: GraphType { inputs, outputs },
    })
}

pub fn signature_to_json(sig: &Signature) -> Json {
    let mut namespaces: BTreeMap<String, Map<String, Json>> = BTreeMap::new();
    for (f, s) in sig.iter() {
        namespaces
            .entry(f.namespace.clone())
            .or_default()
            .insert(f.name.clone(), scheme_to_json(s));
    }
    let ns: Map<String, Json> = namespaces
        .into_iter()
        .map(|(k, fs)| (k, json!({ "functions": fs })))
        .collect();
    let mut obj = Map::new();
    obj.insert("namespaces".into(), Json::Object(ns));
    if sig.idempotent {
        obj.insert("idempotent".into(), Json::Bool(true));
    }
    Json::Object(obj)
}

pub fn signature_from_json(j: &Json, path: &str) -> Decoded<Signature> {
    let obj = object(j, path)?;
    let ns_at = child(path, "namespaces");
    let mut sig = Signature::new();
    for (ns, body) in object(field(obj, "namespaces", path)?, &ns_at)? {
        let at = child(&ns_at, ns);
        if !crate::value::is_identifier(ns) {
            return Err(DecodeError::new(&at, "namespace must be an identifier"));
        }
        let fs_at = child(&at, "functions");
        for (f, scheme) in object(field(object(body, &at)?, "functions", &at)?, &fs_at)? {
            let f_at = child(&fs_at, f);
            if !crate::value::is_identifier(f) {
                return Err(DecodeError::new(&f_at, "function name must be an identifier"));
            }
            sig.insert(FunctionName::new(ns.as_str(), f.as_str()), scheme_from_json(scheme, &f_at)?);
        }
    }
    sig.idempotent = match obj.get("idempotent") {
        None => false,
        Some(b) => b
            .as_bool()
            .ok_or_else(|| DecodeError::new(&child(path, "idempotent"), "expected a boolean"))?,
    };
    Ok(sig)
}
