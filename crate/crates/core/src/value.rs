//! Runtime values and the identifiers shared by graphs, types and values.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("invalid label {0:?}: expected [a-zA-Z_][a-zA-Z0-9_]*")]
    Label(String),
    #[error("invalid function name {0:?}: expected namespace/name")]
    Function(String),
}

/// A port, field or tag name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(String);

impl Label {
    pub fn new(s: impl Into<String>) -> Result<Self, NameError> {
        let s = s.into();
        if is_identifier(&s) {
            Ok(Label(s))
        } else {
            Err(NameError::Label(s))
        }
    }

    /// Panics on an invalid identifier; for labels fixed at compile time.
    pub fn from_static(s: &'static str) -> Self {
        Label::new(s).expect("static label must be a valid identifier")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&'static str> for Label {
    fn from(s: &'static str) -> Self {
        Label::from_static(s)
    }
}

impl std::borrow::Borrow<str> for Label {
    fn borrow(&self) -> &str {
        &self.0
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Qualified function name, written `namespace/name`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunctionName {
    pub namespace: String,
    pub name: String,
}

impl FunctionName {
    pub fn new(namespace: impl Into<String>, name: impl Into<String>) -> Self {
        FunctionName {
            namespace: namespace.into(),
            name: name.into(),
        }
    }

    pub fn builtin(name: &str) -> Self {
        FunctionName::new("builtin", name)
    }
}

impl std::str::FromStr for FunctionName {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('/') {
            Some((ns, name)) if is_identifier(ns) && is_identifier(name) => {
                Ok(FunctionName::new(ns, name))
            }
            _ => Err(NameError::Function(s.to_string())),
        }
    }
}

impl fmt::Display for FunctionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.namespace, self.name)
    }
}

/// Named port values: the inputs or outputs of a node, function or graph.
pub type Ports = BTreeMap<Label, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("map key of kind {0} is not hashable")]
pub struct UnhashableKey(pub &'static str);

/// An immutable runtime datum.
///
/// Compound payloads sit behind `Arc` so that values handed between frames
/// and across threads are shared rather than copied.
///
/// Equality and ordering are total: floats compare with `f64::total_cmp`,
/// so `NaN == NaN` and `0.0 != -0.0`. This is structural identity, not
/// numeric comparison.
#[derive(Debug, Clone)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Pair(Arc<(Value, Value)>),
    Vec(Arc<Vec<Value>>),
    Map(Arc<BTreeMap<Value, Value>>),
    Struct(Arc<BTreeMap<Label, Value>>),
    Variant(Label, Arc<Value>),
    Graph(Arc<Graph>),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }

    pub fn pair(first: Value, second: Value) -> Self {
        Value::Pair(Arc::new((first, second)))
    }

    pub fn vec(items: impl IntoIterator<Item = Value>) -> Self {
        Value::Vec(Arc::new(items.into_iter().collect()))
    }

    pub fn floats(items: &[f64]) -> Self {
        Value::vec(items.iter().map(|&x| Value::Float(x)))
    }

    pub fn variant(tag: Label, inner: Value) -> Self {
        Value::Variant(tag, Arc::new(inner))
    }

    pub fn graph(g: Graph) -> Self {
        Value::Graph(Arc::new(g))
    }

    pub fn structure(fields: impl IntoIterator<Item = (Label, Value)>) -> Self {
        Value::Struct(Arc::new(fields.into_iter().collect()))
    }

    /// Builds a map, rejecting keys that may not be hashed.
    pub fn map(entries: impl IntoIterator<Item = (Value, Value)>) -> Result<Self, UnhashableKey> {
        let mut out = BTreeMap::new();
        for (k, v) in entries {
            k.check_hashable()?;
            out.insert(k, v);
        }
        Ok(Value::Map(Arc::new(out)))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "Bool",
            Value::Int(_) => "Int",
            Value::Float(_) => "Float",
            Value::Str(_) => "Str",
            Value::Pair(_) => "Pair",
            Value::Vec(_) => "Vec",
            Value::Map(_) => "Map",
            Value::Struct(_) => "Struct",
            Value::Variant(..) => "Variant",
            Value::Graph(_) => "Graph",
        }
    }

    /// Keys may be Bool, Int, Str, or Pair/Vec/Variant built from those.
    pub fn check_hashable(&self) -> Result<(), UnhashableKey> {
        match self {
            Value::Bool(_) | Value::Int(_) | Value::Str(_) => Ok(()),
            Value::Pair(p) => {
                p.0.check_hashable()?;
                p.1.check_hashable()
            }
            Value::Vec(items) => items.iter().try_for_each(Value::check_hashable),
            Value::Variant(_, inner) => inner.check_hashable(),
            other => Err(UnhashableKey(other.kind_name())),
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            Value::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_graph(&self) -> Option<&Arc<Graph>> {
        match self {
            Value::Graph(g) => Some(g),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Bool(_) => 0,
            Value::Int(_) => 1,
            Value::Float(_) => 2,
            Value::Str(_) => 3,
            Value::Pair(_) => 4,
            Value::Vec(_) => 5,
            Value::Map(_) => 6,
            Value::Struct(_) => 7,
            Value::Variant(..) => 8,
            Value::Graph(_) => 9,
        }
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        use Value::*;
        match (self, other) {
            (Bool(a), Bool(b)) => a.cmp(b),
            (Int(a), Int(b)) => a.cmp(b),
            (Float(a), Float(b)) => a.total_cmp(b),
            (Str(a), Str(b)) => a.cmp(b),
            (Pair(a), Pair(b)) => a.cmp(b),
            (Vec(a), Vec(b)) => a.cmp(b),
            (Map(a), Map(b)) => a.cmp(b),
            (Struct(a), Struct(b)) => a.cmp(b),
            (Variant(ta, a), Variant(tb, b)) => ta.cmp(tb).then_with(|| a.cmp(b)),
            (Graph(a), Graph(b)) => {
                if Arc::ptr_eq(a, b) {
                    Ordering::Equal
                } else {
                    a.cmp(b)
                }
            }
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(n)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Pair(p) => write!(f, "({}, {})", p.0, p.1),
            Value::Vec(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Value::Map(m) => {
                f.write_str("{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
            Value::Struct(fields) => {
                f.write_str("struct{")?;
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
            Value::Variant(tag, inner) => write!(f, "{tag}({inner})"),
            Value::Graph(g) => match &g.name {
                Some(name) => write!(f, "<graph {name}>"),
                None => f.write_str("<graph>"),
            },
        }
    }
}
