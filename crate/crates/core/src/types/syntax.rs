use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::value::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeVar(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowVar(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    Type,
    Row,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Type {
    Bool,
    Int,
    Float,
    Str,
    Pair(Box<Type>, Box<Type>),
    Vec(Box<Type>),
    Map(Box<Type>, Box<Type>),
    Struct(Row),
    Variant(Row),
    Graph(GraphType),
    Var(TypeVar),
}

/// A labelled list of types, optionally left open by a row variable.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Row {
    pub entries: BTreeMap<Label, Type>,
    pub rest: Option<RowVar>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GraphType {
    pub inputs: Row,
    pub outputs: Row,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemeConstraint {
    Lacks { row: RowVar, label: Label },
    Partition { a: Row, b: Row, whole: Row },
}

/// A closed polymorphic function type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeScheme {
    pub vars: Vec<(VarKind, u32)>,
    pub constraints: Vec<SchemeConstraint>,
    pub body: GraphType,
}

impl Type {
    pub fn pair(a: Type, b: Type) -> Type {
        Type::Pair(Box::new(a), Box::new(b))
    }

    pub fn vec(a: Type) -> Type {
        Type::Vec(Box::new(a))
    }

    pub fn map(k: Type, v: Type) -> Type {
        Type::Map(Box::new(k), Box::new(v))
    }

    pub fn graph(inputs: Row, outputs: Row) -> Type {
        Type::Graph(GraphType { inputs, outputs })
    }

    pub fn var(n: u32) -> Type {
        Type::Var(TypeVar(n))
    }

    /// True when no type or row variable occurs anywhere.
    pub fn is_ground(&self) -> bool {
        let mut vars = FreeVars::default();
        vars.visit_type(self);
        vars.order.is_empty()
    }
}

impl Row {
    pub fn closed<L: Into<Label>>(entries: impl IntoIterator<Item = (L, Type)>) -> Row {
        Row {
            entries: entries.into_iter().map(|(l, t)| (l.into(), t)).collect(),
            rest: None,
        }
    }

    pub fn open<L: Into<Label>>(entries: impl IntoIterator<Item = (L, Type)>, rest: u32) -> Row {
        Row {
            entries: entries.into_iter().map(|(l, t)| (l.into(), t)).collect(),
            rest: Some(RowVar(rest)),
        }
    }

    pub fn var(rest: u32) -> Row {
        Row {
            entries: BTreeMap::new(),
            rest: Some(RowVar(rest)),
        }
    }

    pub fn empty() -> Row {
        Row::default()
    }

    pub fn is_closed(&self) -> bool {
        self.rest.is_none()
    }

    pub fn labels(&self) -> BTreeSet<Label> {
        self.entries.keys().cloned().collect()
    }
}

/// Free variables in first-use order (depth-first, rows before their tails).
#[derive(Debug, Default)]
pub struct FreeVars {
    pub order: Vec<(VarKind, u32)>,
    seen: BTreeSet<(VarKind, u32)>,
}

impl FreeVars {
    fn note(&mut self, kind: VarKind, id: u32) {
        if self.seen.insert((kind, id)) {
            self.order.push((kind, id));
        }
    }

    pub fn visit_type(&mut self, t: &Type) {
        match t {
            Type::Bool | Type::Int | Type::Float | Type::Str => {}
            Type::Pair(a, b) | Type::Map(a, b) => {
                self.visit_type(a);
                self.visit_type(b);
            }
            Type::Vec(a) => self.visit_type(a),
            Type::Struct(r) | Type::Variant(r) => self.visit_row(r),
            Type::Graph(g) => self.visit_graph(g),
            Type::Var(v) => self.note(VarKind::Type, v.0),
        }
    }

    pub fn visit_row(&mut self, r: &Row) {
        for t in r.entries.values() {
            self.visit_type(t);
        }
        if let Some(rv) = r.rest {
            self.note(VarKind::Row, rv.0);
        }
    }

    pub fn visit_graph(&mut self, g: &GraphType) {
        self.visit_row(&g.inputs);
        self.visit_row(&g.outputs);
    }

    pub fn contains(&self, kind: VarKind, id: u32) -> bool {
        self.seen.contains(&(kind, id))
    }
}

/// Consistent renaming of variables, used to instantiate and normalise.
#[derive(Debug, Default, Clone)]
pub struct Renaming {
    pub types: BTreeMap<u32, Type>,
    pub rows: BTreeMap<u32, Row>,
}

impl Renaming {
    pub fn apply_type(&self, t: &Type) -> Type {
        match t {
            Type::Bool | Type::Int | Type::Float | Type::Str => t.clone(),
            Type::Pair(a, b) => Type::pair(self.apply_type(a), self.apply_type(b)),
            Type::Map(a, b) => Type::map(self.apply_type(a), self.apply_type(b)),
            Type::Vec(a) => Type::vec(self.apply_type(a)),
            Type::Struct(r) => Type::Struct(self.apply_row(r)),
            Type::Variant(r) => Type::Variant(self.apply_row(r)),
            Type::Graph(g) => Type::Graph(self.apply_graph(g)),
            Type::Var(v) => self.types.get(&v.0).cloned().unwrap_or_else(|| t.clone()),
        }
    }

    /// A row tail renamed to a (possibly non-empty) row is spliced in.
    pub fn apply_row(&self, r: &Row) -> Row {
        let mut entries: BTreeMap<Label, Type> = r
            .entries
            .iter()
            .map(|(l, t)| (l.clone(), self.apply_type(t)))
            .collect();
        let rest = match r.rest {
            Some(rv) => match self.rows.get(&rv.0) {
                Some(sub) => {
                    for (l, t) in &sub.entries {
                        entries.insert(l.clone(), t.clone());
                    }
                    sub.rest
                }
                None => Some(rv),
            },
            None => None,
        };
        Row { entries, rest }
    }

    pub fn apply_graph(&self, g: &GraphType) -> GraphType {
        GraphType {
            inputs: self.apply_row(&g.inputs),
            outputs: self.apply_row(&g.outputs),
        }
    }
}

impl TypeScheme {
    pub fn monomorphic(inputs: Row, outputs: Row) -> Self {
        TypeScheme {
            vars: Vec::new(),
            constraints: Vec::new(),
            body: GraphType { inputs, outputs },
        }
    }
}

/// Prints types with variables named `varN`, numbered in first-use order
/// across everything rendered through the same printer.
#[derive(Debug, Default)]
pub struct TypePrinter {
    names: BTreeMap<(VarKind, u32), usize>,
}

impl TypePrinter {
    pub fn new() -> Self {
        Self::default()
    }

    fn name(&mut self, kind: VarKind, id: u32) -> String {
        let next = self.names.len();
        let n = *self.names.entry((kind, id)).or_insert(next);
        format!("var{n}")
    }

    pub fn ty(&mut self, t: &Type) -> String {
        match t {
            Type::Bool => "Bool".into(),
            Type::Int => "Int".into(),
            Type::Float => "Float".into(),
            Type::Str => "Str".into(),
            Type::Pair(a, b) => {
                let a = self.ty(a);
                let b = self.ty(b);
                format!("Pair({a}, {b})")
            }
            Type::Vec(a) => format!("Vec({})", self.ty(a)),
            Type::Map(k, v) => {
                let k = self.ty(k);
                let v = self.ty(v);
                format!("Map({k}, {v})")
            }
            Type::Struct(r) => format!("Struct{}", self.row(r)),
            Type::Variant(r) => format!("Variant{}", self.row(r)),
            Type::Graph(g) => format!("Graph({})", self.graph(g)),
            Type::Var(v) => self.name(VarKind::Type, v.0),
        }
    }

    pub fn row(&mut self, r: &Row) -> String {
        let mut parts: Vec<String> = Vec::with_capacity(r.entries.len());
        for (l, t) in &r.entries {
            parts.push(format!("{l}: {}", self.ty(t)));
        }
        let body = parts.join(", ");
        match r.rest {
            Some(rv) => {
                let tail = self.name(VarKind::Row, rv.0);
                if body.is_empty() {
                    format!("(| {tail})")
                } else {
                    format!("({body} | {tail})")
                }
            }
            None => format!("({body})"),
        }
    }

    pub fn graph(&mut self, g: &GraphType) -> String {
        let i = self.row(&g.inputs);
        let o = self.row(&g.outputs);
        format!("{i} -> {o}")
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&TypePrinter::new().ty(self))
    }
}

impl fmt::Display for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&TypePrinter::new().row(self))
    }
}

impl fmt::Display for TypeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut p = TypePrinter::new();
        let body = p.graph(&self.body);
        let mut extra = Vec::new();
        for c in &self.constraints {
            match c {
                SchemeConstraint::Lacks { row, label } => {
                    extra.push(format!("{label} / {}", p.name(VarKind::Row, row.0)))
                }
                SchemeConstraint::Partition { a, b, whole } => {
                    let a = p.row(a);
                    let b = p.row(b);
                    let w = p.row(whole);
                    extra.push(format!("{a} ⊔ {b} ~ {w}"))
                }
            }
        }
        if extra.is_empty() {
            f.write_str(&body)
        } else {
            write!(f, "{} => {body}", extra.join(", "))
        }
    }
}
