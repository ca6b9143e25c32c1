//! Type syntax, unification, inference and runtime conformance checks.

mod check;
mod infer;
mod syntax;
mod unify;

use std::fmt;

pub use check::{check_value, GraphTyper, SignatureTyper};
pub use infer::{infer_graph, infer_graph_with, type_of_value, InferError, InferOptions, Inferred};
pub use syntax::{
    FreeVars, GraphType, Renaming, Row, RowVar, SchemeConstraint, Type, TypePrinter, TypeScheme,
    TypeVar, VarKind,
};
pub use unify::{Partition, Substitution, UnifyError, UnifyErrorKind, VarSupply};

use crate::graph::{NodeId, PortRef};
use crate::value::Label;

/// A scheme with its quantified variables replaced by fresh ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub inputs: Row,
    pub outputs: Row,
    pub constraints: Vec<SchemeConstraint>,
}

pub fn instantiate(s: &TypeScheme, fresh: &mut dyn VarSupply) -> Instance {
    let mut ren = Renaming::default();
    for &(kind, id) in &s.vars {
        match kind {
            VarKind::Type => {
                ren.types.insert(id, Type::Var(fresh.fresh_type()));
            }
            VarKind::Row => {
                ren.rows.insert(id, Row::var(fresh.fresh_row().0));
            }
        }
    }
    let row_id = |r: RowVar| match ren.rows.get(&r.0).and_then(|row| row.rest) {
        Some(v) => v,
        None => r,
    };
    let constraints = s
        .constraints
        .iter()
        .map(|c| match c {
            SchemeConstraint::Lacks { row, label } => SchemeConstraint::Lacks {
                row: row_id(*row),
                label: label.clone(),
            },
            SchemeConstraint::Partition { a, b, whole } => SchemeConstraint::Partition {
                a: ren.apply_row(a),
                b: ren.apply_row(b),
                whole: ren.apply_row(whole),
            },
        })
        .collect();
    Instance {
        inputs: ren.apply_row(&s.body.inputs),
        outputs: ren.apply_row(&s.body.outputs),
        constraints,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TypeErrorKind {
    Mismatch,
    OccursCheck,
    MissingLabel,
    DuplicateLabel,
    LacksViolation,
    UnsolvedPartition,
    UnknownFunction,
}

impl TypeErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TypeErrorKind::Mismatch => "Mismatch",
            TypeErrorKind::OccursCheck => "OccursCheck",
            TypeErrorKind::MissingLabel => "MissingLabel",
            TypeErrorKind::DuplicateLabel => "DuplicateLabel",
            TypeErrorKind::LacksViolation => "LacksViolation",
            TypeErrorKind::UnsolvedPartition => "UnsolvedPartition",
            TypeErrorKind::UnknownFunction => "UnknownFunction",
        }
    }
}

/// Where a type error was found. `path` lists the enclosing Box (or
/// graph-valued Const) node ids from the outermost graph inwards.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Location {
    Node {
        path: Vec<NodeId>,
        node: NodeId,
        port: Option<Label>,
    },
    Edge {
        path: Vec<NodeId>,
        src: PortRef,
        dst: PortRef,
    },
    GraphInput(Label),
    Value(String),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = |f: &mut fmt::Formatter<'_>, path: &[NodeId]| -> fmt::Result {
            for n in path {
                write!(f, "{n}/")?;
            }
            Ok(())
        };
        match self {
            Location::Node { path, node, port } => {
                prefix(f, path)?;
                match port {
                    Some(p) => write!(f, "{node}.{p}"),
                    None => write!(f, "{node}"),
                }
            }
            Location::Edge { path, src, dst } => {
                prefix(f, path)?;
                write!(f, "{src} -> {dst}")
            }
            Location::GraphInput(l) => write!(f, "input {l}"),
            Location::Value(p) => write!(f, "value at {p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub location: Location,
    pub expected: Option<String>,
    pub actual: Option<String>,
    pub message: String,
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.kind.as_str(), self.location, self.message)
    }
}

impl std::error::Error for TypeError {}

impl TypeError {
    pub(crate) fn from_unify(e: &UnifyError, location: Location) -> TypeError {
        let (kind, expected, actual, message) = match &e.kind {
            UnifyErrorKind::Mismatch { expected, actual } => {
                let mut p = TypePrinter::new();
                let exp = p.ty(expected);
                let act = p.ty(actual);
                let msg = format!("expected {exp}, found {act}");
                (TypeErrorKind::Mismatch, Some(exp), Some(act), msg)
            }
            UnifyErrorKind::Occurs => (
                TypeErrorKind::OccursCheck,
                None,
                None,
                "a type variable occurs inside its own definition".to_string(),
            ),
            UnifyErrorKind::MissingLabel(l) => (
                TypeErrorKind::MissingLabel,
                Some(l.to_string()),
                None,
                format!("label {l:?} is missing on one side"),
            ),
            UnifyErrorKind::DuplicateLabel(l) => (
                TypeErrorKind::DuplicateLabel,
                None,
                Some(l.to_string()),
                format!("label {l:?} appears on both sides of a disjoint union"),
            ),
            UnifyErrorKind::LacksViolation(l) => (
                TypeErrorKind::LacksViolation,
                None,
                Some(l.to_string()),
                format!("row may not contain label {l:?}"),
            ),
        };
        TypeError {
            kind,
            location,
            expected,
            actual,
            message,
        }
    }
}
