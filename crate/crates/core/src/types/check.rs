//! Conformance of runtime values to (mostly ground) types.

use std::sync::Arc;

use super::unify::Substitution;
use super::{infer_graph, instantiate, FreeVars, Location, Type, TypeError, TypeErrorKind, TypePrinter, TypeScheme, VarKind};
use crate::graph::Graph;
use crate::signature::Signature;
use crate::value::Value;

/// Supplies schemes for graph values met during a check. The executor
/// implements this with a cache; [`SignatureTyper`] infers every time.
pub trait GraphTyper {
    fn graph_scheme(&self, g: &Arc<Graph>) -> Result<TypeScheme, String>;
}

pub struct SignatureTyper<'a>(pub &'a Signature);

impl GraphTyper for SignatureTyper<'_> {
    fn graph_scheme(&self, g: &Arc<Graph>) -> Result<TypeScheme, String> {
        infer_graph(g, self.0).map(|i| i.scheme).map_err(|e| e.to_string())
    }
}

/// Checks `v` against `t`. Variable positions accept anything.
pub fn check_value(v: &Value, t: &Type, typer: &dyn GraphTyper) -> Result<(), TypeError> {
    check_at(v, t, typer, &mut String::new())
}

fn mismatch(path: &str, t: &Type, found: String, message: Option<String>) -> TypeError {
    let expected = TypePrinter::new().ty(t);
    let message = message.unwrap_or_else(|| format!("expected {expected}, found {found}"));
    TypeError {
        kind: TypeErrorKind::Mismatch,
        location: Location::Value(if path.is_empty() { "/".into() } else { path.to_string() }),
        expected: Some(expected),
        actual: Some(found),
        message,
    }
}

fn nested<R>(path: &mut String, seg: &str, f: impl FnOnce(&mut String) -> R) -> R {
    let len = path.len();
    path.push('/');
    path.push_str(seg);
    let r = f(path);
    path.truncate(len);
    r
}

fn check_at(v: &Value, t: &Type, typer: &dyn GraphTyper, path: &mut String) -> Result<(), TypeError> {
    match (v, t) {
        (_, Type::Var(_)) => Ok(()),
        (Value::Bool(_), Type::Bool)
        | (Value::Int(_), Type::Int)
        | (Value::Float(_), Type::Float)
        | (Value::Str(_), Type::Str) => Ok(()),
        (Value::Pair(p), Type::Pair(a, b)) => {
            nested(path, "first", |path| check_at(&p.0, a, typer, path))?;
            nested(path, "second", |path| check_at(&p.1, b, typer, path))
        }
        (Value::Vec(items), Type::Vec(elem)) => {
            for (i, item) in items.iter().enumerate() {
                nested(path, &format!("vec/{i}"), |path| check_at(item, elem, typer, path))?;
            }
            Ok(())
        }
        (Value::Map(m), Type::Map(kt, vt)) => {
            for (i, (k, item)) in m.iter().enumerate() {
                nested(path, &format!("map/{i}/key"), |path| check_at(k, kt, typer, path))?;
                nested(path, &format!("map/{i}/value"), |path| check_at(item, vt, typer, path))?;
            }
            Ok(())
        }
        (Value::Struct(fields), Type::Struct(row)) => {
            for l in row.entries.keys() {
                if !fields.contains_key(l) {
                    return Err(mismatch(path, t, "Struct".into(), Some(format!("struct is missing field {l:?}"))));
                }
            }
            if row.is_closed() {
                if let Some(l) = fields.keys().find(|l| !row.entries.contains_key(*l)) {
                    return Err(mismatch(path, t, "Struct".into(), Some(format!("unexpected struct field {l:?}"))));
                }
            }
            for (l, ft) in &row.entries {
                nested(path, &format!("struct/{l}"), |path| check_at(&fields[l], ft, typer, path))?;
            }
            Ok(())
        }
        (Value::Variant(tag, inner), Type::Variant(row)) => match row.entries.get(tag) {
            Some(arm) => nested(path, &format!("variant/{tag}"), |path| check_at(inner, arm, typer, path)),
            None if !row.is_closed() => Ok(()),
            None => Err(mismatch(path, t, format!("Variant tag {tag:?}"), Some(format!("tag {tag:?} is not one of the variant's tags")))),
        },
        (Value::Graph(g), Type::Graph(expected)) => {
            let scheme = typer
                .graph_scheme(g)
                .map_err(|e| mismatch(path, t, "ill-typed Graph".into(), Some(e)))?;
            let mut s = Substitution::new();
            let mut fv = FreeVars::default();
            fv.visit_type(t);
            if let Some(max) = fv.order.iter().map(|(_, id)| *id).max() {
                s.reserve(max, VarKind::Type);
            }
            let inst = instantiate(&scheme, &mut s);
            let actual = Type::graph(inst.inputs, inst.outputs);
            s.unify(t, &actual).map_err(|_| {
                let found = TypePrinter::new().ty(&Type::Graph(scheme.body.clone()));
                mismatch(path, &Type::Graph(expected.clone()), found, None)
            })
        }
        _ => Err(mismatch(path, t, v.kind_name().to_string(), None)),
    }
}
