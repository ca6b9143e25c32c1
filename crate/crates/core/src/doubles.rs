//! In-process stand-ins for the `mock` and `optimizer` example workers.
//!
//! `mock/run_circuit` returns cos(p0)·cos(p1) in place of a measured
//! expectation value. `optimizer/new_params` takes one Gauss–Seidel step of
//! gradient descent, estimating each partial derivative with a central
//! difference of the same cost.

use std::sync::Arc;
use std::time::Duration;

use crate::types::{Row, Type, TypeScheme};
use crate::value::{Label, Ports, Value};
use crate::worker::{FnWorker, FunctionIndex, WorkerError};

pub const STEP: f64 = 1e-4;
pub const LEARNING_RATE: f64 = 0.5;

pub fn cost(params: &[f64]) -> f64 {
    params.iter().map(|p| p.cos()).product()
}

/// One descent step from `params`.
pub fn descend(params: &[f64]) -> Vec<f64> {
    let mut p = params.to_vec();
    for i in 0..p.len() {
        let mut hi = p.clone();
        let mut lo = p.clone();
        hi[i] += STEP;
        lo[i] -= STEP;
        let grad = (cost(&hi) - cost(&lo)) / (2.0 * STEP);
        p[i] -= LEARNING_RATE * grad;
    }
    p
}

fn history_type() -> Type {
    Type::vec(Type::pair(Type::vec(Type::Float), Type::Float))
}

fn mono<const N: usize>(inputs: [(&'static str, Type); N], out: Type) -> TypeScheme {
    TypeScheme::monomorphic(Row::closed(inputs), Row::closed([("value", out)]))
}

fn get<'a>(inputs: &'a Ports, port: &str) -> Result<&'a Value, WorkerError> {
    inputs
        .get(port)
        .ok_or_else(|| WorkerError::failed(format!("missing input {port:?}")))
}

fn floats(v: &Value, port: &str) -> Result<Vec<f64>, WorkerError> {
    let bad = || WorkerError::failed(format!("{port} must be Vec(Float)"));
    match v {
        Value::Vec(items) => items.iter().map(|x| x.as_float().ok_or_else(bad)).collect(),
        _ => Err(bad()),
    }
}

fn int(v: &Value, port: &str) -> Result<i64, WorkerError> {
    v.as_int().ok_or_else(|| WorkerError::failed(format!("{port} must be Int")))
}

fn out(v: Value) -> Ports {
    Ports::from([(Label::from_static("value"), v)])
}

/// Costs recorded in a `Vec(Pair(Vec(Float), Float))` history.
fn costs(history: &Value) -> Result<Vec<f64>, WorkerError> {
    let bad = || WorkerError::failed("history must be Vec(Pair(Vec(Float), Float))");
    match history {
        Value::Vec(items) => items
            .iter()
            .map(|entry| match entry {
                Value::Pair(p) => p.1.as_float().ok_or_else(bad),
                _ => Err(bad()),
            })
            .collect(),
        _ => Err(bad()),
    }
}

/// `mock/run_circuit`, `mock/zne_fold` and `mock/sleep_ms`.
pub fn mock() -> FnWorker {
    FnWorker::new()
        .function("mock/run_circuit", mono([("params", Type::vec(Type::Float))], Type::Float), |inputs, _| {
            let p = floats(get(inputs, "params")?, "params")?;
            Ok(out(Value::Float(cost(&p))))
        })
        .function(
            "mock/zne_fold",
            mono([("circuit", Type::Str), ("factor", Type::Int)], Type::Str),
            |inputs, _| {
                let c = match get(inputs, "circuit")? {
                    Value::Str(s) => s.clone(),
                    _ => return Err(WorkerError::failed("circuit must be Str")),
                };
                let k = int(get(inputs, "factor")?, "factor")?;
                if k < 1 || k % 2 == 0 {
                    return Err(WorkerError::failed("fold factor must be odd and positive"));
                }
                // C (C† C)^((k-1)/2)
                let mut folded = c.to_string();
                for _ in 0..(k - 1) / 2 {
                    folded.push_str(&format!(";inv({c});{c}"));
                }
                Ok(out(Value::str(folded)))
            },
        )
        .function("mock/sleep_ms", mono([("ms", Type::Int)], Type::Int), |inputs, _| {
            let ms = int(get(inputs, "ms")?, "ms")?;
            std::thread::sleep(Duration::from_millis(ms.max(0) as u64));
            Ok(out(Value::Int(ms)))
        })
        .idempotent(true)
}

/// `optimizer/new_params` and `optimizer/converged`.
pub fn optimizer() -> FnWorker {
    FnWorker::new()
        .function(
            "optimizer/new_params",
            mono(
                [("params", Type::vec(Type::Float)), ("cost", Type::Float), ("history", history_type())],
                Type::vec(Type::Float),
            ),
            |inputs, _| {
                let p = floats(get(inputs, "params")?, "params")?;
                Ok(out(Value::floats(&descend(&p))))
            },
        )
        .function(
            "optimizer/converged",
            mono([("history", history_type()), ("tol", Type::Float)], Type::Bool),
            |inputs, _| {
                let c = costs(get(inputs, "history")?)?;
                let tol = get(inputs, "tol")?
                    .as_float()
                    .ok_or_else(|| WorkerError::failed("tol must be Float"))?;
                let done = c.len() >= 2 && (c[c.len() - 1] - c[c.len() - 2]).abs() < tol;
                Ok(out(Value::Bool(done)))
            },
        )
        .idempotent(true)
}

/// Builtins plus both double workers.
pub fn index() -> FunctionIndex {
    FunctionIndex::builtin()
        .with_worker("mock", Arc::new(mock()))
        .and_then(|i| i.with_worker("optimizer", Arc::new(optimizer())))
        .expect("doubles use distinct namespaces")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worker::{RunContext, Worker};

    fn call(w: &FnWorker, f: &str, inputs: Ports) -> Ports {
        w.run(&f.parse().unwrap(), inputs, &RunContext::default()).unwrap()
    }

    fn ports(entries: Vec<(&'static str, Value)>) -> Ports {
        entries.into_iter().map(|(k, v)| (Label::from_static(k), v)).collect()
    }

    #[test]
    fn cost_at_known_points() {
        let m = mock();
        let at = |p: &[f64]| call(&m, "mock/run_circuit", ports(vec![("params", Value::floats(p))]))["value"].clone();
        assert_eq!(at(&[0.0, 0.0]), Value::Float(1.0));
        assert_eq!(at(&[std::f64::consts::PI, 0.0]), Value::Float(-1.0));
    }

    #[test]
    fn converged_compares_last_two() {
        let o = optimizer();
        let entry = |c: f64| Value::pair(Value::floats(&[0.0]), Value::Float(c));
        let h = Value::vec([entry(0.5), entry(0.5 + 1e-9)]);
        let r = call(&o, "optimizer/converged", ports(vec![("history", h), ("tol", Value::Float(1e-6))]));
        assert_eq!(r["value"], Value::Bool(true));
        let h = Value::vec([entry(0.5), entry(0.4)]);
        let r = call(&o, "optimizer/converged", ports(vec![("history", h), ("tol", Value::Float(1e-6))]));
        assert_eq!(r["value"], Value::Bool(false));
        let r = call(&o, "optimizer/converged", ports(vec![("history", Value::vec([entry(0.1)])), ("tol", Value::Float(1.0))]));
        assert_eq!(r["value"], Value::Bool(false));
    }

    #[test]
    fn descent_reaches_minimum() {
        let mut p = vec![0.2, 0.2];
        for _ in 0..200 {
            p = descend(&p);
        }
        assert!((cost(&p) + 1.0).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn fold_factor() {
        let m = mock();
        let r = call(&m, "mock/zne_fold", ports(vec![("circuit", Value::str("C")), ("factor", Value::Int(3))]));
        assert_eq!(r["value"], Value::str("C;inv(C);C"));
    }
}
