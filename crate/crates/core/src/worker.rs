//! Workers: anything that advertises a signature and runs its functions.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::builtins;
use crate::signature::Signature;
use crate::value::{FunctionName, Ports};

/// Per-call context handed to a worker.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunContext {
    /// Base URL of the invoking runtime, for callbacks.
    pub callback: String,
    pub job: String,
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkerError {
    #[error("unknown function {0}")]
    UnknownFunction(FunctionName),
    #[error("{message}")]
    Failed {
        message: String,
        detail: Option<serde_json::Value>,
    },
    #[error("timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("endpoint {0} unreachable")]
    Unreachable(String),
    #[error("{0}")]
    Unauthorized(String),
}

impl WorkerError {
    pub fn failed(message: impl Into<String>) -> Self {
        WorkerError::Failed {
            message: message.into(),
            detail: None,
        }
    }
}

pub trait Worker: Send + Sync {
    fn signature(&self) -> Signature;
    fn run(&self, name: &FunctionName, inputs: Ports, ctx: &RunContext) -> Result<Ports, WorkerError>;
}

/// Where a function name is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Builtin,
    Worker(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("function {function} is provided by both {first} and {second}")]
pub struct Collision {
    pub function: FunctionName,
    pub first: String,
    pub second: String,
}

/// The functions a runtime can execute: the builtins plus every child
/// worker's signature. Names are unique across children.
#[derive(Clone)]
pub struct FunctionIndex {
    signature: Signature,
    bindings: BTreeMap<FunctionName, Binding>,
    workers: Vec<(String, Arc<dyn Worker>)>,
}

impl std::fmt::Debug for FunctionIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionIndex")
            .field("functions", &self.bindings.len())
            .field("workers", &self.workers.iter().map(|(n, _)| n).collect::<Vec<_>>())
            .finish()
    }
}

impl Default for FunctionIndex {
    fn default() -> Self {
        Self::builtin()
    }
}

impl FunctionIndex {
    pub fn builtin() -> Self {
        let signature = builtins::signature();
        let bindings = signature.names().map(|f| (f.clone(), Binding::Builtin)).collect();
        FunctionIndex {
            signature,
            bindings,
            workers: Vec::new(),
        }
    }

    /// Adds a child under the display name `endpoint`. A child's own
    /// `builtin` namespace is ignored: the runtime always runs builtins itself.
    pub fn add_worker(&mut self, endpoint: impl Into<String>, worker: Arc<dyn Worker>) -> Result<(), Collision> {
        let endpoint = endpoint.into();
        let sig = worker.signature().without_namespace(builtins::NAMESPACE);
        for f in sig.names() {
            if let Some(b) = self.bindings.get(f) {
                let first = match b {
                    Binding::Builtin => "builtin".to_string(),
                    Binding::Worker(i) => self.workers[*i].0.clone(),
                };
                return Err(Collision {
                    function: f.clone(),
                    first,
                    second: endpoint,
                });
            }
        }
        let idx = self.workers.len();
        for f in sig.names() {
            self.bindings.insert(f.clone(), Binding::Worker(idx));
        }
        self.signature.merge(&sig).expect("collisions checked above");
        self.workers.push((endpoint, worker));
        Ok(())
    }

    pub fn with_worker(mut self, endpoint: impl Into<String>, worker: Arc<dyn Worker>) -> Result<Self, Collision> {
        self.add_worker(endpoint, worker)?;
        Ok(self)
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn binding(&self, f: &FunctionName) -> Option<Binding> {
        self.bindings.get(f).copied()
    }

    pub fn worker(&self, idx: usize) -> (&str, &Arc<dyn Worker>) {
        let (n, w) = &self.workers[idx];
        (n, w)
    }

    pub fn workers(&self) -> impl Iterator<Item = (&str, &Arc<dyn Worker>)> {
        self.workers.iter().map(|(n, w)| (n.as_str(), w))
    }

    /// True when every function of the worker at `idx` may be re-run.
    pub fn idempotent(&self, idx: usize) -> bool {
        self.workers[idx].1.signature().idempotent
    }
}

/// A worker whose functions are plain Rust closures.
pub struct FnWorker {
    signature: Signature,
    #[allow(clippy::type_complexity)]
    functions: BTreeMap<FunctionName, Box<dyn Fn(&Ports, &RunContext) -> Result<Ports, WorkerError> + Send + Sync>>,
}

impl Default for FnWorker {
    fn default() -> Self {
        Self::new()
    }
}

impl FnWorker {
    pub fn new() -> Self {
        FnWorker {
            signature: Signature::new(),
            functions: BTreeMap::new(),
        }
    }

    pub fn function(
        mut self,
        name: &str,
        scheme: crate::types::TypeScheme,
        f: impl Fn(&Ports, &RunContext) -> Result<Ports, WorkerError> + Send + Sync + 'static,
    ) -> Self {
        let name: FunctionName = name.parse().expect("namespace/name");
        self.signature.insert(name.clone(), scheme);
        self.functions.insert(name, Box::new(f));
        self
    }

    pub fn idempotent(mut self, yes: bool) -> Self {
        self.signature.idempotent = yes;
        self
    }
}

impl Worker for FnWorker {
    fn signature(&self) -> Signature {
        self.signature.clone()
    }

    fn run(&self, name: &FunctionName, inputs: Ports, ctx: &RunContext) -> Result<Ports, WorkerError> {
        match self.functions.get(name) {
            Some(f) => f(&inputs, ctx),
            None => Err(WorkerError::UnknownFunction(name.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Row, Type, TypeScheme};

    fn one(name: &str) -> Arc<dyn Worker> {
        Arc::new(FnWorker::new().function(
            name,
            TypeScheme::monomorphic(Row::empty(), Row::closed([("value", Type::Int)])),
            |_, _| Ok(Ports::new()),
        ))
    }

    #[test]
    fn builtin_only() {
        let idx = FunctionIndex::builtin();
        assert_eq!(idx.signature().namespaces().into_iter().collect::<Vec<_>>(), vec!["builtin"]);
        assert_eq!(idx.binding(&FunctionName::builtin("fsub")), Some(Binding::Builtin));
    }

    #[test]
    fn union_of_children() {
        let idx = FunctionIndex::builtin()
            .with_worker("http://a", one("m/f"))
            .unwrap()
            .with_worker("http://b", one("n/g"))
            .unwrap();
        assert_eq!(idx.binding(&"n/g".parse().unwrap()), Some(Binding::Worker(1)));
        assert_eq!(idx.signature().len(), builtins::signature().len() + 2);
    }

    #[test]
    fn collision_names_both_endpoints() {
        let err = FunctionIndex::builtin()
            .with_worker("http://a", one("m/f"))
            .unwrap()
            .with_worker("http://b", one("m/f"))
            .unwrap_err();
        assert_eq!(err.first, "http://a");
        assert_eq!(err.second, "http://b");
        assert!(err.to_string().contains("http://a") && err.to_string().contains("http://b"));
    }
}
