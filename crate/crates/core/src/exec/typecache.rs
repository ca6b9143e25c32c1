use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use crate::graph::Graph;
use crate::signature::Signature;
use crate::types::{infer_graph, GraphTyper, Inferred, Type, TypeScheme};

const LIMIT: usize = 4096;

/// Inference results keyed by graph allocation. Entries hold their graph so
/// a pointer is never reused while cached.
pub(crate) struct TypeCache<'a> {
    sigs: &'a Signature,
    entries: RefCell<HashMap<usize, Entry>>,
}

struct Entry {
    _graph: Arc<Graph>,
    inferred: Option<Arc<Inferred>>,
    edges: Option<Arc<Vec<Type>>>,
}

fn key(g: &Arc<Graph>) -> usize {
    Arc::as_ptr(g) as usize
}

impl<'a> TypeCache<'a> {
    pub fn new(sigs: &'a Signature) -> Self {
        TypeCache {
            sigs,
            entries: RefCell::new(HashMap::new()),
        }
    }

    pub fn seed(&self, g: &Arc<Graph>, inferred: Arc<Inferred>) {
        let edges = Arc::new(inferred.edge_types());
        self.entries.borrow_mut().insert(
            key(g),
            Entry {
                _graph: Arc::clone(g),
                inferred: Some(inferred),
                edges: Some(edges),
            },
        );
    }

    fn ensure(&self, g: &Arc<Graph>) {
        if self.entries.borrow().contains_key(&key(g)) {
            return;
        }
        let inferred = infer_graph(g, self.sigs).ok().map(Arc::new);
        let edges = inferred.as_ref().map(|i| Arc::new(i.edge_types()));
        let mut entries = self.entries.borrow_mut();
        if entries.len() >= LIMIT {
            entries.clear();
        }
        entries.insert(
            key(g),
            Entry {
                _graph: Arc::clone(g),
                inferred,
                edges,
            },
        );
    }

    pub fn edge_types(&self, g: &Arc<Graph>) -> Option<Arc<Vec<Type>>> {
        self.ensure(g);
        self.entries.borrow().get(&key(g)).and_then(|e| e.edges.clone())
    }
}

impl GraphTyper for TypeCache<'_> {
    fn graph_scheme(&self, g: &Arc<Graph>) -> Result<TypeScheme, String> {
        self.ensure(g);
        match self.entries.borrow().get(&key(g)).and_then(|e| e.inferred.clone()) {
            Some(i) => Ok(i.scheme.clone()),
            None => infer_graph(g, self.sigs).map(|i| i.scheme).map_err(|e| e.to_string()),
        }
    }
}
