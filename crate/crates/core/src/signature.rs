use std::collections::{BTreeMap, BTreeSet};

use crate::types::TypeScheme;
use crate::value::FunctionName;

/// Function names to type schemes, as advertised by a worker or runtime.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Signature {
    functions: BTreeMap<FunctionName, TypeScheme>,
    /// The worker promises its functions can safely be re-run.
    pub idempotent: bool,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: FunctionName, scheme: TypeScheme) -> Option<TypeScheme> {
        self.functions.insert(name, scheme)
    }

    pub fn get(&self, name: &FunctionName) -> Option<&TypeScheme> {
        self.functions.get(name)
    }

    pub fn contains(&self, name: &FunctionName) -> bool {
        self.functions.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FunctionName, &TypeScheme)> {
        self.functions.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &FunctionName> {
        self.functions.keys()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn namespaces(&self) -> BTreeSet<&str> {
        self.functions.keys().map(|f| f.namespace.as_str()).collect()
    }

    /// Copy without the functions of namespace `ns`.
    pub fn without_namespace(&self, ns: &str) -> Signature {
        Signature {
            functions: self
                .functions
                .iter()
                .filter(|(f, _)| f.namespace != ns)
                .map(|(f, s)| (f.clone(), s.clone()))
                .collect(),
            idempotent: self.idempotent,
        }
    }

    /// Adds every function of `other`; on a name clash nothing is added and
    /// the first clashing name is returned.
    pub fn merge(&mut self, other: &Signature) -> Result<(), FunctionName> {
        if let Some(clash) = other.functions.keys().find(|f| self.functions.contains_key(*f)) {
            return Err(clash.clone());
        }
        for (f, s) in &other.functions {
            self.functions.insert(f.clone(), s.clone());
        }
        Ok(())
    }
}

impl FromIterator<(FunctionName, TypeScheme)> for Signature {
    fn from_iter<T: IntoIterator<Item = (FunctionName, TypeScheme)>>(iter: T) -> Self {
        Signature {
            functions: iter.into_iter().collect(),
            idempotent: false,
        }
    }
}
