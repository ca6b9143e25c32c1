//! Union-find substitution with row unification in the Gaster–Jones style:
//! row variables carry sets of labels they must lack, and a label found on
//! only one side of an open row splits the other side's tail.

use std::collections::{BTreeMap, BTreeSet};

use super::syntax::{GraphType, Row, RowVar, Type, TypeVar, VarKind};
use crate::value::Label;

pub trait VarSupply {
    fn fresh_type(&mut self) -> TypeVar;
    fn fresh_row(&mut self) -> RowVar;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnifyErrorKind {
    Mismatch { expected: Type, actual: Type },
    Occurs,
    MissingLabel(Label),
    DuplicateLabel(Label),
    LacksViolation(Label),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnifyError {
    pub kind: UnifyErrorKind,
    /// Outermost row label under which the failure happened.
    pub at_label: Option<Label>,
}

impl From<UnifyErrorKind> for UnifyError {
    fn from(kind: UnifyErrorKind) -> Self {
        UnifyError {
            kind,
            at_label: None,
        }
    }
}

fn at(label: &Label) -> impl Fn(UnifyError) -> UnifyError + '_ {
    move |mut e| {
        e.at_label = Some(label.clone());
        e
    }
}

#[derive(Debug, Clone)]
enum Binding {
    Type(Type),
    Row(Row),
}

#[derive(Debug, Clone)]
struct Slot {
    parent: u32,
    rank: u8,
    kind: VarKind,
    binding: Option<Binding>,
    lacks: BTreeSet<Label>,
}

/// Outcome of one attempt at a partition constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Solved,
    Defer,
}

/// Variable table: representatives are union-find roots, and a root may be
/// bound to a type (type variables) or a row (row variables).
#[derive(Debug, Clone, Default)]
pub struct Substitution {
    slots: Vec<Slot>,
}

impl VarSupply for Substitution {
    fn fresh_type(&mut self) -> TypeVar {
        TypeVar(self.push(VarKind::Type))
    }

    fn fresh_row(&mut self) -> RowVar {
        RowVar(self.push(VarKind::Row))
    }
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of variables allocated so far.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn push(&mut self, kind: VarKind) -> u32 {
        let id = self.slots.len() as u32;
        self.slots.push(Slot {
            parent: id,
            rank: 0,
            kind,
            binding: None,
            lacks: BTreeSet::new(),
        });
        id
    }

    /// Makes sure ids up to `id` exist, e.g. for terms built outside this table.
    pub fn reserve(&mut self, id: u32, kind: VarKind) {
        while self.slots.len() <= id as usize {
            self.push(kind);
        }
    }

    fn find(&self, mut id: u32) -> u32 {
        while let Some(slot) = self.slots.get(id as usize) {
            if slot.parent == id {
                break;
            }
            id = slot.parent;
        }
        id
    }

    fn find_mut(&mut self, id: u32) -> u32 {
        let root = self.find(id);
        let mut cur = id;
        while let Some(slot) = self.slots.get_mut(cur as usize) {
            if slot.parent == root || slot.parent == cur {
                break;
            }
            let next = slot.parent;
            slot.parent = root;
            cur = next;
        }
        root
    }

    fn slot(&self, id: u32) -> Option<&Slot> {
        self.slots.get(id as usize)
    }

    fn slot_mut(&mut self, id: u32, kind: VarKind) -> &mut Slot {
        self.reserve(id, kind);
        &mut self.slots[id as usize]
    }

    pub fn lacks(&self, r: RowVar) -> BTreeSet<Label> {
        self.slot(self.find(r.0))
            .map(|s| s.lacks.clone())
            .unwrap_or_default()
    }

    pub fn is_row_bound(&self, r: RowVar) -> bool {
        matches!(self.slot(self.find(r.0)).and_then(|s| s.binding.as_ref()), Some(Binding::Row(_)))
    }

    /// Representative of a row variable.
    pub fn row_root(&self, r: RowVar) -> RowVar {
        RowVar(self.find(r.0))
    }

    /// Follows variable bindings at the head of `t` only.
    pub fn shallow(&self, t: &Type) -> Type {
        let mut cur = t.clone();
        loop {
            match cur {
                Type::Var(v) => {
                    let root = self.find(v.0);
                    match self.slot(root).and_then(|s| s.binding.as_ref()) {
                        Some(Binding::Type(bound)) => cur = bound.clone(),
                        _ => return Type::Var(TypeVar(root)),
                    }
                }
                other => return other,
            }
        }
    }

    /// Fully resolved type: no bound variable remains.
    pub fn apply_type(&self, t: &Type) -> Type {
        match self.shallow(t) {
            Type::Pair(a, b) => Type::pair(self.apply_type(&a), self.apply_type(&b)),
            Type::Vec(a) => Type::vec(self.apply_type(&a)),
            Type::Map(k, v) => Type::map(self.apply_type(&k), self.apply_type(&v)),
            Type::Struct(r) => Type::Struct(self.apply_row(&r)),
            Type::Variant(r) => Type::Variant(self.apply_row(&r)),
            Type::Graph(g) => Type::Graph(self.apply_graph(&g)),
            other => other,
        }
    }

    pub fn apply_row(&self, r: &Row) -> Row {
        let flat = self.flatten_lenient(r);
        Row {
            entries: flat
                .entries
                .iter()
                .map(|(l, t)| (l.clone(), self.apply_type(t)))
                .collect(),
            rest: flat.rest,
        }
    }

    pub fn apply_graph(&self, g: &GraphType) -> GraphType {
        GraphType {
            inputs: self.apply_row(&g.inputs),
            outputs: self.apply_row(&g.outputs),
        }
    }

    /// Splices bound tails into the entries. Types are not resolved.
    pub fn flatten_row(&self, r: &Row) -> Result<Row, UnifyError> {
        let mut entries = r.entries.clone();
        let mut rest = r.rest;
        while let Some(rv) = rest {
            let root = self.find(rv.0);
            match self.slot(root).and_then(|s| s.binding.as_ref()) {
                Some(Binding::Row(bound)) => {
                    for (l, t) in &bound.entries {
                        if entries.insert(l.clone(), t.clone()).is_some() {
                            return Err(UnifyErrorKind::DuplicateLabel(l.clone()).into());
                        }
                    }
                    rest = bound.rest;
                }
                _ => {
                    rest = Some(RowVar(root));
                    break;
                }
            }
        }
        Ok(Row { entries, rest })
    }

    fn flatten_lenient(&self, r: &Row) -> Row {
        let mut entries = r.entries.clone();
        let mut rest = r.rest;
        while let Some(rv) = rest {
            let root = self.find(rv.0);
            match self.slot(root).and_then(|s| s.binding.as_ref()) {
                Some(Binding::Row(bound)) => {
                    for (l, t) in &bound.entries {
                        entries.entry(l.clone()).or_insert_with(|| t.clone());
                    }
                    rest = bound.rest;
                }
                _ => {
                    rest = Some(RowVar(root));
                    break;
                }
            }
        }
        Row { entries, rest }
    }

    fn occurs_in_type(&self, var: u32, t: &Type) -> bool {
        match self.shallow(t) {
            Type::Var(v) => v.0 == var,
            Type::Pair(a, b) | Type::Map(a, b) => {
                self.occurs_in_type(var, &a) || self.occurs_in_type(var, &b)
            }
            Type::Vec(a) => self.occurs_in_type(var, &a),
            Type::Struct(r) | Type::Variant(r) => self.occurs_in_row(var, &r),
            Type::Graph(g) => self.occurs_in_row(var, &g.inputs) || self.occurs_in_row(var, &g.outputs),
            _ => false,
        }
    }

    fn occurs_in_row(&self, var: u32, r: &Row) -> bool {
        let flat = self.flatten_lenient(r);
        flat.rest.is_some_and(|rv| rv.0 == var)
            || flat.entries.values().any(|t| self.occurs_in_type(var, t))
    }

    fn bind_type(&mut self, var: u32, t: Type) -> Result<(), UnifyError> {
        if self.occurs_in_type(var, &t) {
            return Err(UnifyErrorKind::Occurs.into());
        }
        self.slot_mut(var, VarKind::Type).binding = Some(Binding::Type(t));
        Ok(())
    }

    /// `var` must be an unbound root; `row` must already be flattened.
    fn bind_row(&mut self, var: u32, row: Row) -> Result<(), UnifyError> {
        let lacks = self.slot(var).map(|s| s.lacks.clone()).unwrap_or_default();
        if let Some(l) = row.entries.keys().find(|l| lacks.contains(*l)) {
            return Err(UnifyErrorKind::LacksViolation(l.clone()).into());
        }
        if row.rest.is_some_and(|rv| self.find(rv.0) == var)
            || row.entries.values().any(|t| self.occurs_in_type(var, t))
        {
            return Err(UnifyErrorKind::Occurs.into());
        }
        if let Some(tail) = row.rest {
            let tail = self.find_mut(tail.0);
            let extra: Vec<Label> = lacks.iter().chain(row.entries.keys()).cloned().collect();
            self.slot_mut(tail, VarKind::Row).lacks.extend(extra);
        }
        self.slot_mut(var, VarKind::Row).binding = Some(Binding::Row(row));
        Ok(())
    }

    fn union(&mut self, a: u32, b: u32, kind: VarKind) {
        self.reserve(a.max(b), kind);
        let (ra, rb) = (self.find_mut(a), self.find_mut(b));
        if ra == rb {
            return;
        }
        let (hi, lo) = if self.slots[ra as usize].rank >= self.slots[rb as usize].rank {
            (ra, rb)
        } else {
            (rb, ra)
        };
        if self.slots[hi as usize].rank == self.slots[lo as usize].rank {
            self.slots[hi as usize].rank += 1;
        }
        self.slots[lo as usize].parent = hi;
        let moved = self.slots[lo as usize].lacks.clone();
        self.slots[hi as usize].lacks.extend(moved);
    }

    /// Records that row variable `r` (after resolution) never contains `label`.
    pub fn add_lacks(&mut self, r: RowVar, label: Label) -> Result<(), UnifyError> {
        let flat = self.flatten_row(&Row::var(r.0))?;
        if flat.entries.contains_key(&label) {
            return Err(UnifyErrorKind::LacksViolation(label).into());
        }
        let root = self.find_mut(r.0);
        self.slot_mut(root, VarKind::Row).lacks.insert(label.clone());
        if let Some(tail) = flat.rest {
            let tail = self.find_mut(tail.0);
            self.slot_mut(tail, VarKind::Row).lacks.insert(label);
        }
        Ok(())
    }

    /// Most general unifier of `expected` and `actual`, extending `self`.
    /// On failure the table may hold partial bindings; callers that want to
    /// continue should work on a clone.
    pub fn unify(&mut self, expected: &Type, actual: &Type) -> Result<(), UnifyError> {
        let a = self.shallow(expected);
        let b = self.shallow(actual);
        match (&a, &b) {
            (Type::Var(x), Type::Var(y)) if x == y => Ok(()),
            (Type::Var(x), Type::Var(y)) => {
                self.union(x.0, y.0, VarKind::Type);
                Ok(())
            }
            (Type::Var(x), t) | (t, Type::Var(x)) => self.bind_type(x.0, t.clone()),
            (Type::Bool, Type::Bool)
            | (Type::Int, Type::Int)
            | (Type::Float, Type::Float)
            | (Type::Str, Type::Str) => Ok(()),
            (Type::Pair(a1, a2), Type::Pair(b1, b2)) | (Type::Map(a1, a2), Type::Map(b1, b2)) => {
                self.unify(a1, b1)?;
                self.unify(a2, b2)
            }
            (Type::Vec(x), Type::Vec(y)) => self.unify(x, y),
            (Type::Struct(r1), Type::Struct(r2)) | (Type::Variant(r1), Type::Variant(r2)) => {
                self.unify_rows(r1, r2)
            }
            (Type::Graph(g1), Type::Graph(g2)) => {
                self.unify_rows(&g1.inputs, &g2.inputs)?;
                self.unify_rows(&g1.outputs, &g2.outputs)
            }
            _ => Err(UnifyErrorKind::Mismatch {
                expected: self.apply_type(&a),
                actual: self.apply_type(&b),
            }
            .into()),
        }
    }

    pub fn unify_rows(&mut self, expected: &Row, actual: &Row) -> Result<(), UnifyError> {
        let mut fa = self.flatten_row(expected)?;
        let mut fb = self.flatten_row(actual)?;
        let mut done: BTreeSet<Label> = BTreeSet::new();
        // Unifying a shared label can bind either tail and expose more
        // shared labels.
        loop {
            let shared: Vec<Label> = fa
                .entries
                .keys()
                .filter(|l| fb.entries.contains_key(*l) && !done.contains(*l))
                .cloned()
                .collect();
            if shared.is_empty() {
                break;
            }
            for l in shared {
                self.unify(&fa.entries[&l], &fb.entries[&l]).map_err(at(&l))?;
                done.insert(l);
            }
            fa = self.flatten_row(&fa)?;
            fb = self.flatten_row(&fb)?;
        }
        let only_a: BTreeMap<Label, Type> = fa
            .entries
            .iter()
            .filter(|(l, _)| !fb.entries.contains_key(*l))
            .map(|(l, t)| (l.clone(), t.clone()))
            .collect();
        let only_b: BTreeMap<Label, Type> = fb
            .entries
            .iter()
            .filter(|(l, _)| !fa.entries.contains_key(*l))
            .map(|(l, t)| (l.clone(), t.clone()))
            .collect();
        let missing = |labels: &BTreeMap<Label, Type>| {
            let l = labels.keys().next().expect("non-empty").clone();
            Err(UnifyError {
                kind: UnifyErrorKind::MissingLabel(l.clone()),
                at_label: Some(l),
            })
        };
        match (fa.rest, fb.rest) {
            (None, None) => {
                if !only_a.is_empty() {
                    return missing(&only_a);
                }
                if !only_b.is_empty() {
                    return missing(&only_b);
                }
                Ok(())
            }
            (None, Some(rb)) => {
                if !only_b.is_empty() {
                    return missing(&only_b);
                }
                self.bind_row(rb.0, Row { entries: only_a, rest: None })
            }
            (Some(ra), None) => {
                if !only_a.is_empty() {
                    return missing(&only_a);
                }
                self.bind_row(ra.0, Row { entries: only_b, rest: None })
            }
            (Some(ra), Some(rb)) if ra == rb => {
                if !only_a.is_empty() {
                    return missing(&only_a);
                }
                if !only_b.is_empty() {
                    return missing(&only_b);
                }
                Ok(())
            }
            (Some(ra), Some(rb)) => {
                if only_a.is_empty() && only_b.is_empty() {
                    self.union(ra.0, rb.0, VarKind::Row);
                    return Ok(());
                }
                let fresh = self.fresh_row();
                let consumed: Vec<Label> = fa.entries.keys().chain(fb.entries.keys()).cloned().collect();
                self.slot_mut(fresh.0, VarKind::Row).lacks.extend(consumed);
                self.bind_row(ra.0, Row { entries: only_b, rest: Some(fresh) })?;
                self.bind_row(rb.0, Row { entries: only_a, rest: Some(fresh) })
            }
        }
    }

    /// Attempts `a ⊔ b ~ whole`. Solvable once two of the three rows have a
    /// known label set; otherwise returns [`Partition::Defer`].
    pub fn solve_partition(&mut self, a: &Row, b: &Row, whole: &Row) -> Result<Partition, UnifyError> {
        let fa = self.flatten_row(a)?;
        let fb = self.flatten_row(b)?;
        let fw = self.flatten_row(whole)?;
        if let Some(l) = fa.entries.keys().find(|l| fb.entries.contains_key(*l)) {
            return Err(UnifyError {
                kind: UnifyErrorKind::DuplicateLabel(l.clone()),
                at_label: Some(l.clone()),
            });
        }
        if fw.is_closed() {
            if let Some(l) = fa
                .entries
                .keys()
                .chain(fb.entries.keys())
                .find(|l| !fw.entries.contains_key(*l))
            {
                return Err(UnifyError {
                    kind: UnifyErrorKind::MissingLabel(l.clone()),
                    at_label: Some(l.clone()),
                });
            }
        }
        for part in [&fa, &fb] {
            for (l, t) in &part.entries {
                if let Some(tw) = fw.entries.get(l) {
                    self.unify(tw, t).map_err(at(l))?;
                }
            }
        }
        match (fa.is_closed(), fb.is_closed(), fw.is_closed()) {
            (true, true, _) => {
                let mut entries = fa.entries.clone();
                entries.extend(fb.entries.clone());
                self.unify_rows(whole, &Row { entries, rest: None })?;
                Ok(Partition::Solved)
            }
            (true, _, true) => {
                let rest = difference(&fw, &fa);
                self.unify_rows(&rest, b)?;
                Ok(Partition::Solved)
            }
            (_, true, true) => {
                let rest = difference(&fw, &fb);
                self.unify_rows(&rest, a)?;
                Ok(Partition::Solved)
            }
            _ => Ok(Partition::Defer),
        }
    }

    /// Every (row variable, label) pair where a variable resolves to a row
    /// containing a label it was required to lack.
    pub fn lacks_violations(&self) -> Vec<(RowVar, Label)> {
        let mut out = Vec::new();
        for (i, slot) in self.slots.iter().enumerate() {
            if slot.kind != VarKind::Row || slot.lacks.is_empty() {
                continue;
            }
            let resolved = self.flatten_lenient(&Row::var(i as u32));
            for l in &slot.lacks {
                if resolved.entries.contains_key(l) {
                    out.push((RowVar(i as u32), l.clone()));
                }
            }
        }
        out
    }

    /// Binds an open row tail to the empty closed row, if still unbound.
    pub fn close_row(&mut self, r: RowVar) -> Result<(), UnifyError> {
        let flat = self.flatten_row(&Row::var(r.0))?;
        match flat.rest {
            Some(tail) => self.bind_row(tail.0, Row::empty()),
            None => Ok(()),
        }
    }
}

fn difference(whole: &Row, part: &Row) -> Row {
    Row {
        entries: whole
            .entries
            .iter()
            .filter(|(l, _)| !part.entries.contains_key(*l))
            .map(|(l, t)| (l.clone(), t.clone()))
            .collect(),
        rest: None,
    }
}
