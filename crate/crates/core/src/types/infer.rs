//! Whole-graph inference.
//!
//! Every edge starts as a fresh variable (or its annotation, with the
//! annotation's variables renamed apart). Nodes are visited in topological
//! order and each one unifies its signature with the rows formed by its
//! incoming and outgoing edges. A node either commits all its bindings or
//! none, so an error in one place does not cascade into unrelated ones.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use super::unify::{Partition, Substitution, UnifyError, VarSupply};
use super::{
    instantiate, FreeVars, GraphType, Location, Renaming, Row, RowVar, SchemeConstraint, Type,
    TypeError, TypeErrorKind, TypePrinter, TypeScheme, TypeVar, VarKind,
};
use crate::graph::{ports, validate_graph, validate_graph_relaxed, Graph, InvalidGraph, Node, NodeId, NodeKind};
use crate::signature::Signature;
use crate::value::{Label, Ports, Value};

#[derive(Debug, Clone, Default)]
pub struct InferOptions {
    /// Nodes allowed to have unconnected inputs (already fired on resume).
    pub relaxed: BTreeSet<NodeId>,
    /// Concrete graph inputs. Their types are unified with the input edges.
    pub inputs: Option<Ports>,
    /// Values already sitting on edges, by edge index.
    pub edge_values: BTreeMap<usize, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inferred {
    /// The input graph with every edge (including inside boxes) annotated.
    pub graph: Graph,
    pub scheme: TypeScheme,
}

impl Inferred {
    pub fn edge_types(&self) -> Vec<Type> {
        self.graph
            .edges()
            .iter()
            .map(|e| e.ty.clone().expect("inferred graphs are fully annotated"))
            .collect()
    }

    /// `src -> dst : type` per top-level edge, then the scheme, with type
    /// variables numbered once across all of it.
    pub fn annotation_lines(&self) -> Vec<String> {
        let mut p = TypePrinter::new();
        let mut lines: Vec<String> = self
            .graph
            .edges()
            .iter()
            .zip(self.edge_types())
            .map(|(e, t)| format!("{} -> {} : {}", e.src, e.dst, p.ty(&t)))
            .collect();
        lines.push(format!("scheme: {}", p.graph(&self.scheme.body)));
        lines
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferError {
    #[error(transparent)]
    Invalid(#[from] InvalidGraph),
    #[error("{} type error(s): {}", .0.len(), .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Types(Vec<TypeError>),
}

impl InferError {
    pub fn type_errors(&self) -> &[TypeError] {
        match self {
            InferError::Invalid(_) => &[],
            InferError::Types(v) => v,
        }
    }
}

pub fn infer_graph(g: &Graph, sigs: &Signature) -> Result<Inferred, InferError> {
    infer_graph_with(g, sigs, &InferOptions::default())
}

pub fn infer_graph_with(g: &Graph, sigs: &Signature, opts: &InferOptions) -> Result<Inferred, InferError> {
    let structural = if opts.relaxed.is_empty() {
        validate_graph(g)
    } else {
        validate_graph_relaxed(g, &opts.relaxed)
    };
    if !structural.is_empty() {
        return Err(InferError::Invalid(InvalidGraph(structural)));
    }
    let mut inf = Inferer::new(sigs);
    let mut ann = AnnotationVars::default();
    let root = inf.graph(g, &[], &mut ann, Some(opts));
    inf.finish(g, root)
}

/// Normalised type of a value. Graph values are inferred against `sigs`.
pub fn type_of_value(v: &Value, sigs: &Signature) -> Result<Type, Vec<TypeError>> {
    let mut inf = Inferer::new(sigs);
    let loc = Location::Value(String::new());
    let t = match inf.value_type(v, &[], &loc) {
        Ok(t) => t,
        Err(e) => return Err(vec![e]),
    };
    inf.solve_pending();
    inf.close_tails();
    inf.solve_pending();
    if !inf.errors.is_empty() {
        return Err(inf.errors);
    }
    let t = inf.s.apply_type(&t);
    let mut fv = FreeVars::default();
    fv.visit_type(&t);
    Ok(normalising(&fv).apply_type(&t))
}

#[derive(Debug, Default)]
struct AnnotationVars {
    types: BTreeMap<u32, TypeVar>,
    rows: BTreeMap<u32, RowVar>,
}

#[derive(Debug, Clone)]
struct Pending {
    a: Row,
    b: Row,
    whole: Row,
    loc: Location,
}

#[derive(Debug, Default)]
struct GraphTypes {
    edges: Vec<Type>,
    inputs: Row,
    outputs: Row,
    boxes: BTreeMap<NodeId, GraphTypes>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    In,
    Out,
}

struct Inferer<'a> {
    sigs: &'a Signature,
    s: Substitution,
    errors: Vec<TypeError>,
    pending: Vec<Pending>,
    tails: Vec<RowVar>,
}

type Step<T = ()> = Result<T, TypeError>;

impl<'a> Inferer<'a> {
    fn new(sigs: &'a Signature) -> Self {
        Inferer {
            sigs,
            s: Substitution::new(),
            errors: Vec::new(),
            pending: Vec::new(),
            tails: Vec::new(),
        }
    }

    fn rename_annotation(&mut self, t: &Type, ann: &mut AnnotationVars) -> Type {
        let mut fv = FreeVars::default();
        fv.visit_type(t);
        let mut ren = Renaming::default();
        for (kind, id) in fv.order {
            match kind {
                VarKind::Type => {
                    let v = *ann.types.entry(id).or_insert_with(|| self.s.fresh_type());
                    ren.types.insert(id, Type::Var(v));
                }
                VarKind::Row => {
                    let v = *ann.rows.entry(id).or_insert_with(|| self.s.fresh_row());
                    ren.rows.insert(id, Row::var(v.0));
                }
            }
        }
        ren.apply_type(t)
    }

    /// Runs `f` as a transaction: on error every binding it made is undone.
    fn attempt(&mut self, f: impl FnOnce(&mut Self) -> Step) -> bool {
        let subst = self.s.clone();
        let pending = self.pending.clone();
        let tails = self.tails.len();
        match f(self) {
            Ok(()) => true,
            Err(e) => {
                self.s = subst;
                self.pending = pending;
                self.tails.truncate(tails);
                self.errors.push(e);
                false
            }
        }
    }

    fn graph(
        &mut self,
        g: &Graph,
        path: &[NodeId],
        ann: &mut AnnotationVars,
        opts: Option<&InferOptions>,
    ) -> GraphTypes {
        let mut out = GraphTypes::default();
        for e in g.edges() {
            let t = match &e.ty {
                Some(a) => self.rename_annotation(a, ann),
                None => Type::Var(self.s.fresh_type()),
            };
            out.edges.push(t);
        }
        let input = g.input_node().expect("validated graph");
        let output = g.output_node().expect("validated graph");
        out.inputs = self.port_row(g, &out.edges, input, Side::Out, None);
        out.outputs = self.port_row(g, &out.edges, output, Side::In, None);

        let relaxed = opts.map(|o| &o.relaxed);
        if let Some(opts) = opts {
            self.seed_inputs(g, &out.edges, opts);
            for (&i, v) in &opts.edge_values {
                let Some(e) = g.edges().get(i) else { continue };
                let loc = Location::Edge {
                    path: path.to_vec(),
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                };
                let edge_ty = out.edges[i].clone();
                self.attempt(|inf| {
                    let t = inf.value_type(v, path, &loc)?;
                    inf.s.unify(&edge_ty, &t).map_err(|err| TypeError::from_unify(&err, loc.clone()))
                });
            }
        }

        let order = g
            .topological_order()
            .unwrap_or_else(|| g.nodes().iter().map(|n| n.id).collect());
        for id in order {
            let node = g.node(id).expect("node from order").clone();
            let relax = relaxed.is_some_and(|r| r.contains(&id));
            let mut sub = None;
            let ok = self.attempt(|inf| {
                sub = inf.node(g, &node, &out.edges, path, ann, relax)?;
                Ok(())
            });
            if ok {
                if let Some(sub) = sub {
                    out.boxes.insert(id, sub);
                }
                self.solve_pending();
            }
        }
        out
    }

    fn seed_inputs(&mut self, g: &Graph, edges: &[Type], opts: &InferOptions) {
        let Some(values) = &opts.inputs else { return };
        let input = g.input_node().expect("validated graph");
        let wanted: BTreeSet<Label> = g.input_labels().into_iter().collect();
        for label in values.keys().filter(|l| !wanted.contains(*l)) {
            self.errors.push(TypeError {
                kind: TypeErrorKind::MissingLabel,
                location: Location::GraphInput(label.clone()),
                expected: None,
                actual: Some(label.to_string()),
                message: format!("graph has no input {label:?}"),
            });
        }
        for (i, e) in g.outgoing(input) {
            let loc = Location::GraphInput(e.src.port.clone());
            let Some(v) = values.get(&e.src.port) else {
                self.errors.push(TypeError {
                    kind: TypeErrorKind::MissingLabel,
                    location: loc,
                    expected: Some(e.src.port.to_string()),
                    actual: None,
                    message: format!("no value supplied for input {:?}", e.src.port),
                });
                continue;
            };
            let edge_ty = edges[i].clone();
            self.attempt(|inf| {
                let t = inf.value_type(v, &[], &loc)?;
                inf.s.unify(&edge_ty, &t).map_err(|err| TypeError::from_unify(&err, loc.clone()))
            });
        }
    }

    /// Row of the edges on one side of a node. Outgoing rows of nodes that
    /// may have unused outputs get an open tail, closed at the very end.
    fn port_row(&mut self, g: &Graph, edges: &[Type], id: NodeId, side: Side, tail: Option<RowVar>) -> Row {
        let mut row = Row::empty();
        let iter: Box<dyn Iterator<Item = _>> = match side {
            Side::In => Box::new(g.incoming(id)),
            Side::Out => Box::new(g.outgoing(id)),
        };
        for (i, e) in iter {
            let port = match side {
                Side::In => &e.dst.port,
                Side::Out => &e.src.port,
            };
            row.entries.insert(port.clone(), edges[i].clone());
        }
        row.rest = tail;
        row
    }

    fn out_row(&mut self, g: &Graph, edges: &[Type], id: NodeId) -> Row {
        let tail = self.s.fresh_row();
        self.tails.push(tail);
        self.port_row(g, edges, id, Side::Out, Some(tail))
    }

    fn in_row(&mut self, g: &Graph, edges: &[Type], id: NodeId, relax: bool) -> Row {
        let tail = relax.then(|| self.s.fresh_row());
        self.port_row(g, edges, id, Side::In, tail)
    }

    fn locate(&self, g: &Graph, path: &[NodeId], id: NodeId, side: Side, label: Option<&Label>) -> Location {
        if let Some(l) = label {
            let found = match side {
                Side::In => g.incoming(id).find(|(_, e)| &e.dst.port == l),
                Side::Out => g.outgoing(id).find(|(_, e)| &e.src.port == l),
            };
            if let Some((_, e)) = found {
                return Location::Edge {
                    path: path.to_vec(),
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                };
            }
        }
        Location::Node {
            path: path.to_vec(),
            node: id,
            port: label.cloned(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn unify_ports(
        &mut self,
        expected: &Row,
        actual: &Row,
        side: Side,
        g: &Graph,
        path: &[NodeId],
        id: NodeId,
    ) -> Step {
        self.s.unify_rows(expected, actual).map_err(|e: UnifyError| {
            let loc = self.locate(g, path, id, side, e.at_label.as_ref());
            TypeError::from_unify(&e, loc)
        })
    }

    fn node(
        &mut self,
        g: &Graph,
        node: &Node,
        edges: &[Type],
        path: &[NodeId],
        ann: &mut AnnotationVars,
        relax: bool,
    ) -> Step<Option<GraphTypes>> {
        let id = node.id;
        let node_loc = Location::Node {
            path: path.to_vec(),
            node: id,
            port: None,
        };
        let at_node = |e: UnifyError| TypeError::from_unify(&e, node_loc.clone());
        match &node.kind {
            NodeKind::Input | NodeKind::Output => Ok(None),
            NodeKind::Const(v) => {
                let mut inner = path.to_vec();
                inner.push(id);
                let t = self.value_type(v, &inner, &node_loc)?;
                let expected = Row::closed([(Label::from_static(ports::VALUE), t)]);
                let actual = self.out_row(g, edges, id);
                self.unify_ports(&expected, &actual, Side::Out, g, path, id)?;
                Ok(None)
            }
            NodeKind::Function(f) => {
                let scheme = self.sigs.get(f).ok_or_else(|| TypeError {
                    kind: TypeErrorKind::UnknownFunction,
                    location: node_loc.clone(),
                    expected: None,
                    actual: Some(f.to_string()),
                    message: format!("no worker provides {f}"),
                })?;
                let inst = instantiate(scheme, &mut self.s);
                for c in inst.constraints {
                    match c {
                        SchemeConstraint::Lacks { row, label } => self.s.add_lacks(row, label).map_err(at_node)?,
                        SchemeConstraint::Partition { a, b, whole } => self.pending.push(Pending {
                            a,
                            b,
                            whole,
                            loc: node_loc.clone(),
                        }),
                    }
                }
                let incoming = self.in_row(g, edges, id, relax);
                self.unify_ports(&inst.inputs, &incoming, Side::In, g, path, id)?;
                let outgoing = self.out_row(g, edges, id);
                self.unify_ports(&inst.outputs, &outgoing, Side::Out, g, path, id)?;
                Ok(None)
            }
            NodeKind::Box { graph, .. } => {
                let mut inner = path.to_vec();
                inner.push(id);
                let sub = self.graph(graph, &inner, ann, None);
                let incoming = self.in_row(g, edges, id, relax);
                self.unify_ports(&sub.inputs, &incoming, Side::In, g, path, id)?;
                let outgoing = self.out_row(g, edges, id);
                self.unify_ports(&sub.outputs, &outgoing, Side::Out, g, path, id)?;
                Ok(Some(sub))
            }
            NodeKind::Match => {
                let value = Label::from_static(ports::VALUE);
                let captured = self.s.fresh_row();
                self.s.add_lacks(captured, value.clone()).map_err(at_node)?;
                let result = self.s.fresh_row();
                let mut arms = BTreeMap::new();
                let mut variant_edge = None;
                for (i, e) in g.incoming(id) {
                    if e.dst.port.as_str() == ports::VARIANT {
                        variant_edge = Some(i);
                        continue;
                    }
                    let arm = Type::Var(self.s.fresh_type());
                    arms.insert(e.dst.port.clone(), arm.clone());
                    let handler = Type::graph(
                        Row {
                            entries: [(value.clone(), arm)].into_iter().collect(),
                            rest: Some(captured),
                        },
                        Row::var(result.0),
                    );
                    self.s.unify(&handler, &edges[i]).map_err(|err| {
                        TypeError::from_unify(&err, self.locate(g, path, id, Side::In, Some(&e.dst.port)))
                    })?;
                }
                if let Some(i) = variant_edge {
                    let variant = Type::Variant(Row { entries: arms, rest: None });
                    let label = Label::from_static(ports::VARIANT);
                    self.s.unify(&variant, &edges[i]).map_err(|err| {
                        TypeError::from_unify(&err, self.locate(g, path, id, Side::In, Some(&label)))
                    })?;
                }
                let thunk = Type::graph(Row::var(captured.0), Row::var(result.0));
                let expected = Row::closed([(Label::from_static(ports::THUNK), thunk)]);
                let outgoing = self.out_row(g, edges, id);
                self.unify_ports(&expected, &outgoing, Side::Out, g, path, id)?;
                Ok(None)
            }
            NodeKind::Tag(tag) => {
                let value = Label::from_static(ports::VALUE);
                let inner = match g.incoming(id).find(|(_, e)| e.dst.port == value) {
                    Some((i, _)) => edges[i].clone(),
                    None => Type::Var(self.s.fresh_type()),
                };
                let rest = self.s.fresh_row();
                self.s.add_lacks(rest, tag.clone()).map_err(at_node)?;
                let variant = Type::Variant(Row {
                    entries: [(tag.clone(), inner)].into_iter().collect(),
                    rest: Some(rest),
                });
                let expected = Row::closed([(value, variant)]);
                let outgoing = self.out_row(g, edges, id);
                self.unify_ports(&expected, &outgoing, Side::Out, g, path, id)?;
                Ok(None)
            }
        }
    }

    fn value_type(&mut self, v: &Value, path: &[NodeId], loc: &Location) -> Step<Type> {
        let err = |e: UnifyError| TypeError::from_unify(&e, loc.clone());
        Ok(match v {
            Value::Bool(_) => Type::Bool,
            Value::Int(_) => Type::Int,
            Value::Float(_) => Type::Float,
            Value::Str(_) => Type::Str,
            Value::Pair(p) => {
                let a = self.value_type(&p.0, path, loc)?;
                let b = self.value_type(&p.1, path, loc)?;
                Type::pair(a, b)
            }
            Value::Vec(items) => {
                let elem = Type::Var(self.s.fresh_type());
                for item in items.iter() {
                    let t = self.value_type(item, path, loc)?;
                    self.s.unify(&elem, &t).map_err(err)?;
                }
                Type::vec(elem)
            }
            Value::Map(m) => {
                let k = Type::Var(self.s.fresh_type());
                let val = Type::Var(self.s.fresh_type());
                for (key, item) in m.iter() {
                    let kt = self.value_type(key, path, loc)?;
                    self.s.unify(&k, &kt).map_err(err)?;
                    let vt = self.value_type(item, path, loc)?;
                    self.s.unify(&val, &vt).map_err(err)?;
                }
                Type::map(k, val)
            }
            Value::Struct(fields) => {
                let mut row = Row::empty();
                for (l, item) in fields.iter() {
                    let t = self.value_type(item, path, loc)?;
                    row.entries.insert(l.clone(), t);
                }
                Type::Struct(row)
            }
            Value::Variant(tag, inner) => {
                let t = self.value_type(inner, path, loc)?;
                let rest = self.s.fresh_row();
                self.s.add_lacks(rest, tag.clone()).map_err(err)?;
                Type::Variant(Row {
                    entries: [(tag.clone(), t)].into_iter().collect(),
                    rest: Some(rest),
                })
            }
            Value::Graph(g) => self.graph_value_type(g, path, loc)?,
        })
    }

    fn graph_value_type(&mut self, g: &Arc<Graph>, path: &[NodeId], loc: &Location) -> Step<Type> {
        let structural = validate_graph(g);
        if !structural.is_empty() {
            return Err(TypeError {
                kind: TypeErrorKind::Mismatch,
                location: loc.clone(),
                expected: Some("valid graph".into()),
                actual: None,
                message: InvalidGraph(structural).to_string(),
            });
        }
        let mut ann = AnnotationVars::default();
        let sub = self.graph(g, path, &mut ann, None);
        Ok(Type::graph(sub.inputs, sub.outputs))
    }

    fn solve_pending(&mut self) {
        loop {
            let mut progress = false;
            for p in std::mem::take(&mut self.pending) {
                let snapshot = self.s.clone();
                match self.s.solve_partition(&p.a, &p.b, &p.whole) {
                    Ok(Partition::Solved) => progress = true,
                    Ok(Partition::Defer) => self.pending.push(p),
                    Err(e) => {
                        self.s = snapshot;
                        self.errors.push(TypeError::from_unify(&e, p.loc.clone()));
                        progress = true;
                    }
                }
            }
            if !progress || self.pending.is_empty() {
                break;
            }
        }
    }

    fn close_tails(&mut self) {
        for tail in std::mem::take(&mut self.tails) {
            // Closing an unbound tail to the empty row cannot fail.
            let _ = self.s.close_row(tail);
        }
    }

    fn finish(mut self, g: &Graph, root: GraphTypes) -> Result<Inferred, InferError> {
        self.solve_pending();
        self.close_tails();
        self.solve_pending();

        let inputs = self.s.apply_row(&root.inputs);
        let outputs = self.s.apply_row(&root.outputs);
        let mut sig_vars = FreeVars::default();
        sig_vars.visit_row(&inputs);
        sig_vars.visit_row(&outputs);

        let mut residual = Vec::new();
        for p in std::mem::take(&mut self.pending) {
            let (a, b, whole) = (self.s.apply_row(&p.a), self.s.apply_row(&p.b), self.s.apply_row(&p.whole));
            let mut fv = FreeVars::default();
            for r in [&a, &b, &whole] {
                fv.visit_row(r);
            }
            if fv.order.iter().all(|(k, id)| sig_vars.contains(*k, *id)) {
                residual.push(SchemeConstraint::Partition { a, b, whole });
            } else {
                self.errors.push(TypeError {
                    kind: TypeErrorKind::UnsolvedPartition,
                    location: p.loc.clone(),
                    expected: None,
                    actual: None,
                    message: format!("cannot resolve {} ⊔ {} ~ {}", a, b, whole),
                });
            }
        }

        for (rv, label) in self.s.lacks_violations() {
            self.errors.push(TypeError {
                kind: TypeErrorKind::LacksViolation,
                location: Location::Node {
                    path: Vec::new(),
                    node: NodeId(0),
                    port: None,
                },
                expected: None,
                actual: Some(label.to_string()),
                message: format!("row variable {} acquired label {label:?}", rv.0),
            });
        }
        self.check_hashable(g, &root, &[]);

        if !self.errors.is_empty() {
            return Err(InferError::Types(self.errors));
        }

        let mut fv = sig_vars;
        self.visit_edges(&root, &mut fv);
        let ren = normalising(&fv);
        let graph = self.annotate(g, &root, &ren);
        let inputs = ren.apply_row(&inputs);
        let outputs = ren.apply_row(&outputs);

        let mut quantified = FreeVars::default();
        quantified.visit_row(&inputs);
        quantified.visit_row(&outputs);
        let residual: Vec<SchemeConstraint> = residual
            .into_iter()
            .map(|c| match c {
                SchemeConstraint::Partition { a, b, whole } => SchemeConstraint::Partition {
                    a: ren.apply_row(&a),
                    b: ren.apply_row(&b),
                    whole: ren.apply_row(&whole),
                },
                other => other,
            })
            .collect();
        for c in &residual {
            if let SchemeConstraint::Partition { a, b, whole } = c {
                for r in [a, b, whole] {
                    quantified.visit_row(r);
                }
            }
        }
        // Lacks obligations of the quantified row variables, in normalised ids.
        let mut constraints = Vec::new();
        let mut back: BTreeMap<u32, u32> = BTreeMap::new();
        for (old, row) in &ren.rows {
            if let Some(new) = row.rest {
                back.insert(new.0, *old);
            }
        }
        for &(kind, id) in &quantified.order {
            if kind != VarKind::Row {
                continue;
            }
            let Some(old) = back.get(&id) else { continue };
            let mut lacks: Vec<Label> = self.s.lacks(RowVar(*old)).into_iter().collect();
            // Labels already present in the row next to the tail are implied.
            lacks.retain(|l| !row_has_label_before(&inputs, &outputs, id, l));
            for label in lacks {
                constraints.push(SchemeConstraint::Lacks { row: RowVar(id), label });
            }
        }
        constraints.extend(residual);
        Ok(Inferred {
            graph,
            scheme: TypeScheme {
                vars: quantified.order,
                constraints,
                body: GraphType { inputs, outputs },
            },
        })
    }

    fn visit_edges(&self, gt: &GraphTypes, fv: &mut FreeVars) {
        for t in &gt.edges {
            fv.visit_type(&self.s.apply_type(t));
        }
        for sub in gt.boxes.values() {
            self.visit_edges(sub, fv);
        }
    }

    fn annotate(&self, g: &Graph, gt: &GraphTypes, ren: &Renaming) -> Graph {
        let nodes = g
            .nodes()
            .iter()
            .map(|n| match (&n.kind, gt.boxes.get(&n.id)) {
                (NodeKind::Box { graph, label }, Some(sub)) => Node {
                    id: n.id,
                    kind: NodeKind::Box {
                        graph: Arc::new(self.annotate(graph, sub, ren)),
                        label: label.clone(),
                    },
                },
                _ => n.clone(),
            })
            .collect();
        let edges = g
            .edges()
            .iter()
            .zip(&gt.edges)
            .map(|(e, t)| crate::graph::Edge {
                ty: Some(ren.apply_type(&self.s.apply_type(t))),
                ..e.clone()
            })
            .collect();
        Graph::from_parts(g.name.clone(), nodes, edges)
    }

    fn check_hashable(&mut self, g: &Graph, gt: &GraphTypes, path: &[NodeId]) {
        for (e, t) in g.edges().iter().zip(&gt.edges) {
            let t = self.s.apply_type(t);
            if let Some(bad) = unhashable_key(&t) {
                self.errors.push(TypeError {
                    kind: TypeErrorKind::Mismatch,
                    location: Location::Edge {
                        path: path.to_vec(),
                        src: e.src.clone(),
                        dst: e.dst.clone(),
                    },
                    expected: Some("hashable map key".into()),
                    actual: Some(bad.to_string()),
                    message: format!("map key type {bad} is not hashable"),
                });
            }
        }
        for (id, sub) in &gt.boxes {
            if let Some(NodeKind::Box { graph, .. }) = g.node(*id).map(|n| &n.kind) {
                let mut inner = path.to_vec();
                inner.push(*id);
                self.check_hashable(graph, sub, &inner);
            }
        }
    }
}

fn row_has_label_before(inputs: &Row, outputs: &Row, tail: u32, label: &Label) -> bool {
    fn in_type(t: &Type, tail: u32, label: &Label) -> bool {
        match t {
            Type::Pair(a, b) | Type::Map(a, b) => in_type(a, tail, label) || in_type(b, tail, label),
            Type::Vec(a) => in_type(a, tail, label),
            Type::Struct(r) | Type::Variant(r) => in_row(r, tail, label),
            Type::Graph(g) => in_row(&g.inputs, tail, label) || in_row(&g.outputs, tail, label),
            _ => false,
        }
    }
    fn in_row(r: &Row, tail: u32, label: &Label) -> bool {
        (r.rest == Some(RowVar(tail)) && r.entries.contains_key(label))
            || r.entries.values().any(|t| in_type(t, tail, label))
    }
    in_row(inputs, tail, label) || in_row(outputs, tail, label)
}

/// Ground key types that may not be hashed: Float, Graph, Map, Struct.
fn unhashable_key(t: &Type) -> Option<Type> {
    fn key_ok(t: &Type) -> bool {
        match t {
            Type::Bool | Type::Int | Type::Str | Type::Var(_) => true,
            Type::Pair(a, b) => key_ok(a) && key_ok(b),
            Type::Vec(a) => key_ok(a),
            Type::Variant(r) => r.entries.values().all(key_ok),
            _ => false,
        }
    }
    match t {
        Type::Map(k, v) => {
            if !key_ok(k) {
                return Some((**k).clone());
            }
            unhashable_key(k).or_else(|| unhashable_key(v))
        }
        Type::Pair(a, b) => unhashable_key(a).or_else(|| unhashable_key(b)),
        Type::Vec(a) => unhashable_key(a),
        Type::Struct(r) | Type::Variant(r) => r.entries.values().find_map(unhashable_key),
        Type::Graph(g) => g
            .inputs
            .entries
            .values()
            .chain(g.outputs.entries.values())
            .find_map(unhashable_key),
        _ => None,
    }
}

/// Renames variables to 0, 1, 2, ... in the order they were visited.
fn normalising(fv: &FreeVars) -> Renaming {
    let mut ren = Renaming::default();
    for (n, &(kind, id)) in fv.order.iter().enumerate() {
        let n = n as u32;
        match kind {
            VarKind::Type => {
                ren.types.insert(id, Type::var(n));
            }
            VarKind::Row => {
                ren.rows.insert(id, Row::var(n));
            }
        }
    }
    ren
}
