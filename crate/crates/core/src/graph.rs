//! The dataflow graph IR.
//!
//! A [`Graph`] is an immutable DAG of nodes joined port-to-port. Every
//! output port feeds at most one edge; fan-out is expressed with explicit
//! `builtin/copy` nodes, which [`insert_copies`] adds automatically.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::types::{Row, Type, VarSupply};
use crate::value::{FunctionName, Label, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeKind {
    Input,
    Output,
    Const(Value),
    Function(FunctionName),
    Box {
        graph: Arc<Graph>,
        label: Option<String>,
    },
    Match,
    Tag(Label),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub node: NodeId,
    pub port: Label,
}

impl PortRef {
    pub fn new(node: NodeId, port: impl Into<Label>) -> Self {
        PortRef {
            node,
            port: port.into(),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.node, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub src: PortRef,
    pub dst: PortRef,
    pub ty: Option<Type>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Graph {
    pub name: Option<String>,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

/// Port names of the special node kinds.
pub mod ports {
    pub const VALUE: &str = "value";
    pub const VARIANT: &str = "variant";
    pub const THUNK: &str = "thunk";
    pub const COPY_0: &str = "value_0";
    pub const COPY_1: &str = "value_1";
}

impl Graph {
    /// Assembles a graph, putting nodes and edges in canonical order.
    /// Does not validate.
    pub fn from_parts(name: Option<String>, mut nodes: Vec<Node>, mut edges: Vec<Edge>) -> Self {
        nodes.sort_by_key(|n| n.id);
        edges.sort_by(|a, b| (&a.src, &a.dst).cmp(&(&b.src, &b.dst)));
        Graph { name, nodes, edges }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn input_node(&self) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeKind::Input)
            .map(|n| n.id)
    }

    pub fn output_node(&self) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeKind::Output)
            .map(|n| n.id)
    }

    pub fn incoming(&self, id: NodeId) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.dst.node == id)
    }

    pub fn outgoing(&self, id: NodeId) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.src.node == id)
    }

    /// Input labels in canonical order: the ports leaving the Input node.
    pub fn input_labels(&self) -> Vec<Label> {
        match self.input_node() {
            Some(id) => self.outgoing(id).map(|(_, e)| e.src.port.clone()).collect(),
            None => Vec::new(),
        }
    }

    pub fn output_labels(&self) -> Vec<Label> {
        let mut labels: Vec<Label> = match self.output_node() {
            Some(id) => self.incoming(id).map(|(_, e)| e.dst.port.clone()).collect(),
            None => Vec::new(),
        };
        labels.sort();
        labels
    }

    pub fn max_node_id(&self) -> Option<NodeId> {
        self.nodes.last().map(|n| n.id)
    }

    /// Same nodes and edges with all edge annotations removed.
    pub fn without_annotations(&self) -> Graph {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                ty: None,
                ..e.clone()
            })
            .collect();
        Graph {
            name: self.name.clone(),
            nodes: self.nodes.clone(),
            edges,
        }
    }

    pub fn with_annotations(&self, types: Vec<Option<Type>>) -> Graph {
        assert_eq!(types.len(), self.edges.len());
        let edges = self
            .edges
            .iter()
            .zip(types)
            .map(|(e, ty)| Edge { ty, ..e.clone() })
            .collect();
        Graph {
            name: self.name.clone(),
            nodes: self.nodes.clone(),
            edges,
        }
    }

    /// Kahn order; `None` if there is a cycle or a dangling edge.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let ids: BTreeSet<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        let mut indegree: BTreeMap<NodeId, usize> = ids.iter().map(|&id| (id, 0)).collect();
        let mut succ: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for e in &self.edges {
            if !ids.contains(&e.src.node) || !ids.contains(&e.dst.node) {
                return None;
            }
            *indegree.get_mut(&e.dst.node).unwrap() += 1;
            succ.entry(e.src.node).or_default().push(e.dst.node);
        }
        let mut queue: VecDeque<NodeId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut order = Vec::with_capacity(ids.len());
        while let Some(id) = queue.pop_front() {
            order.push(id);
            for next in succ.get(&id).into_iter().flatten() {
                let d = indegree.get_mut(next).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push_back(*next);
                }
            }
        }
        (order.len() == ids.len()).then_some(order)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Error)]
pub enum StructuralError {
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),
    #[error("graph must have exactly one Input node (found {0})")]
    InputNodeCount(usize),
    #[error("graph must have exactly one Output node (found {0})")]
    OutputNodeCount(usize),
    #[error("edge {0} -> {1} references a node that does not exist")]
    DanglingEdge(PortRef, PortRef),
    #[error("edge {0} -> {1} enters the Input node")]
    EdgeIntoInput(PortRef, PortRef),
    #[error("edge {0} -> {1} leaves the Output node")]
    EdgeFromOutput(PortRef, PortRef),
    #[error("input port {0} has more than one incoming edge")]
    DuplicateInputEdge(PortRef),
    #[error("output port {0} feeds more than one edge")]
    FanOut(PortRef),
    #[error("node {0} has no port {1:?}")]
    InvalidPort(NodeId, Label),
    #[error("node {0} is missing input port {1:?}")]
    MissingInput(NodeId, Label),
    #[error("box node {0}: {1}")]
    InvalidBox(NodeId, Box<StructuralError>),
    #[error("cycle through node {0}")]
    Cycle(NodeId),
}

impl StructuralError {
    /// Sort key: node id then port label.
    fn location(&self) -> (NodeId, Option<&Label>) {
        use StructuralError::*;
        match self {
            DuplicateNodeId(n) | Cycle(n) | InvalidBox(n, _) => (*n, None),
            InputNodeCount(_) | OutputNodeCount(_) => (NodeId(0), None),
            DanglingEdge(_, d) | EdgeIntoInput(_, d) => (d.node, Some(&d.port)),
            EdgeFromOutput(s, _) => (s.node, Some(&s.port)),
            DuplicateInputEdge(p) | FanOut(p) => (p.node, Some(&p.port)),
            InvalidPort(n, l) | MissingInput(n, l) => (*n, Some(l)),
        }
    }
}

/// Checks every structural invariant. An empty result means the graph is valid.
pub fn validate_graph(g: &Graph) -> Vec<StructuralError> {
    validate_with(g, true, &BTreeSet::new())
}

/// As [`validate_graph`], but nodes in `relaxed` may be missing input edges.
/// Used when resuming a modified graph in which those nodes already fired.
pub fn validate_graph_relaxed(g: &Graph, relaxed: &BTreeSet<NodeId>) -> Vec<StructuralError> {
    validate_with(g, true, relaxed)
}

fn validate_with(g: &Graph, forbid_fanout: bool, relaxed: &BTreeSet<NodeId>) -> Vec<StructuralError> {
    use StructuralError::*;
    let mut errors = Vec::new();

    let mut ids = BTreeSet::new();
    for n in &g.nodes {
        if !ids.insert(n.id) {
            errors.push(DuplicateNodeId(n.id));
        }
    }
    let inputs = g.nodes.iter().filter(|n| n.kind == NodeKind::Input).count();
    let outputs = g.nodes.iter().filter(|n| n.kind == NodeKind::Output).count();
    if inputs != 1 {
        errors.push(InputNodeCount(inputs));
    }
    if outputs != 1 {
        errors.push(OutputNodeCount(outputs));
    }

    let mut in_ports: BTreeMap<&PortRef, usize> = BTreeMap::new();
    let mut out_ports: BTreeMap<&PortRef, usize> = BTreeMap::new();
    for e in &g.edges {
        let (Some(src), Some(dst)) = (g.node(e.src.node), g.node(e.dst.node)) else {
            errors.push(DanglingEdge(e.src.clone(), e.dst.clone()));
            continue;
        };
        if dst.kind == NodeKind::Input {
            errors.push(EdgeIntoInput(e.src.clone(), e.dst.clone()));
        }
        if src.kind == NodeKind::Output {
            errors.push(EdgeFromOutput(e.src.clone(), e.dst.clone()));
        }
        *in_ports.entry(&e.dst).or_default() += 1;
        *out_ports.entry(&e.src).or_default() += 1;
    }
    for (p, n) in &in_ports {
        if *n > 1 {
            errors.push(DuplicateInputEdge((*p).clone()));
        }
    }
    if forbid_fanout {
        for (p, n) in &out_ports {
            if *n > 1 {
                errors.push(FanOut((*p).clone()));
            }
        }
    }

    for n in &g.nodes {
        let ins: BTreeSet<&Label> = g.incoming(n.id).map(|(_, e)| &e.dst.port).collect();
        let outs: BTreeSet<&Label> = g.outgoing(n.id).map(|(_, e)| &e.src.port).collect();
        let relax = relaxed.contains(&n.id);
        let value = Label::from_static(ports::VALUE);
        match &n.kind {
            NodeKind::Const(_) => {
                for l in ins {
                    errors.push(InvalidPort(n.id, l.clone()));
                }
                for l in outs.iter().filter(|l| l.as_str() != ports::VALUE) {
                    errors.push(InvalidPort(n.id, (*l).clone()));
                }
            }
            NodeKind::Tag(_) => {
                for l in ins.iter().filter(|l| l.as_str() != ports::VALUE) {
                    errors.push(InvalidPort(n.id, (*l).clone()));
                }
                if !ins.contains(&value) && !relax {
                    errors.push(MissingInput(n.id, value.clone()));
                }
                for l in outs.iter().filter(|l| l.as_str() != ports::VALUE) {
                    errors.push(InvalidPort(n.id, (*l).clone()));
                }
            }
            NodeKind::Match => {
                let variant = Label::from_static(ports::VARIANT);
                if !ins.contains(&variant) && !relax {
                    errors.push(MissingInput(n.id, variant));
                }
                for l in outs.iter().filter(|l| l.as_str() != ports::THUNK) {
                    errors.push(InvalidPort(n.id, (*l).clone()));
                }
            }
            NodeKind::Box { graph, .. } => {
                if let Some(inner) = validate_graph(graph).into_iter().next() {
                    errors.push(InvalidBox(n.id, Box::new(inner)));
                } else {
                    let sub_in: BTreeSet<Label> = graph.input_labels().into_iter().collect();
                    let sub_out: BTreeSet<Label> = graph.output_labels().into_iter().collect();
                    for l in ins.iter().filter(|l| !sub_in.contains(**l)) {
                        errors.push(InvalidPort(n.id, (*l).clone()));
                    }
                    if !relax {
                        for l in sub_in.iter().filter(|l| !ins.contains(l)) {
                            errors.push(MissingInput(n.id, l.clone()));
                        }
                    }
                    for l in outs.iter().filter(|l| !sub_out.contains(**l)) {
                        errors.push(InvalidPort(n.id, (*l).clone()));
                    }
                }
            }
            NodeKind::Input | NodeKind::Output | NodeKind::Function(_) => {}
        }
    }

    if errors.iter().all(|e| !matches!(e, DanglingEdge(..))) && g.topological_order().is_none() {
        // Report the smallest node that lies on a cycle.
        if let Some(id) = smallest_cyclic_node(g) {
            errors.push(Cycle(id));
        }
    }

    errors.sort_by(|a, b| a.location().cmp(&b.location()).then_with(|| a.cmp(b)));
    errors.dedup();
    errors
}

fn smallest_cyclic_node(g: &Graph) -> Option<NodeId> {
    // Peel off nodes with no remaining predecessors; whatever survives sits on
    // or downstream of a cycle. Then repeat from the successor side.
    let mut alive: BTreeSet<NodeId> = g.nodes.iter().map(|n| n.id).collect();
    loop {
        let before = alive.len();
        let has_pred: BTreeSet<NodeId> = g
            .edges
            .iter()
            .filter(|e| alive.contains(&e.src.node) && alive.contains(&e.dst.node))
            .map(|e| e.dst.node)
            .collect();
        let has_succ: BTreeSet<NodeId> = g
            .edges
            .iter()
            .filter(|e| alive.contains(&e.src.node) && alive.contains(&e.dst.node))
            .map(|e| e.src.node)
            .collect();
        alive.retain(|id| has_pred.contains(id) && has_succ.contains(id));
        if alive.len() == before {
            break;
        }
    }
    alive.into_iter().next()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid graph: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct InvalidGraph(pub Vec<StructuralError>);

/// Input and output rows of a valid graph. Unannotated ports get fresh
/// type variables from `supply`.
pub fn graph_signature(g: &Graph, supply: &mut dyn VarSupply) -> Result<(Row, Row), InvalidGraph> {
    let errors = validate_graph(g);
    if !errors.is_empty() {
        return Err(InvalidGraph(errors));
    }
    // One type per edge, so a port wired straight through shares its variable.
    let mut edge_types: BTreeMap<usize, Type> = BTreeMap::new();
    let mut port_type = |i: usize, e: &Edge| {
        edge_types
            .entry(i)
            .or_insert_with(|| e.ty.clone().unwrap_or_else(|| Type::Var(supply.fresh_type())))
            .clone()
    };
    let input = g.input_node().expect("validated");
    let output = g.output_node().expect("validated");
    let mut inputs = Row::empty();
    for (i, e) in g.outgoing(input) {
        inputs.entries.insert(e.src.port.clone(), port_type(i, e));
    }
    let mut outputs = Row::empty();
    for (i, e) in g.incoming(output) {
        outputs.entries.insert(e.dst.port.clone(), port_type(i, e));
    }
    Ok((inputs, outputs))
}

/// Reroutes every output port with several outgoing edges through a
/// balanced tree of `builtin/copy` nodes: n consumers need n - 1 copies.
pub fn insert_copies(g: &Graph) -> Graph {
    let mut by_src: BTreeMap<PortRef, Vec<Edge>> = BTreeMap::new();
    for e in &g.edges {
        by_src.entry(e.src.clone()).or_default().push(e.clone());
    }
    if by_src.values().all(|v| v.len() <= 1) {
        return g.clone();
    }
    let mut nodes = g.nodes.clone();
    let mut next_id = g.max_node_id().map_or(0, |n| n.0 + 1);
    let mut edges = Vec::with_capacity(g.edges.len());
    for (src, group) in by_src {
        if group.len() == 1 {
            edges.extend(group);
            continue;
        }
        let ty = group[0].ty.clone();
        let dsts: Vec<PortRef> = group.into_iter().map(|e| e.dst).collect();
        distribute(src, &dsts, &ty, &mut nodes, &mut edges, &mut next_id);
    }
    Graph::from_parts(g.name.clone(), nodes, edges)
}

fn distribute(
    src: PortRef,
    dsts: &[PortRef],
    ty: &Option<Type>,
    nodes: &mut Vec<Node>,
    edges: &mut Vec<Edge>,
    next_id: &mut u32,
) {
    if let [only] = dsts {
        edges.push(Edge {
            src,
            dst: only.clone(),
            ty: ty.clone(),
        });
        return;
    }
    let copy = NodeId(*next_id);
    *next_id += 1;
    nodes.push(Node {
        id: copy,
        kind: NodeKind::Function(FunctionName::builtin("copy")),
    });
    edges.push(Edge {
        src,
        dst: PortRef::new(copy, ports::VALUE),
        ty: ty.clone(),
    });
    let (left, right) = dsts.split_at(dsts.len().div_ceil(2));
    distribute(PortRef::new(copy, ports::COPY_0), left, ty, nodes, edges, next_id);
    distribute(PortRef::new(copy, ports::COPY_1), right, ty, nodes, edges, next_id);
}

/// Incremental graph construction. Fan-out is allowed here; [`GraphBuilder::build`]
/// inserts copy nodes and validates.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    name: Option<String>,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    input: NodeId,
    output: NodeId,
}

impl Default for GraphBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl GraphBuilder {
    pub fn new() -> Self {
        let mut b = GraphBuilder {
            name: None,
            nodes: Vec::new(),
            edges: Vec::new(),
            input: NodeId(0),
            output: NodeId(1),
        };
        b.input = b.add(NodeKind::Input);
        b.output = b.add(NodeKind::Output);
        b
    }

    pub fn named(name: impl Into<String>) -> Self {
        let mut b = Self::new();
        b.name = Some(name.into());
        b
    }

    pub fn input(&self) -> NodeId {
        self.input
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    pub fn add(&mut self, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { id, kind });
        id
    }

    pub fn constant(&mut self, v: impl Into<Value>) -> NodeId {
        self.add(NodeKind::Const(v.into()))
    }

    /// Adds a function node; `name` is `namespace/fname`.
    pub fn function(&mut self, name: &str) -> NodeId {
        let f = name.parse().expect("function name must be namespace/name");
        self.add(NodeKind::Function(f))
    }

    pub fn boxed(&mut self, graph: Graph, label: Option<&str>) -> NodeId {
        self.add(NodeKind::Box {
            graph: Arc::new(graph),
            label: label.map(str::to_string),
        })
    }

    pub fn tag(&mut self, tag: &str) -> NodeId {
        self.add(NodeKind::Tag(Label::new(tag).expect("tag must be a valid label")))
    }

    pub fn match_node(&mut self) -> NodeId {
        self.add(NodeKind::Match)
    }

    pub fn edge(&mut self, src: NodeId, src_port: &str, dst: NodeId, dst_port: &str) -> &mut Self {
        self.typed_edge(src, src_port, dst, dst_port, None)
    }

    pub fn typed_edge(
        &mut self,
        src: NodeId,
        src_port: &str,
        dst: NodeId,
        dst_port: &str,
        ty: Option<Type>,
    ) -> &mut Self {
        self.edges.push(Edge {
            src: PortRef::new(src, Label::new(src_port).expect("valid port name")),
            dst: PortRef::new(dst, Label::new(dst_port).expect("valid port name")),
            ty,
        });
        self
    }

    /// Wires graph input `port` to `dst.dst_port`.
    pub fn from_input(&mut self, port: &str, dst: NodeId, dst_port: &str) -> &mut Self {
        let input = self.input;
        self.edge(input, port, dst, dst_port)
    }

    /// Wires `src.src_port` to graph output `port`.
    pub fn to_output(&mut self, src: NodeId, src_port: &str, port: &str) -> &mut Self {
        let output = self.output;
        self.edge(src, src_port, output, port)
    }

    /// Inserts copies for fan-out, then validates.
    pub fn build(self) -> Result<Graph, InvalidGraph> {
        let raw = Graph::from_parts(self.name, self.nodes, self.edges);
        let errors: Vec<StructuralError> = validate_with(&raw, false, &BTreeSet::new());
        if !errors.is_empty() {
            return Err(InvalidGraph(errors));
        }
        let g = insert_copies(&raw);
        let errors = validate_graph(&g);
        if errors.is_empty() {
            Ok(g)
        } else {
            Err(InvalidGraph(errors))
        }
    }

    /// The graph exactly as wired, without copy insertion or validation.
    pub fn build_raw(self) -> Graph {
        Graph::from_parts(self.name, self.nodes, self.edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn fig1a_is_valid() {
        assert_eq!(validate_graph(&corpus::zexp_to_parity()), vec![]);
    }

    #[test]
    fn bare_graph_is_valid() {
        let g = GraphBuilder::new().build().unwrap();
        assert_eq!(validate_graph(&g), vec![]);
        assert_eq!(g.input_labels(), Vec::<Label>::new());
    }

    #[test]
    fn duplicate_input_edge_is_reported() {
        let mut b = GraphBuilder::new();
        let one = b.constant(1.0);
        let two = b.constant(2.0);
        let fsub = b.function("builtin/fsub");
        b.edge(one, "value", fsub, "a");
        b.edge(two, "value", fsub, "a");
        b.from_input("x", fsub, "b");
        b.to_output(fsub, "value", "value");
        let g = b.build_raw();
        assert_eq!(
            validate_graph(&g),
            vec![StructuralError::DuplicateInputEdge(PortRef::new(fsub, "a"))]
        );
    }

    #[test]
    fn cycles_are_reported() {
        let mut b = GraphBuilder::new();
        let f = b.function("builtin/id");
        let g2 = b.function("builtin/id");
        b.edge(f, "value", g2, "value");
        b.edge(g2, "value", f, "value");
        let g = b.build_raw();
        assert!(validate_graph(&g).contains(&StructuralError::Cycle(f)));
        assert!(g.topological_order().is_none());
    }

    #[test]
    fn special_node_ports_are_checked() {
        let mut b = GraphBuilder::new();
        let c = b.constant(1i64);
        b.to_output(c, "oops", "x");
        let g = b.build_raw();
        assert_eq!(
            validate_graph(&g),
            vec![StructuralError::InvalidPort(c, Label::from_static("oops"))]
        );
    }

    fn fan_out(n: usize) -> Graph {
        let mut b = GraphBuilder::new();
        let c = b.constant(1.0);
        for i in 0..n {
            let id = b.function("builtin/id");
            b.edge(c, "value", id, "value");
            b.to_output(id, "value", &format!("o{i}"));
        }
        b.build_raw()
    }

    fn copy_count(g: &Graph) -> usize {
        g.nodes()
            .iter()
            .filter(|n| matches!(&n.kind, NodeKind::Function(f) if f.name == "copy"))
            .count()
    }

    #[test]
    fn copies_for_two_and_three_consumers() {
        for n in [2usize, 3, 4, 7] {
            let g = insert_copies(&fan_out(n));
            assert_eq!(validate_graph(&g), vec![]);
            assert_eq!(copy_count(&g), n - 1);
            // Enumerate edges: every output port now has at most one edge.
            let mut seen = BTreeSet::new();
            for e in g.edges() {
                assert!(seen.insert(e.src.clone()));
            }
        }
    }

    #[test]
    fn no_fanout_means_unchanged() {
        let g = corpus::zexp_to_parity();
        assert_eq!(insert_copies(&g), g);
    }

    #[test]
    fn signature_of_passthrough() {
        let g = corpus::passthrough("v");
        let mut supply = crate::types::Substitution::new();
        let (i, o) = graph_signature(&g, &mut supply).unwrap();
        assert_eq!(i, Row::closed([("v", Type::var(0))]));
        assert_eq!(o, Row::closed([("v", Type::var(0))]));
    }
}
