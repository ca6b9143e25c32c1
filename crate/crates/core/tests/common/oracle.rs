//! Brute-force typing oracle for small graphs over fsub, fdiv, make_pair,
//! push and eval of a few fixed thunks.
//!
//! Every data edge gets a ground type from a finite universe (Int, Float,
//! Str, Vec and Pair nested to depth 2). Constraints come straight from the
//! builtin semantics, with no unification involved. Solutions are found per
//! connected component of the constraint graph by depth-first search,
//! computing a variable outright whenever a constraint determines it.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tk_core::types::Type;
use tk_core::{Graph, GraphBuilder, NodeId, NodeKind, Value};

pub const MAX_DEPTH: usize = 2;

pub fn depth(t: &Type) -> usize {
    match t {
        Type::Vec(a) => 1 + depth(a),
        Type::Pair(a, b) => 1 + depth(a).max(depth(b)),
        _ => 0,
    }
}

pub fn universe() -> Vec<Type> {
    let mut levels: Vec<Vec<Type>> = vec![vec![Type::Int, Type::Float, Type::Str]];
    for _ in 0..MAX_DEPTH {
        let below: Vec<Type> = levels.concat();
        let mut next: Vec<Type> = below.iter().map(|t| Type::vec(t.clone())).collect();
        for a in &below {
            for b in &below {
                next.push(Type::pair(a.clone(), b.clone()));
            }
        }
        let known: BTreeSet<Type> = below.into_iter().collect();
        next.retain(|t| !known.contains(t));
        levels.push(next);
    }
    levels.concat()
}

#[derive(Debug, Clone)]
pub enum Constraint {
    Is(usize, Type),
    IsVec(usize),
    Eq(usize, usize),
    /// v = Pair(first, second)
    PairOf(usize, usize, usize),
    /// v = Vec(item)
    VecOf(usize, usize),
    Unsat(String),
}

impl Constraint {
    fn vars(&self) -> Vec<usize> {
        match *self {
            Constraint::Is(a, _) | Constraint::IsVec(a) => vec![a],
            Constraint::Eq(a, b) | Constraint::VecOf(a, b) => vec![a, b],
            Constraint::PairOf(a, b, c) => vec![a, b, c],
            Constraint::Unsat(_) => vec![],
        }
    }

    fn holds(&self, t: &BTreeMap<usize, Type>) -> bool {
        match self {
            Constraint::Is(a, ty) => &t[a] == ty,
            Constraint::IsVec(a) => matches!(t[a], Type::Vec(_)),
            Constraint::Eq(a, b) => t[a] == t[b],
            Constraint::PairOf(v, f, s) => t[v] == Type::pair(t[f].clone(), t[s].clone()),
            Constraint::VecOf(v, i) => t[v] == Type::vec(t[i].clone()),
            Constraint::Unsat(_) => false,
        }
    }

    /// A value for `x` forced by the assigned variables, if any.
    fn derive(&self, x: usize, t: &BTreeMap<usize, Type>) -> Option<Type> {
        match *self {
            Constraint::Is(a, ref ty) if a == x => Some(ty.clone()),
            Constraint::Eq(a, b) if a == x => t.get(&b).cloned(),
            Constraint::Eq(a, b) if b == x => t.get(&a).cloned(),
            Constraint::PairOf(v, f, s) if v == x => Some(Type::pair(t.get(&f)?.clone(), t.get(&s)?.clone())),
            Constraint::PairOf(v, f, s) if f == x || s == x => match t.get(&v)? {
                Type::Pair(a, b) => Some(if f == x { (**a).clone() } else { (**b).clone() }),
                // Any value fails the check; use one that will.
                _ => Some(Type::Bool),
            },
            Constraint::VecOf(v, i) if v == x => Some(Type::vec(t.get(&i)?.clone())),
            Constraint::VecOf(v, i) if i == x => match t.get(&v)? {
                Type::Vec(a) => Some((**a).clone()),
                _ => Some(Type::Bool),
            },
            _ => None,
        }
    }
}

/// Data edges and the constraints between them. Edges carrying thunks are
/// left out.
#[derive(Debug, Default)]
pub struct Problem {
    pub edges: Vec<usize>,
    pub constraints: Vec<Constraint>,
}

/// Known interfaces of the thunks the generator uses: input labels,
/// output labels and a constraint builder.
fn thunk_constraints(name: &str, ins: &BTreeMap<String, usize>, outs: &[(String, usize)], cs: &mut Vec<Constraint>) {
    let want_in: &[&str] = match name {
        "zexp_to_parity" => &["x"],
        "passthrough" => &["value"],
        "pairer" => &["a", "b"],
        other => panic!("unknown thunk {other}"),
    };
    let want_out: &[&str] = match name {
        "zexp_to_parity" => &["parity"],
        _ => &["value"],
    };
    let got: Vec<&str> = ins.keys().map(String::as_str).collect();
    if got != want_in {
        cs.push(Constraint::Unsat(format!("eval of {name} with inputs {got:?}")));
        return;
    }
    for (port, e) in outs {
        if !want_out.contains(&port.as_str()) {
            cs.push(Constraint::Unsat(format!("{name} has no output {port}")));
            return;
        }
        match name {
            "zexp_to_parity" => cs.push(Constraint::Is(*e, Type::Float)),
            "passthrough" => cs.push(Constraint::Eq(*e, ins["value"])),
            _ => cs.push(Constraint::PairOf(*e, ins["a"], ins["b"])),
        }
    }
    if name == "zexp_to_parity" {
        cs.push(Constraint::Is(ins["x"], Type::Float));
    }
}

fn const_type(v: &Value) -> Option<Type> {
    match v {
        Value::Int(_) => Some(Type::Int),
        Value::Float(_) => Some(Type::Float),
        Value::Str(_) => Some(Type::Str),
        Value::Pair(p) => Some(Type::pair(const_type(&p.0)?, const_type(&p.1)?)),
        Value::Vec(items) => Some(Type::vec(const_type(items.first()?)?)),
        _ => None,
    }
}

pub fn problem(g: &Graph) -> Problem {
    let mut p = Problem::default();
    let thunk_nodes: BTreeSet<NodeId> = g
        .nodes()
        .iter()
        .filter(|n| matches!(&n.kind, NodeKind::Const(Value::Graph(_))))
        .map(|n| n.id)
        .collect();
    for (i, e) in g.edges().iter().enumerate() {
        if !thunk_nodes.contains(&e.src.node) {
            p.edges.push(i);
        }
    }
    let cs = &mut p.constraints;
    for n in g.nodes() {
        let ins: BTreeMap<String, usize> = g.incoming(n.id).map(|(i, e)| (e.dst.port.as_str().to_string(), i)).collect();
        let outs: Vec<(String, usize)> = g.outgoing(n.id).map(|(i, e)| (e.src.port.as_str().to_string(), i)).collect();
        let out = |port: &'static str| outs.iter().filter(move |(p, _)| p == port).map(|(_, i)| *i).collect::<Vec<_>>();
        match &n.kind {
            NodeKind::Const(Value::Graph(_)) | NodeKind::Input | NodeKind::Output => {}
            NodeKind::Const(v) => {
                for (_, e) in &outs {
                    match const_type(v) {
                        Some(t) => cs.push(Constraint::Is(*e, t)),
                        None => cs.push(Constraint::IsVec(*e)),
                    }
                }
            }
            NodeKind::Function(f) => match f.name.as_str() {
                "fsub" | "fdiv" => {
                    for e in ins.values().chain(outs.iter().map(|(_, e)| e)) {
                        cs.push(Constraint::Is(*e, Type::Float));
                    }
                }
                "make_pair" => {
                    for e in out("pair") {
                        cs.push(Constraint::PairOf(e, ins["first"], ins["second"]));
                    }
                }
                "push" => {
                    cs.push(Constraint::VecOf(ins["vec"], ins["item"]));
                    for e in out("vec") {
                        cs.push(Constraint::Eq(e, ins["vec"]));
                    }
                }
                "copy" => {
                    for (_, e) in &outs {
                        cs.push(Constraint::Eq(*e, ins["value"]));
                    }
                }
                "eval" => {
                    let thunk = g.edges()[ins["thunk"]].src.node;
                    let name = match &g.node(thunk).unwrap().kind {
                        NodeKind::Const(Value::Graph(t)) => t.name.clone().unwrap_or_default(),
                        _ => panic!("eval thunks come straight from constants"),
                    };
                    let mut rest = ins.clone();
                    rest.remove("thunk");
                    thunk_constraints(&name, &rest, &outs, cs);
                }
                other => panic!("oracle does not model {other}"),
            },
            other => panic!("oracle does not model {other:?}"),
        }
    }
    p
}

/// Edge sets that share no constraint.
pub fn components(p: &Problem) -> Vec<Vec<usize>> {
    let mut parent: BTreeMap<usize, usize> = p.edges.iter().map(|&e| (e, e)).collect();
    fn find(parent: &mut BTreeMap<usize, usize>, x: usize) -> usize {
        let up = parent[&x];
        if up == x {
            return x;
        }
        let r = find(parent, up);
        parent.insert(x, r);
        r
    }
    for c in &p.constraints {
        let vs = c.vars();
        for w in vs.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent.insert(a, b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &e in &p.edges {
        let r = find(&mut parent, e);
        groups.entry(r).or_default().push(e);
    }
    groups.into_values().collect()
}

pub struct Solutions {
    pub found: Vec<BTreeMap<usize, Type>>,
    /// Search stopped at the cap before exhausting the space.
    pub truncated: bool,
}

/// All assignments to `vars` from the universe satisfying `p`, up to `cap`.
pub fn solve(p: &Problem, vars: &[usize], universe: &[Type], cap: usize) -> Solutions {
    let set: BTreeSet<usize> = vars.iter().copied().collect();
    let cs: Vec<&Constraint> = p
        .constraints
        .iter()
        .filter(|c| c.vars().iter().any(|v| set.contains(v)))
        .collect();
    let mut out = Solutions {
        found: Vec::new(),
        truncated: false,
    };
    let universe_set: BTreeSet<&Type> = universe.iter().collect();
    let composite: BTreeSet<usize> = cs
        .iter()
        .filter_map(|c| match c {
            Constraint::PairOf(v, ..) | Constraint::VecOf(v, _) => Some(*v),
            _ => None,
        })
        .collect();

    fn consistent(cs: &[&Constraint], t: &BTreeMap<usize, Type>) -> bool {
        cs.iter().all(|c| !c.vars().iter().all(|v| t.contains_key(v)) || c.holds(t))
    }

    fn go(
        cs: &[&Constraint],
        vars: &[usize],
        composite: &BTreeSet<usize>,
        universe: &[Type],
        universe_set: &BTreeSet<&Type>,
        t: &mut BTreeMap<usize, Type>,
        out: &mut Solutions,
        cap: usize,
    ) {
        if out.found.len() >= cap {
            out.truncated = true;
            return;
        }
        let open: Vec<usize> = vars.iter().copied().filter(|v| !t.contains_key(v)).collect();
        if open.is_empty() {
            out.found.push(t.clone());
            return;
        }
        let forced = open.iter().find_map(|&x| cs.iter().find_map(|c| c.derive(x, t)).map(|ty| (x, ty)));
        let (x, candidates): (usize, Vec<Type>) = match forced {
            Some((x, ty)) => (x, if universe_set.contains(&ty) { vec![ty] } else { vec![] }),
            None => {
                let x = open.iter().copied().find(|v| composite.contains(v)).unwrap_or(open[0]);
                let vec_only = cs.iter().any(|c| matches!(c, Constraint::IsVec(a) if *a == x));
                (x, universe.iter().filter(|t| !vec_only || matches!(t, Type::Vec(_))).cloned().collect())
            }
        };
        for ty in candidates {
            t.insert(x, ty);
            if consistent(cs, t) {
                go(cs, vars, composite, universe, universe_set, t, out, cap);
            }
            t.remove(&x);
            if out.truncated {
                return;
            }
        }
    }

    if cs.iter().any(|c| matches!(c, Constraint::Unsat(_))) {
        return out;
    }
    let mut t = BTreeMap::new();
    go(&cs, vars, &composite, universe, &universe_set, &mut t, &mut out, cap);
    out
}

/// Does every constraint touching `vars` hold under `t`?
pub fn satisfies(p: &Problem, vars: &[usize], t: &BTreeMap<usize, Type>) -> bool {
    let set: BTreeSet<usize> = vars.iter().copied().collect();
    p.constraints
        .iter()
        .filter(|c| c.vars().iter().any(|v| set.contains(v)))
        .all(|c| c.holds(t))
}

/// Extends `m` so that `pattern` under `m` equals `ground`.
pub fn match_type(pattern: &Type, ground: &Type, m: &mut BTreeMap<u32, Type>) -> bool {
    match (pattern, ground) {
        (Type::Var(v), g) => match m.get(&v.0) {
            Some(bound) => bound == g,
            None => {
                m.insert(v.0, g.clone());
                true
            }
        },
        (Type::Vec(a), Type::Vec(b)) => match_type(a, b, m),
        (Type::Pair(a1, a2), Type::Pair(b1, b2)) => match_type(a1, b1, m) && match_type(a2, b2, m),
        (a, b) => a == b,
    }
}

pub fn substitute(t: &Type, with: &Type) -> Type {
    match t {
        Type::Var(_) => with.clone(),
        Type::Vec(a) => Type::vec(substitute(a, with)),
        Type::Pair(a, b) => Type::pair(substitute(a, with), substitute(b, with)),
        other => other.clone(),
    }
}

pub fn type_vars(t: &Type, out: &mut BTreeSet<u32>) {
    match t {
        Type::Var(v) => {
            out.insert(v.0);
        }
        Type::Vec(a) => type_vars(a, out),
        Type::Pair(a, b) => {
            type_vars(a, out);
            type_vars(b, out);
        }
        _ => {}
    }
}

pub fn pairer() -> Graph {
    let mut b = GraphBuilder::named("pairer");
    let p = b.function("builtin/make_pair");
    b.from_input("a", p, "first");
    b.from_input("b", p, "second");
    b.to_output(p, "pair", "value");
    b.build().unwrap()
}

fn thunk(i: usize) -> Graph {
    match i {
        0 => tk_core::corpus::zexp_to_parity(),
        1 => tk_core::corpus::passthrough("value"),
        _ => pairer(),
    }
}

/// A structurally valid random graph of at most 10 nodes (before copy
/// insertion).
pub fn random_graph(seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut b = GraphBuilder::new();
        let mut nodes = 2;
        let mut sources: Vec<(NodeId, String)> = Vec::new();
        let mut inputs = 0;
        let budget = rng.random_range(3..=10);
        while nodes < budget {
            let kind = rng.random_range(0..6);
            let (id, in_ports, out_ports): (NodeId, Vec<String>, Vec<String>) = match kind {
                0 => {
                    let v = match rng.random_range(0..6) {
                        0 => Value::Float(1.5),
                        1 => Value::Int(2),
                        2 => Value::str("s"),
                        3 => Value::vec([]),
                        4 => Value::floats(&[1.0]),
                        _ => Value::pair(Value::Int(1), Value::str("s")),
                    };
                    (b.constant(v), vec![], vec!["value".into()])
                }
                1 => (b.function("builtin/fsub"), vec!["a".into(), "b".into()], vec!["value".into()]),
                2 => (b.function("builtin/fdiv"), vec!["a".into(), "b".into()], vec!["value".into()]),
                3 => (b.function("builtin/make_pair"), vec!["first".into(), "second".into()], vec!["pair".into()]),
                4 => (b.function("builtin/push"), vec!["vec".into(), "item".into()], vec!["vec".into()]),
                _ => {
                    if nodes + 2 > budget {
                        continue;
                    }
                    let which = rng.random_range(0..3);
                    let g = thunk(which);
                    let c = b.constant(Value::graph(g.clone()));
                    let e = b.function("builtin/eval");
                    b.edge(c, "value", e, "thunk");
                    nodes += 1;
                    let mut ins: Vec<String> = g.input_labels().iter().map(|l| l.as_str().to_string()).collect();
                    let mut outs: Vec<String> = g.output_labels().iter().map(|l| l.as_str().to_string()).collect();
                    match rng.random_range(0..20) {
                        0 => ins.push("zz".into()),
                        1 => {
                            ins.pop();
                        }
                        2 => outs.push("zz".into()),
                        _ => {}
                    }
                    (e, ins, outs)
                }
            };
            nodes += 1;
            for port in in_ports {
                if !sources.is_empty() && rng.random_bool(0.7) {
                    let (src, sp) = sources[rng.random_range(0..sources.len())].clone();
                    b.edge(src, &sp, id, &port);
                } else {
                    b.from_input(&format!("i{inputs}"), id, &port);
                    inputs += 1;
                }
            }
            sources.extend(out_ports.into_iter().map(|p| (id, p)));
        }
        if sources.is_empty() {
            continue;
        }
        for k in 0..rng.random_range(1..=2) {
            let (src, sp) = sources[rng.random_range(0..sources.len())].clone();
            b.to_output(src, &sp, &format!("o{k}"));
        }
        if let Ok(g) = b.build() {
            return g;
        }
    }
}

/// Outcome of checking one graph against the oracle.
#[derive(Debug, Default)]
pub struct Report {
    pub inferred_ok: bool,
    pub failures: Vec<String>,
    pub lacks_violations: usize,
    pub truncated: usize,
}

pub const CAP: usize = 20_000;

/// Checks inference on `g` against the oracle.
pub fn check_graph(g: &Graph, sigs: &tk_core::Signature, universe: &[Type]) -> Report {
    let mut r = Report::default();
    let p = problem(g);
    let comps = components(&p);
    match tk_core::types::infer_graph(g, sigs) {
        Err(e) => {
            r.lacks_violations = e
                .type_errors()
                .iter()
                .filter(|e| e.kind == tk_core::types::TypeErrorKind::LacksViolation)
                .count();
            let has_unsat = comps.iter().any(|c| solve(&p, c, universe, 1).found.is_empty());
            // A bare Unsat constraint mentions no edge, so it sits outside
            // every component.
            let global = p.constraints.iter().any(|c| matches!(c, Constraint::Unsat(_)));
            if !has_unsat && !global {
                r.failures.push(format!("inference failed ({e}) but the oracle found a typing"));
            }
        }
        Ok(inf) => {
            r.inferred_ok = true;
            let ann: Vec<Type> = inf.edge_types();
            let mut seen_vars: BTreeMap<u32, usize> = BTreeMap::new();
            for (ci, comp) in comps.iter().enumerate() {
                let mut vars = BTreeSet::new();
                for &e in comp {
                    type_vars(&ann[e], &mut vars);
                }
                for v in vars {
                    if let Some(other) = seen_vars.insert(v, ci) {
                        r.failures.push(format!("var{v} links independent components {other} and {ci}"));
                    }
                }
                let sols = solve(&p, comp, universe, CAP);
                if sols.truncated {
                    r.truncated += 1;
                }
                for s in &sols.found {
                    let mut m = BTreeMap::new();
                    if !comp.iter().all(|e| match_type(&ann[*e], &s[e], &mut m)) {
                        r.failures.push(format!("oracle typing {s:?} is not an instance of {:?}", comp.iter().map(|e| &ann[*e]).collect::<Vec<_>>()));
                        break;
                    }
                }
                for ground in [Type::Int, Type::vec(Type::Str), Type::pair(Type::Float, Type::Int)] {
                    let t: BTreeMap<usize, Type> = comp.iter().map(|&e| (e, substitute(&ann[e], &ground))).collect();
                    if t.values().all(|t| depth(t) <= MAX_DEPTH) {
                        if !satisfies(&p, comp, &t) {
                            r.failures.push(format!("instance {t:?} of the inferred typing breaks a constraint"));
                        } else if !sols.truncated && !sols.found.contains(&t) {
                            r.failures.push(format!("oracle missed {t:?}"));
                        }
                    }
                }
            }
            match tk_core::types::infer_graph(&inf.graph, sigs) {
                Ok(again) if again.graph == inf.graph => {}
                Ok(_) => r.failures.push("re-inference changed the annotations".into()),
                Err(e) => r.failures.push(format!("re-inference failed: {e}")),
            }
        }
    }
    r
}
