//! Graphviz export.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::graph::{Graph, Node, NodeKind};
use crate::types::TypePrinter;
use crate::value::Label;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '{' | '}' | '|' | '<' | '>' | '"' | '\\' => {
                out.push('\\');
                out.push(c);
            }
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out
}

fn title(n: &Node) -> String {
    match &n.kind {
        NodeKind::Input => "Input".into(),
        NodeKind::Output => "Output".into(),
        NodeKind::Const(v) => {
            let mut s = v.to_string();
            if s.len() > 40 {
                s.truncate(37);
                s.push_str("...");
            }
            s
        }
        NodeKind::Function(f) => f.name.clone(),
        NodeKind::Box { graph, label } => {
            let name = label.clone().or_else(|| graph.name.clone()).unwrap_or_else(|| "box".into());
            format!("Box: {name}")
        }
        NodeKind::Match => "Match".into(),
        NodeKind::Tag(t) => format!("Tag: {t}"),
    }
}

fn fields(prefix: &str, ports: &BTreeSet<&Label>) -> String {
    let parts: Vec<String> = ports.iter().map(|p| format!("<{prefix}_{p}>{}", escape(p.as_str()))).collect();
    format!("{{{}}}", parts.join("|"))
}

/// DOT text for `g`. With `annotated`, typed edges carry their type as label.
pub fn to_dot(g: &Graph, annotated: bool) -> String {
    let mut out = String::new();
    let name = g.name.as_deref().unwrap_or("graph");
    writeln!(out, "digraph \"{}\" {{", name.replace('"', "\\\"")).unwrap();
    writeln!(out, "  node [shape=record];").unwrap();
    for n in g.nodes() {
        let ins: BTreeSet<&Label> = g.incoming(n.id).map(|(_, e)| &e.dst.port).collect();
        let outs: BTreeSet<&Label> = g.outgoing(n.id).map(|(_, e)| &e.src.port).collect();
        let mut rows = Vec::new();
        if !ins.is_empty() {
            rows.push(fields("in", &ins));
        }
        rows.push(escape(&title(n)));
        if !outs.is_empty() {
            rows.push(fields("out", &outs));
        }
        writeln!(out, "  {} [label=\"{{{}}}\"];", n.id, rows.join("|")).unwrap();
    }
    // One printer for the whole graph keeps var names consistent across edges.
    let mut printer = TypePrinter::new();
    for e in g.edges() {
        write!(out, "  {}:out_{} -> {}:in_{}", e.src.node, e.src.port, e.dst.node, e.dst.port).unwrap();
        match (&e.ty, annotated) {
            (Some(t), true) => writeln!(out, " [label=\"{}\"];", printer.ty(t).replace('"', "\\\"")).unwrap(),
            _ => writeln!(out, ";").unwrap(),
        }
    }
    out.push_str("}\n");
    out
}
