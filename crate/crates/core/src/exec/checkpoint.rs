//! Checkpoint encoding and restore.
//!
//! A checkpoint is canonical JSON. Graphs are stored once, keyed by the
//! SHA-256 of their canonical serialisation; frames refer to them by hash
//! and record edge slots by endpoint rather than by position, so a slot
//! survives edits that reorder or remove other edges.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde_json::{json, Map, Value as Json};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::engine::InFlightMap;
use super::state::{Frame, FrameId, LoopState, Slot, State};
use crate::codec::{self, child, field, object, string, u32_of, DecodeError};
use crate::graph::{validate_graph_relaxed, Edge, Graph, InvalidGraph, NodeId, NodeKind};
use crate::types::{infer_graph_with, InferError, InferOptions, TypeError};
use crate::worker::FunctionIndex;

pub const VERSION: u64 = 1;

pub fn graph_hash(g: &Graph) -> String {
    hex::encode(Sha256::digest(codec::serialize_graph(g).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RestoreError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("unsupported checkpoint version {0}")]
    Version(u64),
    #[error("checkpoint refers to graph {0}, which it does not contain")]
    GraphHashMissing(String),
    #[error("frame {frame} does not type-check against its stored values: {}", errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    ResumeTypeError { frame: FrameId, errors: Vec<TypeError> },
    #[error("{0}")]
    Incompatible(String),
}

fn edge_key(e: &Edge) -> Json {
    json!([e.src.node.0, e.src.port.as_str(), e.dst.node.0, e.dst.port.as_str()])
}

fn slot_json(s: &Slot) -> Json {
    match s {
        Slot::Empty => json!("empty"),
        Slot::Consumed => json!("consumed"),
        Slot::Full(v) => json!({ "full": codec::value_to_json(v) }),
    }
}

fn frame_json(f: &Frame, hash: &str, in_flight: &InFlightMap) -> Json {
    let mut slots = f.slots.clone();
    let mut fired = f.fired.clone();
    // Calls still running are replayed on resume.
    for ((fid, nid), call) in in_flight.range((f.id, NodeId(0))..=(f.id, NodeId(u32::MAX))) {
        debug_assert_eq!(*fid, f.id);
        fired.remove(nid);
        for (i, v) in &call.consumed {
            slots[*i] = Slot::Full(v.clone());
        }
    }
    let edges: Vec<Json> = f
        .graph
        .edges()
        .iter()
        .zip(&slots)
        .map(|(e, s)| json!({ "edge": edge_key(e), "slot": slot_json(s) }))
        .collect();
    let mut o = Map::new();
    o.insert("id".into(), json!(f.id));
    o.insert("graph".into(), json!(hash));
    o.insert("edges".into(), Json::Array(edges));
    o.insert("fired".into(), json!(fired.iter().map(|n| n.0).collect::<Vec<_>>()));
    if let Some((pf, pn)) = f.parent {
        o.insert("parent".into(), json!([pf, pn.0]));
    }
    if let Some(l) = &f.loop_state {
        o.insert("loop".into(), json!({ "iter": l.iter, "value": codec::value_to_json(&l.value) }));
    }
    Json::Object(o)
}

pub(crate) fn encode_json(state: &State, in_flight: &InFlightMap) -> Json {
    let mut graphs = Map::new();
    let mut hashes: BTreeMap<usize, String> = BTreeMap::new();
    let mut frames = Vec::new();
    for f in state.frames.values() {
        let hash = hashes
            .entry(Arc::as_ptr(&f.graph) as usize)
            .or_insert_with(|| {
                let h = graph_hash(&f.graph);
                graphs.entry(h.clone()).or_insert_with(|| codec::graph_to_json(&f.graph));
                h
            })
            .clone();
        frames.push(frame_json(f, &hash, in_flight));
    }
    json!({
        "version": VERSION,
        "graphs": graphs,
        "root": state.root,
        "next_id": state.next_id,
        "frames": frames,
    })
}

pub(crate) fn encode(state: &State, in_flight: &InFlightMap) -> Vec<u8> {
    codec::canonical(&encode_json(state, in_flight)).into_bytes()
}

/// The checkpoint document for a state with nothing in flight.
pub fn checkpoint_json(state: &State) -> Json {
    encode_json(state, &BTreeMap::new())
}

fn u64_of(j: &Json, path: &str) -> Result<u64, DecodeError> {
    j.as_u64().ok_or_else(|| DecodeError::new(path, "expected a non-negative integer"))
}

fn slot_of(j: &Json, path: &str) -> Result<Slot, DecodeError> {
    match j {
        Json::String(s) if s == "empty" => Ok(Slot::Empty),
        Json::String(s) if s == "consumed" => Ok(Slot::Consumed),
        Json::Object(o) => Ok(Slot::Full(codec::value_from_json(field(o, "full", path)?, &child(path, "full"))?)),
        _ => Err(DecodeError::new(path, "expected \"empty\", \"consumed\" or {\"full\": value}")),
    }
}

type EdgeKey = (u32, String, u32, String);

fn key_of(e: &Edge) -> EdgeKey {
    (e.src.node.0, e.src.port.as_str().to_string(), e.dst.node.0, e.dst.port.as_str().to_string())
}

fn key_from(j: &Json, path: &str) -> Result<EdgeKey, DecodeError> {
    let a = codec::array(j, path)?;
    if a.len() != 4 {
        return Err(DecodeError::new(path, "edge key has four elements"));
    }
    Ok((
        u32_of(&a[0], &child(path, 0))?,
        string(&a[1], &child(path, 1))?.to_string(),
        u32_of(&a[2], &child(path, 2))?,
        string(&a[3], &child(path, 3))?.to_string(),
    ))
}

/// Decodes a checkpoint, substituting `replacements` (keyed by the hash of
/// the graph they replace), and checks the result can run to completion.
pub fn restore(bytes: &[u8], replacements: &BTreeMap<String, Graph>, index: &FunctionIndex) -> Result<State, RestoreError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DecodeError::new("", format!("not UTF-8: {e}")))?;
    let doc = codec::parse(text)?;
    let top = object(&doc, "")?;
    let version = u64_of(field(top, "version", "")?, "/version")?;
    if version != VERSION {
        return Err(RestoreError::Version(version));
    }
    let stored = object(field(top, "graphs", "")?, "/graphs")?;
    let mut graphs: BTreeMap<String, Arc<Graph>> = BTreeMap::new();
    let mut graph = |hash: &str| -> Result<Arc<Graph>, RestoreError> {
        if let Some(g) = graphs.get(hash) {
            return Ok(Arc::clone(g));
        }
        let g = match replacements.get(hash) {
            Some(g) => g.clone(),
            None => {
                let j = stored.get(hash).ok_or_else(|| RestoreError::GraphHashMissing(hash.to_string()))?;
                codec::graph_from_json(j, &child("/graphs", hash))?
            }
        };
        let g = Arc::new(g);
        graphs.insert(hash.to_string(), Arc::clone(&g));
        Ok(g)
    };

    let root = u64_of(field(top, "root", "")?, "/root")?;
    let mut frames = BTreeMap::new();
    for (i, fj) in codec::array(field(top, "frames", "")?, "/frames")?.iter().enumerate() {
        let path = child("/frames", i);
        let o = object(fj, &path)?;
        let id = u64_of(field(o, "id", &path)?, &child(&path, "id"))?;
        let g = graph(string(field(o, "graph", &path)?, &child(&path, "graph"))?)?;

        let mut stored_slots: BTreeMap<EdgeKey, Slot> = BTreeMap::new();
        let ep = child(&path, "edges");
        for (j, ej) in codec::array(field(o, "edges", &path)?, &ep)?.iter().enumerate() {
            let p = child(&ep, j);
            let eo = object(ej, &p)?;
            let k = key_from(field(eo, "edge", &p)?, &child(&p, "edge"))?;
            stored_slots.insert(k, slot_of(field(eo, "slot", &p)?, &child(&p, "slot"))?);
        }
        let slots = g
            .edges()
            .iter()
            .map(|e| stored_slots.remove(&key_of(e)).unwrap_or(Slot::Empty))
            .collect();

        let live: BTreeSet<NodeId> = g.nodes().iter().map(|n| n.id).collect();
        let fp = child(&path, "fired");
        let mut fired = BTreeSet::new();
        for (j, n) in codec::array(field(o, "fired", &path)?, &fp)?.iter().enumerate() {
            let n = NodeId(u32_of(n, &child(&fp, j))?);
            if live.contains(&n) {
                fired.insert(n);
            }
        }
        let parent = match o.get("parent") {
            None => None,
            Some(p) => {
                let pp = child(&path, "parent");
                let a = codec::array(p, &pp)?;
                if a.len() != 2 {
                    return Err(DecodeError::new(&pp, "parent is [frame, node]").into());
                }
                Some((u64_of(&a[0], &child(&pp, 0))?, NodeId(u32_of(&a[1], &child(&pp, 1))?)))
            }
        };
        let loop_state = match o.get("loop") {
            None => None,
            Some(l) => {
                let lp = child(&path, "loop");
                let lo = object(l, &lp)?;
                Some(LoopState {
                    iter: u64_of(field(lo, "iter", &lp)?, &child(&lp, "iter"))?,
                    value: codec::value_from_json(field(lo, "value", &lp)?, &child(&lp, "value"))?,
                })
            }
        };
        frames.insert(
            id,
            Frame {
                id,
                graph: g,
                slots,
                fired,
                parent,
                loop_state,
            },
        );
    }
    let next_id = match top.get("next_id") {
        Some(j) => u64_of(j, "/next_id")?,
        None => frames.keys().next_back().map_or(0, |k| k + 1),
    };
    let state = State { frames, root, next_id };
    check(&state, index)?;
    Ok(state)
}

fn check(state: &State, index: &FunctionIndex) -> Result<(), RestoreError> {
    if !state.frames.contains_key(&state.root) {
        return Err(RestoreError::Incompatible(format!("root frame {} is missing", state.root)));
    }
    for f in state.frames.values() {
        match f.parent {
            None if f.id != state.root => {
                return Err(RestoreError::Incompatible(format!("frame {} has no parent", f.id)));
            }
            Some((pf, pn)) => {
                let parent = state
                    .frames
                    .get(&pf)
                    .ok_or_else(|| RestoreError::Incompatible(format!("frame {} reports to missing frame {pf}", f.id)))?;
                if parent.graph.node(pn).is_none() || !parent.fired.contains(&pn) {
                    return Err(RestoreError::Incompatible(format!(
                        "frame {} reports to node {pn}, which is not waiting in frame {pf}",
                        f.id
                    )));
                }
            }
            None => {}
        }

        let structural = validate_graph_relaxed(&f.graph, &f.fired);
        if !structural.is_empty() {
            return Err(RestoreError::Incompatible(format!("frame {}: {}", f.id, InvalidGraph(structural))));
        }

        let waiting: BTreeSet<NodeId> = state.children(f.id).filter_map(|c| c.parent.map(|p| p.1)).collect();
        for (i, e) in f.graph.edges().iter().enumerate() {
            let src_fired = f.fired.contains(&e.src.node);
            let dst_fired = f.fired.contains(&e.dst.node);
            match &f.slots[i] {
                Slot::Empty if src_fired && !waiting.contains(&e.src.node) => {
                    return Err(RestoreError::Incompatible(format!(
                        "frame {}: {} already fired and will never fill {} -> {}",
                        f.id, e.src.node, e.src, e.dst
                    )))
                }
                Slot::Consumed if !dst_fired => {
                    return Err(RestoreError::Incompatible(format!(
                        "frame {}: input {} was consumed but {} has not fired",
                        f.id, e.dst, e.dst.node
                    )))
                }
                Slot::Full(_) if dst_fired => {
                    return Err(RestoreError::Incompatible(format!(
                        "frame {}: {} already fired but {} still holds a value",
                        f.id, e.dst.node, e.dst
                    )))
                }
                _ => {}
            }
        }
        if f.graph.nodes().iter().any(|n| n.kind == NodeKind::Output) && f.graph.output_node().is_some_and(|o| f.fired.contains(&o)) {
            return Err(RestoreError::Incompatible(format!("frame {} already completed", f.id)));
        }

        let opts = InferOptions {
            relaxed: f.fired.clone(),
            inputs: None,
            edge_values: f
                .slots
                .iter()
                .enumerate()
                .filter_map(|(i, s)| match s {
                    Slot::Full(v) => Some((i, v.clone())),
                    _ => None,
                })
                .collect(),
        };
        match infer_graph_with(&f.graph, index.signature(), &opts) {
            Ok(_) => {}
            Err(InferError::Types(errors)) => return Err(RestoreError::ResumeTypeError { frame: f.id, errors }),
            Err(InferError::Invalid(e)) => return Err(RestoreError::Incompatible(format!("frame {}: {e}", f.id))),
        }
    }
    Ok(())
}
