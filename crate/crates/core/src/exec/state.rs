use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::graph::{Graph, NodeId};
use crate::value::Value;

pub type FrameId = u64;

/// The value state of one edge.
#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    Empty,
    Full(Value),
    Consumed,
}

impl Slot {
    pub fn is_full(&self) -> bool {
        matches!(self, Slot::Full(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    /// Body activations so far, counting the current one.
    pub iter: u64,
    /// Input of the current activation.
    pub value: Value,
}

/// One activation of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: FrameId,
    pub graph: Arc<Graph>,
    /// Indexed like `graph.edges()`.
    pub slots: Vec<Slot>,
    pub fired: BTreeSet<NodeId>,
    /// The frame and node this activation reports back to.
    pub parent: Option<(FrameId, NodeId)>,
    pub loop_state: Option<LoopState>,
}

impl Frame {
    pub fn new(id: FrameId, graph: Arc<Graph>, parent: Option<(FrameId, NodeId)>) -> Frame {
        let slots = vec![Slot::Empty; graph.edges().len()];
        Frame {
            id,
            graph,
            slots,
            fired: BTreeSet::new(),
            parent,
            loop_state: None,
        }
    }

    /// Every input slot of `node` is Full.
    pub fn is_ready(&self, node: NodeId) -> bool {
        !self.fired.contains(&node) && self.graph.incoming(node).all(|(i, _)| self.slots[i].is_full())
    }
}

/// The whole program state: a tree of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub frames: BTreeMap<FrameId, Frame>,
    pub root: FrameId,
    pub next_id: FrameId,
}

impl State {
    pub fn children(&self, id: FrameId) -> impl Iterator<Item = &Frame> {
        self.frames.values().filter(move |f| f.parent.map(|p| p.0) == Some(id))
    }

    /// Node ids from the root graph down to `node` in frame `id`.
    pub fn path(&self, id: FrameId, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = self.frames.get(&id).and_then(|f| f.parent);
        while let Some((fid, nid)) = cur {
            path.push(nid);
            cur = self.frames.get(&fid).and_then(|f| f.parent);
        }
        path.reverse();
        path
    }
}
