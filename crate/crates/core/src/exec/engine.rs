//! The coordinator: owns the state, fires ready nodes, collects completions.
#![allow(clippy::result_large_err)]

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use crossbeam_channel::{Receiver, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint;
use super::state::{Frame, FrameId, LoopState, Slot, State};
use super::typecache::TypeCache;
use super::{CheckpointReason, Control, ExecConfig, ExecError, ExecErrorKind, FireOrder, Outcome, Plan, Stats};
use crate::builtins::{self, BuiltinError, Implementation};
use crate::graph::{ports, Graph, NodeId, NodeKind};
use crate::types::{check_value, Location, TypeError, TypeErrorKind};
use crate::value::{FunctionName, Label, Ports, Value};
use crate::worker::{Binding, FunctionIndex, Worker, WorkerError};

struct Completion {
    frame: FrameId,
    node: NodeId,
    call: u64,
    function: FunctionName,
    result: Result<Ports, WorkerError>,
}

/// A worker call that has consumed its inputs but not yet delivered.
pub(crate) struct InFlight {
    call: u64,
    pub(crate) consumed: Vec<(usize, Value)>,
}

pub(crate) type InFlightMap = BTreeMap<(FrameId, NodeId), InFlight>;

type Step = Result<(), ExecError>;

pub(crate) struct Engine<'a> {
    index: &'a FunctionIndex,
    config: &'a ExecConfig,
    control: Receiver<Control>,
    types: TypeCache<'a>,
    state: State,
    ready: VecDeque<(FrameId, NodeId)>,
    queued: HashSet<(FrameId, NodeId)>,
    rng: Option<ChaCha8Rng>,
    in_flight: InFlightMap,
    next_call: u64,
    done_tx: Sender<Completion>,
    done_rx: Receiver<Completion>,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
    stats: Stats,
    result: Option<Ports>,
}

fn run_worker(worker: &dyn Worker, f: &FunctionName, inputs: Ports, ctx: &crate::worker::RunContext) -> Result<Ports, WorkerError> {
    match catch_unwind(AssertUnwindSafe(|| worker.run(f, inputs, ctx))) {
        Ok(r) => r,
        Err(_) => Err(WorkerError::failed(format!("{f} panicked"))),
    }
}

fn violation(function: &FunctionName, port: &Label, kind: TypeErrorKind, message: String) -> ExecErrorKind {
    ExecErrorKind::OutputTypeViolation {
        function: function.clone(),
        port: port.clone(),
        error: TypeError {
            kind,
            location: Location::Value("/".into()),
            expected: None,
            actual: None,
            message,
        },
    }
}

impl<'a> Engine<'a> {
    pub fn new(index: &'a FunctionIndex, config: &'a ExecConfig, control: Receiver<Control>) -> Self {
        let (done_tx, done_rx) = crossbeam_channel::unbounded();
        Engine {
            index,
            config,
            control,
            types: TypeCache::new(index.signature()),
            state: State {
                frames: BTreeMap::new(),
                root: 0,
                next_id: 0,
            },
            ready: VecDeque::new(),
            queued: HashSet::new(),
            rng: match config.order {
                FireOrder::Fifo => None,
                FireOrder::Seeded(s) => Some(ChaCha8Rng::seed_from_u64(s)),
            },
            in_flight: BTreeMap::new(),
            next_call: 0,
            done_tx,
            done_rx,
            #[cfg(feature = "parallel")]
            pool: None,
            stats: Stats::default(),
            result: None,
        }
    }

    pub fn run_plan(mut self, plan: &Plan) -> Outcome {
        self.types.seed(&plan.graph, Arc::clone(&plan.inferred));
        let started = self.spawn(Arc::clone(&plan.graph), &plan.inputs, None, None);
        self.state.root = 0;
        match started {
            Ok(_) => self.drive(),
            Err(e) => self.fail(e),
        }
    }

    pub fn run_state(mut self, state: State) -> Outcome {
        self.state = state;
        self.stats.peak_frames = self.state.frames.len();
        let mut ready = Vec::new();
        for f in self.state.frames.values() {
            for n in f.graph.nodes() {
                if n.kind != NodeKind::Input && f.is_ready(n.id) {
                    ready.push((f.id, n.id));
                }
            }
        }
        for (f, n) in ready {
            self.enqueue(f, n);
        }
        if let Some(cap) = self.config.max_loop_iters {
            let over = self
                .state
                .frames
                .values()
                .find(|f| f.loop_state.as_ref().is_some_and(|l| l.iter > cap))
                .and_then(|f| f.parent);
            if let Some((pf, pn)) = over {
                let e = self.error(pf, pn, ExecErrorKind::MaxIterations(cap));
                return self.fail(e);
            }
        }
        self.drive()
    }

    fn snapshot(&self) -> Vec<u8> {
        checkpoint::encode(&self.state, &self.in_flight)
    }

    fn fail(self, e: ExecError) -> Outcome {
        let checkpoint = if self.state.frames.is_empty() { None } else { Some(self.snapshot()) };
        Outcome {
            result: Err(e),
            stats: self.stats,
            checkpoint,
        }
    }

    fn on_control(&mut self, c: Control) -> Result<(), ExecError> {
        match c {
            Control::Cancel => Err(ExecError::cancelled()),
            Control::Checkpoint(reply) => {
                let _ = reply.send(self.snapshot());
                Ok(())
            }
        }
    }

    fn drive(mut self) -> Outcome {
        match self.drive_inner() {
            Ok(outputs) => Outcome {
                result: Ok(outputs),
                stats: self.stats,
                checkpoint: None,
            },
            Err(e) => self.fail(e),
        }
    }

    fn drive_inner(&mut self) -> Result<Ports, ExecError> {
        loop {
            if let Some(out) = self.result.take() {
                return Ok(out);
            }
            while let Ok(c) = self.control.try_recv() {
                self.on_control(c)?;
            }
            while let Ok(c) = self.done_rx.try_recv() {
                self.complete_call(c)?;
            }
            if self.result.is_some() {
                continue;
            }
            if let Some((f, n)) = self.pick() {
                self.fire(f, n)?;
                if self.result.is_none() && self.config.checkpoint_after_fires.contains(&self.stats.fires) {
                    self.emit_checkpoint(CheckpointReason::AfterFire(self.stats.fires));
                }
                continue;
            }
            if self.in_flight.is_empty() {
                return Err(ExecError {
                    kind: ExecErrorKind::Internal("no node can fire and nothing is in flight".into()),
                    path: Vec::new(),
                });
            }
            crossbeam_channel::select! {
                recv(self.done_rx) -> c => {
                    let c = c.expect("engine holds a sender");
                    self.complete_call(c)?;
                }
                recv(self.control) -> c => match c {
                    Ok(c) => self.on_control(c)?,
                    // Nobody can cancel us any more; just wait for calls.
                    Err(_) => {
                        let c = self.done_rx.recv().expect("engine holds a sender");
                        self.complete_call(c)?;
                    }
                },
            }
        }
    }

    fn emit_checkpoint(&self, reason: CheckpointReason) {
        if let Some(hook) = &self.config.on_checkpoint {
            hook(reason, self.snapshot());
        }
    }

    fn inline(&self) -> bool {
        !cfg!(feature = "parallel") || self.config.max_concurrency <= 1
    }

    fn is_worker_call(&self, f: FrameId, n: NodeId) -> bool {
        let Some(frame) = self.state.frames.get(&f) else { return false };
        match frame.graph.node(n).map(|n| &n.kind) {
            Some(NodeKind::Function(name)) => matches!(self.index.binding(name), Some(Binding::Worker(_))),
            _ => false,
        }
    }

    fn pick(&mut self) -> Option<(FrameId, NodeId)> {
        let capacity = self.inline() || self.in_flight.len() < self.config.max_concurrency;
        let eligible: Vec<usize> = (0..self.ready.len())
            .filter(|&i| {
                let (f, n) = self.ready[i];
                capacity || !self.is_worker_call(f, n)
            })
            .collect();
        if eligible.is_empty() {
            return None;
        }
        let i = match &mut self.rng {
            None => eligible[0],
            Some(rng) => eligible[rng.random_range(0..eligible.len())],
        };
        let item = self.ready.remove(i).expect("index in range");
        self.queued.remove(&item);
        Some(item)
    }

    fn enqueue(&mut self, f: FrameId, n: NodeId) {
        if self.queued.insert((f, n)) {
            self.ready.push_back((f, n));
        }
    }

    fn error(&self, f: FrameId, n: NodeId, kind: ExecErrorKind) -> ExecError {
        ExecError {
            kind,
            path: self.state.path(f, n),
        }
    }

    fn internal(&self, f: FrameId, n: NodeId, msg: impl Into<String>) -> ExecError {
        self.error(f, n, ExecErrorKind::Internal(msg.into()))
    }

    fn spawn(&mut self, graph: Arc<Graph>, inputs: &Ports, parent: Option<(FrameId, NodeId)>, loop_state: Option<LoopState>) -> Result<FrameId, ExecError> {
        let id = self.state.next_id;
        self.state.next_id += 1;
        let mut frame = Frame::new(id, graph, parent);
        frame.loop_state = loop_state;
        self.state.frames.insert(id, frame);
        self.stats.activations += 1;
        self.stats.peak_frames = self.stats.peak_frames.max(self.state.frames.len());
        self.start_frame(id, inputs)?;
        Ok(id)
    }

    /// Fills the Input node's edges and queues everything that can fire.
    fn start_frame(&mut self, id: FrameId, inputs: &Ports) -> Step {
        let frame = self.state.frames.get_mut(&id).expect("frame exists");
        let graph = Arc::clone(&frame.graph);
        let mut missing = None;
        if let Some(input) = graph.input_node() {
            frame.fired.insert(input);
            for (i, e) in graph.outgoing(input) {
                match inputs.get(&e.src.port) {
                    Some(v) => frame.slots[i] = Slot::Full(v.clone()),
                    None => missing = Some((input, e.src.port.clone())),
                }
            }
        }
        if let Some((n, port)) = missing {
            return Err(self.internal(id, n, format!("no value supplied for input {port}")));
        }
        let ready: Vec<NodeId> = graph
            .nodes()
            .iter()
            .filter(|n| n.kind != NodeKind::Input && frame.is_ready(n.id))
            .map(|n| n.id)
            .collect();
        for n in ready {
            self.enqueue(id, n);
        }
        Ok(())
    }

    fn fire(&mut self, fid: FrameId, nid: NodeId) -> Step {
        let Some(frame) = self.state.frames.get_mut(&fid) else { return Ok(()) };
        if frame.fired.contains(&nid) {
            return Ok(());
        }
        let graph = Arc::clone(&frame.graph);
        let mut inputs = Ports::new();
        let mut consumed = Vec::new();
        let mut unsafe_fire = false;
        for (i, e) in graph.incoming(nid) {
            match std::mem::replace(&mut frame.slots[i], Slot::Consumed) {
                Slot::Full(v) => {
                    consumed.push((i, v.clone()));
                    inputs.insert(e.dst.port.clone(), v);
                }
                other => {
                    frame.slots[i] = other;
                    unsafe_fire = true;
                }
            }
        }
        if unsafe_fire {
            for (i, v) in consumed {
                frame.slots[i] = Slot::Full(v);
            }
            self.stats.unsafe_fires += 1;
            return Err(self.internal(fid, nid, "node fired before its inputs were ready"));
        }
        frame.fired.insert(nid);
        self.stats.fires += 1;

        let node = graph.node(nid).expect("queued nodes exist");
        match &node.kind {
            NodeKind::Input => Ok(()),
            NodeKind::Output => self.complete_frame(fid, inputs),
            NodeKind::Const(v) => self.deliver(fid, nid, &Ports::from([(Label::from_static(ports::VALUE), v.clone())])),
            NodeKind::Tag(t) => {
                let v = inputs.remove(ports::VALUE).ok_or_else(|| self.internal(fid, nid, "tag without input"))?;
                self.deliver(fid, nid, &Ports::from([(Label::from_static(ports::VALUE), Value::variant(t.clone(), v))]))
            }
            NodeKind::Match => {
                let (tag, inner) = match inputs.remove(ports::VARIANT) {
                    Some(Value::Variant(tag, inner)) => (tag, inner),
                    _ => return Err(self.internal(fid, nid, "match input is not a variant")),
                };
                let handler = match inputs.get(&tag) {
                    Some(Value::Graph(g)) => Arc::clone(g),
                    Some(_) => return Err(self.internal(fid, nid, "match handler is not a graph")),
                    None => return Err(self.error(fid, nid, ExecErrorKind::UnhandledTag(tag))),
                };
                let plugged = Ports::from([(Label::from_static(ports::VALUE), (*inner).clone())]);
                let thunk = builtins::partial_graph(&handler, &plugged).map_err(|error| {
                    self.error(fid, nid, ExecErrorKind::Builtin { function: FunctionName::builtin("partial"), error })
                })?;
                self.deliver(fid, nid, &Ports::from([(Label::from_static(ports::THUNK), Value::graph(thunk))]))
            }
            NodeKind::Box { graph: sub, .. } => self.spawn(Arc::clone(sub), &inputs, Some((fid, nid)), None).map(|_| ()),
            NodeKind::Function(f) => match self.index.binding(f) {
                Some(Binding::Builtin) => self.builtin(fid, nid, f, inputs),
                Some(Binding::Worker(w)) => self.call_worker(fid, nid, f, w, inputs, consumed),
                None => Err(self.internal(fid, nid, format!("no binding for {f}"))),
            },
        }
    }

    fn take_graph(&self, fid: FrameId, nid: NodeId, f: &FunctionName, inputs: &mut Ports, port: &'static str) -> Result<Arc<Graph>, ExecError> {
        match inputs.remove(port) {
            Some(Value::Graph(g)) => Ok(g),
            other => Err(self.error(
                fid,
                nid,
                ExecErrorKind::Builtin {
                    function: f.clone(),
                    error: match other {
                        None => BuiltinError::MissingInput(Label::from_static(port)),
                        Some(v) => BuiltinError::BadInput {
                            port: Label::from_static(port),
                            expected: "Graph",
                            found: v.kind_name(),
                        },
                    },
                },
            )),
        }
    }

    fn builtin(&mut self, fid: FrameId, nid: NodeId, f: &FunctionName, mut inputs: Ports) -> Step {
        let decl = builtins::lookup(&f.name).ok_or_else(|| self.internal(fid, nid, format!("{f} is not a builtin")))?;
        match decl.implementation {
            Implementation::Host(h) => {
                let out = h(&inputs).map_err(|error| {
                    self.error(fid, nid, ExecErrorKind::Builtin { function: f.clone(), error })
                })?;
                if cfg!(debug_assertions) {
                    self.check_outputs(fid, nid, f, &out)?;
                }
                self.deliver(fid, nid, &out)
            }
            Implementation::Executor => match f.name.as_str() {
                "eval" => {
                    let thunk = self.take_graph(fid, nid, f, &mut inputs, ports::THUNK)?;
                    self.spawn(thunk, &inputs, Some((fid, nid)), None).map(|_| ())
                }
                "partial" => {
                    let thunk = self.take_graph(fid, nid, f, &mut inputs, ports::THUNK)?;
                    let g = builtins::partial_graph(&thunk, &inputs).map_err(|error| {
                        self.error(fid, nid, ExecErrorKind::Builtin { function: f.clone(), error })
                    })?;
                    self.deliver(fid, nid, &Ports::from([(Label::from_static(ports::VALUE), Value::graph(g))]))
                }
                "loop" => {
                    let body = self.take_graph(fid, nid, f, &mut inputs, "body")?;
                    let v = inputs.remove(ports::VALUE).ok_or_else(|| self.internal(fid, nid, "loop without value"))?;
                    if let Some(cap) = self.config.max_loop_iters {
                        if cap == 0 {
                            return Err(self.error(fid, nid, ExecErrorKind::MaxIterations(cap)));
                        }
                    }
                    let state = LoopState { iter: 1, value: v.clone() };
                    let id = self.spawn(body, &Ports::from([(Label::from_static(ports::VALUE), v)]), Some((fid, nid)), Some(state))?;
                    if self.config.checkpoint_loop_iterations {
                        self.emit_checkpoint(CheckpointReason::LoopIteration { frame: id, iter: 1 });
                    }
                    Ok(())
                }
                other => Err(self.internal(fid, nid, format!("builtin/{other} has no executor rule"))),
            },
        }
    }

    fn call_worker(&mut self, fid: FrameId, nid: NodeId, f: &FunctionName, w: usize, inputs: Ports, consumed: Vec<(usize, Value)>) -> Step {
        let worker = Arc::clone(self.index.worker(w).1);
        let ctx = self.config.context.clone();
        if self.inline() {
            let r = run_worker(worker.as_ref(), f, inputs, &ctx);
            return self.finish_call(fid, nid, f, r);
        }
        #[cfg(feature = "parallel")]
        {
            let call = self.next_call;
            self.next_call += 1;
            self.in_flight.insert((fid, nid), InFlight { call, consumed });
            self.stats.peak_in_flight = self.stats.peak_in_flight.max(self.in_flight.len());
            let threads = self.config.max_concurrency.clamp(1, 256);
            let pool = self.pool.get_or_insert_with(|| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .thread_name(|i| format!("tk-worker-{i}"))
                    .build()
                    .expect("worker pool")
            });
            let tx = self.done_tx.clone();
            let function = f.clone();
            pool.spawn(move || {
                let result = run_worker(worker.as_ref(), &function, inputs, &ctx);
                let _ = tx.send(Completion { frame: fid, node: nid, call, function, result });
            });
        }
        #[cfg(not(feature = "parallel"))]
        let _ = consumed;
        Ok(())
    }

    fn complete_call(&mut self, c: Completion) -> Step {
        match self.in_flight.get(&(c.frame, c.node)) {
            Some(inf) if inf.call == c.call => {}
            // Abandoned: its frame finished, reset or was cancelled.
            _ => return Ok(()),
        }
        self.in_flight.remove(&(c.frame, c.node));
        self.finish_call(c.frame, c.node, &c.function, c.result)
    }

    fn finish_call(&mut self, fid: FrameId, nid: NodeId, f: &FunctionName, r: Result<Ports, WorkerError>) -> Step {
        let out = r.map_err(|error| self.error(fid, nid, ExecErrorKind::Worker { function: f.clone(), error }))?;
        self.check_outputs(fid, nid, f, &out)?;
        self.deliver(fid, nid, &out)
    }

    /// Runtime conformance of a function's outputs: the advertised port set
    /// and the value on each consumed port against its edge type.
    fn check_outputs(&self, fid: FrameId, nid: NodeId, f: &FunctionName, out: &Ports) -> Step {
        let frame = self.state.frames.get(&fid).expect("frame exists");
        let graph = Arc::clone(&frame.graph);
        let fail = |kind| Err(self.error(fid, nid, kind));
        if let Some(scheme) = self.index.signature().get(f) {
            let row = &scheme.body.outputs;
            for (l, t) in &row.entries {
                match out.get(l) {
                    None => return fail(violation(f, l, TypeErrorKind::MissingLabel, format!("no value for output {l}"))),
                    Some(v) if t.is_ground() => {
                        if let Err(error) = check_value(v, t, &self.types) {
                            return fail(ExecErrorKind::OutputTypeViolation { function: f.clone(), port: l.clone(), error });
                        }
                    }
                    Some(_) => {}
                }
            }
            if row.is_closed() {
                if let Some(l) = out.keys().find(|l| !row.entries.contains_key(*l)) {
                    return fail(violation(f, l, TypeErrorKind::MissingLabel, format!("unexpected output {l}")));
                }
            }
        }
        let types = self.types.edge_types(&graph);
        for (i, e) in graph.outgoing(nid) {
            let Some(v) = out.get(&e.src.port) else {
                return fail(violation(f, &e.src.port, TypeErrorKind::MissingLabel, format!("no value for output {}", e.src.port)));
            };
            if let Some(t) = types.as_ref().map(|ts| &ts[i]) {
                if let Err(error) = check_value(v, t, &self.types) {
                    return fail(ExecErrorKind::OutputTypeViolation { function: f.clone(), port: e.src.port.clone(), error });
                }
            }
        }
        Ok(())
    }

    /// Writes a node's outputs onto its outgoing edges and queues consumers.
    fn deliver(&mut self, fid: FrameId, nid: NodeId, out: &Ports) -> Step {
        let Some(frame) = self.state.frames.get_mut(&fid) else { return Ok(()) };
        let graph = Arc::clone(&frame.graph);
        let mut targets = Vec::new();
        let mut missing = None;
        for (i, e) in graph.outgoing(nid) {
            match out.get(&e.src.port) {
                Some(v) => {
                    if frame.slots[i] != Slot::Empty {
                        self.stats.slot_violations += 1;
                    }
                    frame.slots[i] = Slot::Full(v.clone());
                    targets.push(e.dst.node);
                }
                None => missing = Some(e.src.port.clone()),
            }
        }
        if let Some(p) = missing {
            return Err(self.internal(fid, nid, format!("no value produced for port {p}")));
        }
        for n in targets {
            if self.state.frames[&fid].is_ready(n) {
                self.enqueue(fid, n);
            }
        }
        Ok(())
    }

    fn descendants(&self, id: FrameId) -> Vec<FrameId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(f) = stack.pop() {
            for c in self.state.children(f) {
                out.push(c.id);
                stack.push(c.id);
            }
        }
        out
    }

    fn forget(&mut self, ids: &[FrameId]) {
        let set: HashSet<FrameId> = ids.iter().copied().collect();
        self.ready.retain(|(f, _)| !set.contains(f));
        self.queued.retain(|(f, _)| !set.contains(f));
        self.in_flight.retain(|(f, _), _| !set.contains(f));
    }

    fn remove_frame(&mut self, id: FrameId) {
        let mut ids = self.descendants(id);
        ids.push(id);
        for f in &ids {
            self.state.frames.remove(f);
        }
        self.forget(&ids);
    }

    fn complete_frame(&mut self, fid: FrameId, mut outputs: Ports) -> Step {
        let frame = &self.state.frames[&fid];
        let parent = frame.parent;
        if let (Some(ls), Some((pf, pn))) = (frame.loop_state.clone(), parent) {
            let (tag, inner) = match outputs.remove(ports::VALUE) {
                Some(Value::Variant(tag, inner)) => (tag, (*inner).clone()),
                _ => return Err(self.internal(pf, pn, "loop body did not return a variant")),
            };
            return match tag.as_str() {
                "continue" => self.next_iteration(fid, inner, ls.iter + 1),
                "break" => {
                    self.remove_frame(fid);
                    self.deliver(pf, pn, &Ports::from([(Label::from_static(ports::VALUE), inner)]))
                }
                other => Err(self.internal(pf, pn, format!("loop body returned tag {other}"))),
            };
        }
        self.remove_frame(fid);
        match parent {
            None => {
                self.result = Some(outputs);
                Ok(())
            }
            Some((pf, pn)) => self.deliver(pf, pn, &outputs),
        }
    }

    /// Reuses the loop frame for the next body activation.
    fn next_iteration(&mut self, fid: FrameId, v: Value, iter: u64) -> Step {
        let stale = self.descendants(fid);
        for f in &stale {
            self.state.frames.remove(f);
        }
        let mut forget = stale;
        forget.push(fid);
        self.forget(&forget);
        let frame = self.state.frames.get_mut(&fid).expect("loop frame exists");
        frame.slots.iter_mut().for_each(|s| *s = Slot::Empty);
        frame.fired.clear();
        frame.loop_state = Some(LoopState { iter, value: v.clone() });
        let parent = frame.parent.expect("loop frames have a parent");
        self.stats.activations += 1;
        self.start_frame(fid, &Ports::from([(Label::from_static(ports::VALUE), v)]))?;
        if let Some(cap) = self.config.max_loop_iters {
            if iter > cap {
                return Err(self.error(parent.0, parent.1, ExecErrorKind::MaxIterations(cap)));
            }
        }
        if self.config.checkpoint_loop_iterations {
            self.emit_checkpoint(CheckpointReason::LoopIteration { frame: fid, iter });
        }
        Ok(())
    }
}
