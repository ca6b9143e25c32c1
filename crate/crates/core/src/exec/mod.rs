//! Graph execution: preparation, the firing loop, jobs and checkpoints.

mod checkpoint;
mod engine;
mod state;
mod typecache;

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crossbeam_channel::{Receiver, Sender};
use thiserror::Error;

pub use checkpoint::{checkpoint_json, graph_hash, restore, RestoreError};
pub use state::{Frame, FrameId, LoopState, Slot, State};

use crate::builtins::BuiltinError;
use crate::graph::{Graph, InvalidGraph, NodeId, NodeKind};
use crate::types::{infer_graph, infer_graph_with, InferError, InferOptions, Inferred, TypeError, TypeErrorKind};
use crate::value::{FunctionName, Label, Ports, Value};
use crate::worker::{FunctionIndex, RunContext, WorkerError};

/// How the coordinator picks among ready nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FireOrder {
    Fifo,
    /// Uniformly random ready node, from a seeded generator.
    Seeded(u64),
}

/// Why a checkpoint was emitted to [`ExecConfig::on_checkpoint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointReason {
    /// A loop frame is about to start body activation `iter`.
    LoopIteration { frame: FrameId, iter: u64 },
    /// Right after the `n`th node fire.
    AfterFire(u64),
}

pub type CheckpointHook = Arc<dyn Fn(CheckpointReason, Vec<u8>) + Send + Sync>;

#[derive(Clone)]
pub struct ExecConfig {
    /// Most worker calls in flight at once. 1 runs every call inline on the
    /// coordinator, in a deterministic order.
    pub max_concurrency: usize,
    /// Cap on body activations per loop node; `None` is unbounded.
    pub max_loop_iters: Option<u64>,
    pub order: FireOrder,
    pub context: RunContext,
    pub checkpoint_loop_iterations: bool,
    pub checkpoint_after_fires: BTreeSet<u64>,
    pub on_checkpoint: Option<CheckpointHook>,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            max_concurrency: 8,
            max_loop_iters: None,
            order: FireOrder::Fifo,
            context: RunContext::default(),
            checkpoint_loop_iterations: false,
            checkpoint_after_fires: BTreeSet::new(),
            on_checkpoint: None,
        }
    }
}

impl std::fmt::Debug for ExecConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExecConfig")
            .field("max_concurrency", &self.max_concurrency)
            .field("max_loop_iters", &self.max_loop_iters)
            .field("order", &self.order)
            .finish_non_exhaustive()
    }
}

impl ExecConfig {
    pub fn sequential() -> Self {
        ExecConfig {
            max_concurrency: 1,
            ..Self::default()
        }
    }

    pub fn seeded(seed: u64) -> Self {
        ExecConfig {
            max_concurrency: 1,
            order: FireOrder::Seeded(seed),
            ..Self::default()
        }
    }
}

/// Scheduler instrumentation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stats {
    pub fires: u64,
    /// Frames created, counting each loop-body reset as a new activation.
    pub activations: u64,
    pub peak_frames: usize,
    pub peak_in_flight: usize,
    /// Fires attempted with an input slot not Full. Always zero unless the
    /// scheduler is broken.
    pub unsafe_fires: u64,
    /// Slot writes or reads outside Empty -> Full -> Consumed.
    pub slot_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecErrorKind {
    #[error("{function}: {error}")]
    Worker { function: FunctionName, error: WorkerError },
    #[error("{function}: {error}")]
    Builtin { function: FunctionName, error: BuiltinError },
    #[error("{function} output {port}: {error}")]
    OutputTypeViolation {
        function: FunctionName,
        port: Label,
        error: TypeError,
    },
    #[error("loop exceeded {0} iterations")]
    MaxIterations(u64),
    #[error("match has no handler for tag {0:?}")]
    UnhandledTag(Label),
    #[error("cancelled")]
    Cancelled,
    #[error("internal error: {0}")]
    Internal(String),
}

impl ExecErrorKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExecErrorKind::Worker { .. } => "WorkerError",
            ExecErrorKind::Builtin { .. } => "WorkerError",
            ExecErrorKind::OutputTypeViolation { .. } => "OutputTypeViolation",
            ExecErrorKind::MaxIterations(_) => "MaxIterations",
            ExecErrorKind::UnhandledTag(_) => "UnhandledTag",
            ExecErrorKind::Cancelled => "Cancelled",
            ExecErrorKind::Internal(_) => "Internal",
        }
    }
}

/// An execution failure located by the chain of nodes from the root graph
/// down to the failing node.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind}{}", if path.is_empty() { String::new() } else { format!(" at {}", render_path(path)) })]
pub struct ExecError {
    pub kind: ExecErrorKind,
    pub path: Vec<NodeId>,
}

pub(crate) fn render_path(path: &[NodeId]) -> String {
    path.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("/")
}

impl ExecError {
    pub fn cancelled() -> Self {
        ExecError {
            kind: ExecErrorKind::Cancelled,
            path: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrepareError {
    #[error(transparent)]
    Invalid(#[from] InvalidGraph),
    #[error("unknown function {0}")]
    UnknownFunction(FunctionName),
    #[error("inputs do not match the graph: {}", join(.0))]
    InputMismatch(Vec<TypeError>),
    #[error("{}", join(.0))]
    Types(Vec<TypeError>),
}

fn join(errs: &[TypeError]) -> String {
    errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

impl PrepareError {
    pub fn type_errors(&self) -> &[TypeError] {
        match self {
            PrepareError::InputMismatch(e) | PrepareError::Types(e) => e,
            _ => &[],
        }
    }
}

/// A type-checked graph with inputs, ready to run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub graph: Arc<Graph>,
    pub inputs: Ports,
    pub inferred: Arc<Inferred>,
}

fn first_unknown(g: &Graph, index: &FunctionIndex) -> Option<FunctionName> {
    fn in_value(v: &Value, index: &FunctionIndex) -> Option<FunctionName> {
        match v {
            Value::Graph(g) => first_unknown(g, index),
            Value::Pair(p) => in_value(&p.0, index).or_else(|| in_value(&p.1, index)),
            Value::Vec(items) => items.iter().find_map(|x| in_value(x, index)),
            Value::Map(m) => m.iter().find_map(|(k, x)| in_value(k, index).or_else(|| in_value(x, index))),
            Value::Struct(fields) => fields.values().find_map(|x| in_value(x, index)),
            Value::Variant(_, x) => in_value(x, index),
            _ => None,
        }
    }
    g.nodes().iter().find_map(|n| match &n.kind {
        NodeKind::Function(f) if index.binding(f).is_none() => Some(f.clone()),
        NodeKind::Box { graph, .. } => first_unknown(graph, index),
        NodeKind::Const(v) => in_value(v, index),
        _ => None,
    })
}

/// Type-checks `g` against `index` and `inputs` before anything runs.
pub fn prepare(g: &Graph, inputs: Ports, index: &FunctionIndex) -> Result<Plan, PrepareError> {
    if let Some(f) = first_unknown(g, index) {
        return Err(PrepareError::UnknownFunction(f));
    }
    let inferred = infer_graph(g, index.signature()).map_err(|e| match e {
        InferError::Invalid(e) => PrepareError::Invalid(e),
        InferError::Types(errs) => {
            match errs.iter().find(|e| e.kind == TypeErrorKind::UnknownFunction) {
                Some(e) => match e.actual.as_deref().and_then(|s| s.parse().ok()) {
                    Some(f) => PrepareError::UnknownFunction(f),
                    None => PrepareError::Types(errs),
                },
                None => PrepareError::Types(errs),
            }
        }
    })?;
    // Inputs only narrow the graph's own type, so a failure now is theirs.
    let opts = InferOptions {
        inputs: Some(inputs.clone()),
        ..InferOptions::default()
    };
    let inferred = match infer_graph_with(g, index.signature(), &opts) {
        Ok(narrowed) => narrowed,
        Err(InferError::Types(errs)) => return Err(PrepareError::InputMismatch(errs)),
        Err(InferError::Invalid(_)) => inferred,
    };
    Ok(Plan {
        graph: Arc::new(g.clone()),
        inputs,
        inferred: Arc::new(inferred),
    })
}

/// How a run ended.
#[derive(Debug)]
pub struct Outcome {
    pub result: Result<Ports, ExecError>,
    pub stats: Stats,
    /// State at the end of an unfinished run (cancelled or failed).
    pub checkpoint: Option<Vec<u8>>,
}

/// Runs `plan` to completion on the calling thread.
pub fn run(plan: &Plan, index: &FunctionIndex, config: &ExecConfig) -> Outcome {
    let (_tx, rx) = crossbeam_channel::unbounded();
    engine::Engine::new(index, config, rx).run_plan(plan)
}

/// Continues a restored state.
pub fn resume(state: State, index: &FunctionIndex, config: &ExecConfig) -> Outcome {
    let (_tx, rx) = crossbeam_channel::unbounded();
    engine::Engine::new(index, config, rx).run_state(state)
}

pub(crate) enum Control {
    Cancel,
    Checkpoint(Sender<Vec<u8>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobStatus {
    Running,
    Done(Ports),
    Failed(ExecError),
    Cancelled,
}

impl JobStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, JobStatus::Running)
    }
}

struct JobShared {
    status: JobStatus,
    stats: Option<Stats>,
    checkpoint: Option<Vec<u8>>,
}

/// A run on its own coordinator thread.
pub struct Job {
    control: Sender<Control>,
    shared: Arc<Mutex<JobShared>>,
    done: Receiver<()>,
    thread: Mutex<Option<JoinHandle<()>>>,
}

enum Start {
    Plan(Plan),
    State(State),
}

impl Job {
    pub fn start(plan: Plan, index: Arc<FunctionIndex>, config: ExecConfig) -> Job {
        Self::spawn(Start::Plan(plan), index, config)
    }

    pub fn resume(state: State, index: Arc<FunctionIndex>, config: ExecConfig) -> Job {
        Self::spawn(Start::State(state), index, config)
    }

    fn spawn(start: Start, index: Arc<FunctionIndex>, config: ExecConfig) -> Job {
        let (control, rx) = crossbeam_channel::unbounded();
        let (done_tx, done) = crossbeam_channel::bounded(1);
        let shared = Arc::new(Mutex::new(JobShared {
            status: JobStatus::Running,
            stats: None,
            checkpoint: None,
        }));
        let sh = Arc::clone(&shared);
        let thread = std::thread::spawn(move || {
            let engine = engine::Engine::new(&index, &config, rx);
            let outcome = match start {
                Start::Plan(p) => engine.run_plan(&p),
                Start::State(s) => engine.run_state(s),
            };
            let mut g = sh.lock().expect("job state lock");
            g.status = match outcome.result {
                Ok(p) => JobStatus::Done(p),
                Err(e) if e.kind == ExecErrorKind::Cancelled => JobStatus::Cancelled,
                Err(e) => JobStatus::Failed(e),
            };
            g.stats = Some(outcome.stats);
            g.checkpoint = outcome.checkpoint;
            drop(g);
            let _ = done_tx.send(());
        });
        Job {
            control,
            shared,
            done,
            thread: Mutex::new(Some(thread)),
        }
    }

    pub fn status(&self) -> JobStatus {
        self.shared.lock().expect("job state lock").status.clone()
    }

    pub fn stats(&self) -> Option<Stats> {
        self.shared.lock().expect("job state lock").stats.clone()
    }

    /// Asks the coordinator to stop firing. No effect on a finished job.
    pub fn cancel(&self) {
        let _ = self.control.send(Control::Cancel);
    }

    /// Snapshot of a running job, or of the final state of an unfinished one.
    /// `None` once the job has completed successfully.
    pub fn checkpoint(&self) -> Option<Vec<u8>> {
        let (tx, rx) = crossbeam_channel::bounded(1);
        if self.control.send(Control::Checkpoint(tx)).is_ok() {
            crossbeam_channel::select! {
                recv(rx) -> bytes => if let Ok(b) = bytes { return Some(b) },
                recv(self.done) -> _ => {},
            }
        }
        self.wait();
        self.shared.lock().expect("job state lock").checkpoint.clone()
    }

    /// Blocks until the job is terminal.
    pub fn wait(&self) -> JobStatus {
        if let Some(t) = self.thread.lock().expect("job thread lock").take() {
            let _ = t.join();
        }
        self.status()
    }

    pub fn wait_timeout(&self, timeout: std::time::Duration) -> Option<JobStatus> {
        let status = self.status();
        if status.is_terminal() {
            return Some(status);
        }
        match self.done.recv_timeout(timeout) {
            Ok(()) | Err(crossbeam_channel::RecvTimeoutError::Disconnected) => Some(self.wait()),
            Err(crossbeam_channel::RecvTimeoutError::Timeout) => None,
        }
    }
}
