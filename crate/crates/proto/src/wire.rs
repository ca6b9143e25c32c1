//! JSON bodies of the worker and runtime endpoints.
//!
//! Values, graphs and schemes reuse the canonical encodings of `tk_core::codec`;
//! this module only adds the request/response envelopes around them.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value as Json};
use tk_core::codec::{self, child, field, object, string, DecodeError, Decoded};
use tk_core::exec::{ExecError, ExecErrorKind, PrepareError, RestoreError};
use tk_core::graph::Graph;
use tk_core::types::{Location, TypeError};
use tk_core::value::Ports;
use tk_core::worker::{RunContext, WorkerError};

/// Body of `POST /v1/functions/{ns}/{fname}:run`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub inputs: Ports,
    pub context: RunContext,
}

impl RunRequest {
    pub fn to_json(&self) -> Json {
        json!({ "inputs": codec::ports_to_json(&self.inputs), "context": context_to_json(&self.context) })
    }

    pub fn from_json(j: &Json) -> Decoded<Self> {
        let obj = object(j, "")?;
        Ok(RunRequest {
            inputs: codec::ports_from_json(field(obj, "inputs", "")?, "/inputs")?,
            context: context_from_json(field(obj, "context", "")?, "/context")?,
        })
    }
}

pub fn context_to_json(c: &RunContext) -> Json {
    let mut m = Map::new();
    m.insert("callback".into(), json!(c.callback));
    m.insert("job".into(), json!(c.job));
    if let Some(t) = &c.token {
        m.insert("token".into(), json!(t));
    }
    Json::Object(m)
}

pub fn context_from_json(j: &Json, path: &str) -> Decoded<RunContext> {
    let obj = object(j, path)?;
    let token = match obj.get("token") {
        None | Some(Json::Null) => None,
        Some(t) => Some(string(t, &child(path, "token"))?.to_string()),
    };
    Ok(RunContext {
        callback: string(field(obj, "callback", path)?, &child(path, "callback"))?.to_string(),
        job: string(field(obj, "job", path)?, &child(path, "job"))?.to_string(),
        token,
    })
}

/// `{"outputs": {...}}`, the success body of a run.
pub fn outputs_to_json(p: &Ports) -> Json {
    json!({ "outputs": codec::ports_to_json(p) })
}

pub fn outputs_from_json(j: &Json) -> Decoded<Ports> {
    codec::ports_from_json(field(object(j, "")?, "outputs", "")?, "/outputs")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JobOptions {
    pub max_loop_iters: Option<u64>,
    pub max_concurrency: Option<usize>,
}

impl JobOptions {
    pub fn to_json(&self) -> Json {
        let mut m = Map::new();
        if let Some(n) = self.max_loop_iters {
            m.insert("max_loop_iters".into(), json!(n));
        }
        if let Some(n) = self.max_concurrency {
            m.insert("max_concurrency".into(), json!(n));
        }
        Json::Object(m)
    }

    pub fn from_json(j: &Json, path: &str) -> Decoded<Self> {
        let obj = object(j, path)?;
        let num = |k: &str| -> Decoded<Option<u64>> {
            match obj.get(k) {
                None | Some(Json::Null) => Ok(None),
                Some(n) => n
                    .as_u64()
                    .map(Some)
                    .ok_or_else(|| DecodeError::new(&child(path, k), "expected a non-negative integer")),
            }
        };
        Ok(JobOptions {
            max_loop_iters: num("max_loop_iters")?,
            max_concurrency: num("max_concurrency")?.map(|n| n as usize),
        })
    }
}

/// Body of `POST /v1/jobs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmitRequest {
    pub graph: Graph,
    pub inputs: Ports,
    pub options: JobOptions,
}

impl SubmitRequest {
    pub fn to_json(&self) -> Json {
        json!({
            "graph": codec::graph_to_json(&self.graph),
            "inputs": codec::ports_to_json(&self.inputs),
            "options": self.options.to_json(),
        })
    }

    pub fn from_json(j: &Json) -> Decoded<Self> {
        let obj = object(j, "")?;
        Ok(SubmitRequest {
            graph: codec::graph_from_json(field(obj, "graph", "")?, "/graph")?,
            inputs: match obj.get("inputs") {
                None => Ports::new(),
                Some(p) => codec::ports_from_json(p, "/inputs")?,
            },
            options: match obj.get("options") {
                None => JobOptions::default(),
                Some(o) => JobOptions::from_json(o, "/options")?,
            },
        })
    }
}

/// Body of `POST /v1/jobs:resume`. The checkpoint travels as the JSON
/// document it already is; replacement graphs are keyed by the hash of the
/// graph they replace.
#[derive(Debug, Clone, PartialEq)]
pub struct ResumeRequest {
    pub checkpoint: Json,
    pub graphs: BTreeMap<String, Graph>,
    pub options: JobOptions,
}

impl ResumeRequest {
    pub fn new(checkpoint: &[u8]) -> Decoded<Self> {
        let text = std::str::from_utf8(checkpoint).map_err(|_| DecodeError::new("", "checkpoint is not UTF-8"))?;
        Ok(ResumeRequest {
            checkpoint: codec::parse(text)?,
            graphs: BTreeMap::new(),
            options: JobOptions::default(),
        })
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        codec::canonical(&self.checkpoint).into_bytes()
    }

    pub fn to_json(&self) -> Json {
        let graphs: Map<String, Json> = self.graphs.iter().map(|(h, g)| (h.clone(), codec::graph_to_json(g))).collect();
        json!({ "checkpoint": self.checkpoint, "graphs": graphs, "options": self.options.to_json() })
    }

    pub fn from_json(j: &Json) -> Decoded<Self> {
        let obj = object(j, "")?;
        let mut graphs = BTreeMap::new();
        if let Some(gs) = obj.get("graphs") {
            for (h, g) in object(gs, "/graphs")? {
                graphs.insert(h.clone(), codec::graph_from_json(g, &child("/graphs", h))?);
            }
        }
        Ok(ResumeRequest {
            checkpoint: field(obj, "checkpoint", "")?.clone(),
            graphs,
            options: match obj.get("options") {
                None => JobOptions::default(),
                Some(o) => JobOptions::from_json(o, "/options")?,
            },
        })
    }
}

/// `{"error": {...}}`, the body of every non-2xx response.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    pub locations: Vec<Json>,
    pub detail: Option<Json>,
}

impl std::fmt::Display for ErrorBody {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl ErrorBody {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        ErrorBody {
            kind: kind.into(),
            message: message.into(),
            locations: Vec::new(),
            detail: None,
        }
    }

    pub fn to_json(&self) -> Json {
        json!({ "error": self.inner_json() })
    }

    fn inner_json(&self) -> Json {
        let mut m = Map::new();
        m.insert("kind".into(), json!(self.kind));
        m.insert("message".into(), json!(self.message));
        m.insert("locations".into(), Json::Array(self.locations.clone()));
        if let Some(d) = &self.detail {
            m.insert("detail".into(), d.clone());
        }
        Json::Object(m)
    }

    pub fn from_json(j: &Json) -> Decoded<Self> {
        let obj = object(j, "")?;
        Self::inner_from_json(field(obj, "error", "")?, "/error")
    }

    fn inner_from_json(j: &Json, path: &str) -> Decoded<Self> {
        let e = object(j, path)?;
        Ok(ErrorBody {
            kind: string(field(e, "kind", path)?, &child(path, "kind"))?.to_string(),
            message: string(field(e, "message", path)?, &child(path, "message"))?.to_string(),
            locations: match e.get("locations") {
                None => Vec::new(),
                Some(l) => codec::array(l, &child(path, "locations"))?.clone(),
            },
            detail: e.get("detail").cloned(),
        })
    }

    pub fn from_type_errors(kind: &str, message: String, errors: &[TypeError]) -> Self {
        ErrorBody {
            locations: errors.iter().map(type_error_to_json).collect(),
            ..ErrorBody::new(kind, message)
        }
    }

    pub fn from_prepare(e: &PrepareError) -> Self {
        match e {
            PrepareError::Invalid(inv) => ErrorBody {
                locations: inv.0.iter().map(|s| json!({ "message": s.to_string() })).collect(),
                ..ErrorBody::new("InvalidGraph", e.to_string())
            },
            PrepareError::UnknownFunction(_) => ErrorBody::new("UnknownFunction", e.to_string()),
            PrepareError::InputMismatch(errs) => Self::from_type_errors("InputMismatch", e.to_string(), errs),
            PrepareError::Types(errs) => Self::from_type_errors("TypeError", e.to_string(), errs),
        }
    }

    pub fn from_restore(e: &RestoreError) -> Self {
        match e {
            RestoreError::Decode(_) => ErrorBody::new("DecodeError", e.to_string()),
            RestoreError::Version(_) => ErrorBody::new("UnsupportedVersion", e.to_string()),
            RestoreError::GraphHashMissing(_) => ErrorBody::new("GraphHashMissing", e.to_string()),
            RestoreError::ResumeTypeError { errors, .. } => Self::from_type_errors("ResumeTypeError", e.to_string(), errors),
            RestoreError::Incompatible(_) => ErrorBody::new("IncompatibleCheckpoint", e.to_string()),
        }
    }

    pub fn from_exec(e: &ExecError) -> Self {
        let path: Vec<u32> = e.path.iter().map(|n| n.0).collect();
        let mut body = ErrorBody {
            locations: if path.is_empty() { Vec::new() } else { vec![json!({ "path": path })] },
            ..ErrorBody::new(e.kind.name(), e.to_string())
        };
        match &e.kind {
            ExecErrorKind::Worker { error, .. } => {
                body.kind = worker_error_kind(error).into();
                if let WorkerError::Failed { detail, .. } = error {
                    body.detail = detail.clone();
                }
            }
            ExecErrorKind::OutputTypeViolation { error, .. } => body.locations.push(type_error_to_json(error)),
            _ => {}
        }
        body
    }

    pub fn from_worker(e: &WorkerError) -> Self {
        let mut body = ErrorBody::new(worker_error_kind(e), e.to_string());
        match e {
            WorkerError::Failed { message, detail } => {
                body.message = message.clone();
                body.detail = detail.clone();
            }
            WorkerError::Unreachable(endpoint) => body.detail = Some(json!({ "endpoint": endpoint })),
            WorkerError::Timeout(d) => body.detail = Some(json!({ "seconds": d.as_secs_f64() })),
            _ => {}
        }
        body
    }

    /// The worker-side reading of a failed run, so failures keep their kind
    /// as they travel up a tree of runtimes.
    pub fn to_worker_error(&self) -> WorkerError {
        let detail_str = |k: &str| self.detail.as_ref().and_then(|d| d.get(k)).and_then(Json::as_str).map(str::to_string);
        match self.kind.as_str() {
            "UnknownFunction" => match self.message.rsplit(' ').next().and_then(|n| n.parse().ok()) {
                Some(f) => WorkerError::UnknownFunction(f),
                None => WorkerError::failed(self.message.clone()),
            },
            "Timeout" => {
                let secs = self.detail.as_ref().and_then(|d| d.get("seconds")).and_then(Json::as_f64).unwrap_or(0.0);
                WorkerError::Timeout(std::time::Duration::from_secs_f64(secs))
            }
            "ChildUnreachable" => WorkerError::Unreachable(detail_str("endpoint").unwrap_or_else(|| self.message.clone())),
            "Unauthorized" => WorkerError::Unauthorized(self.message.clone()),
            _ => WorkerError::Failed {
                message: self.message.clone(),
                detail: self.detail.clone(),
            },
        }
    }
}

fn worker_error_kind(e: &WorkerError) -> &'static str {
    match e {
        WorkerError::UnknownFunction(_) => "UnknownFunction",
        WorkerError::Failed { .. } => "FunctionFailed",
        WorkerError::Timeout(_) => "Timeout",
        WorkerError::Unreachable(_) => "ChildUnreachable",
        WorkerError::Unauthorized(_) => "Unauthorized",
    }
}

pub fn location_to_json(l: &Location) -> Json {
    let ids = |p: &[tk_core::graph::NodeId]| p.iter().map(|n| n.0).collect::<Vec<_>>();
    match l {
        Location::Node { path, node, port } => {
            let mut m = Map::new();
            m.insert("path".into(), json!(ids(path)));
            m.insert("node".into(), json!(node.0));
            if let Some(p) = port {
                m.insert("port".into(), json!(p.as_str()));
            }
            Json::Object(m)
        }
        Location::Edge { path, src, dst } => json!({
            "path": ids(path),
            "src": [src.node.0, src.port.as_str()],
            "dst": [dst.node.0, dst.port.as_str()],
        }),
        Location::GraphInput(l) => json!({ "input": l.as_str() }),
        Location::Value(p) => json!({ "value": p }),
    }
}

pub fn type_error_to_json(e: &TypeError) -> Json {
    let mut m = Map::new();
    m.insert("kind".into(), json!(e.kind.as_str()));
    m.insert("at".into(), location_to_json(&e.location));
    m.insert("message".into(), json!(e.message));
    if let Some(x) = &e.expected {
        m.insert("expected".into(), json!(x));
    }
    if let Some(x) = &e.actual {
        m.insert("actual".into(), json!(x));
    }
    Json::Object(m)
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobState {
    Queued,
    Running,
    Done(Ports),
    Failed(ErrorBody),
    Cancelled,
}

impl JobState {
    pub fn name(&self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Done(_) => "done",
            JobState::Failed(_) => "failed",
            JobState::Cancelled => "cancelled",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, JobState::Done(_) | JobState::Failed(_) | JobState::Cancelled)
    }
}

/// Body of `GET /v1/jobs/{id}`.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub id: String,
    pub graph_hash: String,
    pub state: JobState,
}

impl JobRecord {
    pub fn to_json(&self) -> Json {
        let mut m = Map::new();
        m.insert("id".into(), json!(self.id));
        m.insert("graph_hash".into(), json!(self.graph_hash));
        m.insert("status".into(), json!(self.state.name()));
        match &self.state {
            JobState::Done(p) => {
                m.insert("outputs".into(), codec::ports_to_json(p));
            }
            JobState::Failed(e) => {
                m.insert("error".into(), e.inner_json());
            }
            _ => {}
        }
        Json::Object(m)
    }

    pub fn from_json(j: &Json) -> Decoded<Self> {
        let obj = object(j, "")?;
        let text = |k: &str| -> Decoded<String> { Ok(string(field(obj, k, "")?, &child("", k))?.to_string()) };
        let state = match text("status")?.as_str() {
            "queued" => JobState::Queued,
            "running" => JobState::Running,
            "done" => JobState::Done(codec::ports_from_json(field(obj, "outputs", "")?, "/outputs")?),
            "failed" => JobState::Failed(ErrorBody::inner_from_json(field(obj, "error", "")?, "/error")?),
            "cancelled" => JobState::Cancelled,
            other => return Err(DecodeError::new("/status", format!("unknown status {other:?}"))),
        };
        Ok(JobRecord {
            id: text("id")?,
            graph_hash: text("graph_hash")?,
            state,
        })
    }
}

/// `{"id": ...}`, returned by submit and resume.
pub fn job_id_from_json(j: &Json) -> Decoded<String> {
    Ok(string(field(object(j, "")?, "id", "")?, "/id")?.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tk_core::corpus;
    use tk_core::value::{Label, Value};

    #[test]
    fn run_request_shape() {
        let r = RunRequest {
            inputs: Ports::from([(Label::from_static("a"), Value::Float(2.0))]),
            context: RunContext {
                callback: "http://127.0.0.1:1".into(),
                job: "j".into(),
                token: None,
            },
        };
        let text = codec::canonical(&r.to_json());
        assert_eq!(text, r#"{"context":{"callback":"http://127.0.0.1:1","job":"j"},"inputs":{"a":{"float":2.0}}}"#);
        assert_eq!(RunRequest::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn submit_round_trip() {
        let s = SubmitRequest {
            graph: corpus::zexp_to_parity(),
            inputs: Ports::from([(Label::from_static("x"), Value::Float(0.2))]),
            options: JobOptions {
                max_loop_iters: Some(5),
                max_concurrency: None,
            },
        };
        let back = SubmitRequest::from_json(&s.to_json()).unwrap();
        assert_eq!(codec::canonical(&back.to_json()), codec::canonical(&s.to_json()));
    }

    #[test]
    fn record_round_trip() {
        for state in [
            JobState::Running,
            JobState::Cancelled,
            JobState::Done(Ports::from([(Label::from_static("v"), Value::Int(1))])),
            JobState::Failed(ErrorBody::new("MaxIterations", "loop exceeded 2 iterations")),
        ] {
            let r = JobRecord {
                id: "x".into(),
                graph_hash: "00".into(),
                state,
            };
            assert_eq!(JobRecord::from_json(&r.to_json()).unwrap(), r);
        }
    }

    #[test]
    fn worker_errors_survive_the_wire() {
        let errs = [
            WorkerError::UnknownFunction("m/f".parse().unwrap()),
            WorkerError::Timeout(std::time::Duration::from_millis(1500)),
            WorkerError::Unreachable("http://127.0.0.1:9".into()),
            WorkerError::Failed {
                message: "boom".into(),
                detail: Some(json!({ "line": 3 })),
            },
        ];
        for e in errs {
            let body = ErrorBody::from_json(&ErrorBody::from_worker(&e).to_json()).unwrap();
            assert_eq!(body.to_worker_error(), e);
        }
    }
}
