//! The runtime service: worker endpoints plus job endpoints.
//!
//! Every request gets its own thread, since a forwarded call can block for a
//! long time while the worker it reaches calls back into this runtime.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value as Json};
use thiserror::Error;
use tk_core::codec;
use tk_core::exec::{self, ExecConfig, Job, JobStatus};
use tk_core::graph::{Graph, GraphBuilder};
use tk_core::value::{FunctionName, Label, Ports, Value};
use tk_core::worker::{Collision, FunctionIndex, RunContext};

use crate::client::{ClientError, HttpWorker, RetryPolicy, DEFAULT_TIMEOUT};
use crate::wire::{self, ErrorBody, JobOptions, JobRecord, JobState, ResumeRequest, RunRequest, SubmitRequest};

pub const ENV_BIND: &str = "TIERKREIS_BIND";
pub const ENV_WORKERS: &str = "TIERKREIS_WORKERS";
pub const ENV_TOKEN: &str = "TIERKREIS_TOKEN";

const MAX_WAIT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: String,
    pub workers: Vec<String>,
    /// Shared secret required on the job endpoints.
    pub token: Option<String>,
    /// Per-function timeout for child calls.
    pub timeout: Duration,
    pub max_concurrency: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: "127.0.0.1:8080".into(),
            workers: Vec::new(),
            token: None,
            timeout: DEFAULT_TIMEOUT,
            max_concurrency: ExecConfig::default().max_concurrency,
        }
    }
}

impl ServeConfig {
    /// Defaults overridden by `TIERKREIS_BIND`, `TIERKREIS_WORKERS` and
    /// `TIERKREIS_TOKEN`.
    pub fn from_env() -> Self {
        let mut c = ServeConfig::default();
        if let Ok(b) = std::env::var(ENV_BIND) {
            if !b.trim().is_empty() {
                c.bind = b.trim().to_string();
            }
        }
        if let Ok(w) = std::env::var(ENV_WORKERS) {
            c.workers = split_workers(&w);
        }
        c.token = std::env::var(ENV_TOKEN).ok().filter(|t| !t.is_empty());
        c
    }
}

pub fn split_workers(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|w| !w.is_empty()).map(str::to_string).collect()
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {bind}: {message}")]
    Bind { bind: String, message: String },
    #[error("worker {url}: {error}")]
    Worker { url: String, error: ClientError },
    #[error(transparent)]
    Collision(#[from] Collision),
}

/// Connects to every child and merges their signatures over the builtins.
pub fn aggregate(workers: &[String], timeout: Duration) -> Result<FunctionIndex, ServeError> {
    let mut index = FunctionIndex::builtin();
    for url in workers {
        let w = HttpWorker::connect_with(url, timeout, RetryPolicy::default()).map_err(|error| ServeError::Worker {
            url: url.clone(),
            error,
        })?;
        index.add_worker(w.url().to_string(), Arc::new(w))?;
    }
    Ok(index)
}

struct Entry {
    job: Job,
    graph_hash: String,
}

struct Runtime {
    url: String,
    index: Arc<FunctionIndex>,
    token: Option<String>,
    max_concurrency: usize,
    jobs: Mutex<HashMap<String, Arc<Entry>>>,
}

/// A running runtime service. Dropping it stops the listener; jobs already
/// started run to completion on their own threads.
pub struct Server {
    http: Arc<tiny_http::Server>,
    url: String,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(config: ServeConfig) -> Result<Server, ServeError> {
        let index = aggregate(&config.workers, config.timeout)?;
        Self::with_index(index, &config)
    }

    /// Serves an index built by the caller; `config.workers` is ignored.
    pub fn with_index(index: FunctionIndex, config: &ServeConfig) -> Result<Server, ServeError> {
        let bind_err = |message: String| ServeError::Bind {
            bind: config.bind.clone(),
            message,
        };
        let http = Arc::new(tiny_http::Server::http(&config.bind).map_err(|e| bind_err(e.to_string()))?);
        let mut addr = http
            .server_addr()
            .to_ip()
            .ok_or_else(|| bind_err("not an IP listener".into()))?;
        if addr.ip().is_unspecified() {
            addr.set_ip(std::net::Ipv4Addr::LOCALHOST.into());
        }
        let url = format!("http://{addr}");
        let runtime = Arc::new(Runtime {
            url: url.clone(),
            index: Arc::new(index),
            token: config.token.clone(),
            max_concurrency: config.max_concurrency,
            jobs: Mutex::new(HashMap::new()),
        });
        let stop = Arc::new(AtomicBool::new(false));
        let accept = {
            let http = Arc::clone(&http);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || loop {
                match http.recv() {
                    Ok(req) => {
                        let rt = Arc::clone(&runtime);
                        std::thread::spawn(move || rt.handle(req));
                    }
                    Err(_) if stop.load(Ordering::SeqCst) => break,
                    Err(_) => {}
                }
            })
        };
        Ok(Server {
            http,
            url,
            stop,
            accept: Some(accept),
        })
    }

    /// Base URL, e.g. `http://127.0.0.1:43117`.
    pub fn url(&self) -> &str {
        &self.url
    }

    /// Blocks for the life of the process.
    pub fn join(mut self) {
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(self) {}
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.http.unblock();
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
    }
}

/// Status and body text.
type Reply = (u16, String);

fn reply(status: u16, j: &Json) -> Reply {
    (status, codec::canonical(j))
}

fn error(status: u16, body: ErrorBody) -> Reply {
    reply(status, &body.to_json())
}

fn not_found(what: &str) -> Reply {
    error(404, ErrorBody::new("NotFound", format!("no such {what}")))
}

fn bad_request(e: impl std::fmt::Display) -> Reply {
    error(400, ErrorBody::new("DecodeError", e.to_string()))
}

fn status_for(kind: &str) -> u16 {
    match kind {
        "UnknownFunction" => 404,
        "Unauthorized" => 403,
        "Timeout" => 504,
        "ChildUnreachable" | "OutputTypeViolation" => 502,
        _ => 500,
    }
}

impl Runtime {
    fn handle(&self, mut req: tiny_http::Request) {
        let mut body = String::new();
        let answer = match req.as_reader().read_to_string(&mut body) {
            Ok(_) => self.route(&req, &body),
            Err(e) => bad_request(e),
        };
        let (status, text) = answer;
        let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
        let resp = tiny_http::Response::from_string(text).with_status_code(status).with_header(header);
        let _ = req.respond(resp);
    }

    fn authorized(&self, req: &tiny_http::Request) -> bool {
        let Some(want) = &self.token else { return true };
        req.headers()
            .iter()
            .filter(|h| h.field.equiv("Authorization"))
            .any(|h| h.value.as_str().strip_prefix("Bearer ") == Some(want.as_str()))
    }

    fn route(&self, req: &tiny_http::Request, body: &str) -> Reply {
        let (path, query) = req.url().split_once('?').unwrap_or((req.url(), ""));
        let get = *req.method() == tiny_http::Method::Get;
        let post = *req.method() == tiny_http::Method::Post;
        if path == "/v1/signature" && get {
            return reply(200, &codec::signature_to_json(self.index.signature()));
        }
        if let Some(rest) = path.strip_prefix("/v1/functions/") {
            return match (post, rest.strip_suffix(":run")) {
                (true, Some(name)) => self.run_endpoint(name, body),
                _ => not_found("endpoint"),
            };
        }
        if path != "/v1/jobs" && !path.starts_with("/v1/jobs/") && !path.starts_with("/v1/jobs:") {
            return not_found("endpoint");
        }
        if !self.authorized(req) {
            return error(403, ErrorBody::new("Unauthorized", "missing or wrong token"));
        }
        match (path, post) {
            ("/v1/jobs", true) => return self.submit(body),
            ("/v1/jobs:resume", true) => return self.resume(body),
            _ => {}
        }
        let Some(rest) = path.strip_prefix("/v1/jobs/") else { return not_found("endpoint") };
        if let Some(id) = rest.strip_suffix(":cancel") {
            return match post {
                true => self.cancel(id),
                false => not_found("endpoint"),
            };
        }
        if let Some(id) = rest.strip_suffix("/checkpoint") {
            return match get {
                true => self.checkpoint(id),
                false => not_found("endpoint"),
            };
        }
        if !get || rest.contains('/') {
            return not_found("endpoint");
        }
        let wait = query
            .split('&')
            .find_map(|kv| kv.strip_prefix("wait_ms="))
            .and_then(|ms| ms.parse().ok())
            .map(Duration::from_millis)
            .unwrap_or_default();
        self.status(rest, wait.min(MAX_WAIT))
    }

    fn entry(&self, id: &str) -> Option<Arc<Entry>> {
        self.jobs.lock().expect("job registry").get(id).cloned()
    }

    fn config(&self, options: JobOptions, job: &str) -> ExecConfig {
        ExecConfig {
            max_concurrency: options.max_concurrency.unwrap_or(self.max_concurrency).max(1),
            max_loop_iters: options.max_loop_iters,
            context: RunContext {
                callback: self.url.clone(),
                job: job.to_string(),
                token: self.token.clone(),
            },
            ..ExecConfig::default()
        }
    }

    fn record(id: &str, e: &Entry, status: JobStatus) -> JobRecord {
        JobRecord {
            id: id.to_string(),
            graph_hash: e.graph_hash.clone(),
            state: match status {
                JobStatus::Running => JobState::Running,
                JobStatus::Done(p) => JobState::Done(p),
                JobStatus::Failed(err) => JobState::Failed(ErrorBody::from_exec(&err)),
                JobStatus::Cancelled => JobState::Cancelled,
            },
        }
    }

    fn register(&self, id: String, entry: Entry) -> Reply {
        self.jobs.lock().expect("job registry").insert(id.clone(), Arc::new(entry));
        reply(201, &json!({ "id": id }))
    }

    fn submit(&self, body: &str) -> Reply {
        let req = match codec::parse(body).and_then(|j| SubmitRequest::from_json(&j)) {
            Ok(r) => r,
            Err(e) => return bad_request(e),
        };
        let plan = match exec::prepare(&req.graph, req.inputs, &self.index) {
            Ok(p) => p,
            Err(e) => return error(422, ErrorBody::from_prepare(&e)),
        };
        let id = uuid::Uuid::new_v4().to_string();
        let graph_hash = exec::graph_hash(&req.graph);
        let job = Job::start(plan, Arc::clone(&self.index), self.config(req.options, &id));
        self.register(id, Entry { job, graph_hash })
    }

    fn resume(&self, body: &str) -> Reply {
        let req = match codec::parse(body).and_then(|j| ResumeRequest::from_json(&j)) {
            Ok(r) => r,
            Err(e) => return bad_request(e),
        };
        let state = match exec::restore(&req.checkpoint_bytes(), &req.graphs, &self.index) {
            Ok(s) => s,
            Err(exec::RestoreError::Decode(e)) => return bad_request(e),
            Err(e) => return error(422, ErrorBody::from_restore(&e)),
        };
        let id = uuid::Uuid::new_v4().to_string();
        let graph_hash = exec::graph_hash(&state.frames[&state.root].graph);
        let job = Job::resume(state, Arc::clone(&self.index), self.config(req.options, &id));
        self.register(id, Entry { job, graph_hash })
    }

    fn status(&self, id: &str, wait: Duration) -> Reply {
        let Some(e) = self.entry(id) else { return not_found("job") };
        let status = match wait.is_zero() {
            true => e.job.status(),
            false => e.job.wait_timeout(wait).unwrap_or(JobStatus::Running),
        };
        reply(200, &Self::record(id, &e, status).to_json())
    }

    fn cancel(&self, id: &str) -> Reply {
        let Some(e) = self.entry(id) else { return not_found("job") };
        e.job.cancel();
        let status = e.job.wait_timeout(Duration::from_secs(5)).unwrap_or(JobStatus::Running);
        reply(200, &Self::record(id, &e, status).to_json())
    }

    fn checkpoint(&self, id: &str) -> Reply {
        let Some(e) = self.entry(id) else { return not_found("job") };
        match e.job.checkpoint() {
            Some(bytes) => (200, String::from_utf8(bytes).expect("checkpoints are UTF-8 JSON")),
            None => error(409, ErrorBody::new("NoCheckpoint", format!("job {id} has completed"))),
        }
    }

    fn run_endpoint(&self, name: &str, body: &str) -> Reply {
        let Some(name) = name.split_once('/').and_then(|(ns, f)| {
            (!f.contains('/')).then(|| FunctionName::new(ns, f))
        }) else {
            return not_found("endpoint");
        };
        let req = match codec::parse(body).and_then(|j| RunRequest::from_json(&j)) {
            Ok(r) => r,
            Err(e) => return bad_request(e),
        };
        match self.run_function(&name, req) {
            Ok(out) => reply(200, &wire::outputs_to_json(&out)),
            Err((status, body)) => error(status, body),
        }
    }

    /// Runs one function as a single-node graph, so inputs get the same
    /// pre-check as a submitted graph and outputs the executor's post-check.
    /// Calls for a child go out with this runtime as their callback.
    fn run_function(&self, name: &FunctionName, req: RunRequest) -> Result<Ports, (u16, ErrorBody)> {
        let Some(scheme) = self.index.signature().get(name) else {
            return Err((404, ErrorBody::new("UnknownFunction", format!("unknown function {name}"))));
        };
        let outputs: Vec<Label> = if *name == FunctionName::builtin("eval") {
            match req.inputs.get("thunk").and_then(Value::as_graph) {
                Some(g) => g.output_labels(),
                None => Vec::new(),
            }
        } else {
            scheme.body.outputs.entries.keys().cloned().collect()
        };
        let g = single_node(name, req.inputs.keys(), &outputs);
        let plan = exec::prepare(&g, req.inputs, &self.index).map_err(|e| {
            let body = ErrorBody::from_prepare(&e);
            (if body.kind == "UnknownFunction" { 404 } else { 422 }, body)
        })?;
        let config = ExecConfig {
            max_concurrency: 1,
            context: RunContext {
                callback: self.url.clone(),
                job: req.context.job,
                token: self.token.clone(),
            },
            ..ExecConfig::default()
        };
        exec::run(&plan, &self.index, &config).result.map_err(|e| {
            let body = ErrorBody::from_exec(&e);
            (status_for(&body.kind), body)
        })
    }
}

fn single_node<'a>(name: &FunctionName, inputs: impl Iterator<Item = &'a Label>, outputs: &[Label]) -> Graph {
    let mut b = GraphBuilder::new();
    let f = b.function(&name.to_string());
    for l in inputs {
        b.from_input(l.as_str(), f, l.as_str());
    }
    for l in outputs {
        b.to_output(f, l.as_str(), l.as_str());
    }
    b.build_raw()
}
