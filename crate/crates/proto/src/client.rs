//! Clients for the two interfaces: [`HttpWorker`] makes a remote worker (or
//! child runtime) look like any other [`Worker`]; [`RuntimeClient`] drives
//! the job endpoints of a runtime.

use std::collections::BTreeMap;
use std::io;
use std::time::{Duration, Instant};

use serde_json::Value as Json;
use thiserror::Error;
use tk_core::codec::{self, DecodeError};
use tk_core::graph::Graph;
use tk_core::signature::Signature;
use tk_core::value::{FunctionName, Ports};
use tk_core::worker::{RunContext, Worker, WorkerError};
use ureq::Agent;

use crate::wire::{self, ErrorBody, JobOptions, JobRecord, JobState, ResumeRequest, RunRequest, SubmitRequest};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);
const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const BODY_LIMIT: u64 = 1 << 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClientError {
    #[error("{endpoint}: {message}")]
    Transport { endpoint: String, message: String },
    #[error("{endpoint} timed out after {timeout:?}")]
    Timeout { endpoint: String, timeout: Duration },
    #[error("{status} {body}")]
    Remote { status: u16, body: ErrorBody },
    #[error("bad response: {0}")]
    Decode(#[from] DecodeError),
    #[error("job failed: {0}")]
    JobFailed(ErrorBody),
    #[error("job was cancelled")]
    JobCancelled,
}

impl ClientError {
    /// The error kind a caller would branch on.
    pub fn kind(&self) -> &str {
        match self {
            ClientError::Transport { .. } => "ChildUnreachable",
            ClientError::Timeout { .. } => "Timeout",
            ClientError::Remote { body, .. } | ClientError::JobFailed(body) => &body.kind,
            ClientError::Decode(_) => "DecodeError",
            ClientError::JobCancelled => "Cancelled",
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, ClientError::Transport { .. } | ClientError::Timeout { .. } | ClientError::Decode(_))
    }
}

/// Delays between attempts. A request is only repeated when it cannot have
/// reached the server, or when the caller says it is safe to repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            backoff: [100, 200, 400].map(Duration::from_millis).to_vec(),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy { backoff: Vec::new() }
    }
}

enum Failure {
    /// The request never left this process.
    Unsent(String),
    /// It may have been received and acted on.
    Sent(String),
    Timeout,
    Status(u16, String),
}

fn classify(e: ureq::Error) -> Failure {
    use ureq::Timeout as T;
    match e {
        ureq::Error::HostNotFound | ureq::Error::ConnectionFailed | ureq::Error::BadUri(_) => Failure::Unsent(e.to_string()),
        ureq::Error::Timeout(T::Connect | T::Resolve) => Failure::Unsent(e.to_string()),
        ureq::Error::Timeout(_) => Failure::Timeout,
        ureq::Error::Io(io) => match io.kind() {
            io::ErrorKind::ConnectionRefused | io::ErrorKind::AddrNotAvailable | io::ErrorKind::NotFound => {
                Failure::Unsent(io.to_string())
            }
            io::ErrorKind::TimedOut => Failure::Timeout,
            _ => Failure::Sent(io.to_string()),
        },
        ureq::Error::StatusCode(s) => Failure::Status(s, String::new()),
        other => Failure::Sent(other.to_string()),
    }
}

/// One base URL with shared timeout, token and retry policy.
#[derive(Clone)]
struct Http {
    base: String,
    agent: Agent,
    timeout: Duration,
    token: Option<String>,
    retry: RetryPolicy,
}

impl Http {
    fn new(base: &str, timeout: Duration) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(timeout))
            .timeout_connect(Some(CONNECT_TIMEOUT.min(timeout)))
            .http_status_as_error(false)
            // A pooled socket to a child that went away can hang until the
            // timeout instead of failing fast.
            .max_idle_connections(0)
            .build()
            .into();
        Http {
            base: base.trim_end_matches('/').to_string(),
            agent,
            timeout,
            token: None,
            retry: RetryPolicy::default(),
        }
    }

    fn once(&self, path: &str, body: Option<&Json>) -> Result<(u16, String), Failure> {
        let url = format!("{}{}", self.base, path);
        let auth = self.token.as_ref().map(|t| format!("Bearer {t}"));
        let resp = match body {
            None => {
                let mut r = self.agent.get(&url);
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                r.call()
            }
            Some(b) => {
                let mut r = self.agent.post(&url).header("Content-Type", "application/json");
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                r.send(codec::canonical(b))
            }
        };
        let mut resp = resp.map_err(classify)?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(BODY_LIMIT)
            .read_to_string()
            .map_err(classify)?;
        Ok((status, text))
    }

    /// Sends with retries and decodes the body: `Ok` for 2xx, the error
    /// envelope otherwise.
    fn request(&self, path: &str, body: Option<&Json>, repeatable: bool) -> Result<Json, ClientError> {
        let mut delays = self.retry.backoff.iter();
        loop {
            let failure = match self.once(path, body) {
                Ok((status, text)) => return self.decode(status, &text),
                Err(f) => f,
            };
            let (retry, err) = match failure {
                Failure::Unsent(m) => (true, self.transport(m)),
                Failure::Sent(m) => (repeatable, self.transport(m)),
                Failure::Timeout => (
                    false,
                    ClientError::Timeout {
                        endpoint: self.base.clone(),
                        timeout: self.timeout,
                    },
                ),
                Failure::Status(s, m) => (false, self.transport(format!("HTTP {s} {m}"))),
            };
            match delays.next() {
                Some(d) if retry => std::thread::sleep(*d),
                _ => return Err(err),
            }
        }
    }

    fn transport(&self, message: String) -> ClientError {
        ClientError::Transport {
            endpoint: self.base.clone(),
            message,
        }
    }

    fn decode(&self, status: u16, text: &str) -> Result<Json, ClientError> {
        let parsed = codec::parse(text);
        if (200..300).contains(&status) {
            return Ok(parsed?);
        }
        let body = parsed
            .ok()
            .and_then(|j| ErrorBody::from_json(&j).ok())
            .unwrap_or_else(|| ErrorBody::new("HttpError", format!("HTTP {status}: {}", text.trim())));
        Err(ClientError::Remote { status, body })
    }
}

pub fn fetch_signature(url: &str) -> Result<Signature, ClientError> {
    Http::new(url, DEFAULT_TIMEOUT).get_signature()
}

impl Http {
    fn get_signature(&self) -> Result<Signature, ClientError> {
        let j = self.request("/v1/signature", None, true)?;
        Ok(codec::signature_from_json(&j, "")?)
    }
}

/// A worker or child runtime reached over HTTP. The signature is fetched
/// once, at connection.
#[derive(Clone)]
pub struct HttpWorker {
    http: Http,
    signature: Signature,
}

impl std::fmt::Debug for HttpWorker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpWorker").field("url", &self.http.base).finish()
    }
}

impl HttpWorker {
    pub fn connect(url: &str) -> Result<Self, ClientError> {
        Self::connect_with(url, DEFAULT_TIMEOUT, RetryPolicy::default())
    }

    pub fn connect_with(url: &str, timeout: Duration, retry: RetryPolicy) -> Result<Self, ClientError> {
        let mut http = Http::new(url, timeout);
        http.retry = retry;
        let signature = http.get_signature()?;
        Ok(HttpWorker { http, signature })
    }

    pub fn url(&self) -> &str {
        &self.http.base
    }

    pub fn run_function(&self, name: &FunctionName, inputs: Ports, ctx: &RunContext) -> Result<Ports, ClientError> {
        let path = format!("/v1/functions/{}/{}:run", name.namespace, name.name);
        let body = RunRequest { inputs, context: ctx.clone() }.to_json();
        let j = self.http.request(&path, Some(&body), self.signature.idempotent)?;
        Ok(wire::outputs_from_json(&j)?)
    }
}

impl Worker for HttpWorker {
    fn signature(&self) -> Signature {
        self.signature.clone()
    }

    fn run(&self, name: &FunctionName, inputs: Ports, ctx: &RunContext) -> Result<Ports, WorkerError> {
        self.run_function(name, inputs, ctx).map_err(|e| match e {
            ClientError::Transport { endpoint, .. } => WorkerError::Unreachable(endpoint),
            ClientError::Timeout { timeout, .. } => WorkerError::Timeout(timeout),
            ClientError::Remote { body, .. } | ClientError::JobFailed(body) => body.to_worker_error(),
            ClientError::Decode(d) => WorkerError::failed(format!("bad response from {}: {d}", self.http.base)),
            ClientError::JobCancelled => WorkerError::failed("cancelled"),
        })
    }
}

/// Client of a runtime's job endpoints.
#[derive(Clone)]
pub struct RuntimeClient {
    http: Http,
}

impl RuntimeClient {
    pub fn new(url: &str) -> Self {
        RuntimeClient {
            http: Http::new(url, DEFAULT_TIMEOUT),
        }
    }

    /// Client for the runtime that issued `ctx`, carrying its token.
    pub fn from_context(ctx: &RunContext) -> Self {
        Self::new(&ctx.callback).with_token(ctx.token.clone())
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.http.token = token;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        let token = self.http.token.take();
        self.http = Http::new(&self.http.base, timeout);
        self.http.token = token;
        self
    }

    pub fn url(&self) -> &str {
        &self.http.base
    }

    pub fn signature(&self) -> Result<Signature, ClientError> {
        self.http.get_signature()
    }

    pub fn submit(&self, graph: &Graph, inputs: &Ports, options: JobOptions) -> Result<String, ClientError> {
        let body = SubmitRequest {
            graph: graph.clone(),
            inputs: inputs.clone(),
            options,
        };
        let j = self.http.request("/v1/jobs", Some(&body.to_json()), false)?;
        Ok(wire::job_id_from_json(&j)?)
    }

    pub fn status(&self, id: &str) -> Result<JobRecord, ClientError> {
        let j = self.http.request(&format!("/v1/jobs/{id}"), None, true)?;
        Ok(JobRecord::from_json(&j)?)
    }

    /// Long-polls until the job is terminal or `timeout` passes; returns the
    /// last record seen either way.
    pub fn await_job(&self, id: &str, timeout: Option<Duration>) -> Result<JobRecord, ClientError> {
        let deadline = timeout.map(|t| Instant::now() + t);
        let chunk = (self.http.timeout / 2).clamp(Duration::from_millis(100), Duration::from_secs(30));
        loop {
            let wait = match deadline {
                Some(d) => chunk.min(d.saturating_duration_since(Instant::now())),
                None => chunk,
            };
            let j = self
                .http
                .request(&format!("/v1/jobs/{id}?wait_ms={}", wait.as_millis()), None, true)?;
            let rec = JobRecord::from_json(&j)?;
            if rec.state.is_terminal() || deadline.is_some_and(|d| Instant::now() >= d) {
                return Ok(rec);
            }
        }
    }

    pub fn cancel(&self, id: &str) -> Result<JobRecord, ClientError> {
        let j = self
            .http
            .request(&format!("/v1/jobs/{id}:cancel"), Some(&Json::Object(Default::default())), true)?;
        Ok(JobRecord::from_json(&j)?)
    }

    /// Canonical checkpoint bytes.
    pub fn checkpoint(&self, id: &str) -> Result<Vec<u8>, ClientError> {
        let j = self.http.request(&format!("/v1/jobs/{id}/checkpoint"), None, true)?;
        Ok(codec::canonical(&j).into_bytes())
    }

    pub fn resume(
        &self,
        checkpoint: &[u8],
        graphs: BTreeMap<String, Graph>,
        options: JobOptions,
    ) -> Result<String, ClientError> {
        let mut req = ResumeRequest::new(checkpoint)?;
        req.graphs = graphs;
        req.options = options;
        let j = self.http.request("/v1/jobs:resume", Some(&req.to_json()), false)?;
        Ok(wire::job_id_from_json(&j)?)
    }

    /// Submit and await in one call; failures and cancellation become errors.
    pub fn run_graph(&self, graph: &Graph, inputs: &Ports, options: JobOptions) -> Result<Ports, ClientError> {
        let id = self.submit(graph, inputs, options)?;
        match self.await_job(&id, None)?.state {
            JobState::Done(p) => Ok(p),
            JobState::Failed(e) => Err(ClientError::JobFailed(e)),
            JobState::Cancelled => Err(ClientError::JobCancelled),
            JobState::Queued | JobState::Running => unreachable!("await returns terminal records without a deadline"),
        }
    }
}

/// The worker-side callback: evaluate `graph` on the runtime that issued `ctx`.
pub fn callback_run_graph(ctx: &RunContext, graph: &Graph, inputs: &Ports) -> Result<Ports, ClientError> {
    RuntimeClient::from_context(ctx).run_graph(graph, inputs, JobOptions::default())
}
