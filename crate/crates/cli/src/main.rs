//! `tk`: check, run and visualise graphs locally, or drive a runtime service.
//!
//! Every command prints exactly one JSON document on stdout. Diagnostics go to
//! stderr. Exit codes: 0 ok, 1 user or type error, 2 transport error,
//! 3 execution error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value as Json};
use tk_core::codec;
use tk_core::exec::{self, ExecConfig, ExecError, ExecErrorKind, FireOrder};
use tk_core::graph::Graph;
use tk_core::signature::Signature;
use tk_core::types::{infer_graph, InferError, TypeErrorKind};
use tk_core::value::{Label, Ports, Value};
use tk_core::worker::FunctionIndex;
use tk_core::{builtins, doubles};
use tk_proto::{ClientError, ErrorBody, JobOptions, JobRecord, JobState, RuntimeClient, ServeConfig, Server};

#[derive(Parser)]
#[command(name = "tk", version, about = "Typed dataflow graph runtime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Type-check a graph and print its inferred edge annotations.
    Check {
        graph: PathBuf,
        /// `builtin`, a runtime URL, or a signature JSON file.
        #[arg(long, default_value = "builtin")]
        signature: String,
        #[command(flatten)]
        local: Local,
    },
    /// Run a graph in this process.
    Run {
        graph: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        limits: Limits,
        /// Fire ready nodes in a seeded random order instead of FIFO.
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the checkpoint of a run that does not complete.
        #[arg(long)]
        checkpoint_out: Option<PathBuf>,
        #[command(flatten)]
        local: Local,
    },
    /// Export a graph as Graphviz DOT.
    Viz {
        graph: PathBuf,
        /// Label edges with their inferred types.
        #[arg(long)]
        types: bool,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
        #[command(flatten)]
        local: Local,
    },
    /// Serve the runtime interface until killed.
    Serve {
        /// host:port; defaults to $TIERKREIS_BIND or 127.0.0.1:8080.
        #[arg(long)]
        bind: Option<String>,
        /// Child worker or runtime URL; repeatable. Adds to $TIERKREIS_WORKERS.
        #[arg(long = "worker")]
        workers: Vec<String>,
        #[arg(long, env = "TIERKREIS_TOKEN", hide_env_values = true)]
        token: Option<String>,
        /// Per-function timeout for child calls.
        #[arg(long, default_value_t = 300)]
        timeout_secs: u64,
        /// Also serve the in-process `mock` and `optimizer` stand-ins.
        #[arg(long)]
        mock: bool,
    },
    /// Submit a graph to a runtime.
    Submit {
        url: String,
        graph: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        limits: Limits,
        /// Wait and print the outputs instead of the job id.
        #[arg(long = "await")]
        wait: bool,
        #[command(flatten)]
        auth: Auth,
    },
    /// Inspect or control a job.
    Job {
        url: String,
        id: String,
        #[arg(long = "await", conflicts_with_all = ["cancel", "checkpoint"])]
        wait: bool,
        #[arg(long, conflicts_with = "checkpoint")]
        cancel: bool,
        /// Write the job's checkpoint to this file.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        auth: Auth,
    },
    /// Start a job from a checkpoint file.
    Resume {
        url: String,
        checkpoint: PathBuf,
        /// Replacement graph for the graph with this hash: `HASH=FILE`.
        #[arg(long = "graph", value_name = "HASH=FILE")]
        graphs: Vec<String>,
        #[command(flatten)]
        limits: Limits,
        #[arg(long = "await")]
        wait: bool,
        #[command(flatten)]
        auth: Auth,
    },
    /// Print the signature of a runtime, or of the builtins.
    Signature {
        /// Runtime URL or `builtin`.
        #[arg(default_value = "builtin")]
        source: String,
        /// One `name: scheme` line per function instead of JSON.
        #[arg(long)]
        text: bool,
        #[command(flatten)]
        local: Local,
    },
}

#[derive(Args)]
struct Inputs {
    /// `port=value`. Bare values are Int, Float, Bool or Str by syntax;
    /// `@file.tkv.json` loads a value file.
    #[arg(long = "input", value_name = "PORT=VALUE")]
    input: Vec<String>,
}

#[derive(Args)]
struct Limits {
    #[arg(long)]
    max_loop_iters: Option<u64>,
    /// Most worker calls in flight; 1 runs everything in a fixed order.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct Local {
    /// Include the in-process `mock` and `optimizer` stand-ins.
    #[arg(long)]
    mock: bool,
    /// Remote worker URL to include; repeatable.
    #[arg(long = "worker")]
    workers: Vec<String>,
}

#[derive(Args)]
struct Auth {
    #[arg(long, env = "TIERKREIS_TOKEN", hide_env_values = true)]
    token: Option<String>,
}

/// A failed command: exit code and the error envelope printed on stdout.
struct Fail {
    code: u8,
    body: ErrorBody,
}

impl Fail {
    fn user(kind: &str, message: impl Into<String>) -> Self {
        Fail {
            code: 1,
            body: ErrorBody::new(kind, message),
        }
    }
}

type Out = Result<Json, Fail>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Check { graph, signature, local } => check(&graph, &signature, &local),
        Command::Run {
            graph,
            inputs,
            limits,
            seed,
            checkpoint_out,
            local,
        } => run(&graph, &inputs, &limits, seed, checkpoint_out.as_deref(), &local),
        Command::Viz {
            graph,
            types,
            output,
            local,
        } => viz(&graph, types, output.as_deref(), &local),
        Command::Serve {
            bind,
            workers,
            token,
            timeout_secs,
            mock,
        } => serve(bind, workers, token, timeout_secs, mock),
        Command::Submit {
            url,
            graph,
            inputs,
            limits,
            wait,
            auth,
        } => submit(&url, &graph, &inputs, &limits, wait, auth),
        Command::Job {
            url,
            id,
            wait,
            cancel,
            checkpoint,
            auth,
        } => job(&url, &id, wait, cancel, checkpoint.as_deref(), auth),
        Command::Resume {
            url,
            checkpoint,
            graphs,
            limits,
            wait,
            auth,
        } => resume(&url, &checkpoint, &graphs, &limits, wait, auth),
        Command::Signature { source, text, local } => signature(&source, text, &local),
    };
    let (code, doc) = match result {
        Ok(j) => (0, j),
        Err(f) => {
            eprintln!("tk: {}", f.body);
            (f.code, f.body.to_json())
        }
    };
    let mut stdout = std::io::stdout().lock();
    let _ = match doc {
        Json::String(text) => write!(stdout, "{text}"),
        doc => writeln!(stdout, "{}", codec::canonical(&doc)),
    };
    ExitCode::from(code)
}

fn read(path: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(path).map_err(|e| Fail::user("IoError", format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Fail> {
    std::fs::write(path, bytes).map_err(|e| Fail::user("IoError", format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<Graph, Fail> {
    codec::deserialize_graph(&read(path)?).map_err(|e| Fail::user("DecodeError", format!("{}: {e}", path.display())))
}

/// Bare literal or `@file`.
fn parse_literal(s: &str) -> Result<Value, Fail> {
    if let Some(path) = s.strip_prefix('@') {
        let text = read(Path::new(path))?;
        return codec::deserialize_value(&text).map_err(|e| Fail::user("DecodeError", format!("{path}: {e}")));
    }
    match s {
        "true" => return Ok(Value::Bool(true)),
        "false" => return Ok(Value::Bool(false)),
        _ => {}
    }
    if let Ok(n) = s.parse::<i64>() {
        return Ok(Value::Int(n));
    }
    let numeric = s.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+' || c == '.');
    if numeric {
        if let Ok(x) = s.parse::<f64>() {
            return Ok(Value::Float(x));
        }
    }
    Ok(Value::str(s))
}

fn parse_inputs(inputs: &Inputs) -> Result<Ports, Fail> {
    let mut ports = Ports::new();
    for kv in &inputs.input {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Fail::user("BadInput", format!("--input {kv:?} is not PORT=VALUE")))?;
        let label = Label::new(k).map_err(|e| Fail::user("BadInput", format!("--input {kv:?}: {e}")))?;
        if ports.insert(label, parse_literal(v)?).is_some() {
            return Err(Fail::user("BadInput", format!("port {k} given twice")));
        }
    }
    Ok(ports)
}

fn transport(e: ClientError) -> Fail {
    let code = match &e {
        ClientError::Remote { status, .. } if *status < 500 => 1,
        ClientError::Remote { .. } | ClientError::JobFailed(_) | ClientError::JobCancelled => 3,
        _ => 2,
    };
    let body = match e {
        ClientError::Remote { body, .. } | ClientError::JobFailed(body) => body,
        other => ErrorBody::new(other.kind().to_string(), other.to_string()),
    };
    Fail { code, body }
}

fn index(local: &Local) -> Result<FunctionIndex, Fail> {
    let mut index = tk_proto::aggregate(&local.workers, tk_proto::DEFAULT_TIMEOUT).map_err(|e| Fail {
        code: if matches!(e, tk_proto::ServeError::Collision(_)) { 1 } else { 2 },
        body: ErrorBody::new("WorkerSetup", e.to_string()),
    })?;
    if local.mock {
        add_doubles(&mut index)?;
    }
    Ok(index)
}

fn add_doubles(index: &mut FunctionIndex) -> Result<(), Fail> {
    index
        .add_worker("mock", Arc::new(doubles::mock()))
        .and_then(|_| index.add_worker("optimizer", Arc::new(doubles::optimizer())))
        .map_err(|e| Fail::user("WorkerSetup", e.to_string()))
}

fn infer_failure(e: &InferError) -> Fail {
    let body = match e {
        InferError::Invalid(inv) => ErrorBody {
            locations: inv.0.iter().map(|s| json!({ "message": s.to_string() })).collect(),
            ..ErrorBody::new("InvalidGraph", e.to_string())
        },
        InferError::Types(errs) => {
            let unknown = errs.iter().all(|t| t.kind == TypeErrorKind::UnknownFunction);
            let kind = if unknown { "UnknownFunction" } else { "TypeError" };
            ErrorBody::from_type_errors(kind, e.to_string(), errs)
        }
    };
    Fail { code: 1, body }
}

fn load_signature(source: &str, local: &Local) -> Result<Signature, Fail> {
    let mut sig = if source == "builtin" {
        index(local)?.signature().clone()
    } else if source.starts_with("http://") || source.starts_with("https://") {
        tk_proto::fetch_signature(source).map_err(transport)?
    } else {
        let text = read(Path::new(source))?;
        codec::parse(&text)
            .and_then(|j| codec::signature_from_json(&j, ""))
            .map_err(|e| Fail::user("DecodeError", format!("{source}: {e}")))?
    };
    if source != "builtin" {
        sig.merge(&index(local)?.signature().without_namespace(builtins::NAMESPACE)).map_err(|f| Fail::user("WorkerSetup", format!("{f} is defined twice")))?;
    }
    Ok(sig)
}

fn check(path: &Path, source: &str, local: &Local) -> Out {
    let g = load_graph(path)?;
    let sig = load_signature(source, local)?;
    let inf = infer_graph(&g, &sig).map_err(|e| infer_failure(&e))?;
    Ok(json!({
        "annotations": inf.annotation_lines(),
        "scheme": codec::scheme_to_json(&inf.scheme),
    }))
}

fn exec_failure(e: &ExecError) -> Fail {
    let code = match e.kind {
        ExecErrorKind::MaxIterations(_) => 1,
        _ => 3,
    };
    Fail {
        code,
        body: ErrorBody::from_exec(e),
    }
}

fn record_failure(rec: &JobRecord) -> Option<Fail> {
    match &rec.state {
        JobState::Failed(body) => Some(Fail {
            code: if body.kind == "MaxIterations" { 1 } else { 3 },
            body: body.clone(),
        }),
        JobState::Cancelled => Some(Fail {
            code: 3,
            body: ErrorBody::new("Cancelled", format!("job {} was cancelled", rec.id)),
        }),
        _ => None,
    }
}

fn run(path: &Path, inputs: &Inputs, limits: &Limits, seed: Option<u64>, checkpoint_out: Option<&Path>, local: &Local) -> Out {
    let g = load_graph(path)?;
    let inputs = parse_inputs(inputs)?;
    let index = index(local)?;
    let plan = exec::prepare(&g, inputs, &index).map_err(|e| Fail {
        code: 1,
        body: ErrorBody::from_prepare(&e),
    })?;
    let mut config = ExecConfig {
        max_loop_iters: limits.max_loop_iters,
        ..ExecConfig::default()
    };
    if let Some(n) = limits.jobs {
        config.max_concurrency = n.max(1);
    }
    if let Some(s) = seed {
        config.order = FireOrder::Seeded(s);
    }
    let outcome = exec::run(&plan, &index, &config);
    match outcome.result {
        Ok(p) => Ok(codec::ports_to_json(&p)),
        Err(e) => {
            if let (Some(path), Some(bytes)) = (checkpoint_out, &outcome.checkpoint) {
                write(path, bytes)?;
                eprintln!("tk: checkpoint written to {}", path.display());
            }
            Err(exec_failure(&e))
        }
    }
}

fn viz(path: &Path, types: bool, output: Option<&Path>, local: &Local) -> Out {
    let mut g = load_graph(path)?;
    if types {
        let sig = index(local)?.signature().clone();
        g = infer_graph(&g, &sig).map_err(|e| infer_failure(&e))?.graph;
    }
    let dot = tk_core::dot::to_dot(&g, types);
    match output {
        Some(p) => {
            write(p, dot.as_bytes())?;
            Ok(json!({ "written": p.display().to_string() }))
        }
        None => Ok(json!({ "dot": dot })),
    }
}

fn serve(bind: Option<String>, workers: Vec<String>, token: Option<String>, timeout_secs: u64, mock: bool) -> Out {
    let mut config = ServeConfig::from_env();
    if let Some(b) = bind {
        config.bind = b;
    }
    config.workers.extend(workers);
    config.token = token.filter(|t| !t.is_empty()).or(config.token);
    config.timeout = Duration::from_secs(timeout_secs);
    let setup = |e: tk_proto::ServeError| Fail {
        code: if matches!(e, tk_proto::ServeError::Collision(_)) { 1 } else { 2 },
        body: ErrorBody::new("WorkerSetup", e.to_string()),
    };
    let mut index = tk_proto::aggregate(&config.workers, config.timeout).map_err(setup)?;
    if mock {
        add_doubles(&mut index)?;
    }
    let server = Server::with_index(index, &config).map_err(setup)?;
    {
        let mut stdout = std::io::stdout().lock();
        let _ = writeln!(stdout, "{}", codec::canonical(&json!({ "url": server.url() })));
        let _ = stdout.flush();
    }
    eprintln!("tk: serving on {}", server.url());
    server.join();
    std::process::exit(0)
}

fn client(url: &str, auth: Auth) -> RuntimeClient {
    RuntimeClient::new(url).with_token(auth.token.filter(|t| !t.is_empty()))
}

fn options(limits: &Limits) -> JobOptions {
    JobOptions {
        max_loop_iters: limits.max_loop_iters,
        max_concurrency: limits.jobs,
    }
}

fn await_outputs(c: &RuntimeClient, id: &str) -> Out {
    let rec = c.await_job(id, None).map_err(transport)?;
    if let Some(f) = record_failure(&rec) {
        return Err(f);
    }
    match rec.state {
        JobState::Done(p) => Ok(codec::ports_to_json(&p)),
        _ => unreachable!("await returns terminal records"),
    }
}

fn submit(url: &str, path: &Path, inputs: &Inputs, limits: &Limits, wait: bool, auth: Auth) -> Out {
    let g = load_graph(path)?;
    let inputs = parse_inputs(inputs)?;
    let c = client(url, auth);
    let id = c.submit(&g, &inputs, options(limits)).map_err(transport)?;
    match wait {
        true => await_outputs(&c, &id),
        false => Ok(json!({ "id": id })),
    }
}

fn job(url: &str, id: &str, wait: bool, cancel: bool, checkpoint: Option<&Path>, auth: Auth) -> Out {
    let c = client(url, auth);
    if let Some(path) = checkpoint {
        let bytes = c.checkpoint(id).map_err(transport)?;
        write(path, &bytes)?;
        return Ok(json!({ "checkpoint": path.display().to_string(), "bytes": bytes.len() }));
    }
    let rec = match (wait, cancel) {
        (_, true) => c.cancel(id),
        (true, _) => c.await_job(id, None),
        _ => c.status(id),
    }
    .map_err(transport)?;
    if wait {
        if let Some(f) = record_failure(&rec) {
            return Err(f);
        }
    }
    Ok(rec.to_json())
}

fn resume(url: &str, path: &Path, graphs: &[String], limits: &Limits, wait: bool, auth: Auth) -> Out {
    let bytes = std::fs::read(path).map_err(|e| Fail::user("IoError", format!("{}: {e}", path.display())))?;
    let mut replacements = BTreeMap::new();
    for hg in graphs {
        let (hash, file) = hg
            .split_once('=')
            .ok_or_else(|| Fail::user("BadInput", format!("--graph {hg:?} is not HASH=FILE")))?;
        replacements.insert(hash.to_string(), load_graph(Path::new(file))?);
    }
    let c = client(url, auth);
    let id = c.resume(&bytes, replacements, options(limits)).map_err(transport)?;
    match wait {
        true => await_outputs(&c, &id),
        false => Ok(json!({ "id": id })),
    }
}

fn signature(source: &str, text: bool, local: &Local) -> Out {
    let sig = match source {
        "builtin" if local.workers.is_empty() && !local.mock => builtins::signature(),
        _ => load_signature(source, local)?,
    };
    if text {
        return Ok(Json::String(sig.iter().map(|(name, s)| format!("{name}: {s}\n")).collect()));
    }
    Ok(codec::signature_to_json(&sig))
}
