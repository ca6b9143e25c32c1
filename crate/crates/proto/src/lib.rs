//! Worker and runtime interfaces over HTTP/1.1 and JSON.
//!
//! A runtime is itself a worker: its signature is the union of its children's,
//! and a run request for a child's function is forwarded to that child. Trees
//! of runtimes therefore compose without any special casing.

pub mod client;
pub mod server;
pub mod wire;

pub use client::{callback_run_graph, fetch_signature, ClientError, HttpWorker, RetryPolicy, RuntimeClient, DEFAULT_TIMEOUT};
pub use server::{aggregate, ServeConfig, ServeError, Server, ENV_BIND, ENV_TOKEN, ENV_WORKERS};
pub use wire::{ErrorBody, JobOptions, JobRecord, JobState};
