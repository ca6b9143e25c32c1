//! Typed higher-order dataflow graphs: IR, type inference, builtins and an
//! asynchronous executor with checkpoint/resume.

#![allow(clippy::result_large_err)]

pub mod builtins;
pub mod codec;
pub mod corpus;
pub mod dot;
pub mod exec;
pub mod doubles;
pub mod graph;
pub mod signature;
pub mod types;
pub mod value;
pub mod worker;

pub use graph::{Edge, Graph, GraphBuilder, Node, NodeId, NodeKind, PortRef};
pub use signature::Signature;
pub use value::{FunctionName, Label, Ports, Value};
