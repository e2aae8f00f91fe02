//! Standard-library companion to `cfpf-core`: run configuration, the binary
//! dataset container, model checkpoints, and the command pipelines behind
//! the `cfpf` binary (generate, solve, train, eval, bench).

pub mod checkpoint;
pub mod config;
pub mod container;
pub mod pipeline;
