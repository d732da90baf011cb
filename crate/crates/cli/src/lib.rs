//! Command-line front end: configuration, caches, reports and gates.

pub mod cache;
pub mod commands;
pub mod config;
pub mod verify;

use std::fmt;

/// An invariant check failed (exit code 3).
#[derive(Debug)]
pub struct GateFailure(pub String);

impl fmt::Display for GateFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gate failure: {}", self.0)
    }
}

impl std::error::Error for GateFailure {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_GATE: i32 = 3;

/// 3 for gate failures, 2 for rejected input or infeasible settings, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<GateFailure>().is_some() {
        return EXIT_GATE;
    }
    match err.downcast_ref::<modsym_core::Error>() {
        Some(modsym_core::Error::Io(_)) | None => EXIT_RUNTIME,
        Some(_) => EXIT_VALIDATION,
    }
}
