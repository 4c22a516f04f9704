//! Compiler and runtime for the fluxional execution model: MiniJS programs
//! are split at asynchronous rupture points into fluxions that exchange
//! messages and can run on separate workers.

pub mod analyzer;
pub mod check;
pub mod compile;
pub mod flx;
pub mod frontend;
pub mod interp;
pub mod pipeliner;
pub mod reference;
pub mod runtime;
pub mod scope;
pub mod workload;

pub use compile::{compile, Compilation, CompileError};
