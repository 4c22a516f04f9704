//! Compiles a program, runs it both sequentially and as fluxions, and diffs
//! what each execution observed.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::analyzer::AsyncCalleeList;
use crate::compile::{compile, CompileError};
use crate::flx::FlxProgram;
use crate::interp::{default_vfs, RuntimeError, Vfs};
use crate::reference::run_sequential;
use crate::runtime::{run_program, RunError, RuntimeConfig};
use crate::workload::{ObservedOutputs, Request};

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub workers: usize,
    pub replicate: bool,
    pub async_list: AsyncCalleeList,
    /// Run this program instead of the compiler's output.
    pub flx_override: Option<FlxProgram>,
    pub vfs: Vfs,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            workers: 1,
            replicate: false,
            async_list: AsyncCalleeList::default(),
            flx_override: None,
            vfs: default_vfs(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("reference run failed: {0}")]
    Reference(RuntimeError),
    #[error("fluxion run failed: {0}")]
    Runtime(#[from] RunError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subject {
    Response,
    Global,
    Errors,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Mismatch {
    pub subject: Subject,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub expected: serde_json::Value,
    pub actual: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Timings {
    pub compile_ms: f64,
    pub reference_ms: f64,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckReport {
    /// True exactly when `mismatches` is empty.
    pub equivalent: bool,
    pub workers: usize,
    pub requests: usize,
    pub mismatches: Vec<Mismatch>,
    pub placements: serde_json::Value,
    pub expected: ObservedOutputs,
    pub actual: ObservedOutputs,
    pub timings: Timings,
}

/// Per-origin responses, final globals and the number of errors must agree.
pub fn diff(expected: &ObservedOutputs, actual: &ObservedOutputs) -> Vec<Mismatch> {
    let mut out = Vec::new();
    let (e, a) = (expected.per_origin(), actual.per_origin());
    let origins: BTreeSet<u64> = e.keys().chain(a.keys()).copied().collect();
    for origin in origins {
        let (ev, av) = (e.get(&origin), a.get(&origin));
        if ev != av {
            out.push(Mismatch {
                subject: Subject::Response,
                origin_id: Some(origin),
                name: None,
                expected: serde_json::json!(ev.cloned().unwrap_or_default()),
                actual: serde_json::json!(av.cloned().unwrap_or_default()),
            });
        }
    }
    let names: BTreeSet<&String> = expected
        .final_globals
        .keys()
        .chain(actual.final_globals.keys())
        .collect();
    for name in names {
        let (ev, av) = (
            expected.final_globals.get(name),
            actual.final_globals.get(name),
        );
        if ev != av {
            out.push(Mismatch {
                subject: Subject::Global,
                origin_id: None,
                name: Some(name.clone()),
                expected: ev.cloned().unwrap_or(serde_json::Value::Null),
                actual: av.cloned().unwrap_or(serde_json::Value::Null),
            });
        }
    }
    if expected.errors.len() != actual.errors.len() {
        out.push(Mismatch {
            subject: Subject::Errors,
            origin_id: None,
            name: None,
            expected: serde_json::json!(expected.errors.len()),
            actual: serde_json::json!(actual.errors.len()),
        });
    }
    out
}

pub fn check(
    source: &str,
    workload: &[Request],
    options: &CheckOptions,
) -> Result<CheckReport, CheckError> {
    let t = Instant::now();
    let compilation = compile(source, &options.async_list)?;
    let compile_ms = ms(t);

    let t = Instant::now();
    let expected = run_sequential(&compilation.program, workload, options.vfs.clone())
        .map_err(CheckError::Reference)?;
    let reference_ms = ms(t);

    let program = options
        .flx_override
        .clone()
        .unwrap_or_else(|| compilation.flx.clone());
    let config = RuntimeConfig {
        workers: options.workers,
        replicate: options.replicate,
        vfs: options.vfs.clone(),
        ..RuntimeConfig::default()
    };
    let t = Instant::now();
    let (rt, _) = run_program(program, workload, config)?;
    let actual = rt.outputs();
    let runtime_ms = ms(t);

    let mismatches = diff(&expected, &actual);
    Ok(CheckReport {
        equivalent: mismatches.is_empty(),
        workers: options.workers,
        requests: workload.len(),
        mismatches,
        placements: compilation.report.to_json(&compilation.pipeline),
        expected,
        actual,
        timings: Timings {
            compile_ms,
            reference_ms,
            runtime_ms,
        },
    })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}
