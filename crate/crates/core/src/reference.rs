//! Single-lane event loop over the original program: the behavioural
//! oracle for compiled programs. Callbacks capture live environments and
//! run from one FIFO task queue.

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use crate::frontend::Program;
use crate::interp::{
    intrinsics, request_value, Chain, ErrorKind, Host, Interp, NextToken, RResult, RuntimeError,
    Scope, Sink, Value, Vfs,
};
use crate::workload::{data_globals, ObservedOutputs, Request, Response};

struct Task {
    callback: Value,
    args: Vec<Value>,
}

struct SequentialHost {
    vfs: Vfs,
    routes: Vec<(String, Vec<Value>)>,
    queue: VecDeque<Task>,
    responses: Vec<Response>,
    responded: HashSet<u64>,
}

impl Host for SequentialHost {
    fn listen(&mut self, path: &str, handlers: Vec<Value>) -> RResult<()> {
        self.routes.push((path.to_string(), handlers));
        Ok(())
    }

    fn schedule(&mut self, callback: Value, args: Vec<Value>) -> RResult<()> {
        self.queue.push_back(Task { callback, args });
        Ok(())
    }

    fn respond(&mut self, origin: u64, value: serde_json::Value) -> RResult<()> {
        if !self.responded.insert(origin) {
            return Err(RuntimeError::new(
                ErrorKind::Response,
                format!("response for request {origin} already sent"),
            ));
        }
        self.responses.push(Response {
            origin_id: origin,
            value,
        });
        Ok(())
    }

    fn read_file(&self, path: &str) -> Option<String> {
        self.vfs.get(path).cloned()
    }

    fn resume(&mut self, origin: u64, _: usize) -> RResult<()> {
        Err(RuntimeError::new(
            ErrorKind::Type,
            format!("handler chain of request {origin} is not available"),
        ))
    }

    fn fire(&mut self, sink: &Sink, _: Vec<Value>) -> RResult<()> {
        Err(RuntimeError::new(
            ErrorKind::Type,
            format!(
                "stream placeholder `{}` outside a compiled program",
                sink.dest
            ),
        ))
    }
}

/// Runs `program`, then feeds every request (origin ids 1, 2, ...) into the
/// matching listener and drains the task queue. Errors inside a task are
/// recorded and do not stop the run; an error in top-level code does.
pub fn run_sequential(
    program: &Program,
    workload: &[Request],
    vfs: Vfs,
) -> Result<ObservedOutputs, RuntimeError> {
    let mut host = SequentialHost {
        vfs,
        routes: Vec::new(),
        queue: VecDeque::new(),
        responses: Vec::new(),
        responded: HashSet::new(),
    };
    let globals = Scope::child(&intrinsics());
    Interp::new(&mut host).run_program(&program.body, &globals)?;

    let mut errors = Vec::new();
    for (i, req) in workload.iter().enumerate() {
        let origin = i as u64 + 1;
        let Some((_, handlers)) = host.routes.iter().find(|(p, _)| *p == req.path) else {
            errors.push(
                RuntimeError::new(ErrorKind::Route, format!("no listener for `{}`", req.path))
                    .to_string(),
            );
            continue;
        };
        let chain = Arc::new(Chain {
            handlers: handlers.clone(),
            req: request_value(&req.path, &req.body),
            res: Value::Response(origin),
        });
        host.queue.push_back(Task {
            callback: Value::Next(NextToken {
                origin,
                position: 0,
                chain: Some(chain),
            }),
            args: Vec::new(),
        });
    }

    while let Some(task) = host.queue.pop_front() {
        if let Err(e) = Interp::new(&mut host).call(&task.callback, task.args) {
            errors.push(e.to_string());
        }
    }

    Ok(ObservedOutputs {
        responses: host.responses,
        final_globals: data_globals(&globals),
        errors,
    })
}
