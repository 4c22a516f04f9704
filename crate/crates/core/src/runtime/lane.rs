//! One execution lane: the fluxion instances pinned to a worker, their
//! stores, and the host services their bodies call into.

use std::collections::HashMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use crossbeam_channel::Receiver;

use super::{Body, DeadLetter, Message, MessageKind, Shared, TraceKind};
use crate::flx::FluxionBody;
use crate::frontend::StreamKind;
use crate::interp::{
    request_value, Chain, Env, ErrorKind, Host, Interp, NextToken, RResult, RuntimeError, Scope,
    Sink, Value,
};
use crate::workload::Response;

pub(super) struct Lane {
    pub worker: usize,
    pub rx: Receiver<Message>,
    /// Environment each fluxion instance on this lane runs against.
    pub stores: HashMap<usize, Env>,
    /// Handler chains of requests injected through `main`.
    pub chains: HashMap<u64, Arc<Chain>>,
    /// Next sequence number per `(from, to)` edge sent from this lane.
    pub seq: HashMap<(usize, usize), u64>,
    pub invocations: Vec<u64>,
}

enum Outgoing {
    Fire(Sink, Vec<Value>),
    Task(Value, Vec<Value>),
    Resume(u64, usize),
}

struct LaneHost<'a> {
    shared: &'a Shared,
    outbox: Vec<Outgoing>,
}

impl Host for LaneHost<'_> {
    fn listen(&mut self, path: &str, handlers: Vec<Value>) -> RResult<()> {
        self.shared.routes.lock().push((path.to_string(), handlers));
        Ok(())
    }

    fn schedule(&mut self, callback: Value, args: Vec<Value>) -> RResult<()> {
        self.outbox.push(match callback {
            Value::Sink(sink) => Outgoing::Fire(sink, args),
            other => Outgoing::Task(other, args),
        });
        Ok(())
    }

    fn respond(&mut self, origin: u64, value: serde_json::Value) -> RResult<()> {
        if !self.shared.responded.lock().insert(origin) {
            return Err(RuntimeError::new(
                ErrorKind::Response,
                format!("response for request {origin} already sent"),
            ));
        }
        self.shared.responses.lock().push(Response {
            origin_id: origin,
            value,
        });
        Ok(())
    }

    fn read_file(&self, path: &str) -> Option<String> {
        self.shared.vfs.get(path).cloned()
    }

    fn resume(&mut self, origin: u64, position: usize) -> RResult<()> {
        self.outbox.push(Outgoing::Resume(origin, position));
        Ok(())
    }

    fn fire(&mut self, sink: &Sink, args: Vec<Value>) -> RResult<()> {
        self.outbox.push(Outgoing::Fire(sink.clone(), args));
        Ok(())
    }
}

impl Lane {
    /// Runs `main`'s top-level code in `globals` and flushes what it sent.
    pub fn init_main(&mut self, shared: &Shared, globals: &Env) -> RResult<()> {
        let main = shared.main;
        let FluxionBody::Program(stmts) = &shared.fluxions[main].def.body else {
            return Err(RuntimeError::new(
                ErrorKind::Type,
                "`main` must hold top-level statements",
            ));
        };
        let mut host = LaneHost {
            shared,
            outbox: Vec::new(),
        };
        let result = Interp::new(&mut host).run_program(stmts, globals);
        let outbox = std::mem::take(&mut host.outbox);
        let flushed = self.flush(shared, main, 0, outbox);
        result.map_err(|e| e.in_fluxion(&shared.fluxions[main].def.id))?;
        flushed.into_iter().next().map_or(Ok(()), Err)
    }

    /// Handles one message; errors go to the dead-letter list.
    pub fn process(&mut self, shared: &Shared, msg: Message) {
        shared.depth[self.worker].fetch_sub(1, Ordering::SeqCst);
        let dest = msg.dest;
        let id = shared.fluxions[dest].def.id.clone();
        let from = msg.from.map(|f| shared.fluxions[f].def.id.clone());
        shared.record(
            self.worker,
            &id,
            TraceKind::Receive,
            msg.seq,
            msg.origin,
            from,
        );
        self.invocations[dest] += 1;

        let mut host = LaneHost {
            shared,
            outbox: Vec::new(),
        };
        let result = self.invoke(&mut host, dest, msg.origin, msg.body);
        let outbox = std::mem::take(&mut host.outbox);
        let mut errors: Vec<RuntimeError> = result.err().into_iter().collect();
        errors.extend(self.flush(shared, dest, msg.origin, outbox));
        for e in errors {
            let e = e.in_fluxion(&id);
            shared.record(
                self.worker,
                &id,
                TraceKind::Error,
                msg.seq,
                msg.origin,
                None,
            );
            shared.dead.lock().push(DeadLetter {
                fluxion: id.clone(),
                origin_id: msg.origin,
                kind: msg.kind,
                error: e.to_string(),
            });
        }
        shared.record(
            self.worker,
            &id,
            TraceKind::Complete,
            msg.seq,
            msg.origin,
            None,
        );
        shared.in_flight.fetch_sub(1, Ordering::SeqCst);
    }

    fn invoke(
        &mut self,
        host: &mut LaneHost<'_>,
        dest: usize,
        origin: u64,
        body: Body,
    ) -> RResult<()> {
        let shared = host.shared;
        match body {
            Body::Inject(req) => {
                let handlers = shared
                    .routes
                    .lock()
                    .iter()
                    .find(|(p, _)| *p == req.path)
                    .map(|(_, h)| h.clone())
                    .ok_or_else(|| {
                        RuntimeError::new(
                            ErrorKind::Route,
                            format!("no listener for `{}`", req.path),
                        )
                    })?;
                let chain = Arc::new(Chain {
                    handlers,
                    req: request_value(&req.path, &req.body),
                    res: Value::Response(origin),
                });
                self.chains.insert(origin, chain.clone());
                Interp::new(host).call(&next_token(origin, 0, chain), Vec::new())?;
            }
            Body::Resume(position) => {
                let chain = self.chains.get(&origin).cloned().ok_or_else(|| {
                    RuntimeError::new(
                        ErrorKind::Type,
                        format!("handler chain of request {origin} is not available"),
                    )
                })?;
                Interp::new(host).call(&next_token(origin, position, chain), Vec::new())?;
            }
            Body::Task { callback, args } => {
                Interp::new(host).call(&callback, args)?;
            }
            Body::Stream { bindings, args } => {
                let FluxionBody::Function(func) = &shared.fluxions[dest].def.body else {
                    return Err(RuntimeError::new(
                        ErrorKind::Type,
                        "`main` cannot receive stream messages",
                    ));
                };
                let store = self.stores.get(&dest).ok_or_else(|| {
                    RuntimeError::new(
                        ErrorKind::Type,
                        format!(
                            "fluxion `{}` has no instance on this worker",
                            shared.fluxions[dest].def.id
                        ),
                    )
                })?;
                let scope = Scope::child(store);
                for (name, value) in bindings {
                    scope.declare(&name, value);
                }
                let callee = Interp::closure(func, &scope);
                Interp::new(host).call(&callee, args)?;
            }
        }
        Ok(())
    }

    /// Turns buffered sends into messages, in the order they were made.
    fn flush(
        &mut self,
        shared: &Shared,
        sender: usize,
        origin: u64,
        outbox: Vec<Outgoing>,
    ) -> Vec<RuntimeError> {
        let mut errors = Vec::new();
        for out in outbox {
            let result = match out {
                Outgoing::Fire(sink, args) => self.send_stream(shared, sender, origin, &sink, args),
                Outgoing::Task(callback, args) => {
                    shared.enqueue(
                        self.worker,
                        Message {
                            dest: sender,
                            kind: MessageKind::Task,
                            from: Some(sender),
                            seq: 0,
                            origin,
                            body: Body::Task { callback, args },
                        },
                    );
                    Ok(())
                }
                Outgoing::Resume(token_origin, position) => {
                    let main = shared.main;
                    let seq = self.next_seq(sender, main);
                    shared.route(Message {
                        dest: main,
                        kind: MessageKind::Resume,
                        from: Some(sender),
                        seq,
                        origin: token_origin,
                        body: Body::Resume(position),
                    });
                    Ok(())
                }
            };
            if let Err(e) = result {
                errors.push(e);
            }
        }
        errors
    }

    fn send_stream(
        &mut self,
        shared: &Shared,
        sender: usize,
        origin: u64,
        sink: &Sink,
        args: Vec<Value>,
    ) -> RResult<()> {
        let def = &shared.fluxions[sender].def;
        let decl = def.stream_for(sink.kind, &sink.dest).ok_or_else(|| {
            RuntimeError::new(
                ErrorKind::Type,
                format!(
                    "fluxion `{}` declares no stream `{} {}`",
                    def.id,
                    sink.kind.arrow(),
                    sink.dest
                ),
            )
        })?;
        let args = args
            .iter()
            .map(Value::transfer)
            .collect::<RResult<Vec<_>>>()?;
        for dest_id in &decl.dest {
            let dest = shared.index[dest_id.as_str()];
            let params = shared.fluxions[dest].def.params();
            let mut bindings = Vec::with_capacity(decl.msg.len());
            for name in &decl.msg {
                if params.contains(&name.as_str()) {
                    continue;
                }
                let value = sink.env.lookup(name).ok_or_else(|| {
                    RuntimeError::new(
                        ErrorKind::Reference,
                        format!("stream variable `{name}` is not defined"),
                    )
                })?;
                bindings.push((name.clone(), value.transfer()?));
            }
            let seq = self.next_seq(sender, dest);
            shared.record(
                self.worker,
                &def.id,
                TraceKind::Send,
                seq,
                origin,
                Some(dest_id.clone()),
            );
            shared.route(Message {
                dest,
                kind: match sink.kind {
                    StreamKind::Start => MessageKind::Start,
                    StreamKind::Post => MessageKind::Post,
                },
                from: Some(sender),
                seq,
                origin,
                body: Body::Stream {
                    bindings,
                    args: args.clone(),
                },
            });
        }
        Ok(())
    }

    fn next_seq(&mut self, from: usize, to: usize) -> u64 {
        let n = self.seq.entry((from, to)).or_insert(0);
        *n += 1;
        *n
    }
}

fn next_token(origin: u64, position: usize, chain: Arc<Chain>) -> Value {
    Value::Next(NextToken {
        origin,
        position,
        chain: Some(chain),
    })
}
