//! Executes a fluxion program on a fixed set of workers. Fluxions that share
//! a tag form one unit pinned to a single worker; units are spread over the
//! workers round-robin in registration order, with `main`'s unit on worker 0.
//! Each worker drains its own FIFO queue and fluxions talk only through
//! messages whose payloads are deep copies.

mod lane;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, RecvTimeoutError, Sender, TryRecvError};
use parking_lot::Mutex;
use serde::Serialize;
use thiserror::Error;

use crate::flx::{FluxionDef, FlxError, FlxProgram, MAIN};
use crate::interp::{default_vfs, intrinsics, Env, RuntimeError, Scope, Value, Vfs};
use crate::workload::{data_globals, is_data, ObservedOutputs, Request, Response};
use lane::Lane;

pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    pub workers: usize,
    /// Wall-clock budget for `run_until_idle`.
    pub deadline: Duration,
    /// Instantiate replicable units once per worker.
    pub replicate: bool,
    pub trace: bool,
    pub vfs: Vfs,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            workers: 1,
            deadline: DEFAULT_DEADLINE,
            replicate: false,
            trace: false,
            vfs: default_vfs(),
        }
    }
}

impl RuntimeConfig {
    pub fn with_workers(workers: usize) -> Self {
        RuntimeConfig {
            workers,
            ..Self::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("program has no fluxions")]
    EmptyProgram,
    #[error("program has no `main` fluxion")]
    MissingMain,
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error(transparent)]
    Link(#[from] FlxError),
    #[error("initialisation failed: {0}")]
    Init(RuntimeError),
    #[error("no listener for `{0}`")]
    NoRoute(String),
    #[error("run did not finish within {0:?}")]
    DeadlineExceeded(Duration),
    #[error("a worker thread panicked")]
    WorkerPanic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    /// A request entering through `main`'s listener.
    Inject,
    Start,
    Post,
    /// Continues a handler chain held by `main`.
    Resume,
    /// A plain callback scheduled by a fluxion for itself.
    Task,
}

pub(crate) enum Body {
    Inject(Request),
    Stream {
        bindings: Vec<(String, Value)>,
        args: Vec<Value>,
    },
    Resume(usize),
    Task {
        callback: Value,
        args: Vec<Value>,
    },
}

pub struct Message {
    pub dest: usize,
    pub kind: MessageKind,
    pub from: Option<usize>,
    /// Per `(from, dest)` edge and sending worker, starting at 1.
    pub seq: u64,
    pub origin: u64,
    body: Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Receive,
    Send,
    Error,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceEvent {
    /// Microseconds since the runtime was created.
    pub ts: u64,
    pub worker: usize,
    pub fluxion: String,
    pub event: TraceKind,
    pub seq: u64,
    pub origin_id: u64,
    /// Sender of a received message, or destination of a sent one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DeadLetter {
    pub fluxion: String,
    pub origin_id: u64,
    pub kind: MessageKind,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    pub invocations: BTreeMap<String, u64>,
    pub max_queue_depth: Vec<usize>,
    pub dead_letters: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    DidWork,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase", tag = "mode", content = "worker")]
pub enum Pinning {
    Pinned(usize),
    /// One instance per worker; messages go to worker `originId % workers`.
    Replicated,
}

pub(crate) struct Fluxion {
    pub def: FluxionDef,
}

pub(crate) struct Shared {
    pub fluxions: Vec<Fluxion>,
    pub index: HashMap<String, usize>,
    pub main: usize,
    pub pinning: Vec<Pinning>,
    pub workers: usize,
    senders: Vec<Sender<Message>>,
    pub depth: Vec<AtomicUsize>,
    max_depth: Vec<AtomicUsize>,
    pub in_flight: AtomicUsize,
    pub routes: Mutex<Vec<(String, Vec<Value>)>>,
    pub responses: Mutex<Vec<Response>>,
    pub responded: Mutex<HashSet<u64>>,
    pub dead: Mutex<Vec<DeadLetter>>,
    trace: Option<Mutex<Vec<TraceEvent>>>,
    start: Instant,
    pub vfs: Vfs,
}

impl Shared {
    /// Queues `msg` on `worker`. Safe to call from any lane.
    pub fn enqueue(&self, worker: usize, msg: Message) {
        self.in_flight.fetch_add(1, Ordering::SeqCst);
        let depth = self.depth[worker].fetch_add(1, Ordering::SeqCst) + 1;
        self.max_depth[worker].fetch_max(depth, Ordering::SeqCst);
        // Receivers live as long as the runtime, so sending cannot fail.
        let _ = self.senders[worker].send(msg);
    }

    pub fn route(&self, msg: Message) {
        let worker = self.worker_for(msg.dest, msg.origin);
        self.enqueue(worker, msg);
    }

    fn worker_for(&self, fluxion: usize, origin: u64) -> usize {
        match self.pinning[fluxion] {
            Pinning::Pinned(w) => w,
            Pinning::Replicated => (origin % self.workers as u64) as usize,
        }
    }

    pub fn record(
        &self,
        worker: usize,
        fluxion: &str,
        event: TraceKind,
        seq: u64,
        origin: u64,
        peer: Option<String>,
    ) {
        if let Some(trace) = &self.trace {
            trace.lock().push(TraceEvent {
                ts: self.start.elapsed().as_micros() as u64,
                worker,
                fluxion: fluxion.to_string(),
                event,
                seq,
                origin_id: origin,
                peer,
            });
        }
    }
}

pub struct Runtime {
    shared: Shared,
    lanes: Vec<Mutex<Lane>>,
    globals: Env,
    /// Stores holding context slots outside `main`'s globals, with the
    /// slot names each one owns.
    context_stores: Vec<(Env, Vec<String>)>,
    next_origin: u64,
    inject_seq: u64,
    rejected: Vec<String>,
    elapsed: Duration,
    config: RuntimeConfig,
}

/// Groups fluxions that share a tag; units come out ordered by their first
/// member.
pub fn units(program: &FlxProgram) -> Vec<Vec<usize>> {
    let n = program.fluxions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut by_tag: HashMap<&str, usize> = HashMap::new();
    for (i, f) in program.fluxions.iter().enumerate() {
        for tag in &f.tags {
            match by_tag.get(tag.as_str()) {
                Some(&j) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
                None => {
                    by_tag.insert(tag, i);
                }
            }
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let k = *slot.entry(root).or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[k].push(i);
    }
    out
}

/// A unit can run once per worker when no member other than `main` keeps
/// state in a context slot.
pub fn unit_replicable(program: &FlxProgram, unit: &[usize]) -> bool {
    unit.iter()
        .map(|&i| &program.fluxions[i])
        .all(|f| f.id == MAIN || f.context.is_empty())
}

/// Worker assignment for every fluxion, indexed like `program.fluxions`.
pub fn pinning(program: &FlxProgram, workers: usize, replicate: bool) -> Vec<Pinning> {
    let mut out = vec![Pinning::Pinned(0); program.fluxions.len()];
    let all = units(program);
    let main_unit = all
        .iter()
        .position(|u| u.iter().any(|&i| program.fluxions[i].id == MAIN))
        .unwrap_or(0);
    for (k, unit) in all.iter().enumerate() {
        // `main`'s unit takes worker 0; the rest keep registration order.
        let rank = match k.cmp(&main_unit) {
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Less => k + 1,
            std::cmp::Ordering::Greater => k,
        };
        let replicated = replicate && workers > 1 && unit_replicable(program, unit);
        for &i in unit {
            out[i] = if replicated && program.fluxions[i].id != MAIN {
                Pinning::Replicated
            } else {
                Pinning::Pinned(rank % workers)
            };
        }
    }
    out
}

impl Runtime {
    /// Registers every fluxion, pins units to workers and runs `main`'s
    /// top-level code once on worker 0.
    pub fn new(program: FlxProgram, config: RuntimeConfig) -> Result<Runtime, RunError> {
        if config.workers == 0 {
            return Err(RunError::NoWorkers);
        }
        if program.fluxions.is_empty() {
            return Err(RunError::EmptyProgram);
        }
        program.validate()?;
        let main = program
            .fluxions
            .iter()
            .position(|f| f.id == MAIN)
            .ok_or(RunError::MissingMain)?;
        let workers = config.workers;
        let pins = pinning(&program, workers, config.replicate);
        let unit_list = units(&program);

        let (senders, receivers): (Vec<_>, Vec<_>) = (0..workers).map(|_| unbounded()).unzip();
        let index = program
            .fluxions
            .iter()
            .enumerate()
            .map(|(i, f)| (f.id.clone(), i))
            .collect();
        let n = program.fluxions.len();
        let shared = Shared {
            fluxions: program
                .fluxions
                .iter()
                .cloned()
                .map(|def| Fluxion { def })
                .collect(),
            index,
            main,
            pinning: pins.clone(),
            workers,
            senders,
            depth: (0..workers).map(|_| AtomicUsize::new(0)).collect(),
            max_depth: (0..workers).map(|_| AtomicUsize::new(0)).collect(),
            in_flight: AtomicUsize::new(0),
            routes: Mutex::new(Vec::new()),
            responses: Mutex::new(Vec::new()),
            responded: Mutex::new(HashSet::new()),
            dead: Mutex::new(Vec::new()),
            trace: config.trace.then(|| Mutex::new(Vec::new())),
            start: Instant::now(),
            vfs: config.vfs.clone(),
        };
        let mut lanes: Vec<Lane> = receivers
            .into_iter()
            .enumerate()
            .map(|(worker, rx)| Lane {
                worker,
                rx,
                stores: HashMap::new(),
                chains: HashMap::new(),
                seq: HashMap::new(),
                invocations: vec![0; n],
            })
            .collect();

        let globals = Scope::child(&intrinsics());
        lanes[0]
            .init_main(&shared, &globals)
            .map_err(RunError::Init)?;
        let ambient = Scope::child(&intrinsics());
        for (name, value) in globals.snapshot() {
            if matches!(value, Value::Builtin(_)) {
                ambient.declare(&name, value);
            }
        }

        let mut context_stores = Vec::new();
        for unit in &unit_list {
            let has_main = unit.contains(&main);
            for &i in unit {
                match pins[i] {
                    Pinning::Replicated => {}
                    Pinning::Pinned(w) if has_main => {
                        lanes[w].stores.insert(i, globals.clone());
                    }
                    Pinning::Pinned(_) => {}
                }
            }
            // Replicas keep no context, so one fresh store per worker will do.
            if unit.iter().any(|&i| pins[i] == Pinning::Replicated) {
                for lane in lanes.iter_mut() {
                    let store = Scope::child(&ambient);
                    for &i in unit {
                        if pins[i] == Pinning::Replicated {
                            lane.stores.insert(i, store.clone());
                        }
                    }
                }
            }
            if has_main {
                continue;
            }
            let pinned: Vec<usize> = unit
                .iter()
                .copied()
                .filter(|&i| matches!(pins[i], Pinning::Pinned(_)))
                .collect();
            let Some(&first) = pinned.first() else {
                continue;
            };
            let Pinning::Pinned(w) = pins[first] else {
                unreachable!()
            };
            let store = Scope::child(&ambient);
            let mut slots: Vec<String> = Vec::new();
            for &i in &pinned {
                for name in &shared.fluxions[i].def.context {
                    if slots.contains(name) {
                        continue;
                    }
                    let initial = match globals.get_own(name) {
                        Some(v) => v.transfer().map_err(|e| {
                            RunError::Init(e.in_fluxion(&shared.fluxions[i].def.id))
                        })?,
                        None => Value::Undefined,
                    };
                    store.declare(name, initial);
                    slots.push(name.clone());
                }
                lanes[w].stores.insert(i, store.clone());
            }
            context_stores.push((store, slots));
        }

        Ok(Runtime {
            shared,
            lanes: lanes.into_iter().map(Mutex::new).collect(),
            globals,
            context_stores,
            next_origin: 0,
            inject_seq: 0,
            rejected: Vec::new(),
            elapsed: Duration::ZERO,
            config,
        })
    }

    pub fn workers(&self) -> usize {
        self.shared.workers
    }

    pub fn pinning_of(&self, id: &str) -> Option<Pinning> {
        self.shared.index.get(id).map(|&i| self.shared.pinning[i])
    }

    /// Registered fluxion ids in program order.
    pub fn fluxion_ids(&self) -> Vec<&str> {
        self.shared
            .fluxions
            .iter()
            .map(|f| f.def.id.as_str())
            .collect()
    }

    /// Queues a request for `main`'s listener on `path` and returns its
    /// origin id. Ids are consumed even by rejected requests.
    pub fn inject_request(&mut self, path: &str, body: serde_json::Value) -> Result<u64, RunError> {
        self.next_origin += 1;
        let origin = self.next_origin;
        if !self.shared.routes.lock().iter().any(|(p, _)| p == path) {
            return Err(RunError::NoRoute(path.to_string()));
        }
        self.inject_seq += 1;
        self.shared.route(Message {
            dest: self.shared.main,
            kind: MessageKind::Inject,
            from: None,
            seq: self.inject_seq,
            origin,
            body: Body::Inject(Request {
                path: path.to_string(),
                body,
            }),
        });
        Ok(origin)
    }

    /// Injects every request; unknown routes are recorded as errors in the
    /// observed outputs instead of failing the run.
    pub fn inject_all(&mut self, workload: &[Request]) {
        for req in workload {
            if let Err(e) = self.inject_request(&req.path, req.body.clone()) {
                self.rejected.push(e.to_string());
            }
        }
    }

    /// Processes at most one message from `worker`'s queue on the calling
    /// thread.
    pub fn step(&self, worker: usize) -> Step {
        let mut lane = self.lanes[worker].lock();
        match lane.rx.try_recv() {
            Ok(msg) => {
                lane.process(&self.shared, msg);
                Step::DidWork
            }
            Err(TryRecvError::Empty | TryRecvError::Disconnected) => Step::Idle,
        }
    }

    /// Runs until every queue is empty and nothing is executing. One worker
    /// runs inline on the calling thread; more workers get a thread each.
    pub fn run_until_idle(&mut self) -> Result<Metrics, RunError> {
        let started = Instant::now();
        let deadline = started + self.config.deadline;
        if self.shared.workers == 1 {
            while self.step(0) == Step::DidWork {
                if Instant::now() > deadline {
                    return Err(RunError::DeadlineExceeded(self.config.deadline));
                }
            }
        } else {
            let timed_out = AtomicBool::new(false);
            let shared = &self.shared;
            let timed_out_ref = &timed_out;
            let panicked = std::thread::scope(|scope| {
                let handles: Vec<_> = self
                    .lanes
                    .iter()
                    .map(|lane| {
                        scope.spawn(move || {
                            let mut lane = lane.lock();
                            loop {
                                match lane.rx.recv_timeout(Duration::from_micros(200)) {
                                    Ok(msg) => lane.process(shared, msg),
                                    Err(RecvTimeoutError::Timeout) => {
                                        if shared.in_flight.load(Ordering::SeqCst) == 0
                                            || timed_out_ref.load(Ordering::SeqCst)
                                        {
                                            break;
                                        }
                                    }
                                    Err(RecvTimeoutError::Disconnected) => break,
                                }
                                if Instant::now() > deadline {
                                    timed_out_ref.store(true, Ordering::SeqCst);
                                    break;
                                }
                            }
                        })
                    })
                    .collect();
                handles.into_iter().any(|h| h.join().is_err())
            });
            if panicked {
                return Err(RunError::WorkerPanic);
            }
            if timed_out.load(Ordering::SeqCst) {
                return Err(RunError::DeadlineExceeded(self.config.deadline));
            }
        }
        self.elapsed += started.elapsed();
        Ok(self.metrics())
    }

    pub fn metrics(&self) -> Metrics {
        let mut invocations: BTreeMap<String, u64> = BTreeMap::new();
        for lane in &self.lanes {
            let lane = lane.lock();
            for (i, count) in lane.invocations.iter().enumerate() {
                *invocations
                    .entry(self.shared.fluxions[i].def.id.clone())
                    .or_default() += count;
            }
        }
        Metrics {
            invocations,
            max_queue_depth: self
                .shared
                .max_depth
                .iter()
                .map(|d| d.load(Ordering::SeqCst))
                .collect(),
            dead_letters: self.shared.dead.lock().len(),
            elapsed_ms: self.elapsed.as_secs_f64() * 1000.0,
        }
    }

    pub fn dead_letters(&self) -> Vec<DeadLetter> {
        self.shared.dead.lock().clone()
    }

    pub fn trace(&self) -> Vec<TraceEvent> {
        self.shared
            .trace
            .as_ref()
            .map(|t| t.lock().clone())
            .unwrap_or_default()
    }

    /// Current value of a global, reading context slots where they live.
    pub fn global(&self, name: &str) -> Option<Value> {
        for (store, slots) in &self.context_stores {
            if slots.iter().any(|s| s == name) {
                return store.get_own(name);
            }
        }
        self.globals.get_own(name)
    }

    pub fn final_globals(&self) -> BTreeMap<String, serde_json::Value> {
        let mut out = data_globals(&self.globals);
        for (store, slots) in &self.context_stores {
            for name in slots {
                match store.get_own(name) {
                    Some(v) if is_data(&v) => {
                        out.insert(name.clone(), v.to_json());
                    }
                    _ => {
                        out.remove(name);
                    }
                }
            }
        }
        out
    }

    pub fn outputs(&self) -> ObservedOutputs {
        let mut errors = self.rejected.clone();
        errors.extend(self.shared.dead.lock().iter().map(|d| d.error.clone()));
        ObservedOutputs {
            responses: self.shared.responses.lock().clone(),
            final_globals: self.final_globals(),
            errors,
        }
    }
}

/// Registers `program`, injects `workload` and runs to completion.
pub fn run_program(
    program: FlxProgram,
    workload: &[Request],
    config: RuntimeConfig,
) -> Result<(Runtime, Metrics), RunError> {
    let mut rt = Runtime::new(program, config)?;
    rt.inject_all(workload);
    let metrics = rt.run_until_idle()?;
    Ok((rt, metrics))
}

#[cfg(test)]
mod tests;
