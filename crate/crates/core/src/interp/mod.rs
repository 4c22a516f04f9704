//! Strict evaluator for MiniJS bodies plus the intrinsics the programs may
//! call. Asynchronous intrinsics hand their callbacks to a [`Host`], which
//! is either the fluxion runtime or the sequential reference interpreter.

mod value;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use thiserror::Error;

use crate::frontend::{AssignOp, BinaryOp, Expr, ExprKind, Func, Span, Stmt, StmtKind, UnaryOp};
pub use value::{
    number_to_string, Builtin, Chain, Closure, Env, NextToken, ObjRef, Scope, Sink, Value,
};

pub const FILENAME: &str = "/srv/app.js";
pub const FILE_CONTENT: &str = "<h1>fluxion</h1>";
const MAX_CALL_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Type,
    Reference,
    Range,
    Transfer,
    Response,
    Route,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Type => "TypeError",
            ErrorKind::Reference => "RefError",
            ErrorKind::Range => "RangeError",
            ErrorKind::Transfer => "TransferError",
            ErrorKind::Response => "ResponseError",
            ErrorKind::Route => "NoRouteError",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct RuntimeError {
    pub kind: ErrorKind,
    pub message: String,
    pub span: Option<Span>,
    pub fluxion: Option<String>,
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if let Some(span) = self.span {
            write!(f, " at {span}")?;
        }
        if let Some(flx) = &self.fluxion {
            write!(f, " in {flx}")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl RuntimeError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        RuntimeError {
            kind,
            message: message.into(),
            span: None,
            fluxion: None,
        }
    }

    fn at(mut self, span: Span) -> Self {
        self.span.get_or_insert(span);
        self
    }

    pub fn in_fluxion(mut self, id: &str) -> Self {
        self.fluxion.get_or_insert_with(|| id.to_string());
        self
    }
}

pub type RResult<T> = Result<T, RuntimeError>;

/// Services the evaluator needs from whoever drives execution.
pub trait Host {
    /// `app.get/post(path, ...handlers)`.
    fn listen(&mut self, path: &str, handlers: Vec<Value>) -> RResult<()>;
    /// Queues `callback(...args)` to run after the current task.
    fn schedule(&mut self, callback: Value, args: Vec<Value>) -> RResult<()>;
    /// Records the response for a request; the host rejects a second one.
    fn respond(&mut self, origin: u64, value: serde_json::Value) -> RResult<()>;
    fn read_file(&self, path: &str) -> Option<String>;
    /// Continues a handler chain owned by another fluxion.
    fn resume(&mut self, origin: u64, position: usize) -> RResult<()>;
    /// Sends `args` along the stream a placeholder stands for.
    fn fire(&mut self, sink: &Sink, args: Vec<Value>) -> RResult<()>;
}

pub type Vfs = Arc<HashMap<String, String>>;

pub fn default_vfs() -> Vfs {
    Arc::new(HashMap::from([(
        FILENAME.to_string(),
        FILE_CONTENT.to_string(),
    )]))
}

/// Root scope holding names every program may use without declaring them.
pub fn intrinsics() -> Env {
    let env = Scope::root();
    env.declare("require", Value::Builtin(Builtin::Require));
    env.declare("template", Value::Builtin(Builtin::Template));
    env.declare("now", Value::Builtin(Builtin::Now));
    env.declare("busy", Value::Builtin(Builtin::Busy));
    env.declare("__filename", Value::from(FILENAME));
    env.declare("undefined", Value::Undefined);
    env
}

/// The request object handed to listeners.
pub fn request_value(path: &str, body: &serde_json::Value) -> Value {
    let body = from_json(body);
    let length = body.to_js_string().len() as f64;
    Value::object(vec![
        ("path", Value::from(path)),
        ("body", body),
        (
            "headers",
            Value::object(vec![("content-length", Value::Num(length))]),
        ),
    ])
}

pub fn from_json(j: &serde_json::Value) -> Value {
    use serde_json::Value as J;
    match j {
        J::Null => Value::Null,
        J::Bool(b) => Value::Bool(*b),
        J::Number(n) => Value::Num(n.as_f64().unwrap_or(f64::NAN)),
        J::String(s) => Value::from(s.as_str()),
        J::Array(items) => {
            let keys: Vec<String> = (0..items.len()).map(|i| i.to_string()).collect();
            Value::object(
                keys.iter()
                    .map(String::as_str)
                    .zip(items.iter().map(from_json))
                    .collect(),
            )
        }
        J::Object(map) => Value::object(
            map.iter()
                .map(|(k, v)| (k.as_str(), from_json(v)))
                .collect(),
        ),
    }
}

enum Flow {
    Normal,
    Return(Value),
}

pub struct Interp<'h> {
    host: &'h mut dyn Host,
    depth: usize,
}

fn type_error(message: impl Into<String>) -> RuntimeError {
    RuntimeError::new(ErrorKind::Type, message)
}

/// Declares hoisted `var` names and function declarations of one body.
fn hoist(stmts: &[Stmt], env: &Env) {
    for s in stmts {
        match &s.kind {
            StmtKind::Var { name, .. } => env.declare_hoisted(&name.name),
            StmtKind::If {
                consequent,
                alternate,
                ..
            } => {
                hoist(std::slice::from_ref(consequent), env);
                if let Some(alt) = alternate {
                    hoist(std::slice::from_ref(alt), env);
                }
            }
            StmtKind::Block(body) => hoist(body, env),
            _ => {}
        }
    }
    for s in stmts {
        if let StmtKind::Function(f) = &s.kind {
            if let Some(name) = &f.name {
                env.declare(
                    &name.name,
                    Value::Function(Closure {
                        func: f.clone(),
                        env: env.clone(),
                        self_named: false,
                    }),
                );
            }
        }
    }
}

impl<'h> Interp<'h> {
    pub fn new(host: &'h mut dyn Host) -> Self {
        Interp { host, depth: 0 }
    }

    /// Runs top-level statements in `env`, hoisting declarations first.
    pub fn run_program(&mut self, stmts: &[Stmt], env: &Env) -> RResult<()> {
        hoist(stmts, env);
        self.exec_block(stmts, env)?;
        Ok(())
    }

    pub fn closure(func: &Arc<Func>, env: &Env) -> Value {
        Value::Function(Closure {
            func: func.clone(),
            env: env.clone(),
            self_named: true,
        })
    }

    fn exec_block(&mut self, stmts: &[Stmt], env: &Env) -> RResult<Flow> {
        for s in stmts {
            if let Flow::Return(v) = self.exec(s, env)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn exec(&mut self, stmt: &Stmt, env: &Env) -> RResult<Flow> {
        match &stmt.kind {
            StmtKind::Var { name, init } => {
                if let Some(init) = init {
                    let v = self.eval(init, env)?;
                    env.declare(&name.name, v);
                }
            }
            StmtKind::Function(_) => {}
            StmtKind::Expr(e) => {
                self.eval(e, env)?;
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e, env)?,
                    None => Value::Undefined,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::If {
                test,
                consequent,
                alternate,
            } => {
                if self.eval(test, env)?.truthy() {
                    return self.exec(consequent, env);
                } else if let Some(alt) = alternate {
                    return self.exec(alt, env);
                }
            }
            StmtKind::Block(body) => return self.exec_block(body, env),
        }
        Ok(Flow::Normal)
    }

    pub fn eval(&mut self, expr: &Expr, env: &Env) -> RResult<Value> {
        self.eval_inner(expr, env).map_err(|e| e.at(expr.span))
    }

    fn eval_inner(&mut self, expr: &Expr, env: &Env) -> RResult<Value> {
        Ok(match &expr.kind {
            ExprKind::Number(n) => Value::Num(*n),
            ExprKind::Str(s) => Value::from(s.as_str()),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Null => Value::Null,
            ExprKind::Ident(name) => env.lookup(name).ok_or_else(|| {
                RuntimeError::new(ErrorKind::Reference, format!("`{name}` is not defined"))
            })?,
            ExprKind::Object(props) => {
                let mut entries = Vec::with_capacity(props.len());
                for (k, v) in props {
                    entries.push((k.as_str(), self.eval(v, env)?));
                }
                Value::object(entries)
            }
            ExprKind::Function(f) => Self::closure(f, env),
            ExprKind::Call { callee, args } => {
                let f = self.eval(callee, env)?;
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.eval(a, env)?);
                }
                self.call(&f, values)?
            }
            ExprKind::Member { object, property } => {
                let o = self.eval(object, env)?;
                get_property(&o, property)?
            }
            ExprKind::Index { object, index } => {
                let o = self.eval(object, env)?;
                let k = self.eval(index, env)?.to_js_string();
                get_property(&o, &k)?
            }
            ExprKind::Assign { op, target, value } => self.assign(*op, target, value, env)?,
            ExprKind::Binary {
                op: BinaryOp::Or,
                left,
                right,
            } => {
                let l = self.eval(left, env)?;
                if l.truthy() {
                    l
                } else {
                    self.eval(right, env)?
                }
            }
            ExprKind::Binary { op, left, right } => {
                let l = self.eval(left, env)?;
                let r = self.eval(right, env)?;
                binary(*op, &l, &r)
            }
            ExprKind::Unary { op, operand } => {
                let v = self.eval(operand, env)?;
                match op {
                    UnaryOp::Not => Value::Bool(!v.truthy()),
                    UnaryOp::Neg => Value::Num(-v.to_number()),
                }
            }
            ExprKind::Placeholder { kind, dest } => Value::Sink(Sink {
                kind: *kind,
                dest: dest.clone(),
                env: env.clone(),
            }),
        })
    }

    fn assign(&mut self, op: AssignOp, target: &Expr, value: &Expr, env: &Env) -> RResult<Value> {
        match &target.kind {
            ExprKind::Ident(name) => {
                let v = self.eval(value, env)?;
                let v = match op {
                    AssignOp::Assign => v,
                    AssignOp::AddAssign => {
                        let old = env.lookup(name).ok_or_else(|| {
                            RuntimeError::new(
                                ErrorKind::Reference,
                                format!("`{name}` is not defined"),
                            )
                        })?;
                        binary(BinaryOp::Add, &old, &v)
                    }
                };
                if !env.assign(name, v.clone()) {
                    return Err(RuntimeError::new(
                        ErrorKind::Reference,
                        format!("assignment to undeclared `{name}`"),
                    ));
                }
                Ok(v)
            }
            ExprKind::Member { object, property } => {
                let o = self.eval(object, env)?;
                let v = self.eval(value, env)?;
                self.set_compound(op, &o, property, v)
            }
            ExprKind::Index { object, index } => {
                let o = self.eval(object, env)?;
                let k = self.eval(index, env)?.to_js_string();
                let v = self.eval(value, env)?;
                self.set_compound(op, &o, &k, v)
            }
            _ => Err(type_error("invalid assignment target")),
        }
    }

    fn set_compound(&mut self, op: AssignOp, o: &Value, key: &str, v: Value) -> RResult<Value> {
        let v = match op {
            AssignOp::Assign => v,
            AssignOp::AddAssign => binary(BinaryOp::Add, &get_property(o, key)?, &v),
        };
        match o {
            Value::Object(map) => {
                map.lock().insert(key.to_string(), v.clone());
                Ok(v)
            }
            other => Err(type_error(format!(
                "cannot set property '{key}' of {}",
                other.type_name()
            ))),
        }
    }

    pub fn call(&mut self, f: &Value, args: Vec<Value>) -> RResult<Value> {
        match f {
            Value::Function(c) => {
                if self.depth >= MAX_CALL_DEPTH {
                    return Err(RuntimeError::new(
                        ErrorKind::Range,
                        "maximum call depth exceeded",
                    ));
                }
                let env = Scope::child(&c.env);
                if c.self_named {
                    if let Some(name) = &c.func.name {
                        env.declare(&name.name, f.clone());
                    }
                }
                for (i, p) in c.func.params.iter().enumerate() {
                    env.declare(&p.name, args.get(i).cloned().unwrap_or(Value::Undefined));
                }
                hoist(&c.func.body, &env);
                self.depth += 1;
                let flow = self.exec_block(&c.func.body, &env);
                self.depth -= 1;
                Ok(match flow? {
                    Flow::Return(v) => v,
                    Flow::Normal => Value::Undefined,
                })
            }
            Value::Builtin(b) => self.call_builtin(*b, args),
            Value::Send(origin) => {
                let v = args.first().cloned().unwrap_or(Value::Undefined);
                self.host.respond(*origin, v.to_json())?;
                Ok(Value::Undefined)
            }
            Value::Next(token) => {
                match &token.chain {
                    Some(chain) => {
                        if let Some(h) = chain.handlers.get(token.position) {
                            let next = Value::Next(NextToken {
                                origin: token.origin,
                                position: token.position + 1,
                                chain: Some(chain.clone()),
                            });
                            self.call(h, vec![chain.req.clone(), chain.res.clone(), next])?;
                        }
                    }
                    None => self.host.resume(token.origin, token.position)?,
                }
                Ok(Value::Undefined)
            }
            Value::Sink(sink) => {
                self.host.fire(sink, args)?;
                Ok(Value::Undefined)
            }
            other => Err(type_error(format!(
                "{} is not a function",
                other.type_name()
            ))),
        }
    }

    fn schedule_last(&mut self, args: Vec<Value>, results: Vec<Value>) -> RResult<Value> {
        let cb = args.last().cloned().unwrap_or(Value::Undefined);
        if !is_callable(&cb) {
            return Err(type_error("callback is not a function"));
        }
        self.host.schedule(cb, results)?;
        Ok(Value::Undefined)
    }

    fn call_builtin(&mut self, b: Builtin, args: Vec<Value>) -> RResult<Value> {
        let arg = |i: usize| args.get(i).cloned().unwrap_or(Value::Undefined);
        match b {
            Builtin::Require => Ok(Value::Builtin(match arg(0).to_js_string().as_str() {
                "express" => Builtin::ExpressFactory,
                "fs" => Builtin::Fs,
                "timer" => Builtin::Timer,
                "raw-body" => Builtin::RawBody,
                _ => Builtin::StubModule,
            })),
            Builtin::Template => Ok(Value::from(format!(
                "{}:{}",
                arg(0).to_js_string(),
                arg(1).to_js_string()
            ))),
            Builtin::Now => {
                static START: OnceLock<Instant> = OnceLock::new();
                let start = START.get_or_init(Instant::now);
                Ok(Value::Num(start.elapsed().as_secs_f64() * 1000.0))
            }
            Builtin::Busy => Ok(Value::Num(busy(arg(0).to_number()))),
            Builtin::ExpressFactory => Ok(Value::Builtin(Builtin::App)),
            Builtin::AppRoute => {
                let path = arg(0).to_js_string();
                let handlers = args.into_iter().skip(1).collect();
                self.host.listen(&path, handlers)?;
                Ok(Value::Undefined)
            }
            Builtin::AppListen => {
                if args.len() > 1 && is_callable(args.last().unwrap()) {
                    self.schedule_last(args, Vec::new())?;
                }
                Ok(Value::Undefined)
            }
            Builtin::ReadFile => {
                let path = arg(0).to_js_string();
                let results = match self.host.read_file(&path) {
                    Some(data) => vec![Value::Null, Value::from(data)],
                    None => vec![
                        Value::from(format!("ENOENT: no such file '{path}'")),
                        Value::Undefined,
                    ],
                };
                self.schedule_last(args, results)
            }
            Builtin::Delay => self.schedule_last(args, Vec::new()),
            Builtin::RawBody => {
                let body = match arg(0) {
                    Value::Object(_) => get_property(&arg(0), "body")?,
                    _ => Value::Undefined,
                };
                self.schedule_last(args, vec![Value::Null, body])
            }
            Builtin::StubHandler => {
                let body = get_property(&arg(0), "body")?;
                match arg(1) {
                    Value::Response(origin) => {
                        self.host.respond(origin, body.to_json())?;
                        Ok(Value::Undefined)
                    }
                    other => Err(type_error(format!(
                        "handler expects a response object, got {}",
                        other.type_name()
                    ))),
                }
            }
            Builtin::App | Builtin::Fs | Builtin::Timer | Builtin::StubModule => {
                Err(type_error("module object is not a function"))
            }
        }
    }
}

fn is_callable(v: &Value) -> bool {
    matches!(
        v,
        Value::Function(_) | Value::Sink(_) | Value::Builtin(_) | Value::Next(_) | Value::Send(_)
    )
}

/// CPU-bound loop whose result depends on every iteration.
fn busy(n: f64) -> f64 {
    let n = if n.is_finite() && n > 0.0 {
        n as u64
    } else {
        0
    };
    let mut x: u64 = 0x9e37_79b9_7f4a_7c15;
    for i in 0..n {
        x = std::hint::black_box(
            x.wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(i | 1),
        );
    }
    (x >> 40) as f64
}

pub fn get_property(o: &Value, key: &str) -> RResult<Value> {
    Ok(match o {
        Value::Object(map) => map.lock().get(key).cloned().unwrap_or(Value::Undefined),
        Value::Str(s) if key == "length" => Value::Num(s.chars().count() as f64),
        Value::Response(origin) if key == "send" => Value::Send(*origin),
        Value::Builtin(Builtin::App) => match key {
            "get" | "post" => Value::Builtin(Builtin::AppRoute),
            "listen" => Value::Builtin(Builtin::AppListen),
            _ => Value::Undefined,
        },
        Value::Builtin(Builtin::Fs) if key == "readFile" => Value::Builtin(Builtin::ReadFile),
        Value::Builtin(Builtin::Timer) if key == "delay" => Value::Builtin(Builtin::Delay),
        Value::Builtin(Builtin::StubModule) => Value::Builtin(Builtin::StubHandler),
        Value::Undefined | Value::Null => {
            return Err(type_error(format!(
                "cannot read property '{key}' of {}",
                o.type_name()
            )))
        }
        _ => Value::Undefined,
    })
}

pub fn binary(op: BinaryOp, l: &Value, r: &Value) -> Value {
    match op {
        BinaryOp::Add => {
            let stringy = |v: &Value| {
                !matches!(
                    v,
                    Value::Undefined | Value::Null | Value::Bool(_) | Value::Num(_)
                )
            };
            if stringy(l) || stringy(r) {
                Value::from(l.to_js_string() + &r.to_js_string())
            } else {
                Value::Num(l.to_number() + r.to_number())
            }
        }
        BinaryOp::Sub => Value::Num(l.to_number() - r.to_number()),
        BinaryOp::Mul => Value::Num(l.to_number() * r.to_number()),
        BinaryOp::Div => Value::Num(l.to_number() / r.to_number()),
        BinaryOp::Eq => Value::Bool(l.loose_eq(r)),
        BinaryOp::NotEq => Value::Bool(!l.loose_eq(r)),
        BinaryOp::Or => {
            if l.truthy() {
                l.clone()
            } else {
                r.clone()
            }
        }
    }
}
