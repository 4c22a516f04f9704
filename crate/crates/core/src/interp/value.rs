use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use parking_lot::Mutex;

use super::{ErrorKind, RuntimeError};
use crate::frontend::{format_number, Func, StreamKind};

pub type ObjRef = Arc<Mutex<IndexMap<String, Value>>>;
pub type Env = Arc<Scope>;

/// One level of the environment chain.
#[derive(Debug, Default)]
pub struct Scope {
    vars: Mutex<HashMap<String, Value>>,
    parent: Option<Env>,
}

impl Scope {
    pub fn root() -> Env {
        Arc::new(Scope::default())
    }

    pub fn child(parent: &Env) -> Env {
        Arc::new(Scope {
            vars: Mutex::new(HashMap::new()),
            parent: Some(parent.clone()),
        })
    }

    pub fn declare(&self, name: &str, value: Value) {
        self.vars.lock().insert(name.to_string(), value);
    }

    /// Declares `name` as undefined unless this scope already has it.
    pub fn declare_hoisted(&self, name: &str) {
        self.vars
            .lock()
            .entry(name.to_string())
            .or_insert(Value::Undefined);
    }

    pub fn has_own(&self, name: &str) -> bool {
        self.vars.lock().contains_key(name)
    }

    pub fn get_own(&self, name: &str) -> Option<Value> {
        self.vars.lock().get(name).cloned()
    }

    pub fn lookup(&self, name: &str) -> Option<Value> {
        if let Some(v) = self.vars.lock().get(name) {
            return Some(v.clone());
        }
        self.parent.as_ref().and_then(|p| p.lookup(name))
    }

    /// Assigns to the nearest scope declaring `name`; false if none does.
    pub fn assign(&self, name: &str, value: Value) -> bool {
        {
            let mut vars = self.vars.lock();
            if let Some(slot) = vars.get_mut(name) {
                *slot = value;
                return true;
            }
        }
        match &self.parent {
            Some(p) => p.assign(name, value),
            None => false,
        }
    }

    /// Own bindings sorted by name.
    pub fn snapshot(&self) -> Vec<(String, Value)> {
        let mut out: Vec<_> = self
            .vars
            .lock()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

#[derive(Clone)]
pub struct Closure {
    pub func: Arc<Func>,
    pub env: Env,
    /// Function expressions see their own name inside their body.
    pub self_named: bool,
}

impl fmt::Debug for Closure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self
            .func
            .name
            .as_ref()
            .map_or("anonymous", |n| n.name.as_str());
        write!(f, "Closure({name})")
    }
}

/// A stream placeholder evaluated inside a fluxion body. It remembers the
/// environment it was created in so the runtime can read the message
/// variables when the stream fires.
#[derive(Clone)]
pub struct Sink {
    pub kind: StreamKind,
    pub dest: String,
    pub env: Env,
}

impl fmt::Debug for Sink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sink({} {})", self.kind.arrow(), self.dest)
    }
}

/// Continuation of an express-style handler chain.
#[derive(Clone, Debug)]
pub struct NextToken {
    pub origin: u64,
    /// Index of the handler `next()` runs.
    pub position: usize,
    /// Present while the token stays on the worker that owns the chain.
    pub chain: Option<Arc<Chain>>,
}

#[derive(Debug)]
pub struct Chain {
    pub handlers: Vec<Value>,
    pub req: Value,
    pub res: Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Require,
    Template,
    Now,
    Busy,
    ExpressFactory,
    App,
    AppRoute,
    AppListen,
    Fs,
    ReadFile,
    Timer,
    Delay,
    RawBody,
    /// A module this runtime does not model; its members are echo handlers.
    StubModule,
    StubHandler,
}

#[derive(Clone, Debug)]
pub enum Value {
    Undefined,
    Null,
    Bool(bool),
    Num(f64),
    Str(Arc<str>),
    Object(ObjRef),
    Function(Closure),
    Builtin(Builtin),
    Response(u64),
    Send(u64),
    Next(NextToken),
    Sink(Sink),
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(Arc::from(s))
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(Arc::from(s))
    }
}

impl From<f64> for Value {
    fn from(n: f64) -> Self {
        Value::Num(n)
    }
}

impl Value {
    pub fn object(entries: Vec<(&str, Value)>) -> Value {
        Value::Object(Arc::new(Mutex::new(
            entries
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        )))
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::Undefined | Value::Null => false,
            Value::Bool(b) => *b,
            Value::Num(n) => *n != 0.0 && !n.is_nan(),
            Value::Str(s) => !s.is_empty(),
            _ => true,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Undefined => "undefined",
            Value::Null => "null",
            Value::Bool(_) => "boolean",
            Value::Num(_) => "number",
            Value::Str(_) => "string",
            Value::Function(_) | Value::Builtin(_) | Value::Send(_) | Value::Next(_) => "function",
            _ => "object",
        }
    }

    pub fn to_number(&self) -> f64 {
        match self {
            Value::Undefined => f64::NAN,
            Value::Null => 0.0,
            Value::Bool(b) => f64::from(u8::from(*b)),
            Value::Num(n) => *n,
            Value::Str(s) => {
                let t = s.trim();
                if t.is_empty() {
                    0.0
                } else {
                    t.parse().unwrap_or(f64::NAN)
                }
            }
            _ => f64::NAN,
        }
    }

    pub fn to_js_string(&self) -> String {
        match self {
            Value::Undefined => "undefined".into(),
            Value::Null => "null".into(),
            Value::Bool(b) => b.to_string(),
            Value::Num(n) => number_to_string(*n),
            Value::Str(s) => s.to_string(),
            Value::Object(_) | Value::Response(_) => "[object Object]".into(),
            Value::Sink(s) => format!("[stream {}]", s.dest),
            _ => "function () { [native code] }".into(),
        }
    }

    /// Loose equality (`==`).
    pub fn loose_eq(&self, other: &Value) -> bool {
        use Value::*;
        match (self, other) {
            (Undefined | Null, Undefined | Null) => true,
            (Undefined | Null, _) | (_, Undefined | Null) => false,
            (Num(a), Num(b)) => a == b,
            (Str(a), Str(b)) => a == b,
            (Bool(a), Bool(b)) => a == b,
            (Num(_) | Str(_) | Bool(_), Num(_) | Str(_) | Bool(_)) => {
                self.to_number() == other.to_number()
            }
            (Object(a), Object(b)) => Arc::ptr_eq(a, b),
            (Function(a), Function(b)) => {
                Arc::ptr_eq(&a.func, &b.func) && Arc::ptr_eq(&a.env, &b.env)
            }
            (Builtin(a), Builtin(b)) => a == b,
            (Response(a), Response(b)) | (Send(a), Send(b)) => a == b,
            _ => false,
        }
    }

    /// Deep copy for a message crossing fluxion boundaries. Closures and
    /// stream placeholders cannot leave the fluxion that created them.
    pub fn transfer(&self) -> Result<Value, RuntimeError> {
        self.transfer_depth(0)
    }

    fn transfer_depth(&self, depth: usize) -> Result<Value, RuntimeError> {
        const MAX_DEPTH: usize = 64;
        if depth > MAX_DEPTH {
            return Err(RuntimeError::new(
                ErrorKind::Transfer,
                "value is nested too deeply (or cyclic) to be copied into a message",
            ));
        }
        Ok(match self {
            Value::Object(o) => {
                let entries: Vec<(String, Value)> = o
                    .lock()
                    .iter()
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                let mut copy = IndexMap::with_capacity(entries.len());
                for (k, v) in entries {
                    copy.insert(k, v.transfer_depth(depth + 1)?);
                }
                Value::Object(Arc::new(Mutex::new(copy)))
            }
            Value::Function(c) => {
                let name = c
                    .func
                    .name
                    .as_ref()
                    .map_or("anonymous", |n| n.name.as_str());
                return Err(RuntimeError::new(
                    ErrorKind::Transfer,
                    format!("function `{name}` cannot be copied into a message"),
                ));
            }
            Value::Sink(s) => {
                return Err(RuntimeError::new(
                    ErrorKind::Transfer,
                    format!("stream `{}` cannot be copied into a message", s.dest),
                ))
            }
            Value::Next(t) => Value::Next(NextToken {
                origin: t.origin,
                position: t.position,
                chain: None,
            }),
            other => other.clone(),
        })
    }

    /// JSON view used for responses and global snapshots.
    pub fn to_json(&self) -> serde_json::Value {
        self.to_json_depth(0)
    }

    fn to_json_depth(&self, depth: usize) -> serde_json::Value {
        use serde_json::Value as J;
        if depth > 32 {
            return J::String("[deep]".into());
        }
        match self {
            Value::Undefined | Value::Null => J::Null,
            Value::Bool(b) => J::Bool(*b),
            Value::Num(n) if n.is_finite() && n.fract() == 0.0 && n.abs() < 9e15 => {
                J::from(*n as i64)
            }
            Value::Num(n) => serde_json::Number::from_f64(*n)
                .map(J::Number)
                .unwrap_or_else(|| J::String(number_to_string(*n))),
            Value::Str(s) => J::String(s.to_string()),
            Value::Object(o) => {
                let entries: Vec<(String, Value)> = o
                    .lock()
                    .iter()
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                J::Object(
                    entries
                        .into_iter()
                        .map(|(k, v)| (k, v.to_json_depth(depth + 1)))
                        .collect(),
                )
            }
            Value::Response(o) => J::String(format!("[response {o}]")),
            Value::Sink(s) => J::String(format!("[stream {}]", s.dest)),
            _ => J::String("[function]".into()),
        }
    }
}

pub fn number_to_string(n: f64) -> String {
    if n.is_nan() {
        "NaN".into()
    } else if n.is_infinite() {
        if n > 0.0 { "Infinity" } else { "-Infinity" }.into()
    } else if n == 0.0 {
        "0".into()
    } else {
        format_number(n)
    }
}
