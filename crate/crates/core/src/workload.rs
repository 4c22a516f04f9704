//! Request workloads and the observable outputs both executors produce.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::interp::{Env, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub path: String,
    #[serde(default)]
    pub body: serde_json::Value,
}

impl Request {
    pub fn get(path: &str) -> Self {
        Request {
            path: path.to_string(),
            body: serde_json::Value::Null,
        }
    }
}

pub fn parse_workload(text: &str) -> Result<Vec<Request>, serde_json::Error> {
    serde_json::from_str(text)
}

/// `n` identical requests to `path`.
pub fn repeated(path: &str, n: usize) -> Vec<Request> {
    vec![Request::get(path); n]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Response {
    pub origin_id: u64,
    pub value: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ObservedOutputs {
    /// In the order the responses were sent.
    pub responses: Vec<Response>,
    /// Data-valued globals after the run; functions and module handles are
    /// left out.
    pub final_globals: BTreeMap<String, serde_json::Value>,
    pub errors: Vec<String>,
}

impl ObservedOutputs {
    /// Responses grouped per origin, each group in send order.
    pub fn per_origin(&self) -> BTreeMap<u64, Vec<serde_json::Value>> {
        let mut out: BTreeMap<u64, Vec<serde_json::Value>> = BTreeMap::new();
        for r in &self.responses {
            out.entry(r.origin_id).or_default().push(r.value.clone());
        }
        out
    }
}

pub fn is_data(v: &Value) -> bool {
    matches!(
        v,
        Value::Undefined
            | Value::Null
            | Value::Bool(_)
            | Value::Num(_)
            | Value::Str(_)
            | Value::Object(_)
    )
}

pub fn data_globals(env: &Env) -> BTreeMap<String, serde_json::Value> {
    env.snapshot()
        .into_iter()
        .filter(|(_, v)| is_data(v))
        .map(|(k, v)| (k, v.to_json()))
        .collect()
}
