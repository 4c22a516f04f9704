//! Rupture-point detection and the pipeline representation.
//!
//! A rupture point is a call to a known asynchronous callee whose callback
//! argument can be traced statically to a function. Each such callback
//! becomes its own stage; the call site links the enclosing stage to it.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::frontend::visit::{walk_program, NodeRef};
use crate::frontend::{
    AssignOp, Expr, ExprKind, Func, NodeId, Program, Span, StmtKind, StreamKind,
};
use crate::scope::{AccessKind, BindingKind, ScopeGraph};

pub const MAIN_STAGE: StageId = 0;
pub type StageId = usize;

const RUNTIME_ONLY: &str = "argument evaluates to a function only at runtime";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyzeError {
    #[error("async callee list is empty")]
    EmptyAsyncList,
    #[error("async callee list repeats pattern `{0}`")]
    DuplicatePattern(String),
    #[error("invalid async callee list: {0}")]
    BadAsyncList(String),
    #[error("callback `{function}` at {span} is reachable from itself")]
    CyclicPipeline { function: String, span: Span },
    #[error("function `{function}` is the callback of more than one rupture point ({span})")]
    DuplicateCallbackUse { function: String, span: Span },
}

/// Which argument of a matched call holds the callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CallbackArg {
    Index(usize),
    Last(LastTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LastTag {
    #[serde(alias = "Last")]
    Last,
}

impl CallbackArg {
    pub const LAST: CallbackArg = CallbackArg::Last(LastTag::Last);

    fn position(self, arg_count: usize) -> Option<usize> {
        match self {
            CallbackArg::Index(i) if i < arg_count => Some(i),
            CallbackArg::Index(_) => None,
            CallbackArg::Last(_) => arg_count.checked_sub(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AsyncCallee {
    pub pattern: String,
    pub callback_arg_index: CallbackArg,
    pub kind: StreamKind,
}

impl AsyncCallee {
    pub fn new(pattern: &str, callback_arg_index: CallbackArg, kind: StreamKind) -> Self {
        AsyncCallee {
            pattern: pattern.to_string(),
            callback_arg_index,
            kind,
        }
    }

    /// Segment-wise match; `*` matches any one segment.
    pub fn matches(&self, callee: &str) -> bool {
        let pat: Vec<&str> = self.pattern.split('.').collect();
        let path: Vec<&str> = callee.split('.').collect();
        pat.len() == path.len() && pat.iter().zip(&path).all(|(p, s)| *p == "*" || p == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct AsyncCalleeList {
    entries: Vec<AsyncCallee>,
}

impl AsyncCalleeList {
    pub fn new(entries: Vec<AsyncCallee>) -> Result<Self, AnalyzeError> {
        if entries.is_empty() {
            return Err(AnalyzeError::EmptyAsyncList);
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.pattern.as_str()) {
                return Err(AnalyzeError::DuplicatePattern(e.pattern.clone()));
            }
        }
        Ok(AsyncCalleeList { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, AnalyzeError> {
        let entries: Vec<AsyncCallee> =
            serde_json::from_str(text).map_err(|e| AnalyzeError::BadAsyncList(e.to_string()))?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[AsyncCallee] {
        &self.entries
    }

    /// First entry in list order whose pattern matches.
    pub fn lookup(&self, callee: &str) -> Option<&AsyncCallee> {
        self.entries.iter().find(|e| e.matches(callee))
    }
}

impl Default for AsyncCalleeList {
    fn default() -> Self {
        use StreamKind::*;
        let last = CallbackArg::LAST;
        AsyncCalleeList::new(vec![
            AsyncCallee::new("app.get", last, Start),
            AsyncCallee::new("app.post", last, Start),
            AsyncCallee::new("app.listen", last, Start),
            AsyncCallee::new("fs.readFile", last, Post),
            AsyncCallee::new("timer.delay", last, Post),
            AsyncCallee::new("getRawBody", last, Post),
        ])
        .expect("default list is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase", tag = "status", content = "detail")]
pub enum Callback {
    Resolved(NodeId),
    Unresolvable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RupturePoint {
    pub call_site: NodeId,
    pub kind: StreamKind,
    pub callee: String,
    pub arg_index: usize,
    pub callback: Callback,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageRoot {
    Main,
    Function(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub id: StageId,
    /// Fluxion name: `main`, the callback's own name, or `anonymous_N`.
    pub name: String,
    pub root: StageRoot,
    pub members: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: StageId,
    pub to: StageId,
    pub kind: StreamKind,
    pub rupture: RupturePoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRepr {
    pub stages: Vec<Stage>,
    pub edges: Vec<Edge>,
    pub post_chains: Vec<Vec<StageId>>,
    /// Ruptures whose callback could not be resolved; they yield no edge.
    pub ignored: Vec<RupturePoint>,
    pub warnings: Vec<String>,
    node_stage: Vec<StageId>,
}

impl PipelineRepr {
    pub fn stage_of(&self, node: NodeId) -> StageId {
        self.node_stage[node.index()]
    }

    pub fn incoming(&self, stage: StageId) -> Option<&Edge> {
        self.edges.iter().find(|e| e.to == stage)
    }

    pub fn parent(&self, stage: StageId) -> Option<StageId> {
        self.incoming(stage).map(|e| e.from)
    }

    pub fn outgoing(&self, stage: StageId) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == stage)
    }

    /// Is `a` a strict ancestor of `b`?
    pub fn is_upstream(&self, a: StageId, b: StageId) -> bool {
        let mut cur = self.parent(b);
        while let Some(s) = cur {
            if s == a {
                return true;
            }
            cur = self.parent(s);
        }
        false
    }

    /// Ancestor, descendant or the same stage.
    pub fn comparable(&self, a: StageId, b: StageId) -> bool {
        a == b || self.is_upstream(a, b) || self.is_upstream(b, a)
    }

    /// Edges on the tree path from `from` down to `to` (empty if `to` is
    /// not downstream of `from`).
    pub fn path_edges(&self, from: StageId, to: StageId) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = to;
        while cur != from {
            let Some(i) = self.edges.iter().position(|e| e.to == cur) else {
                return Vec::new();
            };
            path.push(i);
            cur = self.edges[i].from;
        }
        path.reverse();
        path
    }

    pub fn stage_named(&self, name: &str) -> Option<StageId> {
        self.stages.iter().position(|s| s.name == name)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let stages: Vec<_> = self
            .stages
            .iter()
            .map(|s| {
                json!({
                    "id": s.id,
                    "name": s.name,
                    "root": match s.root {
                        StageRoot::Main => serde_json::Value::Null,
                        StageRoot::Function(n) => json!(n),
                    },
                    "members": s.members.len(),
                })
            })
            .collect();
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                json!({
                    "from": self.stages[e.from].name,
                    "to": self.stages[e.to].name,
                    "kind": e.kind,
                    "callee": e.rupture.callee,
                    "callSite": e.rupture.call_site,
                })
            })
            .collect();
        let chains: Vec<Vec<&str>> = self
            .post_chains
            .iter()
            .map(|c| c.iter().map(|s| self.stages[*s].name.as_str()).collect())
            .collect();
        json!({
            "stages": stages,
            "edges": edges,
            "postChains": chains,
            "ignoredRuptures": self.ignored,
            "warnings": self.warnings,
        })
    }
}

/// Lookup tables over the AST shared by resolution and stage assignment.
struct Index<'a> {
    functions: HashMap<NodeId, &'a Arc<Func>>,
    /// Declaration identifier of a function declaration → statement id.
    decl_function: HashMap<NodeId, NodeId>,
    /// Written identifier node → the plainly assigned right-hand side.
    assigned_value: HashMap<NodeId, &'a Expr>,
    order: Vec<NodeRef<'a>>,
    parents: HashMap<NodeId, NodeId>,
}

impl<'a> Index<'a> {
    fn build(program: &'a Program) -> Self {
        let mut idx = Index {
            functions: HashMap::new(),
            decl_function: HashMap::new(),
            assigned_value: HashMap::new(),
            order: Vec::new(),
            parents: HashMap::new(),
        };
        walk_program(program, &mut |node, parent| {
            if let Some(p) = parent {
                idx.parents.insert(node.id(), p.id());
            }
            match node {
                NodeRef::Stmt(s) => match &s.kind {
                    StmtKind::Function(f) => {
                        idx.functions.insert(s.id, f);
                        if let Some(name) = &f.name {
                            idx.decl_function.insert(name.id, s.id);
                        }
                    }
                    StmtKind::Var {
                        name,
                        init: Some(init),
                    } => {
                        idx.assigned_value.insert(name.id, init);
                    }
                    _ => {}
                },
                NodeRef::Expr(e) => match &e.kind {
                    ExprKind::Function(f) => {
                        idx.functions.insert(e.id, f);
                    }
                    ExprKind::Assign {
                        op: AssignOp::Assign,
                        target,
                        value,
                    } if matches!(target.kind, ExprKind::Ident(_)) => {
                        idx.assigned_value.insert(target.id, value);
                    }
                    _ => {}
                },
                NodeRef::Ident(_) => {}
            }
            idx.order.push(node);
        });
        idx
    }
}

pub fn detect_rupture_points(
    program: &Program,
    graph: &ScopeGraph,
    list: &AsyncCalleeList,
) -> Vec<RupturePoint> {
    let idx = Index::build(program);
    let mut out = Vec::new();
    for node in &idx.order {
        let NodeRef::Expr(call) = node else { continue };
        let ExprKind::Call { callee, args } = &call.kind else {
            continue;
        };
        let Some(path) = callee.dotted_path() else {
            continue;
        };
        let Some(entry) = list.lookup(&path) else {
            continue;
        };
        let Some(pos) = entry.callback_arg_index.position(args.len()) else {
            continue;
        };
        let Some(callback) = resolve_argument(&args[pos], graph, &idx) else {
            continue;
        };
        out.push(RupturePoint {
            call_site: call.id,
            kind: entry.kind,
            callee: path,
            arg_index: pos,
            callback,
            span: call.span,
        });
    }
    out
}

/// Resolves the callback at `arg_index` of the call expression `call_site`.
/// Returns `None` when the call site is not a call or lacks the argument.
pub fn resolve_callback(
    program: &Program,
    call_site: NodeId,
    arg_index: usize,
    graph: &ScopeGraph,
) -> Option<Callback> {
    let idx = Index::build(program);
    let call = idx.order.iter().find_map(|n| match n {
        NodeRef::Expr(e) if e.id == call_site => Some(*e),
        _ => None,
    })?;
    let ExprKind::Call { args, .. } = &call.kind else {
        return None;
    };
    resolve_argument(args.get(arg_index)?, graph, &idx)
}

/// `None` means the argument is statically not a function at all (a
/// literal or object), so the call is not a rupture point.
fn resolve_argument(arg: &Expr, graph: &ScopeGraph, idx: &Index) -> Option<Callback> {
    match &arg.kind {
        ExprKind::Function(_) => Some(Callback::Resolved(arg.id)),
        ExprKind::Number(_)
        | ExprKind::Str(_)
        | ExprKind::Bool(_)
        | ExprKind::Null
        | ExprKind::Object(_) => None,
        ExprKind::Ident(_) => Some(walk_back(arg, graph, idx)),
        _ => Some(Callback::Unresolvable(RUNTIME_ONLY.to_string())),
    }
}

fn walk_back(arg: &Expr, graph: &ScopeGraph, idx: &Index) -> Callback {
    let Some(use_site) = graph.access_at(arg.id) else {
        return Callback::Unresolvable("identifier not tracked".into());
    };
    let Some(binding) = use_site.binding else {
        return Callback::Unresolvable(format!("`{}` is not declared", use_site.name));
    };
    // (position, value) where a hoisted function declaration sorts first.
    let mut last: Option<(usize, Option<NodeId>)> = None;
    for w in graph.accesses_of(binding) {
        if w.kind != AccessKind::Write || w.property_effect {
            continue;
        }
        if !graph.scope_within(use_site.scope, w.scope) {
            continue;
        }
        let (pos, value) = if let Some(decl) = idx.decl_function.get(&w.node) {
            (0, Some(*decl))
        } else if w.span.start < arg.span.start {
            let value = idx
                .assigned_value
                .get(&w.node)
                .filter(|v| matches!(v.kind, ExprKind::Function(_)))
                .map(|v| v.id);
            (w.span.start + 1, value)
        } else {
            continue;
        };
        if last.is_none_or(|(p, _)| pos >= p) {
            last = Some((pos, value));
        }
    }
    match last {
        Some((_, Some(func))) => Callback::Resolved(func),
        Some((_, None)) => Callback::Unresolvable(format!(
            "last assignment of `{}` is not a function expression",
            use_site.name
        )),
        None if graph.binding(binding).kind == BindingKind::Param => {
            Callback::Unresolvable(format!("`{}` is a parameter", use_site.name))
        }
        None => Callback::Unresolvable(format!(
            "no assignment of `{}` precedes the call",
            use_site.name
        )),
    }
}

pub fn build_pipeline(
    program: &Program,
    ruptures: &[RupturePoint],
    _graph: &ScopeGraph,
) -> Result<PipelineRepr, AnalyzeError> {
    let idx = Index::build(program);
    let fn_name = |n: NodeId| -> Option<String> {
        idx.functions
            .get(&n)
            .and_then(|f| f.name.as_ref())
            .map(|i| i.name.clone())
    };

    let mut stage_of_root: HashMap<NodeId, StageId> = HashMap::new();
    let mut stages = vec![Stage {
        id: MAIN_STAGE,
        name: "main".to_string(),
        root: StageRoot::Main,
        members: Vec::new(),
    }];
    let mut ignored = Vec::new();
    let mut warnings = Vec::new();
    let mut taken: HashSet<String> = HashSet::from(["main".to_string()]);
    let mut anonymous = 0;
    let mut resolved = Vec::new();
    for r in ruptures {
        let Callback::Resolved(func) = r.callback else {
            ignored.push(r.clone());
            continue;
        };
        if stage_of_root.contains_key(&func) {
            return Err(AnalyzeError::DuplicateCallbackUse {
                function: fn_name(func).unwrap_or_else(|| "anonymous".into()),
                span: r.span,
            });
        }
        let id = stages.len();
        let base = fn_name(func).unwrap_or_else(|| {
            let n = format!("anonymous_{}", 1000 + anonymous);
            anonymous += 1;
            n
        });
        let mut name = base.clone();
        let mut k = 2;
        while taken.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        if name != base {
            warnings.push(format!(
                "callback name `{base}` collides with another fluxion; renamed to `{name}`"
            ));
        }
        taken.insert(name.clone());
        stage_of_root.insert(func, id);
        stages.push(Stage {
            id,
            name,
            root: StageRoot::Function(func),
            members: Vec::new(),
        });
        resolved.push(r);
    }

    let mut node_stage = vec![MAIN_STAGE; program.node_count as usize];
    for node in &idx.order {
        let id = node.id();
        let stage = match stage_of_root.get(&id) {
            Some(s) => *s,
            None => idx
                .parents
                .get(&id)
                .map_or(MAIN_STAGE, |p| node_stage[p.index()]),
        };
        node_stage[id.index()] = stage;
        stages[stage].members.push(id);
    }

    let mut edges = Vec::new();
    for r in resolved {
        let Callback::Resolved(func) = r.callback else {
            unreachable!()
        };
        edges.push(Edge {
            from: node_stage[r.call_site.index()],
            to: stage_of_root[&func],
            kind: r.kind,
            rupture: r.clone(),
        });
    }

    // Every stage has one incoming edge, so the graph is a tree rooted at
    // Main exactly when every stage is reachable from Main.
    let mut reached = vec![false; stages.len()];
    reached[MAIN_STAGE] = true;
    let mut queue = VecDeque::from([MAIN_STAGE]);
    while let Some(s) = queue.pop_front() {
        for e in edges.iter().filter(|e| e.from == s) {
            if !reached[e.to] {
                reached[e.to] = true;
                queue.push_back(e.to);
            }
        }
    }
    if let Some(stuck) = reached.iter().position(|r| !r) {
        let edge = edges
            .iter()
            .find(|e| e.to == stuck)
            .expect("non-main stage has an edge");
        return Err(AnalyzeError::CyclicPipeline {
            function: stages[stuck].name.clone(),
            span: edge.rupture.span,
        });
    }

    let mut post_chains = Vec::new();
    for start in edges.iter().filter(|e| e.kind == StreamKind::Start) {
        let mut chain = vec![start.to];
        let mut i = 0;
        while i < chain.len() {
            let s = chain[i];
            chain.extend(
                edges
                    .iter()
                    .filter(|e| e.from == s && e.kind == StreamKind::Post)
                    .map(|e| e.to),
            );
            i += 1;
        }
        post_chains.push(chain);
    }

    Ok(PipelineRepr {
        stages,
        edges,
        post_chains,
        ignored,
        warnings,
        node_stage,
    })
}

/// Detect and build in one step.
pub fn analyze(
    program: &Program,
    graph: &ScopeGraph,
    list: &AsyncCalleeList,
) -> Result<PipelineRepr, AnalyzeError> {
    let ruptures = detect_rupture_points(program, graph, list);
    build_pipeline(program, &ruptures, graph)
}
