//! Variable placement, group tagging and fluxion construction.
//!
//! Every binding gets one placement. `Scope` keeps it in a single stage,
//! `Stream` copies it downstream inside messages, `Share` keeps it in
//! storage common to a group of stages pinned to the same worker.
//!
//! Rules, applied in order:
//!
//! 0. Module handles (`require(...)` results and values derived from them)
//!    are ambient: every stage sees the same intrinsic handle.
//! 1. Accesses confined to one stage give `Scope`. A global initialised by
//!    top-level code and later used in a non-main stage outlives each
//!    request, so it is not confined.
//! 2. A request-scoped binding mutated through a property downstream while
//!    still referenced upstream gives `Share`.
//! 3. Values read only downstream of where they are written are streamed.
//! 4. Everything else is shared.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use crate::analyzer::{Callback, PipelineRepr, StageId, StageRoot, MAIN_STAGE};
use crate::flx::{FluxionBody, FluxionDef, FlxProgram, StreamDecl};
use crate::frontend::visit::{walk_program, NodeRef};
use crate::frontend::{
    AssignOp, Expr, ExprKind, Func, NodeId, Program, Stmt, StmtKind, StreamKind,
};
use crate::scope::{BindingId, BindingKind, ScopeGraph, GLOBAL_SCOPE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    Scope {
        stage: StageId,
    },
    Stream {
        origin: StageId,
        /// Indices into `PipelineRepr::edges`, ascending.
        edges: Vec<usize>,
    },
    Share {
        /// Filled in by `assign_groups`.
        tag: Option<String>,
        members: BTreeSet<StageId>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    AmbientModule,
    /// The name of a callback declaration compiled into its own fluxion.
    Callback,
    Scope,
    ObjectEffect,
    Stream,
    Share,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementEntry {
    pub binding: BindingId,
    pub name: String,
    pub declared_in: StageId,
    pub placement: Placement,
    pub rule: Rule,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub tag: String,
    pub members: BTreeSet<StageId>,
    pub replicable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementReport {
    pub entries: Vec<PlacementEntry>,
    pub groups: Vec<Group>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

impl PlacementReport {
    pub fn entry(&self, name: &str) -> Option<&PlacementEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn group(&self, tag: &str) -> Option<&Group> {
        self.groups.iter().find(|g| g.tag == tag)
    }

    pub fn to_json(&self, pipeline: &PipelineRepr) -> serde_json::Value {
        let stage = |s: StageId| pipeline.stages[s].name.clone();
        let entries: Vec<_> = self
            .entries
            .iter()
            .map(|e| {
                let placement = match &e.placement {
                    Placement::Scope { stage: s } => json!({"kind": "scope", "stage": stage(*s)}),
                    Placement::Stream { origin, edges } => json!({
                        "kind": "stream",
                        "origin": stage(*origin),
                        "edges": edges
                            .iter()
                            .map(|i| {
                                let edge = &pipeline.edges[*i];
                                format!("{}->{}", stage(edge.from), stage(edge.to))
                            })
                            .collect::<Vec<_>>(),
                    }),
                    Placement::Share { tag, members } => json!({
                        "kind": "share",
                        "tag": tag,
                        "members": members.iter().map(|m| stage(*m)).collect::<Vec<_>>(),
                    }),
                };
                json!({
                    "binding": e.name,
                    "declaredIn": stage(e.declared_in),
                    "placement": placement,
                    "rule": e.rule,
                    "reason": e.reason,
                })
            })
            .collect();
        let groups: Vec<_> = self
            .groups
            .iter()
            .map(|g| {
                json!({
                    "tag": g.tag,
                    "members": g.members.iter().map(|m| stage(*m)).collect::<Vec<_>>(),
                    "replicable": g.replicable,
                })
            })
            .collect();
        json!({
            "placements": entries,
            "groups": groups,
            "warnings": self.warnings,
            "notes": self.notes,
        })
    }
}

/// Facts about one program shared by all placement decisions.
pub struct Analysis<'a> {
    pub program: &'a Program,
    pub graph: &'a ScopeGraph,
    pub pipeline: &'a PipelineRepr,
    ambient: HashSet<BindingId>,
    functions: HashMap<NodeId, Arc<Func>>,
    parents: HashMap<NodeId, NodeId>,
}

impl<'a> Analysis<'a> {
    pub fn new(program: &'a Program, graph: &'a ScopeGraph, pipeline: &'a PipelineRepr) -> Self {
        let mut functions = HashMap::new();
        let mut parents = HashMap::new();
        let mut assigned: HashMap<NodeId, &Expr> = HashMap::new();
        walk_program(program, &mut |node, parent| {
            if let Some(p) = parent {
                parents.insert(node.id(), p.id());
            }
            if let Some(f) = node.as_function() {
                functions.insert(node.id(), Arc::new(f.clone()));
            }
            match node {
                NodeRef::Stmt(Stmt {
                    kind:
                        StmtKind::Var {
                            name,
                            init: Some(init),
                        },
                    ..
                }) => {
                    assigned.insert(name.id, init);
                }
                NodeRef::Expr(Expr {
                    kind:
                        ExprKind::Assign {
                            op: AssignOp::Assign,
                            target,
                            value,
                        },
                    ..
                }) => {
                    assigned.insert(target.id, value);
                }
                _ => {}
            }
        });
        let ambient = ambient_bindings(graph, &assigned);
        Analysis {
            program,
            graph,
            pipeline,
            ambient,
            functions,
            parents,
        }
    }

    pub fn is_ambient(&self, b: BindingId) -> bool {
        self.ambient.contains(&b)
    }

    /// Stage that owns the binding's declaring scope.
    pub fn declaring_stage(&self, b: BindingId) -> StageId {
        match self.graph.scopes[self.graph.binding(b).scope].owner {
            None => MAIN_STAGE,
            Some(owner) => self.pipeline.stage_of(owner),
        }
    }

    /// The callback stage whose parameter list declares `b`.
    pub fn stage_parameter_of(&self, b: BindingId) -> Option<StageId> {
        let binding = self.graph.binding(b);
        if binding.kind != BindingKind::Param {
            return None;
        }
        let owner = self.graph.scopes[binding.scope].owner?;
        self.pipeline
            .stages
            .iter()
            .find(|s| s.root == StageRoot::Function(owner))
            .map(|s| s.id)
    }

    /// Where the binding's value comes from: parameters of a callback are
    /// produced by the stage that makes the asynchronous call.
    pub fn origin(&self, b: BindingId) -> StageId {
        if self.graph.is_global(b) {
            return MAIN_STAGE;
        }
        match self.stage_parameter_of(b) {
            Some(d) => self.pipeline.parent(d).unwrap_or(MAIN_STAGE),
            None => self.declaring_stage(b),
        }
    }

    /// The stage rooted at the function declaration that introduces `b`.
    /// Such declarations are removed from the enclosing body, so the name
    /// never needs a value at runtime.
    pub fn callback_declared_by(&self, b: BindingId) -> Option<StageId> {
        let binding = self.graph.binding(b);
        if binding.kind != BindingKind::Function {
            return None;
        }
        self.pipeline.stages.iter().find_map(|s| match s.root {
            StageRoot::Function(f) => self.functions[&f]
                .name
                .as_ref()
                .filter(|n| n.id == binding.decl)
                .map(|_| s.id),
            StageRoot::Main => None,
        })
    }

    /// Is the node inside a function nested in top-level code?
    fn inside_function(&self, node: NodeId) -> bool {
        let mut cur = self.parents.get(&node);
        while let Some(p) = cur {
            if self.functions.contains_key(p) {
                return true;
            }
            cur = self.parents.get(p);
        }
        false
    }
}

/// Globals that only ever hold module handles: initialised by top-level
/// code from `require(...)` or from another such handle, and never
/// reassigned afterwards.
fn ambient_bindings(graph: &ScopeGraph, assigned: &HashMap<NodeId, &Expr>) -> HashSet<BindingId> {
    let mut ambient = HashSet::new();
    loop {
        let before = ambient.len();
        for b in graph.bindings.iter().filter(|b| b.scope == GLOBAL_SCOPE) {
            if ambient.contains(&b.id) || b.kind != BindingKind::Var {
                continue;
            }
            let writes: Vec<_> = graph
                .accesses_of(b.id)
                .filter(|a| a.kind.writes())
                .collect();
            let plain: Vec<_> = writes.iter().filter(|a| !a.property_effect).collect();
            let ok = !plain.is_empty()
                && writes.iter().all(|a| a.scope == GLOBAL_SCOPE)
                && plain.iter().all(|a| {
                    assigned
                        .get(&a.node)
                        .is_some_and(|v| module_rooted(v, graph, &ambient))
                });
            if ok {
                ambient.insert(b.id);
            }
        }
        if ambient.len() == before {
            return ambient;
        }
    }
}

fn module_rooted(expr: &Expr, graph: &ScopeGraph, ambient: &HashSet<BindingId>) -> bool {
    match &expr.kind {
        ExprKind::Call { callee, .. } => match &callee.kind {
            ExprKind::Ident(name) if name == "require" => graph
                .access_at(callee.id)
                .is_some_and(|a| a.binding.is_none()),
            _ => module_rooted(callee, graph, ambient),
        },
        ExprKind::Member { object, .. } => module_rooted(object, graph, ambient),
        ExprKind::Ident(_) => graph
            .access_at(expr.id)
            .and_then(|a| a.binding)
            .is_some_and(|b| ambient.contains(&b)),
        _ => false,
    }
}

fn stage_list(p: &PipelineRepr, stages: &BTreeSet<StageId>) -> String {
    let names: Vec<_> = stages.iter().map(|s| p.stages[*s].name.as_str()).collect();
    format!("{{{}}}", names.join(", "))
}

/// Decides the placement of one binding, with the rule that fired and a
/// human-readable reason.
pub fn classify_variable(an: &Analysis, b: BindingId) -> (Placement, Rule, String) {
    let g = an.graph;
    let p = an.pipeline;
    let global = g.is_global(b);
    if an.is_ambient(b) {
        return (
            Placement::Scope { stage: MAIN_STAGE },
            Rule::AmbientModule,
            "holds a module handle available to every stage".into(),
        );
    }
    if let Some(stage) = an.callback_declared_by(b) {
        return (
            Placement::Scope { stage },
            Rule::Callback,
            "names a callback declaration that becomes its own fluxion".into(),
        );
    }
    // Top-level code of main runs once before any request; for globals
    // those accesses only establish the initial value.
    let accesses: Vec<_> = g
        .accesses_of(b)
        .filter(|a| !(global && a.scope == GLOBAL_SCOPE))
        .collect();
    let init_write = global
        && g.accesses_of(b)
            .any(|a| a.scope == GLOBAL_SCOPE && a.kind.writes());
    let stages: BTreeSet<StageId> = accesses.iter().map(|a| p.stage_of(a.node)).collect();
    let writers: BTreeSet<StageId> = accesses
        .iter()
        .filter(|a| a.kind.writes())
        .map(|a| p.stage_of(a.node))
        .collect();
    let effects: BTreeSet<StageId> = accesses
        .iter()
        .filter(|a| a.property_effect)
        .map(|a| p.stage_of(a.node))
        .collect();
    let param_of = an.stage_parameter_of(b);
    let origin = an.origin(b);
    let home = if global {
        MAIN_STAGE
    } else {
        param_of.unwrap_or_else(|| an.declaring_stage(b))
    };

    // (1) confined to one stage.
    if stages.is_empty() {
        return (
            Placement::Scope { stage: home },
            Rule::Scope,
            "not used after initialisation".into(),
        );
    }
    if stages.len() == 1 {
        let s = *stages.iter().next().unwrap();
        let confined = if global {
            s == MAIN_STAGE || !init_write
        } else {
            s == home
        };
        if confined {
            return (
                Placement::Scope { stage: s },
                Rule::Scope,
                format!("only used in {}", p.stages[s].name),
            );
        }
    }

    // (2) property effects downstream of a stage still holding the object.
    if !global {
        let mut holders = stages.clone();
        if let Some(d) = param_of {
            if p.incoming(d).is_some_and(|e| e.kind == StreamKind::Start) {
                holders.insert(origin);
            }
        }
        let escapes = holders
            .iter()
            .any(|h| effects.iter().any(|e| p.is_upstream(*h, *e)));
        if escapes {
            let reason = format!(
                "mutated through a property in {} while held by {}",
                stage_list(p, &effects),
                stage_list(p, &holders)
            );
            return (
                Placement::Share {
                    tag: None,
                    members: holders,
                },
                Rule::ObjectEffect,
                reason,
            );
        }
    }

    // (3) values flow downstream only.
    let streamable = if global {
        writers.is_empty()
    } else {
        stages
            .iter()
            .all(|s| *s == origin || p.is_upstream(origin, *s))
            && writers
                .iter()
                .all(|w| stages.iter().all(|s| p.comparable(*w, *s)))
    };
    if streamable {
        let edges: BTreeSet<usize> = stages
            .iter()
            .flat_map(|s| p.path_edges(origin, *s))
            .collect();
        return (
            Placement::Stream {
                origin,
                edges: edges.into_iter().collect(),
            },
            Rule::Stream,
            format!(
                "written in {} and only read downstream in {}",
                p.stages[origin].name,
                stage_list(p, &stages)
            ),
        );
    }

    // (4) shared state.
    let reason = if init_write && writers.is_empty() {
        format!(
            "initialised upstream and used in {}",
            stage_list(p, &stages)
        )
    } else if init_write {
        format!(
            "initialised upstream of a start stream and modified in {}",
            stage_list(p, &writers)
        )
    } else {
        format!(
            "modified in {} and used in {}",
            stage_list(p, &writers),
            stage_list(p, &stages)
        )
    };
    (
        Placement::Share {
            tag: None,
            members: stages,
        },
        Rule::Share,
        reason,
    )
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = x;
    while parent[cur] != root {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

/// Union-find over shared placements. Stages sharing any binding end up in
/// one group named after the earliest-declared binding shared by two or
/// more stages. Fills in `tag` on every share placement inside a group.
pub fn assign_groups(
    entries: &mut [PlacementEntry],
    graph: &ScopeGraph,
    stage_count: usize,
) -> Vec<(String, BTreeSet<StageId>)> {
    let mut parent: Vec<usize> = (0..stage_count).collect();
    for e in entries.iter() {
        if let Placement::Share { members, .. } = &e.placement {
            let mut it = members.iter();
            if let Some(first) = it.next() {
                for m in it {
                    let (a, b) = (find(&mut parent, *first), find(&mut parent, *m));
                    parent[b] = a;
                }
            }
        }
    }
    // Earliest-declared multi-member shared binding per component.
    let mut namer: BTreeMap<usize, (usize, String)> = BTreeMap::new();
    for e in entries.iter() {
        if let Placement::Share { members, .. } = &e.placement {
            if members.len() < 2 {
                continue;
            }
            let root = find(&mut parent, *members.iter().next().unwrap());
            let pos = graph.binding(e.binding).span.start;
            let slot = namer.entry(root).or_insert((pos, e.name.clone()));
            if pos < slot.0 {
                *slot = (pos, e.name.clone());
            }
        }
    }
    let mut order: Vec<(usize, usize, String)> = namer
        .into_iter()
        .map(|(root, (pos, name))| (pos, root, name))
        .collect();
    order.sort();
    let mut used = HashSet::new();
    let mut tags: HashMap<usize, String> = HashMap::new();
    let mut groups = Vec::new();
    for (_, root, name) in order {
        let base = format!("grp_{name}");
        let mut tag = base.clone();
        let mut k = 2;
        while !used.insert(tag.clone()) {
            tag = format!("{base}_{k}");
            k += 1;
        }
        let members: BTreeSet<StageId> = (0..stage_count)
            .filter(|s| find(&mut parent, *s) == root)
            .collect();
        tags.insert(root, tag.clone());
        groups.push((tag, members));
    }
    for e in entries.iter_mut() {
        if let Placement::Share { tag, members } = &mut e.placement {
            if let Some(m) = members.iter().next() {
                *tag = tags.get(&find(&mut parent, *m)).cloned();
            }
        }
    }
    groups
}

/// Classifies every binding, assigns groups and computes replicability.
pub fn place_all(an: &Analysis) -> PlacementReport {
    let mut entries: Vec<PlacementEntry> = an
        .graph
        .bindings
        .iter()
        .map(|b| {
            let (placement, rule, reason) = classify_variable(an, b.id);
            PlacementEntry {
                binding: b.id,
                name: b.name.clone(),
                declared_in: an.declaring_stage(b.id),
                placement,
                rule,
                reason,
            }
        })
        .collect();
    let raw_groups = assign_groups(&mut entries, an.graph, an.pipeline.stages.len());
    let contexts = contexts(an, &entries);
    let groups = raw_groups
        .into_iter()
        .map(|(tag, members)| {
            let replicable = members
                .iter()
                .all(|m| *m == MAIN_STAGE || contexts[*m].is_empty());
            Group {
                tag,
                members,
                replicable,
            }
        })
        .collect();

    let mut notes = Vec::new();
    for e in &entries {
        if let Placement::Share { members, .. } = &e.placement {
            if !an.graph.is_global(e.binding) && members.len() > 1 {
                notes.push(format!(
                    "`{}` is request-scoped: it is shared by {} and carried in stream messages instead of a context slot",
                    e.name,
                    stage_list(an.pipeline, members)
                ));
            }
        }
    }
    let mut unresolved: Vec<&str> = an
        .graph
        .accesses
        .iter()
        .filter(|a| a.binding.is_none())
        .map(|a| a.name.as_str())
        .collect();
    unresolved.sort();
    unresolved.dedup();
    for name in unresolved {
        notes.push(format!(
            "`{name}` is not declared in the program; it is provided by the runtime and never placed in a context"
        ));
    }
    PlacementReport {
        entries,
        groups,
        warnings: an.pipeline.warnings.clone(),
        notes,
    }
}

/// Context slots per stage, each list ordered by declaration position.
fn contexts(an: &Analysis, entries: &[PlacementEntry]) -> Vec<Vec<BindingId>> {
    let mut ctx = vec![Vec::new(); an.pipeline.stages.len()];
    for e in entries {
        if !an.graph.is_global(e.binding) || matches!(e.rule, Rule::AmbientModule | Rule::Callback)
        {
            continue;
        }
        match &e.placement {
            Placement::Scope { stage } if *stage != MAIN_STAGE => ctx[*stage].push(e.binding),
            Placement::Share { members, .. } => {
                for m in members.iter().filter(|m| **m != MAIN_STAGE) {
                    ctx[*m].push(e.binding);
                }
            }
            _ => {}
        }
    }
    for list in &mut ctx {
        list.sort_by_key(|b| an.graph.binding(*b).span.start);
    }
    ctx
}

/// Message variables per edge, ordered by declaration position.
fn messages(an: &Analysis, entries: &[PlacementEntry]) -> Vec<Vec<String>> {
    let mut msg: Vec<Vec<BindingId>> = vec![Vec::new(); an.pipeline.edges.len()];
    for e in entries {
        match &e.placement {
            Placement::Stream { edges, .. } => {
                for i in edges {
                    msg[*i].push(e.binding);
                }
            }
            Placement::Share { members, .. } if !an.graph.is_global(e.binding) => {
                let origin = an.origin(e.binding);
                let edges: BTreeSet<usize> = members
                    .iter()
                    .flat_map(|m| an.pipeline.path_edges(origin, *m))
                    .collect();
                for i in edges {
                    msg[i].push(e.binding);
                }
            }
            _ => {}
        }
    }
    msg.into_iter()
        .map(|mut list| {
            list.sort_by_key(|b| an.graph.binding(*b).span.start);
            let mut names: Vec<String> = Vec::new();
            for b in list {
                let name = &an.graph.binding(b).name;
                if !names.contains(name) {
                    names.push(name.clone());
                }
            }
            names
        })
        .collect()
}

/// Stream type written for an edge. A post continuation issued from a
/// function nested in main's top-level code fires once per incoming event,
/// so it is emitted as a start stream.
pub fn emitted_kind(an: &Analysis, edge: usize) -> StreamKind {
    let e = &an.pipeline.edges[edge];
    if e.kind == StreamKind::Post && e.from == MAIN_STAGE && an.inside_function(e.rupture.call_site)
    {
        StreamKind::Start
    } else {
        e.kind
    }
}

pub fn build_fluxions(an: &Analysis, report: &PlacementReport) -> FlxProgram {
    let p = an.pipeline;
    let ctx = contexts(an, &report.entries);
    let msg = messages(an, &report.entries);
    let mut rewriter = Rewriter::default();
    for (i, e) in p.edges.iter().enumerate() {
        let Callback::Resolved(func) = e.rupture.callback else {
            continue;
        };
        rewriter.call_sites.insert(
            e.rupture.call_site,
            (
                e.rupture.arg_index,
                emitted_kind(an, i),
                p.stages[e.to].name.clone(),
            ),
        );
        rewriter.removed.insert(func);
    }
    let fluxions = p
        .stages
        .iter()
        .map(|stage| {
            let tags = report
                .groups
                .iter()
                .filter(|g| g.members.contains(&stage.id))
                .map(|g| g.tag.clone())
                .collect();
            let streams = p
                .edges
                .iter()
                .enumerate()
                .filter(|(_, e)| e.from == stage.id)
                .map(|(i, e)| StreamDecl {
                    kind: emitted_kind(an, i),
                    dest: vec![p.stages[e.to].name.clone()],
                    msg: msg[i].clone(),
                })
                .collect();
            let body = match stage.root {
                StageRoot::Main => FluxionBody::Program(rewriter.stmts(&an.program.body)),
                StageRoot::Function(root) => {
                    let f = &an.functions[&root];
                    FluxionBody::Function(Arc::new(rewriter.func(f)))
                }
            };
            FluxionDef {
                id: stage.name.clone(),
                tags,
                context: ctx[stage.id]
                    .iter()
                    .map(|b| an.graph.binding(*b).name.clone())
                    .collect(),
                streams,
                body,
            }
        })
        .collect();
    FlxProgram { fluxions }
}

/// Copies a body, replacing callback arguments with placeholders and
/// removing callback functions that now live in their own fluxion.
#[derive(Default)]
struct Rewriter {
    call_sites: HashMap<NodeId, (usize, StreamKind, String)>,
    removed: HashSet<NodeId>,
}

impl Rewriter {
    fn stmts(&self, body: &[Stmt]) -> Vec<Stmt> {
        body.iter()
            .filter(|s| !self.removed.contains(&s.id))
            .map(|s| self.stmt(s))
            .collect()
    }

    fn func(&self, f: &Func) -> Func {
        Func {
            name: f.name.clone(),
            params: f.params.clone(),
            body: self.stmts(&f.body),
        }
    }

    fn stmt(&self, s: &Stmt) -> Stmt {
        let kind = match &s.kind {
            StmtKind::Var { name, init } => StmtKind::Var {
                name: name.clone(),
                init: init.as_ref().map(|e| self.expr(e)),
            },
            StmtKind::Function(f) => StmtKind::Function(Arc::new(self.func(f))),
            StmtKind::Expr(e) => StmtKind::Expr(self.expr(e)),
            StmtKind::Return(e) => StmtKind::Return(e.as_ref().map(|e| self.expr(e))),
            StmtKind::If {
                test,
                consequent,
                alternate,
            } => StmtKind::If {
                test: self.expr(test),
                consequent: Box::new(self.stmt(consequent)),
                alternate: alternate.as_ref().map(|a| Box::new(self.stmt(a))),
            },
            StmtKind::Block(body) => StmtKind::Block(self.stmts(body)),
        };
        Stmt { kind, ..s.clone() }
    }

    fn expr(&self, e: &Expr) -> Expr {
        if self.removed.contains(&e.id) {
            return Expr {
                kind: ExprKind::Null,
                ..e.clone()
            };
        }
        let b = |x: &Expr| Box::new(self.expr(x));
        let kind = match &e.kind {
            ExprKind::Object(props) => ExprKind::Object(
                props
                    .iter()
                    .map(|(k, v)| (k.clone(), self.expr(v)))
                    .collect(),
            ),
            ExprKind::Function(f) => ExprKind::Function(Arc::new(self.func(f))),
            ExprKind::Call { callee, args } => {
                let site = self.call_sites.get(&e.id);
                let args = args
                    .iter()
                    .enumerate()
                    .map(|(i, a)| match site {
                        Some((idx, kind, dest)) if *idx == i => Expr {
                            kind: ExprKind::Placeholder {
                                kind: *kind,
                                dest: dest.clone(),
                            },
                            ..a.clone()
                        },
                        _ => self.expr(a),
                    })
                    .collect();
                ExprKind::Call {
                    callee: b(callee),
                    args,
                }
            }
            ExprKind::Member { object, property } => ExprKind::Member {
                object: b(object),
                property: property.clone(),
            },
            ExprKind::Index { object, index } => ExprKind::Index {
                object: b(object),
                index: b(index),
            },
            ExprKind::Assign { op, target, value } => ExprKind::Assign {
                op: *op,
                target: b(target),
                value: b(value),
            },
            ExprKind::Binary { op, left, right } => ExprKind::Binary {
                op: *op,
                left: b(left),
                right: b(right),
            },
            ExprKind::Unary { op, operand } => ExprKind::Unary {
                op: *op,
                operand: b(operand),
            },
            other => other.clone(),
        };
        Expr { kind, ..e.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::{analyze, AsyncCalleeList};
    use crate::flx::emit_flx;
    use crate::frontend::parse_source;
    use crate::scope::build_scope_graph;

    struct Compiled {
        pipeline: PipelineRepr,
        report: PlacementReport,
        flx: FlxProgram,
    }

    fn compile(src: &str) -> Compiled {
        let program = parse_source(src).unwrap();
        let graph = build_scope_graph(&program);
        let pipeline = analyze(&program, &graph, &AsyncCalleeList::default()).unwrap();
        let an = Analysis::new(&program, &graph, &pipeline);
        let report = place_all(&an);
        let flx = build_fluxions(&an, &report);
        Compiled {
            pipeline: pipeline.clone(),
            report,
            flx,
        }
    }

    fn stage(c: &Compiled, name: &str) -> StageId {
        c.pipeline.stage_named(name).unwrap()
    }

    fn members(c: &Compiled, names: &[&str]) -> BTreeSet<StageId> {
        names.iter().map(|n| stage(c, n)).collect()
    }

    const LISTING_1: &str = include_str!("../tests/fixtures/listing1.mjs-mini");
    const LISTING_3: &str = include_str!("../tests/fixtures/listing3.mjs-mini");
    const FIG_4: &str = include_str!("../tests/fixtures/fig4.mjs-mini");

    #[test]
    fn fig4_placements() {
        let c = compile(FIG_4);
        let a = c.report.entry("a").unwrap();
        assert_eq!(
            a.placement,
            Placement::Scope {
                stage: stage(&c, "add")
            }
        );
        let b = c.report.entry("b").unwrap();
        let on_req_to_add = c
            .pipeline
            .edges
            .iter()
            .position(|e| e.from == stage(&c, "onReq") && e.to == stage(&c, "add"))
            .unwrap();
        assert_eq!(
            b.placement,
            Placement::Stream {
                origin: stage(&c, "onReq"),
                edges: vec![on_req_to_add]
            }
        );
        let cc = c.report.entry("c").unwrap();
        assert_eq!(
            cc.placement,
            Placement::Share {
                tag: Some("grp_c".into()),
                members: members(&c, &["add", "end"])
            }
        );
    }

    #[test]
    fn listing_one_placements() {
        let c = compile(LISTING_1);
        let count = c.report.entry("count").unwrap();
        assert_eq!(count.rule, Rule::Share);
        let res = c.report.entry("res").unwrap();
        assert_eq!(
            res.placement,
            Placement::Share {
                tag: Some("grp_res".into()),
                members: members(&c, &["main", "reply"])
            }
        );
        assert_eq!(c.report.entry("fs").unwrap().rule, Rule::AmbientModule);
        assert_eq!(c.report.entry("app").unwrap().rule, Rule::AmbientModule);
        let g = c.report.group("grp_res").unwrap();
        assert_eq!(g.members, members(&c, &["main", "reply"]));
        assert!(!g.replicable);
        assert_eq!(c.report.groups.len(), 1);
    }

    #[test]
    fn listing_one_headers() {
        let c = compile(LISTING_1);
        let text = emit_flx(&c.flx);
        let headers: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with("  ") && !l.is_empty())
            .collect();
        assert_eq!(
            headers,
            [
                "flx main & grp_res",
                ">> handler [res]",
                "flx handler",
                "-> reply [res]",
                "flx reply & grp_res {count}",
                "-> null"
            ]
        );
        assert!(text.contains("  app.get('/', >> handler);\n"));
        assert!(text.contains("    fs.readFile(__filename, -> reply);\n"));
    }

    #[test]
    fn count_free_group_is_replicable() {
        let src = LISTING_1
            .replace("    count += 1;\n", "")
            .replace("count, data", "0, data");
        let c = compile(&src);
        assert!(c.report.group("grp_res").unwrap().replicable);
    }

    #[test]
    fn listing_three_output() {
        let c = compile(LISTING_3);
        let text = emit_flx(&c.flx);
        assert!(
            text.starts_with("flx main & grp_req\n>> anonymous_1000 [req, next]\n"),
            "{text}"
        );
        assert!(
            text.contains("limit: limit}, >> anonymous_1000);\n"),
            "{text}"
        );
        assert!(
            text.contains("flx anonymous_1000 & grp_req\n-> null\n  function (err, buffer) {\n")
        );
        assert_eq!(c.flx.fluxions.len(), 2);
    }

    #[test]
    fn walk_back_callbacks_are_removed_upstream() {
        let src = "var cb = function (e, d) { x = d; }; var x; fs.readFile('f', cb); function g() {} timer.delay(1, g);";
        let c = compile(src);
        let text = emit_flx(&c.flx);
        assert!(text.contains("  var cb = null;\n"), "{text}");
        let main = text.split("\n\n").next().unwrap();
        assert!(!main.contains("function g"), "{text}");
        assert!(text.contains("timer.delay(1, -> g);"));
    }

    #[test]
    fn callback_declaration_names_leave_no_trace() {
        let src = "\
app.get('/', h0);
function h0(req, res) {
  function h1(err, data) {
    res.send(data);
  }
  fs.readFile('f', h1);
}";
        let c = compile(src);
        for name in ["h0", "h1"] {
            assert_eq!(c.report.entry(name).unwrap().rule, Rule::Callback);
        }
        for f in &c.flx.fluxions {
            assert!(f.context.is_empty(), "{}", f.id);
            for s in &f.streams {
                assert!(!s.msg.iter().any(|m| m.starts_with('h')), "{:?}", s.msg);
            }
        }
    }

    #[test]
    fn union_find_merges_overlapping_shares() {
        // x shared by {a, b}, y by {b, c}: one group named after x.
        let src = "\
var x = 0;
var y = 0;
app.get('/', function a(req, res) {
  x += 1;
  fs.readFile('f', function b(e, d) {
    x += 1;
    y += 1;
    timer.delay(1, function c() {
      y += 1;
      res.send(x + y);
    });
  });
});";
        let c = compile(src);
        let g = c.report.group("grp_x").unwrap();
        assert!(members(&c, &["a", "b", "c"]).is_subset(&g.members));
        assert_eq!(c.report.groups.len(), 1);
    }

    #[test]
    fn no_shares_no_tags() {
        let c = compile("var a = 1; app.get('/', function h(req, res) { res.send(req.path); });");
        assert!(c.report.groups.is_empty());
        assert!(c.flx.fluxions.iter().all(|f| f.tags.is_empty()));
    }

    #[test]
    fn single_stage_program() {
        let c = compile("var a = 1; a = a + 1;");
        assert_eq!(
            emit_flx(&c.flx),
            "flx main\n-> null\n  var a = 1;\n  a = a + 1;\n"
        );
    }
}
