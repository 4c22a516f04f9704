//! Memory-scope representation: function scopes, bindings and every access
//! to them.
//!
//! Scoping follows MiniJS rules: one scope per function body plus the
//! global scope, `var` and function declarations hoist to the nearest
//! function scope, and a named function expression binds its own name
//! inside its body. Identifiers that resolve to nothing are recorded with
//! `binding: None` and treated downstream as runtime intrinsics.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::frontend::{
    AssignOp, Expr, ExprKind, Func, Ident, NodeId, Program, Span, Stmt, StmtKind,
};

pub type ScopeId = usize;
pub type BindingId = usize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scope {
    pub id: ScopeId,
    /// Function node that owns this scope; `None` for the global scope.
    pub owner: Option<NodeId>,
    pub parent: Option<ScopeId>,
    pub bindings: Vec<BindingId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum BindingKind {
    Var,
    Function,
    Param,
    /// Name of a named function expression, visible inside its own body.
    FunctionName,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Binding {
    pub id: BindingId,
    pub name: String,
    pub scope: ScopeId,
    /// Identifier node of the (first) declaration.
    pub decl: NodeId,
    pub kind: BindingKind,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum AccessKind {
    Read,
    Write,
    ReadWrite,
}

impl AccessKind {
    pub fn writes(self) -> bool {
        matches!(self, AccessKind::Write | AccessKind::ReadWrite)
    }

    pub fn reads(self) -> bool {
        matches!(self, AccessKind::Read | AccessKind::ReadWrite)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Access {
    /// `None` when the name is unresolved (an ambient intrinsic).
    pub binding: Option<BindingId>,
    pub name: String,
    pub node: NodeId,
    pub kind: AccessKind,
    /// The access goes through a property: `x.p = v` or `x.m(...)`.
    pub property_effect: bool,
    /// Scope the access occurs in.
    pub scope: ScopeId,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScopeGraph {
    pub scopes: Vec<Scope>,
    pub bindings: Vec<Binding>,
    pub accesses: Vec<Access>,
    #[serde(skip)]
    function_scopes: HashMap<NodeId, ScopeId>,
}

pub const GLOBAL_SCOPE: ScopeId = 0;

impl ScopeGraph {
    pub fn scope_of_function(&self, func: NodeId) -> Option<ScopeId> {
        self.function_scopes.get(&func).copied()
    }

    /// Is `inner` equal to or nested inside `outer`?
    pub fn scope_within(&self, inner: ScopeId, outer: ScopeId) -> bool {
        let mut cur = Some(inner);
        while let Some(s) = cur {
            if s == outer {
                return true;
            }
            cur = self.scopes[s].parent;
        }
        false
    }

    pub fn binding(&self, id: BindingId) -> &Binding {
        &self.bindings[id]
    }

    pub fn is_global(&self, id: BindingId) -> bool {
        self.bindings[id].scope == GLOBAL_SCOPE
    }

    pub fn access_at(&self, node: NodeId) -> Option<&Access> {
        self.accesses.iter().find(|a| a.node == node)
    }

    pub fn accesses_of(&self, binding: BindingId) -> impl Iterator<Item = &Access> {
        self.accesses
            .iter()
            .filter(move |a| a.binding == Some(binding))
    }

    pub fn lookup(&self, scope: ScopeId, name: &str) -> Option<BindingId> {
        let mut cur = Some(scope);
        while let Some(s) = cur {
            if let Some(b) = self.scopes[s]
                .bindings
                .iter()
                .find(|b| self.bindings[**b].name == name)
            {
                return Some(*b);
            }
            cur = self.scopes[s].parent;
        }
        None
    }

    /// Stable JSON document with sorted keys.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("scope graph serializes")
    }
}

/// Bindings declared strictly outside `func` but accessed inside it,
/// including inside functions nested in it.
pub fn captures(func: NodeId, graph: &ScopeGraph) -> BTreeSet<BindingId> {
    let Some(fscope) = graph.scope_of_function(func) else {
        return BTreeSet::new();
    };
    graph
        .accesses
        .iter()
        .filter(|a| graph.scope_within(a.scope, fscope))
        .filter_map(|a| a.binding)
        .filter(|b| !graph.scope_within(graph.bindings[*b].scope, fscope))
        .collect()
}

pub fn build_scope_graph(program: &Program) -> ScopeGraph {
    let mut builder = Builder {
        graph: ScopeGraph {
            scopes: vec![Scope {
                id: GLOBAL_SCOPE,
                owner: None,
                parent: None,
                bindings: Vec::new(),
            }],
            bindings: Vec::new(),
            accesses: Vec::new(),
            function_scopes: HashMap::new(),
        },
    };
    builder.hoist(GLOBAL_SCOPE, &program.body);
    for stmt in &program.body {
        builder.stmt(GLOBAL_SCOPE, stmt);
    }
    builder.graph
}

struct Builder {
    graph: ScopeGraph,
}

impl Builder {
    fn declare(&mut self, scope: ScopeId, ident: &Ident, kind: BindingKind) -> BindingId {
        if let Some(existing) = self.graph.scopes[scope]
            .bindings
            .iter()
            .copied()
            .find(|b| self.graph.bindings[*b].name == ident.name)
        {
            return existing;
        }
        let id = self.graph.bindings.len();
        self.graph.bindings.push(Binding {
            id,
            name: ident.name.clone(),
            scope,
            decl: ident.id,
            kind,
            span: ident.span,
        });
        self.graph.scopes[scope].bindings.push(id);
        id
    }

    /// Declares hoisted `var` and function names of one function body.
    fn hoist(&mut self, scope: ScopeId, body: &[Stmt]) {
        for stmt in body {
            match &stmt.kind {
                StmtKind::Var { name, .. } => {
                    self.declare(scope, name, BindingKind::Var);
                }
                StmtKind::Function(f) => {
                    if let Some(name) = &f.name {
                        self.declare(scope, name, BindingKind::Function);
                    }
                }
                StmtKind::If {
                    consequent,
                    alternate,
                    ..
                } => {
                    self.hoist(scope, std::slice::from_ref(consequent));
                    if let Some(alt) = alternate {
                        self.hoist(scope, std::slice::from_ref(alt));
                    }
                }
                StmtKind::Block(inner) => self.hoist(scope, inner),
                _ => {}
            }
        }
    }

    fn record(
        &mut self,
        scope: ScopeId,
        name: &str,
        node: NodeId,
        span: Span,
        kind: AccessKind,
        property_effect: bool,
    ) {
        let binding = self.graph.lookup(scope, name);
        self.graph.accesses.push(Access {
            binding,
            name: name.to_string(),
            node,
            kind,
            property_effect,
            scope,
            span,
        });
    }

    fn function(&mut self, parent: ScopeId, node: NodeId, func: &Func, is_expression: bool) {
        let scope = self.graph.scopes.len();
        self.graph.scopes.push(Scope {
            id: scope,
            owner: Some(node),
            parent: Some(parent),
            bindings: Vec::new(),
        });
        self.graph.function_scopes.insert(node, scope);
        if is_expression {
            if let Some(name) = &func.name {
                self.declare(scope, name, BindingKind::FunctionName);
            }
        }
        for p in &func.params {
            // A parameter shadows the function's own name.
            let id = self.graph.bindings.len();
            self.graph.bindings.push(Binding {
                id,
                name: p.name.clone(),
                scope,
                decl: p.id,
                kind: BindingKind::Param,
                span: p.span,
            });
            let scope_bindings = &mut self.graph.scopes[scope].bindings;
            scope_bindings.retain(|b| self.graph.bindings[*b].name != p.name);
            scope_bindings.push(id);
        }
        self.hoist(scope, &func.body);
        for stmt in &func.body {
            self.stmt(scope, stmt);
        }
    }

    fn stmt(&mut self, scope: ScopeId, stmt: &Stmt) {
        match &stmt.kind {
            StmtKind::Var { name, init } => {
                if let Some(init) = init {
                    self.expr(scope, init);
                    self.record(
                        scope,
                        &name.name,
                        name.id,
                        name.span,
                        AccessKind::Write,
                        false,
                    );
                }
            }
            StmtKind::Function(f) => {
                if let Some(name) = &f.name {
                    self.record(
                        scope,
                        &name.name,
                        name.id,
                        name.span,
                        AccessKind::Write,
                        false,
                    );
                }
                self.function(scope, stmt.id, f, false);
            }
            StmtKind::Expr(e) => self.expr(scope, e),
            StmtKind::Return(e) => {
                if let Some(e) = e {
                    self.expr(scope, e);
                }
            }
            StmtKind::If {
                test,
                consequent,
                alternate,
            } => {
                self.expr(scope, test);
                self.stmt(scope, consequent);
                if let Some(alt) = alternate {
                    self.stmt(scope, alt);
                }
            }
            StmtKind::Block(body) => {
                for s in body {
                    self.stmt(scope, s);
                }
            }
        }
    }

    fn expr(&mut self, scope: ScopeId, expr: &Expr) {
        match &expr.kind {
            ExprKind::Ident(name) => {
                self.record(scope, name, expr.id, expr.span, AccessKind::Read, false)
            }
            ExprKind::Object(props) => {
                for (_, v) in props {
                    self.expr(scope, v);
                }
            }
            ExprKind::Function(f) => self.function(scope, expr.id, f, true),
            ExprKind::Call { callee, args } => {
                match &callee.kind {
                    ExprKind::Member { .. } | ExprKind::Index { .. } => {
                        self.property_base(scope, callee, AccessKind::Read)
                    }
                    _ => self.expr(scope, callee),
                }
                for a in args {
                    self.expr(scope, a);
                }
            }
            ExprKind::Member { object, .. } => self.expr(scope, object),
            ExprKind::Index { object, index } => {
                self.expr(scope, object);
                self.expr(scope, index);
            }
            ExprKind::Assign { op, target, value } => {
                self.expr(scope, value);
                match &target.kind {
                    ExprKind::Ident(name) => {
                        let kind = match op {
                            AssignOp::Assign => AccessKind::Write,
                            AssignOp::AddAssign => AccessKind::ReadWrite,
                        };
                        self.record(scope, name, target.id, target.span, kind, false);
                    }
                    _ => self.property_base(scope, target, AccessKind::ReadWrite),
                }
            }
            ExprKind::Binary { left, right, .. } => {
                self.expr(scope, left);
                self.expr(scope, right);
            }
            ExprKind::Unary { operand, .. } => self.expr(scope, operand),
            ExprKind::Number(_)
            | ExprKind::Str(_)
            | ExprKind::Bool(_)
            | ExprKind::Null
            | ExprKind::Placeholder { .. } => {}
        }
    }

    /// Walks a member/index chain; the root identifier gets one access with
    /// `property_effect` set, computed indices are ordinary reads.
    fn property_base(&mut self, scope: ScopeId, target: &Expr, kind: AccessKind) {
        match &target.kind {
            ExprKind::Member { object, .. } => self.property_base(scope, object, kind),
            ExprKind::Index { object, index } => {
                self.property_base(scope, object, kind);
                self.expr(scope, index);
            }
            ExprKind::Ident(name) => self.record(scope, name, target.id, target.span, kind, true),
            _ => self.expr(scope, target),
        }
    }
}
