//! Pre-order traversal over every id-carrying node.

use super::ast::*;

#[derive(Debug, Clone, Copy)]
pub enum NodeRef<'a> {
    Stmt(&'a Stmt),
    Expr(&'a Expr),
    Ident(&'a Ident),
}

impl<'a> NodeRef<'a> {
    pub fn id(&self) -> NodeId {
        match self {
            NodeRef::Stmt(s) => s.id,
            NodeRef::Expr(e) => e.id,
            NodeRef::Ident(i) => i.id,
        }
    }

    pub fn span(&self) -> Span {
        match self {
            NodeRef::Stmt(s) => s.span,
            NodeRef::Expr(e) => e.span,
            NodeRef::Ident(i) => i.span,
        }
    }

    /// The function this node introduces, if it is a function declaration
    /// or expression.
    pub fn as_function(&self) -> Option<&'a Func> {
        match self {
            NodeRef::Stmt(Stmt {
                kind: StmtKind::Function(f),
                ..
            }) => Some(f),
            NodeRef::Expr(Expr {
                kind: ExprKind::Function(f),
                ..
            }) => Some(f),
            _ => None,
        }
    }
}

/// Calls `f(node, parent)` for every node in source order.
pub fn walk_program<'a>(program: &'a Program, f: &mut dyn FnMut(NodeRef<'a>, Option<NodeRef<'a>>)) {
    for s in &program.body {
        walk_stmt(s, None, f);
    }
}

pub fn walk_stmt<'a>(
    stmt: &'a Stmt,
    parent: Option<NodeRef<'a>>,
    f: &mut dyn FnMut(NodeRef<'a>, Option<NodeRef<'a>>),
) {
    let me = NodeRef::Stmt(stmt);
    f(me, parent);
    match &stmt.kind {
        StmtKind::Var { name, init } => {
            f(NodeRef::Ident(name), Some(me));
            if let Some(init) = init {
                walk_expr(init, Some(me), f);
            }
        }
        StmtKind::Function(func) => walk_func(func, me, f),
        StmtKind::Expr(e) => walk_expr(e, Some(me), f),
        StmtKind::Return(e) => {
            if let Some(e) = e {
                walk_expr(e, Some(me), f);
            }
        }
        StmtKind::If {
            test,
            consequent,
            alternate,
        } => {
            walk_expr(test, Some(me), f);
            walk_stmt(consequent, Some(me), f);
            if let Some(alt) = alternate {
                walk_stmt(alt, Some(me), f);
            }
        }
        StmtKind::Block(body) => {
            for s in body {
                walk_stmt(s, Some(me), f);
            }
        }
    }
}

fn walk_func<'a>(
    func: &'a Func,
    me: NodeRef<'a>,
    f: &mut dyn FnMut(NodeRef<'a>, Option<NodeRef<'a>>),
) {
    if let Some(name) = &func.name {
        f(NodeRef::Ident(name), Some(me));
    }
    for p in &func.params {
        f(NodeRef::Ident(p), Some(me));
    }
    for s in &func.body {
        walk_stmt(s, Some(me), f);
    }
}

pub fn walk_expr<'a>(
    expr: &'a Expr,
    parent: Option<NodeRef<'a>>,
    f: &mut dyn FnMut(NodeRef<'a>, Option<NodeRef<'a>>),
) {
    let me = NodeRef::Expr(expr);
    f(me, parent);
    match &expr.kind {
        ExprKind::Object(props) => {
            for (_, v) in props {
                walk_expr(v, Some(me), f);
            }
        }
        ExprKind::Function(func) => walk_func(func, me, f),
        ExprKind::Call { callee, args } => {
            walk_expr(callee, Some(me), f);
            for a in args {
                walk_expr(a, Some(me), f);
            }
        }
        ExprKind::Member { object, .. } => walk_expr(object, Some(me), f),
        ExprKind::Index { object, index } => {
            walk_expr(object, Some(me), f);
            walk_expr(index, Some(me), f);
        }
        ExprKind::Assign { target, value, .. } => {
            walk_expr(target, Some(me), f);
            walk_expr(value, Some(me), f);
        }
        ExprKind::Binary { left, right, .. } => {
            walk_expr(left, Some(me), f);
            walk_expr(right, Some(me), f);
        }
        ExprKind::Unary { operand, .. } => walk_expr(operand, Some(me), f),
        _ => {}
    }
}
