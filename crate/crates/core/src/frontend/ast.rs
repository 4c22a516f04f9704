//! MiniJS syntax tree.
//!
//! Every statement, expression and binding identifier carries a [`NodeId`]
//! and a [`Span`]. Ids are dense in parse order so analyses can index
//! side tables by them.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Byte range plus the 1-based line/column of its start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub fn to(self, other: Span) -> Span {
        Span {
            start: self.start,
            end: other.end.max(self.end),
            line: self.line,
            column: self.column,
        }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub body: Vec<Stmt>,
    /// Number of node ids handed out; ids are `0..node_count`.
    pub node_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ident {
    pub id: NodeId,
    pub span: Span,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Func {
    pub name: Option<Ident>,
    pub params: Vec<Ident>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub id: NodeId,
    pub span: Span,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    /// Single-binding `var`; multi-binding declarations are split by the parser.
    Var {
        name: Ident,
        init: Option<Expr>,
    },
    Function(Arc<Func>),
    Expr(Expr),
    Return(Option<Expr>),
    If {
        test: Expr,
        consequent: Box<Stmt>,
        alternate: Option<Box<Stmt>>,
    },
    Block(Vec<Stmt>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub id: NodeId,
    pub span: Span,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Or,
    Eq,
    NotEq,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Or => "||",
            BinaryOp::Eq => "==",
            BinaryOp::NotEq => "!=",
        }
    }

    /// Binding power; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::Eq | BinaryOp::NotEq => 2,
            BinaryOp::Add | BinaryOp::Sub => 3,
            BinaryOp::Mul | BinaryOp::Div => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssignOp {
    Assign,
    AddAssign,
}

/// Start (`>>`) or post (`->`) stream.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    #[serde(alias = "Start")]
    Start,
    #[serde(alias = "Post")]
    Post,
}

impl StreamKind {
    pub fn arrow(self) -> &'static str {
        match self {
            StreamKind::Start => ">>",
            StreamKind::Post => "->",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Number(f64),
    Str(String),
    Bool(bool),
    Null,
    Ident(String),
    Object(Vec<(String, Expr)>),
    Function(Arc<Func>),
    Call {
        callee: Box<Expr>,
        args: Vec<Expr>,
    },
    Member {
        object: Box<Expr>,
        property: String,
    },
    Index {
        object: Box<Expr>,
        index: Box<Expr>,
    },
    Assign {
        op: AssignOp,
        target: Box<Expr>,
        value: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    /// Stream placeholder inside a fluxion body: `>> dest` or `-> dest`.
    Placeholder {
        kind: StreamKind,
        dest: String,
    },
}

impl Expr {
    /// Dotted path of an identifier or member chain, e.g. `fs.readFile`.
    pub fn dotted_path(&self) -> Option<String> {
        match &self.kind {
            ExprKind::Ident(name) => Some(name.clone()),
            ExprKind::Member { object, property } => {
                object.dotted_path().map(|p| format!("{p}.{property}"))
            }
            _ => None,
        }
    }
}

// Structural comparison ignores ids and spans, so normalising both sides
// to zeroed metadata and using `==` is enough.

impl Program {
    pub fn normalized(&self) -> Program {
        Program {
            body: self.body.iter().map(Stmt::normalized).collect(),
            node_count: 0,
        }
    }

    pub fn structurally_eq(&self, other: &Program) -> bool {
        self.normalized() == other.normalized()
    }
}

impl Ident {
    pub fn normalized(&self) -> Ident {
        Ident {
            id: NodeId(0),
            span: Span::default(),
            name: self.name.clone(),
        }
    }
}

impl Func {
    pub fn normalized(&self) -> Func {
        Func {
            name: self.name.as_ref().map(Ident::normalized),
            params: self.params.iter().map(Ident::normalized).collect(),
            body: self.body.iter().map(Stmt::normalized).collect(),
        }
    }
}

impl Stmt {
    pub fn normalized(&self) -> Stmt {
        let kind = match &self.kind {
            StmtKind::Var { name, init } => StmtKind::Var {
                name: name.normalized(),
                init: init.as_ref().map(Expr::normalized),
            },
            StmtKind::Function(f) => StmtKind::Function(Arc::new(f.normalized())),
            StmtKind::Expr(e) => StmtKind::Expr(e.normalized()),
            StmtKind::Return(e) => StmtKind::Return(e.as_ref().map(Expr::normalized)),
            StmtKind::If {
                test,
                consequent,
                alternate,
            } => StmtKind::If {
                test: test.normalized(),
                consequent: Box::new(consequent.normalized()),
                alternate: alternate.as_ref().map(|s| Box::new(s.normalized())),
            },
            StmtKind::Block(b) => StmtKind::Block(b.iter().map(Stmt::normalized).collect()),
        };
        Stmt {
            id: NodeId(0),
            span: Span::default(),
            kind,
        }
    }
}

impl Expr {
    pub fn normalized(&self) -> Expr {
        let kind = match &self.kind {
            ExprKind::Object(props) => ExprKind::Object(
                props
                    .iter()
                    .map(|(k, v)| (k.clone(), v.normalized()))
                    .collect(),
            ),
            ExprKind::Function(f) => ExprKind::Function(Arc::new(f.normalized())),
            ExprKind::Call { callee, args } => ExprKind::Call {
                callee: Box::new(callee.normalized()),
                args: args.iter().map(Expr::normalized).collect(),
            },
            ExprKind::Member { object, property } => ExprKind::Member {
                object: Box::new(object.normalized()),
                property: property.clone(),
            },
            ExprKind::Index { object, index } => ExprKind::Index {
                object: Box::new(object.normalized()),
                index: Box::new(index.normalized()),
            },
            ExprKind::Assign { op, target, value } => ExprKind::Assign {
                op: *op,
                target: Box::new(target.normalized()),
                value: Box::new(value.normalized()),
            },
            ExprKind::Binary { op, left, right } => ExprKind::Binary {
                op: *op,
                left: Box::new(left.normalized()),
                right: Box::new(right.normalized()),
            },
            ExprKind::Unary { op, operand } => ExprKind::Unary {
                op: *op,
                operand: Box::new(operand.normalized()),
            },
            other => other.clone(),
        };
        Expr {
            id: NodeId(0),
            span: Span::default(),
            kind,
        }
    }
}
