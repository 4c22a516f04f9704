//! Canonical MiniJS text: two-space indent, one statement per line, single
//! spaces around binary operators, single-quoted strings.

use super::ast::*;

pub fn emit_program(program: &Program) -> String {
    emit_statements(&program.body, 0)
}

pub fn emit_statements(stmts: &[Stmt], indent: usize) -> String {
    let mut p = Printer::new(indent);
    for stmt in stmts {
        p.stmt(stmt);
    }
    p.out
}

pub fn emit_stmt(stmt: &Stmt) -> String {
    emit_statements(std::slice::from_ref(stmt), 0)
}

/// Expression text; multi-line when it contains function bodies, with
/// continuation lines indented relative to `indent`.
pub fn emit_expr(expr: &Expr, indent: usize) -> String {
    let mut p = Printer::new(indent);
    p.expr(expr, 0);
    p.out
}

/// A function as an expression (`function name(a, b) { ... }`), no trailing
/// semicolon.
pub fn emit_function(func: &Func, indent: usize) -> String {
    let mut p = Printer::new(indent);
    p.function(func);
    p.out
}

struct Printer {
    out: String,
    indent: usize,
}

const UNARY_PREC: u8 = 5;
const POSTFIX_PREC: u8 = 6;

impl Printer {
    fn new(indent: usize) -> Self {
        Printer {
            out: String::new(),
            indent,
        }
    }

    fn pad(&mut self) {
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
    }

    fn line_end(&mut self) {
        self.out.push('\n');
    }

    fn stmt(&mut self, stmt: &Stmt) {
        self.pad();
        self.stmt_inline(stmt);
        self.line_end();
    }

    /// Statement text starting at the current column, without trailing newline.
    fn stmt_inline(&mut self, stmt: &Stmt) {
        match &stmt.kind {
            StmtKind::Var { name, init } => {
                self.out.push_str("var ");
                self.out.push_str(&name.name);
                if let Some(init) = init {
                    self.out.push_str(" = ");
                    self.expr(init, 0);
                }
                self.out.push(';');
            }
            StmtKind::Function(func) => self.function(func),
            StmtKind::Expr(expr) => {
                if starts_ambiguously(expr) {
                    self.out.push('(');
                    self.expr(expr, 0);
                    self.out.push(')');
                } else {
                    self.expr(expr, 0);
                }
                self.out.push(';');
            }
            StmtKind::Return(value) => {
                self.out.push_str("return");
                if let Some(v) = value {
                    self.out.push(' ');
                    self.expr(v, 0);
                }
                self.out.push(';');
            }
            StmtKind::If {
                test,
                consequent,
                alternate,
            } => {
                self.out.push_str("if (");
                self.expr(test, 0);
                self.out.push_str(") ");
                self.stmt_inline(consequent);
                if let Some(alt) = alternate {
                    self.out.push_str(" else ");
                    self.stmt_inline(alt);
                }
            }
            StmtKind::Block(body) => self.braced_body(body),
        }
    }

    fn braced_body(&mut self, body: &[Stmt]) {
        if body.is_empty() {
            self.out.push_str("{}");
            return;
        }
        self.out.push('{');
        self.line_end();
        self.indent += 1;
        for s in body {
            self.stmt(s);
        }
        self.indent -= 1;
        self.pad();
        self.out.push('}');
    }

    fn function(&mut self, func: &Func) {
        self.out.push_str("function ");
        if let Some(name) = &func.name {
            self.out.push_str(&name.name);
        }
        self.out.push('(');
        let params: Vec<&str> = func.params.iter().map(|p| p.name.as_str()).collect();
        self.out.push_str(&params.join(", "));
        self.out.push_str(") ");
        self.braced_body(&func.body);
    }

    fn expr(&mut self, expr: &Expr, min_prec: u8) {
        let prec = expr_precedence(expr);
        let wrap = prec < min_prec;
        if wrap {
            self.out.push('(');
        }
        match &expr.kind {
            ExprKind::Number(n) => self.out.push_str(&format_number(*n)),
            ExprKind::Str(s) => self.out.push_str(&quote(s)),
            ExprKind::Bool(b) => self.out.push_str(if *b { "true" } else { "false" }),
            ExprKind::Null => self.out.push_str("null"),
            ExprKind::Ident(name) => self.out.push_str(name),
            ExprKind::Object(props) => {
                if props.is_empty() {
                    self.out.push_str("{}");
                } else {
                    self.out.push('{');
                    for (i, (key, value)) in props.iter().enumerate() {
                        if i > 0 {
                            self.out.push_str(", ");
                        }
                        if is_identifier(key) {
                            self.out.push_str(key);
                        } else {
                            self.out.push_str(&quote(key));
                        }
                        self.out.push_str(": ");
                        self.expr(value, 0);
                    }
                    self.out.push('}');
                }
            }
            ExprKind::Function(func) => self.function(func),
            ExprKind::Call { callee, args } => {
                self.expr(callee, POSTFIX_PREC);
                self.out.push('(');
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.expr(arg, 0);
                }
                self.out.push(')');
            }
            ExprKind::Member { object, property } => {
                self.member_object(object);
                self.out.push('.');
                self.out.push_str(property);
            }
            ExprKind::Index { object, index } => {
                self.member_object(object);
                self.out.push('[');
                self.expr(index, 0);
                self.out.push(']');
            }
            ExprKind::Assign { op, target, value } => {
                self.expr(target, POSTFIX_PREC);
                self.out.push_str(match op {
                    AssignOp::Assign => " = ",
                    AssignOp::AddAssign => " += ",
                });
                self.expr(value, 0);
            }
            ExprKind::Binary { op, left, right } => {
                let p = op.precedence();
                self.expr(left, p);
                self.out.push(' ');
                self.out.push_str(op.symbol());
                self.out.push(' ');
                // Left-associative: an equal-precedence right operand needs parens.
                self.expr(right, p + 1);
            }
            ExprKind::Unary { op, operand } => {
                match op {
                    UnaryOp::Not => self.out.push('!'),
                    UnaryOp::Neg => self.out.push('-'),
                }
                let nested_neg = *op == UnaryOp::Neg
                    && matches!(
                        operand.kind,
                        ExprKind::Unary {
                            op: UnaryOp::Neg,
                            ..
                        }
                    );
                if nested_neg {
                    self.out.push('(');
                    self.expr(operand, 0);
                    self.out.push(')');
                } else {
                    self.expr(operand, UNARY_PREC);
                }
            }
            ExprKind::Placeholder { kind, dest } => {
                self.out.push_str(kind.arrow());
                self.out.push(' ');
                self.out.push_str(dest);
            }
        }
        if wrap {
            self.out.push(')');
        }
    }

    fn member_object(&mut self, object: &Expr) {
        // `1.x` would lex as a malformed number.
        if matches!(object.kind, ExprKind::Number(_)) {
            self.out.push('(');
            self.expr(object, 0);
            self.out.push(')');
        } else {
            self.expr(object, POSTFIX_PREC);
        }
    }
}

fn expr_precedence(expr: &Expr) -> u8 {
    match &expr.kind {
        ExprKind::Assign { .. } => 0,
        ExprKind::Binary { op, .. } => op.precedence(),
        ExprKind::Unary { .. } => UNARY_PREC,
        ExprKind::Placeholder { .. } => 0,
        _ => POSTFIX_PREC,
    }
}

/// True when the statement's first token would be `{` or `function`, which
/// the parser reads as a block or declaration.
fn starts_ambiguously(expr: &Expr) -> bool {
    match &expr.kind {
        ExprKind::Object(_) | ExprKind::Function(_) => true,
        ExprKind::Call { callee: inner, .. }
        | ExprKind::Member { object: inner, .. }
        | ExprKind::Index { object: inner, .. } => starts_ambiguously(inner),
        ExprKind::Assign { target: inner, .. } | ExprKind::Binary { left: inner, .. } => {
            // Parenthesised operands restart the statement.
            expr_precedence(inner) >= expr_precedence(expr) && starts_ambiguously(inner)
        }
        _ => false,
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '$')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
        && !matches!(
            s,
            "var" | "function" | "return" | "if" | "else" | "true" | "false" | "null"
        )
}

pub fn format_number(n: f64) -> String {
    if n.is_finite() && n.fract() == 0.0 && n.abs() < 1e21 {
        format!("{}", n as i128)
    } else {
        format!("{n}")
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\0' => out.push_str("\\0"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}
