use std::sync::Arc;

use super::ast::*;
use super::lexer::{Keyword, Token, TokenKind, RESERVED};
use super::ParseError;

/// Parses a full MiniJS program. Stream placeholders are rejected.
pub fn parse(tokens: &[Token]) -> Result<Program, ParseError> {
    Parser::new(tokens, false).program()
}

/// Parses a fluxion body: statements that may contain `>> id` / `-> id`
/// placeholders in expression position.
pub fn parse_with_placeholders(tokens: &[Token]) -> Result<Program, ParseError> {
    Parser::new(tokens, true).program()
}

/// Parses a fluxion body that is a single function expression, with
/// placeholders allowed. Returns the function and the number of ids used.
pub fn parse_function_with_placeholders(tokens: &[Token]) -> Result<(Func, u32), ParseError> {
    let mut p = Parser::new(tokens, true);
    if !p.at_keyword(Keyword::Function) {
        return Err(p.error("`function`"));
    }
    p.advance();
    let func = p.function_rest(false)?;
    if p.peek().is_some() {
        return Err(p.error("end of function body"));
    }
    Ok((func, p.next_id))
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    next_id: u32,
    placeholders: bool,
}

type PResult<T> = Result<T, ParseError>;

impl<'t> Parser<'t> {
    fn new(tokens: &'t [Token], placeholders: bool) -> Self {
        Parser {
            tokens,
            pos: 0,
            next_id: 0,
            placeholders,
        }
    }

    fn fresh_id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&'t TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn at_punct(&self, p: &str) -> bool {
        matches!(self.peek_kind(), Some(TokenKind::Punct(q)) if *q == p)
    }

    fn at_keyword(&self, k: Keyword) -> bool {
        matches!(self.peek_kind(), Some(TokenKind::Keyword(q)) if *q == k)
    }

    fn advance(&mut self) -> Option<&'t Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn current_span(&self) -> Span {
        match self.peek() {
            Some(t) => t.span,
            None => {
                let mut s = self.tokens.last().map(|t| t.span).unwrap_or_default();
                s.start = s.end;
                s
            }
        }
    }

    fn prev_span(&self) -> Span {
        self.tokens[self.pos - 1].span
    }

    fn error(&self, expected: impl Into<String>) -> ParseError {
        ParseError {
            span: self.current_span(),
            expected: expected.into(),
            found: self
                .peek_kind()
                .map(|k| k.to_string())
                .unwrap_or_else(|| "end of input".to_string()),
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<Span> {
        if self.at_punct(p) {
            Ok(self.advance().unwrap().span)
        } else {
            Err(self.error(format!("`{p}`")))
        }
    }

    fn ident(&mut self) -> PResult<Ident> {
        match self.peek_kind() {
            Some(TokenKind::Ident(name)) => {
                self.reject_reserved(name)?;
                let span = self.advance().unwrap().span;
                Ok(Ident {
                    id: self.fresh_id(),
                    span,
                    name: name.clone(),
                })
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn reject_reserved(&self, name: &str) -> PResult<()> {
        if RESERVED.contains(&name) {
            Err(ParseError {
                span: self.current_span(),
                expected: "a construct of the MiniJS subset".into(),
                found: format!("unsupported keyword `{name}`"),
            })
        } else {
            Ok(())
        }
    }

    fn program(mut self) -> PResult<Program> {
        let mut body = Vec::new();
        while self.peek().is_some() {
            self.statement_into(&mut body)?;
        }
        Ok(Program {
            body,
            node_count: self.next_id,
        })
    }

    /// Parses one statement; a multi-binding `var` pushes several.
    fn statement_into(&mut self, out: &mut Vec<Stmt>) -> PResult<()> {
        match self.peek_kind() {
            Some(TokenKind::Keyword(Keyword::Var)) => self.var_declaration(out),
            _ => {
                let stmt = self.statement()?;
                out.push(stmt);
                Ok(())
            }
        }
    }

    fn var_declaration(&mut self, out: &mut Vec<Stmt>) -> PResult<()> {
        let mut start = self.advance().unwrap().span;
        loop {
            let name = self.ident()?;
            let init = if self.at_punct("=") {
                self.advance();
                Some(self.expression()?)
            } else {
                None
            };
            let end = init.as_ref().map(|e| e.span).unwrap_or(name.span);
            out.push(Stmt {
                id: self.fresh_id(),
                span: start.to(end),
                kind: StmtKind::Var { name, init },
            });
            if self.at_punct(",") {
                self.advance();
                start = self.current_span();
                continue;
            }
            let semi = self.expect_punct(";")?;
            let last = out.last_mut().unwrap();
            last.span = last.span.to(semi);
            return Ok(());
        }
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let start = self.current_span();
        match self.peek_kind() {
            None => Err(self.error("statement")),
            Some(TokenKind::Keyword(Keyword::Var)) => Err(self.error("statement")),
            Some(TokenKind::Keyword(Keyword::Function)) => {
                self.advance();
                let func = self.function_rest(true)?;
                Ok(Stmt {
                    id: self.fresh_id(),
                    span: start.to(self.prev_span()),
                    kind: StmtKind::Function(Arc::new(func)),
                })
            }
            Some(TokenKind::Keyword(Keyword::Return)) => {
                self.advance();
                let value = if self.at_punct(";") {
                    None
                } else {
                    Some(self.expression()?)
                };
                let end = self.expect_punct(";")?;
                Ok(Stmt {
                    id: self.fresh_id(),
                    span: start.to(end),
                    kind: StmtKind::Return(value),
                })
            }
            Some(TokenKind::Keyword(Keyword::If)) => self.if_statement(),
            Some(TokenKind::Keyword(Keyword::Else)) => Err(self.error("statement")),
            Some(TokenKind::Punct("{")) => self.block(),
            Some(TokenKind::Ident(name)) if RESERVED.contains(&name.as_str()) => {
                self.reject_reserved(name)?;
                unreachable!()
            }
            Some(_) => {
                let expr = self.expression()?;
                let end = self.expect_punct(";")?;
                Ok(Stmt {
                    id: self.fresh_id(),
                    span: start.to(end),
                    kind: StmtKind::Expr(expr),
                })
            }
        }
    }

    fn block(&mut self) -> PResult<Stmt> {
        let start = self.expect_punct("{")?;
        let mut body = Vec::new();
        while !self.at_punct("}") {
            if self.peek().is_none() {
                return Err(self.error("`}`"));
            }
            self.statement_into(&mut body)?;
        }
        let end = self.expect_punct("}")?;
        Ok(Stmt {
            id: self.fresh_id(),
            span: start.to(end),
            kind: StmtKind::Block(body),
        })
    }

    fn if_statement(&mut self) -> PResult<Stmt> {
        let start = self.advance().unwrap().span;
        self.expect_punct("(")?;
        let test = self.expression()?;
        self.expect_punct(")")?;
        if !self.at_punct("{") {
            return Err(self.error("`{` (if bodies must be blocks)"));
        }
        let consequent = Box::new(self.block()?);
        let alternate = if self.at_keyword(Keyword::Else) {
            self.advance();
            if self.at_keyword(Keyword::If) {
                Some(Box::new(self.if_statement()?))
            } else if self.at_punct("{") {
                Some(Box::new(self.block()?))
            } else {
                return Err(self.error("`{` or `if` after `else`"));
            }
        } else {
            None
        };
        Ok(Stmt {
            id: self.fresh_id(),
            span: start.to(self.prev_span()),
            kind: StmtKind::If {
                test,
                consequent,
                alternate,
            },
        })
    }

    /// After the `function` keyword: optional name, params, body.
    fn function_rest(&mut self, name_required: bool) -> PResult<Func> {
        let name = if matches!(self.peek_kind(), Some(TokenKind::Ident(_))) {
            Some(self.ident()?)
        } else if name_required {
            return Err(self.error("function name"));
        } else {
            None
        };
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.at_punct(")") {
            loop {
                params.push(self.ident()?);
                if self.at_punct(",") {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        self.expect_punct("{")?;
        let mut body = Vec::new();
        while !self.at_punct("}") {
            if self.peek().is_none() {
                return Err(self.error("`}`"));
            }
            self.statement_into(&mut body)?;
        }
        self.expect_punct("}")?;
        Ok(Func { name, params, body })
    }

    pub fn expression(&mut self) -> PResult<Expr> {
        self.assignment()
    }

    fn assignment(&mut self) -> PResult<Expr> {
        let target = self.binary(1)?;
        let op = if self.at_punct("=") {
            AssignOp::Assign
        } else if self.at_punct("+=") {
            AssignOp::AddAssign
        } else {
            return Ok(target);
        };
        if !matches!(
            target.kind,
            ExprKind::Ident(_) | ExprKind::Member { .. } | ExprKind::Index { .. }
        ) {
            return Err(self.error("assignable target before assignment operator"));
        }
        self.advance();
        let value = self.assignment()?;
        Ok(Expr {
            id: self.fresh_id(),
            span: target.span.to(value.span),
            kind: ExprKind::Assign {
                op,
                target: Box::new(target),
                value: Box::new(value),
            },
        })
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        Some(match self.peek_kind()? {
            TokenKind::Punct("+") => BinaryOp::Add,
            TokenKind::Punct("-") => BinaryOp::Sub,
            TokenKind::Punct("*") => BinaryOp::Mul,
            TokenKind::Punct("/") => BinaryOp::Div,
            TokenKind::Punct("||") => BinaryOp::Or,
            TokenKind::Punct("==") => BinaryOp::Eq,
            TokenKind::Punct("!=") => BinaryOp::NotEq,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut left = self.unary()?;
        while let Some(op) = self.binary_op() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.advance();
            let right = self.binary(prec + 1)?;
            left = Expr {
                id: self.fresh_id(),
                span: left.span.to(right.span),
                kind: ExprKind::Binary {
                    op,
                    left: Box::new(left),
                    right: Box::new(right),
                },
            };
        }
        Ok(left)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = match self.peek_kind() {
            Some(TokenKind::Punct("!")) => UnaryOp::Not,
            Some(TokenKind::Punct("-")) => UnaryOp::Neg,
            _ => return self.postfix(),
        };
        let start = self.advance().unwrap().span;
        let operand = self.unary()?;
        Ok(Expr {
            id: self.fresh_id(),
            span: start.to(operand.span),
            kind: ExprKind::Unary {
                op,
                operand: Box::new(operand),
            },
        })
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut expr = self.primary()?;
        loop {
            if self.at_punct(".") {
                self.advance();
                let property = match self.peek_kind() {
                    Some(TokenKind::Ident(name)) => name.clone(),
                    Some(TokenKind::Keyword(k)) => k.as_str().to_string(),
                    _ => return Err(self.error("property name")),
                };
                let end = self.advance().unwrap().span;
                expr = Expr {
                    id: self.fresh_id(),
                    span: expr.span.to(end),
                    kind: ExprKind::Member {
                        object: Box::new(expr),
                        property,
                    },
                };
            } else if self.at_punct("[") {
                self.advance();
                let index = self.expression()?;
                let end = self.expect_punct("]")?;
                expr = Expr {
                    id: self.fresh_id(),
                    span: expr.span.to(end),
                    kind: ExprKind::Index {
                        object: Box::new(expr),
                        index: Box::new(index),
                    },
                };
            } else if self.at_punct("(") {
                self.advance();
                let mut args = Vec::new();
                if !self.at_punct(")") {
                    loop {
                        args.push(self.expression()?);
                        if self.at_punct(",") {
                            self.advance();
                        } else {
                            break;
                        }
                    }
                }
                let end = self.expect_punct(")")?;
                expr = Expr {
                    id: self.fresh_id(),
                    span: expr.span.to(end),
                    kind: ExprKind::Call {
                        callee: Box::new(expr),
                        args,
                    },
                };
            } else {
                return Ok(expr);
            }
        }
    }

    fn leaf(&mut self, span: Span, kind: ExprKind) -> Expr {
        Expr {
            id: self.fresh_id(),
            span,
            kind,
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let Some(token) = self.peek() else {
            return Err(self.error("expression"));
        };
        let span = token.span;
        match &token.kind {
            TokenKind::Number(n) => {
                self.advance();
                Ok(self.leaf(span, ExprKind::Number(*n)))
            }
            TokenKind::Str(s) => {
                self.advance();
                Ok(self.leaf(span, ExprKind::Str(s.clone())))
            }
            TokenKind::Keyword(Keyword::True) => {
                self.advance();
                Ok(self.leaf(span, ExprKind::Bool(true)))
            }
            TokenKind::Keyword(Keyword::False) => {
                self.advance();
                Ok(self.leaf(span, ExprKind::Bool(false)))
            }
            TokenKind::Keyword(Keyword::Null) => {
                self.advance();
                Ok(self.leaf(span, ExprKind::Null))
            }
            TokenKind::Keyword(Keyword::Function) => {
                self.advance();
                let func = self.function_rest(false)?;
                let end = self.prev_span();
                Ok(self.leaf(span.to(end), ExprKind::Function(Arc::new(func))))
            }
            TokenKind::Ident(name) => {
                self.reject_reserved(name)?;
                self.advance();
                Ok(self.leaf(span, ExprKind::Ident(name.clone())))
            }
            TokenKind::Punct("(") => {
                self.advance();
                let mut inner = self.expression()?;
                let end = self.expect_punct(")")?;
                // Parentheses leave no node; widen the span so containment holds.
                inner.span = span.to(end);
                Ok(inner)
            }
            TokenKind::Punct("{") => self.object_literal(),
            TokenKind::Punct(arrow @ (">>" | "->")) if self.placeholders => {
                let kind = if *arrow == ">>" {
                    StreamKind::Start
                } else {
                    StreamKind::Post
                };
                self.advance();
                let dest = match self.peek_kind() {
                    Some(TokenKind::Ident(name)) => name.clone(),
                    Some(TokenKind::Keyword(Keyword::Null)) => "null".to_string(),
                    _ => return Err(self.error("stream destination")),
                };
                let end = self.advance().unwrap().span;
                Ok(self.leaf(span.to(end), ExprKind::Placeholder { kind, dest }))
            }
            _ => Err(self.error("expression")),
        }
    }

    fn object_literal(&mut self) -> PResult<Expr> {
        let start = self.expect_punct("{")?;
        let mut props = Vec::new();
        while !self.at_punct("}") {
            let key = match self.peek_kind() {
                Some(TokenKind::Ident(name)) => name.clone(),
                Some(TokenKind::Str(s)) => s.clone(),
                Some(TokenKind::Keyword(k)) => k.as_str().to_string(),
                _ => return Err(self.error("property key")),
            };
            self.advance();
            self.expect_punct(":")?;
            let value = self.expression()?;
            props.push((key, value));
            if self.at_punct(",") {
                self.advance();
            } else {
                break;
            }
        }
        let end = self.expect_punct("}")?;
        Ok(self.leaf(start.to(end), ExprKind::Object(props)))
    }
}
