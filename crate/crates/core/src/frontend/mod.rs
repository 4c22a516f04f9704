//! MiniJS lexing, parsing and canonical printing.

pub mod ast;
mod lexer;
mod parser;
mod printer;
pub mod visit;

use thiserror::Error;

pub use ast::*;
pub use lexer::{tokenize, Keyword, Token, TokenKind};
pub use parser::{parse, parse_function_with_placeholders, parse_with_placeholders};
pub use printer::{
    emit_expr, emit_function, emit_program, emit_statements, emit_stmt, format_number,
    is_identifier,
};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("lex error at {span}: {message}")]
pub struct LexError {
    pub span: Span,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at {span}: expected {expected}, found {found}")]
pub struct ParseError {
    pub span: Span,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntaxError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl SyntaxError {
    pub fn span(&self) -> Span {
        match self {
            SyntaxError::Lex(e) => e.span,
            SyntaxError::Parse(e) => e.span,
        }
    }
}

/// Tokenize and parse in one go.
pub fn parse_source(source: &str) -> Result<Program, SyntaxError> {
    let tokens = tokenize(source)?;
    Ok(parse(&tokens)?)
}

/// Canonical source text for a whole program.
pub fn emit_source(program: &Program) -> String {
    emit_program(program)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING_1: &str = include_str!("../../tests/fixtures/listing1.mjs-mini");

    fn top_level(src: &str) -> Program {
        parse_source(src).unwrap_or_else(|e| panic!("{e}"))
    }

    #[test]
    fn listing_one_shape() {
        let p = top_level(LISTING_1);
        let names: Vec<_> = p
            .body
            .iter()
            .filter_map(|s| match &s.kind {
                StmtKind::Var { name, .. } => Some(name.name.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(names, ["app", "fs", "count"]);
        assert_eq!(p.body.len(), 5);
        let StmtKind::Expr(get) = &p.body[3].kind else {
            panic!()
        };
        let ExprKind::Call { callee, args } = &get.kind else {
            panic!()
        };
        assert_eq!(callee.dotted_path().as_deref(), Some("app.get"));
        let ExprKind::Function(handler) = &args[1].kind else {
            panic!()
        };
        assert_eq!(handler.name.as_ref().unwrap().name, "handler");
        let StmtKind::Expr(listen) = &p.body[4].kind else {
            panic!()
        };
        let ExprKind::Call { callee, .. } = &listen.kind else {
            panic!()
        };
        assert_eq!(callee.dotted_path().as_deref(), Some("app.listen"));
    }

    #[test]
    fn malformed_var_is_a_parse_error() {
        assert!(matches!(
            parse_source("var x = ;"),
            Err(SyntaxError::Parse(_))
        ));
    }

    #[test]
    fn two_anonymous_function_arguments() {
        let p = top_level("f(function(){}, function(){});");
        let StmtKind::Expr(e) = &p.body[0].kind else {
            panic!()
        };
        let ExprKind::Call { args, .. } = &e.kind else {
            panic!()
        };
        assert_eq!(args.len(), 2);
        for a in args {
            assert!(matches!(&a.kind, ExprKind::Function(f) if f.name.is_none()));
        }
    }

    #[test]
    fn rejects_constructs_outside_subset() {
        for src in [
            "class A {}",
            "for (;;) {}",
            "async function f() {}",
            "var a = 1",
            "if (a) b();",
            "x = >> y;",
            "new Foo();",
        ] {
            assert!(parse_source(src).is_err(), "{src} should not parse");
        }
    }

    #[test]
    fn compound_assignment_canonical_text() {
        let p = top_level("count+=1;");
        assert_eq!(emit_source(&p), "count += 1;\n");
    }

    #[test]
    fn precedence_and_parens() {
        let src = "x = (a + b) * c - d / (e - f) || g == h;";
        let p = top_level(src);
        assert_eq!(
            emit_source(&p),
            "x = (a + b) * c - d / (e - f) || g == h;\n"
        );
        let q = top_level("y = a - (b - c);");
        assert_eq!(emit_source(&q), "y = a - (b - c);\n");
        let r = top_level("z = -(-a) + !b;");
        assert!(r.structurally_eq(&top_level(&emit_source(&r))));
    }

    #[test]
    fn reply_body_matches_listing_two() {
        let p = top_level(LISTING_1);
        let text = emit_source(&p);
        assert!(text.contains("    count += 1;\n    res.send(err || template(count, data));\n"));
        assert!(text.contains("app.get('/', function handler(req, res) {\n"));
    }

    #[test]
    fn node_ids_dense_and_unique() {
        let p = top_level(LISTING_1);
        let mut seen = vec![false; p.node_count as usize];
        visit::walk_program(&p, &mut |node, _| {
            let id = node.id().index();
            assert!(!seen[id], "duplicate id {id}");
            seen[id] = true;
        });
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn ambiguous_statement_starts_get_parens() {
        let p = top_level("({a: 1}).a;");
        let text = emit_source(&p);
        assert_eq!(text, "({a: 1}.a);\n");
        assert!(p.structurally_eq(&top_level(&text)));
        let f = top_level("(function () {})();");
        assert!(f.structurally_eq(&top_level(&emit_source(&f))));
    }
}
