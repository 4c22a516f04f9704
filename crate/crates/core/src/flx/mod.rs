//! The textual fluxional language: data model, emitter and parser.
//!
//! ```text
//! flx <id> [& <tag>, ...] [{<ctx>, ...}]
//! >> <dest>, ... [<msg>, ...]      (start stream)
//! -> <dest>, ... [<msg>, ...]      (post stream)
//! -> null                          (no output stream)
//!   <body, indented two spaces>
//! ```
//!
//! Fluxion blocks are separated by one blank line. The body of `main` is a
//! statement list; every other body is a single function expression.

use std::collections::HashSet;
use std::sync::Arc;

use thiserror::Error;

use crate::frontend::is_identifier;
use crate::frontend::visit::{walk_stmt, NodeRef};
use crate::frontend::{
    emit_function, emit_statements, parse_function_with_placeholders, parse_with_placeholders,
    tokenize, ExprKind, Func, Stmt, StreamKind, SyntaxError,
};

pub const MAIN: &str = "main";

#[derive(Debug, Clone, PartialEq)]
pub struct FlxProgram {
    pub fluxions: Vec<FluxionDef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxionDef {
    pub id: String,
    pub tags: Vec<String>,
    /// Context slot names, in declaration order.
    pub context: Vec<String>,
    /// Output streams; empty means `-> null`.
    pub streams: Vec<StreamDecl>,
    pub body: FluxionBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamDecl {
    pub kind: StreamKind,
    pub dest: Vec<String>,
    pub msg: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FluxionBody {
    Program(Vec<Stmt>),
    Function(Arc<Func>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlxError {
    #[error("flx syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("flx link error: {0}")]
    Link(String),
}

impl FluxionDef {
    pub fn params(&self) -> Vec<&str> {
        match &self.body {
            FluxionBody::Program(_) => Vec::new(),
            FluxionBody::Function(f) => f.params.iter().map(|p| p.name.as_str()).collect(),
        }
    }

    /// The stream a `kind dest` placeholder refers to.
    pub fn stream_for(&self, kind: StreamKind, dest: &str) -> Option<&StreamDecl> {
        self.streams
            .iter()
            .find(|s| s.kind == kind && s.dest.first().is_some_and(|d| d == dest))
    }

    /// Placeholders in body order as `(kind, dest)`.
    pub fn placeholders(&self) -> Vec<(StreamKind, String)> {
        let mut out = Vec::new();
        let mut visit = |n: NodeRef, _: Option<NodeRef>| {
            if let NodeRef::Expr(e) = n {
                if let ExprKind::Placeholder { kind, dest } = &e.kind {
                    out.push((*kind, dest.clone()));
                }
            }
        };
        match &self.body {
            FluxionBody::Program(stmts) => {
                for s in stmts {
                    walk_stmt(s, None, &mut visit);
                }
            }
            FluxionBody::Function(f) => {
                for s in &f.body {
                    walk_stmt(s, None, &mut visit);
                }
            }
        }
        out
    }

    fn normalized(&self) -> FluxionDef {
        FluxionDef {
            body: match &self.body {
                FluxionBody::Program(stmts) => {
                    FluxionBody::Program(stmts.iter().map(Stmt::normalized).collect())
                }
                FluxionBody::Function(f) => FluxionBody::Function(Arc::new(f.normalized())),
            },
            ..self.clone()
        }
    }
}

impl FlxProgram {
    pub fn fluxion(&self, id: &str) -> Option<&FluxionDef> {
        self.fluxions.iter().find(|f| f.id == id)
    }

    /// Node ids and spans zeroed, for structural comparison.
    pub fn normalized(&self) -> FlxProgram {
        FlxProgram {
            fluxions: self.fluxions.iter().map(FluxionDef::normalized).collect(),
        }
    }

    pub fn structurally_eq(&self, other: &FlxProgram) -> bool {
        self.normalized() == other.normalized()
    }

    /// Checks id uniqueness, stream destinations, placeholder/stream
    /// correspondence and context/parameter disjointness.
    pub fn validate(&self) -> Result<(), FlxError> {
        let mut ids = HashSet::new();
        for f in &self.fluxions {
            if !ids.insert(f.id.as_str()) {
                return Err(FlxError::Link(format!("duplicate fluxion id `{}`", f.id)));
            }
        }
        for f in &self.fluxions {
            for s in &f.streams {
                if s.dest.is_empty() {
                    return Err(FlxError::Link(format!(
                        "stream of `{}` has no destination",
                        f.id
                    )));
                }
                if let Some(d) = s.dest.iter().find(|d| !ids.contains(d.as_str())) {
                    return Err(FlxError::Link(format!(
                        "fluxion `{}` streams to unknown fluxion `{d}`",
                        f.id
                    )));
                }
            }
            for (kind, dest) in f.placeholders() {
                if f.stream_for(kind, &dest).is_none() {
                    return Err(FlxError::Link(format!(
                        "placeholder `{} {dest}` in `{}` has no matching stream",
                        kind.arrow(),
                        f.id
                    )));
                }
            }
            let params = f.params();
            if let Some(c) = f.context.iter().find(|c| params.contains(&c.as_str())) {
                return Err(FlxError::Link(format!(
                    "context slot `{c}` of `{}` clashes with a parameter",
                    f.id
                )));
            }
        }
        Ok(())
    }
}

pub fn emit_flx(program: &FlxProgram) -> String {
    let blocks: Vec<String> = program.fluxions.iter().map(emit_fluxion).collect();
    blocks.join("\n")
}

fn emit_fluxion(f: &FluxionDef) -> String {
    let mut out = format!("flx {}", f.id);
    if !f.tags.is_empty() {
        out.push_str(" & ");
        out.push_str(&f.tags.join(", "));
    }
    if !f.context.is_empty() {
        out.push_str(" {");
        out.push_str(&f.context.join(", "));
        out.push('}');
    }
    out.push('\n');
    if f.streams.is_empty() {
        out.push_str("-> null\n");
    }
    for s in &f.streams {
        out.push_str(s.kind.arrow());
        out.push(' ');
        out.push_str(&s.dest.join(", "));
        if !s.msg.is_empty() {
            out.push_str(" [");
            out.push_str(&s.msg.join(", "));
            out.push(']');
        }
        out.push('\n');
    }
    match &f.body {
        FluxionBody::Program(stmts) => out.push_str(&emit_statements(stmts, 1)),
        FluxionBody::Function(func) => {
            out.push_str("  ");
            out.push_str(&emit_function(func, 1));
            out.push('\n');
        }
    }
    out
}

pub fn parse_flx(text: &str) -> Result<FlxProgram, FlxError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut fluxions = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let header_line = i + 1;
        let (id, tags, context) = parse_header(lines[i], header_line)?;
        i += 1;
        let mut streams = Vec::new();
        let mut null_stream = false;
        while i < lines.len() && (lines[i].starts_with(">>") || lines[i].starts_with("->")) {
            match parse_stream(lines[i], i + 1)? {
                Some(s) => streams.push(s),
                None => null_stream = true,
            }
            i += 1;
        }
        if null_stream && !streams.is_empty() {
            return Err(syntax(header_line, "`-> null` mixed with other streams"));
        }
        if !null_stream && streams.is_empty() {
            return Err(syntax(
                i + 1,
                "expected a stream line (`>>`, `->` or `-> null`)",
            ));
        }
        let body_start = i;
        let mut body = String::new();
        while i < lines.len() && !lines[i].starts_with("flx ") {
            let line = lines[i];
            if !line.trim().is_empty() && !line.starts_with("  ") {
                return Err(syntax(i + 1, "body lines must be indented by two spaces"));
            }
            body.push_str(line.get(2..).unwrap_or(""));
            body.push('\n');
            i += 1;
        }
        let body = parse_body(&id, &body, body_start)?;
        fluxions.push(FluxionDef {
            id,
            tags,
            context,
            streams,
            body,
        });
    }
    let program = FlxProgram { fluxions };
    program.validate()?;
    Ok(program)
}

fn syntax(line: usize, message: impl Into<String>) -> FlxError {
    FlxError::Syntax {
        line,
        message: message.into(),
    }
}

fn name_list(text: &str, line: usize, what: &str) -> Result<Vec<String>, FlxError> {
    text.split(',')
        .map(|part| {
            let name = part.trim();
            if is_identifier(name) {
                Ok(name.to_string())
            } else {
                Err(syntax(line, format!("invalid {what} `{name}`")))
            }
        })
        .collect()
}

fn parse_header(
    line: &str,
    line_no: usize,
) -> Result<(String, Vec<String>, Vec<String>), FlxError> {
    let rest = line
        .strip_prefix("flx ")
        .ok_or_else(|| syntax(line_no, "expected `flx <id>`"))?;
    let (before_ctx, context) = match rest.find('{') {
        Some(open) => {
            let inner = rest[open + 1..]
                .trim_end()
                .strip_suffix('}')
                .ok_or_else(|| syntax(line_no, "unterminated context block"))?;
            let ctx = if inner.trim().is_empty() {
                Vec::new()
            } else {
                name_list(inner, line_no, "context slot")?
            };
            (&rest[..open], ctx)
        }
        None => (rest, Vec::new()),
    };
    let (id_part, tags) = match before_ctx.split_once('&') {
        Some((id, tags)) => (id, name_list(tags, line_no, "tag")?),
        None => (before_ctx, Vec::new()),
    };
    let id = id_part.trim();
    if !is_identifier(id) {
        return Err(syntax(line_no, format!("invalid fluxion id `{id}`")));
    }
    Ok((id.to_string(), tags, context))
}

fn parse_stream(line: &str, line_no: usize) -> Result<Option<StreamDecl>, FlxError> {
    let (kind, rest) = if let Some(r) = line.strip_prefix(">>") {
        (StreamKind::Start, r)
    } else if let Some(r) = line.strip_prefix("->") {
        (StreamKind::Post, r)
    } else {
        return Err(syntax(line_no, "expected `>>` or `->`"));
    };
    let rest = rest.trim();
    if rest == "null" {
        return match kind {
            StreamKind::Post => Ok(None),
            StreamKind::Start => Err(syntax(line_no, "`>> null` is not a stream")),
        };
    }
    let (dest_part, msg) = match rest.find('[') {
        Some(open) => {
            let inner = rest[open + 1..]
                .strip_suffix(']')
                .ok_or_else(|| syntax(line_no, "unterminated message list"))?;
            let msg = if inner.trim().is_empty() {
                Vec::new()
            } else {
                name_list(inner, line_no, "message variable")?
            };
            (&rest[..open], msg)
        }
        None => (rest, Vec::new()),
    };
    let dest = name_list(dest_part, line_no, "destination")?;
    Ok(Some(StreamDecl { kind, dest, msg }))
}

fn parse_body(id: &str, text: &str, first_line: usize) -> Result<FluxionBody, FlxError> {
    let at = |e: SyntaxError| syntax(first_line + e.span().line as usize, e.to_string());
    let tokens = tokenize(text).map_err(|e| at(e.into()))?;
    if id == MAIN {
        let program = parse_with_placeholders(&tokens).map_err(|e| at(e.into()))?;
        Ok(FluxionBody::Program(program.body))
    } else {
        let (func, _) = parse_function_with_placeholders(&tokens).map_err(|e| at(e.into()))?;
        Ok(FluxionBody::Function(Arc::new(func)))
    }
}
