//! Seeded generator of small express-style MiniJS programs: one listener,
//! up to two further asynchronous callbacks nested inside it, and at most
//! six program variables shared between them.

#![allow(dead_code)]

pub mod props;
pub mod roundtrip;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_RUPTURES: usize = 3;
pub const MAX_VARS: usize = 6;

pub const FIXTURES: &[(&str, &str)] = &[
    ("listing1", include_str!("../fixtures/listing1.mjs-mini")),
    ("listing3", include_str!("../fixtures/listing3.mjs-mini")),
    ("fig4", include_str!("../fixtures/fig4.mjs-mini")),
    (
        "count_free",
        include_str!("../fixtures/count_free.mjs-mini"),
    ),
    ("busy", include_str!("../fixtures/busy.mjs-mini")),
];

/// How a callback reaches its asynchronous call.
#[derive(Clone, Copy)]
enum Form {
    Anonymous,
    Named,
    /// A function declaration in the enclosing body, passed by name.
    Declared,
}

struct Gen {
    rng: ChaCha8Rng,
    vars: usize,
    globals: Vec<String>,
    object: Option<String>,
    next_local: usize,
    next_fn: usize,
    strings: usize,
}

pub fn program(seed: u64) -> String {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        vars: 0,
        globals: Vec::new(),
        object: None,
        next_local: 0,
        next_fn: 0,
        strings: 0,
    };
    g.generate()
}

/// The first `n` programs of the corpus.
pub fn corpus(n: usize) -> Vec<(u64, String)> {
    (0..n as u64).map(|seed| (seed, program(seed))).collect()
}

impl Gen {
    fn generate(&mut self) -> String {
        let mut out = String::from(
            "var app = require('express')();\nvar fs = require('fs');\nvar timer = require('timer');\n",
        );
        for i in 0..self.rng.gen_range(0..=3) {
            let name = format!("g{i}");
            match self.rng.gen_range(0..3) {
                0 => out.push_str(&format!("var {name};\n")),
                1 => out.push_str(&format!("var {name} = {};\n", self.rng.gen_range(0..10))),
                _ => out.push_str(&format!("var {name} = '{name}';\n")),
            }
            self.globals.push(name);
            self.vars += 1;
        }
        if self.rng.gen_bool(0.3) {
            out.push_str("var o = {n: 0, s: 'o'};\n");
            self.object = Some("o".into());
            self.vars += 1;
        }
        let depth = self.rng.gen_range(1..=MAX_RUPTURES);
        let mut visible = self.globals.clone();
        let (handler, decls) = self.callback(0, depth, &mut visible, 0);
        let top_level_decl = matches!(handler, Callback::Declared(_)) && self.rng.gen_bool(0.5);
        match handler {
            Callback::Inline(text) => out.push_str(&format!("app.get('/', {text});\n")),
            Callback::Declared(name) => {
                // Either a top-level declaration (hoisted to main) or one
                // that follows the listener registration.
                if top_level_decl {
                    out.push_str(&decls);
                }
                out.push_str(&format!("app.get('/', {name});\n"));
                if !top_level_decl {
                    out.push_str(&decls);
                }
            }
        }
        out.push_str("app.listen(8080);\n");
        out
    }

    /// Builds the callback for `level`; returns it plus any declaration
    /// text that must be placed in the enclosing body.
    fn callback(
        &mut self,
        level: usize,
        depth: usize,
        visible: &mut Vec<String>,
        indent: usize,
    ) -> (Callback, String) {
        let params: &[&str] = match level {
            0 => &["req", "res"],
            _ if self.rng.gen_bool(0.5) => &["err", "data"],
            _ => &[],
        };
        let form = *[Form::Anonymous, Form::Named, Form::Declared]
            .choose(&mut self.rng)
            .unwrap();
        let name = format!("h{}", self.next_fn);
        self.next_fn += 1;
        let scope_mark = visible.len();
        visible.extend(params.iter().map(|p| p.to_string()));
        let pad = "  ".repeat(indent + 1);
        let mut body = String::new();
        for _ in 0..self.rng.gen_range(0..=3) {
            body.push_str(&pad);
            body.push_str(&self.statement(visible));
            body.push('\n');
        }
        if level + 1 < depth {
            let (inner, decls) = self.callback(level + 1, depth, visible, indent + 1);
            let text = match inner {
                Callback::Inline(text) => text,
                Callback::Declared(name) => {
                    body.push_str(&decls);
                    name
                }
            };
            let call = if params == ["err", "data"] || self.rng.gen_bool(0.5) {
                format!("fs.readFile(__filename, {text});")
            } else {
                format!("timer.delay({}, {text});", self.rng.gen_range(1..5))
            };
            body.push_str(&format!("{pad}{call}\n"));
            if self.rng.gen_bool(0.3) {
                body.push_str(&pad);
                body.push_str(&self.statement(visible));
                body.push('\n');
            }
        } else {
            let e = self.expr(visible, 2);
            body.push_str(&format!("{pad}res.send({e});\n"));
        }
        visible.truncate(scope_mark);
        let close = "  ".repeat(indent);
        let params = params.join(", ");
        match form {
            Form::Anonymous => (
                Callback::Inline(format!("function ({params}) {{\n{body}{close}}}")),
                String::new(),
            ),
            Form::Named => (
                Callback::Inline(format!("function {name}({params}) {{\n{body}{close}}}")),
                String::new(),
            ),
            Form::Declared if level == 0 => (
                Callback::Declared(name.clone()),
                format!("function {name}({params}) {{\n{body}}}\n"),
            ),
            Form::Declared => {
                let outer = "  ".repeat(indent);
                (
                    Callback::Declared(name.clone()),
                    format!("{outer}function {name}({params}) {{\n{body}{outer}}}\n"),
                )
            }
        }
    }

    fn statement(&mut self, visible: &mut Vec<String>) -> String {
        let assignable: Vec<String> = visible
            .iter()
            .filter(|v| !matches!(v.as_str(), "req" | "res"))
            .cloned()
            .collect();
        let choice = self.rng.gen_range(0..5);
        if choice == 0 && self.vars < MAX_VARS {
            let name = format!("l{}", self.next_local);
            self.next_local += 1;
            self.vars += 1;
            let e = self.expr(visible, 2);
            visible.push(name.clone());
            return format!("var {name} = {e};");
        }
        if choice == 1 {
            if let Some(o) = self.object.clone() {
                let e = self.expr(visible, 1);
                return format!("{o}.n = {o}.n + {e};");
            }
        }
        if assignable.is_empty() {
            return "now();".to_string();
        }
        let target = assignable.choose(&mut self.rng).unwrap().clone();
        let e = self.expr(visible, 2);
        match choice {
            2 => format!("{target} += {e};"),
            3 => {
                let cond = self.expr(visible, 1);
                format!("if ({cond}) {{ {target} = {e}; }}")
            }
            _ => format!("{target} = {e};"),
        }
    }

    fn expr(&mut self, visible: &[String], depth: usize) -> String {
        let readable: Vec<String> = visible
            .iter()
            .filter(|v| v.as_str() != "res")
            .map(|v| {
                if v == "req" {
                    "req.path".to_string()
                } else {
                    v.clone()
                }
            })
            .chain(self.object.iter().map(|o| format!("{o}.n")))
            .collect();
        let leaf = depth == 0 || self.rng.gen_bool(0.4);
        if leaf {
            return match self.rng.gen_range(0..4) {
                0 => self.rng.gen_range(0..20).to_string(),
                1 => {
                    self.strings += 1;
                    format!("'s{}'", self.strings)
                }
                _ if !readable.is_empty() => readable.choose(&mut self.rng).unwrap().clone(),
                _ => "1".to_string(),
            };
        }
        let a = self.expr(visible, depth - 1);
        let b = self.expr(visible, depth - 1);
        match self.rng.gen_range(0..4) {
            0 => format!("template({a}, {b})"),
            1 => format!("{a} || {b}"),
            2 => format!("({a} == {b})"),
            _ => format!("{a} + {b}"),
        }
    }
}

enum Callback {
    Inline(String),
    Declared(String),
}
