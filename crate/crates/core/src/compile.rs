//! Source text to fluxional program, keeping every intermediate result.

use thiserror::Error;

use crate::analyzer::{analyze, AnalyzeError, AsyncCalleeList, PipelineRepr};
use crate::flx::{emit_flx, FlxProgram};
use crate::frontend::{parse_source, Program, SyntaxError};
use crate::pipeliner::{build_fluxions, place_all, Analysis, PlacementReport};
use crate::scope::{build_scope_graph, ScopeGraph};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Analyze(#[from] AnalyzeError),
}

#[derive(Debug, Clone)]
pub struct Compilation {
    pub program: Program,
    pub graph: ScopeGraph,
    pub pipeline: PipelineRepr,
    pub report: PlacementReport,
    pub flx: FlxProgram,
}

impl Compilation {
    pub fn flx_text(&self) -> String {
        emit_flx(&self.flx)
    }
}

pub fn compile(source: &str, list: &AsyncCalleeList) -> Result<Compilation, CompileError> {
    let program = parse_source(source)?;
    let graph = build_scope_graph(&program);
    let pipeline = analyze(&program, &graph, list)?;
    let (report, flx) = {
        let an = Analysis::new(&program, &graph, &pipeline);
        let report = place_all(&an);
        let flx = build_fluxions(&an, &report);
        (report, flx)
    };
    Ok(Compilation {
        program,
        graph,
        pipeline,
        report,
        flx,
    })
}
