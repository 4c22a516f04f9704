//! Properties every compiled program must satisfy, checked one program at a
//! time so failures name the seed that broke them.

use std::collections::{BTreeSet, HashMap};

use flxc_core::analyzer::AsyncCalleeList;
use flxc_core::check::diff;
use flxc_core::interp::default_vfs;
use flxc_core::pipeliner::{Analysis, Placement, Rule};
use flxc_core::reference::run_sequential;
use flxc_core::runtime::{run_program, units, RuntimeConfig, TraceEvent, TraceKind};
use flxc_core::scope::GLOBAL_SCOPE;
use flxc_core::workload::repeated;
use flxc_core::{compile, Compilation};

pub const REQUESTS: usize = 4;

#[derive(Debug, Default)]
pub struct Summary {
    pub programs: usize,
    /// Programs whose parallel run was compared with the reference.
    pub compared: usize,
    pub racy: usize,
}

/// Shared state written after initialisation and touched by several
/// stages: its value depends on how the stages interleave, so parallel
/// runs may legitimately differ from the sequential one.
pub fn racy(c: &Compilation) -> bool {
    c.report.entries.iter().any(|e| match &e.placement {
        Placement::Share { members, .. } if members.len() >= 2 => {
            let global = c.graph.is_global(e.binding);
            c.graph
                .accesses_of(e.binding)
                .any(|a| a.kind.writes() && !(global && a.scope == GLOBAL_SCOPE))
        }
        _ => false,
    })
}

/// Every binding gets one placement; context slots and streamed names never
/// overlap in a fluxion; a context slot lives in one unit only.
pub fn placement_exclusivity(c: &Compilation) -> Result<(), String> {
    let an = Analysis::new(&c.program, &c.graph, &c.pipeline);
    let mut seen = BTreeSet::new();
    for e in &c.report.entries {
        // Callback declarations are rewritten into their own fluxions; the
        // name itself disappears from the output.
        if an.callback_declared_by(e.binding).is_some() {
            if e.rule != Rule::Callback {
                return Err(format!("callback name `{}` placed by {:?}", e.name, e.rule));
            }
            seen.insert(e.binding);
            continue;
        }
        if !seen.insert(e.binding) {
            return Err(format!("`{}` placed twice", e.name));
        }
        if let (Placement::Scope { stage }, false) = (&e.placement, e.rule == Rule::AmbientModule) {
            let global = c.graph.is_global(e.binding);
            for a in c.graph.accesses_of(e.binding) {
                if global && a.scope == GLOBAL_SCOPE {
                    continue;
                }
                let s = c.pipeline.stage_of(a.node);
                if s != *stage {
                    return Err(format!(
                        "`{}` scoped to {} but accessed in {}",
                        e.name, c.pipeline.stages[*stage].name, c.pipeline.stages[s].name
                    ));
                }
            }
        }
    }
    let flx = &c.flx;
    let unit_of: HashMap<usize, usize> = units(flx)
        .iter()
        .enumerate()
        .flat_map(|(u, members)| members.iter().map(move |&m| (m, u)))
        .collect();
    let mut slot_unit: HashMap<&str, usize> = HashMap::new();
    for (i, f) in flx.fluxions.iter().enumerate() {
        for name in &f.context {
            if let Some(&u) = slot_unit.get(name.as_str()) {
                if u != unit_of[&i] {
                    return Err(format!("context slot `{name}` held by two units"));
                }
            }
            slot_unit.insert(name, unit_of[&i]);
        }
    }
    for f in &flx.fluxions {
        for incoming in flx.fluxions.iter().flat_map(|g| &g.streams) {
            if !incoming.dest.contains(&f.id) {
                continue;
            }
            if let Some(name) = incoming.msg.iter().find(|m| f.context.contains(m)) {
                return Err(format!(
                    "`{name}` is both a context slot and streamed into {}",
                    f.id
                ));
            }
        }
    }
    Ok(())
}

/// Streams only carry values away from where they originate.
pub fn no_upstream_streaming(c: &Compilation) -> Result<(), String> {
    let p = &c.pipeline;
    for e in &c.report.entries {
        let Placement::Stream { origin, edges } = &e.placement else {
            continue;
        };
        for &i in edges {
            let edge = &p.edges[i];
            let from_ok = edge.from == *origin || p.is_upstream(*origin, edge.from);
            if !from_ok || p.is_upstream(edge.to, *origin) || edge.to == *origin {
                return Err(format!(
                    "`{}` streamed upstream along {} -> {}",
                    e.name, p.stages[edge.from].name, p.stages[edge.to].name
                ));
            }
        }
    }
    Ok(())
}

struct Interval {
    fluxion: String,
    start: u64,
    end: u64,
}

fn intervals(trace: &[TraceEvent]) -> Result<Vec<Interval>, String> {
    let mut open: HashMap<usize, (String, u64)> = HashMap::new();
    let mut out = Vec::new();
    for e in trace {
        match e.event {
            TraceKind::Receive => {
                if open.insert(e.worker, (e.fluxion.clone(), e.ts)).is_some() {
                    return Err(format!(
                        "worker {} started two executions at once",
                        e.worker
                    ));
                }
            }
            TraceKind::Complete => {
                let (fluxion, start) = open
                    .remove(&e.worker)
                    .ok_or_else(|| format!("worker {} completed without starting", e.worker))?;
                out.push(Interval {
                    fluxion,
                    start,
                    end: e.ts,
                });
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Executions of fluxions that share a tag never overlap in time.
pub fn group_serialization(c: &Compilation, trace: &[TraceEvent]) -> Result<(), String> {
    let all = intervals(trace)?;
    for unit in units(&c.flx) {
        let ids: BTreeSet<&str> = unit
            .iter()
            .map(|&i| c.flx.fluxions[i].id.as_str())
            .collect();
        let mut mine: Vec<&Interval> = all
            .iter()
            .filter(|iv| ids.contains(iv.fluxion.as_str()))
            .collect();
        mine.sort_by_key(|iv| (iv.start, iv.end));
        for pair in mine.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(format!(
                    "{} and {} overlap within one group",
                    pair[0].fluxion, pair[1].fluxion
                ));
            }
        }
    }
    Ok(())
}

/// Messages on one edge are handled in the order they were sent.
pub fn per_edge_fifo(trace: &[TraceEvent]) -> Result<(), String> {
    let mut last: HashMap<(String, String), u64> = HashMap::new();
    for e in trace {
        if e.event != TraceKind::Receive || e.seq == 0 {
            continue;
        }
        let Some(from) = &e.peer else { continue };
        let key = (from.clone(), e.fluxion.clone());
        if let Some(&prev) = last.get(&key) {
            if e.seq <= prev {
                return Err(format!(
                    "edge {from} -> {} handled seq {} after {prev}",
                    e.fluxion, e.seq
                ));
            }
        }
        last.insert(key, e.seq);
    }
    Ok(())
}

/// Compiles and runs one program, checking every property. Returns whether
/// the parallel run was compared with the reference.
pub fn check_program(source: &str) -> Result<bool, String> {
    let c = compile(source, &AsyncCalleeList::default()).map_err(|e| format!("compile: {e}"))?;
    placement_exclusivity(&c)?;
    no_upstream_streaming(&c)?;
    let workload = repeated("/", REQUESTS);
    let expected = run_sequential(&c.program, &workload, default_vfs())
        .map_err(|e| format!("reference: {e}"))?;

    let sequential = RuntimeConfig {
        trace: true,
        ..RuntimeConfig::default()
    };
    let (rt, _) = run_program(c.flx.clone(), &workload, sequential).map_err(|e| e.to_string())?;
    let actual = rt.outputs();
    if actual.responses != expected.responses || actual.final_globals != expected.final_globals {
        return Err(format!(
            "workers=1 differs from the reference: {:?}",
            diff(&expected, &actual)
        ));
    }
    per_edge_fifo(&rt.trace())?;

    let parallel = RuntimeConfig {
        workers: 2,
        trace: true,
        ..RuntimeConfig::default()
    };
    let (rt, _) = run_program(c.flx.clone(), &workload, parallel).map_err(|e| e.to_string())?;
    let trace = rt.trace();
    group_serialization(&c, &trace)?;
    per_edge_fifo(&trace)?;
    if racy(&c) {
        return Ok(false);
    }
    let mismatches = diff(&expected, &rt.outputs());
    if !mismatches.is_empty() {
        return Err(format!(
            "workers=2 differs from the reference: {mismatches:?}"
        ));
    }
    Ok(true)
}

pub fn run_suite(corpus: &[(u64, String)]) -> Result<Summary, String> {
    let mut summary = Summary::default();
    for (seed, source) in corpus {
        let compared = check_program(source).map_err(|e| format!("seed {seed}: {e}\n{source}"))?;
        summary.programs += 1;
        if compared {
            summary.compared += 1;
        } else {
            summary.racy += 1;
        }
    }
    Ok(summary)
}
