//! Print-then-reparse checks shared by the round-trip and acceptance tests.

use flxc_core::analyzer::AsyncCalleeList;
use flxc_core::compile;
use flxc_core::flx::{emit_flx, parse_flx};
use flxc_core::frontend::{emit_source, parse_source};

/// MiniJS survives printing structurally and prints idempotently.
pub fn minijs_roundtrip(src: &str) -> Result<(), String> {
    let first = parse_source(src).map_err(|e| format!("parse: {e}"))?;
    let printed = emit_source(&first);
    let second = parse_source(&printed).map_err(|e| format!("reparse: {e}\n{printed}"))?;
    if !first.structurally_eq(&second) {
        return Err(format!("reparsed program differs:\n{printed}"));
    }
    if emit_source(&second) != printed {
        return Err("printing is not idempotent".into());
    }
    Ok(())
}

/// The compiled `.flx` reparses to the same program and the same bytes.
pub fn flx_roundtrip(src: &str) -> Result<(), String> {
    let c = compile(src, &AsyncCalleeList::default()).map_err(|e| format!("compile: {e}"))?;
    let text = emit_flx(&c.flx);
    let parsed = parse_flx(&text).map_err(|e| format!("flx parse: {e}\n{text}"))?;
    if !parsed.structurally_eq(&c.flx) {
        return Err(format!(
            "parsed .flx differs from the compiled one:\n{text}"
        ));
    }
    let again = emit_flx(&parsed);
    if again != text {
        return Err(format!("bytes changed:\n{text}\n---\n{again}"));
    }
    Ok(())
}
