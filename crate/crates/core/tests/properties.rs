mod common;

use common::props::run_suite;

#[test]
fn generated_programs_satisfy_every_property() {
    let corpus = common::corpus(500);
    let summary = run_suite(&corpus).unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(summary.programs, 500);
    // Most programs must be race-free so the parallel comparison means
    // something.
    assert!(summary.compared * 2 >= summary.programs, "{summary:?}");
}

#[test]
fn generator_respects_its_bounds() {
    for (seed, src) in common::corpus(200) {
        let c = flxc_core::compile(&src, &Default::default())
            .unwrap_or_else(|e| panic!("seed {seed}: {e}\n{src}"));
        assert!(
            c.pipeline.edges.len() <= common::MAX_RUPTURES,
            "seed {seed}"
        );
        let vars = c
            .graph
            .bindings
            .iter()
            .filter(|b| {
                matches!(b.kind, flxc_core::scope::BindingKind::Var)
                    && !["app", "fs", "timer"].contains(&b.name.as_str())
            })
            .count();
        assert!(vars <= common::MAX_VARS, "seed {seed}: {vars} variables");
    }
}
