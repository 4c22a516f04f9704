use super::*;
use crate::analyzer::AsyncCalleeList;
use crate::flx::parse_flx;
use crate::frontend::parse_source;
use crate::interp::FILE_CONTENT;
use crate::reference::run_sequential;
use crate::workload::repeated;

const LISTING_1: &str = include_str!("../../tests/fixtures/listing1.mjs-mini");
const LISTING_1_FLX: &str = include_str!("../../tests/fixtures/listing1.flx");
const LISTING_3: &str = include_str!("../../tests/fixtures/listing3.mjs-mini");
const FIG_4: &str = include_str!("../../tests/fixtures/fig4.mjs-mini");

fn compiled(src: &str) -> FlxProgram {
    crate::compile(src, &AsyncCalleeList::default())
        .unwrap()
        .flx
}

fn run(src: &str, workload: &[Request], config: RuntimeConfig) -> Runtime {
    run_program(compiled(src), workload, config).unwrap().0
}

fn reference(src: &str, workload: &[Request]) -> ObservedOutputs {
    run_sequential(&parse_source(src).unwrap(), workload, default_vfs()).unwrap()
}

#[test]
fn empty_program_is_rejected() {
    let err = Runtime::new(FlxProgram { fluxions: vec![] }, RuntimeConfig::default());
    assert!(matches!(err, Err(RunError::EmptyProgram)));
}

#[test]
fn program_without_main_is_rejected() {
    let p = parse_flx("flx other\n-> null\n  function () {}\n").unwrap();
    assert!(matches!(
        Runtime::new(p, RuntimeConfig::default()),
        Err(RunError::MissingMain)
    ));
}

#[test]
fn zero_workers_is_rejected() {
    let p = parse_flx(LISTING_1_FLX).unwrap();
    assert!(matches!(
        Runtime::new(p, RuntimeConfig::with_workers(0)),
        Err(RunError::NoWorkers)
    ));
}

#[test]
fn untagged_fluxions_are_pinned_round_robin() {
    let text = "\
flx main
-> null
  var x = 1;

flx f1
-> null
  function () {}

flx f2
-> null
  function () {}
";
    let rt = Runtime::new(parse_flx(text).unwrap(), RuntimeConfig::with_workers(2)).unwrap();
    assert_eq!(rt.pinning_of("main"), Some(Pinning::Pinned(0)));
    assert_eq!(rt.pinning_of("f1"), Some(Pinning::Pinned(1)));
    assert_eq!(rt.pinning_of("f2"), Some(Pinning::Pinned(0)));
}

#[test]
fn listing_one_group_shares_a_worker() {
    let rt = Runtime::new(
        parse_flx(LISTING_1_FLX).unwrap(),
        RuntimeConfig::with_workers(2),
    )
    .unwrap();
    assert_eq!(rt.fluxion_ids(), ["main", "handler", "reply"]);
    assert_eq!(rt.pinning_of("main"), Some(Pinning::Pinned(0)));
    assert_eq!(rt.pinning_of("reply"), Some(Pinning::Pinned(0)));
    assert_eq!(rt.pinning_of("handler"), Some(Pinning::Pinned(1)));
}

#[test]
fn unknown_route_is_a_no_route_error() {
    let mut rt = Runtime::new(parse_flx(LISTING_1_FLX).unwrap(), RuntimeConfig::default()).unwrap();
    assert!(matches!(
        rt.inject_request("/nope", serde_json::Value::Null),
        Err(RunError::NoRoute(_))
    ));
}

#[test]
fn injections_get_distinct_origins_and_increasing_seq() {
    let config = RuntimeConfig {
        trace: true,
        ..RuntimeConfig::default()
    };
    let mut rt = Runtime::new(parse_flx(LISTING_1_FLX).unwrap(), config).unwrap();
    let a = rt.inject_request("/", serde_json::Value::Null).unwrap();
    let b = rt.inject_request("/", serde_json::Value::Null).unwrap();
    assert_ne!(a, b);
    rt.run_until_idle().unwrap();
    let seqs: Vec<u64> = rt
        .trace()
        .iter()
        .filter(|e| e.fluxion == "main" && e.event == TraceKind::Receive)
        .map(|e| e.seq)
        .collect();
    assert_eq!(seqs, [1, 2]);
}

#[test]
fn empty_queue_is_idle() {
    let rt = Runtime::new(parse_flx(LISTING_1_FLX).unwrap(), RuntimeConfig::default()).unwrap();
    assert_eq!(rt.step(0), Step::Idle);
}

#[test]
fn one_request_walks_the_pipeline() {
    let mut rt = Runtime::new(parse_flx(LISTING_1_FLX).unwrap(), RuntimeConfig::default()).unwrap();
    rt.inject_request("/", serde_json::Value::Null).unwrap();
    let mut steps = 0;
    while rt.step(0) == Step::DidWork {
        steps += 1;
    }
    // main (listener) -> handler -> reply
    assert_eq!(steps, 3);
    let out = rt.outputs();
    assert_eq!(
        out.responses[0].value,
        serde_json::json!(format!("1:{FILE_CONTENT}"))
    );
    assert_eq!(out.final_globals["count"], serde_json::json!(1));
}

#[test]
fn listing_one_hundred_requests_on_every_worker_count() {
    let workload = repeated("/", 100);
    let expected = reference(LISTING_1, &workload);
    for workers in [1, 2, 4] {
        let rt = run(LISTING_1, &workload, RuntimeConfig::with_workers(workers));
        let out = rt.outputs();
        assert_eq!(
            out.final_globals["count"],
            serde_json::json!(100),
            "workers={workers}"
        );
        assert_eq!(out.per_origin(), expected.per_origin(), "workers={workers}");
        assert!(out.errors.is_empty());
        if workers == 1 {
            assert_eq!(out, expected);
        }
    }
}

#[test]
fn fig4_matches_reference() {
    let workload = repeated("/", 5);
    let expected = reference(FIG_4, &workload);
    let out = run(FIG_4, &workload, RuntimeConfig::default()).outputs();
    assert_eq!(out, expected);
    for workers in [2, 3] {
        let out = run(FIG_4, &workload, RuntimeConfig::with_workers(workers)).outputs();
        assert_eq!(out.per_origin().len(), 5);
        assert!(out.errors.is_empty());
    }
}

#[test]
fn listing_three_resumes_the_chain_in_main() {
    let workload = vec![Request {
        path: "/image/text".into(),
        body: serde_json::json!("hello"),
    }];
    let expected = reference(LISTING_3, &workload);
    assert_eq!(expected.responses[0].value, serde_json::json!("hello"));
    for workers in [1, 2] {
        let out = run(LISTING_3, &workload, RuntimeConfig::with_workers(workers)).outputs();
        assert_eq!(out.per_origin(), expected.per_origin());
    }
}

#[test]
fn errors_go_to_dead_letters() {
    let src = "var app = require('express')(); var fs = require('fs');\
        app.get('/', function h(req, res) { fs.readFile(__filename, function r(err, data) { res.send(missing); }); });";
    let rt = run(src, &repeated("/", 2), RuntimeConfig::default());
    let dead = rt.dead_letters();
    assert_eq!(dead.len(), 2);
    assert_eq!(dead[0].fluxion, "r");
    assert!(dead[0].error.contains("missing"));
    assert_eq!(rt.metrics().dead_letters, 2);
}

#[test]
fn replicated_units_spread_over_workers() {
    let src = "var app = require('express')(); var fs = require('fs');\
        app.get('/', function h(req, res) { fs.readFile(__filename, function r(err, data) { res.send(data); }); });";
    let config = RuntimeConfig {
        workers: 4,
        replicate: true,
        trace: true,
        ..RuntimeConfig::default()
    };
    let workload = repeated("/", 8);
    let rt = run(src, &workload, config);
    assert_eq!(rt.pinning_of("h"), Some(Pinning::Replicated));
    let workers: HashSet<usize> = rt
        .trace()
        .iter()
        .filter(|e| e.fluxion == "r" && e.event == TraceKind::Receive)
        .map(|e| e.worker)
        .collect();
    assert_eq!(workers.len(), 4);
    assert_eq!(
        rt.outputs().per_origin(),
        reference(src, &workload).per_origin()
    );
}

#[test]
fn stateful_units_are_never_replicated() {
    let p = parse_flx(LISTING_1_FLX).unwrap();
    let config = RuntimeConfig {
        workers: 4,
        replicate: true,
        ..RuntimeConfig::default()
    };
    let rt = Runtime::new(p, config).unwrap();
    assert_eq!(rt.pinning_of("reply"), Some(Pinning::Pinned(0)));
    assert_eq!(rt.pinning_of("handler"), Some(Pinning::Replicated));
}

#[test]
fn deadline_is_enforced() {
    let src = "var app = require('express')(); var timer = require('timer');\
        app.get('/', function h(req, res) { timer.delay(1, function spin() { timer.delay(1, spin); }); });";
    let config = RuntimeConfig {
        deadline: Duration::from_millis(50),
        ..RuntimeConfig::default()
    };
    let mut rt = Runtime::new(compiled(src), config).unwrap();
    rt.inject_request("/", serde_json::Value::Null).unwrap();
    assert!(matches!(
        rt.run_until_idle(),
        Err(RunError::DeadlineExceeded(_))
    ));
}
