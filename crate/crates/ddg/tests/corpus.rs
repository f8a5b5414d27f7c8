mod common;

use common::{corpus_file, dump, n, unit_doc};
use pickleguard_ddg::{default_sinks, evaluate, find_candidates, load_dump, load_labels, run_dumps, CorpusReport, Mutators};
use std::time::{Duration, Instant};

fn run() -> CorpusReport {
    run_dumps(&[dump("synthetic.ast.json")], &default_sinks(), &Mutators::default())
}

#[test]
fn corpus_shape() {
    let labels = load_labels(&corpus_file("labels.json")).unwrap();
    let d = dump("synthetic.ast.json");
    assert!(d.units.len() >= 60);
    assert_eq!(labels.units.len(), d.units.len());
    assert!(labels.units.iter().filter(|l| l.exploitable).count() >= 20);
    assert!(labels.units.iter().filter(|l| l.expected_miss).count() >= 3);
    assert!(labels.units.iter().all(|l| !l.expected_miss || l.exploitable));
}

#[test]
fn precision_and_recall() {
    let labels = load_labels(&corpus_file("labels.json")).unwrap();
    let e = evaluate(&run(), &labels);
    assert_eq!(e.precision, 1.0, "false positives: {:?}", e.unexpected);
    assert!(e.recall >= 0.9, "recall {} misses {:?}", e.recall, e.misses);
    assert!(e.unexpected.is_empty(), "{:?}", e.unexpected);
    assert!(e.unlabelled.is_empty(), "{:?}", e.unlabelled);
    // Every labelled blind spot really is missed.
    let expected: Vec<_> = labels.units.iter().filter(|l| l.expected_miss).map(|l| l.fqname.clone()).collect();
    assert_eq!(e.misses, expected);
}

#[test]
fn reduction_rate() {
    let r = run();
    assert_eq!(r.total.scanned, 67);
    assert_eq!(r.total.with_sink_calls, 59);
    assert_eq!(r.total.candidates, 30);
    assert!(r.reduction_rate >= 0.40, "{}", r.reduction_rate);
    assert_eq!(r.libraries.len(), 4);
}

#[test]
fn corpus_runs_quickly() {
    let t = Instant::now();
    let r = run();
    assert!(!r.candidates.is_empty());
    assert!(t.elapsed() < Duration::from_secs(5), "{:?}", t.elapsed());
}

#[test]
fn golden_candidate_report() {
    let path = format!("{}/tests/golden/synthetic_report.json", env!("CARGO_MANIFEST_DIR"));
    let got = serde_json::to_string_pretty(&run()).unwrap() + "\n";
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).expect("golden file; run with UPDATE_GOLDEN=1 to create");
    assert_eq!(got, want);
}

#[test]
fn skipped_units_are_counted_per_library() {
    let mut raw: serde_json::Value = serde_json::from_str(&corpus_file("synthetic.ast.json")).unwrap();
    raw["units"][0]["params"] = serde_json::json!(["1bad"]);
    let d = load_dump(&raw.to_string());
    assert_eq!(d.skipped.len(), 1);
    let r = run_dumps(&[d], &default_sinks(), &Mutators::default());
    assert_eq!(r.total.skipped, 1);
    assert_eq!(r.total.scanned, 66);
}

/// The graph ignores statement order, so a parameter overwritten before
/// the sink still counts as reaching it. Not part of the labelled corpus.
#[test]
fn overwritten_parameter_is_still_flagged() {
    // x = "1"; eval(x) with x a parameter
    let body = serde_json::json!([
        n("assign", 2, None, vec![n("name", 2, Some("x"), vec![]), n("constant", 2, Some("'1'"), vec![])]),
        n("expr", 3, None, vec![n("call", 3, None, vec![n("name", 3, Some("eval"), vec![]), n("name", 3, Some("x"), vec![])])]),
    ]);
    let d = load_dump(&unit_doc(&["x"], body));
    let c = find_candidates(&d.units[0], &default_sinks(), &Mutators::default());
    assert_eq!(c.len(), 1);
    assert_eq!(c[0].witnesses[0].path, ["x", "x"]);
}
