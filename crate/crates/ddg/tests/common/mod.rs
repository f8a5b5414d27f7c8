#![allow(dead_code)]

use pickleguard_ddg::{load_dump, Dump};

pub fn corpus_file(name: &str) -> String {
    std::fs::read_to_string(format!("{}/corpus/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

pub fn dump(name: &str) -> Dump {
    let d = load_dump(&corpus_file(name));
    assert!(d.violations.is_empty(), "{:?}", d.violations);
    d
}

/// A one-unit dump from JSON statements.
pub fn unit_doc(params: &[&str], body: serde_json::Value) -> String {
    serde_json::json!({
        "format": "pickleguard-ast", "schema_version": 1,
        "units": [{"fqname": "t.f", "params": params, "source_library": "t",
                   "source_span": {"file": "t.py", "start_line": 1, "end_line": 100}, "body": body}]
    })
    .to_string()
}

pub fn n(kind: &str, line: u32, lit: Option<&str>, children: Vec<serde_json::Value>) -> serde_json::Value {
    serde_json::json!({"kind": kind, "span": [line, 0, line, 1], "children": children, "literal": lit})
}
