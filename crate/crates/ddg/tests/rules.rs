//! Rule soundness: every graph edge is produced by exactly one rule
//! application, replayed here from the raw JSON independently of the
//! graph builder.

use pickleguard_ddg::{build_ddg, load_dump};
use serde_json::Value;
use std::collections::BTreeSet;

const MUTATORS: &[&str] = &["append", "extend", "insert", "add", "update", "setdefault", "write", "push", "pop"];

fn kind(v: &Value) -> &str {
    v["kind"].as_str().unwrap()
}

fn kids(v: &Value) -> &[Value] {
    v["children"].as_array().map(Vec::as_slice).unwrap_or(&[])
}

fn lit(v: &Value) -> &str {
    v["literal"].as_str().unwrap_or("")
}

fn uses(v: &Value, out: &mut BTreeSet<String>) {
    match kind(v) {
        "name" => {
            out.insert(lit(v).to_string());
        }
        "constant" => {}
        _ => kids(v).iter().for_each(|c| uses(c, out)),
    }
}

fn defs(v: &Value, out: &mut BTreeSet<String>) {
    match kind(v) {
        "name" => {
            out.insert(lit(v).to_string());
        }
        "attribute" | "subscript" | "starred" | "call" => {
            if let Some(c) = kids(v).first() {
                defs(c, out)
            }
        }
        "opaque" => kids(v).iter().for_each(|c| defs(c, out)),
        _ => {}
    }
}

fn set(f: impl FnOnce(&mut BTreeSet<String>)) -> BTreeSet<String> {
    let mut s = BTreeSet::new();
    f(&mut s);
    s
}

fn dotted(v: &Value) -> String {
    match kind(v) {
        "name" => lit(v).to_string(),
        "attribute" => format!("{}.{}", kids(v).first().map(dotted).unwrap_or_else(|| "<expr>".into()), lit(v)),
        k => format!("<{k}>"),
    }
}

type E = (String, String, &'static str, [u64; 4]);

fn replay(stmt: &Value, out: &mut Vec<E>) {
    let span: [u64; 4] = serde_json::from_value(stmt["span"].clone()).unwrap();
    let mut emit = |s: &BTreeSet<String>, d: &BTreeSet<String>, r: &'static str| {
        for a in s {
            for b in d {
                out.push((a.clone(), b.clone(), r, span));
            }
        }
    };
    let ch = kids(stmt);
    match kind(stmt) {
        "assign" => {
            let s = set(|o| uses(ch.last().unwrap(), o));
            for t in &ch[..ch.len() - 1] {
                emit(&s, &set(|o| defs(t, o)), "assignment");
            }
        }
        "aug_assign" => {
            let d = set(|o| defs(&ch[0], o));
            let mut s = set(|o| uses(&ch[1], o));
            s.extend(d.clone());
            emit(&s, &d, "aug-assignment");
        }
        "return" if !ch.is_empty() => emit(&set(|o| uses(&ch[0], o)), &BTreeSet::from(["<return>".to_string()]), "assignment"),
        "for" => emit(&set(|o| uses(&ch[1], o)), &set(|o| defs(&ch[0], o)), "for-loop"),
        "with" => {
            for it in ch.iter().filter(|c| kind(c) == "with_item") {
                if let [c, t] = kids(it) {
                    emit(&set(|o| uses(c, o)), &set(|o| defs(t, o)), "with-stmt");
                }
            }
        }
        _ => {}
    }
    fn calls<'a>(v: &'a Value, out: &mut Vec<&'a Value>) {
        if kind(v) == "call" {
            out.push(v);
        }
        kids(v).iter().for_each(|c| calls(c, out));
    }
    let mut cs = Vec::new();
    for c in ch.iter().filter(|c| kind(c) != "block") {
        calls(c, &mut cs);
    }
    for c in cs {
        let k = kids(c);
        let f = &k[0];
        let mut s = BTreeSet::new();
        for a in &k[1..] {
            match kind(a) {
                "keyword" | "starred" => uses(&kids(a)[0], &mut s),
                _ => uses(a, &mut s),
            }
        }
        let nargs = k.len() - 1;
        let mutates = kind(f) == "attribute" && MUTATORS.contains(&lit(f)) && (lit(f) != "pop" || nargs > 0);
        let recv = if mutates { set(|o| defs(&kids(f)[0], o)) } else { BTreeSet::new() };
        let d = if recv.is_empty() { BTreeSet::from([dotted(f)]) } else { recv };
        emit(&s, &d, "call");
    }
    for b in ch.iter().filter(|c| kind(c) == "block") {
        kids(b).iter().for_each(|s| replay(s, out));
    }
}

fn check(file: &str) -> usize {
    let text = std::fs::read_to_string(format!("{}/corpus/{file}", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let raw: Value = serde_json::from_str(&text).unwrap();
    let dump = load_dump(&text);
    assert!(dump.violations.is_empty());
    let mut total = 0;
    for (u, ru) in dump.units.iter().zip(raw["units"].as_array().unwrap()) {
        let mut want = Vec::new();
        kids(&serde_json::json!({"children": ru["body"]})).iter().for_each(|s| replay(s, &mut want));
        want.sort();
        want.dedup();
        let got: Vec<E> = build_ddg(u)
            .edges
            .iter()
            .map(|e| (e.from.clone(), e.to.clone(), e.rule.as_str(), e.span.0.map(u64::from)))
            .collect();
        let mut got_sorted = got.clone();
        got_sorted.sort();
        assert_eq!(got_sorted, want, "{}", u.fqname);
        total += got.len();
    }
    total
}

#[test]
fn synthetic_corpus_edges_match_replay() {
    assert!(check("synthetic.ast.json") > 200);
}

#[test]
fn worked_example_edges_match_replay() {
    assert!(check("worked_examples.ast.json") > 0);
}
