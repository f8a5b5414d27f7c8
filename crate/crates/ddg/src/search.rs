//! Sink discovery and parameter-to-sink reachability.

use crate::ast::{FunctionUnit, Kind, Node, Span};
use crate::graph::{build_ddg_with, calls_in, callee_text, statement_exprs, statements, vars, DdgGraph, Mutators};
use crate::sinks::{ArgSel, Require, SinkSet, SinkSpec};
use pickleguard_core::risk::RiskCategory;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// A call whose callee matches a sink spec.
#[derive(Debug, Clone)]
pub struct SinkCall<'a> {
    pub call: &'a Node,
    pub callee: String,
    pub spec: &'a SinkSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Witness {
    /// The critical argument reached.
    pub arg: String,
    pub param: String,
    /// Parameter first, a variable of the argument last. A parameter used
    /// directly in the argument shows as `[p, p]`.
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GadgetCandidate {
    pub fqname: String,
    pub source_library: String,
    pub sink: String,
    pub callee: String,
    pub category: RiskCategory,
    pub call_span: Span,
    pub witnesses: Vec<Witness>,
}

/// Sink calls of a unit in source order.
pub fn sink_calls<'a>(unit: &'a FunctionUnit, sinks: &'a SinkSet) -> Vec<SinkCall<'a>> {
    let mut calls = Vec::new();
    for s in statements(unit) {
        for e in statement_exprs(s) {
            calls_in(e, &mut calls);
        }
    }
    calls
        .into_iter()
        .filter_map(|call| {
            let callee = callee_text(call.children.first()?);
            let spec = sinks.lookup(&callee)?;
            Some(SinkCall { call, callee, spec })
        })
        .collect()
}

/// The expression bound to a critical argument: positional slot, then
/// keyword, then an earlier `*args`, then `**kwargs`.
pub fn critical_arg<'a>(call: &'a Node, sel: &ArgSel) -> Option<&'a Node> {
    let args = &call.children[1..];
    if let Some(pos) = sel.position {
        let mut i = 0;
        for a in args {
            match a.kind() {
                Kind::Keyword => {}
                Kind::Starred => break,
                _ => {
                    if i == pos {
                        return Some(a);
                    }
                    i += 1;
                }
            }
        }
    }
    if let Some(kw) = &sel.keyword {
        if let Some(a) = args.iter().find(|a| a.kind() == Kind::Keyword && a.literal.as_deref() == Some(kw.as_str())) {
            return a.children.first();
        }
    }
    if let Some(pos) = sel.position {
        let mut i = 0;
        for a in args {
            match a.kind() {
                Kind::Keyword => {}
                Kind::Starred => return a.children.first(),
                _ => {
                    if i == pos {
                        break;
                    }
                    i += 1;
                }
            }
        }
    }
    args.iter().find(|a| a.kind() == Kind::Keyword && a.literal.is_none()).and_then(|a| a.children.first())
}

/// Lexicographically smallest shortest path from `src` to every node it
/// reaches. Successors are visited in sorted order, so first discovery is
/// the lex-min among equal-length paths.
pub fn shortest_paths(g: &DdgGraph, src: &str) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    out.insert(src.to_string(), vec![src.to_string()]);
    let mut q = VecDeque::from([src.to_string()]);
    while let Some(v) = q.pop_front() {
        let base = out[&v].clone();
        for w in g.successors(&v) {
            if !out.contains_key(w) {
                let mut p = base.clone();
                p.push(w.to_string());
                out.insert(w.to_string(), p);
                q.push_back(w.to_string());
            }
        }
    }
    out
}

fn order(p: &[String]) -> (usize, &[String]) {
    (p.len(), p)
}

/// Pick the witness for one argument from per-source path tables.
pub(crate) fn best_witness<'p>(
    arg: &ArgSel,
    targets: &BTreeSet<String>,
    tables: impl Iterator<Item = (&'p str, &'p BTreeMap<String, Vec<String>>)>,
) -> Option<Witness> {
    let mut best: Option<(String, Vec<String>)> = None;
    for (p, paths) in tables {
        for t in targets {
            if let Some(path) = paths.get(t) {
                if best.as_ref().is_none_or(|(_, b)| order(path) < order(b)) {
                    best = Some((p.to_string(), path.clone()));
                }
            }
        }
    }
    best.map(|(param, mut path)| {
        if path.len() == 1 {
            path.push(param.clone());
        }
        Witness { arg: arg.to_string(), param, path }
    })
}

/// Candidates for each sink call with at least one caller-reachable
/// critical argument.
pub fn find_candidates(unit: &FunctionUnit, sinks: &SinkSet, mutators: &Mutators) -> Vec<GadgetCandidate> {
    let calls = sink_calls(unit, sinks);
    if calls.is_empty() {
        return Vec::new();
    }
    let g = build_ddg_with(unit, mutators);
    let tables: Vec<(&str, BTreeMap<String, Vec<String>>)> = unit.sources().map(|p| (p, shortest_paths(&g, p))).collect();
    candidates_from(unit, &calls, |arg, targets| best_witness(arg, targets, tables.iter().map(|(p, t)| (*p, t))))
}

pub(crate) fn candidates_from(
    unit: &FunctionUnit,
    calls: &[SinkCall<'_>],
    mut witness: impl FnMut(&ArgSel, &BTreeSet<String>) -> Option<Witness>,
) -> Vec<GadgetCandidate> {
    let mut out = Vec::new();
    for c in calls {
        let witnesses: Vec<Witness> = c
            .spec
            .critical_args
            .iter()
            .filter_map(|sel| {
                let e = critical_arg(c.call, sel)?;
                witness(sel, &vars(e))
            })
            .collect();
        let enough = match c.spec.require {
            Require::Any => !witnesses.is_empty(),
            Require::All => witnesses.len() == c.spec.critical_args.len(),
        };
        if enough {
            out.push(GadgetCandidate {
                fqname: unit.fqname.clone(),
                source_library: unit.source_library.clone(),
                sink: c.spec.callee_pattern.clone(),
                callee: c.callee.clone(),
                category: c.spec.category,
                call_span: c.call.span,
                witnesses,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::load_dump;
    use crate::sinks::default_sinks;

    fn unit(src: &str) -> FunctionUnit {
        let d = load_dump(src);
        assert!(d.violations.is_empty(), "{:?}", d.violations);
        d.units.into_iter().next().unwrap()
    }

    fn n(kind: &str, lit: Option<&str>, children: Vec<serde_json::Value>) -> serde_json::Value {
        serde_json::json!({"kind": kind, "span": [1, 0, 1, 1], "children": children, "literal": lit})
    }

    fn name(s: &str) -> serde_json::Value {
        n("name", Some(s), vec![])
    }

    fn doc(params: &[&str], receiver: Option<&str>, body: Vec<serde_json::Value>) -> String {
        serde_json::json!({
            "format": "pickleguard-ast", "schema_version": 1,
            "units": [{"fqname": "m.f", "params": params, "receiver": receiver, "source_library": "t",
                       "source_span": {"file": "m.py", "start_line": 1, "end_line": 1}, "body": body}]
        })
        .to_string()
    }

    fn call(f: serde_json::Value, args: Vec<serde_json::Value>) -> serde_json::Value {
        let mut ch = vec![f];
        ch.extend(args);
        n("call", None, ch)
    }

    #[test]
    fn constant_argument_is_not_a_candidate() {
        let u = unit(&doc(&[], None, vec![n("expr", None, vec![call(name("eval"), vec![n("constant", Some("'1'"), vec![])])])]));
        let s = default_sinks();
        assert_eq!(sink_calls(&u, &s).len(), 1);
        assert!(find_candidates(&u, &s, &Mutators::default()).is_empty());
    }

    #[test]
    fn direct_and_indirect_witnesses() {
        // y = x; eval(y); exec(x)
        let u = unit(&doc(
            &["x"],
            None,
            vec![
                n("assign", None, vec![name("y"), name("x")]),
                n("expr", None, vec![call(name("eval"), vec![name("y")])]),
                n("expr", None, vec![call(name("exec"), vec![name("x")])]),
            ],
        ));
        let c = find_candidates(&u, &default_sinks(), &Mutators::default());
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].witnesses[0].path, ["x", "y"]);
        assert_eq!(c[1].witnesses[0].path, ["x", "x"]);
    }

    #[test]
    fn require_all_needs_every_argument() {
        let ga = |second| n("expr", None, vec![call(name("getattr"), vec![name("o"), second])]);
        let s = default_sinks();
        let u = unit(&doc(&["o"], None, vec![ga(n("constant", Some("'x'"), vec![]))]));
        assert!(find_candidates(&u, &s, &Mutators::default()).is_empty());
        let u = unit(&doc(&["o", "a"], None, vec![ga(name("a"))]));
        assert_eq!(find_candidates(&u, &s, &Mutators::default())[0].witnesses.len(), 2);
    }

    #[test]
    fn receiver_is_not_a_source() {
        let u = unit(&doc(
            &["self"],
            Some("self"),
            vec![n("expr", None, vec![call(name("eval"), vec![n("attribute", Some("expr"), vec![name("self")])])])],
        ));
        assert!(find_candidates(&u, &default_sinks(), &Mutators::default()).is_empty());
    }

    #[test]
    fn critical_arg_resolution() {
        let kw = |k: Option<&str>, v| n("keyword", k, vec![v]);
        let star = |v| n("starred", None, vec![v]);
        let sel = |p: Option<usize>, k: Option<&str>| ArgSel { position: p, keyword: k.map(str::to_string) };
        let lit = |e: Option<&Node>| e.map(|e| e.lit().to_string());
        let mk = |args| -> Node { serde_json::from_value(call(name("f"), args)).unwrap() };

        let c = mk(vec![name("a"), kw(Some("file"), name("b"))]);
        assert_eq!(lit(critical_arg(&c, &sel(Some(0), Some("file")))), Some("a".into()));
        assert_eq!(lit(critical_arg(&c, &sel(Some(1), Some("file")))), Some("b".into()));
        assert_eq!(lit(critical_arg(&c, &sel(Some(2), None))), None);

        let c = mk(vec![star(name("rest")), kw(None, name("opts"))]);
        assert_eq!(lit(critical_arg(&c, &sel(Some(0), None))), Some("rest".into()));
        assert_eq!(lit(critical_arg(&c, &sel(None, Some("x")))), Some("opts".into()));

        let c = mk(vec![name("a"), kw(None, name("opts"))]);
        assert_eq!(lit(critical_arg(&c, &sel(Some(1), None))), Some("opts".into()));
    }

    #[test]
    fn lex_min_among_shortest() {
        // p -> b -> t and p -> a -> t: the path through `a` wins.
        let u = unit(&doc(
            &["p"],
            None,
            vec![
                n("assign", None, vec![name("b"), name("p")]),
                n("assign", None, vec![name("a"), name("p")]),
                n("assign", None, vec![name("t"), name("b")]),
                n("assign", None, vec![name("t"), name("a")]),
            ],
        ));
        let g = crate::graph::build_ddg(&u);
        assert_eq!(shortest_paths(&g, "p")["t"], ["p", "a", "t"]);
    }
}
