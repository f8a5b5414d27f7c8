//! Data-dependency graph of one function unit.

use crate::ast::{FunctionUnit, Kind, Node, Span};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Synthetic node receiving everything a unit returns.
pub const RETURN_NODE: &str = "<return>";

/// Methods whose call writes into the receiver rather than producing a
/// fresh value. `pop` only counts when it is given an argument.
pub const DEFAULT_MUTATORS: &[&str] = &["append", "extend", "insert", "add", "update", "setdefault", "write", "push", "pop"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Assignment,
    AugAssignment,
    Call,
    ForLoop,
    WithStmt,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Assignment => "assignment",
            Rule::AugAssignment => "aug-assignment",
            Rule::Call => "call",
            Rule::ForLoop => "for-loop",
            Rule::WithStmt => "with-stmt",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub rule: Rule,
    /// Span of the statement the edge came from.
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutators(BTreeSet<String>);

impl Default for Mutators {
    fn default() -> Self {
        Mutators(DEFAULT_MUTATORS.iter().map(|s| s.to_string()).collect())
    }
}

impl Mutators {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Self {
        Mutators(names.into_iter().map(Into::into).collect())
    }

    fn mutates(&self, method: &str, nargs: usize) -> bool {
        self.0.contains(method) && (method != "pop" || nargs > 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DdgGraph {
    pub unit: String,
    pub nodes: BTreeSet<String>,
    /// Sorted, no duplicates.
    pub edges: Vec<Edge>,
    adj: BTreeMap<String, BTreeSet<String>>,
}

impl DdgGraph {
    pub fn successors(&self, n: &str) -> impl Iterator<Item = &str> {
        self.adj.get(n).into_iter().flatten().map(String::as_str)
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.adj.get(from).is_some_and(|s| s.contains(to))
    }
}

/// Identifier roots occurring anywhere in an expression, function names
/// included. An attribute chain contributes its root only.
pub fn vars(e: &Node) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect_vars(e, &mut out);
    out
}

fn collect_vars(e: &Node, out: &mut BTreeSet<String>) {
    match e.kind() {
        Kind::Name => {
            out.insert(e.lit().to_string());
        }
        Kind::Constant => {}
        _ => {
            for c in &e.children {
                collect_vars(c, out);
            }
        }
    }
}

/// Variables written by an assignment target: names, and the root of
/// attribute and subscript targets (not the index).
pub fn target_vars(e: &Node) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect_targets(e, &mut out);
    out
}

fn collect_targets(e: &Node, out: &mut BTreeSet<String>) {
    match e.kind() {
        Kind::Name => {
            out.insert(e.lit().to_string());
        }
        Kind::Attribute | Kind::Subscript | Kind::Starred | Kind::Call => {
            if let Some(c) = e.children.first() {
                collect_targets(c, out);
            }
        }
        Kind::Opaque => {
            for c in &e.children {
                collect_targets(c, out);
            }
        }
        _ => {}
    }
}

/// Dotted text of a callee expression, `<kind>` for parts that are not
/// names.
pub fn callee_text(func: &Node) -> String {
    match func.kind() {
        Kind::Name => func.lit().to_string(),
        Kind::Attribute => match func.children.first() {
            Some(v) => format!("{}.{}", callee_text(v), func.lit()),
            None => format!("<expr>.{}", func.lit()),
        },
        k => format!("<{k}>"),
    }
}

/// Argument expressions of a call, keyword and starred wrappers removed.
pub fn call_args(call: &Node) -> impl Iterator<Item = &Node> {
    call.children.iter().skip(1).map(|a| match a.kind() {
        Kind::Keyword | Kind::Starred => a.children.first().unwrap_or(a),
        _ => a,
    })
}

/// Where the data of a call's arguments flows.
pub fn call_destinations(call: &Node, mutators: &Mutators) -> BTreeSet<String> {
    let Some(func) = call.children.first() else { return BTreeSet::new() };
    if func.kind() == Kind::Attribute && mutators.mutates(func.lit(), call.children.len() - 1) {
        let recv = func.children.first().map(target_vars).unwrap_or_default();
        if !recv.is_empty() {
            return recv;
        }
    }
    BTreeSet::from([callee_text(func)])
}

/// Every call in an expression tree, outermost first.
pub fn calls_in<'a>(e: &'a Node, out: &mut Vec<&'a Node>) {
    e.walk(&mut |n| {
        if n.kind() == Kind::Call {
            out.push(n);
        }
    });
}

/// The expression children of a statement (nested blocks excluded).
pub fn statement_exprs(stmt: &Node) -> impl Iterator<Item = &Node> {
    stmt.children.iter().filter(|c| c.kind() != Kind::Block)
}

/// Edges produced by one statement on its own; statements in nested
/// blocks are not included.
pub fn statement_edges(stmt: &Node, mutators: &Mutators) -> Vec<Edge> {
    let span = stmt.span;
    let mut out = Vec::new();
    let mut link = |srcs: &BTreeSet<String>, dsts: &BTreeSet<String>, rule: Rule| {
        for v in srcs {
            for w in dsts {
                out.push(Edge { from: v.clone(), to: w.clone(), rule, span });
            }
        }
    };
    let ch = &stmt.children;
    match stmt.kind() {
        Kind::Assign => {
            let (value, targets) = ch.split_last().expect("validated assign");
            let srcs = vars(value);
            for t in targets {
                link(&srcs, &target_vars(t), Rule::Assignment);
            }
        }
        Kind::AugAssign => {
            let dsts = target_vars(&ch[0]);
            let mut srcs = vars(&ch[1]);
            srcs.extend(dsts.iter().cloned());
            link(&srcs, &dsts, Rule::AugAssignment);
        }
        Kind::Return => {
            if let Some(v) = ch.first() {
                link(&vars(v), &BTreeSet::from([RETURN_NODE.to_string()]), Rule::Assignment);
            }
        }
        Kind::For => link(&vars(&ch[1]), &target_vars(&ch[0]), Rule::ForLoop),
        Kind::With => {
            for item in ch.iter().filter(|c| c.kind() == Kind::WithItem) {
                if let [ctx, target] = item.children.as_slice() {
                    link(&vars(ctx), &target_vars(target), Rule::WithStmt);
                }
            }
        }
        _ => {}
    }
    let mut calls = Vec::new();
    for e in statement_exprs(stmt) {
        calls_in(e, &mut calls);
    }
    for call in calls {
        let mut srcs = BTreeSet::new();
        for a in call_args(call) {
            collect_vars(a, &mut srcs);
        }
        link(&srcs, &call_destinations(call, mutators), Rule::Call);
    }
    out
}

/// Every statement of a unit, nested ones included, in source order.
pub fn statements(unit: &FunctionUnit) -> Vec<&Node> {
    fn go<'a>(stmts: &'a [Node], out: &mut Vec<&'a Node>) {
        for s in stmts {
            out.push(s);
            for b in s.children.iter().filter(|c| c.kind() == Kind::Block) {
                go(&b.children, out);
            }
        }
    }
    let mut out = Vec::new();
    go(&unit.body, &mut out);
    out
}

pub fn build_ddg(unit: &FunctionUnit) -> DdgGraph {
    build_ddg_with(unit, &Mutators::default())
}

pub fn build_ddg_with(unit: &FunctionUnit, mutators: &Mutators) -> DdgGraph {
    let mut g = DdgGraph { unit: unit.fqname.clone(), ..DdgGraph::default() };
    g.nodes.extend(unit.params.iter().cloned());
    let mut edges: Vec<Edge> = statements(unit).into_iter().flat_map(|s| statement_edges(s, mutators)).collect();
    edges.sort();
    edges.dedup();
    for e in &edges {
        g.nodes.insert(e.from.clone());
        g.nodes.insert(e.to.clone());
        g.adj.entry(e.from.clone()).or_default().insert(e.to.clone());
    }
    g.edges = edges;
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{SourceSpan, Span};

    fn n(kind: &str, children: Vec<Node>, lit: Option<&str>) -> Node {
        Node { kind: kind.into(), span: Span([1, 0, 1, 1]), children, literal: lit.map(str::to_string) }
    }
    fn name(s: &str) -> Node {
        n("name", vec![], Some(s))
    }
    fn attr(v: Node, a: &str) -> Node {
        n("attribute", vec![v], Some(a))
    }
    fn call(f: Node, args: Vec<Node>) -> Node {
        let mut ch = vec![f];
        ch.extend(args);
        n("call", ch, None)
    }
    fn konst() -> Node {
        n("constant", vec![], Some("'x'"))
    }
    fn unit(params: &[&str], body: Vec<Node>) -> FunctionUnit {
        FunctionUnit {
            fqname: "m.f".into(),
            params: params.iter().map(|s| s.to_string()).collect(),
            source_library: "m".into(),
            source_span: SourceSpan { file: "m.py".into(), start_line: 1, end_line: 1 },
            receiver: None,
            decorators: vec![],
            body,
        }
    }
    fn pairs(g: &DdgGraph) -> BTreeSet<(String, String)> {
        g.edges.iter().map(|e| (e.from.clone(), e.to.clone())).collect()
    }
    fn set(v: &[(&str, &str)]) -> BTreeSet<(String, String)> {
        v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn copy_then_return() {
        // def f(a): b = a; return b
        let g = build_ddg(&unit(&["a"], vec![n("assign", vec![name("b"), name("a")], None), n("return", vec![name("b")], None)]));
        let assign: Vec<&Edge> = g.edges.iter().filter(|e| e.to != RETURN_NODE).collect();
        assert_eq!(assign.len(), 1);
        assert_eq!((assign[0].from.as_str(), assign[0].to.as_str(), assign[0].rule), ("a", "b", Rule::Assignment));
        assert!(g.has_edge("b", RETURN_NODE));
    }

    #[test]
    fn attribute_roots_and_function_names() {
        // self.io.filename -> {self}; eval(x) -> {eval, x}
        assert_eq!(vars(&attr(attr(name("self"), "io"), "filename")), BTreeSet::from(["self".to_string()]));
        let v = vars(&call(name("eval"), vec![name("x")]));
        assert_eq!(v, BTreeSet::from(["eval".to_string(), "x".to_string()]));
        // a[i] = v writes a only
        let sub = n("subscript", vec![name("a"), name("i")], None);
        assert_eq!(target_vars(&sub), BTreeSet::from(["a".to_string()]));
        assert_eq!(vars(&sub).len(), 2);
    }

    #[test]
    fn aug_assignment_includes_lhs() {
        let g = build_ddg(&unit(&["a"], vec![n("aug_assign", vec![name("s"), name("a")], Some("+"))]));
        assert_eq!(pairs(&g), set(&[("a", "s"), ("s", "s")]));
        assert!(g.edges.iter().all(|e| e.rule == Rule::AugAssignment));
    }

    #[test]
    fn call_destinations_follow_mutation() {
        // parts.append(x) -> x -> parts ; s.count(x) -> x -> s.count ; d.pop() adds nothing
        let m = Mutators::default();
        let app = call(attr(name("parts"), "append"), vec![name("x")]);
        assert_eq!(call_destinations(&app, &m), BTreeSet::from(["parts".to_string()]));
        let cnt = call(attr(name("s"), "count"), vec![name("x")]);
        assert_eq!(call_destinations(&cnt, &m), BTreeSet::from(["s.count".to_string()]));
        let pop0 = call(attr(name("d"), "pop"), vec![]);
        assert_eq!(call_destinations(&pop0, &m), BTreeSet::from(["d.pop".to_string()]));
        let pop1 = call(attr(name("d"), "pop"), vec![name("k")]);
        assert_eq!(call_destinations(&pop1, &m), BTreeSet::from(["d".to_string()]));
        let joined = call(attr(konst(), "join"), vec![name("buf")]);
        assert_eq!(call_destinations(&joined, &m), BTreeSet::from(["<constant>.join".to_string()]));
    }

    #[test]
    fn for_and_with() {
        let block = n("block", vec![n("expr", vec![call(name("use"), vec![name("i")])], None)], None);
        let f = n("for", vec![name("i"), name("items"), block], None);
        let w = n("with", vec![n("with_item", vec![call(name("open"), vec![name("p")]), name("fh")], None), n("block", vec![], None)], None);
        let g = build_ddg(&unit(&["items", "p"], vec![f, w]));
        let rules: BTreeMap<(String, String), Rule> = g.edges.iter().map(|e| ((e.from.clone(), e.to.clone()), e.rule)).collect();
        assert_eq!(rules[&("items".into(), "i".into())], Rule::ForLoop);
        assert_eq!(rules[&("i".into(), "use".into())], Rule::Call);
        assert_eq!(rules[&("p".into(), "fh".into())], Rule::WithStmt);
        assert_eq!(rules[&("open".into(), "fh".into())], Rule::WithStmt);
        assert_eq!(rules[&("p".into(), "open".into())], Rule::Call);
    }

    #[test]
    fn control_statements_add_only_call_edges() {
        let test = call(name("check"), vec![name("a")]);
        let g = build_ddg(&unit(&["a"], vec![n("if", vec![test, n("block", vec![], None)], None), n("opaque", vec![], Some("Pass"))]));
        assert_eq!(pairs(&g), set(&[("a", "check")]));
    }

    #[test]
    fn graph_is_deterministic_and_deduplicated() {
        let s = n("assign", vec![name("b"), name("a")], None);
        let u = unit(&["a"], vec![s.clone(), s]);
        let g = build_ddg(&u);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g, build_ddg(&u));
        assert!(g.nodes.contains("a") && g.nodes.contains("b"));
    }
}
