//! Interchange AST: the function-unit dump format shared with the Python
//! extractor. See `docs/interchange-ast.md` at the repository root.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const FORMAT: &str = "pickleguard-ast";
pub const SCHEMA_VERSION: u32 = 1;

/// `[line, col, end_line, end_col]`, 1-based lines, 0-based columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span(pub [u32; 4]);

impl Span {
    pub fn line(&self) -> u32 {
        self.0[0]
    }

    pub fn end_line(&self) -> u32 {
        self.0[2]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [l, c, el, ec] = self.0;
        write!(f, "{l}:{c}-{el}:{ec}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Block,
    Assign,
    AugAssign,
    Expr,
    Return,
    For,
    While,
    If,
    With,
    WithItem,
    Opaque,
    Name,
    Constant,
    Attribute,
    Call,
    Subscript,
    Keyword,
    Starred,
}

impl Kind {
    pub const ALL: [Kind; 18] = [
        Kind::Block,
        Kind::Assign,
        Kind::AugAssign,
        Kind::Expr,
        Kind::Return,
        Kind::For,
        Kind::While,
        Kind::If,
        Kind::With,
        Kind::WithItem,
        Kind::Opaque,
        Kind::Name,
        Kind::Constant,
        Kind::Attribute,
        Kind::Call,
        Kind::Subscript,
        Kind::Keyword,
        Kind::Starred,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Block => "block",
            Kind::Assign => "assign",
            Kind::AugAssign => "aug_assign",
            Kind::Expr => "expr",
            Kind::Return => "return",
            Kind::For => "for",
            Kind::While => "while",
            Kind::If => "if",
            Kind::With => "with",
            Kind::WithItem => "with_item",
            Kind::Opaque => "opaque",
            Kind::Name => "name",
            Kind::Constant => "constant",
            Kind::Attribute => "attribute",
            Kind::Call => "call",
            Kind::Subscript => "subscript",
            Kind::Keyword => "keyword",
            Kind::Starred => "starred",
        }
    }

    pub fn is_statement(self) -> bool {
        matches!(
            self,
            Kind::Assign | Kind::AugAssign | Kind::Expr | Kind::Return | Kind::For | Kind::While | Kind::If | Kind::With | Kind::Opaque
        )
    }

    pub fn is_expression(self) -> bool {
        matches!(self, Kind::Name | Kind::Constant | Kind::Attribute | Kind::Call | Kind::Subscript | Kind::Starred | Kind::Opaque)
    }
}

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Kind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| s.to_string())
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub kind: String,
    pub span: Span,
    #[serde(default)]
    pub children: Vec<Node>,
    #[serde(default)]
    pub literal: Option<String>,
}

impl Node {
    /// Only meaningful on validated trees; unknown kinds read as opaque.
    pub fn kind(&self) -> Kind {
        self.kind.parse().unwrap_or(Kind::Opaque)
    }

    pub fn lit(&self) -> &str {
        self.literal.as_deref().unwrap_or("")
    }

    /// Pre-order walk over this node and everything below it.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Node)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpan {
    pub file: String,
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionUnit {
    pub fqname: String,
    pub params: Vec<String>,
    pub source_library: String,
    pub source_span: SourceSpan,
    /// Bound receiver of a method (`self`, `cls`). Not a taint source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receiver: Option<String>,
    /// Recorded as written; they add no edges.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decorators: Vec<String>,
    pub body: Vec<Node>,
}

impl FunctionUnit {
    /// Parameters reachability starts from.
    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(String::as_str).filter(move |p| Some(*p) != self.receiver.as_deref())
    }

    /// Statements at every nesting level.
    pub fn statement_count(&self) -> usize {
        fn count(stmts: &[Node]) -> usize {
            stmts.iter().map(|s| 1 + s.children.iter().filter(|c| c.kind == "block").map(|b| count(&b.children)).sum::<usize>()).sum()
        }
        count(&self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// `None` for document-level problems.
    pub unit: Option<String>,
    /// Location inside the unit, e.g. `body[2].children[0]`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.unit {
            Some(u) if self.path.is_empty() => write!(f, "{u}: {}", self.message),
            Some(u) => write!(f, "{u} at {}: {}", self.path, self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// A parsed dump. Units that failed validation are left out and their
/// problems listed in `violations`.
#[derive(Debug, Clone, Default)]
pub struct Dump {
    pub units: Vec<FunctionUnit>,
    pub violations: Vec<Violation>,
    /// Units present in the document but not usable.
    pub skipped: Vec<SkippedUnit>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedUnit {
    pub fqname: String,
    pub source_library: String,
}

fn doc_violation(message: impl Into<String>) -> Violation {
    Violation { unit: None, path: String::new(), message: message.into() }
}

/// Parse a dump, keeping every unit that validates.
pub fn load_dump(text: &str) -> Dump {
    let mut out = Dump::default();
    let value: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) if e.is_eof() => {
            out.violations.push(doc_violation(format!("unexpected-eof: {e}")));
            return out;
        }
        Err(e) => {
            out.violations.push(doc_violation(format!("not a JSON document: {e}")));
            return out;
        }
    };
    match value.get("format").and_then(|v| v.as_str()) {
        Some(FORMAT) => {}
        Some(other) => out.violations.push(doc_violation(format!("format is {other:?}, expected {FORMAT:?}"))),
        None => out.violations.push(doc_violation("missing format header")),
    }
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => out.violations.push(doc_violation(format!("unsupported schema_version {v}"))),
        None => out.violations.push(doc_violation("missing schema_version header")),
    }
    if !out.violations.is_empty() {
        return out;
    }
    let Some(units) = value.get("units").and_then(|v| v.as_array()) else {
        out.violations.push(doc_violation("missing units list"));
        return out;
    };
    for (i, raw) in units.iter().enumerate() {
        let name = raw.get("fqname").and_then(|v| v.as_str()).map(str::to_string);
        let library = raw.get("source_library").and_then(|v| v.as_str()).unwrap_or("<unknown>").to_string();
        let skip = |out: &mut Dump| {
            out.skipped.push(SkippedUnit { fqname: name.clone().unwrap_or_else(|| format!("<unit {i}>")), source_library: library.clone() })
        };
        match serde_json::from_value::<FunctionUnit>(raw.clone()) {
            Ok(u) => {
                let v = validate_unit(&u);
                if v.is_empty() {
                    out.units.push(u);
                } else {
                    out.violations.extend(v);
                    skip(&mut out);
                }
            }
            Err(e) => {
                out.violations.push(Violation {
                    unit: name.clone().or_else(|| Some(format!("<unit {i}>"))),
                    path: String::new(),
                    message: e.to_string(),
                });
                skip(&mut out);
            }
        }
    }
    out
}

fn is_identifier(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch == '_' || ch.is_alphabetic()) && c.all(|ch| ch == '_' || ch.is_alphanumeric())
}

/// Schema problems of one unit; empty when it is usable.
pub fn validate_unit(u: &FunctionUnit) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut push = |path: String, message: String| v.push(Violation { unit: Some(u.fqname.clone()), path, message });
    if u.fqname.is_empty() || !u.fqname.split('.').all(is_identifier) {
        push(String::new(), format!("malformed fqname {:?}", u.fqname));
    }
    let mut seen = std::collections::BTreeSet::new();
    for p in &u.params {
        if !is_identifier(p) {
            push(String::new(), format!("malformed parameter {p:?}"));
        }
        if !seen.insert(p.as_str()) {
            push(String::new(), format!("duplicate parameter {p:?}"));
        }
    }
    if let Some(r) = &u.receiver {
        if u.params.first() != Some(r) {
            push(String::new(), format!("receiver {r:?} is not the first parameter"));
        }
    }
    let lines = (u.source_span.start_line, u.source_span.end_line);
    if lines.0 == 0 || lines.0 > lines.1 {
        push(String::new(), format!("bad source_span lines {}..{}", lines.0, lines.1));
    }
    for (i, s) in u.body.iter().enumerate() {
        check(s, Role::Stmt, &format!("body[{i}]"), lines, &mut push);
    }
    v
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Stmt,
    Expr,
    Block,
    WithItem,
    CallArg,
}

fn check(n: &Node, role: Role, path: &str, lines: (u32, u32), push: &mut dyn FnMut(String, String)) {
    let kind = match n.kind.parse::<Kind>() {
        Ok(k) => k,
        Err(k) => {
            push(path.to_string(), format!("unknown node kind {k:?}"));
            return;
        }
    };
    let [l, c, el, ec] = n.span.0;
    if l == 0 || (l, c) > (el, ec) || l < lines.0 || el > lines.1 {
        push(path.to_string(), format!("span {} outside {}..{} or reversed", n.span, lines.0, lines.1));
    }
    let fits = match role {
        Role::Stmt => kind.is_statement(),
        Role::Expr => kind.is_expression(),
        Role::Block => kind == Kind::Block,
        Role::WithItem => kind == Kind::WithItem,
        Role::CallArg => kind.is_expression() || kind == Kind::Keyword,
    };
    if !fits {
        push(path.to_string(), format!("{kind} not allowed here"));
        return;
    }
    let n_ch = n.children.len();
    let mut want = |ok: bool, what: &str| {
        if !ok {
            push(path.to_string(), format!("{kind} needs {what}, has {n_ch} children"));
        }
        ok
    };
    use Role::*;
    let roles: Vec<Role> = match kind {
        Kind::Block => vec![Stmt; n_ch],
        Kind::Assign if want(n_ch >= 2, "targets and a value") => vec![Expr; n_ch],
        Kind::AugAssign if want(n_ch == 2, "a target and a value") => vec![Expr; 2],
        Kind::Expr if want(n_ch == 1, "one expression") => vec![Expr],
        Kind::Return if want(n_ch <= 1, "at most one expression") => vec![Expr; n_ch],
        Kind::For if want(n_ch == 3 || n_ch == 4, "target, iterable and blocks") => {
            [Expr, Expr, Block, Block][..n_ch].to_vec()
        }
        Kind::While | Kind::If if want(n_ch == 2 || n_ch == 3, "a test and blocks") => [Expr, Block, Block][..n_ch].to_vec(),
        Kind::With if want(n_ch >= 2, "items and a block") => {
            let mut r = vec![WithItem; n_ch - 1];
            r.push(Block);
            r
        }
        Kind::WithItem if want(n_ch == 1 || n_ch == 2, "a context and an optional target") => vec![Expr; n_ch],
        // a statement-level opaque may hold nested blocks; an expression-level
        // one holds sub-expressions
        Kind::Opaque if role == Stmt => n.children.iter().map(|c| if c.kind == "block" { Block } else { Expr }).collect(),
        Kind::Opaque => vec![Expr; n_ch],
        Kind::Name => {
            if !want(n_ch == 0, "no children") {
                return;
            }
            if !n.literal.as_deref().is_some_and(is_identifier) {
                push(path.to_string(), "name needs an identifier literal".into());
            }
            vec![]
        }
        Kind::Constant if want(n_ch == 0, "no children") => vec![],
        Kind::Attribute if want(n_ch == 1, "one value") => {
            if !n.literal.as_deref().is_some_and(is_identifier) {
                push(path.to_string(), "attribute needs an identifier literal".into());
            }
            vec![Expr]
        }
        Kind::Call if want(n_ch >= 1, "a callee") => {
            let mut r = vec![CallArg; n_ch];
            r[0] = Expr;
            r
        }
        Kind::Subscript if want(n_ch == 2, "a value and an index") => vec![Expr; 2],
        Kind::Keyword | Kind::Starred if want(n_ch == 1, "one value") => vec![Expr],
        _ => return,
    };
    for (i, (c, r)) in n.children.iter().zip(roles).enumerate() {
        check(c, r, &format!("{path}.children[{i}]"), lines, push);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_json(body: &str) -> String {
        format!(
            r#"{{"format":"pickleguard-ast","schema_version":1,"units":[{{"fqname":"m.f","params":["a"],"source_library":"m","source_span":{{"file":"m.py","start_line":1,"end_line":3}},"body":[{body}]}}]}}"#
        )
    }

    const RET_A: &str = r#"{"kind":"return","span":[2,4,2,12],"children":[{"kind":"name","span":[2,11,2,12],"children":[],"literal":"a"}],"literal":null}"#;

    #[test]
    fn minimal_unit_loads() {
        let d = load_dump(&unit_json(RET_A));
        assert!(d.violations.is_empty(), "{:?}", d.violations);
        assert_eq!(d.units.len(), 1);
        assert_eq!(d.units[0].sources().collect::<Vec<_>>(), vec!["a"]);
    }

    #[test]
    fn unknown_kind_is_named() {
        let d = load_dump(&unit_json(&RET_A.replace("\"name\"", "\"lambda_thing\"")));
        assert!(d.units.is_empty());
        assert_eq!(d.skipped.len(), 1);
        assert!(d.violations[0].message.contains("lambda_thing"), "{}", d.violations[0]);
        assert_eq!(d.violations[0].path, "body[0].children[0]");
    }

    #[test]
    fn truncated_document() {
        let t = unit_json(RET_A);
        let d = load_dump(&t[..t.len() / 2]);
        assert!(d.violations[0].message.starts_with("unexpected-eof"));
    }

    #[test]
    fn header_checks() {
        let d = load_dump(&unit_json(RET_A).replace("\"schema_version\":1", "\"schema_version\":7"));
        assert!(d.violations[0].message.contains("schema_version 7"));
        let d = load_dump(r#"{"units":[]}"#);
        assert_eq!(d.violations.len(), 2);
    }

    #[test]
    fn structural_checks() {
        // expression where a statement belongs
        let bad = r#"{"kind":"name","span":[2,4,2,5],"children":[],"literal":"a"}"#;
        assert!(load_dump(&unit_json(bad)).violations[0].message.contains("not allowed"));
        // span past the end of the function
        let far = RET_A.replace("[2,4,2,12]", "[2,4,9,12]");
        assert!(load_dump(&unit_json(&far)).violations[0].message.contains("outside"));
        let dup = unit_json(RET_A).replace(r#""params":["a"]"#, r#""params":["a","a"]"#);
        assert!(load_dump(&dup).violations[0].message.contains("duplicate parameter"));
    }

    #[test]
    fn one_bad_unit_does_not_sink_the_rest() {
        let good = unit_json(RET_A);
        let doc: serde_json::Value = serde_json::from_str(&good).unwrap();
        let mut u2 = doc["units"][0].clone();
        u2["fqname"] = "m.g".into();
        u2["body"][0]["kind"] = "goto".into();
        let mut doc2 = doc.clone();
        doc2["units"].as_array_mut().unwrap().push(u2);
        let d = load_dump(&doc2.to_string());
        assert_eq!(d.units.len(), 1);
        assert_eq!(d.skipped[0].fqname, "m.g");
    }
}
