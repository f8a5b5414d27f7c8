//! Sink definitions: which calls matter and which of their arguments
//! must be caller controlled.

use pickleguard_core::risk::{PatternSet, RiskCategory};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const DEFAULT_SINKS: &str = include_str!("../data/default_sinks.toml");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SinkError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("missing schema_version header")]
    MissingVersion,
    #[error("unsupported schema_version {0}")]
    UnsupportedVersion(u32),
    #[error("sink {callee:?}: {reason}")]
    Invalid { callee: String, reason: String },
}

/// One critical argument, matched by position, by keyword, or either.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArgSel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword: Option<String>,
}

impl fmt::Display for ArgSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.position, &self.keyword) {
            (Some(p), Some(k)) => write!(f, "{p}|{k}"),
            (Some(p), None) => write!(f, "{p}"),
            (None, Some(k)) => f.write_str(k),
            (None, None) => f.write_str("?"),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ArgDoc {
    Position(usize),
    Keyword(String),
    Both {
        position: Option<usize>,
        keyword: Option<String>,
    },
}

/// How many critical arguments must be reachable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Require {
    #[default]
    Any,
    All,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SinkDoc {
    callee: String,
    critical_args: Vec<ArgDoc>,
    category: RiskCategory,
    #[serde(default)]
    require: Require,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SinkFile {
    schema_version: Option<u32>,
    #[serde(default)]
    sink: Vec<SinkDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkSpec {
    /// Dotted callee, or `prefix.*`.
    pub callee_pattern: String,
    pub critical_args: Vec<ArgSel>,
    pub category: RiskCategory,
    pub require: Require,
}

#[derive(Debug, Clone, Default)]
pub struct SinkSet {
    pub specs: Vec<SinkSpec>,
    index: PatternSet<usize>,
}

impl SinkSet {
    pub fn lookup(&self, callee: &str) -> Option<&SinkSpec> {
        self.index.lookup(callee).map(|i| &self.specs[*i])
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Add or replace specs by callee pattern.
    pub fn extend(&mut self, other: SinkSet) {
        for s in other.specs {
            self.push(s);
        }
    }

    fn push(&mut self, s: SinkSpec) {
        match self.specs.iter().position(|x| x.callee_pattern == s.callee_pattern) {
            Some(i) => self.specs[i] = s,
            None => {
                self.index.insert(&s.callee_pattern, self.specs.len());
                self.specs.push(s);
            }
        }
    }
}

pub fn default_sinks() -> SinkSet {
    load_sinks(DEFAULT_SINKS).expect("shipped sink file is valid")
}

pub fn load_sinks(text: &str) -> Result<SinkSet, SinkError> {
    let doc: SinkFile = toml::from_str(text).map_err(|e| SinkError::Parse(e.to_string()))?;
    match doc.schema_version {
        Some(1) => {}
        Some(v) => return Err(SinkError::UnsupportedVersion(v)),
        None => return Err(SinkError::MissingVersion),
    }
    let mut set = SinkSet::default();
    for s in doc.sink {
        let bad = |reason: &str| SinkError::Invalid { callee: s.callee.clone(), reason: reason.to_string() };
        let body = s.callee.strip_suffix(".*").unwrap_or(&s.callee);
        if body.is_empty() || body.split('.').any(|p| p.is_empty() || p.contains(['*', ' '])) {
            return Err(bad("malformed callee"));
        }
        if s.critical_args.is_empty() {
            return Err(bad("critical_args is empty"));
        }
        let mut args = Vec::new();
        for a in s.critical_args {
            let sel = match a {
                ArgDoc::Position(p) => ArgSel { position: Some(p), keyword: None },
                ArgDoc::Keyword(k) => ArgSel { position: None, keyword: Some(k) },
                ArgDoc::Both { position, keyword } => ArgSel { position, keyword },
            };
            if sel.position.is_none() && sel.keyword.is_none() {
                return Err(bad("critical argument needs a position or a keyword"));
            }
            if args.contains(&sel) {
                return Err(bad("duplicate critical argument"));
            }
            args.push(sel);
        }
        if set.specs.iter().any(|x| x.callee_pattern == s.callee) {
            return Err(bad("duplicate callee"));
        }
        set.push(SinkSpec { callee_pattern: s.callee, critical_args: args, category: s.category, require: s.require });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let s = default_sinks();
        assert_eq!(s.len(), 7);
        let g = s.lookup("getattr").unwrap();
        assert_eq!(g.critical_args.len(), 2);
        assert_eq!(g.category, RiskCategory::HelperGadget);
        assert_eq!(g.require, Require::All);
        assert_eq!(s.lookup("eval").unwrap().require, Require::Any);
        assert_eq!(s.lookup("subprocess.run").unwrap().critical_args[0].to_string(), "0|args");
        assert!(s.lookup("os.path.join").is_none());
        assert!(s.lookup("evaluate").is_none());
    }

    #[test]
    fn user_extension() {
        let mut s = default_sinks();
        let extra = "schema_version = 1\n[[sink]]\ncallee = 'cProfile.run'\ncritical_args = [0]\ncategory = 'code_execution'\n\
                     [[sink]]\ncallee = 'pickle.*'\ncritical_args = ['data']\ncategory = 'code_execution'\n";
        s.extend(load_sinks(extra).unwrap());
        assert_eq!(s.len(), 9);
        assert!(s.lookup("cProfile.run").is_some());
        assert_eq!(s.lookup("pickle.loads").unwrap().critical_args[0].keyword.as_deref(), Some("data"));
    }

    #[test]
    fn rejects_bad_specs() {
        let empty = "schema_version = 1\n[[sink]]\ncallee = 'eval'\ncritical_args = []\ncategory = 'code_execution'\n";
        assert!(matches!(load_sinks(empty), Err(SinkError::Invalid { .. })));
        assert_eq!(load_sinks("[[sink]]\ncallee='a'\ncritical_args=[0]\ncategory='code_execution'\n").unwrap_err(), SinkError::MissingVersion);
        assert!(matches!(load_sinks("schema_version = 1\n[[sink]]\ncallee = 'a'\n"), Err(SinkError::Parse(_))));
    }
}
