use super::db::DbError;
use super::RiskCategory;
use serde::Deserialize;
use std::collections::{HashMap, HashSet};

pub const DEFAULT_DENYLIST: &str = include_str!("../../data/denylist.toml");
pub const DEFAULT_ALLOWLIST: &str = include_str!("../../data/allowlist.toml");

/// Exact names plus `prefix.*` wildcards. The most specific match wins.
#[derive(Debug, Clone)]
pub struct PatternSet<T> {
    exact: HashMap<String, T>,
    prefix: HashMap<String, T>,
}

impl<T> Default for PatternSet<T> {
    fn default() -> Self {
        PatternSet { exact: HashMap::new(), prefix: HashMap::new() }
    }
}

impl<T> PatternSet<T> {
    /// Returns the previous value for the same pattern.
    pub fn insert(&mut self, pattern: &str, v: T) -> Option<T> {
        match pattern.strip_suffix(".*") {
            Some(p) => self.prefix.insert(p.to_string(), v),
            None => self.exact.insert(pattern.to_string(), v),
        }
    }

    pub fn lookup(&self, fqname: &str) -> Option<&T> {
        if let Some(v) = self.exact.get(fqname) {
            return Some(v);
        }
        let mut end = fqname.len();
        while let Some(i) = fqname[..end].rfind('.') {
            if let Some(v) = self.prefix.get(&fqname[..i]) {
                return Some(v);
            }
            end = i;
        }
        None
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.prefix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListKind {
    Deny,
    Allow,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListEntry {
    pub fqname: String,
    #[serde(default)]
    pub category: Option<RiskCategory>,
    #[serde(default)]
    pub source_library: Option<String>,
    #[serde(default)]
    pub notes: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ListDoc {
    schema_version: Option<u32>,
    #[serde(default)]
    entry: Vec<ListEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct RuleList {
    pub entries: Vec<ListEntry>,
    index: PatternSet<usize>,
}

impl RuleList {
    pub fn lookup(&self, fqname: &str) -> Option<&ListEntry> {
        self.index.lookup(fqname).map(|i| &self.entries[*i])
    }

    /// Add `other`'s entries; an entry for an existing pattern replaces it.
    pub fn merge(&mut self, other: RuleList) {
        for e in other.entries {
            let fq = e.fqname.clone();
            match self.index.lookup(&fq).copied().filter(|i| self.entries[*i].fqname == fq) {
                Some(i) => self.entries[i] = e,
                None => {
                    self.entries.push(e);
                    self.index.insert(&fq, self.entries.len() - 1);
                }
            }
        }
    }

    /// Category of a denylist match. Override files may leave it out.
    pub fn category_of(e: &ListEntry) -> RiskCategory {
        e.category.unwrap_or(RiskCategory::Auxiliary)
    }
}

pub(crate) fn check_pattern(fq: &str) -> Result<(), String> {
    let body = fq.strip_suffix(".*").unwrap_or(fq);
    if body.is_empty() || body.split('.').any(|p| p.is_empty() || p.contains(['*', ' ', '\t'])) {
        return Err(format!("malformed fqname {fq:?}"));
    }
    if !fq.ends_with(".*") && !body.contains('.') {
        return Err(format!("fqname {fq:?} needs a module and a name"));
    }
    Ok(())
}

/// Whether a document has nothing but comments and blank lines.
pub(crate) fn is_blank_doc(text: &str) -> bool {
    text.lines().all(|l| {
        let t = l.trim();
        t.is_empty() || t.starts_with('#')
    })
}

/// Parse an allowlist or denylist document.
pub fn load_list(text: &str, kind: ListKind) -> Result<RuleList, DbError> {
    if is_blank_doc(text) {
        return Ok(RuleList::default());
    }
    let doc: ListDoc = toml::from_str(text).map_err(|e| DbError::Parse(e.to_string()))?;
    match doc.schema_version {
        Some(1) => {}
        Some(v) => return Err(DbError::UnsupportedVersion(v)),
        None => return Err(DbError::MissingVersion),
    }
    let mut list = RuleList::default();
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for e in doc.entry {
        check_pattern(&e.fqname).map_err(|reason| DbError::Invalid { fqname: e.fqname.clone(), reason })?;
        if kind == ListKind::Allow && e.category.is_some() {
            return Err(DbError::Invalid { fqname: e.fqname, reason: "allowlist entries take no category".into() });
        }
        if let Some(c) = e.category {
            if !c.is_primitive() {
                return Err(DbError::Invalid { fqname: e.fqname, reason: format!("category {c} is not a denylist class") });
            }
        }
        if !seen.insert(e.fqname.clone()) {
            dups.push(e.fqname.clone());
            continue;
        }
        list.index.insert(&e.fqname, list.entries.len());
        list.entries.push(e);
    }
    if !dups.is_empty() {
        return Err(DbError::Duplicate(dups));
    }
    Ok(list)
}
