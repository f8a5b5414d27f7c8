use super::lists::{check_pattern, is_blank_doc, PatternSet};
use super::RiskCategory;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

pub const SEED_GADGETS: &str = include_str!("../../data/seed_gadgets.toml");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DbError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("missing schema_version header")]
    MissingVersion,
    #[error("unsupported schema_version {0}")]
    UnsupportedVersion(u32),
    #[error("duplicate fqname: {}", .0.join(", "))]
    Duplicate(Vec<String>),
    #[error("entry {fqname:?}: {reason}")]
    Invalid { fqname: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GadgetKind {
    Attack,
    Helper,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GadgetEntry {
    pub fqname: String,
    pub kind: GadgetKind,
    /// Primitive reached by an attack gadget; `helper_gadget` for helpers.
    pub category: RiskCategory,
    pub source_library: String,
    #[serde(default)]
    pub needs_attr_access: bool,
    #[serde(default)]
    pub notes: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DbDoc {
    schema_version: Option<u32>,
    #[serde(default)]
    entry: Vec<GadgetEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct GadgetDatabase {
    pub entries: Vec<GadgetEntry>,
    index: PatternSet<usize>,
}

impl GadgetDatabase {
    pub fn lookup(&self, fqname: &str) -> Option<&GadgetEntry> {
        self.index.lookup(fqname).map(|i| &self.entries[*i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seed() -> GadgetDatabase {
        load_gadget_db(SEED_GADGETS).expect("seed gadget database is valid")
    }

    /// Entry count per category, every category listed.
    pub fn histogram(&self) -> BTreeMap<RiskCategory, usize> {
        let mut h: BTreeMap<RiskCategory, usize> = RiskCategory::ALL.into_iter().map(|c| (c, 0)).collect();
        for e in &self.entries {
            *h.entry(e.category).or_default() += 1;
        }
        h
    }

    /// Stable content digest, reported alongside scan results.
    pub fn version_tag(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        let mut names: Vec<&GadgetEntry> = self.entries.iter().collect();
        names.sort_by(|a, b| a.fqname.cmp(&b.fqname));
        for e in names {
            h.update(e.fqname.as_bytes());
            h.update([0]);
            h.update(format!("{:?}/{}", e.kind, e.category).as_bytes());
            h.update([0]);
        }
        format!("{}:{}", self.entries.len(), &hex::encode(h.finalize())[..12])
    }
}

/// Parse a gadget database document. A blank document is an empty database.
pub fn load_gadget_db(text: &str) -> Result<GadgetDatabase, DbError> {
    if is_blank_doc(text) {
        return Ok(GadgetDatabase::default());
    }
    let doc: DbDoc = toml::from_str(text).map_err(|e| DbError::Parse(e.to_string()))?;
    match doc.schema_version {
        Some(1) => {}
        Some(v) => return Err(DbError::UnsupportedVersion(v)),
        None => return Err(DbError::MissingVersion),
    }
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for e in &doc.entry {
        if !seen.insert(e.fqname.as_str()) && !dups.contains(&e.fqname) {
            dups.push(e.fqname.clone());
        }
    }
    if !dups.is_empty() {
        return Err(DbError::Duplicate(dups));
    }
    let mut db = GadgetDatabase::default();
    for e in doc.entry {
        check_pattern(&e.fqname).map_err(|reason| DbError::Invalid { fqname: e.fqname.clone(), reason })?;
        let ok = match e.kind {
            GadgetKind::Helper => e.category == RiskCategory::HelperGadget,
            GadgetKind::Attack => e.category.is_primitive(),
        };
        if !ok {
            return Err(DbError::Invalid {
                fqname: e.fqname,
                reason: format!("category {} does not fit a {:?} gadget", e.category, e.kind),
            });
        }
        db.index.insert(&e.fqname, db.entries.len());
        db.entries.push(e);
    }
    Ok(db)
}
