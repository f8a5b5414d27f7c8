//! Loading and validating everything a scan needs before any input is read.

use crate::args::ScanArgs;
use pickleguard_core::container::WalkConfig;
use pickleguard_core::risk::{
    load_gadget_db, load_list, Classifier, GadgetDatabase, ListKind, Policy, RuleList, DEFAULT_ALLOWLIST, DEFAULT_DENYLIST,
};
use std::fmt;
use std::path::Path;

/// A configuration problem; exit code 64.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn read(path: &Path, what: &str) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{what} {}: {e}", path.display())))
}

pub fn gadget_db(path: Option<&Path>) -> Result<GadgetDatabase, ConfigError> {
    match path {
        None => Ok(GadgetDatabase::seed()),
        Some(p) => load_gadget_db(&read(p, "gadget db")?).map_err(|e| ConfigError(format!("gadget db {}: {e}", p.display()))),
    }
}

fn list(path: Option<&Path>, kind: ListKind, what: &str) -> Result<RuleList, ConfigError> {
    match path {
        None => Ok(RuleList::default()),
        Some(p) => load_list(&read(p, what)?, kind).map_err(|e| ConfigError(format!("{what} {}: {e}", p.display()))),
    }
}

pub fn classifier(a: &ScanArgs) -> Result<Classifier, ConfigError> {
    let policy: Policy = a.policy.parse().map_err(ConfigError)?;
    let mut deny = load_list(DEFAULT_DENYLIST, ListKind::Deny).expect("shipped denylist is valid");
    deny.merge(list(a.denylist.as_deref(), ListKind::Deny, "denylist")?);
    let user_allow = list(a.allowlist.as_deref(), ListKind::Allow, "allowlist")?;
    let default_allow = load_list(DEFAULT_ALLOWLIST, ListKind::Allow).expect("shipped allowlist is valid");
    Ok(Classifier::new(policy, deny, gadget_db(a.gadget_db.as_deref())?, default_allow, user_allow))
}

pub fn walk_config(a: &ScanArgs) -> Result<WalkConfig, ConfigError> {
    let mut c = WalkConfig::default();
    if let Some(d) = a.max_depth {
        c.max_depth = d;
    }
    if let Some(b) = a.node_budget {
        c.node_budget = b;
    }
    if let Some(b) = a.scan_budget {
        c.scan_budget = b;
    }
    if c.node_budget == 0 || c.scan_budget == 0 {
        return Err(ConfigError("budgets must be positive".into()));
    }
    if c.node_budget > c.scan_budget {
        return Err(ConfigError(format!("node budget {} exceeds scan budget {}", c.node_budget, c.scan_budget)));
    }
    Ok(c)
}
