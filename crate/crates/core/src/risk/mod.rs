//! Classification of resolved imports and calls.

mod classify;
mod db;
mod lists;

pub use classify::{aggregate, Classifier, Finding, FindingContext, Policy, Verdict};
pub use db::{load_gadget_db, DbError, GadgetDatabase, GadgetEntry, GadgetKind, SEED_GADGETS};
pub use lists::{load_list, ListEntry, ListKind, PatternSet, RuleList, DEFAULT_ALLOWLIST, DEFAULT_DENYLIST};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskCategory {
    CodeExecution,
    FileManipulation,
    NetworkAccess,
    Auxiliary,
    HelperGadget,
    AttackGadget,
    UnknownImport,
}

impl RiskCategory {
    pub const ALL: [RiskCategory; 7] = [
        RiskCategory::CodeExecution,
        RiskCategory::FileManipulation,
        RiskCategory::NetworkAccess,
        RiskCategory::Auxiliary,
        RiskCategory::HelperGadget,
        RiskCategory::AttackGadget,
        RiskCategory::UnknownImport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskCategory::CodeExecution => "code_execution",
            RiskCategory::FileManipulation => "file_manipulation",
            RiskCategory::NetworkAccess => "network_access",
            RiskCategory::Auxiliary => "auxiliary",
            RiskCategory::HelperGadget => "helper_gadget",
            RiskCategory::AttackGadget => "attack_gadget",
            RiskCategory::UnknownImport => "unknown_import",
        }
    }

    /// One of the four built-in primitive classes.
    pub fn is_primitive(self) -> bool {
        matches!(
            self,
            RiskCategory::CodeExecution
                | RiskCategory::FileManipulation
                | RiskCategory::NetworkAccess
                | RiskCategory::Auxiliary
        )
    }
}

impl fmt::Display for RiskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RiskCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        RiskCategory::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Medium,
    High,
    Critical,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Medium => "medium",
            Severity::High => "high",
            Severity::Critical => "critical",
        }
    }

    fn up(self) -> Severity {
        match self {
            Severity::Info => Severity::Medium,
            Severity::Medium => Severity::High,
            _ => Severity::Critical,
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Severity of a match in `category`, one level higher when it is called.
pub fn severity_for(category: RiskCategory, called: bool) -> Severity {
    let base = match category {
        RiskCategory::CodeExecution | RiskCategory::AttackGadget => Severity::High,
        RiskCategory::UnknownImport => Severity::Info,
        _ => Severity::Medium,
    };
    if called {
        base.up()
    } else {
        base
    }
}
