//! Benignity lint: decode a generated fixture the same way a scan does and
//! check that it imports nothing beyond its canary.

use super::assemble::BENIGN_CANARIES;
use super::corpus::{Family, Fixture};
use crate::container::{WalkConfig, Walker};
use crate::pickle::ArgSummary;
use std::collections::BTreeSet;

/// Globals a gadget fixture may push as plain values.
const INERT_GLOBALS: &[&str] = &["builtins.str"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LintError {
    #[error("{file}: imports {names:?} outside the benign set")]
    ForeignImport { file: String, names: Vec<String> },
    #[error("{file}: no call carries the sentinel {sentinel:?}")]
    MissingSentinel { file: String, sentinel: String },
}

pub fn allowed_imports(f: &Fixture) -> BTreeSet<String> {
    let mut s: BTreeSet<String> = BENIGN_CANARIES.iter().map(|(m, n)| format!("{m}.{n}")).collect();
    if let Family::Gadget(g) = &f.family {
        s.insert(g.clone());
        s.extend(INERT_GLOBALS.iter().map(|g| g.to_string()));
    }
    s
}

fn mentions(a: &ArgSummary, needle: &str) -> bool {
    match a {
        ArgSummary::Str(s) => s.contains(needle),
        ArgSummary::Container(items) => items.iter().any(|i| mentions(i, needle)),
        _ => false,
    }
}

pub fn benignity_lint(f: &Fixture) -> Result<(), LintError> {
    let allowed = allowed_imports(f);
    let tree = Walker::new(WalkConfig::default()).walk_root(&f.bytes);
    let mut foreign = BTreeSet::new();
    let mut sentinel_seen = false;
    tree.visit(&mut |ancestry| {
        let Some(p) = &ancestry[ancestry.len() - 1].pickle else { return };
        for i in &p.emulation.imports {
            let fq = i.import.fqname();
            if !allowed.contains(&fq) {
                foreign.insert(fq);
            }
        }
        sentinel_seen |= p.emulation.calls.iter().any(|c| c.args.iter().any(|a| mentions(a, &f.sentinel)));
    });
    if !foreign.is_empty() {
        return Err(LintError::ForeignImport { file: f.file_name.clone(), names: foreign.into_iter().collect() });
    }
    if !sentinel_seen {
        return Err(LintError::MissingSentinel { file: f.file_name.clone(), sentinel: f.sentinel.clone() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::corpus::{full_corpus, row_fixture};

    #[test]
    fn corpus_is_benign() {
        for f in full_corpus().unwrap() {
            benignity_lint(&f).unwrap();
        }
    }

    #[test]
    fn foreign_import_is_caught() {
        let mut f = row_fixture(1).unwrap();
        f.bytes = b"\x80\x02cbuiltins\nlen\nX\x10\x00\x00\x00pg-canary:row-01\x85R.".to_vec();
        assert!(matches!(benignity_lint(&f), Err(LintError::ForeignImport { .. })));
        f.bytes = b"\x80\x02cbuiltins\nprint\nX\x01\x00\x00\x00x\x85R.".to_vec();
        assert!(matches!(benignity_lint(&f), Err(LintError::MissingSentinel { .. })));
    }
}
