//! The `db` subcommand.

use crate::args::{DbAction, DbArgs};
use crate::config::{gadget_db, ConfigError};
use pickleguard_core::risk::GadgetDatabase;
use std::fmt::Write;

fn source(a: &DbArgs) -> String {
    a.path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<seed>".into())
}

fn histogram(db: &GadgetDatabase, o: &mut String) {
    let _ = writeln!(o, "categories:");
    for (c, n) in db.histogram() {
        let _ = writeln!(o, "  {:<18} {n}", c.as_str());
    }
}

pub fn run(action: &DbAction) -> Result<(String, i32), ConfigError> {
    let mut o = String::new();
    match action {
        DbAction::Verify(a) => {
            let db = gadget_db(a.path.as_deref())?;
            let _ = writeln!(o, "OK {}: {} entries, version {}", source(a), db.len(), db.version_tag());
            histogram(&db, &mut o);
        }
        DbAction::List(a) => {
            let db = gadget_db(a.path.as_deref())?;
            let mut entries: Vec<_> = db.entries.iter().collect();
            entries.sort_by(|x, y| x.fqname.cmp(&y.fqname));
            for e in entries {
                let attr = if e.needs_attr_access { "  attr" } else { "" };
                let _ = writeln!(o, "{:<48} {:<7} {:<18} {}{attr}", e.fqname, format!("{:?}", e.kind).to_lowercase(), e.category.as_str(), e.source_library);
            }
            let _ = writeln!(o, "{} entries", db.len());
            histogram(&db, &mut o);
        }
    }
    Ok((o, 0))
}
