//! Library-level runs, reduction statistics and evaluation against labels.

use crate::ast::Dump;
use crate::graph::Mutators;
use crate::search::{find_candidates, sink_calls, GadgetCandidate};
use crate::sinks::SinkSet;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryStats {
    pub scanned: usize,
    pub skipped: usize,
    /// Units with at least one sink call (the manual-review baseline).
    pub with_sink_calls: usize,
    /// Units with at least one candidate.
    pub candidates: usize,
}

impl LibraryStats {
    fn add(&mut self, o: &LibraryStats) {
        self.scanned += o.scanned;
        self.skipped += o.skipped;
        self.with_sink_calls += o.with_sink_calls;
        self.candidates += o.candidates;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub libraries: BTreeMap<String, LibraryStats>,
    pub total: LibraryStats,
    /// `1 - candidates / with_sink_calls`, 0 when there is no baseline.
    pub reduction_rate: f64,
    pub candidates: Vec<GadgetCandidate>,
}

impl CorpusReport {
    pub fn flagged_units(&self) -> BTreeSet<&str> {
        self.candidates.iter().map(|c| c.fqname.as_str()).collect()
    }
}

pub fn reduction_rate(baseline: usize, kept: usize) -> f64 {
    if baseline == 0 {
        0.0
    } else {
        1.0 - kept as f64 / baseline as f64
    }
}

pub fn run_dumps(dumps: &[Dump], sinks: &SinkSet, mutators: &Mutators) -> CorpusReport {
    let mut libraries: BTreeMap<String, LibraryStats> = BTreeMap::new();
    let mut candidates = Vec::new();
    for d in dumps {
        for s in &d.skipped {
            libraries.entry(s.source_library.clone()).or_default().skipped += 1;
        }
        for u in &d.units {
            let st = libraries.entry(u.source_library.clone()).or_default();
            st.scanned += 1;
            if sink_calls(u, sinks).is_empty() {
                continue;
            }
            st.with_sink_calls += 1;
            let c = find_candidates(u, sinks, mutators);
            if !c.is_empty() {
                st.candidates += 1;
            }
            candidates.extend(c);
        }
    }
    candidates.sort();
    let mut total = LibraryStats::default();
    for s in libraries.values() {
        total.add(s);
    }
    let reduction_rate = reduction_rate(total.with_sink_calls, total.candidates);
    CorpusReport { libraries, total, reduction_rate, candidates }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub fqname: String,
    pub exploitable: bool,
    /// A known blind spot: exploitable, but not expected to be found.
    #[serde(default)]
    pub expected_miss: bool,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    pub schema_version: u32,
    pub units: Vec<Label>,
}

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("labels: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("labels: unsupported schema_version {0}")]
    Version(u32),
    #[error("labels: duplicate unit {0}")]
    Duplicate(String),
}

pub fn load_labels(text: &str) -> Result<Labels, LabelError> {
    let l: Labels = serde_json::from_str(text)?;
    if l.schema_version != 1 {
        return Err(LabelError::Version(l.schema_version));
    }
    let mut seen = BTreeSet::new();
    for u in &l.units {
        if !seen.insert(&u.fqname) {
            return Err(LabelError::Duplicate(u.fqname.clone()));
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    /// Exploitable units with no candidate.
    pub misses: Vec<String>,
    /// False positives and misses not labelled as expected.
    pub unexpected: Vec<String>,
    /// Flagged units that have no label.
    pub unlabelled: Vec<String>,
}

pub fn evaluate(report: &CorpusReport, labels: &Labels) -> Evaluation {
    let flagged = report.flagged_units();
    let mut e = Evaluation::default();
    let known: BTreeSet<&str> = labels.units.iter().map(|l| l.fqname.as_str()).collect();
    for l in &labels.units {
        let hit = flagged.contains(l.fqname.as_str());
        match (l.exploitable, hit) {
            (true, true) => e.tp += 1,
            (false, true) => {
                e.fp += 1;
                e.unexpected.push(l.fqname.clone());
            }
            (true, false) => {
                e.fn_ += 1;
                e.misses.push(l.fqname.clone());
                if !l.expected_miss {
                    e.unexpected.push(l.fqname.clone());
                }
            }
            (false, false) => e.tn += 1,
        }
    }
    e.unlabelled = flagged.into_iter().filter(|f| !known.contains(f)).map(str::to_string).collect();
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    e.precision = ratio(e.tp, e.tp + e.fp);
    e.recall = ratio(e.tp, e.tp + e.fn_);
    e
}
