//! Scan reports: structured schema v1, a human table, and exit codes.

use crate::anomaly::AnomalyKind;
use crate::container::{ContainerNode, FormatTag, PickleLayout};
use crate::risk::{Finding, Verdict};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::str::FromStr;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "pickleguard";
pub const EXIT_CONFIG_ERROR: i32 = 64;

pub fn exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Clean => 0,
        Verdict::Suspicious => 1,
        Verdict::Malicious => 2,
        Verdict::UnscannableSuspicious => 3,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReportAnomaly {
    pub member_path: String,
    pub offset: u64,
    pub kind: AnomalyKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PickleSummary {
    pub layout: PickleLayout,
    pub segments: usize,
    pub imports: Vec<String>,
    pub calls: usize,
    pub torch_legacy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub format: FormatTag,
    pub member_name: String,
    pub byte_len: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pickle: Option<PickleSummary>,
    pub anomalies: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeSummary>,
}

impl TreeSummary {
    pub fn of(n: &ContainerNode) -> TreeSummary {
        TreeSummary {
            format: n.format,
            member_name: n.member_name.clone(),
            byte_len: n.byte_len,
            skipped: n.skipped.clone(),
            pickle: n.pickle.as_ref().map(|p| PickleSummary {
                layout: p.layout,
                segments: p.emulation.segments,
                imports: p.emulation.imports.iter().map(|s| s.import.fqname()).collect(),
                calls: p.emulation.calls.len(),
                torch_legacy: p.legacy.is_torch_legacy,
            }),
            anomalies: n.anomalies.len() + n.pickle.as_ref().map_or(0, |p| p.anomalies().count()),
            children: n.children.iter().map(TreeSummary::of).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathEntry {
    pub member_path: String,
    pub chain: String,
    pub table_row: Option<u8>,
    pub row_name: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanStats {
    pub input_bytes: u64,
    pub nodes: u64,
    pub decoded_bytes: u64,
    pub tree_depth: usize,
    /// Wall time; zero once masked.
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
    pub policy: String,
    pub gadget_db: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: u32,
    pub input_path: String,
    pub verdict: Verdict,
    pub exit_code: i32,
    pub findings: Vec<Finding>,
    pub anomalies: Vec<ReportAnomaly>,
    pub container_tree: TreeSummary,
    pub loading_paths: Vec<PathEntry>,
    pub stats: ScanStats,
    pub tool: ToolInfo,
}

impl ScanReport {
    /// Put findings and anomalies in their canonical order.
    pub fn normalize(&mut self) {
        self.findings.sort_by(|a, b| {
            b.severity
                .cmp(&a.severity)
                .then_with(|| a.member_path.cmp(&b.member_path))
                .then_with(|| a.offset.cmp(&b.offset))
                .then_with(|| a.subject.cmp(&b.subject))
                .then_with(|| a.category.cmp(&b.category))
        });
        self.anomalies.sort();
    }

    /// Zero the fields that vary between identical runs.
    pub fn mask_timing(&mut self) {
        self.stats.elapsed_ms = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Human,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "human" => Ok(Format::Human),
            "json" | "structured" => Ok(Format::Json),
            _ => Err(format!("unknown format {s:?} (human, json)")),
        }
    }
}

pub fn render(r: &ScanReport, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(r).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Human => render_human(r),
    }
}

pub fn parse_structured(text: &str) -> Result<ScanReport, serde_json::Error> {
    serde_json::from_str(text)
}

fn or_root(s: &str) -> &str {
    if s.is_empty() {
        "<root>"
    } else {
        s
    }
}

fn render_human(r: &ScanReport) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "== {} == {}", r.verdict, r.input_path);
    if r.findings.is_empty() {
        let _ = writeln!(o, "findings: none");
    } else {
        let _ = writeln!(o, "findings ({}):", r.findings.len());
        let _ = writeln!(o, "  {:<9} {:<18} {:<44} {:<24} {:>8}  path", "severity", "category", "subject", "member", "offset");
        for f in &r.findings {
            let row = match f.loading_path.row {
                Some(n) => format!("{} (row {n})", f.loading_path.chain_string()),
                None => format!("{} (unlisted)", f.loading_path.chain_string()),
            };
            let _ = writeln!(
                o,
                "  {:<9} {:<18} {:<44} {:<24} {:>8}  {}",
                f.severity.as_str(),
                f.category.as_str(),
                f.subject,
                or_root(&f.member_path),
                f.offset,
                row
            );
            for e in &f.evidence {
                let _ = writeln!(o, "      {e}");
            }
        }
    }
    if !r.anomalies.is_empty() {
        let _ = writeln!(o, "anomalies ({}):", r.anomalies.len());
        for a in &r.anomalies {
            let _ = writeln!(o, "  {:<24} {:<26} @{:<8} {}", or_root(&a.member_path), a.kind.as_str(), a.offset, a.detail);
        }
    }
    let paths: Vec<String> = r.loading_paths.iter().map(|p| format!("{} [{}]", p.chain, p.row_name)).collect();
    if !paths.is_empty() {
        let _ = writeln!(o, "loading paths: {}", paths.join(", "));
    }
    let _ = writeln!(
        o,
        "nodes {}, decoded {} bytes, policy {}, db {}",
        r.stats.nodes, r.stats.decoded_bytes, r.tool.policy, r.tool.gadget_db
    );
    o
}
