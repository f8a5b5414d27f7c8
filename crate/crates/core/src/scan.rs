//! One input in, one report out.

use crate::anomaly::{Anomaly, AnomalyKind};
use crate::container::{label_path, member_path, WalkConfig, Walker};
use crate::report::{
    exit_code, PathEntry, ReportAnomaly, ScanReport, ScanStats, ToolInfo, TreeSummary, SCHEMA_VERSION, TOOL_NAME,
};
use crate::risk::{aggregate, Classifier, FindingContext};
use std::path::Path;
use std::time::Instant;

pub struct Scanner {
    pub classifier: Classifier,
    pub walk: WalkConfig,
}

impl Scanner {
    pub fn new(classifier: Classifier, walk: WalkConfig) -> Scanner {
        Scanner { classifier, walk }
    }

    fn tool(&self) -> ToolInfo {
        ToolInfo {
            name: TOOL_NAME.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            policy: self.classifier.policy.to_string(),
            gadget_db: self.classifier.db.version_tag(),
        }
    }

    pub fn scan_bytes(&self, input_path: &str, bytes: &[u8]) -> ScanReport {
        let t0 = Instant::now();
        let walker = Walker::new(self.walk);
        let tree = walker.walk_root(bytes);
        let mut findings = Vec::new();
        let mut anomalies = Vec::new();
        let mut loading_paths = Vec::new();
        tree.visit(&mut |ancestry| {
            let node = ancestry[ancestry.len() - 1];
            let mp = member_path(ancestry);
            for a in &node.anomalies {
                anomalies.push(ReportAnomaly { member_path: mp.clone(), offset: a.offset, kind: a.kind, detail: a.detail.clone() });
            }
            if let Some(p) = &node.pickle {
                for a in p.anomalies() {
                    anomalies.push(ReportAnomaly {
                        member_path: mp.clone(),
                        offset: a.offset,
                        kind: a.kind,
                        detail: a.detail.clone(),
                    });
                }
                let label = label_path(ancestry);
                loading_paths.push(PathEntry {
                    member_path: mp.clone(),
                    chain: label.chain_string(),
                    table_row: label.row,
                    row_name: label.row_name().to_string(),
                });
                let ctx = FindingContext { loading_path: label, member_path: mp };
                findings.extend(self.classifier.classify(&p.emulation, &ctx));
            }
        });
        let verdict = aggregate(&findings, anomalies.len());
        let stats = walker.stats();
        let mut r = ScanReport {
            schema_version: SCHEMA_VERSION,
            input_path: input_path.to_string(),
            verdict,
            exit_code: exit_code(verdict),
            findings,
            anomalies,
            container_tree: TreeSummary::of(&tree),
            loading_paths,
            stats: ScanStats {
                input_bytes: bytes.len() as u64,
                nodes: stats.nodes,
                decoded_bytes: stats.decoded_bytes,
                tree_depth: tree.depth(),
                elapsed_ms: t0.elapsed().as_millis() as u64,
            },
            tool: self.tool(),
        };
        r.normalize();
        r
    }

    /// A report for an input that could not be scanned at all.
    pub fn unscannable(&self, input_path: &str, kind: AnomalyKind, detail: &str) -> ScanReport {
        let a = Anomaly::new(kind, 0, detail);
        let mut r = self.scan_bytes(input_path, &[]);
        r.anomalies = vec![ReportAnomaly { member_path: String::new(), offset: a.offset, kind: a.kind, detail: a.detail }];
        r.container_tree.anomalies = 1;
        r.verdict = aggregate(&r.findings, 1);
        r.exit_code = exit_code(r.verdict);
        r
    }

    pub fn scan_file(&self, path: &Path) -> ScanReport {
        let shown = path.display().to_string();
        match std::fs::read(path) {
            Ok(b) => self.scan_bytes(&shown, &b),
            Err(e) => self.unscannable(&shown, AnomalyKind::IoError, &e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{parse_structured, render, Format};
    use crate::risk::{Policy, RiskCategory, Verdict};

    fn scanner() -> Scanner {
        Scanner::new(Classifier::builtin(Policy::Hybrid), WalkConfig::default())
    }

    #[test]
    fn headerless_stack_global_offset() {
        let r = scanner().scan_bytes("x.pkl", b"S'os'\nS'system'\n\x93S'ls'\n\x85R.");
        assert_eq!(r.verdict, Verdict::Malicious);
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.findings[0].category, RiskCategory::CodeExecution);
        assert_eq!(r.findings[0].offset, 16);
        assert_eq!(r.loading_paths[0].row_name, "pkl");
    }

    #[test]
    fn clean_report() {
        let r = scanner().scan_bytes("n.pkl", b"\x80\x02N.");
        assert_eq!((r.verdict, r.exit_code), (Verdict::Clean, 0));
        assert!(render(&r, Format::Human).contains("CLEAN"));
        let json = render(&r, Format::Json);
        assert!(json.contains("\"findings\": []"));
        assert_eq!(parse_structured(&json).unwrap(), r);
    }

    #[test]
    fn empty_input_is_unscannable() {
        let r = scanner().scan_bytes("e", b"");
        assert_eq!(r.verdict, Verdict::UnscannableSuspicious);
        assert_eq!(r.anomalies[0].kind, AnomalyKind::EmptyInput);
    }

    #[test]
    fn unreadable_file() {
        let r = scanner().scan_file(Path::new("/nonexistent/definitely/missing.pkl"));
        assert_eq!(r.exit_code, 3);
        assert_eq!(r.anomalies.len(), 1);
        assert_eq!(r.anomalies[0].kind, AnomalyKind::IoError);
    }
}
