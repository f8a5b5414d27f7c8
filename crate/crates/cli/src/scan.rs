//! The `scan` subcommand: input discovery, the worker pool and the summary.

use crate::args::{OutFormat, ScanArgs};
use crate::config::{classifier, walk_config, ConfigError};
use pickleguard_core::report::{render, Format, ScanReport, ToolInfo};
use pickleguard_core::risk::Verdict;
use pickleguard_core::scan::Scanner;
use pickleguard_core::AnomalyKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use walkdir::WalkDir;

pub const SCAN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub files: usize,
    pub verdicts: BTreeMap<Verdict, usize>,
    pub exit_code: i32,
}

/// Everything one `scan` run prints in structured form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRun {
    pub schema_version: u32,
    pub tool: Option<ToolInfo>,
    pub reports: Vec<ScanReport>,
    pub summary: Summary,
}

/// Files to scan, in argument order; directory contents sorted by name.
pub fn collect_inputs(paths: &[PathBuf], recurse: bool, follow: bool) -> Result<Vec<PathBuf>, ConfigError> {
    let mut out = Vec::new();
    for p in paths {
        let meta = std::fs::metadata(p).map_err(|e| ConfigError(format!("input {}: {e}", p.display())))?;
        if !meta.is_dir() {
            out.push(p.clone());
            continue;
        }
        let walk = WalkDir::new(p).follow_links(follow).sort_by_file_name().max_depth(if recurse { usize::MAX } else { 1 });
        for e in walk {
            match e {
                Ok(e) if e.file_type().is_file() => out.push(e.into_path()),
                Ok(_) => {}
                // unreadable entries are still reported, as unscannable
                Err(e) => {
                    if let Some(path) = e.path() {
                        out.push(path.to_path_buf());
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Run `f`, turning a panic into an unscannable report.
pub fn isolated(scanner: &Scanner, path: &Path, f: impl FnOnce() -> ScanReport) -> ScanReport {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            scanner.unscannable(&path.display().to_string(), AnomalyKind::WorkerPanic, &msg)
        }
    }
}

pub fn summarize(reports: &[ScanReport]) -> Summary {
    let mut verdicts: BTreeMap<Verdict, usize> = BTreeMap::new();
    for r in reports {
        *verdicts.entry(r.verdict).or_default() += 1;
    }
    Summary { files: reports.len(), verdicts, exit_code: reports.iter().map(|r| r.exit_code).max().unwrap_or(0) }
}

pub fn scan_paths(scanner: &Scanner, inputs: &[PathBuf], jobs: usize) -> Vec<ScanReport> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
    pool.install(|| inputs.par_iter().map(|p| isolated(scanner, p, || scanner.scan_file(p))).collect())
}

pub fn render_run(run: &ScanRun, format: OutFormat) -> String {
    match format {
        OutFormat::Json => serde_json::to_string_pretty(run).expect("run serializes") + "\n",
        OutFormat::Human => {
            let mut s = String::new();
            for r in &run.reports {
                s.push_str(&render(r, Format::Human));
                s.push('\n');
            }
            let counts: Vec<String> = run.summary.verdicts.iter().map(|(v, n)| format!("{n} {v}")).collect();
            s.push_str(&format!(
                "summary: {} file(s){}{}, exit {}\n",
                run.summary.files,
                if counts.is_empty() { "" } else { ": " },
                counts.join(", "),
                run.summary.exit_code
            ));
            s
        }
    }
}

pub fn run(a: &ScanArgs) -> Result<(String, i32), ConfigError> {
    let scanner = Scanner::new(classifier(a)?, walk_config(a)?);
    let inputs = collect_inputs(&a.paths, !a.no_recurse, a.follow_symlinks)?;
    let mut reports = scan_paths(&scanner, &inputs, a.jobs);
    if a.mask_timing {
        reports.iter_mut().for_each(ScanReport::mask_timing);
    }
    let summary = summarize(&reports);
    let code = summary.exit_code;
    let tool = reports.first().map(|r| r.tool.clone());
    let run = ScanRun { schema_version: SCAN_SCHEMA_VERSION, tool, reports, summary };
    Ok((render_run(&run, a.out.format), code))
}
