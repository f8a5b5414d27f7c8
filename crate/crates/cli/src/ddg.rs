//! The `ddg` subcommand.

use crate::args::{DdgArgs, OutFormat};
use crate::config::{read, ConfigError};
use pickleguard_ddg::corpus::Evaluation;
use pickleguard_ddg::{default_sinks, evaluate, load_dump, load_labels, load_sinks, run_dumps, CorpusReport, Dump, Mutators};
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use std::path::PathBuf;
use walkdir::WalkDir;

pub const DDG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpInput {
    pub path: String,
    pub units: usize,
    pub skipped_units: usize,
    /// Set when the whole file was unusable.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdgRun {
    pub schema_version: u32,
    pub inputs: Vec<DumpInput>,
    pub skipped_files: usize,
    pub report: CorpusReport,
    pub evaluation: Option<Evaluation>,
}

fn dump_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, ConfigError> {
    let mut out = Vec::new();
    for p in paths {
        let meta = std::fs::metadata(p).map_err(|e| ConfigError(format!("input {}: {e}", p.display())))?;
        if meta.is_dir() {
            for e in WalkDir::new(p).sort_by_file_name().into_iter().filter_map(Result::ok) {
                if e.file_type().is_file() && e.file_name().to_string_lossy().ends_with(".ast.json") {
                    out.push(e.into_path());
                }
            }
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn run(a: &DdgArgs) -> Result<(String, i32), ConfigError> {
    let mut sinks = default_sinks();
    if let Some(p) = &a.sinks {
        sinks.extend(load_sinks(&read(p, "sinks")?).map_err(|e| ConfigError(format!("sinks {}: {e}", p.display())))?);
    }
    let labels = match &a.labels {
        Some(p) => Some(load_labels(&read(p, "labels")?).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut inputs = Vec::new();
    let mut dumps: Vec<Dump> = Vec::new();
    for f in dump_files(&a.dumps)? {
        let shown = f.display().to_string();
        let d = match std::fs::read_to_string(&f) {
            Ok(t) => load_dump(&t),
            Err(e) => {
                inputs.push(DumpInput { path: shown, units: 0, skipped_units: 0, error: Some(e.to_string()) });
                continue;
            }
        };
        let doc_error = d.violations.iter().find(|v| v.unit.is_none()).map(|v| v.message.clone());
        for v in &d.violations {
            eprintln!("{shown}: {v}");
        }
        inputs.push(DumpInput { path: shown, units: d.units.len(), skipped_units: d.skipped.len(), error: doc_error });
        dumps.push(d);
    }
    let report = run_dumps(&dumps, &sinks, &Mutators::default());
    let evaluation = labels.map(|l| evaluate(&report, &l));
    let skipped_files = inputs.iter().filter(|i| i.error.is_some()).count();
    let run = DdgRun { schema_version: DDG_SCHEMA_VERSION, inputs, skipped_files, report, evaluation };
    Ok((render(&run, a.out.format), 0))
}

pub fn render(run: &DdgRun, format: OutFormat) -> String {
    if format == OutFormat::Json {
        return serde_json::to_string_pretty(run).expect("run serializes") + "\n";
    }
    let mut o = String::new();
    let r = &run.report;
    let _ = writeln!(o, "{:<20} {:>8} {:>8} {:>10} {:>10}", "library", "scanned", "skipped", "with-sink", "candidate");
    for (lib, s) in &r.libraries {
        let _ = writeln!(o, "{lib:<20} {:>8} {:>8} {:>10} {:>10}", s.scanned, s.skipped, s.with_sink_calls, s.candidates);
    }
    let t = &r.total;
    let _ = writeln!(o, "{:<20} {:>8} {:>8} {:>10} {:>10}", "total", t.scanned, t.skipped, t.with_sink_calls, t.candidates);
    let _ = writeln!(o, "reduction: {:.1}%", r.reduction_rate * 100.0);
    if run.skipped_files > 0 {
        let _ = writeln!(o, "skipped files: {}", run.skipped_files);
    }
    for c in &r.candidates {
        let _ = writeln!(o, "\n{} [{}] {} ({}) at line {}", c.fqname, c.source_library, c.callee, c.category, c.call_span.line());
        for w in &c.witnesses {
            let _ = writeln!(o, "  arg {}: {}", w.arg, w.path.join(" -> "));
        }
    }
    if let Some(e) = &run.evaluation {
        let _ = writeln!(
            o,
            "\ntp {} fp {} fn {} tn {}  precision {:.1}%  recall {:.1}%",
            e.tp,
            e.fp,
            e.fn_,
            e.tn,
            e.precision * 100.0,
            e.recall * 100.0
        );
        for m in &e.misses {
            let _ = writeln!(o, "  missed: {m}");
        }
        for u in &e.unexpected {
            let _ = writeln!(o, "  unexpected: {u}");
        }
    }
    o
}
