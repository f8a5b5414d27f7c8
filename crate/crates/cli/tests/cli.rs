use pickleguard_core::forge::CANARY_RULES;
use pickleguard_core::risk::SEED_GADGETS;
use serde_json::Value;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_pickleguard");
const ORDERED_DICT: &[u8] = b"\x80\x02ccollections\nOrderedDict\nq\x00)R.";

fn pg(args: &[&str]) -> (i32, String, String) {
    pg_env(args, &[])
}

fn pg_env(args: &[&str], env: &[(&str, &str)]) -> (i32, String, String) {
    let mut c = Command::new(BIN);
    c.args(args).env_remove("PICKLEGUARD_DB");
    for (k, v) in env {
        c.env(k, v);
    }
    let out = c.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &str) -> Value {
    serde_json::from_str(out).unwrap()
}

#[test]
fn empty_directory() {
    let d = tempfile::tempdir().unwrap();
    let (code, out, _) = pg(&["scan", "--format", "json", s(d.path())]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["reports"].as_array().unwrap().len(), 0);
    assert_eq!(v["summary"]["exit_code"], 0);
}

#[test]
fn strict_allowlist_flags_unlisted_ordered_dict() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("od.pkl");
    std::fs::write(&f, ORDERED_DICT).unwrap();
    let (code, out, _) = pg(&["scan", "--policy", "strict-allowlist", s(&f)]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("SUSPICIOUS"));
    assert_eq!(pg(&["scan", s(&f)]).0, 0);
    let allow = d.path().join("allow.toml");
    std::fs::write(&allow, "schema_version = 1\n[[entry]]\nfqname = 'collections.OrderedDict'\n").unwrap();
    assert_eq!(pg(&["scan", "--policy", "strict-allowlist", "--allowlist", s(&allow), s(&f)]).0, 0);
}

#[test]
fn config_errors_exit_64() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("n.pkl");
    std::fs::write(&f, b"N.").unwrap();
    let bad = d.path().join("bad.toml");
    std::fs::write(&bad, "not = [toml").unwrap();
    for args in [
        vec!["scan", "--policy", "lenient", s(&f)],
        vec!["scan", "--gadget-db", s(&bad), s(&f)],
        vec!["scan", "--allowlist", s(&bad), s(&f)],
        vec!["scan", "--gadget-db", "/nonexistent/db.toml", s(&f)],
        vec!["scan", "--node-budget", "0", s(&f)],
        vec!["scan", "--jobs", "many", s(&f)],
        vec!["scan", "/nonexistent/input"],
        vec!["scan"],
        vec!["frobnicate"],
    ] {
        let (code, _, err) = pg(&args);
        assert_eq!(code, 64, "{args:?}: {err}");
    }
    let (code, _, err) = pg_env(&["scan", s(&f)], &[("PICKLEGUARD_DB", s(&bad))]);
    assert_eq!(code, 64, "{err}");
}

fn db_with(extra: usize, dup: bool) -> String {
    let mut t = SEED_GADGETS.to_string();
    for i in 0..extra {
        t.push_str(&format!("\n[[entry]]\nfqname = 'extra{i}.mod.fn'\nkind = 'helper'\ncategory = 'helper_gadget'\nsource_library = 'x'\n"));
    }
    if dup {
        t.push_str("\n[[entry]]\nfqname = 'cgitb.lookup'\nkind = 'attack'\ncategory = 'auxiliary'\nsource_library = 'x'\n");
    }
    t
}

fn entries(out: &str) -> usize {
    out.lines().find_map(|l| l.strip_suffix(" entries")).unwrap().parse().unwrap()
}

#[test]
fn db_verify_and_list() {
    let (code, out, _) = pg(&["db", "verify"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("OK"));
    let nonzero = out.lines().skip(2).filter(|l| !l.trim_end().ends_with(" 0")).count();
    let categories = out.lines().skip(2).count();
    assert!(categories >= 4 && nonzero >= 3, "{out}");

    let d = tempfile::tempdir().unwrap();
    let more = d.path().join("more.toml");
    std::fs::write(&more, db_with(10, false)).unwrap();
    let base = entries(&pg(&["db", "list"]).1);
    assert_eq!(entries(&pg(&["db", "list", s(&more)]).1), base + 10);
    // the environment variable is the fallback
    assert_eq!(entries(&pg_env(&["db", "list"], &[("PICKLEGUARD_DB", s(&more))]).1), base + 10);

    let dup = d.path().join("dup.toml");
    std::fs::write(&dup, db_with(0, true)).unwrap();
    let (code, _, err) = pg(&["db", "verify", s(&dup)]);
    assert_eq!(code, 64);
    assert!(err.contains("cgitb.lookup"), "{err}");
}

#[test]
fn forge_manifest_and_corpus_summary() {
    let d = tempfile::tempdir().unwrap();
    let out_dir = d.path().join("corpus");
    assert_eq!(pg(&["forge", "--out-dir", s(&out_dir)]).0, 0);
    let manifest: Value = json(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap());
    let m = manifest.as_array().unwrap();
    assert_eq!(m.len(), 37);
    for e in m {
        let bytes = std::fs::read(out_dir.join(e["file"].as_str().unwrap())).unwrap();
        use sha2::Digest;
        assert_eq!(e["sha256"], hex::encode(sha2::Sha256::digest(&bytes)));
        assert!(e["expected_verdict"].is_string());
    }
    std::fs::remove_file(out_dir.join("manifest.json")).unwrap();
    let rules = d.path().join("canary.toml");
    std::fs::write(&rules, CANARY_RULES).unwrap();
    let (code, out, _) = pg(&["scan", "--format", "json", "--denylist", s(&rules), s(&out_dir)]);
    assert_eq!(code, 3);
    let v = json(&out);
    let rows = v["reports"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["input_path"].as_str().unwrap().contains("/row-") && r["verdict"] == "MALICIOUS")
        .count();
    assert_eq!(rows, 22);
    // every report matches its manifest expectation
    for r in v["reports"].as_array().unwrap() {
        let name = Path::new(r["input_path"].as_str().unwrap()).file_name().unwrap().to_str().unwrap();
        let e = m.iter().find(|e| e["file"] == name).unwrap();
        assert_eq!(r["verdict"], e["expected_verdict"], "{name}");
    }
}

#[test]
fn forge_single_family_and_unknown() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(pg(&["forge", "--family", "row-07", "--out-dir", s(d.path())]).0, 0);
    assert!(d.path().join("row-07-model.joblib").exists());
    assert_eq!(pg(&["forge", "--family", "row-99", "--out-dir", s(d.path())]).0, 64);
}

#[test]
fn fuzz_inputs_depend_only_on_seed() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    for dir in [&a, &b] {
        assert_eq!(pg(&["forge", "--family", "fuzz", "--count", "50", "--seed", "3", "--out-dir", s(dir)]).0, 0);
    }
    assert_eq!(std::fs::read(a.join("manifest.json")).unwrap(), std::fs::read(b.join("manifest.json")).unwrap());
}

#[cfg(unix)]
#[test]
fn symlinks_and_recursion() {
    let d = tempfile::tempdir().unwrap();
    let root = d.path().join("root");
    std::fs::create_dir_all(root.join("sub")).unwrap();
    std::fs::write(root.join("b.pkl"), b"N.").unwrap();
    std::fs::write(root.join("a.pkl"), b"N.").unwrap();
    std::fs::write(root.join("sub/c.pkl"), b"cos\nsystem\n.").unwrap();
    let outside = d.path().join("outside.pkl");
    std::fs::write(&outside, b"cos\nsystem\n.").unwrap();
    std::os::unix::fs::symlink(&outside, root.join("link.pkl")).unwrap();

    let names = |args: &[&str]| -> Vec<String> {
        let mut a = vec!["scan", "--format", "json"];
        a.extend_from_slice(args);
        let v = json(&pg(&a).1);
        v["reports"].as_array().unwrap().iter().map(|r| r["input_path"].as_str().unwrap().rsplit(['/']).next().unwrap().to_string()).collect()
    };
    assert_eq!(names(&[s(&root)]), ["a.pkl", "b.pkl", "c.pkl"]);
    assert_eq!(names(&["--no-recurse", s(&root)]), ["a.pkl", "b.pkl"]);
    assert_eq!(names(&["--follow-symlinks", s(&root)]), ["a.pkl", "b.pkl", "link.pkl", "c.pkl"]);
    // argument order is kept
    assert_eq!(names(&[s(&root.join("b.pkl")), s(&root.join("a.pkl"))]), ["b.pkl", "a.pkl"]);
}

#[test]
fn output_file_and_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("m.pkl");
    std::fs::write(&f, b"\x80\x04\x8c\x02os\x8c\x06system\x93\x8c\x02ls\x85R.").unwrap();
    let out = d.path().join("r.json");
    let (code, stdout, _) = pg(&["scan", "--format", "json", "--output", s(&out), s(&f)]);
    assert_eq!(code, 2);
    assert!(stdout.is_empty());
    let v = json(&std::fs::read_to_string(&out).unwrap());
    let report = serde_json::to_string(&v["reports"][0]).unwrap();
    let parsed = pickleguard_core::report::parse_structured(&report).unwrap();
    assert_eq!(parsed.exit_code, 2);
    assert_eq!(parsed.findings[0].subject, "os.system");
}

#[test]
fn unscannable_input_does_not_stop_the_run() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("a.pkl"), b"").unwrap();
    std::fs::write(d.path().join("b.pkl"), b"N.").unwrap();
    let (code, out, _) = pg(&["scan", "--format", "json", s(d.path())]);
    assert_eq!(code, 3);
    let v = json(&out);
    assert_eq!(v["reports"][0]["verdict"], "UNSCANNABLE-SUSPICIOUS");
    assert_eq!(v["reports"][1]["verdict"], "CLEAN");
}

fn ddg_corpus() -> String {
    format!("{}/../ddg/corpus", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn ddg_matches_the_library_golden() {
    let synthetic = format!("{}/synthetic.ast.json", ddg_corpus());
    let (code, out, _) = pg(&["ddg", "--format", "json", &synthetic]);
    assert_eq!(code, 0);
    let v = json(&out);
    let golden: Value = json(&std::fs::read_to_string(format!("{}/../ddg/tests/golden/synthetic_report.json", env!("CARGO_MANIFEST_DIR"))).unwrap());
    assert_eq!(v["report"], golden);
}

#[test]
fn ddg_worked_example_and_labels() {
    let (code, out, _) = pg(&["ddg", &ddg_corpus(), "--labels", &format!("{}/labels.json", ddg_corpus())]);
    assert_eq!(code, 0);
    assert!(out.contains("xmlrpc.server.resolve_dotted_attribute"));
    assert!(out.contains("arg 1: attr -> attrs -> i"));
    assert!(out.contains("precision 100.0%"));
}

#[test]
fn ddg_empty_and_malformed_inputs() {
    let (code, out, _) = pg(&["ddg", "--format", "json"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["report"]["total"]["scanned"], 0);
    assert_eq!(v["report"]["reduction_rate"], 0.0);

    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.ast.json");
    std::fs::write(&bad, "{\"format\": \"pickleguard-ast\", \"schema_version\": 1, \"units\": [").unwrap();
    let synthetic = format!("{}/synthetic.ast.json", ddg_corpus());
    let (code, out, err) = pg(&["ddg", "--format", "json", s(&bad), &synthetic]);
    assert_eq!(code, 0);
    assert!(err.contains("unexpected-eof"), "{err}");
    let v = json(&out);
    assert_eq!(v["skipped_files"], 1);
    assert_eq!(v["report"]["total"]["scanned"], 67);

    let sinks = d.path().join("sinks.toml");
    std::fs::write(&sinks, "schema_version = 1\n[[sink]]\ncallee = 'x'\ncritical_args = []\ncategory = 'code_execution'\n").unwrap();
    assert_eq!(pg(&["ddg", "--sinks", s(&sinks), &synthetic]).0, 64);
}
