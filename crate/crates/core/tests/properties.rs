use pickleguard_core::container::{unwrap, FormatTag, LoadingPathLabel, WalkConfig};
use pickleguard_core::forge::full_corpus;
use pickleguard_core::pickle::{disassemble_with, emulate_stream, EmulationResult, VmLimits};
use pickleguard_core::risk::{load_gadget_db, load_list, GadgetDatabase, ListKind, RuleList, DEFAULT_ALLOWLIST, DEFAULT_DENYLIST, SEED_GADGETS};
use pickleguard_core::risk::{aggregate, Classifier, Finding, FindingContext, Policy, RiskCategory, Severity};
use pickleguard_core::scan::Scanner;
use pickleguard_core::AnomalyKind;
use proptest::prelude::*;
use std::collections::BTreeSet;
use std::sync::OnceLock;

fn ident() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,10}"
}

fn dotted() -> impl Strategy<Value = String> {
    prop::collection::vec(ident(), 1..4).prop_map(|v| v.join("."))
}

fn short_unicode(out: &mut Vec<u8>, s: &str) {
    out.push(0x8c);
    out.push(s.len() as u8);
    out.extend_from_slice(s.as_bytes());
}

fn text(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(format!("S'{s}'\n").as_bytes());
}

fn import_set(r: &EmulationResult) -> BTreeSet<String> {
    r.imports.iter().map(|s| s.import.fqname()).collect()
}

/// How one STACK_GLOBAL operand reaches the stack.
#[derive(Debug, Clone, Copy)]
enum Via {
    Inline,
    Memoize,
    BinPut,
    LongBinPut,
}

fn via() -> impl Strategy<Value = Via> {
    prop_oneof![Just(Via::Inline), Just(Via::Memoize), Just(Via::BinPut), Just(Via::LongBinPut)]
}

/// Push `s`, optionally through a store / pop / fetch round trip.
fn operand(out: &mut Vec<u8>, s: &str, via: Via, next_memo: &mut u32) {
    short_unicode(out, s);
    let idx = *next_memo;
    match via {
        Via::Inline => return,
        Via::Memoize => out.push(0x94),
        Via::BinPut => {
            out.push(b'q');
            out.push(idx as u8);
        }
        Via::LongBinPut => {
            out.push(b'r');
            out.extend_from_slice(&idx.to_le_bytes());
        }
    }
    *next_memo += 1;
    out.push(b'0');
    out.push(b'h');
    out.push(idx as u8);
}

const POOL: &[&str] = &[
    "os.system",
    "posix.system",
    "subprocess.Popen",
    "builtins.eval",
    "builtins.getattr",
    "builtins.print",
    "collections.OrderedDict",
    "torch._utils._rebuild_tensor_v2",
    "numpy.core.multiarray._reconstruct",
    "cgitb.lookup",
    "logging.config._resolve",
    "numpy.f2py.capi_maps.getinit",
    "xmlrpc.server.resolve_dotted_attribute",
    "sklearn.linear_model.LogisticRegression",
    "mylib.helpers.thing",
    "pathlib.Path.write_text",
    "shutil.rmtree",
];

/// A stream that imports each pool entry in `picks` with GLOBAL, calling
/// the ones flagged.
fn pool_stream(picks: &[(usize, bool)]) -> Vec<u8> {
    let mut out = b"\x80\x02".to_vec();
    for (i, call) in picks {
        let (m, n) = POOL[*i].rsplit_once('.').unwrap();
        out.extend_from_slice(format!("c{m}\n{n}\n").as_bytes());
        if *call {
            out.extend_from_slice(b")R");
        }
        out.push(b'0');
    }
    out.extend_from_slice(b"N.");
    out
}

fn ctx() -> FindingContext {
    FindingContext { loading_path: LoadingPathLabel::from_chain(vec![FormatTag::Pkl]), member_path: String::new() }
}

fn keys(f: &[Finding]) -> BTreeSet<(String, u64)> {
    f.iter().map(|x| (x.subject.clone(), x.offset)).collect()
}

fn finding(sev: Severity) -> Finding {
    Finding {
        import_ref: None,
        subject: "m.n".into(),
        category: RiskCategory::UnknownImport,
        severity: sev,
        called: false,
        rule: "test".into(),
        loading_path: LoadingPathLabel::from_chain(vec![FormatTag::Pkl]),
        member_path: String::new(),
        offset: 0,
        evidence: vec![],
    }
}

fn severity() -> impl Strategy<Value = Severity> {
    prop_oneof![Just(Severity::Info), Just(Severity::Medium), Just(Severity::High), Just(Severity::Critical)]
}

fn corpus() -> &'static [pickleguard_core::forge::Fixture] {
    static C: OnceLock<Vec<pickleguard_core::forge::Fixture>> = OnceLock::new();
    C.get_or_init(|| full_corpus().unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decoder_is_total(bytes in prop::collection::vec(any::<u8>(), 0..2048)) {
        let tight = VmLimits { max_stream_bytes: 4096, max_stack: 32, max_memo: 32, max_events: 4096 };
        let d = disassemble_with(&bytes, &tight);
        prop_assert!(d.events.len() <= tight.max_events);
        let _ = emulate_stream(&bytes, &tight);
        let _ = emulate_stream(&bytes, &VmLimits::default());
    }

    #[test]
    fn walker_is_total(bytes in prop::collection::vec(any::<u8>(), 0..2048)) {
        let cfg = WalkConfig { node_budget: 1 << 16, scan_budget: 1 << 18, ..WalkConfig::default() };
        let t = unwrap(&bytes, &cfg);
        prop_assert!(t.depth() <= cfg.max_depth + 1);
    }

    #[test]
    fn stack_cap_breach_is_an_anomaly(n in 9usize..200) {
        let mut s = vec![b'N'; n];
        s.push(b'.');
        let r = emulate_stream(&s, &VmLimits { max_stack: 8, ..VmLimits::default() });
        prop_assert!(r.anomalies.iter().any(|a| a.kind == AnomalyKind::StackCapExceeded));
    }

    #[test]
    fn position_zero_independence(module in dotted(), name in ident(), arg in ident()) {
        let mut headed = b"\x80\x04".to_vec();
        short_unicode(&mut headed, &module);
        short_unicode(&mut headed, &name);
        headed.push(0x93);
        short_unicode(&mut headed, &arg);
        headed.extend_from_slice(b"\x85R.");

        let mut bare = Vec::new();
        text(&mut bare, &module);
        text(&mut bare, &name);
        bare.push(0x93);
        text(&mut bare, &arg);
        bare.extend_from_slice(b"\x85R.");

        let dropped = headed[2..].to_vec();
        let l = VmLimits::default();
        let want = import_set(&emulate_stream(&headed, &l));
        prop_assert_eq!(want.len(), 1);
        prop_assert_eq!(&import_set(&emulate_stream(&bare, &l)), &want);
        prop_assert_eq!(&import_set(&emulate_stream(&dropped, &l)), &want);
    }

    #[test]
    fn memo_transparency(module in dotted(), name in ident(), vm in via(), vn in via()) {
        let mut plain = b"\x80\x04".to_vec();
        short_unicode(&mut plain, &module);
        short_unicode(&mut plain, &name);
        plain.extend_from_slice(b"\x93.");

        let mut memo = b"\x80\x04".to_vec();
        let mut next = 0;
        operand(&mut memo, &module, vm, &mut next);
        operand(&mut memo, &name, vn, &mut next);
        memo.extend_from_slice(b"\x93.");

        let l = VmLimits::default();
        let a = emulate_stream(&plain, &l);
        let b = emulate_stream(&memo, &l);
        prop_assert_eq!(import_set(&a), import_set(&b));
        prop_assert!(b.anomalies.is_empty(), "{:?}", b.anomalies);
    }

    #[test]
    fn verdict_monotonicity(
        sevs in prop::collection::vec(severity(), 0..6),
        anomalies in 0usize..4,
        extra in severity(),
    ) {
        let base: Vec<Finding> = sevs.iter().map(|s| finding(*s)).collect();
        let v = aggregate(&base, anomalies);
        prop_assert!(aggregate(&base, anomalies + 1) >= v);
        let mut more = base.clone();
        more.push(finding(extra));
        prop_assert!(aggregate(&more, anomalies) >= v);
    }

    #[test]
    fn policy_containment(picks in prop::collection::vec((0..POOL.len(), any::<bool>()), 0..8)) {
        let r = emulate_stream(&pool_stream(&picks), &VmLimits::default());
        let f = |p| keys(&Classifier::builtin(p).classify(&r, &ctx()));
        let deny = f(Policy::DenylistOnly);
        let hybrid = f(Policy::Hybrid);
        let strict = f(Policy::StrictAllowlist);
        prop_assert!(deny.is_subset(&hybrid), "{:?} vs {:?}", deny, hybrid);
        prop_assert!(hybrid.is_subset(&strict), "{:?} vs {:?}", hybrid, strict);
    }

    #[test]
    fn db_extension_soundness(
        picks in prop::collection::vec((0..POOL.len(), any::<bool>()), 0..8),
        new in dotted().prop_filter("needs a module", |s| s.contains('.')),
        wildcard in any::<bool>(),
        attack in any::<bool>(),
    ) {
        let pattern = if wildcard { format!("{new}.*") } else { new.clone() };
        let (kind, cat) = if attack { ("attack", "code_execution") } else { ("helper", "helper_gadget") };
        let doc = format!(
            "{SEED_GADGETS}\n[[entry]]\nfqname = '{pattern}'\nkind = '{kind}'\ncategory = '{cat}'\nsource_library = 'x'\n"
        );
        let Ok(db) = load_gadget_db(&doc) else { return Ok(()) };
        let lists = || {
            (
                load_list(DEFAULT_DENYLIST, ListKind::Deny).unwrap(),
                load_list(DEFAULT_ALLOWLIST, ListKind::Allow).unwrap(),
            )
        };
        let (d0, a0) = lists();
        let (d1, a1) = lists();
        let before = Classifier::new(Policy::Hybrid, d0, GadgetDatabase::seed(), a0, RuleList::default());
        let after = Classifier::new(Policy::Hybrid, d1, db, a1, RuleList::default());
        let hits = |fq: &str| fq == new || (wildcard && fq.starts_with(&format!("{new}.")));
        for (i, called) in &picks {
            let fq = POOL[*i];
            if !hits(fq) {
                prop_assert_eq!(before.classify_name(fq, *called), after.classify_name(fq, *called));
            }
        }
        let r = emulate_stream(&pool_stream(&picks), &VmLimits::default());
        let untouched = |f: Vec<Finding>| -> Vec<(String, RiskCategory, Severity)> {
            f.into_iter().filter(|x| !hits(&x.subject)).map(|x| (x.subject, x.category, x.severity)).collect()
        };
        prop_assert_eq!(untouched(before.classify(&r, &ctx())), untouched(after.classify(&r, &ctx())));
    }

    #[test]
    fn extension_independence(idx in 0usize..35, ext in "[a-z0-9]{0,6}") {
        let f = &corpus()[idx % corpus().len()];
        let s = Scanner::new(Classifier::builtin(Policy::Hybrid), WalkConfig::default());
        let stem = f.file_name.split('.').next().unwrap();
        let renamed = if ext.is_empty() { stem.to_string() } else { format!("{stem}.{ext}") };
        let a = s.scan_bytes(&f.file_name, &f.bytes);
        let b = s.scan_bytes(&renamed, &f.bytes);
        prop_assert_eq!(&a.container_tree, &b.container_tree);
        prop_assert_eq!(&a.findings, &b.findings);
        prop_assert_eq!(unwrap(&f.bytes, &WalkConfig::default()), unwrap(&f.bytes, &WalkConfig::default()));
    }
}
