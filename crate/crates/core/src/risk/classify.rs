use super::db::{GadgetDatabase, GadgetKind};
use super::lists::{load_list, ListKind, RuleList, DEFAULT_ALLOWLIST, DEFAULT_DENYLIST};
use super::{severity_for, RiskCategory, Severity};
use crate::container::LoadingPathLabel;
use crate::pickle::emulate::{ArgSummary, CallEvent, CallKind, EmulationResult, ImportRef, ResolvedBy};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

const EVIDENCE_CHARS: usize = 256;
const EVIDENCE_PER_FINDING: usize = 4;
const ATTR_GETTERS: &[&str] = &["builtins.getattr"];
const ATTRGETTER: &str = "operator.attrgetter";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    DenylistOnly,
    #[default]
    Hybrid,
    StrictAllowlist,
}

impl FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "denylist-only" => Ok(Policy::DenylistOnly),
            "hybrid" => Ok(Policy::Hybrid),
            "strict-allowlist" | "strict" => Ok(Policy::StrictAllowlist),
            _ => Err(format!("unknown policy {s:?} (denylist-only, hybrid, strict-allowlist)")),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::DenylistOnly => "denylist-only",
            Policy::Hybrid => "hybrid",
            Policy::StrictAllowlist => "strict-allowlist",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Verdict {
    Clean,
    UnscannableSuspicious,
    Suspicious,
    Malicious,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Clean => "CLEAN",
            Verdict::UnscannableSuspicious => "UNSCANNABLE-SUSPICIOUS",
            Verdict::Suspicious => "SUSPICIOUS",
            Verdict::Malicious => "MALICIOUS",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the classified stream sits in the container tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindingContext {
    pub loading_path: LoadingPathLabel,
    pub member_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    /// `None` when resolution failed.
    pub import_ref: Option<ImportRef>,
    pub subject: String,
    pub category: RiskCategory,
    pub severity: Severity,
    pub called: bool,
    /// The list entry or policy that produced the finding.
    pub rule: String,
    pub loading_path: LoadingPathLabel,
    pub member_path: String,
    pub offset: u64,
    pub evidence: Vec<String>,
}

fn is_invocation(k: CallKind) -> bool {
    matches!(k, CallKind::Reduce | CallKind::NewObj | CallKind::NewObjEx | CallKind::Obj | CallKind::Inst)
}

fn evidence_of(c: &CallEvent) -> String {
    let args: Vec<String> = c.args.iter().map(|a| a.render()).collect();
    let s = format!("{}({})", c.kind, args.join(", "));
    if s.chars().count() > EVIDENCE_CHARS {
        s.chars().take(EVIDENCE_CHARS).collect()
    } else {
        s
    }
}

/// An import as observed in one stream, direct or reached through an
/// attribute lookup.
struct Observed<'a> {
    import: ImportRef,
    offset: u64,
    calls: Vec<&'a CallEvent>,
}

fn derived_ref(r: &EmulationResult, base: &str, attr: &str) -> ImportRef {
    match r.imports.iter().find(|s| s.import.fqname() == base) {
        Some(s) => ImportRef {
            module: s.import.module.clone(),
            name: format!("{}.{}", s.import.name, attr),
            resolved_by: ResolvedBy::AttrAccess,
        },
        None => {
            let (m, n) = base.rsplit_once('.').unwrap_or((base, ""));
            ImportRef { module: m.to_string(), name: format!("{n}.{attr}"), resolved_by: ResolvedBy::AttrAccess }
        }
    }
}

pub struct Classifier {
    pub policy: Policy,
    pub deny: RuleList,
    pub db: GadgetDatabase,
    /// Effective allowlist for the policy.
    allow: RuleList,
}

impl Classifier {
    /// `user_allow` is the only allowlist under `strict-allowlist`; under
    /// `hybrid` it extends `default_allow`.
    pub fn new(
        policy: Policy,
        deny: RuleList,
        db: GadgetDatabase,
        default_allow: RuleList,
        user_allow: RuleList,
    ) -> Classifier {
        let allow = match policy {
            Policy::StrictAllowlist => user_allow,
            _ => {
                let mut a = default_allow;
                a.merge(user_allow);
                a
            }
        };
        Classifier { policy, deny, db, allow }
    }

    /// Shipped denylist, allowlist and seed gadgets.
    pub fn builtin(policy: Policy) -> Classifier {
        Classifier::new(
            policy,
            load_list(DEFAULT_DENYLIST, ListKind::Deny).expect("shipped denylist is valid"),
            GadgetDatabase::seed(),
            load_list(DEFAULT_ALLOWLIST, ListKind::Allow).expect("shipped allowlist is valid"),
            RuleList::default(),
        )
    }

    /// Category, severity and rule for one name, or `None` if it is not
    /// reported under this policy.
    pub fn classify_name(&self, fqname: &str, called: bool) -> Option<(RiskCategory, Severity, String)> {
        if let Some(e) = self.deny.lookup(fqname) {
            let c = RuleList::category_of(e);
            return Some((c, severity_for(c, called), format!("denylist:{}", e.fqname)));
        }
        if let Some(g) = self.db.lookup(fqname) {
            let c = match g.kind {
                GadgetKind::Attack => RiskCategory::AttackGadget,
                GadgetKind::Helper => RiskCategory::HelperGadget,
            };
            return Some((c, severity_for(c, called), format!("gadget-db:{}", g.fqname)));
        }
        if self.policy == Policy::DenylistOnly || self.allow.lookup(fqname).is_some() {
            return None;
        }
        let c = RiskCategory::UnknownImport;
        Some((c, severity_for(c, called), "not-allowlisted".into()))
    }

    fn is_attr_getter(&self, fq: &str) -> bool {
        ATTR_GETTERS.contains(&fq) || self.db.lookup(fq).is_some_and(|g| g.kind == GadgetKind::Helper)
    }

    fn observe<'a>(&self, r: &'a EmulationResult) -> Vec<Observed<'a>> {
        let mut out: Vec<Observed> = r
            .imports
            .iter()
            .map(|s| Observed {
                import: s.import.clone(),
                offset: s.offset,
                calls: r
                    .calls
                    .iter()
                    .filter(|c| is_invocation(c.kind) && c.origin.is_none() && c.callee.key() == s.import.key())
                    .collect(),
            })
            .collect();
        let on_result = |origin: u64| r.calls.iter().filter(move |c| c.kind == CallKind::OnResult && c.origin == Some(origin));
        let mut derived: Vec<Observed> = Vec::new();
        for c in &r.calls {
            let callee = c.callee.fqname();
            let target = if c.origin.is_none() && is_invocation(c.kind) && self.is_attr_getter(&callee) {
                match (c.args.first(), c.args.get(1)) {
                    (Some(ArgSummary::Import(base)), Some(ArgSummary::Str(attr))) => Some((base.clone(), attr.clone(), c.offset)),
                    _ => None,
                }
            } else if c.origin.is_none() && is_invocation(c.kind) && callee == ATTRGETTER {
                match c.args.first() {
                    Some(ArgSummary::Str(attr)) => on_result(c.offset).find_map(|c2| match c2.args.first() {
                        Some(ArgSummary::Import(base)) => Some((base.clone(), attr.clone(), c2.offset)),
                        _ => None,
                    }),
                    _ => None,
                }
            } else {
                None
            };
            if let Some((base, attr, at)) = target {
                let import = derived_ref(r, &base, &attr);
                let calls: Vec<&CallEvent> = on_result(at).collect();
                match derived.iter_mut().chain(out.iter_mut()).find(|o| o.import.key() == import.key()) {
                    Some(o) => o.calls.extend(calls),
                    None => derived.push(Observed { import, offset: at, calls }),
                }
            }
        }
        out.extend(derived);
        out
    }

    pub fn classify(&self, r: &EmulationResult, ctx: &FindingContext) -> Vec<Finding> {
        let mut out = Vec::new();
        for o in self.observe(r) {
            let fq = o.import.fqname();
            let called = !o.calls.is_empty();
            if let Some((category, severity, rule)) = self.classify_name(&fq, called) {
                out.push(Finding {
                    import_ref: Some(o.import),
                    subject: fq,
                    category,
                    severity,
                    called,
                    rule,
                    loading_path: ctx.loading_path.clone(),
                    member_path: ctx.member_path.clone(),
                    offset: o.offset,
                    evidence: o.calls.iter().take(EVIDENCE_PER_FINDING).map(|c| evidence_of(c)).collect(),
                });
            }
        }
        if self.policy != Policy::DenylistOnly {
            for u in &r.unresolved {
                out.push(Finding {
                    import_ref: None,
                    subject: "<unresolvable>".into(),
                    category: RiskCategory::UnknownImport,
                    severity: Severity::Medium,
                    called: false,
                    rule: "unresolvable".into(),
                    loading_path: ctx.loading_path.clone(),
                    member_path: ctx.member_path.clone(),
                    offset: u.offset,
                    evidence: vec![u.detail.chars().take(EVIDENCE_CHARS).collect()],
                });
            }
        }
        out
    }
}

/// Any critical or high finding is malicious; other findings are
/// suspicious; anomalies alone make a file unscannable-suspicious.
pub fn aggregate(findings: &[Finding], anomaly_count: usize) -> Verdict {
    match findings.iter().map(|f| f.severity).max() {
        Some(Severity::Critical | Severity::High) => Verdict::Malicious,
        Some(_) => Verdict::Suspicious,
        None if anomaly_count > 0 => Verdict::UnscannableSuspicious,
        None => Verdict::Clean,
    }
}
