//! Symbolic stack emulation. Tracks which globals a stream imports and which
//! of them it would call, without importing or calling anything.

use super::disasm::{Decoder, OpArg, OpcodeEvent, Step, VmLimits};
use super::joblib::{inline_array, ArrayPayload, InlineArray, WRAPPER_NAMES};
use super::opcode::{Opcode, HIGHEST_PROTOCOL};
use crate::anomaly::{Anomaly, AnomalyKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;

/// Items kept per symbolic container; the rest is counted but dropped.
const CONTAINER_KEEP: usize = 64;
const SUMMARY_DEPTH: usize = 4;
const SUMMARY_ITEMS: usize = 16;
const SUMMARY_TEXT: usize = 256;
const MAX_RESULTS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolvedBy {
    Global,
    StackGlobal,
    Inst,
    /// Derived from an attribute lookup on an imported object.
    AttrAccess,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImportRef {
    pub module: String,
    pub name: String,
    pub resolved_by: ResolvedBy,
}

impl ImportRef {
    pub fn fqname(&self) -> String {
        format!("{}.{}", self.module, self.name)
    }

    pub fn key(&self) -> (String, String) {
        (self.module.clone(), self.name.clone())
    }
}

impl fmt::Display for ImportRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.module, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportSite {
    pub import: ImportRef,
    pub offset: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CallKind {
    Reduce,
    NewObj,
    NewObjEx,
    Obj,
    Inst,
    Build,
    /// The callable is itself the result of an earlier call.
    OnResult,
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CallKind::Reduce => "reduce",
            CallKind::NewObj => "new-obj",
            CallKind::NewObjEx => "new-obj-ex",
            CallKind::Obj => "obj",
            CallKind::Inst => "inst",
            CallKind::Build => "build",
            CallKind::OnResult => "on-result",
        })
    }
}

/// Compact rendering of a call argument, kept for evidence and for
/// attribute-access derivation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum ArgSummary {
    Str(String),
    Bytes(usize),
    Int(String),
    Float(f64),
    Bool(bool),
    None,
    Import(String),
    CallResult(String),
    Container(Vec<ArgSummary>),
    Opaque,
}

impl ArgSummary {
    pub fn render(&self) -> String {
        match self {
            ArgSummary::Str(s) => format!("{s:?}"),
            ArgSummary::Bytes(n) => format!("<{n} bytes>"),
            ArgSummary::Int(s) => s.clone(),
            ArgSummary::Float(v) => format!("{v}"),
            ArgSummary::Bool(b) => if *b { "True".into() } else { "False".into() },
            ArgSummary::None => "None".into(),
            ArgSummary::Import(s) => s.clone(),
            ArgSummary::CallResult(s) => format!("{s}(...)"),
            ArgSummary::Container(items) => {
                let inner: Vec<String> = items.iter().map(|i| i.render()).collect();
                format!("({})", inner.join(", "))
            }
            ArgSummary::Opaque => "?".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallEvent {
    pub callee: ImportRef,
    pub kind: CallKind,
    pub offset: u64,
    pub args: Vec<ArgSummary>,
    /// For [`CallKind::OnResult`]: offset of the call that produced the callable.
    pub origin: Option<u64>,
    /// For calls made through a derived attribute: the attribute name.
    pub attr: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedImport {
    pub offset: u64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmulationResult {
    /// First site of every distinct (module, name).
    pub imports: Vec<ImportSite>,
    pub calls: Vec<CallEvent>,
    pub unresolved: Vec<UnresolvedImport>,
    pub anomalies: Vec<Anomaly>,
    /// Number of pickle segments that were emulated.
    pub segments: usize,
    /// Summary of the value each complete segment evaluates to (first
    /// `MAX_RESULTS` segments only).
    pub results: Vec<ArgSummary>,
}

impl EmulationResult {
    /// Merge `other`, whose offsets are relative to `shift`.
    pub fn absorb(&mut self, other: EmulationResult, shift: u64) {
        for mut s in other.imports {
            if !self.imports.iter().any(|x| x.import.key() == s.import.key()) {
                s.offset += shift;
                self.imports.push(s);
            }
        }
        for mut c in other.calls {
            c.offset += shift;
            c.origin = c.origin.map(|o| o + shift);
            self.calls.push(c);
        }
        for mut u in other.unresolved {
            u.offset += shift;
            self.unresolved.push(u);
        }
        for mut a in other.anomalies {
            a.offset += shift;
            self.anomalies.push(a);
        }
        self.segments += other.segments;
        self.results.extend(other.results);
    }

    /// Shift every recorded offset by `shift`.
    pub fn rebase(&mut self, shift: u64) {
        let mut out = EmulationResult::default();
        std::mem::swap(self, &mut out);
        self.absorb(out, shift);
    }

    pub fn import_set(&self) -> BTreeSet<(String, String)> {
        self.imports.iter().map(|s| s.import.key()).collect()
    }

    pub fn called(&self, module: &str, name: &str) -> bool {
        self.calls
            .iter()
            .any(|c| c.callee.module == module && c.callee.name == name && c.kind != CallKind::Build)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    List,
    Tuple,
    Dict,
    Set,
    FrozenSet,
}

/// Abstract value on the emulated stack.
#[derive(Debug, Clone, PartialEq)]
pub enum SymbolicValue {
    Str(String),
    Bytes(usize),
    Int(String),
    Float(f64),
    Bool(bool),
    None,
    Import(ImportRef),
    CallResult { callee: ImportRef, origin: u64, attr: Option<String>, args: Vec<ArgSummary> },
    Container { kind: ContainerKind, items: Vec<Val>, dropped: usize },
    Opaque,
}

pub type Val = Rc<SymbolicValue>;

/// Python 2 module names the unpickler remaps on load.
const MODULE_MAP: &[(&str, &str)] = &[
    ("__builtin__", "builtins"),
    ("copy_reg", "copyreg"),
    ("Queue", "queue"),
    ("SocketServer", "socketserver"),
    ("repr", "reprlib"),
    ("_winreg", "winreg"),
    ("thread", "_thread"),
    ("dummy_thread", "_dummy_thread"),
    ("xmlrpclib", "xmlrpc.client"),
    ("SimpleXMLRPCServer", "xmlrpc.server"),
    ("httplib", "http.client"),
    ("commands", "subprocess"),
    ("urllib2", "urllib.request"),
    ("cPickle", "pickle"),
    ("UserDict", "collections"),
    ("StringIO", "io"),
    ("cStringIO", "io"),
    ("exceptions", "builtins"),
];

type Rename = ((&'static str, &'static str), (&'static str, &'static str));

const NAME_MAP: &[Rename] = &[
    (("__builtin__", "xrange"), ("builtins", "range")),
    (("__builtin__", "reduce"), ("functools", "reduce")),
    (("__builtin__", "intern"), ("sys", "intern")),
    (("__builtin__", "unichr"), ("builtins", "chr")),
    (("__builtin__", "unicode"), ("builtins", "str")),
    (("__builtin__", "long"), ("builtins", "int")),
    (("__builtin__", "raw_input"), ("builtins", "input")),
    (("__builtin__", "basestring"), ("builtins", "str")),
    (("__builtin__", "execfile"), ("builtins", "exec")),
];

/// Apply the Python 2 compatibility mapping. It is applied regardless of the
/// protocol so a crafted stream cannot hide a builtin behind an alias.
pub fn normalize_import(module: &str, name: &str) -> (String, String) {
    for ((m, n), (tm, tn)) in NAME_MAP {
        if *m == module && *n == name {
            return (tm.to_string(), tn.to_string());
        }
    }
    for (m, t) in MODULE_MAP {
        if *m == module {
            return (t.to_string(), name.to_string());
        }
    }
    (module.to_string(), name.to_string())
}

fn clip(s: &str) -> String {
    if s.chars().count() > SUMMARY_TEXT {
        let mut o: String = s.chars().take(SUMMARY_TEXT).collect();
        o.push_str("...");
        o
    } else {
        s.to_string()
    }
}

fn summarize(v: &SymbolicValue, depth: usize) -> ArgSummary {
    match v {
        SymbolicValue::Str(s) => ArgSummary::Str(clip(s)),
        SymbolicValue::Bytes(n) => ArgSummary::Bytes(*n),
        SymbolicValue::Int(s) => ArgSummary::Int(s.clone()),
        SymbolicValue::Float(f) => ArgSummary::Float(*f),
        SymbolicValue::Bool(b) => ArgSummary::Bool(*b),
        SymbolicValue::None => ArgSummary::None,
        SymbolicValue::Import(r) => ArgSummary::Import(r.fqname()),
        SymbolicValue::CallResult { callee, attr, .. } => ArgSummary::CallResult(match attr {
            Some(a) => format!("{}.{}", callee.fqname(), a),
            None => callee.fqname(),
        }),
        SymbolicValue::Container { items, .. } => {
            if depth >= SUMMARY_DEPTH {
                ArgSummary::Opaque
            } else {
                ArgSummary::Container(items.iter().take(SUMMARY_ITEMS).map(|i| summarize(i, depth + 1)).collect())
            }
        }
        SymbolicValue::Opaque => ArgSummary::Opaque,
    }
}

/// Arguments of a call: the items of a tuple argument, or the value itself.
fn call_args(v: &SymbolicValue) -> Vec<ArgSummary> {
    match v {
        SymbolicValue::Container { kind: ContainerKind::Tuple, items, .. } => {
            items.iter().take(SUMMARY_ITEMS).map(|i| summarize(i, 1)).collect()
        }
        other => vec![summarize(other, 1)],
    }
}

/// Per-segment machine state.
struct Machine {
    stack: Vec<Val>,
    marks: Vec<usize>,
    memo: HashMap<u64, Val>,
    opaque: Val,
}

/// Accumulates results over all segments of a stream.
pub struct Emulator<'l> {
    limits: &'l VmLimits,
    machine: Machine,
    result: EmulationResult,
    seen: HashMap<(String, String), usize>,
    in_segment: bool,
    /// Set once a cap breach makes further emulation meaningless.
    halted: bool,
    /// Array payload announced by the last BUILD, not yet consumed.
    inline_array: Option<InlineArray>,
}

impl Machine {
    fn new() -> Self {
        Machine {
            stack: Vec::new(),
            marks: Vec::new(),
            memo: HashMap::new(),
            opaque: Rc::new(SymbolicValue::Opaque),
        }
    }

    fn base(&self) -> usize {
        self.marks.last().copied().unwrap_or(0)
    }
}

impl<'l> Emulator<'l> {
    pub fn new(limits: &'l VmLimits) -> Self {
        Emulator {
            limits,
            machine: Machine::new(),
            result: EmulationResult::default(),
            seen: HashMap::new(),
            in_segment: false,
            halted: false,
            inline_array: None,
        }
    }

    pub fn finish(mut self) -> EmulationResult {
        if self.in_segment {
            self.result.segments += 1;
        }
        self.result
    }

    /// Take the array payload announced by the event just fed, if any.
    pub fn take_inline_array(&mut self) -> Option<InlineArray> {
        self.inline_array.take()
    }

    /// Merge the result of a nested stream read mid-segment.
    pub fn absorb_nested(&mut self, mut other: EmulationResult, shift: u64) {
        other.segments = 0;
        other.results.clear();
        self.result.absorb(other, shift);
        for (i, s) in self.result.imports.iter().enumerate() {
            self.seen.entry(s.import.key()).or_insert(i);
        }
    }

    pub fn note(&mut self, a: Anomaly) {
        self.result.anomalies.push(a);
    }

    fn anomaly(&mut self, kind: AnomalyKind, offset: u64, detail: impl Into<String>) {
        self.result.anomalies.push(Anomaly::new(kind, offset, detail));
    }

    fn push(&mut self, v: Val, offset: u64) {
        if self.machine.stack.len() >= self.limits.max_stack {
            self.anomaly(
                AnomalyKind::StackCapExceeded,
                offset,
                format!("stack depth over {}", self.limits.max_stack),
            );
            self.halted = true;
            return;
        }
        self.machine.stack.push(v);
    }

    fn pop(&mut self, ev: &OpcodeEvent) -> Val {
        if self.machine.stack.len() > self.machine.base() {
            self.machine.stack.pop().unwrap()
        } else {
            self.anomaly(AnomalyKind::StackUnderflow, ev.offset, format!("{} on empty stack", ev.opcode.name()));
            self.machine.opaque.clone()
        }
    }

    fn top(&mut self, ev: &OpcodeEvent) -> Option<usize> {
        if self.machine.stack.len() > self.machine.base() {
            Some(self.machine.stack.len() - 1)
        } else {
            self.anomaly(AnomalyKind::StackUnderflow, ev.offset, format!("{} on empty stack", ev.opcode.name()));
            None
        }
    }

    fn pop_mark(&mut self, ev: &OpcodeEvent) -> Vec<Val> {
        match self.machine.marks.pop() {
            Some(at) => self.machine.stack.split_off(at),
            None => {
                self.anomaly(AnomalyKind::MarkMissing, ev.offset, format!("{} without MARK", ev.opcode.name()));
                let at = self.machine.base();
                self.machine.stack.split_off(at)
            }
        }
    }

    fn container(kind: ContainerKind, items: Vec<Val>) -> Val {
        let dropped = items.len().saturating_sub(CONTAINER_KEEP);
        let mut items = items;
        items.truncate(CONTAINER_KEEP);
        Rc::new(SymbolicValue::Container { kind, items, dropped })
    }

    /// Add items to the container at stack index `idx`, if it is one.
    fn extend_at(&mut self, idx: usize, new: Vec<Val>) {
        let slot = &mut self.machine.stack[idx];
        if let SymbolicValue::Container { .. } = **slot {
            let v = Rc::make_mut(slot);
            if let SymbolicValue::Container { items, dropped, .. } = v {
                for n in new {
                    if items.len() < CONTAINER_KEEP {
                        items.push(n);
                    } else {
                        *dropped += 1;
                    }
                }
            }
        }
    }

    fn record_import(&mut self, module: &str, name: &str, by: ResolvedBy, offset: u64) -> Option<ImportRef> {
        if module.is_empty() || name.is_empty() {
            self.unresolved(offset, format!("empty module or name in {module:?}.{name:?}"));
            return None;
        }
        let (m, n) = normalize_import(module, name);
        let r = ImportRef { module: m.clone(), name: n.clone(), resolved_by: by };
        if !self.seen.contains_key(&(m.clone(), n.clone())) {
            self.seen.insert((m, n), self.result.imports.len());
            self.result.imports.push(ImportSite { import: r.clone(), offset });
        }
        Some(r)
    }

    fn unresolved(&mut self, offset: u64, detail: String) {
        self.anomaly(AnomalyKind::UnresolvableImport, offset, detail.clone());
        self.result.unresolved.push(UnresolvedImport { offset, detail });
    }

    /// Record a call of `callable` and return the symbolic result.
    fn call(&mut self, callable: &SymbolicValue, args: Vec<ArgSummary>, kind: CallKind, offset: u64) -> Val {
        match callable {
            SymbolicValue::Import(r) => {
                self.result.calls.push(CallEvent {
                    callee: r.clone(),
                    kind,
                    offset,
                    args: args.clone(),
                    origin: None,
                    attr: None,
                });
                Rc::new(SymbolicValue::CallResult { callee: r.clone(), origin: offset, attr: None, args })
            }
            SymbolicValue::CallResult { callee, origin, .. } => {
                self.result.calls.push(CallEvent {
                    callee: callee.clone(),
                    kind: CallKind::OnResult,
                    offset,
                    args: args.clone(),
                    origin: Some(*origin),
                    attr: None,
                });
                Rc::new(SymbolicValue::CallResult { callee: callee.clone(), origin: offset, attr: None, args })
            }
            _ => self.machine.opaque.clone(),
        }
    }

    fn memo_put(&mut self, key: u64, ev: &OpcodeEvent) {
        let Some(i) = self.top(ev) else { return };
        if self.machine.memo.len() >= self.limits.max_memo && !self.machine.memo.contains_key(&key) {
            self.anomaly(AnomalyKind::MemoCapExceeded, ev.offset, format!("memo over {} entries", self.limits.max_memo));
            self.halted = true;
            return;
        }
        let v = self.machine.stack[i].clone();
        self.machine.memo.insert(key, v);
    }

    fn memo_get(&mut self, key: u64, ev: &OpcodeEvent) {
        let v = match self.machine.memo.get(&key) {
            Some(v) => v.clone(),
            None => {
                self.anomaly(AnomalyKind::MemoMiss, ev.offset, format!("memo key {key} not defined"));
                self.machine.opaque.clone()
            }
        };
        self.push(v, ev.offset);
    }

    /// Feed one decoded event. Returns false once emulation has halted.
    pub fn feed(&mut self, ev: &OpcodeEvent) -> bool {
        if self.halted {
            return false;
        }
        self.in_segment = true;
        let off = ev.offset;
        use Opcode::*;
        match ev.opcode {
            Proto => {
                if let OpArg::Int(v) = ev.arg {
                    if v > HIGHEST_PROTOCOL as i128 {
                        self.anomaly(AnomalyKind::UnsupportedProtocol, off, format!("protocol {v}"));
                    }
                }
            }
            Frame | ReadonlyBuffer => {}
            Stop => {
                let v = self.pop(ev);
                if self.result.results.len() < MAX_RESULTS {
                    self.result.results.push(summarize(&v, 2));
                }
                self.machine = Machine::new();
                self.result.segments += 1;
                self.in_segment = false;
            }
            Int | BinInt | BinInt1 | BinInt2 | Long | Long1 | Long4 => {
                let v = match &ev.arg {
                    OpArg::Int(i) => SymbolicValue::Int(i.to_string()),
                    OpArg::BigInt(s) => SymbolicValue::Int(s.clone()),
                    OpArg::Bool(b) => SymbolicValue::Bool(*b),
                    _ => SymbolicValue::Opaque,
                };
                self.push(Rc::new(v), off);
            }
            String | BinString | ShortBinString | Unicode | ShortBinUnicode | BinUnicode | BinUnicode8 => {
                let v = match &ev.arg {
                    OpArg::Str(s) => SymbolicValue::Str(s.clone()),
                    _ => SymbolicValue::Opaque,
                };
                self.push(Rc::new(v), off);
            }
            BinBytes | ShortBinBytes | BinBytes8 | ByteArray8 => {
                let n = match &ev.arg {
                    OpArg::Bytes(b) => b.len(),
                    _ => 0,
                };
                self.push(Rc::new(SymbolicValue::Bytes(n)), off);
            }
            Float | BinFloat => {
                let v = match ev.arg {
                    OpArg::Float(f) => SymbolicValue::Float(f),
                    _ => SymbolicValue::Opaque,
                };
                self.push(Rc::new(v), off);
            }
            None => self.push(Rc::new(SymbolicValue::None), off),
            NewTrue => self.push(Rc::new(SymbolicValue::Bool(true)), off),
            NewFalse => self.push(Rc::new(SymbolicValue::Bool(false)), off),
            NextBuffer | PersId => {
                let o = self.machine.opaque.clone();
                self.push(o, off);
            }
            BinPersId => {
                let _ = self.pop(ev);
                let o = self.machine.opaque.clone();
                self.push(o, off);
            }
            EmptyList => self.push(Self::container(ContainerKind::List, vec![]), off),
            EmptyTuple => self.push(Self::container(ContainerKind::Tuple, vec![]), off),
            EmptyDict => self.push(Self::container(ContainerKind::Dict, vec![]), off),
            EmptySet => self.push(Self::container(ContainerKind::Set, vec![]), off),
            List | Tuple | Dict | FrozenSet => {
                let items = self.pop_mark(ev);
                let kind = match ev.opcode {
                    List => ContainerKind::List,
                    Tuple => ContainerKind::Tuple,
                    Dict => ContainerKind::Dict,
                    _ => ContainerKind::FrozenSet,
                };
                self.push(Self::container(kind, items), off);
            }
            Tuple1 | Tuple2 | Tuple3 => {
                let n = match ev.opcode {
                    Tuple1 => 1,
                    Tuple2 => 2,
                    _ => 3,
                };
                let mut items: Vec<Val> = (0..n).map(|_| self.pop(ev)).collect();
                items.reverse();
                self.push(Self::container(ContainerKind::Tuple, items), off);
            }
            Append => {
                let v = self.pop(ev);
                if let Some(i) = self.top(ev) {
                    self.extend_at(i, vec![v]);
                }
            }
            SetItem => {
                let v = self.pop(ev);
                let k = self.pop(ev);
                if let Some(i) = self.top(ev) {
                    self.extend_at(i, vec![k, v]);
                }
            }
            Appends | SetItems | AddItems => {
                let items = self.pop_mark(ev);
                if let Some(i) = self.top(ev) {
                    self.extend_at(i, items);
                }
            }
            Pop => {
                if self.machine.stack.len() > self.machine.base() {
                    self.machine.stack.pop();
                } else if self.machine.marks.pop().is_none() {
                    self.anomaly(AnomalyKind::StackUnderflow, off, "POP on empty stack");
                }
            }
            PopMark => {
                let _ = self.pop_mark(ev);
            }
            Dup => {
                if let Some(i) = self.top(ev) {
                    let v = self.machine.stack[i].clone();
                    self.push(v, off);
                }
            }
            Mark => {
                if self.machine.marks.len() >= self.limits.max_stack {
                    self.anomaly(AnomalyKind::StackCapExceeded, off, "too many marks");
                    self.halted = true;
                } else {
                    self.machine.marks.push(self.machine.stack.len());
                }
            }
            Get | BinGet | LongBinGet => match ev.arg {
                OpArg::Int(k) if k >= 0 => self.memo_get(k as u64, ev),
                _ => {
                    self.anomaly(AnomalyKind::MemoMiss, off, "non-integer memo key");
                    let o = self.machine.opaque.clone();
                    self.push(o, off);
                }
            },
            Put | BinPut | LongBinPut => match ev.arg {
                OpArg::Int(k) if k >= 0 => self.memo_put(k as u64, ev),
                _ => self.anomaly(AnomalyKind::MalformedArgument, off, "non-integer memo key"),
            },
            Memoize => {
                let k = self.machine.memo.len() as u64;
                self.memo_put(k, ev);
            }
            Ext1 | Ext2 | Ext4 => {
                self.anomaly(AnomalyKind::ExtensionRegistry, off, "extension registry lookup cannot be resolved statically");
                let o = self.machine.opaque.clone();
                self.push(o, off);
            }
            Global => {
                let v = match &ev.arg {
                    OpArg::Global { module, name } => {
                        match self.record_import(module, name, ResolvedBy::Global, off) {
                            Some(r) => SymbolicValue::Import(r),
                            Option::None => SymbolicValue::Opaque,
                        }
                    }
                    _ => SymbolicValue::Opaque,
                };
                self.push(Rc::new(v), off);
            }
            StackGlobal => {
                let name = self.pop(ev);
                let module = self.pop(ev);
                let v = match (&*module, &*name) {
                    (SymbolicValue::Str(m), SymbolicValue::Str(n)) => {
                        match self.record_import(m, n, ResolvedBy::StackGlobal, off) {
                            Some(r) => SymbolicValue::Import(r),
                            Option::None => SymbolicValue::Opaque,
                        }
                    }
                    _ => {
                        self.unresolved(off, "STACK_GLOBAL operands are not string literals".into());
                        SymbolicValue::Opaque
                    }
                };
                self.push(Rc::new(v), off);
            }
            Reduce => {
                let args = self.pop(ev);
                let f = self.pop(ev);
                let r = self.call(&f, call_args(&args), CallKind::Reduce, off);
                self.push(r, off);
            }
            NewObj => {
                let args = self.pop(ev);
                let cls = self.pop(ev);
                let r = self.call(&cls, call_args(&args), CallKind::NewObj, off);
                self.push(r, off);
            }
            NewObjEx => {
                let kwargs = self.pop(ev);
                let args = self.pop(ev);
                let cls = self.pop(ev);
                let mut a = call_args(&args);
                a.push(summarize(&kwargs, 1));
                let r = self.call(&cls, a, CallKind::NewObjEx, off);
                self.push(r, off);
            }
            Obj => {
                let items = self.pop_mark(ev);
                if items.is_empty() {
                    self.anomaly(AnomalyKind::StackUnderflow, off, "OBJ without class");
                    let o = self.machine.opaque.clone();
                    self.push(o, off);
                } else {
                    let args: Vec<ArgSummary> = items[1..].iter().map(|i| summarize(i, 1)).collect();
                    let r = self.call(&items[0], args, CallKind::Obj, off);
                    self.push(r, off);
                }
            }
            Inst => {
                let items = self.pop_mark(ev);
                let args: Vec<ArgSummary> = items.iter().map(|i| summarize(i, 1)).collect();
                let v = match &ev.arg {
                    OpArg::Global { module, name } => match self.record_import(module, name, ResolvedBy::Inst, off) {
                        Some(r) => self.call(&SymbolicValue::Import(r), args, CallKind::Inst, off),
                        Option::None => self.machine.opaque.clone(),
                    },
                    _ => self.machine.opaque.clone(),
                };
                self.push(v, off);
            }
            Build => {
                let state = self.pop(ev);
                if let Some(i) = self.top(ev) {
                    let target = self.machine.stack[i].clone();
                    let callee = match &*target {
                        SymbolicValue::Import(r) => Some(r.clone()),
                        SymbolicValue::CallResult { callee, .. } => Some(callee.clone()),
                        _ => Option::None,
                    };
                    if let Some(callee) = callee {
                        if WRAPPER_NAMES.contains(&callee.fqname().as_str())
                            && matches!(&*target, SymbolicValue::CallResult { .. })
                        {
                            self.inline_array = inline_array(&state);
                        }
                        self.result.calls.push(CallEvent {
                            callee,
                            kind: CallKind::Build,
                            offset: off,
                            args: vec![summarize(&state, 1)],
                            origin: Option::None,
                            attr: Option::None,
                        });
                    }
                }
            }
        }
        !self.halted
    }
}

/// Emulate a pre-decoded event list. Every STOP starts a fresh machine, as a
/// new `Unpickler.load` call would.
pub fn emulate(events: &[OpcodeEvent]) -> EmulationResult {
    let limits = VmLimits::default();
    let mut em = Emulator::new(&limits);
    for ev in events {
        if !em.feed(ev) {
            break;
        }
    }
    em.finish()
}

/// Decode and emulate in one pass without retaining events.
pub fn emulate_stream(stream: &[u8], limits: &VmLimits) -> EmulationResult {
    emulate_segments(stream, limits, usize::MAX).0
}

/// Emulate at most `max_segments` pickles from the start of `stream`.
/// Also returns how many bytes were consumed.
pub fn emulate_segments(stream: &[u8], limits: &VmLimits, max_segments: usize) -> (EmulationResult, usize) {
    segments_at(stream, limits, max_segments, 0)
}

/// Nesting of inline object arrays followed before giving up.
const MAX_INLINE_DEPTH: usize = 8;

fn segments_at(stream: &[u8], limits: &VmLimits, max_segments: usize, depth: usize) -> (EmulationResult, usize) {
    let mut em = Emulator::new(limits);
    let mut dec = Decoder::new(stream, limits);
    let mut stops = 0usize;
    if max_segments == 0 {
        return (em.finish(), 0);
    }
    while let Some(step) = dec.next() {
        match step {
            Step::Event(ev) => {
                let stop = ev.opcode == Opcode::Stop;
                if !em.feed(&ev) {
                    break;
                }
                if let Some(a) = em.take_inline_array() {
                    skip_inline_array(stream, limits, &mut em, &mut dec, a, depth);
                }
                if stop {
                    stops += 1;
                    if stops >= max_segments {
                        break;
                    }
                }
            }
            Step::Warning(a) | Step::Fatal(a) => em.note(a),
        }
    }
    (em.finish(), dec.position())
}

/// Step the decoder over an inline array payload. A layout that does not fit
/// the stream is noted and nothing is skipped.
fn skip_inline_array(
    stream: &[u8],
    limits: &VmLimits,
    em: &mut Emulator,
    dec: &mut Decoder,
    a: InlineArray,
    depth: usize,
) {
    let start = Decoder::position(dec);
    let mut p = start;
    if a.padded && a.payload != ArrayPayload::Pickle {
        let Some(pad) = stream.get(p) else { return };
        p += 1 + *pad as usize;
    }
    let end = match a.payload {
        ArrayPayload::Raw(n) => (p as u64).checked_add(n).filter(|e| *e <= stream.len() as u64).map(|e| e as usize),
        ArrayPayload::Pickle if p < stream.len() && depth < MAX_INLINE_DEPTH => {
            let (r, used) = segments_at(&stream[p..], limits, 1, depth + 1);
            let end = p + used;
            em.absorb_nested(r, p as u64);
            Some(end)
        }
        ArrayPayload::Pickle if depth >= MAX_INLINE_DEPTH => return,
        ArrayPayload::Pickle => None,
    };
    match end {
        Some(e) => dec.seek(e),
        None => em.note(Anomaly::new(
            AnomalyKind::TruncatedStream,
            start as u64,
            "inline array payload runs past end of stream",
        )),
    }
}
