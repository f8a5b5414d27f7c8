//! Recursive unwrapping of archives and compression layers down to pickle
//! streams, by content rather than by file extension.

pub mod codec;
pub mod npy;
pub mod path;
pub mod sniff;
pub mod tar;
pub mod torch;
pub mod zip;

use crate::anomaly::{Anomaly, AnomalyKind};
use crate::pickle::emulate::{emulate_segments, emulate_stream, EmulationResult};
use crate::pickle::legacy::{detect_legacy_magic, LegacyMagic};
use crate::pickle::VmLimits;
pub use path::{LoadingPathLabel, LOADING_PATH_ROWS};
use serde::{Deserialize, Serialize};
pub use sniff::{sniff, FormatTag};
use std::cell::Cell;

pub const GIB: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkConfig {
    /// Deepest level whose containers are still expanded (root is 0).
    pub max_depth: usize,
    /// Decoded bytes allowed for a single layer.
    pub node_budget: u64,
    /// Decoded bytes allowed for the whole input.
    pub scan_budget: u64,
    /// Members read from one archive.
    pub max_members: usize,
    /// Nodes in the whole tree.
    pub max_nodes: usize,
    pub vm: VmLimits,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            max_depth: 8,
            node_budget: GIB,
            scan_budget: 4 * GIB,
            max_members: 100_000,
            max_nodes: 1_000_000,
            vm: VmLimits::default(),
        }
    }
}

/// How a pickle-bearing member was interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PickleLayout {
    /// One or more back-to-back pickles.
    Stream,
    /// Legacy checkpoint header pickles followed by raw storage bytes.
    LegacyCheckpoint,
    /// `storages` member of a legacy tar checkpoint.
    LegacyStorages,
    /// `tensors` member of a legacy tar checkpoint.
    LegacyTensors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickleResult {
    pub layout: PickleLayout,
    /// Offsets in `emulation` are relative to the node's bytes; this is
    /// where the pickle starts within them (non-zero for `.npy`).
    pub base_offset: u64,
    pub emulation: EmulationResult,
    pub legacy: LegacyMagic,
}

impl PickleResult {
    pub fn anomalies(&self) -> impl Iterator<Item = &Anomaly> {
        self.emulation.anomalies.iter().chain(self.legacy.anomalies.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerNode {
    pub format: FormatTag,
    /// Archive member name; empty for the root and for codec layers.
    pub member_name: String,
    pub byte_len: u64,
    pub children: Vec<ContainerNode>,
    pub pickle: Option<PickleResult>,
    pub anomalies: Vec<Anomaly>,
    /// Why the node was deliberately not examined.
    pub skipped: Option<String>,
}

impl ContainerNode {
    fn new(format: FormatTag, member_name: &str, byte_len: usize) -> Self {
        ContainerNode {
            format,
            member_name: member_name.to_string(),
            byte_len: byte_len as u64,
            children: Vec::new(),
            pickle: None,
            anomalies: Vec::new(),
            skipped: None,
        }
    }

    /// Pre-order visit with the ancestry (root first, node last).
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&[&'a ContainerNode])) {
        fn go<'a>(n: &'a ContainerNode, stack: &mut Vec<&'a ContainerNode>, f: &mut dyn FnMut(&[&'a ContainerNode])) {
            stack.push(n);
            f(stack);
            for c in &n.children {
                go(c, stack, f);
            }
            stack.pop();
        }
        let mut stack = Vec::new();
        go(self, &mut stack, f);
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }

    /// Every anomaly in the tree, container and stream alike.
    pub fn anomaly_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |path| {
            let node = path[path.len() - 1];
            n += node.anomalies.len() + node.pickle.as_ref().map_or(0, |p| p.anomalies().count());
        });
        n
    }
}

/// Member path of a node: archive member names joined with `!`.
pub fn member_path(ancestry: &[&ContainerNode]) -> String {
    ancestry.iter().filter(|n| !n.member_name.is_empty()).map(|n| n.member_name.as_str()).collect::<Vec<_>>().join("!")
}

/// Label for the node at the end of `ancestry`.
pub fn label_path(ancestry: &[&ContainerNode]) -> LoadingPathLabel {
    LoadingPathLabel::from_chain(ancestry.iter().map(|n| n.format).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkStats {
    pub nodes: u64,
    pub decoded_bytes: u64,
}

pub struct Walker {
    config: WalkConfig,
    decoded: Cell<u64>,
    nodes: Cell<usize>,
    node_cap_noted: Cell<bool>,
}

fn normalized_member(name: &str) -> &str {
    name.trim_start_matches("./").trim_end_matches('/')
}

impl Walker {
    pub fn new(config: WalkConfig) -> Self {
        Walker { config, decoded: Cell::new(0), nodes: Cell::new(0), node_cap_noted: Cell::new(false) }
    }

    pub fn stats(&self) -> WalkStats {
        WalkStats { nodes: self.nodes.get() as u64, decoded_bytes: self.decoded.get() }
    }

    /// Unwrap a root input.
    pub fn walk_root(&self, bytes: &[u8]) -> ContainerNode {
        let mut node = self.walk(bytes, "", 0, None);
        if bytes.is_empty() {
            node.anomalies.push(Anomaly::new(AnomalyKind::EmptyInput, 0, "input is empty"));
        }
        node
    }

    fn scan_remaining(&self) -> u64 {
        self.config.scan_budget.saturating_sub(self.decoded.get())
    }

    pub fn walk(&self, bytes: &[u8], name: &str, depth: usize, hint: Option<PickleLayout>) -> ContainerNode {
        self.nodes.set(self.nodes.get() + 1);
        let format = if hint.is_some() { FormatTag::Pkl } else { sniff(bytes) };
        let mut node = ContainerNode::new(format, name, bytes.len());
        match format {
            FormatTag::Pkl => node.pickle = Some(self.scan_pickle(bytes, 0, hint.unwrap_or(PickleLayout::Stream))),
            FormatTag::Npy => match npy::parse_npy(bytes) {
                Err(e) => node.anomalies.push(Anomaly::new(AnomalyKind::NpyHeader, 0, e)),
                Ok(h) if h.object_dtype => {
                    node.pickle = Some(self.scan_pickle(&bytes[h.data_offset..], h.data_offset as u64, PickleLayout::Stream))
                }
                Ok(_) => {}
            },
            FormatTag::Unknown => {}
            f if depth >= self.config.max_depth => {
                node.anomalies.push(Anomaly::new(
                    AnomalyKind::DepthExceeded,
                    0,
                    format!("{f} layer at depth {depth} exceeds limit {}", self.config.max_depth),
                ));
            }
            _ if self.nodes.get() >= self.config.max_nodes => {
                if !self.node_cap_noted.replace(true) {
                    node.anomalies.push(Anomaly::new(
                        AnomalyKind::MemberLimitExceeded,
                        0,
                        format!("container tree exceeds {} nodes", self.config.max_nodes),
                    ));
                }
            }
            FormatTag::Zip => self.expand_zip(bytes, depth, &mut node),
            FormatTag::Tar => self.expand_tar(bytes, depth, &mut node),
            codec => self.expand_codec(codec, bytes, depth, &mut node),
        }
        node
    }

    fn scan_pickle(&self, bytes: &[u8], base: u64, layout: PickleLayout) -> PickleResult {
        let vm = &self.config.vm;
        let legacy = detect_legacy_magic(bytes);
        let (layout, mut emulation) = match layout {
            PickleLayout::LegacyStorages => match torch::scan_storages(bytes, vm) {
                Some(r) => (layout, r),
                None => (PickleLayout::Stream, emulate_stream(bytes, vm)),
            },
            PickleLayout::LegacyTensors => match torch::scan_tensors(bytes, vm) {
                Some(r) => (layout, r),
                None => (PickleLayout::Stream, emulate_stream(bytes, vm)),
            },
            _ if legacy.is_torch_legacy => {
                let (r, _) = emulate_segments(bytes, vm, torch::LEGACY_STREAM_PICKLES);
                (PickleLayout::LegacyCheckpoint, r)
            }
            _ => (PickleLayout::Stream, emulate_stream(bytes, vm)),
        };
        if base > 0 {
            emulation.rebase(base);
        }
        let mut legacy = legacy;
        for a in legacy.anomalies.iter_mut() {
            a.offset += base;
        }
        PickleResult { layout, base_offset: base, emulation, legacy }
    }

    fn expand_codec(&self, codec: FormatTag, bytes: &[u8], depth: usize, node: &mut ContainerNode) {
        let remaining = self.scan_remaining();
        let limit = self.config.node_budget.min(remaining);
        let d = codec::decode(codec, bytes, usize::try_from(limit).unwrap_or(usize::MAX));
        self.decoded.set(self.decoded.get() + d.data.len() as u64);
        if d.truncated {
            let kind = if self.config.node_budget <= remaining {
                AnomalyKind::NodeBudgetExceeded
            } else {
                AnomalyKind::ScanBudgetExceeded
            };
            node.anomalies.push(Anomaly::new(kind, 0, format!("{codec} layer decodes past {limit} bytes")));
        }
        if let Some(e) = d.error {
            node.anomalies.push(Anomaly::new(AnomalyKind::DecodeError, 0, format!("{codec}: {e}")));
        }
        if !d.data.is_empty() {
            node.children.push(self.walk(&d.data, "", depth + 1, None));
        }
    }

    fn expand_zip(&self, bytes: &[u8], depth: usize, node: &mut ContainerNode) {
        let limits = zip::ZipLimits {
            member_bytes: usize::try_from(self.config.node_budget).unwrap_or(usize::MAX),
            total_bytes: self.scan_remaining(),
            max_members: self.config.max_members,
        };
        let r = zip::read_zip(bytes, &limits);
        self.decoded.set(self.decoded.get() + r.decoded_bytes);
        node.anomalies.extend(r.anomalies);
        // torch zip checkpoints keep raw tensor storage under <prefix>data/<n>
        let storage_prefixes: Vec<String> = r
            .members
            .iter()
            .filter_map(|m| m.name.strip_suffix("data.pkl").map(|p| format!("{p}data/")))
            .collect();
        for m in &r.members {
            let data = m.bytes(bytes);
            let is_storage = storage_prefixes.iter().any(|p| {
                m.name.strip_prefix(p.as_str()).is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|c| c.is_ascii_digit()))
            });
            let mut child = if is_storage {
                self.nodes.set(self.nodes.get() + 1);
                let mut c = ContainerNode::new(FormatTag::Unknown, &m.name, data.len());
                c.skipped = Some("raw tensor storage".into());
                c
            } else {
                self.walk(data, &m.name, depth + 1, None)
            };
            child.anomalies.splice(0..0, m.anomalies.iter().cloned());
            node.children.push(child);
        }
    }

    fn expand_tar(&self, bytes: &[u8], depth: usize, node: &mut ContainerNode) {
        let r = tar::read_tar(bytes, self.config.max_members);
        node.anomalies.extend(r.anomalies);
        let names: Vec<&str> = r.members.iter().map(|m| normalized_member(&m.name)).collect();
        let legacy = ["storages", "tensors", "pickle"].iter().all(|n| names.contains(n));
        for m in &r.members {
            let hint = if legacy {
                match normalized_member(&m.name) {
                    "storages" => Some(PickleLayout::LegacyStorages),
                    "tensors" => Some(PickleLayout::LegacyTensors),
                    "pickle" => Some(PickleLayout::Stream),
                    _ => None,
                }
            } else {
                None
            };
            node.children.push(self.walk(&bytes[m.start..m.end], &m.name, depth + 1, hint));
        }
    }
}

/// Unwrap `bytes` as a root input with a fresh budget.
pub fn unwrap(bytes: &[u8], config: &WalkConfig) -> ContainerNode {
    Walker::new(*config).walk_root(bytes)
}
