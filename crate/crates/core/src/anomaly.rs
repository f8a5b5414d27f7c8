use serde::{Deserialize, Serialize};
use std::fmt;

/// Everything the scanner could not parse cleanly. Anomalies never abort a
/// scan; they are attached to the stream or container node where they were
/// observed and push the verdict to at least UNSCANNABLE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    // pickle stream
    UnknownOpcode,
    TruncatedStream,
    MalformedArgument,
    StackUnderflow,
    MarkMissing,
    MemoMiss,
    UnresolvableImport,
    StackCapExceeded,
    MemoCapExceeded,
    StreamBudgetExceeded,
    UnsupportedProtocol,
    ProtocolMismatch,
    ExtensionRegistry,
    BadLegacyMagic,
    // container
    EmptyInput,
    DepthExceeded,
    NodeBudgetExceeded,
    ScanBudgetExceeded,
    MemberLimitExceeded,
    DecodeError,
    DoubleEocd,
    SizeMismatch,
    BadCentralDirectory,
    DiskNumber,
    CorruptExtraField,
    UnsupportedExtractVersion,
    CrcMismatch,
    UnsupportedMethod,
    Encrypted,
    NameMismatch,
    LocalOnlyMember,
    CentralOnlyMember,
    ZipResync,
    ZipUnreadable,
    TarChecksum,
    TarTruncated,
    NpyHeader,
    // driver
    IoError,
    WorkerPanic,
}

impl AnomalyKind {
    pub fn as_str(self) -> &'static str {
        use AnomalyKind::*;
        match self {
            UnknownOpcode => "unknown-opcode",
            TruncatedStream => "truncated-stream",
            MalformedArgument => "malformed-argument",
            StackUnderflow => "stack-underflow",
            MarkMissing => "mark-missing",
            MemoMiss => "memo-miss",
            UnresolvableImport => "unresolvable-import",
            StackCapExceeded => "stack-cap-exceeded",
            MemoCapExceeded => "memo-cap-exceeded",
            StreamBudgetExceeded => "stream-budget-exceeded",
            UnsupportedProtocol => "unsupported-protocol",
            ProtocolMismatch => "protocol-mismatch",
            ExtensionRegistry => "extension-registry",
            BadLegacyMagic => "bad-legacy-magic",
            EmptyInput => "empty-input",
            DepthExceeded => "depth-exceeded",
            NodeBudgetExceeded => "node-budget-exceeded",
            ScanBudgetExceeded => "scan-budget-exceeded",
            MemberLimitExceeded => "member-limit-exceeded",
            DecodeError => "decode-error",
            DoubleEocd => "double-eocd",
            SizeMismatch => "size-mismatch",
            BadCentralDirectory => "bad-central-directory",
            DiskNumber => "disk-number",
            CorruptExtraField => "corrupt-extra-field",
            UnsupportedExtractVersion => "unsupported-extract-version",
            CrcMismatch => "crc-mismatch",
            UnsupportedMethod => "unsupported-method",
            Encrypted => "encrypted",
            NameMismatch => "name-mismatch",
            LocalOnlyMember => "local-only-member",
            CentralOnlyMember => "central-only-member",
            ZipResync => "zip-resync",
            ZipUnreadable => "zip-unreadable",
            TarChecksum => "tar-checksum",
            TarTruncated => "tar-truncated",
            NpyHeader => "npy-header",
            IoError => "io-error",
            WorkerPanic => "worker-panic",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Anomaly {
    pub kind: AnomalyKind,
    /// Byte offset within the stream or member the anomaly refers to.
    pub offset: u64,
    pub detail: String,
}

impl Anomaly {
    pub fn new(kind: AnomalyKind, offset: u64, detail: impl Into<String>) -> Self {
        Anomaly { kind, offset, detail: detail.into() }
    }
}

impl fmt::Display for Anomaly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.kind, self.offset, self.detail)
    }
}
