//! Pickle bytecode: opcode table, disassembly, symbolic emulation and the
//! legacy checkpoint header check.

pub mod disasm;
pub mod emulate;
pub mod joblib;
pub mod legacy;
pub mod opcode;

pub use disasm::{disassemble, disassemble_with, Disassembly, OpArg, OpcodeEvent, Segment, VmLimits};
pub use emulate::{
    emulate, emulate_segments, emulate_stream, normalize_import, ArgSummary, CallEvent, CallKind, EmulationResult, ImportRef,
    ImportSite, ResolvedBy, SymbolicValue, UnresolvedImport,
};
pub use legacy::{detect_legacy_magic, LegacyMagic, LEGACY_MAGIC, LEGACY_PROTOCOL_VERSION};
pub use opcode::Opcode;
