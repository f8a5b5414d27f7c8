//! Recognition of the legacy (pre-zip) torch checkpoint header: a stream of
//! back-to-back pickles starting with a magic integer and a protocol number.

use super::disasm::{Decoder, OpArg, OpcodeEvent, Step, VmLimits};
use super::opcode::Opcode;
use crate::anomaly::{Anomaly, AnomalyKind};
use serde::{Deserialize, Serialize};

pub const LEGACY_MAGIC: i128 = 0x1950a86a20f9469cfc6c;
pub const LEGACY_PROTOCOL_VERSION: i128 = 1001;

/// Magic literals longer than this are never evaluated.
const MAX_LITERAL_TEXT: usize = 40;
/// Events examined per header pickle.
const MAX_HEADER_EVENTS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegacyMagic {
    pub is_torch_legacy: bool,
    /// Literal text of the integer the first pickle returns, when it has one.
    pub magic_literal: Option<String>,
    pub anomalies: Vec<Anomaly>,
}

/// Events of the first `n` segments, without PROTO and FRAME.
fn leading_segments(stream: &[u8], n: usize) -> Vec<Vec<OpcodeEvent>> {
    let limits = VmLimits::default();
    let mut segs: Vec<Vec<OpcodeEvent>> = vec![Vec::new()];
    for step in Decoder::new(stream, &limits) {
        let Step::Event(ev) = step else {
            if matches!(step, Step::Fatal(_)) {
                break;
            }
            continue;
        };
        let stop = ev.opcode == Opcode::Stop;
        if !matches!(ev.opcode, Opcode::Proto | Opcode::Frame) {
            segs.last_mut().unwrap().push(ev);
        }
        if stop {
            if segs.len() == n {
                break;
            }
            segs.push(Vec::new());
        }
        if segs.last().unwrap().len() > MAX_HEADER_EVENTS {
            break;
        }
    }
    segs
}

/// The integer literal a segment returns: the literal right before STOP.
/// Anything the segment does first still runs under a real loader, so it
/// does not disqualify the header.
fn result_int(seg: &[OpcodeEvent]) -> Option<&OpcodeEvent> {
    match seg {
        [.., lit, stop] if lit.opcode.is_int_literal() && stop.opcode == Opcode::Stop => Some(lit),
        _ => None,
    }
}

fn literal_text(ev: &OpcodeEvent) -> String {
    match &ev.arg {
        OpArg::Int(v) => v.to_string(),
        OpArg::BigInt(s) | OpArg::Raw(s) => s.clone(),
        other => format!("{other:?}"),
    }
}

/// Inspect the leading pickles of `stream`. Evaluation is restricted to
/// plain decimal or binary integer literals; anything else (an arithmetic
/// expression, an oversized literal) is reported, never computed.
pub fn detect_legacy_magic(stream: &[u8]) -> LegacyMagic {
    let mut out = LegacyMagic { is_torch_legacy: false, magic_literal: None, anomalies: vec![] };
    if stream.is_empty() {
        return out;
    }
    let segs = leading_segments(stream, 2);
    let Some(lit) = segs.first().and_then(|s| result_int(s)) else {
        return out;
    };
    let text = literal_text(lit);
    out.magic_literal = Some(if text.chars().count() > MAX_LITERAL_TEXT {
        format!("{}...", text.chars().take(MAX_LITERAL_TEXT).collect::<String>())
    } else {
        text.clone()
    });
    let value = match &lit.arg {
        OpArg::Int(v) => Some(*v),
        OpArg::BigInt(_) => {
            out.anomalies.push(Anomaly::new(
                AnomalyKind::BadLegacyMagic,
                lit.offset,
                "leading integer literal is oversized",
            ));
            None
        }
        OpArg::Raw(_) => {
            out.anomalies.push(Anomaly::new(
                AnomalyKind::BadLegacyMagic,
                lit.offset,
                format!("leading integer literal {:?} is not numeric", out.magic_literal.as_deref().unwrap_or("")),
            ));
            None
        }
        _ => None,
    };
    if value != Some(LEGACY_MAGIC) {
        return out;
    }
    out.is_torch_legacy = true;
    let proto = segs.get(1).and_then(|s| result_int(s)).and_then(|e| e.arg.as_int());
    if proto != Some(LEGACY_PROTOCOL_VERSION) {
        out.anomalies.push(Anomaly::new(
            AnomalyKind::BadLegacyMagic,
            lit.offset,
            format!("legacy magic followed by protocol {proto:?}, expected {LEGACY_PROTOCOL_VERSION}"),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn long1(v: i128) -> Vec<u8> {
        let mut b = v.to_le_bytes().to_vec();
        while b.len() > 1 && b[b.len() - 1] == 0 && b[b.len() - 2] & 0x80 == 0 {
            b.pop();
        }
        let mut out = vec![0x80, 0x02, 0x8a, b.len() as u8];
        out.extend(b);
        out.push(b'.');
        out
    }

    fn header(magic: &[u8]) -> Vec<u8> {
        let mut s = magic.to_vec();
        s.extend_from_slice(b"\x80\x02M\xe9\x03.");
        s
    }

    #[test]
    fn real_header() {
        // the magic as the reference serializer writes it: LONG1 of 10 bytes
        let m = long1(LEGACY_MAGIC);
        assert_eq!(m.len(), 4 + 10 + 1);
        let r = detect_legacy_magic(&header(&m));
        assert!(r.is_torch_legacy);
        assert!(r.anomalies.is_empty());
    }

    #[test]
    fn arithmetic_literal_is_not_evaluated() {
        let r = detect_legacy_magic(&header(b"L9**99\n."));
        assert!(!r.is_torch_legacy);
        assert_eq!(r.magic_literal.as_deref(), Some("9**99"));
        assert_eq!(r.anomalies.len(), 1);
        assert_eq!(r.anomalies[0].kind, AnomalyKind::BadLegacyMagic);
    }

    #[test]
    fn decimal_text_magic() {
        let text = format!("L{}L\n.", LEGACY_MAGIC);
        assert!(detect_legacy_magic(&header(text.as_bytes())).is_torch_legacy);
    }

    #[test]
    fn oversized_literal() {
        let text = format!("L{}\n.", "9".repeat(500));
        let r = detect_legacy_magic(text.as_bytes());
        assert!(!r.is_torch_legacy);
        assert_eq!(r.anomalies[0].kind, AnomalyKind::BadLegacyMagic);
        assert!(r.magic_literal.unwrap().len() < 50);
    }

    #[test]
    fn ordinary_pickles_are_not_legacy() {
        assert!(!detect_legacy_magic(b"").is_torch_legacy);
        assert!(!detect_legacy_magic(b"\x80\x02K\x05.").is_torch_legacy);
        let r = detect_legacy_magic(b"\x80\x02cbuiltins\nprint\n.");
        assert!(!r.is_torch_legacy && r.magic_literal.is_none());
    }

    #[test]
    fn literal_after_other_ops() {
        // something runs first, then the bad literal is what the pickle returns
        let s = b"\x80\x02cbuiltins\nprint\nX\x01\x00\x00\x00x\x85R0L9**99\n.";
        let r = detect_legacy_magic(s);
        assert_eq!(r.magic_literal.as_deref(), Some("9**99"));
        assert_eq!(r.anomalies[0].kind, AnomalyKind::BadLegacyMagic);
    }

    #[test]
    fn wrong_protocol_version() {
        let mut s = long1(LEGACY_MAGIC);
        s.extend_from_slice(b"K\x07.");
        let r = detect_legacy_magic(&s);
        assert!(r.is_torch_legacy);
        assert_eq!(r.anomalies.len(), 1);
    }
}
