//! Total, non-executing pickle disassembly.

use super::opcode::{ArgKind, Opcode};
use crate::anomaly::{Anomaly, AnomalyKind};
use serde::{Deserialize, Serialize};

/// Decoded inline argument of one opcode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum OpArg {
    None,
    Int(i128),
    /// Integer too wide for `i128`; little-endian two's complement bytes
    /// (binary forms) or the decimal text (text forms).
    BigInt(String),
    Bool(bool),
    Float(f64),
    Str(String),
    Bytes(Vec<u8>),
    Global { module: String, name: String },
    /// Argument bytes that could not be interpreted; kept verbatim.
    Raw(String),
}

impl OpArg {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            OpArg::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i128> {
        match self {
            OpArg::Int(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpcodeEvent {
    pub offset: u64,
    /// Number of bytes occupied by opcode and argument.
    pub len: u64,
    pub opcode: Opcode,
    pub arg: OpArg,
    /// Protocol in effect: the last PROTO argument seen so far, else 0.
    pub proto: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// Index of the first event of the segment.
    pub first_event: usize,
    /// One past the last event of the segment.
    pub end_event: usize,
    pub start_offset: u64,
    pub end_offset: u64,
    /// True when the segment ended in STOP.
    pub complete: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Disassembly {
    pub events: Vec<OpcodeEvent>,
    pub anomalies: Vec<Anomaly>,
    pub segments: Vec<Segment>,
}

/// Caps protecting disassembly and emulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VmLimits {
    pub max_stream_bytes: u64,
    pub max_stack: usize,
    pub max_memo: usize,
    /// Cap on events collected by [`disassemble`]; streaming emulation does
    /// not retain events and is bounded by `max_stream_bytes` only.
    pub max_events: usize,
}

impl Default for VmLimits {
    fn default() -> Self {
        VmLimits {
            max_stream_bytes: 1 << 30,
            max_stack: 100_000,
            max_memo: 1_000_000,
            max_events: 10_000_000,
        }
    }
}

/// One step of the streaming decoder.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Event(OpcodeEvent),
    /// Non-fatal problem with the event that follows (malformed text argument).
    Warning(Anomaly),
    /// Decoding cannot continue; no more steps follow.
    Fatal(Anomaly),
}

/// Streaming decoder. Keeps going after STOP so trailing pickles (as used by
/// legacy checkpoints) are decoded as further segments.
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
    proto: u8,
    done: bool,
    pending: Option<OpcodeEvent>,
    budget_note: Option<Anomaly>,
    /// A newer-protocol opcode was already reported in this pickle.
    proto_noted: bool,
}

impl<'a> Decoder<'a> {
    pub fn new(stream: &'a [u8], limits: &VmLimits) -> Self {
        let cap = usize::try_from(limits.max_stream_bytes).unwrap_or(usize::MAX);
        let (buf, budget_note) = if stream.len() > cap {
            (
                &stream[..cap],
                Some(Anomaly::new(
                    AnomalyKind::StreamBudgetExceeded,
                    cap as u64,
                    format!("stream of {} bytes exceeds budget of {} bytes", stream.len(), cap),
                )),
            )
        } else {
            (stream, None)
        };
        Decoder { buf, pos: 0, proto: 0, done: false, pending: None, budget_note, proto_noted: false }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    /// Resume decoding at `pos`, which callers take from bytes they consumed
    /// themselves.
    pub fn seek(&mut self, pos: usize) {
        self.pos = pos.min(self.buf.len());
    }

    fn fatal(&mut self, kind: AnomalyKind, offset: usize, detail: impl Into<String>) -> Step {
        self.done = true;
        Step::Fatal(Anomaly::new(kind, offset as u64, detail))
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        if end > self.buf.len() {
            return None;
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Some(s)
    }

    fn line(&mut self) -> Option<&'a [u8]> {
        let rest = &self.buf[self.pos..];
        let nl = rest.iter().position(|&b| b == b'\n')?;
        self.pos += nl + 1;
        Some(&rest[..nl])
    }

    fn take_len(&mut self, width: usize) -> Option<u64> {
        let b = self.take(width)?;
        let mut v = [0u8; 8];
        v[..width].copy_from_slice(b);
        Some(u64::from_le_bytes(v))
    }
}

impl<'a> Iterator for Decoder<'a> {
    type Item = Step;

    fn next(&mut self) -> Option<Step> {
        if let Some(ev) = self.pending.take() {
            return Some(Step::Event(ev));
        }
        if self.done {
            return None;
        }
        if self.pos >= self.buf.len() {
            self.done = true;
            return self.budget_note.take().map(Step::Fatal);
        }
        let start = self.pos;
        let byte = self.buf[start];
        let Some(op) = Opcode::from_byte(byte) else {
            return Some(self.fatal(
                AnomalyKind::UnknownOpcode,
                start,
                format!("unknown opcode byte 0x{byte:02x}"),
            ));
        };
        self.pos += 1;
        let truncated = |d: &mut Self| {
            d.fatal(AnomalyKind::TruncatedStream, start, format!("{} argument runs past end of stream", op.name()))
        };
        let mut warning: Option<Anomaly> = None;
        let arg = match op.arg_kind() {
            ArgKind::None => OpArg::None,
            ArgKind::Uint1 => match self.take(1) {
                Some(b) => OpArg::Int(b[0] as i128),
                None => return Some(truncated(self)),
            },
            ArgKind::Uint2 => match self.take_len(2) {
                Some(v) => OpArg::Int(v as i128),
                None => return Some(truncated(self)),
            },
            ArgKind::Uint4 => match self.take_len(4) {
                Some(v) => OpArg::Int(v as i128),
                None => return Some(truncated(self)),
            },
            ArgKind::Uint8 => match self.take_len(8) {
                Some(v) => OpArg::Int(v as i128),
                None => return Some(truncated(self)),
            },
            ArgKind::Int4 => match self.take(4) {
                Some(b) => OpArg::Int(i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as i128),
                None => return Some(truncated(self)),
            },
            ArgKind::Long1 | ArgKind::Long4 => {
                let n = if op.arg_kind() == ArgKind::Long1 {
                    match self.take(1) {
                        Some(b) => b[0] as i64,
                        None => return Some(truncated(self)),
                    }
                } else {
                    match self.take(4) {
                        Some(b) => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as i64,
                        None => return Some(truncated(self)),
                    }
                };
                if n < 0 {
                    return Some(self.fatal(AnomalyKind::MalformedArgument, start, "negative LONG4 byte count"));
                }
                match self.take(n as usize) {
                    Some(b) => decode_long_le(b),
                    None => return Some(truncated(self)),
                }
            }
            ArgKind::DecimalNlShort => {
                let Some(line) = self.line() else { return Some(truncated(self)) };
                let text = String::from_utf8_lossy(line).into_owned();
                if op == Opcode::Int && text == "00" {
                    OpArg::Bool(false)
                } else if op == Opcode::Int && text == "01" {
                    OpArg::Bool(true)
                } else {
                    match parse_decimal(&text) {
                        Some(a) => a,
                        None => {
                            warning = Some(Anomaly::new(
                                AnomalyKind::MalformedArgument,
                                start as u64,
                                format!("{} argument {:?} is not a decimal integer", op.name(), clip(&text)),
                            ));
                            OpArg::Raw(text)
                        }
                    }
                }
            }
            ArgKind::DecimalNlLong => {
                let Some(line) = self.line() else { return Some(truncated(self)) };
                let text = String::from_utf8_lossy(line).into_owned();
                let stripped = text.strip_suffix('L').unwrap_or(&text);
                match parse_decimal(stripped) {
                    Some(a) => a,
                    None => {
                        warning = Some(Anomaly::new(
                            AnomalyKind::MalformedArgument,
                            start as u64,
                            format!("LONG argument {:?} is not a decimal integer", clip(&text)),
                        ));
                        OpArg::Raw(text)
                    }
                }
            }
            ArgKind::FloatNl => {
                let Some(line) = self.line() else { return Some(truncated(self)) };
                let text = String::from_utf8_lossy(line).into_owned();
                match text.trim().parse::<f64>() {
                    Ok(v) => OpArg::Float(v),
                    Err(_) => {
                        warning = Some(Anomaly::new(
                            AnomalyKind::MalformedArgument,
                            start as u64,
                            format!("FLOAT argument {:?} is not a number", clip(&text)),
                        ));
                        OpArg::Raw(text)
                    }
                }
            }
            ArgKind::Float8 => match self.take(8) {
                Some(b) => OpArg::Float(f64::from_be_bytes(b.try_into().unwrap())),
                None => return Some(truncated(self)),
            },
            ArgKind::StringNl => {
                let Some(line) = self.line() else { return Some(truncated(self)) };
                match unquote(line) {
                    Some(body) => OpArg::Str(String::from_utf8_lossy(&escape_decode(body)).into_owned()),
                    None => {
                        let text = String::from_utf8_lossy(line).into_owned();
                        warning = Some(Anomaly::new(
                            AnomalyKind::MalformedArgument,
                            start as u64,
                            format!("STRING argument {:?} is not quoted", clip(&text)),
                        ));
                        OpArg::Raw(text)
                    }
                }
            }
            ArgKind::StringNlNoescape => {
                let Some(line) = self.line() else { return Some(truncated(self)) };
                OpArg::Str(String::from_utf8_lossy(line).into_owned())
            }
            ArgKind::StringNlNoescapePair => {
                let Some(m) = self.line() else { return Some(truncated(self)) };
                let Some(n) = self.line() else { return Some(truncated(self)) };
                OpArg::Global {
                    module: String::from_utf8_lossy(m).into_owned(),
                    name: String::from_utf8_lossy(n).into_owned(),
                }
            }
            ArgKind::UnicodeNl => {
                let Some(line) = self.line() else { return Some(truncated(self)) };
                OpArg::Str(raw_unicode_escape_decode(line))
            }
            ArgKind::String1 | ArgKind::String4 | ArgKind::Unicode1 | ArgKind::Unicode4 | ArgKind::Unicode8
            | ArgKind::Bytes1 | ArgKind::Bytes4 | ArgKind::Bytes8 | ArgKind::ByteArray8 => {
                let kind = op.arg_kind();
                let width = match kind {
                    ArgKind::String1 | ArgKind::Unicode1 | ArgKind::Bytes1 => 1,
                    ArgKind::String4 | ArgKind::Unicode4 | ArgKind::Bytes4 => 4,
                    _ => 8,
                };
                let Some(mut n) = self.take_len(width) else { return Some(truncated(self)) };
                if kind == ArgKind::String4 && n > i32::MAX as u64 {
                    return Some(self.fatal(AnomalyKind::MalformedArgument, start, "negative BINSTRING length"));
                }
                if n > (self.buf.len() - self.pos) as u64 {
                    n = u64::MAX;
                }
                let Some(body) = (if n == u64::MAX { None } else { self.take(n as usize) }) else {
                    return Some(truncated(self));
                };
                match kind {
                    ArgKind::Unicode1 | ArgKind::Unicode4 | ArgKind::Unicode8 => {
                        OpArg::Str(String::from_utf8_lossy(body).into_owned())
                    }
                    ArgKind::String1 | ArgKind::String4 => OpArg::Str(body.iter().map(|&b| b as char).collect()),
                    _ => OpArg::Bytes(body.to_vec()),
                }
            }
        };
        if op == Opcode::Proto {
            if let OpArg::Int(v) = arg {
                self.proto = v.clamp(0, 255) as u8;
            }
        }
        // protocol 1 streams carry no PROTO, so 1 is the floor
        if op.proto() > self.proto.max(1) && op != Opcode::Proto && !self.proto_noted {
            self.proto_noted = true;
            if warning.is_none() {
                warning = Some(Anomaly::new(
                    AnomalyKind::ProtocolMismatch,
                    start as u64,
                    format!("{} needs protocol {} but the stream declares {}", op.name(), op.proto(), self.proto),
                ));
            }
        }
        if op == Opcode::Stop {
            self.proto_noted = false;
        }
        let ev = OpcodeEvent {
            offset: start as u64,
            len: (self.pos - start) as u64,
            opcode: op,
            arg,
            proto: self.proto,
        };
        match warning {
            Some(w) => {
                self.pending = Some(ev);
                Some(Step::Warning(w))
            }
            None => Some(Step::Event(ev)),
        }
    }
}

fn clip(s: &str) -> String {
    if s.chars().count() > 64 {
        let mut out: String = s.chars().take(64).collect();
        out.push_str("...");
        out
    } else {
        s.to_string()
    }
}

fn parse_decimal(text: &str) -> Option<OpArg> {
    let t = text.trim();
    let digits = t.strip_prefix(['-', '+']).unwrap_or(t);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    match t.parse::<i128>() {
        Ok(v) => Some(OpArg::Int(v)),
        Err(_) => Some(OpArg::BigInt(t.to_string())),
    }
}

fn decode_long_le(b: &[u8]) -> OpArg {
    if b.is_empty() {
        return OpArg::Int(0);
    }
    if b.len() <= 16 {
        let neg = b[b.len() - 1] & 0x80 != 0;
        let mut buf = [if neg { 0xffu8 } else { 0 }; 16];
        buf[..b.len()].copy_from_slice(b);
        OpArg::Int(i128::from_le_bytes(buf))
    } else {
        OpArg::BigInt(format!("0x{}", hex::encode(b)))
    }
}

fn unquote(line: &[u8]) -> Option<&[u8]> {
    if line.len() >= 2 {
        let q = line[0];
        if (q == b'\'' || q == b'"') && line[line.len() - 1] == q {
            return Some(&line[1..line.len() - 1]);
        }
    }
    None
}

/// Python `escape_decode` for protocol 0 STRING bodies.
fn escape_decode(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len());
    let mut i = 0;
    while i < body.len() {
        let c = body[i];
        if c != b'\\' || i + 1 >= body.len() {
            out.push(c);
            i += 1;
            continue;
        }
        let e = body[i + 1];
        i += 2;
        match e {
            b'\n' => {}
            b'\\' => out.push(b'\\'),
            b'\'' => out.push(b'\''),
            b'"' => out.push(b'"'),
            b'a' => out.push(7),
            b'b' => out.push(8),
            b'f' => out.push(12),
            b'n' => out.push(b'\n'),
            b'r' => out.push(b'\r'),
            b't' => out.push(b'\t'),
            b'v' => out.push(11),
            b'x' if i + 2 <= body.len() => {
                match u8::from_str_radix(std::str::from_utf8(&body[i..i + 2]).unwrap_or("zz"), 16) {
                    Ok(v) => {
                        out.push(v);
                        i += 2;
                    }
                    Err(_) => out.extend_from_slice(b"\\x"),
                }
            }
            b'0'..=b'7' => {
                let mut v = (e - b'0') as u32;
                let mut n = 1;
                while n < 3 && i < body.len() && (b'0'..=b'7').contains(&body[i]) {
                    v = v * 8 + (body[i] - b'0') as u32;
                    i += 1;
                    n += 1;
                }
                out.push((v & 0xff) as u8);
            }
            other => {
                out.push(b'\\');
                out.push(other);
            }
        }
    }
    out
}

/// Python `raw-unicode-escape` decoding: `\uXXXX` and `\UXXXXXXXX`, every
/// other byte maps to the code point of the same value.
fn raw_unicode_escape_decode(line: &[u8]) -> String {
    let mut out = String::with_capacity(line.len());
    let mut i = 0;
    while i < line.len() {
        if line[i] == b'\\' && i + 1 < line.len() && (line[i + 1] == b'u' || line[i + 1] == b'U') {
            let w = if line[i + 1] == b'u' { 4 } else { 8 };
            if i + 2 + w <= line.len() {
                if let Some(ch) = std::str::from_utf8(&line[i + 2..i + 2 + w])
                    .ok()
                    .and_then(|h| u32::from_str_radix(h, 16).ok())
                    .and_then(char::from_u32)
                {
                    out.push(ch);
                    i += 2 + w;
                    continue;
                }
            }
        }
        out.push(line[i] as char);
        i += 1;
    }
    out
}

/// Decode every opcode of `stream`. Never fails: anything the decoder cannot
/// make sense of ends decoding with an anomaly naming the offset.
pub fn disassemble(stream: &[u8]) -> Disassembly {
    disassemble_with(stream, &VmLimits::default())
}

pub fn disassemble_with(stream: &[u8], limits: &VmLimits) -> Disassembly {
    let mut out = Disassembly::default();
    let mut seg_first = 0usize;
    let mut seg_start = 0u64;
    let mut decoder = Decoder::new(stream, limits);
    for step in decoder.by_ref() {
        match step {
            Step::Event(ev) => {
                if out.events.len() >= limits.max_events {
                    out.anomalies.push(Anomaly::new(
                        AnomalyKind::StreamBudgetExceeded,
                        ev.offset,
                        format!("more than {} opcodes", limits.max_events),
                    ));
                    break;
                }
                let is_stop = ev.opcode == Opcode::Stop;
                let end = ev.offset + ev.len;
                out.events.push(ev);
                if is_stop {
                    out.segments.push(Segment {
                        first_event: seg_first,
                        end_event: out.events.len(),
                        start_offset: seg_start,
                        end_offset: end,
                        complete: true,
                    });
                    seg_first = out.events.len();
                    seg_start = end;
                }
            }
            Step::Warning(a) => out.anomalies.push(a),
            Step::Fatal(a) => out.anomalies.push(a),
        }
    }
    if seg_first < out.events.len() {
        let last = out.events.last().unwrap();
        out.segments.push(Segment {
            first_event: seg_first,
            end_event: out.events.len(),
            start_offset: seg_start,
            end_offset: last.offset + last.len,
            complete: false,
        });
    }
    out
}
