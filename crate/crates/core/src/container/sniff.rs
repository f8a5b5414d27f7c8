use crate::pickle::disasm::{Decoder, Step, VmLimits};
use crate::pickle::Opcode;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Read;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatTag {
    Pkl,
    Zip,
    Tar,
    Gzip,
    Zlib,
    Bz2,
    Lzma,
    Xz,
    Lz4,
    Npy,
    Unknown,
}

impl FormatTag {
    /// Short name used in loading-path labels.
    pub fn label(self) -> &'static str {
        match self {
            FormatTag::Pkl => "pkl",
            FormatTag::Zip => "zip",
            FormatTag::Tar => "tar",
            FormatTag::Gzip => "gz",
            FormatTag::Zlib => "zlib",
            FormatTag::Bz2 => "bz2",
            FormatTag::Lzma => "lzma",
            FormatTag::Xz => "xz",
            FormatTag::Lz4 => "lz4",
            FormatTag::Npy => "npy",
            FormatTag::Unknown => "unknown",
        }
    }

    pub fn is_codec(self) -> bool {
        matches!(
            self,
            FormatTag::Gzip | FormatTag::Zlib | FormatTag::Bz2 | FormatTag::Lzma | FormatTag::Xz | FormatTag::Lz4
        )
    }

    pub fn is_archive(self) -> bool {
        matches!(self, FormatTag::Zip | FormatTag::Tar)
    }
}

impl fmt::Display for FormatTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub const LZ4_FRAME_MAGIC: [u8; 4] = [0x04, 0x22, 0x4d, 0x18];
pub const LZ4_LEGACY_MAGIC: [u8; 4] = [0x02, 0x21, 0x4c, 0x18];
pub const NPY_MAGIC: &[u8] = b"\x93NUMPY";

/// joblib's compatibility preamble: `ZF` followed by the payload length as
/// hex, padded to 19 bytes, then a zlib stream.
pub fn joblib_zf_header_len(b: &[u8]) -> Option<usize> {
    if b.len() >= 21 && b.starts_with(b"ZF") {
        let field = &b[2..21];
        let hexpart = field.iter().take_while(|c| c.is_ascii_hexdigit() || **c == b'x').count();
        if hexpart > 0 && field[hexpart..].iter().all(|c| *c == b' ' || *c == 0) && is_zlib(&b[21..]) {
            return Some(21);
        }
    }
    None
}

fn is_zlib(b: &[u8]) -> bool {
    if b.len() < 2 {
        return false;
    }
    let (cmf, flg) = (b[0], b[1]);
    if cmf & 0x0f != 8 || cmf >> 4 > 7 || flg & 0x20 != 0 || !((cmf as u16) << 8 | flg as u16).is_multiple_of(31) {
        return false;
    }
    // trial inflate of a short prefix
    let probe = &b[..b.len().min(4096)];
    let mut d = flate2::read::ZlibDecoder::new(probe);
    let mut buf = [0u8; 256];
    match d.read(&mut buf) {
        Ok(n) => n > 0 || b.len() <= 16,
        Err(e) => e.kind() == std::io::ErrorKind::UnexpectedEof,
    }
}

fn is_lzma_alone(b: &[u8]) -> bool {
    if b.len() < 13 || b[0] != 0x5d || b[1] != 0x00 {
        return false;
    }
    let size = u64::from_le_bytes(b[5..13].try_into().unwrap());
    size == u64::MAX || size < (1 << 48)
}

fn is_bz2(b: &[u8]) -> bool {
    b.len() >= 10
        && b.starts_with(b"BZh")
        && (b'1'..=b'9').contains(&b[3])
        && (b[4..10] == [0x31, 0x41, 0x59, 0x26, 0x53, 0x59] || b[4..10] == [0x17, 0x72, 0x45, 0x38, 0x50, 0x90])
}

fn tar_checksum_ok(h: &[u8]) -> bool {
    let field = &h[148..156];
    let text: String = field.iter().take_while(|c| **c != 0 && **c != b' ').map(|c| *c as char).collect();
    let Ok(want) = u64::from_str_radix(text.trim(), 8) else { return false };
    let sum: u64 = h.iter().enumerate().map(|(i, b)| if (148..156).contains(&i) { 32 } else { *b as u64 }).sum();
    sum == want
}

pub fn is_tar(b: &[u8]) -> bool {
    if b.len() < 512 {
        return false;
    }
    let h = &b[..512];
    if &h[257..262] == b"ustar" {
        return true;
    }
    h.iter().any(|c| *c != 0) && tar_checksum_ok(h)
}

/// Whether the bytes plausibly start a pickle stream. A stream that reaches
/// STOP qualifies, as does one opening with PROTO, or one that decodes at
/// least four opcodes including an import, call or string literal.
pub fn is_plausible_pickle(b: &[u8]) -> bool {
    let Some(first) = b.first().and_then(|c| Opcode::from_byte(*c)) else { return false };
    if first == Opcode::Proto && b.len() >= 2 && b[1] <= 5 {
        return true;
    }
    let limits = VmLimits::default();
    let mut n = 0usize;
    let mut notable = false;
    for step in Decoder::new(b, &limits).take(4096) {
        match step {
            Step::Event(ev) => {
                if ev.opcode == Opcode::Stop {
                    return n >= 1;
                }
                n += 1;
                notable |= ev.opcode.is_string_literal()
                    || matches!(ev.opcode, Opcode::Global | Opcode::StackGlobal | Opcode::Inst | Opcode::Reduce);
            }
            Step::Warning(_) => {}
            Step::Fatal(_) => break,
        }
    }
    n >= 4 && notable
}

/// Classify a byte buffer by content. Priority: zip > gzip > xz > bz2 > lz4
/// > lzma > zlib > tar > npy > pkl > unknown.
pub fn sniff(b: &[u8]) -> FormatTag {
    if b.starts_with(b"PK\x03\x04") || b.starts_with(b"PK\x05\x06") {
        return FormatTag::Zip;
    }
    if b.starts_with(&[0x1f, 0x8b]) {
        return FormatTag::Gzip;
    }
    if b.starts_with(&[0xfd, b'7', b'z', b'X', b'Z', 0x00]) {
        return FormatTag::Xz;
    }
    if is_bz2(b) {
        return FormatTag::Bz2;
    }
    if b.starts_with(&LZ4_FRAME_MAGIC) || b.starts_with(&LZ4_LEGACY_MAGIC) {
        return FormatTag::Lz4;
    }
    if is_lzma_alone(b) {
        return FormatTag::Lzma;
    }
    if is_zlib(b) || joblib_zf_header_len(b).is_some() {
        return FormatTag::Zlib;
    }
    if is_tar(b) {
        return FormatTag::Tar;
    }
    if b.starts_with(NPY_MAGIC) {
        return FormatTag::Npy;
    }
    if is_plausible_pickle(b) {
        return FormatTag::Pkl;
    }
    FormatTag::Unknown
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magic_numbers() {
        assert_eq!(sniff(b"PK\x03\x04rest"), FormatTag::Zip);
        assert_eq!(sniff(b"PK\x05\x06\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0"), FormatTag::Zip);
        assert_eq!(sniff(&[0x1f, 0x8b, 8, 0]), FormatTag::Gzip);
        assert_eq!(sniff(&[0xfd, b'7', b'z', b'X', b'Z', 0, 0]), FormatTag::Xz);
        assert_eq!(sniff(&[0x04, 0x22, 0x4d, 0x18, 0x64]), FormatTag::Lz4);
        assert_eq!(sniff(b"\x93NUMPY\x01\x00"), FormatTag::Npy);
    }

    #[test]
    fn pickle_heuristic() {
        assert_eq!(sniff(b"\x80\x04N."), FormatTag::Pkl);
        assert_eq!(sniff(b"S'os'\nS'system'\n\x93S'ls'\n\x85R."), FormatTag::Pkl);
        // unknown opcode after a few decodable ones still counts
        assert_eq!(sniff(b"\x80\x02cbuiltins\nprint\n\xff"), FormatTag::Pkl);
        // digit soup from a serialization id does not
        assert_eq!(sniff(b"0120120123456789"), FormatTag::Unknown);
        assert_eq!(sniff(b"little"), FormatTag::Unknown);
        assert_eq!(sniff(b"3\n"), FormatTag::Unknown);
        assert_eq!(sniff(b""), FormatTag::Unknown);
    }

    #[test]
    fn zlib_needs_valid_stream() {
        let mut e = flate2::write::ZlibEncoder::new(Vec::new(), flate2::Compression::default());
        std::io::Write::write_all(&mut e, b"hello hello hello").unwrap();
        let z = e.finish().unwrap();
        assert_eq!(sniff(&z), FormatTag::Zlib);
        assert_eq!(sniff(b"\x78\x9cgarbage-here"), FormatTag::Unknown);
    }
}
