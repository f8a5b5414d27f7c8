//! Lenient tar reading: ustar, pre-POSIX, GNU long names and pax paths.

use crate::anomaly::{Anomaly, AnomalyKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TarMember {
    pub name: String,
    /// Range of the member data within the archive.
    pub start: usize,
    pub end: usize,
    pub header_offset: u64,
}

#[derive(Debug, Default)]
pub struct TarRead {
    pub members: Vec<TarMember>,
    pub anomalies: Vec<Anomaly>,
}

fn cstr(b: &[u8]) -> String {
    let n = b.iter().position(|c| *c == 0).unwrap_or(b.len());
    String::from_utf8_lossy(&b[..n]).into_owned()
}

fn parse_num(field: &[u8]) -> Option<u64> {
    if field.first().is_some_and(|c| c & 0x80 != 0) {
        // base-256
        let mut v: u64 = (field[0] & 0x7f) as u64;
        for c in &field[1..] {
            v = v.checked_mul(256)?.checked_add(*c as u64)?;
        }
        return Some(v);
    }
    let text: String = field
        .iter()
        .map(|c| *c as char)
        .skip_while(|c| *c == ' ' || *c == '\0')
        .take_while(|c| c.is_digit(8))
        .collect();
    if text.is_empty() {
        if field.iter().all(|c| *c == 0 || *c == b' ') {
            return Some(0);
        }
        return None;
    }
    u64::from_str_radix(&text, 8).ok()
}

fn checksum_ok(h: &[u8]) -> bool {
    let Some(want) = parse_num(&h[148..156]) else { return false };
    let unsigned: u64 = h.iter().enumerate().map(|(i, b)| if (148..156).contains(&i) { 32 } else { *b as u64 }).sum();
    let signed: i64 =
        h.iter().enumerate().map(|(i, b)| if (148..156).contains(&i) { 32 } else { *b as i8 as i64 }).sum();
    want == unsigned || want as i64 == signed
}

fn pax_path(data: &[u8]) -> Option<String> {
    let mut rest = data;
    let mut found = None;
    while !rest.is_empty() {
        let sp = rest.iter().position(|c| *c == b' ')?;
        let len: usize = std::str::from_utf8(&rest[..sp]).ok()?.parse().ok()?;
        if len == 0 || len > rest.len() {
            break;
        }
        let rec = &rest[sp + 1..len];
        if let Some(v) = rec.strip_prefix(b"path=") {
            let v = v.strip_suffix(b"\n").unwrap_or(v);
            found = Some(String::from_utf8_lossy(v).into_owned());
        }
        rest = &rest[len..];
    }
    found
}

/// Walk tar headers; regular-file members are returned as ranges.
pub fn read_tar(b: &[u8], max_members: usize) -> TarRead {
    let mut out = TarRead::default();
    let mut p = 0usize;
    let mut long_name: Option<String> = None;
    let mut pax_name: Option<String> = None;
    loop {
        if p >= b.len() {
            break;
        }
        if p + 512 > b.len() {
            if b[p..].iter().any(|c| *c != 0) {
                out.anomalies.push(Anomaly::new(AnomalyKind::TarTruncated, p as u64, "partial header at end of archive"));
            }
            break;
        }
        let h = &b[p..p + 512];
        if h.iter().all(|c| *c == 0) {
            break;
        }
        if out.members.len() >= max_members {
            out.anomalies.push(Anomaly::new(
                AnomalyKind::MemberLimitExceeded,
                p as u64,
                format!("more than {max_members} members"),
            ));
            break;
        }
        if !checksum_ok(h) {
            out.anomalies.push(Anomaly::new(AnomalyKind::TarChecksum, p as u64, "header checksum mismatch"));
        }
        let Some(size) = parse_num(&h[124..136]) else {
            out.anomalies.push(Anomaly::new(AnomalyKind::TarChecksum, p as u64, "unparseable size field"));
            break;
        };
        let typeflag = h[156];
        let mut name = cstr(&h[0..100]);
        if &h[257..263] == b"ustar\0" {
            let prefix = cstr(&h[345..500]);
            if !prefix.is_empty() {
                name = format!("{prefix}/{name}");
            }
        }
        let start = p + 512;
        let end_decl = start as u64 + size;
        let end = if end_decl > b.len() as u64 {
            out.anomalies.push(Anomaly::new(
                AnomalyKind::TarTruncated,
                p as u64,
                format!("{name:?} declares {size} bytes, archive ends first"),
            ));
            b.len()
        } else {
            end_decl as usize
        };
        match typeflag {
            b'L' => long_name = Some(cstr(&b[start..end])),
            b'x' => pax_name = pax_path(&b[start..end]).or(pax_name),
            b'g' => {}
            b'0' | 0 | b'7' => {
                let name = pax_name.take().or(long_name.take()).unwrap_or(name);
                out.members.push(TarMember { name, start, end, header_offset: p as u64 });
            }
            _ => {
                pax_name = None;
                long_name = None;
            }
        }
        if end < end_decl as usize || end_decl > b.len() as u64 {
            break;
        }
        let padded = size.div_ceil(512) * 512;
        p = match (start as u64).checked_add(padded) {
            Some(v) if v <= usize::MAX as u64 => v as usize,
            _ => break,
        };
    }
    out
}
