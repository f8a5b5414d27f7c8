//! Zip handling that does not trust any single structure. Members are found
//! by walking local headers front to back, then cross-checked against the
//! central directory; disagreements become anomalies instead of errors.

use crate::anomaly::{Anomaly, AnomalyKind};
use std::collections::{BTreeMap, BTreeSet};

pub const LOCAL_SIG: &[u8; 4] = b"PK\x03\x04";
pub const CENTRAL_SIG: &[u8; 4] = b"PK\x01\x02";
pub const EOCD_SIG: &[u8; 4] = b"PK\x05\x06";
pub const ZIP64_EOCD_SIG: &[u8; 4] = b"PK\x06\x06";
pub const ZIP64_LOCATOR_SIG: &[u8; 4] = b"PK\x06\x07";
pub const DESCRIPTOR_SIG: &[u8; 4] = b"PK\x07\x08";

/// Highest "version needed to extract" the reference reader accepts.
pub const MAX_EXTRACT_VERSION: u8 = 63;

fn u16_at(b: &[u8], p: usize) -> u16 {
    u16::from_le_bytes([b[p], b[p + 1]])
}

fn u32_at(b: &[u8], p: usize) -> u32 {
    u32::from_le_bytes(b[p..p + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], p: usize) -> u64 {
    u64::from_le_bytes(b[p..p + 8].try_into().unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Eocd {
    pub pos: usize,
    pub disk: u16,
    pub cd_disk: u16,
    pub entries: u64,
    pub cd_size: u64,
    pub cd_offset: u64,
    pub comment_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdEntry {
    /// Position of this header in the archive.
    pub header_pos: usize,
    pub name: String,
    pub version_needed: u16,
    pub flags: u16,
    pub method: u16,
    pub crc: u32,
    pub csize: u64,
    pub usize: u64,
    pub local_offset: u64,
    pub extra: Vec<u8>,
}

/// Where a member's bytes live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemberData {
    /// Stored member: a range of the archive itself.
    Slice(usize, usize),
    Owned(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZipMember {
    pub name: String,
    pub data: MemberData,
    pub local_offset: u64,
    pub method: u16,
    pub anomalies: Vec<Anomaly>,
}

impl ZipMember {
    pub fn bytes<'a>(&'a self, archive: &'a [u8]) -> &'a [u8] {
        match &self.data {
            MemberData::Slice(a, b) => &archive[*a..*b],
            MemberData::Owned(v) => v,
        }
    }
}

#[derive(Debug, Default)]
pub struct ZipRead {
    pub members: Vec<ZipMember>,
    pub anomalies: Vec<Anomaly>,
    /// Bytes produced by decompression (stored members are not counted).
    pub decoded_bytes: u64,
}

/// Decode limits for one archive.
#[derive(Debug, Clone, Copy)]
pub struct ZipLimits {
    pub member_bytes: usize,
    pub total_bytes: u64,
    pub max_members: usize,
}

/// Every plausible end-of-central-directory record, in file order.
pub fn find_eocds(b: &[u8]) -> Vec<Eocd> {
    let mut out = Vec::new();
    if b.len() < 22 {
        return out;
    }
    let lo = b.len().saturating_sub(22 + 65535);
    let mut p = b.len() - 22;
    loop {
        if &b[p..p + 4] == EOCD_SIG {
            let comment_len = u16_at(b, p + 20) as usize;
            if p + 22 + comment_len <= b.len() {
                out.push(Eocd {
                    pos: p,
                    disk: u16_at(b, p + 4),
                    cd_disk: u16_at(b, p + 6),
                    entries: u16_at(b, p + 10) as u64,
                    cd_size: u32_at(b, p + 12) as u64,
                    cd_offset: u32_at(b, p + 16) as u64,
                    comment_len,
                });
            }
        }
        if p == lo {
            break;
        }
        p -= 1;
    }
    out.reverse();
    out
}

/// Returns the first `(tp, ln)` extra record whose length overruns the field.
pub fn corrupt_extra(extra: &[u8]) -> Option<(u16, u16)> {
    let mut e = extra;
    while e.len() >= 4 {
        let tp = u16_at(e, 0);
        let ln = u16_at(e, 2);
        if ln as usize + 4 > e.len() {
            return Some((tp, ln));
        }
        e = &e[4 + ln as usize..];
    }
    None
}

/// Values from a zip64 extended-information record, consumed in order for
/// each field that was saturated in the fixed header.
fn zip64_fields(extra: &[u8], want: usize) -> Vec<u64> {
    let mut e = extra;
    while e.len() >= 4 {
        let tp = u16_at(e, 0);
        let ln = (u16_at(e, 2) as usize).min(e.len() - 4);
        if tp == 1 {
            return e[4..4 + ln].chunks_exact(8).take(want).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        }
        e = &e[4 + ln..];
    }
    Vec::new()
}

/// Parse central directory headers starting at `start`, up to `end`.
pub fn parse_central_directory(b: &[u8], start: usize, end: usize, max: usize) -> (Vec<CdEntry>, Option<Anomaly>) {
    let mut out = Vec::new();
    let mut p = start;
    let end = end.min(b.len());
    while p < end && out.len() < max {
        if p + 46 > b.len() || &b[p..p + 4] != CENTRAL_SIG {
            return (
                out,
                Some(Anomaly::new(
                    AnomalyKind::BadCentralDirectory,
                    p as u64,
                    "bad magic number for central directory entry",
                )),
            );
        }
        let name_len = u16_at(b, p + 28) as usize;
        let extra_len = u16_at(b, p + 30) as usize;
        let comment_len = u16_at(b, p + 32) as usize;
        let var_end = p + 46 + name_len + extra_len + comment_len;
        if var_end > b.len() {
            return (
                out,
                Some(Anomaly::new(AnomalyKind::BadCentralDirectory, p as u64, "central directory entry truncated")),
            );
        }
        let name = String::from_utf8_lossy(&b[p + 46..p + 46 + name_len]).into_owned();
        let extra = b[p + 46 + name_len..p + 46 + name_len + extra_len].to_vec();
        let mut csize = u32_at(b, p + 20) as u64;
        let mut usize_ = u32_at(b, p + 24) as u64;
        let mut local_offset = u32_at(b, p + 42) as u64;
        let sat = [usize_ == 0xffff_ffff, csize == 0xffff_ffff, local_offset == 0xffff_ffff];
        let n_sat = sat.iter().filter(|s| **s).count();
        if n_sat > 0 {
            let mut vals = zip64_fields(&extra, n_sat).into_iter();
            if sat[0] {
                usize_ = vals.next().unwrap_or(usize_);
            }
            if sat[1] {
                csize = vals.next().unwrap_or(csize);
            }
            if sat[2] {
                local_offset = vals.next().unwrap_or(local_offset);
            }
        }
        out.push(CdEntry {
            header_pos: p,
            name,
            version_needed: u16_at(b, p + 6),
            flags: u16_at(b, p + 8),
            method: u16_at(b, p + 10),
            crc: u32_at(b, p + 16),
            csize,
            usize: usize_,
            local_offset,
            extra,
        });
        p = var_end;
    }
    (out, None)
}

struct CentralDirectory {
    entries: Vec<CdEntry>,
    /// Bytes of data prepended to the archive, added to recorded offsets.
    concat: u64,
    valid: bool,
}

fn read_central_directory(b: &[u8], limits: &ZipLimits, anomalies: &mut Vec<Anomaly>) -> CentralDirectory {
    let none = CentralDirectory { entries: Vec::new(), concat: 0, valid: false };
    let eocds = find_eocds(b);
    if eocds.is_empty() {
        anomalies.push(Anomaly::new(AnomalyKind::BadCentralDirectory, b.len() as u64, "no end of central directory record"));
        return none;
    }
    // records inside member data (a stored inner archive) do not count
    let double = |anomalies: &mut Vec<Anomaly>, from: u64| {
        let extra: Vec<&Eocd> = eocds.iter().filter(|e| e.pos as u64 >= from).collect();
        if extra.len() > 1 {
            anomalies.push(Anomaly::new(
                AnomalyKind::DoubleEocd,
                extra[0].pos as u64,
                format!("{} end of central directory records", extra.len()),
            ));
        }
    };
    let mut first_failure: Option<Anomaly> = None;
    for eocd in eocds.iter().rev() {
        let mut e = eocd.clone();
        if e.disk != 0 || e.cd_disk != 0 {
            anomalies.push(Anomaly::new(
                AnomalyKind::DiskNumber,
                e.pos as u64,
                format!("end record names disk {} / central directory disk {}", e.disk, e.cd_disk),
            ));
        }
        let mut structural_start = e.pos;
        if e.pos >= 20 && &b[e.pos - 20..e.pos - 16] == ZIP64_LOCATOR_SIG {
            let l = e.pos - 20;
            let diskno = u32_at(b, l + 4);
            let reloff = u64_at(b, l + 8);
            let disks = u32_at(b, l + 16);
            structural_start = l;
            if diskno != 0 || disks > 1 {
                anomalies.push(Anomaly::new(
                    AnomalyKind::DiskNumber,
                    l as u64,
                    format!("zip64 locator names disk {diskno} of {disks}; multi-disk archives are rejected by the reference loader"),
                ));
            }
            let r = reloff as usize;
            if reloff < b.len() as u64 && r + 56 <= l && &b[r..r + 4] == ZIP64_EOCD_SIG {
                e.entries = u64_at(b, r + 32);
                e.cd_size = u64_at(b, r + 40);
                e.cd_offset = u64_at(b, r + 48);
                structural_start = r;
            }
        }
        let concat = (structural_start as u64).checked_sub(e.cd_size).and_then(|v| v.checked_sub(e.cd_offset));
        let mut starts = Vec::new();
        if let Some(c) = concat {
            starts.push((e.cd_offset + c, c));
        }
        starts.push((e.cd_offset, 0));
        for (start, c) in starts {
            if start as usize > b.len() {
                continue;
            }
            let end = (start + e.cd_size).min(structural_start as u64) as usize;
            let (entries, err) = parse_central_directory(b, start as usize, end, limits.max_members);
            match err {
                None if entries.len() as u64 == e.entries || e.entries >= 0xffff => {
                    // found, but not where a stricter reader looks first
                    anomalies.extend(first_failure);
                    double(anomalies, start);
                    return CentralDirectory { entries, concat: c, valid: true };
                }
                None => {
                    if first_failure.is_none() {
                        first_failure = Some(Anomaly::new(
                            AnomalyKind::BadCentralDirectory,
                            start,
                            format!("end record declares {} entries, found {}", e.entries, entries.len()),
                        ));
                    }
                    if !entries.is_empty() {
                        anomalies.push(first_failure.take().unwrap());
                        double(anomalies, start);
                        return CentralDirectory { entries, concat: c, valid: true };
                    }
                }
                Some(a) => {
                    if first_failure.is_none() {
                        first_failure = Some(a);
                    }
                }
            }
        }
    }
    anomalies.extend(first_failure);
    double(anomalies, 0);
    none
}

struct Local {
    flags: u16,
    method: u16,
    crc: u32,
    csize: u64,
    usize: u64,
    name: String,
    data_start: usize,
    version_needed: u16,
}

fn parse_local(b: &[u8], p: usize) -> Option<(Local, Option<Anomaly>)> {
    if p + 30 > b.len() || &b[p..p + 4] != LOCAL_SIG {
        return None;
    }
    let name_len = u16_at(b, p + 26) as usize;
    let extra_len = u16_at(b, p + 28) as usize;
    let data_start = p + 30 + name_len + extra_len;
    if data_start > b.len() {
        return None;
    }
    let extra = &b[p + 30 + name_len..data_start];
    let mut csize = u32_at(b, p + 18) as u64;
    let mut usize_ = u32_at(b, p + 22) as u64;
    if csize == 0xffff_ffff || usize_ == 0xffff_ffff {
        let v = zip64_fields(extra, 2);
        if v.len() == 2 {
            usize_ = v[0];
            csize = v[1];
        }
    }
    let bad_extra = corrupt_extra(extra).map(|(tp, ln)| {
        Anomaly::new(AnomalyKind::CorruptExtraField, p as u64, format!("local extra field {tp:04x} claims {ln} bytes"))
    });
    Some((
        Local {
            flags: u16_at(b, p + 6),
            method: u16_at(b, p + 8),
            crc: u32_at(b, p + 14),
            csize,
            usize: usize_,
            name: String::from_utf8_lossy(&b[p + 30..p + 30 + name_len]).into_owned(),
            data_start,
            version_needed: u16_at(b, p + 4),
        },
        bad_extra,
    ))
}

/// Inflate a raw deflate stream at `input`. Returns (output, consumed, ok, truncated).
fn inflate(input: &[u8], limit: usize) -> (Vec<u8>, usize, bool, bool) {
    let mut d = flate2::Decompress::new(false);
    let mut out: Vec<u8> = Vec::with_capacity(input.len().min(limit).min(1 << 20));
    loop {
        if out.len() >= limit {
            out.truncate(limit);
            return (out, d.total_in() as usize, false, true);
        }
        let room = (limit - out.len()).min(1 << 20);
        out.reserve(room);
        let before_in = d.total_in();
        let before_out = d.total_out();
        let at = d.total_in() as usize;
        match d.decompress_vec(&input[at..], &mut out, flate2::FlushDecompress::None) {
            Ok(flate2::Status::StreamEnd) => return (out, d.total_in() as usize, true, false),
            Ok(_) => {
                if d.total_in() == before_in && d.total_out() == before_out {
                    return (out, d.total_in() as usize, false, false);
                }
            }
            Err(_) => return (out, d.total_in() as usize, false, false),
        }
    }
}

fn find_from(b: &[u8], from: usize, pat: &[u8]) -> Option<usize> {
    if from >= b.len() {
        return None;
    }
    b[from..].windows(pat.len()).position(|w| w == pat).map(|i| i + from)
}

/// Read all members of a zip archive without trusting its central directory.
pub fn read_zip(b: &[u8], limits: &ZipLimits) -> ZipRead {
    let mut out = ZipRead::default();
    let cd = read_central_directory(b, limits, &mut out.anomalies);
    let by_offset: BTreeMap<u64, &CdEntry> = cd.entries.iter().map(|e| (e.local_offset + cd.concat, e)).collect();

    for e in &cd.entries {
        if let Some((tp, ln)) = corrupt_extra(&e.extra) {
            out.anomalies.push(Anomaly::new(
                AnomalyKind::CorruptExtraField,
                e.header_pos as u64,
                format!("central extra field {tp:04x} of {:?} claims {ln} bytes", e.name),
            ));
        }
        if (e.version_needed & 0xff) as u8 > MAX_EXTRACT_VERSION {
            out.anomalies.push(Anomaly::new(
                AnomalyKind::UnsupportedExtractVersion,
                e.header_pos as u64,
                format!("{:?} needs version {}.{}", e.name, (e.version_needed & 0xff) / 10, (e.version_needed & 0xff) % 10),
            ));
        }
    }

    let mut visited: BTreeSet<u64> = BTreeSet::new();
    let mut p = 0usize;
    let mut resyncs = 0usize;
    while p + 4 <= b.len() && out.members.len() < limits.max_members {
        if &b[p..p + 4] == LOCAL_SIG {
            match extract_at(b, p, by_offset.get(&(p as u64)).copied(), limits, &mut out) {
                Some(next) => {
                    visited.insert(p as u64);
                    p = next;
                    continue;
                }
                None => {
                    p += 4;
                }
            }
        } else if &b[p..p + 4] == CENTRAL_SIG || &b[p..p + 4] == EOCD_SIG || &b[p..p + 4] == ZIP64_EOCD_SIG {
            break;
        }
        match find_from(b, p + 1, LOCAL_SIG) {
            Some(q) => {
                if !(p == 0 && q > 0 && cd.concat as usize == q) {
                    resyncs += 1;
                    if resyncs <= 16 {
                        out.anomalies.push(Anomaly::new(
                            AnomalyKind::ZipResync,
                            p as u64,
                            format!("skipped {} unstructured bytes", q - p),
                        ));
                    }
                }
                p = q;
            }
            None => break,
        }
    }
    if out.members.len() >= limits.max_members {
        out.anomalies.push(Anomaly::new(
            AnomalyKind::MemberLimitExceeded,
            0,
            format!("more than {} members", limits.max_members),
        ));
    }

    if cd.valid {
        for e in &cd.entries {
            let at = e.local_offset + cd.concat;
            if visited.contains(&at) {
                continue;
            }
            if (at as usize) < b.len() && extract_at(b, at as usize, Some(e), limits, &mut out).is_some() {
                visited.insert(at);
                if let Some(m) = out.members.last_mut() {
                    m.anomalies.push(Anomaly::new(
                        AnomalyKind::CentralOnlyMember,
                        at,
                        "member reachable only through the central directory",
                    ));
                }
            } else {
                out.anomalies.push(Anomaly::new(
                    AnomalyKind::BadCentralDirectory,
                    e.header_pos as u64,
                    format!("{:?} points at offset {at} with no local header", e.name),
                ));
            }
        }
        for m in out.members.iter_mut() {
            if !by_offset.contains_key(&m.local_offset) {
                m.anomalies.push(Anomaly::new(
                    AnomalyKind::LocalOnlyMember,
                    m.local_offset,
                    "member absent from the central directory",
                ));
            }
        }
    }
    if out.members.is_empty() && !out.anomalies.is_empty() {
        out.anomalies.push(Anomaly::new(AnomalyKind::ZipUnreadable, 0, "no member could be recovered"));
    }
    out
}

/// Extract the member whose local header is at `p`; returns the offset just
/// past its data (and descriptor).
fn extract_at(b: &[u8], p: usize, cde: Option<&CdEntry>, limits: &ZipLimits, out: &mut ZipRead) -> Option<usize> {
    let (loc, bad_extra) = parse_local(b, p)?;
    let mut an: Vec<Anomaly> = bad_extra.into_iter().collect();
    let off = p as u64;
    if (loc.version_needed & 0xff) as u8 > MAX_EXTRACT_VERSION {
        an.push(Anomaly::new(
            AnomalyKind::UnsupportedExtractVersion,
            off,
            format!("local header needs version {}", loc.version_needed & 0xff),
        ));
    }
    if let Some(c) = cde {
        if c.name != loc.name {
            an.push(Anomaly::new(
                AnomalyKind::NameMismatch,
                off,
                format!("local name {:?}, central name {:?}", loc.name, c.name),
            ));
        }
    }
    let crc_expected = if loc.flags & 8 != 0 { cde.map(|c| c.crc).unwrap_or(loc.crc) } else { loc.crc };
    let avail = b.len() - loc.data_start;
    let mut data = MemberData::Slice(loc.data_start, loc.data_start);
    let consumed: usize;

    if loc.flags & 1 != 0 {
        an.push(Anomaly::new(AnomalyKind::Encrypted, off, format!("{:?} is encrypted", loc.name)));
        let n = if loc.csize > 0 { loc.csize } else { cde.map(|c| c.csize).unwrap_or(0) };
        consumed = (n as usize).min(avail);
    } else if loc.method == 0 {
        let local_n = if loc.flags & 8 != 0 && loc.csize == 0 { None } else { Some(loc.csize) };
        let cd_n = cde.map(|c| c.csize);
        let fits = |n: u64| n as usize <= avail;
        let crc_ok = |n: u64| fits(n) && crc32fast::hash(&b[loc.data_start..loc.data_start + n as usize]) == crc_expected;
        let chosen = match (local_n, cd_n) {
            (Some(l), Some(c)) if l == c => Some(l),
            (Some(l), Some(c)) => {
                an.push(Anomaly::new(
                    AnomalyKind::SizeMismatch,
                    off,
                    format!("{:?}: local header says {l} bytes, central directory says {c}", loc.name),
                ));
                if crc_ok(l) || !crc_ok(c) {
                    Some(l)
                } else {
                    Some(c)
                }
            }
            (Some(l), None) => Some(l),
            (None, Some(c)) => Some(c),
            (None, None) => None,
        };
        let n = match chosen {
            Some(n) => n as usize,
            None => descriptor_scan(b, loc.data_start).unwrap_or(avail),
        };
        if n > avail {
            an.push(Anomaly::new(AnomalyKind::TruncatedStream, off, format!("{:?} runs past end of archive", loc.name)));
        }
        let n = n.min(avail);
        data = MemberData::Slice(loc.data_start, loc.data_start + n);
        consumed = n;
    } else if loc.method == 8 {
        let budget_left = limits.total_bytes.saturating_sub(out.decoded_bytes);
        let limit = (limits.member_bytes as u64).min(budget_left) as usize;
        let (v, used, ok, truncated) = inflate(&b[loc.data_start..], limit);
        out.decoded_bytes += v.len() as u64;
        if truncated {
            let kind = if (limits.member_bytes as u64) <= budget_left {
                AnomalyKind::NodeBudgetExceeded
            } else {
                AnomalyKind::ScanBudgetExceeded
            };
            an.push(Anomaly::new(kind, off, format!("{:?} decompresses past {limit} bytes", loc.name)));
        } else if !ok {
            an.push(Anomaly::new(AnomalyKind::DecodeError, off, format!("{:?}: deflate stream is corrupt", loc.name)));
        }
        let declared = [Some(loc.csize).filter(|n| *n != 0 || loc.flags & 8 == 0), cde.map(|c| c.csize)];
        if ok {
            for d in declared.iter().flatten() {
                if *d as usize != used {
                    an.push(Anomaly::new(
                        AnomalyKind::SizeMismatch,
                        off,
                        format!("{:?}: declared {d} compressed bytes, stream uses {used}", loc.name),
                    ));
                    break;
                }
            }
        }
        consumed = if ok { used } else { declared.iter().flatten().next().map(|d| *d as usize).unwrap_or(used).min(avail) };
        if ok && crc32fast::hash(&v) != crc_expected {
            an.push(Anomaly::new(AnomalyKind::CrcMismatch, off, format!("{:?}: CRC-32 does not match", loc.name)));
        }
        data = MemberData::Owned(v);
    } else {
        an.push(Anomaly::new(
            AnomalyKind::UnsupportedMethod,
            off,
            format!("{:?} uses compression method {}", loc.name, loc.method),
        ));
        let n = if loc.csize > 0 { loc.csize } else { cde.map(|c| c.csize).unwrap_or(0) };
        consumed = (n as usize).min(avail);
    }

    if let MemberData::Slice(a, z) = data {
        if loc.method == 0 && loc.flags & 1 == 0 && crc32fast::hash(&b[a..z]) != crc_expected {
            an.push(Anomaly::new(AnomalyKind::CrcMismatch, off, format!("{:?}: CRC-32 does not match", loc.name)));
        }
    }
    let _ = loc.usize;
    let mut next = loc.data_start + consumed;
    if loc.flags & 8 != 0 {
        if b.len() >= next + 4 && &b[next..next + 4] == DESCRIPTOR_SIG {
            next += 4;
        }
        next = (next + 12).min(b.len());
    }
    out.members.push(ZipMember { name: loc.name, data, local_offset: off, method: loc.method, anomalies: an });
    Some(next.max(p + 4))
}

/// For a stored member of unknown size: the distance to the data descriptor
/// whose size field agrees with it, or to the next header.
fn descriptor_scan(b: &[u8], start: usize) -> Option<usize> {
    let mut from = start;
    while let Some(q) = find_from(b, from, DESCRIPTOR_SIG) {
        if q + 16 <= b.len() && u32_at(b, q + 8) as usize == q - start {
            return Some(q - start);
        }
        from = q + 1;
    }
    [LOCAL_SIG, CENTRAL_SIG].iter().filter_map(|s| find_from(b, start, *s)).min().map(|q| q - start)
}

/// Deterministic writer for stored (uncompressed) archives.
#[derive(Debug, Default)]
pub struct StoredZipWriter {
    buf: Vec<u8>,
    central: Vec<u8>,
    count: u16,
}

impl StoredZipWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, data: &[u8]) {
        let crc = crc32fast::hash(data);
        let offset = self.buf.len() as u32;
        let n = name.as_bytes();
        let mut h = Vec::with_capacity(30 + n.len());
        h.extend_from_slice(LOCAL_SIG);
        h.extend_from_slice(&20u16.to_le_bytes());
        h.extend_from_slice(&0u16.to_le_bytes()); // flags
        h.extend_from_slice(&0u16.to_le_bytes()); // stored
        h.extend_from_slice(&0u16.to_le_bytes()); // time
        h.extend_from_slice(&0x21u16.to_le_bytes()); // 1980-01-01
        h.extend_from_slice(&crc.to_le_bytes());
        h.extend_from_slice(&(data.len() as u32).to_le_bytes());
        h.extend_from_slice(&(data.len() as u32).to_le_bytes());
        h.extend_from_slice(&(n.len() as u16).to_le_bytes());
        h.extend_from_slice(&0u16.to_le_bytes());
        h.extend_from_slice(n);
        self.buf.extend_from_slice(&h);
        self.buf.extend_from_slice(data);

        let c = &mut self.central;
        c.extend_from_slice(CENTRAL_SIG);
        c.extend_from_slice(&20u16.to_le_bytes()); // made by
        c.extend_from_slice(&20u16.to_le_bytes()); // needed
        c.extend_from_slice(&0u16.to_le_bytes());
        c.extend_from_slice(&0u16.to_le_bytes());
        c.extend_from_slice(&0u16.to_le_bytes());
        c.extend_from_slice(&0x21u16.to_le_bytes());
        c.extend_from_slice(&crc.to_le_bytes());
        c.extend_from_slice(&(data.len() as u32).to_le_bytes());
        c.extend_from_slice(&(data.len() as u32).to_le_bytes());
        c.extend_from_slice(&(n.len() as u16).to_le_bytes());
        c.extend_from_slice(&0u16.to_le_bytes()); // extra
        c.extend_from_slice(&0u16.to_le_bytes()); // comment
        c.extend_from_slice(&0u16.to_le_bytes()); // disk start
        c.extend_from_slice(&0u16.to_le_bytes()); // internal attrs
        c.extend_from_slice(&0u32.to_le_bytes()); // external attrs
        c.extend_from_slice(&offset.to_le_bytes());
        c.extend_from_slice(n);
        self.count += 1;
    }

    pub fn finish(mut self) -> Vec<u8> {
        let cd_offset = self.buf.len() as u32;
        let cd_size = self.central.len() as u32;
        self.buf.extend_from_slice(&self.central);
        self.buf.extend_from_slice(EOCD_SIG);
        self.buf.extend_from_slice(&0u16.to_le_bytes());
        self.buf.extend_from_slice(&0u16.to_le_bytes());
        self.buf.extend_from_slice(&self.count.to_le_bytes());
        self.buf.extend_from_slice(&self.count.to_le_bytes());
        self.buf.extend_from_slice(&cd_size.to_le_bytes());
        self.buf.extend_from_slice(&cd_offset.to_le_bytes());
        self.buf.extend_from_slice(&0u16.to_le_bytes());
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn limits() -> ZipLimits {
        ZipLimits { member_bytes: 1 << 20, total_bytes: 1 << 24, max_members: 1000 }
    }

    fn sample() -> Vec<u8> {
        let mut w = StoredZipWriter::new();
        w.add("archive/data.pkl", b"\x80\x02N.");
        w.add("archive/version", b"3\n");
        w.finish()
    }

    fn names(r: &ZipRead) -> Vec<String> {
        r.members.iter().map(|m| m.name.clone()).collect()
    }

    #[test]
    fn clean_archive() {
        let z = sample();
        let r = read_zip(&z, &limits());
        assert!(r.anomalies.is_empty(), "{:?}", r.anomalies);
        assert_eq!(names(&r), vec!["archive/data.pkl", "archive/version"]);
        assert_eq!(r.members[0].bytes(&z), b"\x80\x02N.");
        assert!(r.members.iter().all(|m| m.anomalies.is_empty()));
    }

    #[test]
    fn second_eocd_keeps_members() {
        let mut z = sample();
        let e = find_eocds(&z)[0].pos;
        let tail = z[e..].to_vec();
        z.extend(tail);
        let r = read_zip(&z, &limits());
        assert_eq!(names(&r), vec!["archive/data.pkl", "archive/version"]);
        assert_eq!(r.anomalies.iter().filter(|a| a.kind == AnomalyKind::DoubleEocd).count(), 1);
    }

    #[test]
    fn wrong_central_size_picks_local_by_crc() {
        let mut z = sample();
        let (cd, _) = parse_central_directory(&z, find_eocds(&z)[0].cd_offset as usize, z.len(), 10);
        let p = cd[0].header_pos;
        z[p + 20..p + 24].copy_from_slice(&3u32.to_le_bytes());
        z[p + 24..p + 28].copy_from_slice(&3u32.to_le_bytes());
        let r = read_zip(&z, &limits());
        assert_eq!(r.members[0].bytes(&z), b"\x80\x02N.");
        assert!(r.members[0].anomalies.iter().any(|a| a.kind == AnomalyKind::SizeMismatch));
    }

    #[test]
    fn broken_central_signature() {
        let mut z = sample();
        let p = find_eocds(&z)[0].cd_offset as usize;
        z[p + 3] = 0;
        let r = read_zip(&z, &limits());
        assert_eq!(names(&r), vec!["archive/data.pkl", "archive/version"]);
        assert!(r.anomalies.iter().any(|a| a.kind == AnomalyKind::BadCentralDirectory));
        assert!(r.members.iter().all(|m| m.anomalies.is_empty()));
    }

    #[test]
    fn deflated_member_without_sizes() {
        let mut e = flate2::write::DeflateEncoder::new(Vec::new(), flate2::Compression::default());
        e.write_all(b"\x80\x02cbuiltins\nprint\n.").unwrap();
        let comp = e.finish().unwrap();
        let mut z = Vec::new();
        z.extend_from_slice(LOCAL_SIG);
        z.extend_from_slice(&20u16.to_le_bytes());
        z.extend_from_slice(&8u16.to_le_bytes()); // descriptor follows
        z.extend_from_slice(&8u16.to_le_bytes());
        z.extend_from_slice(&[0; 4]);
        z.extend_from_slice(&[0; 12]);
        z.extend_from_slice(&5u16.to_le_bytes());
        z.extend_from_slice(&0u16.to_le_bytes());
        z.extend_from_slice(b"a.pkl");
        z.extend_from_slice(&comp);
        z.extend_from_slice(DESCRIPTOR_SIG);
        z.extend_from_slice(&crc32fast::hash(b"\x80\x02cbuiltins\nprint\n.").to_le_bytes());
        z.extend_from_slice(&(comp.len() as u32).to_le_bytes());
        z.extend_from_slice(&22u32.to_le_bytes());
        let r = read_zip(&z, &limits());
        assert_eq!(r.members.len(), 1);
        assert_eq!(r.members[0].bytes(&z), b"\x80\x02cbuiltins\nprint\n.");
    }

    #[test]
    fn corrupt_extra_detection() {
        assert_eq!(corrupt_extra(b"xxxx"), Some((0x7878, 0x7878)));
        assert_eq!(corrupt_extra(b"\x01\x00\x00\x00"), None);
        assert_eq!(corrupt_extra(b""), None);
    }

    #[test]
    fn garbage_is_unreadable() {
        let r = read_zip(b"PK\x05\x06 not a zip at all, not at all", &limits());
        assert!(r.members.is_empty());
        assert!(r.anomalies.iter().any(|a| a.kind == AnomalyKind::ZipUnreadable));
    }

    #[test]
    fn inflate_budget() {
        let mut e = flate2::write::DeflateEncoder::new(Vec::new(), flate2::Compression::default());
        e.write_all(&vec![0u8; 1 << 16]).unwrap();
        let comp = e.finish().unwrap();
        let (v, _, ok, trunc) = inflate(&comp, 1000);
        assert!(!ok && trunc && v.len() == 1000);
    }
}
