//! Layouts of legacy torch checkpoints, where pickles are interleaved with
//! raw tensor bytes. Walking them precisely keeps the raw bytes from being
//! misread as opcodes.

use crate::pickle::emulate::{emulate_segments, ArgSummary, EmulationResult};
use crate::pickle::VmLimits;

/// Pickles at the head of a legacy (non-tar) checkpoint: magic, protocol
/// version, system info, the object, the storage keys. Raw storage data
/// follows.
pub const LEGACY_STREAM_PICKLES: usize = 5;

/// Bytes per element for the storage classes of legacy checkpoints.
pub fn storage_element_size(fqname: &str) -> Option<u64> {
    let name = fqname.strip_prefix("torch.")?;
    let name = name.strip_prefix("cuda.").unwrap_or(name);
    Some(match name {
        "DoubleStorage" | "LongStorage" | "ComplexFloatStorage" => 8,
        "FloatStorage" | "IntStorage" => 4,
        "HalfStorage" | "ShortStorage" | "BFloat16Storage" => 2,
        "CharStorage" | "ByteStorage" | "BoolStorage" | "QUInt8Storage" | "QInt8Storage" => 1,
        "ComplexDoubleStorage" => 16,
        "QInt32Storage" => 4,
        "UntypedStorage" => 1,
        _ => return None,
    })
}

fn count(v: Option<&ArgSummary>) -> Option<u64> {
    match v {
        Some(ArgSummary::Int(s)) => s.parse().ok(),
        _ => None,
    }
}

fn i64_at(b: &[u8], p: usize) -> Option<i64> {
    Some(i64::from_le_bytes(b.get(p..p + 8)?.try_into().ok()?))
}

fn i32_at(b: &[u8], p: usize) -> Option<i32> {
    Some(i32::from_le_bytes(b.get(p..p + 4)?.try_into().ok()?))
}

/// Emulate one pickle at `pos`; `None` unless it ends cleanly in STOP.
fn one(b: &[u8], pos: usize, limits: &VmLimits, acc: &mut EmulationResult) -> Option<(usize, ArgSummary)> {
    let (r, used) = emulate_segments(&b[pos..], limits, 1);
    if r.segments != 1 || r.results.len() != 1 || !r.anomalies.is_empty() {
        return None;
    }
    let v = r.results[0].clone();
    acc.absorb(r, pos as u64);
    Some((pos + used, v))
}

/// The `storages` member: a count, then per storage a
/// `(key, location, storage_type)` pickle followed by an element count and
/// the raw elements, then a list of storage views.
pub fn scan_storages(b: &[u8], limits: &VmLimits) -> Option<EmulationResult> {
    let mut acc = EmulationResult::default();
    let (mut pos, n) = one(b, 0, limits, &mut acc)?;
    let n = count(Some(&n))?;
    for _ in 0..n {
        let (p, v) = one(b, pos, limits, &mut acc)?;
        let ArgSummary::Container(items) = v else { return None };
        let ArgSummary::Import(ty) = items.get(2)? else { return None };
        let esize = storage_element_size(ty)?;
        let numel = u64::try_from(i64_at(b, p)?).ok()?;
        let end = (p as u64 + 8).checked_add(numel.checked_mul(esize)?)?;
        if end > b.len() as u64 {
            return None;
        }
        pos = end as usize;
    }
    // then the list of storage views
    if pos < b.len() {
        pos = one(b, pos, limits, &mut acc)?.0;
    }
    (pos == b.len()).then_some(acc)
}

/// The `tensors` member: a count, then per tensor a
/// `(key, storage_id, tensor_type)` pickle followed by the dimension count,
/// four bytes of padding, sizes, strides and the storage offset.
pub fn scan_tensors(b: &[u8], limits: &VmLimits) -> Option<EmulationResult> {
    let mut acc = EmulationResult::default();
    let (mut pos, n) = one(b, 0, limits, &mut acc)?;
    let n = count(Some(&n))?;
    for _ in 0..n {
        let (p, _) = one(b, pos, limits, &mut acc)?;
        let ndim = u64::try_from(i32_at(b, p)?).ok()?;
        let end = (p as u64).checked_add(8 + 16 * ndim + 8)?;
        if end > b.len() as u64 {
            return None;
        }
        pos = end as usize;
    }
    (pos == b.len()).then_some(acc)
}
