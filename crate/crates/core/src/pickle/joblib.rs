//! joblib writes numpy array payloads inline, straight after the BUILD of a
//! `NumpyArrayWrapper`. Plain dtypes are raw bytes (optionally preceded by a
//! padding-length byte and padding); object dtypes are a nested pickle.

use super::emulate::{ArgSummary, SymbolicValue};

pub const WRAPPER_NAMES: &[&str] =
    &["joblib.numpy_pickle.NumpyArrayWrapper", "sklearn.externals.joblib.numpy_pickle.NumpyArrayWrapper"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayPayload {
    /// Raw element bytes of this length.
    Raw(u64),
    /// A nested pickle stream.
    Pickle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InlineArray {
    /// A padding-length byte and that much padding precede raw payloads.
    pub padded: bool,
    pub payload: ArrayPayload,
}

/// Bytes per element for a dtype reduce string such as `f8` or `U5`.
/// `None` for object, void and anything not understood.
pub fn itemsize(descr: &str) -> Option<u64> {
    let d = descr.trim_start_matches(['<', '>', '|', '=']);
    let code = d.chars().next()?;
    let digits = &d[code.len_utf8()..];
    let n: u64 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    match code {
        'b' | 'i' | 'u' | 'f' | 'c' | 'S' if n > 0 => Some(n),
        '?' if n == 0 => Some(1),
        'U' if n > 0 => n.checked_mul(4),
        'M' | 'm' => Some(8),
        _ => None,
    }
}

fn is_object(descr: &str) -> bool {
    let d = descr.trim_start_matches(['<', '>', '|', '=']);
    d == "O" || d == "O8" || d == "O4"
}

fn dict_get<'a>(items: &'a [super::emulate::Val], key: &str) -> Option<&'a SymbolicValue> {
    items.chunks_exact(2).find_map(|kv| match &*kv[0] {
        SymbolicValue::Str(k) if k == key => Some(&*kv[1]),
        _ => None,
    })
}

/// Inspect the BUILD state of a wrapper. `None` when the payload layout
/// cannot be established, in which case nothing is skipped.
pub fn inline_array(state: &SymbolicValue) -> Option<InlineArray> {
    let SymbolicValue::Container { items, dropped: 0, .. } = state else { return None };
    let padded = !matches!(dict_get(items, "numpy_array_alignment_bytes"), None | Some(SymbolicValue::None));
    let SymbolicValue::CallResult { callee, args, .. } = dict_get(items, "dtype")? else { return None };
    if callee.fqname() != "numpy.dtype" {
        return None;
    }
    let Some(ArgSummary::Str(descr)) = args.first() else { return None };
    if is_object(descr) {
        return Some(InlineArray { padded: false, payload: ArrayPayload::Pickle });
    }
    let size = itemsize(descr)?;
    let SymbolicValue::Container { items: dims, dropped: 0, .. } = dict_get(items, "shape")? else { return None };
    let mut count: u64 = 1;
    for d in dims {
        let SymbolicValue::Int(s) = &**d else { return None };
        count = count.checked_mul(s.parse().ok()?)?;
    }
    Some(InlineArray { padded, payload: ArrayPayload::Raw(count.checked_mul(size)?) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn itemsizes() {
        assert_eq!(itemsize("f8"), Some(8));
        assert_eq!(itemsize("U5"), Some(20));
        assert_eq!(itemsize("b1"), Some(1));
        assert_eq!(itemsize("M8"), Some(8));
        assert_eq!(itemsize("V12"), None);
        assert_eq!(itemsize("O8"), None);
        assert_eq!(itemsize("f"), None);
    }
}
