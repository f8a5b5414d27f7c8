//! `.npy` headers. Object arrays carry a pickle after the header.

use super::sniff::NPY_MAGIC;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpyHeader {
    pub major: u8,
    pub minor: u8,
    pub descr: String,
    /// Offset of the array payload.
    pub data_offset: usize,
    pub object_dtype: bool,
}

/// Parse the header; `Err` carries a reason suitable for an anomaly.
pub fn parse_npy(b: &[u8]) -> Result<NpyHeader, String> {
    if !b.starts_with(NPY_MAGIC) || b.len() < 10 {
        return Err("missing npy magic".into());
    }
    let (major, minor) = (b[6], b[7]);
    let (hlen, start) = match major {
        1 => (u16::from_le_bytes([b[8], b[9]]) as usize, 10usize),
        2 | 3 => {
            if b.len() < 12 {
                return Err("npy header length truncated".into());
            }
            (u32::from_le_bytes(b[8..12].try_into().unwrap()) as usize, 12)
        }
        v => return Err(format!("unsupported npy version {v}.{minor}")),
    };
    let end = start.checked_add(hlen).filter(|e| *e <= b.len()).ok_or("npy header runs past end")?;
    let text = String::from_utf8_lossy(&b[start..end]);
    let descr = descr_value(&text).ok_or("npy header has no descr")?;
    let object_dtype = is_object_descr(&descr);
    Ok(NpyHeader { major, minor, descr, data_offset: end, object_dtype })
}

/// The raw text of the `descr` value in the header dict.
fn descr_value(h: &str) -> Option<String> {
    let at = h.find("'descr'").or_else(|| h.find("\"descr\""))?;
    let rest = h[at + 7..].trim_start().strip_prefix(':')?.trim_start();
    let first = rest.chars().next()?;
    if first == '\'' || first == '"' {
        let close = rest[1..].find(first)?;
        return Some(rest[1..1 + close].to_string());
    }
    if first == '[' {
        let mut depth = 0i32;
        for (i, c) in rest.char_indices() {
            match c {
                '[' | '(' => depth += 1,
                ']' | ')' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(rest[..=i].to_string());
                    }
                }
                _ => {}
            }
        }
    }
    None
}

fn is_object_descr(d: &str) -> bool {
    if d.starts_with('[') {
        d.contains("'O'") || d.contains("'|O'") || d.contains("\"|O\"") || d.contains("\"O\"")
    } else {
        matches!(d, "O" | "|O" | "<O" | ">O" | "=O")
    }
}
