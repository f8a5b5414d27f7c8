//! Container and compression layers around a payload. Every layer is
//! deterministic: timestamps are zeroed and member order is fixed.

use super::ForgeError;
use crate::container::zip::StoredZipWriter;
use std::io::Write;

/// `storages` member of a legacy torch tar with nothing stored: a zero
/// count, then an empty list of storage views.
pub const EMPTY_STORAGES: &[u8] = b"\x80\x02K\x00.\x80\x02].";
/// `tensors` member with no tensors.
pub const EMPTY_TENSORS: &[u8] = b"\x80\x02K\x00.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layer {
    /// Single stored member.
    Zip { member: String },
    /// Zip-format torch checkpoint: `archive/data.pkl` plus the small
    /// bookkeeping records the loader reads.
    TorchZip,
    Tar { member: String },
    /// Legacy torch tar: `storages`, `pickle`, `tensors`.
    LegacyTorchTar,
    Gzip,
    Zlib,
    Bz2 { level: u32 },
    Lzma,
    Xz,
    Lz4,
    /// `.npy` header for a one-element object array.
    NpyObject,
    /// Old joblib zlib preamble: `ZF` and the hex length, then zlib.
    JoblibPreamble,
}

impl Layer {
    /// Short name used in fixture manifests.
    pub fn tag(&self) -> String {
        match self {
            Layer::Zip { member } => format!("zip({member})"),
            Layer::TorchZip => "zip(archive/data.pkl)".into(),
            Layer::Tar { member } => format!("tar({member})"),
            Layer::LegacyTorchTar => "tar(storages,pickle,tensors)".into(),
            Layer::Gzip => "gzip".into(),
            Layer::Zlib => "zlib".into(),
            Layer::Bz2 { level } => format!("bz2({level})"),
            Layer::Lzma => "lzma".into(),
            Layer::Xz => "xz".into(),
            Layer::Lz4 => "lz4".into(),
            Layer::NpyObject => "npy-object-header".into(),
            Layer::JoblibPreamble => "joblib-preamble".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Layer, ForgeError> {
        let (head, arg) = match s.split_once('(') {
            Some((h, rest)) => (h, rest.strip_suffix(')').ok_or_else(|| ForgeError::UnknownLayer(s.into()))?),
            None => (s, ""),
        };
        Ok(match (head, arg) {
            ("zip", "archive/data.pkl") => Layer::TorchZip,
            ("zip", m) if !m.is_empty() => Layer::Zip { member: m.into() },
            ("tar", "storages,pickle,tensors") => Layer::LegacyTorchTar,
            ("tar", m) if !m.is_empty() => Layer::Tar { member: m.into() },
            ("gzip", "") => Layer::Gzip,
            ("zlib", "") => Layer::Zlib,
            ("bz2", l) => Layer::Bz2 { level: if l.is_empty() { 9 } else { l.parse().map_err(|_| ForgeError::UnknownLayer(s.into()))? } },
            ("lzma", "") => Layer::Lzma,
            ("xz", "") => Layer::Xz,
            ("lz4", "") => Layer::Lz4,
            ("npy-object-header", "") => Layer::NpyObject,
            ("joblib-preamble", "") => Layer::JoblibPreamble,
            _ => return Err(ForgeError::UnknownLayer(s.into())),
        })
    }
}

/// Apply `layers` innermost first.
pub fn wrap(payload: &[u8], layers: &[Layer]) -> Result<Vec<u8>, ForgeError> {
    let mut cur = payload.to_vec();
    for l in layers {
        cur = wrap_one(&cur, l)?;
    }
    Ok(cur)
}

fn io(e: std::io::Error) -> ForgeError {
    ForgeError::Io(e.to_string())
}

fn wrap_one(p: &[u8], layer: &Layer) -> Result<Vec<u8>, ForgeError> {
    Ok(match layer {
        Layer::Zip { member } => {
            let mut w = StoredZipWriter::new();
            w.add(member, p);
            w.finish()
        }
        Layer::TorchZip => {
            let mut w = StoredZipWriter::new();
            w.add("archive/data.pkl", p);
            w.add("archive/byteorder", b"little");
            w.add("archive/version", b"3\n");
            w.finish()
        }
        Layer::Tar { member } => tar(&[(member.as_str(), p)])?,
        Layer::LegacyTorchTar => tar(&[("storages", EMPTY_STORAGES), ("pickle", p), ("tensors", EMPTY_TENSORS)])?,
        Layer::Gzip => {
            let mut e = flate2::GzBuilder::new().mtime(0).write(Vec::new(), flate2::Compression::default());
            e.write_all(p).map_err(io)?;
            e.finish().map_err(io)?
        }
        Layer::Zlib => zlib(p)?,
        Layer::Bz2 { level } => {
            if !(1..=9).contains(level) {
                return Err(ForgeError::UnknownLayer(layer.tag()));
            }
            let mut e = bzip2::write::BzEncoder::new(Vec::new(), bzip2::Compression::new(*level));
            e.write_all(p).map_err(io)?;
            e.finish().map_err(io)?
        }
        Layer::Lzma => {
            let mut out = Vec::new();
            lzma_rs::lzma_compress(&mut &p[..], &mut out).map_err(io)?;
            out
        }
        Layer::Xz => {
            let mut out = Vec::new();
            lzma_rs::xz_compress(&mut &p[..], &mut out).map_err(io)?;
            out
        }
        Layer::Lz4 => {
            let mut e = lz4_flex::frame::FrameEncoder::new(Vec::new());
            e.write_all(p).map_err(io)?;
            e.finish().map_err(|e| ForgeError::Io(e.to_string()))?
        }
        Layer::NpyObject => npy_object(p),
        Layer::JoblibPreamble => {
            let mut out = format!("ZF0x{:x}", p.len()).into_bytes();
            out.resize(out.len().max(2 + 19), b' ');
            out.extend(zlib(p)?);
            out
        }
    })
}

fn zlib(p: &[u8]) -> Result<Vec<u8>, ForgeError> {
    let mut e = flate2::write::ZlibEncoder::new(Vec::new(), flate2::Compression::default());
    e.write_all(p).map_err(io)?;
    e.finish().map_err(io)
}

fn tar(members: &[(&str, &[u8])]) -> Result<Vec<u8>, ForgeError> {
    let mut b = tar::Builder::new(Vec::new());
    for (name, data) in members {
        let mut h = tar::Header::new_ustar();
        h.set_size(data.len() as u64);
        h.set_mode(0o644);
        h.set_mtime(0);
        h.set_entry_type(tar::EntryType::Regular);
        b.append_data(&mut h, name, *data).map_err(io)?;
    }
    b.into_inner().map_err(io)
}

fn npy_object(p: &[u8]) -> Vec<u8> {
    let dict = "{'descr': '|O', 'fortran_order': False, 'shape': (1,), }";
    // magic(6) + version(2) + length(2) + header, padded to 64 with a final newline
    let unpadded = 10 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    let header = format!("{dict}{}\n", " ".repeat(pad));
    let mut out = b"\x93NUMPY\x01\x00".to_vec();
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(p);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::{sniff, FormatTag};

    #[test]
    fn identity() {
        assert_eq!(wrap(b"\x80\x02N.", &[]).unwrap(), b"\x80\x02N.".to_vec());
    }

    #[test]
    fn layers_sniff_as_themselves() {
        let p = b"\x80\x02N.";
        let cases = [
            (Layer::Gzip, FormatTag::Gzip),
            (Layer::Zlib, FormatTag::Zlib),
            (Layer::Bz2 { level: 4 }, FormatTag::Bz2),
            (Layer::Lzma, FormatTag::Lzma),
            (Layer::Xz, FormatTag::Xz),
            (Layer::Lz4, FormatTag::Lz4),
            (Layer::Zip { member: "a".into() }, FormatTag::Zip),
            (Layer::Tar { member: "a".into() }, FormatTag::Tar),
            (Layer::NpyObject, FormatTag::Npy),
        ];
        for (l, tag) in cases {
            assert_eq!(sniff(&wrap(p, std::slice::from_ref(&l)).unwrap()), tag, "{}", l.tag());
        }
    }

    #[test]
    fn npy_header_is_aligned() {
        let b = wrap(b"N.", &[Layer::NpyObject]).unwrap();
        let hlen = u16::from_le_bytes([b[8], b[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
        assert_eq!(b[10 + hlen - 1], b'\n');
        assert_eq!(&b[10 + hlen..], b"N.");
    }

    #[test]
    fn deterministic() {
        let l = [Layer::LegacyTorchTar, Layer::Tar { member: "m".into() }, Layer::Gzip];
        assert_eq!(wrap(b"N.", &l).unwrap(), wrap(b"N.", &l).unwrap());
    }

    #[test]
    fn tags_round_trip() {
        let all = [
            Layer::Zip { member: "x.npy".into() },
            Layer::TorchZip,
            Layer::Tar { member: "m.pkl".into() },
            Layer::LegacyTorchTar,
            Layer::Gzip,
            Layer::Zlib,
            Layer::Bz2 { level: 4 },
            Layer::Lzma,
            Layer::Xz,
            Layer::Lz4,
            Layer::NpyObject,
            Layer::JoblibPreamble,
        ];
        for l in all {
            assert_eq!(Layer::parse(&l.tag()).unwrap(), l);
        }
        assert!(Layer::parse("rar").is_err());
    }
}
