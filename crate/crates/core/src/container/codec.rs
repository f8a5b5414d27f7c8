//! Bounded decompression. Output beyond the limit is cut off and reported;
//! a stream that breaks mid-way keeps whatever decoded before the break.

use super::sniff::{joblib_zf_header_len, FormatTag, LZ4_LEGACY_MAGIC};
use std::io::{self, Read, Write};

#[derive(Debug)]
pub struct Decoded {
    pub data: Vec<u8>,
    /// True when output was cut at the limit.
    pub truncated: bool,
    pub error: Option<String>,
}

/// `Write` sink that refuses to grow past a byte limit.
pub struct BudgetWriter {
    pub buf: Vec<u8>,
    limit: usize,
    pub hit_limit: bool,
}

impl BudgetWriter {
    pub fn new(limit: usize) -> Self {
        BudgetWriter { buf: Vec::new(), limit, hit_limit: false }
    }
}

impl Write for BudgetWriter {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        let room = self.limit - self.buf.len();
        if data.len() > room {
            self.buf.extend_from_slice(&data[..room]);
            self.hit_limit = true;
            return Err(io::Error::other("decode budget exhausted"));
        }
        self.buf.extend_from_slice(data);
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn read_bounded<R: Read>(r: R, limit: usize) -> Decoded {
    let mut data = Vec::new();
    let res = r.take(limit as u64 + 1).read_to_end(&mut data);
    let truncated = data.len() > limit;
    data.truncate(limit);
    Decoded { data, truncated, error: res.err().map(|e| e.to_string()) }
}

fn lz4_legacy(input: &[u8], limit: usize) -> Decoded {
    const BLOCK: usize = 8 << 20;
    let mut out = Vec::new();
    let mut pos = 4;
    let mut error = None;
    let mut truncated = false;
    while pos + 4 <= input.len() {
        let n = u32::from_le_bytes(input[pos..pos + 4].try_into().unwrap()) as usize;
        if input[pos..].starts_with(&LZ4_LEGACY_MAGIC) {
            pos += 4;
            continue;
        }
        pos += 4;
        if n > input.len() - pos {
            error = Some("lz4 legacy block runs past end".to_string());
            break;
        }
        match lz4_flex::block::decompress(&input[pos..pos + n], BLOCK) {
            Ok(b) => out.extend_from_slice(&b),
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
        pos += n;
        if out.len() > limit {
            out.truncate(limit);
            truncated = true;
            break;
        }
    }
    Decoded { data: out, truncated, error }
}

/// Decode one codec layer of `input`, producing at most `limit` bytes.
pub fn decode(tag: FormatTag, input: &[u8], limit: usize) -> Decoded {
    match tag {
        FormatTag::Gzip => read_bounded(flate2::read::MultiGzDecoder::new(input), limit),
        FormatTag::Zlib => {
            let skip = joblib_zf_header_len(input).unwrap_or(0);
            read_bounded(flate2::read::ZlibDecoder::new(&input[skip..]), limit)
        }
        FormatTag::Bz2 => read_bounded(bzip2::read::MultiBzDecoder::new(input), limit),
        FormatTag::Lz4 => {
            if input.starts_with(&LZ4_LEGACY_MAGIC) {
                lz4_legacy(input, limit)
            } else {
                read_bounded(lz4_flex::frame::FrameDecoder::new(input), limit)
            }
        }
        FormatTag::Xz | FormatTag::Lzma => {
            let mut w = BudgetWriter::new(limit);
            let mut r = io::BufReader::new(input);
            let res = if tag == FormatTag::Xz {
                lzma_rs::xz_decompress(&mut r, &mut w)
            } else {
                lzma_rs::lzma_decompress(&mut r, &mut w)
            };
            let error = match res {
                Ok(()) => None,
                Err(_) if w.hit_limit => None,
                Err(e) => Some(format!("{e:?}")),
            };
            Decoded { truncated: w.hit_limit, data: w.buf, error }
        }
        other => Decoded { data: Vec::new(), truncated: false, error: Some(format!("{other} is not a codec")) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gz(data: &[u8]) -> Vec<u8> {
        let mut e = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        e.write_all(data).unwrap();
        e.finish().unwrap()
    }

    #[test]
    fn concatenated_gzip_members() {
        let mut two = gz(b"abc");
        two.extend(gz(b"def"));
        assert_eq!(decode(FormatTag::Gzip, &two, 100).data, b"abcdef");
    }

    #[test]
    fn limit_truncates() {
        let big = gz(&vec![0u8; 100_000]);
        let d = decode(FormatTag::Gzip, &big, 1000);
        assert_eq!(d.data.len(), 1000);
        assert!(d.truncated);
    }

    #[test]
    fn broken_stream_keeps_prefix() {
        let full = gz(&[7u8; 5000]);
        let d = decode(FormatTag::Gzip, &full[..full.len() - 8], 10_000);
        assert_eq!(d.data.len(), 5000);
        assert!(d.error.is_some());
    }

    #[test]
    fn xz_and_lzma_limits() {
        let data = vec![1u8; 50_000];
        let mut x = Vec::new();
        lzma_rs::xz_compress(&mut &data[..], &mut x).unwrap();
        let d = decode(FormatTag::Xz, &x, 100);
        assert!(d.truncated && d.data.len() == 100 && d.error.is_none());
        let mut l = Vec::new();
        lzma_rs::lzma_compress(&mut &data[..], &mut l).unwrap();
        assert_eq!(decode(FormatTag::Lzma, &l, 1 << 20).data, data);
    }

    #[test]
    fn lz4_frame_and_legacy() {
        let data = b"pickle pickle pickle pickle".repeat(10);
        let mut e = lz4_flex::frame::FrameEncoder::new(Vec::new());
        e.write_all(&data).unwrap();
        let f = e.finish().unwrap();
        assert_eq!(decode(FormatTag::Lz4, &f, 1 << 20).data, data);
        let block = lz4_flex::block::compress(&data);
        let mut legacy = LZ4_LEGACY_MAGIC.to_vec();
        legacy.extend((block.len() as u32).to_le_bytes());
        legacy.extend(block);
        assert_eq!(decode(FormatTag::Lz4, &legacy, 1 << 20).data, data);
    }
}
