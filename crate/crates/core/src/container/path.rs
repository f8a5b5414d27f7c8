use super::sniff::FormatTag;
use serde::{Deserialize, Serialize};

/// The loading paths of the reference loader matrix, in table order.
/// Compression inside tar members is labelled by codec.
pub const LOADING_PATH_ROWS: [&str; 22] = [
    "pkl",
    "zip→pkl",
    "tar→pkl",
    "gz→pkl",
    "zlib→pkl",
    "bz2→pkl",
    "lzma→pkl",
    "xz→pkl",
    "lz4→pkl",
    "gz→tar→pkl",
    "tar→gz→pkl",
    "tar→zlib→pkl",
    "tar→bz2→pkl",
    "tar→lzma→pkl",
    "tar→xz→pkl",
    "tar→lz4→pkl",
    "zip→zip→pkl",
    "zip→tar→pkl",
    "tar→zip→pkl",
    "tar→tar→pkl",
    "gz→tar→zip→pkl",
    "gz→tar→tar→pkl",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoadingPathLabel {
    /// Formats from the root to the pickle-bearing node.
    pub chain: Vec<FormatTag>,
    /// 1-based row in [`LOADING_PATH_ROWS`], if the chain is listed there.
    pub row: Option<u8>,
}

impl LoadingPathLabel {
    pub fn from_chain(chain: Vec<FormatTag>) -> Self {
        let key = Self::row_key(&chain);
        let row = LOADING_PATH_ROWS.iter().position(|r| *r == key).map(|i| i as u8 + 1);
        LoadingPathLabel { chain, row }
    }

    /// Chain as written, e.g. `zip→npy`.
    pub fn chain_string(&self) -> String {
        self.chain.iter().map(|f| f.label()).collect::<Vec<_>>().join("→")
    }

    /// Chain with object arrays counted as pickles, which is how rows are keyed.
    pub fn row_key(chain: &[FormatTag]) -> String {
        chain
            .iter()
            .map(|f| if *f == FormatTag::Npy { "pkl" } else { f.label() })
            .collect::<Vec<_>>()
            .join("→")
    }

    pub fn row_name(&self) -> &'static str {
        match self.row {
            Some(r) => LOADING_PATH_ROWS[r as usize - 1],
            None => "unlisted",
        }
    }
}
