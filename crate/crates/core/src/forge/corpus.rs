//! The fixture families and their manifest.

use super::assemble::{call_pickle, Literal, Variant, SENTINEL};
use super::malform::{malform, Eop};
use super::wrap::{wrap, Layer};
use super::ForgeError;
use crate::container::LOADING_PATH_ROWS;
use crate::risk::{GadgetDatabase, Verdict};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    /// 1-based loading path row.
    Row(u8),
    Eop(Eop),
    Gadget(String),
    Bomb(String),
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Row(r) => write!(f, "row-{r:02}"),
            Family::Eop(e) => write!(f, "{}", e.to_string().to_ascii_lowercase()),
            Family::Gadget(g) => write!(f, "gadget-{g}"),
            Family::Bomb(b) => write!(f, "bomb-{b}"),
        }
    }
}

impl FromStr for Family {
    type Err = ForgeError;
    fn from_str(s: &str) -> Result<Self, ForgeError> {
        let bad = || ForgeError::UnknownFamily(s.to_string());
        if let Some(r) = s.strip_prefix("row-") {
            let n: u8 = r.parse().map_err(|_| bad())?;
            if (1..=LOADING_PATH_ROWS.len() as u8).contains(&n) {
                return Ok(Family::Row(n));
            }
            return Err(bad());
        }
        if s.to_ascii_lowercase().starts_with("eop-") {
            return s.parse::<Eop>().map(Family::Eop).map_err(|_| bad());
        }
        if let Some(g) = s.strip_prefix("gadget-") {
            return Ok(Family::Gadget(g.to_string()));
        }
        if let Some(b) = s.strip_prefix("bomb-") {
            return Ok(Family::Bomb(b.to_string()));
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub family: Family,
    pub file_name: String,
    /// Fully qualified callable the fixture calls.
    pub canary: String,
    /// Sentinel argument, unique per fixture.
    pub sentinel: String,
    pub layers: Vec<String>,
    pub expected: Verdict,
    /// Whether the framework that reads this layout still loads it.
    pub loadable: bool,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub family: String,
    pub canary: String,
    pub sentinel: String,
    pub layers: Vec<String>,
    pub sha256: String,
    pub expected_verdict: Verdict,
    pub loadable: bool,
}

fn tar(m: &str) -> Layer {
    Layer::Tar { member: m.into() }
}

fn zip(m: &str) -> Layer {
    Layer::Zip { member: m.into() }
}

/// Layers (innermost first) and file name for each row.
fn row_layout(row: u8) -> (Vec<Layer>, &'static str) {
    use Layer::*;
    let ckpt = "model_weights.ckpt";
    match row {
        1 => (vec![], "model.pkl"),
        2 => (vec![TorchZip], "model.pt"),
        3 => (vec![LegacyTorchTar], "model.pt"),
        4 => (vec![Gzip], "model.joblib"),
        5 => (vec![Zlib], "model.joblib"),
        6 => (vec![Bz2 { level: 4 }], "model.joblib"),
        7 => (vec![Lzma], "model.joblib"),
        8 => (vec![Xz], "model.joblib"),
        9 => (vec![Lz4], "model.joblib"),
        10 => (vec![tar("model.pkl"), Gzip], "model.tar.gz"),
        11 => (vec![Gzip, tar("model.joblib")], "bundle.tar"),
        12 => (vec![Zlib, tar("model.joblib")], "bundle.tar"),
        13 => (vec![Bz2 { level: 4 }, tar("model.joblib")], "bundle.tar"),
        14 => (vec![Lzma, tar("model.joblib")], "bundle.tar"),
        15 => (vec![Xz, tar("model.joblib")], "bundle.tar"),
        16 => (vec![Lz4, tar("model.joblib")], "bundle.tar"),
        17 => (vec![NpyObject, zip("arr_0.npy"), zip("weights.npz")], "bundle.zip"),
        18 => (vec![tar("model.pkl"), zip("model.tar")], "bundle.zip"),
        19 => (vec![TorchZip, tar(ckpt)], "model.nemo"),
        20 => (vec![LegacyTorchTar, tar(ckpt)], "model.nemo"),
        21 => (vec![TorchZip, tar(ckpt), Gzip], "model.tgz"),
        22 => (vec![LegacyTorchTar, tar(ckpt), Gzip], "model.tgz"),
        _ => panic!("row {row} out of range"),
    }
}

fn canary_call(sentinel: &str, variant: Variant) -> Vec<u8> {
    call_pickle("builtins", "print", &[Literal::Str(sentinel.into())], variant).expect("sentinel encodes")
}

fn finish(family: Family, file_name: String, canary: &str, sentinel: String, layers: &[Layer], bytes: Vec<u8>, loadable: bool) -> Fixture {
    Fixture {
        family,
        file_name,
        canary: canary.into(),
        sentinel,
        layers: layers.iter().map(Layer::tag).collect(),
        expected: Verdict::Malicious,
        loadable,
        bytes,
    }
}

/// One fixture per loading path row.
pub fn row_fixture(row: u8) -> Result<Fixture, ForgeError> {
    if !(1..=LOADING_PATH_ROWS.len() as u8).contains(&row) {
        return Err(ForgeError::UnknownFamily(format!("row-{row}")));
    }
    let family = Family::Row(row);
    let sentinel = format!("{SENTINEL}:{family}");
    // rotate through the loadable encodings
    let variant = [Variant::GlobalOp, Variant::StackGlobal, Variant::Memoized][(row as usize - 1) % 3];
    let (layers, name) = row_layout(row);
    let bytes = wrap(&canary_call(&sentinel, variant), &layers)?;
    Ok(finish(family.clone(), format!("{family}-{name}"), "builtins.print", sentinel, &layers, bytes, true))
}

pub fn eop_fixture(eop: Eop) -> Result<Fixture, ForgeError> {
    let family = Family::Eop(eop);
    let sentinel = format!("{SENTINEL}:{family}");
    let (layers, bytes, name) = match eop {
        Eop::Eop1 => (vec![], malform(&canary_call(&sentinel, Variant::StackGlobal), eop)?, "model.pkl"),
        Eop::Eop2 => (vec![], malform(&canary_call(&sentinel, Variant::GlobalOp), eop)?, "model.pt"),
        Eop::Eop3 => (vec![], malform(&canary_call(&sentinel, Variant::GlobalOp), eop)?, "model.pkl"),
        _ => {
            let layers = vec![Layer::TorchZip];
            let base = wrap(&canary_call(&sentinel, Variant::GlobalOp), &layers)?;
            (layers, malform(&base, eop)?, "model.pt")
        }
    };
    let mut f = finish(family.clone(), format!("{family}-{name}"), "builtins.print", sentinel, &layers, bytes, eop.loadable());
    f.layers.push(format!("malform({eop})"));
    Ok(f)
}

/// A direct call of a database gadget with inert sentinel arguments. Helper
/// gadgets fetch `str.upper` and call it on the sentinel.
pub fn gadget_fixture(fqname: &str) -> Result<Fixture, ForgeError> {
    let (module, name) = fqname.rsplit_once('.').ok_or_else(|| ForgeError::UnknownFamily(fqname.into()))?;
    let s = SENTINEL.to_string();
    let args: Vec<Literal> = match fqname {
        "numpy.f2py.capi_maps.getinit" => vec![Literal::Str(s.clone()), Literal::Dict(vec![])],
        "cgitb.lookup" => vec![Literal::Str(s.clone()), Literal::None, Literal::Dict(vec![(Literal::Str(s.clone()), Literal::Str(s.clone()))])],
        "logging.config._resolve" => vec![Literal::Str("builtins.print".into())],
        "xmlrpc.server.resolve_dotted_attribute" => vec![Literal::Global("builtins".into(), "str".into()), Literal::Str("upper".into())],
        _ => return Err(ForgeError::UnknownFamily(format!("gadget-{fqname}"))),
    };
    let mut bytes = call_pickle(module, name, &args, Variant::GlobalOp)?;
    if fqname == "xmlrpc.server.resolve_dotted_attribute" {
        // call the fetched attribute
        bytes.pop();
        bytes.push(b'X');
        bytes.extend_from_slice(&(s.len() as u32).to_le_bytes());
        bytes.extend_from_slice(s.as_bytes());
        bytes.extend_from_slice(b"\x85R.");
    }
    // the resolver gadget's only argument is the benign name it resolves
    let sentinel = if fqname == "logging.config._resolve" { "builtins.print".to_string() } else { s };
    let family = Family::Gadget(fqname.into());
    Ok(finish(family.clone(), format!("{family}.pkl"), fqname, sentinel, &[], bytes, true))
}

/// Resource-exhaustion shapes: deep zip nesting and a high-ratio stream.
/// `scale` is the decompressed size of the ratio bomb in bytes.
pub fn bomb_fixtures(scale: usize) -> Result<Vec<Fixture>, ForgeError> {
    let sentinel = format!("{SENTINEL}:bomb");
    let inner = canary_call(&sentinel, Variant::GlobalOp);
    let nested: Vec<Layer> = (0..10).map(|i| zip(&format!("layer{i}.zip"))).collect();
    let deep = wrap(&inner, &nested)?;
    let mut padded = inner.clone();
    padded.resize(scale.max(inner.len()), b'N');
    let ratio = wrap(&padded, &[Layer::Gzip])?;
    let mk = |name: &str, layers: &[Layer], bytes: Vec<u8>, expected| Fixture {
        family: Family::Bomb(name.into()),
        file_name: format!("bomb-{name}.bin"),
        canary: "builtins.print".into(),
        sentinel: sentinel.clone(),
        layers: layers.iter().map(Layer::tag).collect(),
        expected,
        loadable: false,
        bytes,
    };
    Ok(vec![
        mk("nested-zip", &nested, deep, Verdict::UnscannableSuspicious),
        mk("ratio", &[Layer::Gzip], ratio, Verdict::Malicious),
    ])
}

/// Rows, EOP cases and seed gadgets, in a fixed order.
pub fn full_corpus() -> Result<Vec<Fixture>, ForgeError> {
    let mut out = Vec::new();
    for r in 1..=LOADING_PATH_ROWS.len() as u8 {
        out.push(row_fixture(r)?);
    }
    for e in Eop::ALL {
        out.push(eop_fixture(e)?);
    }
    for g in &GadgetDatabase::seed().entries {
        out.push(gadget_fixture(&g.fqname)?);
    }
    Ok(out)
}

pub fn manifest(fixtures: &[Fixture]) -> Vec<ManifestEntry> {
    fixtures
        .iter()
        .map(|f| ManifestEntry {
            file: f.file_name.clone(),
            family: f.family.to_string(),
            canary: f.canary.clone(),
            sentinel: f.sentinel.clone(),
            layers: f.layers.clone(),
            sha256: hex::encode(Sha256::digest(&f.bytes)),
            expected_verdict: f.expected,
            loadable: f.loadable,
        })
        .collect()
}
