//! The `forge` subcommand.

use crate::args::ForgeArgs;
use crate::config::ConfigError;
use pickleguard_core::forge::{bomb_fixtures, eop_fixture, full_corpus, fuzz_inputs, gadget_fixture, manifest, row_fixture, Family, Fixture};
use pickleguard_core::risk::GadgetDatabase;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MANIFEST: &str = "manifest.json";

#[derive(Serialize)]
struct FuzzEntry {
    file: String,
    sha256: String,
}

fn selected(a: &ForgeArgs) -> Result<Vec<Fixture>, ConfigError> {
    let err = |e: pickleguard_core::forge::ForgeError| ConfigError(e.to_string());
    let rows = || (1..=22).map(row_fixture).collect::<Result<Vec<_>, _>>();
    let eops = || pickleguard_core::forge::Eop::ALL.into_iter().map(eop_fixture).collect::<Result<Vec<_>, _>>();
    let gadgets = || GadgetDatabase::seed().entries.iter().map(|g| gadget_fixture(&g.fqname)).collect::<Result<Vec<_>, _>>();
    Ok(match a.family.as_str() {
        "all" => {
            let mut v = full_corpus().map_err(err)?;
            v.extend(bomb_fixtures(a.bomb_size).map_err(err)?);
            v
        }
        "rows" => rows().map_err(err)?,
        "eop" => eops().map_err(err)?,
        "gadgets" => gadgets().map_err(err)?,
        "bombs" => bomb_fixtures(a.bomb_size).map_err(err)?,
        one => {
            let fam: Family = one.parse().map_err(err)?;
            let f = match &fam {
                Family::Row(r) => row_fixture(*r),
                Family::Eop(e) => eop_fixture(*e),
                Family::Gadget(g) => gadget_fixture(g),
                Family::Bomb(_) => Ok(bomb_fixtures(a.bomb_size).map_err(err)?.into_iter().find(|f| f.family == fam).ok_or_else(|| ConfigError(format!("unknown family {one:?}")))?),
            };
            vec![f.map_err(err)?]
        }
    })
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), ConfigError> {
    std::fs::write(dir.join(name), bytes).map_err(|e| ConfigError(format!("{}: {e}", dir.join(name).display())))
}

pub fn run(a: &ForgeArgs) -> Result<(String, i32), ConfigError> {
    std::fs::create_dir_all(&a.out_dir).map_err(|e| ConfigError(format!("{}: {e}", a.out_dir.display())))?;
    if a.family == "fuzz" {
        let width = a.count.max(1).to_string().len();
        let mut entries = Vec::new();
        for (i, bytes) in fuzz_inputs(a.seed, a.count).enumerate() {
            let file = format!("fuzz-{i:0width$}.bin");
            write(&a.out_dir, &file, &bytes)?;
            entries.push(FuzzEntry { file, sha256: sha256_hex(&bytes) });
        }
        let m = serde_json::to_string_pretty(&entries).expect("manifest serializes") + "\n";
        write(&a.out_dir, MANIFEST, m.as_bytes())?;
        return Ok((format!("wrote {} fuzz inputs (seed {}) to {}\n", entries.len(), a.seed, a.out_dir.display()), 0));
    }
    let fixtures = selected(a)?;
    for f in &fixtures {
        write(&a.out_dir, &f.file_name, &f.bytes)?;
    }
    let m = serde_json::to_string_pretty(&manifest(&fixtures)).expect("manifest serializes") + "\n";
    write(&a.out_dir, MANIFEST, m.as_bytes())?;
    Ok((format!("wrote {} fixtures to {}\n", fixtures.len(), a.out_dir.display()), 0))
}

fn sha256_hex(b: &[u8]) -> String {
    hex::encode(Sha256::digest(b))
}
