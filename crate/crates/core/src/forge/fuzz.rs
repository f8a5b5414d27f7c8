//! Seeded input generation for the no-crash gate: random bytes, random
//! opcode soup, and mutations of corpus fixtures.

use super::assemble::{call_pickle, Literal, Variant};
use super::corpus::full_corpus;
use super::wrap::{wrap, Layer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_RANDOM_LEN: usize = 4096;

pub struct FuzzInputs {
    rng: ChaCha8Rng,
    bases: Vec<Vec<u8>>,
    left: usize,
}

/// `count` inputs, identical for identical seeds.
pub fn fuzz_inputs(seed: u64, count: usize) -> FuzzInputs {
    let mut bases: Vec<Vec<u8>> = full_corpus().map(|c| c.into_iter().map(|f| f.bytes).collect()).unwrap_or_default();
    for v in Variant::ALL {
        if let Ok(b) = call_pickle("builtins", "print", &[Literal::Str("pg-canary:fuzz".into())], v) {
            bases.push(b);
        }
    }
    FuzzInputs { rng: ChaCha8Rng::seed_from_u64(seed), bases, left: count }
}

impl FuzzInputs {
    fn random_bytes(&mut self) -> Vec<u8> {
        let n = self.rng.gen_range(0..MAX_RANDOM_LEN);
        let mut v = vec![0u8; n];
        self.rng.fill(&mut v[..]);
        v
    }

    /// Opcode bytes with short random operands; often parses for a while.
    fn opcode_soup(&mut self) -> Vec<u8> {
        const OPS: &[u8] = b"()*.0125:=?BCFGHIJKLMNPQRSTUVXabcdeghijklopqrstu}~\x80\x81\x82\x83\x84\x85\x86\x87\x88\x89\x8a\x8b\x8c\x8d\x8e\x8f\x90\x91\x92\x93\x94\x95\x96\x97\x98";
        let mut v = Vec::new();
        if self.rng.gen_bool(0.5) {
            v.extend_from_slice(&[0x80, self.rng.gen_range(0..7)]);
        }
        for _ in 0..self.rng.gen_range(1..200) {
            v.push(OPS[self.rng.gen_range(0..OPS.len())]);
            for _ in 0..self.rng.gen_range(0..6) {
                v.push(match self.rng.gen_range(0..4) {
                    0 => b'\n',
                    1 => self.rng.gen(),
                    _ => self.rng.gen_range(0..4),
                });
            }
        }
        v
    }

    fn mutate(&mut self, mut v: Vec<u8>) -> Vec<u8> {
        for _ in 0..self.rng.gen_range(1..8) {
            if v.is_empty() {
                v.push(self.rng.gen());
                continue;
            }
            let i = self.rng.gen_range(0..v.len());
            match self.rng.gen_range(0..6) {
                0 => v[i] ^= 1 << self.rng.gen_range(0..8),
                1 => v[i] = self.rng.gen(),
                2 => v.truncate(i),
                3 => {
                    let b = self.rng.gen();
                    v.insert(i, b)
                }
                4 => {
                    let j = self.rng.gen_range(i..v.len().min(i + 64) + 1);
                    let chunk = v[i..j].to_vec();
                    let at = self.rng.gen_range(0..=v.len());
                    v.splice(at..at, chunk);
                }
                _ => {
                    // interesting integers in length and offset fields
                    let val: u32 = [0, 1, 0x7fff_ffff, 0xffff_ffff, 0x8000_0000, 0xffff][self.rng.gen_range(0..6)];
                    let end = (i + 4).min(v.len());
                    let bytes = val.to_le_bytes();
                    v[i..end].copy_from_slice(&bytes[..end - i]);
                }
            }
        }
        v
    }

    fn rewrapped(&mut self) -> Vec<u8> {
        let base = self.bases[self.rng.gen_range(0..self.bases.len())].clone();
        let inner = self.mutate(base);
        let pool = [
            Layer::Gzip,
            Layer::Zlib,
            Layer::Bz2 { level: 1 },
            Layer::Xz,
            Layer::Lz4,
            Layer::Tar { member: "m".into() },
            Layer::Zip { member: "m".into() },
            Layer::NpyObject,
            Layer::JoblibPreamble,
        ];
        let layers: Vec<Layer> = (0..self.rng.gen_range(1..4)).map(|_| pool[self.rng.gen_range(0..pool.len())].clone()).collect();
        let out = wrap(&inner, &layers).unwrap_or(inner);
        if self.rng.gen_bool(0.5) {
            self.mutate(out)
        } else {
            out
        }
    }
}

impl Iterator for FuzzInputs {
    type Item = Vec<u8>;
    fn next(&mut self) -> Option<Vec<u8>> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        Some(match self.rng.gen_range(0..10) {
            0 => self.random_bytes(),
            1..=3 => self.opcode_soup(),
            4..=7 if !self.bases.is_empty() => {
                let b = self.bases[self.rng.gen_range(0..self.bases.len())].clone();
                self.mutate(b)
            }
            _ if !self.bases.is_empty() => self.rewrapped(),
            _ => self.random_bytes(),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.left, Some(self.left))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_sized() {
        let a: Vec<Vec<u8>> = fuzz_inputs(7, 50).collect();
        let b: Vec<Vec<u8>> = fuzz_inputs(7, 50).collect();
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
        let c: Vec<Vec<u8>> = fuzz_inputs(8, 50).collect();
        assert_ne!(a, c);
    }
}
