//! MinHash signatures over character shingles and banded LSH.
//!
//! Permutations are simulated with universal hashes `(a*x + b) mod p` over
//! the Mersenne prime `p = 2^61 - 1`; the coefficients come from a fixed
//! SplitMix64 stream, so signatures are identical across runs and
//! platforms.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CorpusError, TextDoc};
use crate::rng::CounterRng;

const MERSENNE_61: u64 = (1 << 61) - 1;
const COEFF_SEED: u64 = 0x6d69_6e68_6173_6831;
/// Slot value for an empty shingle set.
pub const EMPTY_SLOT: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashParams {
    pub num_perm: usize,
    pub shingle_len: usize,
}

impl Default for MinHashParams {
    fn default() -> Self {
        Self {
            num_perm: 128,
            shingle_len: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LshParams {
    pub num_perm: usize,
    pub shingle_len: usize,
    pub bands: usize,
    pub rows: usize,
    pub threshold_jaccard: f64,
}

impl Default for LshParams {
    fn default() -> Self {
        Self {
            num_perm: 128,
            shingle_len: 5,
            bands: 32,
            rows: 4,
            threshold_jaccard: 0.8,
        }
    }
}

impl LshParams {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.bands * self.rows != self.num_perm {
            return Err(CorpusError::InvalidParams(format!(
                "bands ({}) x rows ({}) != num_perm ({})",
                self.bands, self.rows, self.num_perm
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold_jaccard) {
            return Err(CorpusError::InvalidParams(format!(
                "threshold_jaccard {} outside [0, 1]",
                self.threshold_jaccard
            )));
        }
        Ok(())
    }

    fn minhash(&self) -> MinHashParams {
        MinHashParams {
            num_perm: self.num_perm,
            shingle_len: self.shingle_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    pub hashes: Vec<u64>,
}

impl MinHashSignature {
    pub fn num_perm(&self) -> usize {
        self.hashes.len()
    }
}

/// Fraction of equal slots. Signatures must have equal length.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> f64 {
    assert_eq!(a.hashes.len(), b.hashes.len(), "signature lengths differ");
    if a.hashes.is_empty() {
        return 0.0;
    }
    let equal = a.hashes.iter().zip(&b.hashes).filter(|(x, y)| x == y).count();
    equal as f64 / a.hashes.len() as f64
}

/// Character shingles of `len` chars. A non-empty text shorter than `len`
/// is a single shingle.
pub fn shingles(text: &str, len: usize) -> BTreeSet<&str> {
    let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
    let n_chars = bounds.len() - 1;
    if n_chars == 0 {
        return BTreeSet::new();
    }
    if n_chars < len {
        return BTreeSet::from([text]);
    }
    (0..=n_chars - len).map(|i| &text[bounds[i]..bounds[i + len]]).collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[inline]
fn mod_mersenne(x: u128) -> u64 {
    let p = MERSENNE_61 as u128;
    let folded = (x & p) + (x >> 61);
    let folded = (folded & p) + (folded >> 61);
    let r = folded as u64;
    if r >= MERSENNE_61 {
        r - MERSENNE_61
    } else {
        r
    }
}

/// Reusable hasher holding the permutation coefficients.
#[derive(Debug, Clone)]
pub struct MinHasher {
    params: MinHashParams,
    coeffs: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(params: MinHashParams) -> Result<Self, CorpusError> {
        if params.num_perm < 16 {
            return Err(CorpusError::InvalidParams(format!("num_perm {} < 16", params.num_perm)));
        }
        if params.shingle_len == 0 {
            return Err(CorpusError::InvalidParams("shingle_len must be >= 1".into()));
        }
        let rng = CounterRng::new(COEFF_SEED);
        let coeffs = (0..params.num_perm as u64)
            .map(|i| {
                let a = 1 + rng.below_at(2 * i, MERSENNE_61 - 1);
                let b = rng.below_at(2 * i + 1, MERSENNE_61);
                (a, b)
            })
            .collect();
        Ok(Self { params, coeffs })
    }

    pub fn params(&self) -> MinHashParams {
        self.params
    }

    pub fn signature(&self, text: &str) -> MinHashSignature {
        let mut hashes = vec![EMPTY_SLOT; self.params.num_perm];
        for shingle in shingles(text, self.params.shingle_len) {
            let x = mod_mersenne(fnv1a(shingle.as_bytes()) as u128) as u128;
            for (slot, &(a, b)) in hashes.iter_mut().zip(&self.coeffs) {
                let h = mod_mersenne(a as u128 * x + b as u128);
                if h < *slot {
                    *slot = h;
                }
            }
        }
        MinHashSignature { hashes }
    }
}

pub fn minhash_signature(text: &str, params: &MinHashParams) -> Result<MinHashSignature, CorpusError> {
    Ok(MinHasher::new(*params)?.signature(text))
}

/// A reported near-duplicate pair, `first < second` as input indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub first: usize,
    pub second: usize,
    pub estimate: f64,
    /// Texts are byte-identical.
    pub exact: bool,
}

/// Candidate pairs share at least one band bucket; a candidate is reported
/// when its estimated Jaccard reaches the threshold. Byte-identical texts
/// are always reported. Output is sorted by `(first, second)`.
pub fn lsh_near_duplicates(docs: &[TextDoc], params: &LshParams) -> Result<Vec<DuplicatePair>, CorpusError> {
    params.validate()?;
    let hasher = MinHasher::new(params.minhash())?;
    let sigs: Vec<MinHashSignature> = docs.par_iter().map(|d| hasher.signature(&d.text)).collect();

    let mut exact_groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, d) in docs.iter().enumerate() {
        exact_groups.entry(d.text.as_str()).or_default().push(i);
    }
    let mut exact = BTreeSet::new();
    for group in exact_groups.values() {
        for (x, &i) in group.iter().enumerate() {
            for &j in &group[x + 1..] {
                exact.insert((i, j));
            }
        }
    }

    let mut candidates = BTreeSet::new();
    for band in 0..params.bands {
        let range = band * params.rows..(band + 1) * params.rows;
        let mut buckets: HashMap<&[u64], Vec<usize>> = HashMap::new();
        for (i, sig) in sigs.iter().enumerate() {
            buckets.entry(&sig.hashes[range.clone()]).or_default().push(i);
        }
        for members in buckets.values() {
            for (x, &i) in members.iter().enumerate() {
                for &j in &members[x + 1..] {
                    candidates.insert((i, j));
                }
            }
        }
    }

    let mut pairs: Vec<DuplicatePair> = candidates
        .union(&exact)
        .filter_map(|&(i, j)| {
            let is_exact = exact.contains(&(i, j));
            let estimate = if is_exact { 1.0 } else { estimate_jaccard(&sigs[i], &sigs[j]) };
            (is_exact || estimate >= params.threshold_jaccard).then_some(DuplicatePair {
                first: i,
                second: j,
                estimate,
                exact: is_exact,
            })
        })
        .collect();
    pairs.sort_by_key(|p| (p.first, p.second));
    Ok(pairs)
}

/// Indices to drop: the later member of every pair whose earlier member is
/// itself kept.
pub fn near_duplicate_drops(pairs: &[DuplicatePair], n_docs: usize) -> Vec<bool> {
    let mut dropped = vec![false; n_docs];
    let mut sorted: Vec<&DuplicatePair> = pairs.iter().collect();
    sorted.sort_by_key(|p| (p.first, p.second));
    for p in sorted {
        if !dropped[p.first] {
            dropped[p.second] = true;
        }
    }
    dropped
}
