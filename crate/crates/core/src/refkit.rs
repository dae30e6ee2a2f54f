//! Brute-force reference implementations used to check the filters.
//!
//! Everything here works on plain ASCII sequences and recomputes k-mers,
//! strands and gap costs from scratch. Only `hash64` is shared with the
//! filter code, and it is pinned by golden values of its own.

use std::collections::HashMap;

use crate::index::hash64;
use crate::nmfilter::{NmParams, Seed};

/// Largest reference the oracles accept.
pub const MAX_REFERENCE_BASES: usize = 10_000_000;
/// Largest seed list the oracles accept.
pub const MAX_SEEDS: usize = 4096;

fn check_reference(len: usize) {
    assert!(
        len <= MAX_REFERENCE_BASES,
        "oracle input of {len} bases exceeds the {MAX_REFERENCE_BASES}-base cap"
    );
}

/// Every start position where `read` occurs verbatim in `reference`.
pub fn naive_exact_match(read: &[u8], reference: &[u8]) -> Vec<u64> {
    check_reference(reference.len());
    if read.is_empty() || read.len() > reference.len() {
        return Vec::new();
    }
    (0..=reference.len() - read.len())
        .filter(|&p| &reference[p..p + read.len()] == read)
        .map(|p| p as u64)
        .collect()
}

/// Table of every length-`len` substring of a reference, for answering many
/// exact-match queries. Equivalent to calling [`naive_exact_match`] per read.
pub struct SubstringOracle<'a> {
    len: usize,
    table: HashMap<&'a [u8], Vec<u64>>,
}

impl<'a> SubstringOracle<'a> {
    pub fn new(reference: &'a [u8], len: usize) -> Self {
        check_reference(reference.len());
        let mut table: HashMap<&[u8], Vec<u64>> = HashMap::new();
        if len > 0 && len <= reference.len() {
            for (p, w) in reference.windows(len).enumerate() {
                table.entry(w).or_default().push(p as u64);
            }
        }
        SubstringOracle { len, table }
    }

    pub fn locations(&self, read: &[u8]) -> &[u64] {
        if read.len() != self.len {
            return &[];
        }
        self.table.get(read).map_or(&[], Vec::as_slice)
    }
}

fn complement(c: u8) -> u8 {
    match c {
        b'A' => b'T',
        b'C' => b'G',
        b'G' => b'C',
        b'T' => b'A',
        other => other,
    }
}

fn encode(kmer: &[u8]) -> u64 {
    kmer.iter().fold(0u64, |v, &c| {
        let code = match c {
            b'A' => 0,
            b'C' => 1,
            b'G' => 2,
            b'T' => 3,
            _ => unreachable!("ambiguous bases are split out before encoding"),
        };
        (v << 2) | code
    })
}

/// Minimizers as `(hash, end position, reverse-strand canonical)`, ascending by position.
///
/// Sequences are split at every non-ACGT symbol; each piece with fewer than
/// `w` k-mers contributes only its smallest k-mer.
pub fn naive_minimizers(seq: &[u8], k: usize, w: usize) -> Vec<(u64, usize, bool)> {
    check_reference(seq.len());
    let upper: Vec<u8> = seq.iter().map(u8::to_ascii_uppercase).collect();
    let mut picked: Vec<(u64, usize, bool)> = Vec::new();
    let mut start = 0;
    while start < upper.len() {
        let end = (start..upper.len())
            .find(|&i| !b"ACGT".contains(&upper[i]))
            .unwrap_or(upper.len());
        let piece = &upper[start..end];
        if piece.len() >= k {
            let kmers: Vec<(u64, usize, bool)> = piece
                .windows(k)
                .enumerate()
                .map(|(i, km)| {
                    let fwd = encode(km);
                    let rc_str: Vec<u8> = km.iter().rev().map(|&c| complement(c)).collect();
                    let rc = encode(&rc_str);
                    (hash64(fwd.min(rc)), start + i + k - 1, rc < fwd)
                })
                .collect();
            let best = |win: &[(u64, usize, bool)]| *win.iter().min_by_key(|m| (m.0, m.1)).unwrap();
            if kmers.len() < w {
                picked.push(best(&kmers));
            } else {
                for win in kmers.windows(w) {
                    picked.push(best(win));
                }
            }
        }
        start = end + 1;
    }
    picked.sort_by_key(|m| m.1);
    picked.dedup();
    picked
}

fn exact_gap_penalty(a: &Seed, b: &Seed, params: &NmParams) -> Option<i64> {
    if a.rev != b.rev || b.x <= a.x || b.y <= a.y {
        return None;
    }
    let dx = (b.x - a.x) as i64;
    let dy = (b.y - a.y) as i64;
    let gap = (dy - dx).unsigned_abs();
    if gap > params.max_gap {
        return None;
    }
    if gap == 0 {
        return Some(0);
    }
    let g = gap as f64;
    Some((params.k as f64 * g / 100.0 + 0.5 * g.log2()).floor() as i64)
}

/// Best chaining score over all predecessors (no lookback limit), O(n²).
pub fn naive_chain(seeds: &[Seed], params: &NmParams) -> i64 {
    assert!(seeds.len() <= MAX_SEEDS, "oracle accepts at most {MAX_SEEDS} seeds");
    let mut f: Vec<i64> = Vec::with_capacity(seeds.len());
    for (i, s) in seeds.iter().enumerate() {
        let mut best = s.w as i64;
        for j in 0..i {
            let p = &seeds[j];
            if let Some(beta) = exact_gap_penalty(p, s, params) {
                let dx = (s.x - p.x) as i64;
                let dy = (s.y - p.y) as i64;
                let alpha = dx.min(dy).min(s.w as i64);
                best = best.max(f[j] + alpha - beta);
            }
        }
        f.push(best);
    }
    f.into_iter().max().unwrap_or(0)
}
