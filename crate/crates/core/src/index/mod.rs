//! Offline index structures: the sorted read table and the sorted k-mer
//! fingerprint index used by exact-match filtering, and the minimizer table
//! used by non-matching-read filtering.

mod format;
mod hash;
mod kmer;
mod minimizer;

use rayon::prelude::*;
use thiserror::Error;

use crate::seqio::{revcomp, PackedSeq, ReadSet, ReferenceGenome};

pub use format::{FormatError, IndexFile, IndexKind, FORMAT_VERSION, MAGIC};
pub use hash::{fingerprint, hash64, Fingerprint};
pub use kmer::{build_kmer_index, KmerIndex, Location};
pub use minimizer::{scan_minimizers, segments_excluding, Minimizer};

pub const DEFAULT_K: usize = 15;
pub const DEFAULT_W: usize = 10;
pub const DEFAULT_MAX_LOCATIONS: usize = 495;
pub const DEFAULT_READ_LEN: usize = 150;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("read {read_id} has length {found}, expected {expected}")]
    MixedReadLength {
        read_id: u64,
        expected: usize,
        found: usize,
    },
    #[error("read length {read_len} exceeds reference length {ref_len}")]
    ReadLongerThanReference { read_len: usize, ref_len: usize },
    #[error("invalid index parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct IndexParams {
    pub k: usize,
    pub w: usize,
    pub max_locations: usize,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            k: DEFAULT_K,
            w: DEFAULT_W,
            max_locations: DEFAULT_MAX_LOCATIONS,
        }
    }
}

impl IndexParams {
    pub fn validate(&self) -> Result<(), IndexError> {
        if !(1..=31).contains(&self.k) {
            return Err(IndexError::InvalidParams(format!(
                "k = {} (must be within 1..=31)",
                self.k
            )));
        }
        if self.w == 0 {
            return Err(IndexError::InvalidParams("w must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fingerprint of `seq`, or of its canonical strand when `canonical` is set
/// (the smaller of the sequence and its reverse complement, compared base by base).
pub fn strand_fingerprint(seq: &PackedSeq, canonical: bool) -> Fingerprint {
    if canonical {
        let rc = revcomp(seq);
        if rc.iter().lt(seq.iter()) {
            return fingerprint(&rc);
        }
    }
    fingerprint(seq)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SrEntry {
    pub fp: Fingerprint,
    pub read_id: u64,
    pub raw: PackedSeq,
}

/// Reads sorted by fingerprint, ties by read id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SrTable {
    pub read_len: usize,
    pub canonical: bool,
    pub entries: Vec<SrEntry>,
}

impl SrTable {
    /// Bytes occupied in flash (fingerprint, read id, packed read padded to 8).
    pub fn stored_bytes(&self) -> u64 {
        self.entries
            .iter()
            .map(|e| 24 + (e.raw.as_bytes().len() as u64).div_ceil(8) * 8)
            .sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// First position where ordering is violated, if any.
    pub fn first_unsorted(&self) -> Option<usize> {
        self.entries
            .windows(2)
            .position(|p| (p[0].fp, p[0].read_id) > (p[1].fp, p[1].read_id))
            .map(|i| i + 1)
    }
}

/// Builds the sorted read table from every read without ambiguous bases.
/// All such reads must share one length.
pub fn build_srtable(reads: &ReadSet, canonical: bool) -> Result<SrTable, IndexError> {
    let mut clean = reads.iter().filter(|r| !r.has_ambiguous());
    let Some(first) = clean.next() else {
        return Ok(SrTable {
            read_len: 0,
            canonical,
            entries: Vec::new(),
        });
    };
    let read_len = first.len();
    if let Some(bad) = clean.find(|r| r.len() != read_len) {
        return Err(IndexError::MixedReadLength {
            read_id: bad.id,
            expected: read_len,
            found: bad.len(),
        });
    }
    let mut entries: Vec<SrEntry> = reads
        .par_iter()
        .filter(|r| !r.has_ambiguous())
        .map(|r| SrEntry {
            fp: strand_fingerprint(&r.seq, canonical),
            read_id: r.id,
            raw: r.seq.clone(),
        })
        .collect();
    entries.par_sort_unstable_by_key(|e| (e.fp, e.read_id));
    Ok(SrTable {
        read_len,
        canonical,
        entries,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkEntry {
    pub fp: Fingerprint,
    /// Reference start positions, ascending.
    pub locations: Vec<u64>,
}

/// Fingerprints of every distinct read-sized reference k-mer, strictly ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SkIndex {
    pub k: usize,
    pub canonical: bool,
    pub entries: Vec<SkEntry>,
}

impl SkIndex {
    /// Bytes occupied in flash (fingerprint, count, 8 bytes per location).
    pub fn stored_bytes(&self) -> u64 {
        self.entries.len() as u64 * 24 + self.total_locations() as u64 * 8
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_locations(&self) -> usize {
        self.entries.iter().map(|e| e.locations.len()).sum()
    }

    pub fn first_unsorted(&self) -> Option<usize> {
        self.entries
            .windows(2)
            .position(|p| p[0].fp >= p[1].fp)
            .map(|i| i + 1)
    }

    pub fn lookup(&self, fp: Fingerprint) -> Option<&SkEntry> {
        self.entries
            .binary_search_by_key(&fp, |e| e.fp)
            .ok()
            .map(|i| &self.entries[i])
    }
}

/// Builds the k-mer fingerprint index for `read_len`-sized k-mers.
/// k-mers that overlap an ambiguous base or a record boundary are skipped.
/// Distinct k-mers that collide on fingerprint share one entry.
pub fn build_skindex(
    reference: &ReferenceGenome,
    read_len: usize,
    canonical: bool,
) -> Result<SkIndex, IndexError> {
    if read_len == 0 {
        return Err(IndexError::InvalidParams("read length must be positive".into()));
    }
    if read_len > reference.len() {
        return Err(IndexError::ReadLongerThanReference {
            read_len,
            ref_len: reference.len(),
        });
    }
    let starts: Vec<usize> = reference.clean_kmer_starts(read_len).collect();
    let mut pairs: Vec<(Fingerprint, u64)> = starts
        .par_iter()
        .map(|&p| {
            let kmer = reference.seq.subseq(p, read_len);
            (strand_fingerprint(&kmer, canonical), p as u64)
        })
        .collect();
    pairs.par_sort_unstable();
    let mut entries: Vec<SkEntry> = Vec::new();
    for (fp, loc) in pairs {
        match entries.last_mut() {
            Some(last) if last.fp == fp => last.locations.push(loc),
            _ => entries.push(SkEntry {
                fp,
                locations: vec![loc],
            }),
        }
    }
    Ok(SkIndex {
        k: read_len,
        canonical,
        entries,
    })
}

/// Byte layout used when projecting SKIndex size to genome scale.
///
/// The defaults model the compact on-flash layout: a 64-bit fingerprint word
/// (the width of the hardware comparator) and a 32-bit location per k-mer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkIndexSizeModel {
    pub fingerprint_bytes: f64,
    pub location_bytes: f64,
}

impl Default for SkIndexSizeModel {
    fn default() -> Self {
        SkIndexSizeModel {
            fingerprint_bytes: 8.0,
            location_bytes: 4.0,
        }
    }
}

/// Non-N bases in the GRCh38 primary assembly.
pub const HUMAN_ACGT_BASES: f64 = 2.94e9;

impl SkIndexSizeModel {
    /// Projected bytes for a reference with `acgt_bases` indexable bases.
    pub fn estimate_bytes(&self, acgt_bases: f64, read_len: usize) -> f64 {
        let positions = (acgt_bases - read_len as f64 + 1.0).max(0.0);
        positions * (self.fingerprint_bytes + self.location_bytes)
    }

    /// Same projection with the raw 2-bit k-mer stored instead of a fingerprint.
    pub fn estimate_unoptimized_bytes(&self, acgt_bases: f64, read_len: usize) -> f64 {
        let positions = (acgt_bases - read_len as f64 + 1.0).max(0.0);
        positions * (read_len as f64 / 4.0 + self.location_bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqio::Read;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn random_ascii(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
        (0..len).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect()
    }

    #[test]
    fn srtable_sorts_three_reads() {
        let reads: ReadSet = ["ACGTAC", "TTTTGG", "CAGTCA"]
            .iter()
            .enumerate()
            .map(|(i, s)| Read::from_ascii(i as u64, s.as_bytes()))
            .collect();
        let t = build_srtable(&reads, false).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.first_unsorted(), None);
    }

    #[test]
    fn srtable_duplicates_are_adjacent_by_id() {
        let reads: ReadSet = ["ACGT", "GGGG", "ACGT", "ACGT"]
            .iter()
            .enumerate()
            .map(|(i, s)| Read::from_ascii(i as u64, s.as_bytes()))
            .collect();
        let t = build_srtable(&reads, false).unwrap();
        let fp = fingerprint(&PackedSeq::from_ascii(b"ACGT"));
        let ids: Vec<u64> = t.entries.iter().filter(|e| e.fp == fp).map(|e| e.read_id).collect();
        assert_eq!(ids, vec![0, 2, 3]);
        let pos: Vec<usize> = t.entries.iter().enumerate().filter(|(_, e)| e.fp == fp).map(|(i, _)| i).collect();
        assert!(pos.windows(2).all(|p| p[1] == p[0] + 1));
    }

    #[test]
    fn srtable_rejects_mixed_lengths_and_skips_ambiguous() {
        let reads = vec![
            Read::from_ascii(0, b"ACGT"),
            Read::from_ascii(1, b"ACGN"),
            Read::from_ascii(2, b"ACG"),
        ];
        assert_eq!(
            build_srtable(&reads, false),
            Err(IndexError::MixedReadLength {
                read_id: 2,
                expected: 4,
                found: 3
            })
        );
        let t = build_srtable(&reads[..2].to_vec(), false).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn srtable_sorted_for_many_random_reads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reads: ReadSet = (0..100_000)
            .map(|i| Read::from_ascii(i, &random_ascii(&mut rng, 32)))
            .collect();
        let t = build_srtable(&reads, false).unwrap();
        assert_eq!(t.len(), 100_000);
        assert_eq!(t.first_unsorted(), None);
    }

    #[test]
    fn skindex_single_distinct_kmer() {
        let g = ReferenceGenome::from_ascii("r", b"AAAA");
        let sk = build_skindex(&g, 2, false).unwrap();
        assert_eq!(sk.len(), 1);
        assert_eq!(sk.entries[0].fp, fingerprint(&PackedSeq::from_ascii(b"AA")));
        assert_eq!(sk.entries[0].locations, vec![0, 1, 2]);
    }

    #[test]
    fn skindex_rejects_long_reads() {
        let g = ReferenceGenome::from_ascii("r", b"ACG");
        assert!(matches!(
            build_skindex(&g, 4, false),
            Err(IndexError::ReadLongerThanReference { .. })
        ));
    }

    #[test]
    fn skindex_is_complete_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ascii = random_ascii(&mut rng, 5000);
        ascii[1234] = b'N';
        let mut g = ReferenceGenome::from_ascii("r", &ascii);
        g.boundaries = vec![3000];
        let k = 40;
        let sk = build_skindex(&g, k, false).unwrap();
        assert_eq!(sk.first_unsorted(), None);
        // brute force: every clean start appears under the fingerprint of its substring
        let mut expected: HashMap<&[u8], Vec<u64>> = HashMap::new();
        let mut clean = 0;
        for p in 0..=ascii.len() - k {
            let window = &ascii[p..p + k];
            let crosses = p < 3000 && p + k > 3000;
            if window.contains(&b'N') || crosses {
                continue;
            }
            clean += 1;
            expected.entry(window).or_default().push(p as u64);
        }
        assert_eq!(sk.total_locations(), clean);
        assert_eq!(sk.len(), expected.len());
        for (kmer, locs) in expected {
            let e = sk.lookup(fingerprint(&PackedSeq::from_ascii(kmer))).unwrap();
            assert_eq!(e.locations, locs);
        }
    }

    #[test]
    fn skindex_counting_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = ReferenceGenome::from_ascii("r", &random_ascii(&mut rng, 3000));
        for k in [1, 7, 150, 3000] {
            let sk = build_skindex(&g, k, false).unwrap();
            assert_eq!(sk.total_locations(), 3000 - k + 1);
        }
    }

    #[test]
    fn canonical_fingerprint_matches_both_strands() {
        let s = PackedSeq::from_ascii(b"ACCGTTAGGA");
        assert_eq!(strand_fingerprint(&s, true), strand_fingerprint(&revcomp(&s), true));
        assert_ne!(strand_fingerprint(&s, false), strand_fingerprint(&revcomp(&s), false));
    }

    #[test]
    fn human_scale_skindex_projection() {
        let est = SkIndexSizeModel::default().estimate_bytes(HUMAN_ACGT_BASES, 150);
        assert!((est / 32e9 - 1.0).abs() <= 0.15, "projected {est}");
    }

    #[test]
    fn params_validation() {
        assert!(IndexParams::default().validate().is_ok());
        assert!(IndexParams { k: 32, ..Default::default() }.validate().is_err());
        assert!(IndexParams { w: 0, ..Default::default() }.validate().is_err());
    }
}
