//! Exact-match filtering: a single linear merge of the sorted read table
//! against the sorted reference k-mer fingerprints.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::index::{Fingerprint, SkEntry, SkIndex, SrEntry, SrTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EmError {
    #[error("SRTable is not sorted at entry {0}")]
    UnsortedSrTable(usize),
    #[error("SKIndex is not strictly sorted at entry {0}")]
    UnsortedSkIndex(usize),
    #[error("SRTable read length {read_len} does not match SKIndex k {k}")]
    LengthMismatch { read_len: usize, k: usize },
    #[error("SRTable and SKIndex disagree on canonical-strand fingerprints")]
    StrandMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub enum EmVerdict {
    Forward = 0,
    ExactMatch = 1,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmDecision {
    pub read_id: u64,
    pub verdict: EmVerdict,
    /// Reference start positions; filled only for exact matches when emission is on.
    pub locations: Vec<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct EmStats {
    pub reads_total: u64,
    pub reads_filtered: u64,
    pub reads_forwarded: u64,
    pub comparator_steps: u64,
}

impl EmStats {
    fn merge(&mut self, other: &EmStats) {
        self.reads_total += other.reads_total;
        self.reads_filtered += other.reads_filtered;
        self.reads_forwarded += other.reads_forwarded;
        self.comparator_steps += other.comparator_steps;
    }
}

/// Pulls entries out of a sorted slice one fixed-size batch at a time,
/// the way the device streams pages into its batch buffers.
struct BatchStream<'a, T> {
    src: &'a [T],
    batch: usize,
    next_batch: usize,
    buffer: &'a [T],
    consumed: usize,
}

impl<'a, T> BatchStream<'a, T> {
    fn new(src: &'a [T], batch: usize) -> Self {
        BatchStream {
            src,
            batch: batch.max(1),
            next_batch: 0,
            buffer: &[],
            consumed: 0,
        }
    }

    fn peek(&mut self) -> Option<&'a T> {
        if self.buffer.is_empty() && self.next_batch < self.src.len() {
            let end = (self.next_batch + self.batch).min(self.src.len());
            self.buffer = &self.src[self.next_batch..end];
            self.next_batch = end;
        }
        self.buffer.first()
    }

    fn advance(&mut self) {
        self.buffer = &self.buffer[1..];
        self.consumed += 1;
    }
}

fn check_inputs(sr: &SrTable, sk: &SkIndex) -> Result<(), EmError> {
    if !sr.is_empty() && !sk.is_empty() && sr.read_len != sk.k {
        return Err(EmError::LengthMismatch {
            read_len: sr.read_len,
            k: sk.k,
        });
    }
    if !sr.is_empty() && !sk.is_empty() && sr.canonical != sk.canonical {
        return Err(EmError::StrandMismatch);
    }
    Ok(())
}

/// Merge-joins `sr` against `sk`, reading both in batches of the given entry counts.
fn merge(
    sr: &[SrEntry],
    sk: &[SkEntry],
    sr_batch: usize,
    sk_batch: usize,
    emit_locations: bool,
    offsets: (usize, usize),
) -> Result<(Vec<EmDecision>, EmStats), EmError> {
    let mut reads = BatchStream::new(sr, sr_batch);
    let mut kmers = BatchStream::new(sk, sk_batch);
    let mut out = Vec::with_capacity(sr.len());
    let mut stats = EmStats::default();
    let mut prev_read: Option<(Fingerprint, u64)> = None;
    let mut prev_kmer: Option<Fingerprint> = None;

    while let Some(r) = reads.peek() {
        let key = (r.fp, r.read_id);
        if prev_read.is_some_and(|p| p > key) {
            return Err(EmError::UnsortedSrTable(offsets.0 + reads.consumed));
        }
        let verdict = loop {
            let Some(k) = kmers.peek() else {
                break None;
            };
            if prev_kmer.is_some_and(|p| p >= k.fp) && kmers.consumed > 0 {
                return Err(EmError::UnsortedSkIndex(offsets.1 + kmers.consumed));
            }
            stats.comparator_steps += 1;
            match r.fp.cmp(&k.fp) {
                std::cmp::Ordering::Equal => break Some(k),
                std::cmp::Ordering::Less => break None,
                std::cmp::Ordering::Greater => {
                    prev_kmer = Some(k.fp);
                    kmers.advance();
                }
            }
        };
        let decision = match verdict {
            Some(k) => {
                stats.reads_filtered += 1;
                EmDecision {
                    read_id: r.read_id,
                    verdict: EmVerdict::ExactMatch,
                    locations: if emit_locations { k.locations.clone() } else { Vec::new() },
                }
            }
            None => {
                stats.reads_forwarded += 1;
                EmDecision {
                    read_id: r.read_id,
                    verdict: EmVerdict::Forward,
                    locations: Vec::new(),
                }
            }
        };
        out.push(decision);
        stats.reads_total += 1;
        prev_read = Some(key);
        reads.advance();
    }
    Ok((out, stats))
}

/// Classifies every SRTable read as an exact match or as forwarded to the host.
///
/// Decisions come out in SRTable order. Reads sharing a fingerprint all match
/// the same SKIndex entry.
pub fn em_filter(
    srtable: &SrTable,
    skindex: &SkIndex,
    emit_locations: bool,
) -> Result<(Vec<EmDecision>, EmStats), EmError> {
    check_inputs(srtable, skindex)?;
    merge(
        &srtable.entries,
        &skindex.entries,
        srtable.len().max(1),
        skindex.len().max(1),
        emit_locations,
        (0, 0),
    )
}

/// As [`em_filter`], streaming each structure in batches of the given entry counts.
pub fn em_filter_batched(
    srtable: &SrTable,
    skindex: &SkIndex,
    sr_batch_entries: usize,
    sk_batch_entries: usize,
    emit_locations: bool,
) -> Result<(Vec<EmDecision>, EmStats), EmError> {
    check_inputs(srtable, skindex)?;
    merge(
        &srtable.entries,
        &skindex.entries,
        sr_batch_entries,
        sk_batch_entries,
        emit_locations,
        (0, 0),
    )
}

/// Splits both structures at common fingerprint boundaries and merges the
/// ranges in parallel. Output equals [`em_filter`] for any `parts`.
pub fn em_filter_partitioned(
    srtable: &SrTable,
    skindex: &SkIndex,
    parts: usize,
    emit_locations: bool,
) -> Result<(Vec<EmDecision>, EmStats), EmError> {
    check_inputs(srtable, skindex)?;
    if let Some(i) = srtable.first_unsorted() {
        return Err(EmError::UnsortedSrTable(i));
    }
    if let Some(i) = skindex.first_unsorted() {
        return Err(EmError::UnsortedSkIndex(i));
    }
    let parts = parts.clamp(1, srtable.len().max(1));
    let sr = &srtable.entries;
    let sk = &skindex.entries;
    // boundaries at SRTable quantiles; all reads with one fingerprint stay together
    let mut cuts = vec![(0usize, 0usize)];
    for p in 1..parts {
        let fp = sr[p * sr.len() / parts].fp;
        let i = sr.partition_point(|e| e.fp < fp);
        let j = sk.partition_point(|e| e.fp < fp);
        if i > cuts.last().unwrap().0 {
            cuts.push((i, j));
        }
    }
    cuts.push((sr.len(), sk.len()));
    let pieces: Vec<_> = cuts
        .par_windows(2)
        .map(|c| {
            let (a, b) = (c[0], c[1]);
            merge(
                &sr[a.0..b.0],
                &sk[a.1..b.1],
                usize::MAX,
                usize::MAX,
                emit_locations,
                a,
            )
        })
        .collect::<Result<_, _>>()?;
    let mut decisions = Vec::with_capacity(sr.len());
    let mut stats = EmStats::default();
    for (d, s) in pieces {
        decisions.extend(d);
        stats.merge(&s);
    }
    Ok((decisions, stats))
}

/// Writes decisions as `read_id u64 | verdict u8 | location count u32 | locations u64…`, little-endian.
pub fn write_decisions<W: Write>(out: &mut W, decisions: &[EmDecision]) -> io::Result<()> {
    for d in decisions {
        out.write_all(&d.read_id.to_le_bytes())?;
        out.write_all(&[d.verdict as u8])?;
        out.write_all(&(d.locations.len() as u32).to_le_bytes())?;
        for l in &d.locations {
            out.write_all(&l.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Parses a stream written by [`write_decisions`].
pub fn read_decisions(mut bytes: &[u8]) -> io::Result<Vec<EmDecision>> {
    let bad = || io::Error::new(io::ErrorKind::InvalidData, "truncated decision stream");
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 13 {
            return Err(bad());
        }
        let read_id = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        let verdict = match bytes[8] {
            0 => EmVerdict::Forward,
            1 => EmVerdict::ExactMatch,
            v => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("unknown verdict {v}"),
                ))
            }
        };
        let n = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        bytes = &bytes[13..];
        if bytes.len() < n * 8 {
            return Err(bad());
        }
        let locations = bytes[..n * 8]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        bytes = &bytes[n * 8..];
        out.push(EmDecision {
            read_id,
            verdict,
            locations,
        });
    }
    Ok(out)
}
