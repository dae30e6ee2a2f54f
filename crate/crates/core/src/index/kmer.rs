use super::minimizer::{scan_minimizers, Minimizer};
use super::{IndexError, IndexParams};
use crate::seqio::ReferenceGenome;

/// A reference occurrence of a minimizer: last-base position and canonical strand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location {
    pub end: u64,
    pub rev: bool,
}

impl Location {
    #[inline]
    pub fn pack(self) -> u64 {
        (self.end << 1) | self.rev as u64
    }

    #[inline]
    pub fn unpack(v: u64) -> Location {
        Location {
            end: v >> 1,
            rev: v & 1 == 1,
        }
    }
}

const EMPTY: u32 = u32::MAX;

/// Minimizer hash table. One minimizer per bucket, open addressing with linear
/// probing, capacity the next power of two at or above twice the number of kept
/// minimizers. Minimizers with more than `max_locations` occurrences are not stored,
/// nor is the reference itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KmerIndex {
    pub params: IndexParams,
    /// Kept minimizers as `(hash, offset into locations, count)`, ascending by hash.
    groups: Vec<(u64, u64, u32)>,
    /// Per-bucket index into `groups`, or `EMPTY`.
    buckets: Vec<u32>,
    locations: Vec<u64>,
}

impl KmerIndex {
    pub(crate) fn from_groups(params: IndexParams, groups: Vec<(u64, Vec<u64>)>) -> KmerIndex {
        let capacity = (2 * groups.len()).max(1).next_power_of_two();
        let mut buckets = vec![EMPTY; capacity];
        let mut flat = Vec::with_capacity(groups.iter().map(|g| g.1.len()).sum());
        let mut table = Vec::with_capacity(groups.len());
        for (gi, (hash, locs)) in groups.into_iter().enumerate() {
            let mut slot = hash as usize & (capacity - 1);
            while buckets[slot] != EMPTY {
                slot = (slot + 1) & (capacity - 1);
            }
            buckets[slot] = gi as u32;
            table.push((hash, flat.len() as u64, locs.len() as u32));
            flat.extend(locs);
        }
        KmerIndex {
            params,
            groups: table,
            buckets,
            locations: flat,
        }
    }

    /// Packed locations for a minimizer hash, or `None` when absent.
    pub fn lookup(&self, hash: u64) -> Option<&[u64]> {
        let mask = self.buckets.len() - 1;
        let mut slot = hash as usize & mask;
        loop {
            let gi = self.buckets[slot];
            if gi == EMPTY {
                return None;
            }
            let (h, off, n) = self.groups[gi as usize];
            if h == hash {
                return Some(&self.locations[off as usize..off as usize + n as usize]);
            }
            slot = (slot + 1) & mask;
        }
    }

    /// Number of stored minimizers.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn total_locations(&self) -> usize {
        self.locations.len()
    }

    /// Stored minimizers in ascending hash order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &[u64])> + '_ {
        self.groups
            .iter()
            .map(|&(h, off, n)| (h, &self.locations[off as usize..off as usize + n as usize]))
    }

    /// Resident footprint: one 16-byte bucket record per bucket plus 8 bytes per location.
    pub fn resident_bytes(&self) -> u64 {
        self.buckets.len() as u64 * 16 + self.locations.len() as u64 * 8
    }
}

/// Builds the minimizer table over the clean segments of `reference`.
/// References shorter than one full window give an empty table.
pub fn build_kmer_index(reference: &ReferenceGenome, params: IndexParams) -> Result<KmerIndex, IndexError> {
    params.validate()?;
    if reference.len() < params.k + params.w - 1 {
        return Ok(KmerIndex::from_groups(params, Vec::new()));
    }
    let mut mins: Vec<Minimizer> = scan_minimizers(&reference.seq, &reference.clean_segments(), params.k, params.w);
    mins.sort_unstable();
    let mut groups: Vec<(u64, Vec<u64>)> = Vec::new();
    for m in mins {
        let loc = Location {
            end: m.end as u64,
            rev: m.rev,
        }
        .pack();
        match groups.last_mut() {
            Some((h, locs)) if *h == m.hash => locs.push(loc),
            _ => groups.push((m.hash, vec![loc])),
        }
    }
    groups.retain(|(_, locs)| locs.len() <= params.max_locations);
    Ok(KmerIndex::from_groups(params, groups))
}
