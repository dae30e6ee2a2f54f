//! Non-matching-read filtering: minimizer seeding, a seed-count gate and
//! selective chaining with an over-estimating score.
//!
//! Reads with fewer than `min_seeds` seeds cannot reach the chaining
//! threshold and are dropped. Reads that hit the `max_seeds` cap almost
//! always align and go straight to the host. Everything in between is
//! chained in-device and forwarded only if its (approximate, never lower
//! than exact) score reaches `min_chain_score`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{scan_minimizers, segments_excluding, KmerIndex, Location, Minimizer};
use crate::seqio::Read;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NmError {
    #[error("seeds are not sorted by (strand, x, y) at position {0}")]
    UnsortedSeeds(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NmParams {
    /// Fewer seeds than this → filtered without chaining.
    pub min_seeds: usize,
    /// Seed cap; reaching it forwards the read.
    pub max_seeds: usize,
    /// DP lookback window.
    pub lookback: usize,
    pub w: usize,
    pub k: usize,
    pub min_chain_score: i64,
    pub max_gap: u64,
}

impl Default for NmParams {
    fn default() -> Self {
        NmParams {
            min_seeds: 3,
            max_seeds: 64,
            lookback: 50,
            w: 10,
            k: 15,
            min_chain_score: 40,
            max_gap: 5000,
        }
    }
}

impl NmParams {
    pub fn validate(&self) -> Result<(), NmError> {
        if self.min_seeds < 1 || self.min_seeds > self.max_seeds {
            return Err(NmError::InvalidParams(format!(
                "need 1 <= M <= N, got M = {}, N = {}",
                self.min_seeds, self.max_seeds
            )));
        }
        if self.lookback < 1 {
            return Err(NmError::InvalidParams("lookback must be at least 1".into()));
        }
        if !(1..=31).contains(&self.k) || self.w < 1 {
            return Err(NmError::InvalidParams(format!("bad k/w: {}/{}", self.k, self.w)));
        }
        Ok(())
    }
}

/// An exact minimizer hit: ending positions in the reference (`x`) and in the
/// read (`y`), and the seed length. For reverse-strand hits `y` is measured on
/// the reverse-complemented read so that colinear seeds increase in both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Seed {
    pub x: u64,
    pub y: u64,
    pub w: u32,
    pub rev: bool,
}

impl Seed {
    fn sort_key(&self) -> (bool, u64, u64) {
        (self.rev, self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum NmVerdict {
    FilterLowSeeds = 0,
    FilterLowChain = 1,
    ForwardManySeeds = 2,
    ForwardChained = 3,
}

impl NmVerdict {
    pub fn is_forwarded(self) -> bool {
        matches!(self, NmVerdict::ForwardManySeeds | NmVerdict::ForwardChained)
    }

    fn from_code(v: u8) -> Option<NmVerdict> {
        Some(match v {
            0 => NmVerdict::FilterLowSeeds,
            1 => NmVerdict::FilterLowChain,
            2 => NmVerdict::ForwardManySeeds,
            3 => NmVerdict::ForwardChained,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NmDecision {
    pub read_id: u64,
    pub verdict: NmVerdict,
    /// Chaining score, or -1 when chaining was skipped.
    pub best_score: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    FilterLowSeeds,
    Chain,
    ForwardManySeeds,
}

/// Minimizers of a read; k-mers touching an ambiguous base are skipped.
pub fn minimizers(read: &Read, k: usize, w: usize) -> Vec<Minimizer> {
    let segs = segments_excluding(read.len(), read.ambiguous.iter().map(|&a| a as usize));
    scan_minimizers(&read.seq, &segs, k, w)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeedHits {
    pub seeds: Vec<Seed>,
    /// Index lookups performed.
    pub queries: usize,
}

/// Queries minimizers in read order, one seed per stored location, stopping
/// as soon as `cap` seeds have been collected.
pub fn collect_seeds(read: &Read, index: &KmerIndex, cap: usize) -> SeedHits {
    let k = index.params.k;
    let mut hits = SeedHits::default();
    if cap == 0 {
        return hits;
    }
    for m in minimizers(read, k, index.params.w) {
        hits.queries += 1;
        let Some(locs) = index.lookup(m.hash) else {
            continue;
        };
        for &packed in locs {
            let loc = Location::unpack(packed);
            let rev = loc.rev != m.rev;
            let y = if rev {
                (read.len() + k - 2 - m.end) as u64
            } else {
                m.end as u64
            };
            hits.seeds.push(Seed {
                x: loc.end,
                y,
                w: k as u32,
                rev,
            });
            if hits.seeds.len() == cap {
                return hits;
            }
        }
    }
    hits
}

/// Seed finding capped at `params.max_seeds`.
pub fn seed_find(read: &Read, index: &KmerIndex, params: &NmParams) -> Vec<Seed> {
    collect_seeds(read, index, params.max_seeds).seeds
}

pub fn seed_count_gate(seed_count: usize, params: &NmParams) -> Gate {
    if seed_count < params.min_seeds {
        Gate::FilterLowSeeds
    } else if seed_count >= params.max_seeds {
        Gate::ForwardManySeeds
    } else {
        Gate::Chain
    }
}

/// Sorts seeds into chaining order: strand, then reference end, then read end.
pub fn sort_seeds(seeds: &mut [Seed]) {
    seeds.sort_unstable_by_key(Seed::sort_key);
}

/// Per-seed DP scores and best predecessors.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChainState {
    pub f: Vec<i64>,
    pub pred: Vec<Option<usize>>,
}

impl ChainState {
    pub fn best(&self) -> i64 {
        self.f.iter().copied().max().unwrap_or(0)
    }
}

/// Gap between consecutive seeds, or `None` when `b` cannot follow `a`.
fn gap(a: &Seed, b: &Seed, params: &NmParams) -> Option<(i64, i64, u64)> {
    if a.rev != b.rev || b.x <= a.x || b.y <= a.y {
        return None;
    }
    let dx = (b.x - a.x) as i64;
    let dy = (b.y - a.y) as i64;
    let l = (dy - dx).unsigned_abs();
    (l <= params.max_gap).then_some((dx, dy, l))
}

fn exact_penalty(l: u64, k: usize) -> i64 {
    if l == 0 {
        return 0;
    }
    let g = l as f64;
    (k as f64 * g / 100.0 + 0.5 * g.log2()).floor() as i64
}

/// Shift-only penalty, never above [`exact_penalty`]:
/// `k·l/128` stands in for `0.01·k·l` and `floor(log2 l)` for `log2 l`.
fn shift_penalty(l: u64, k: usize) -> i64 {
    if l == 0 {
        return 0;
    }
    let floor_log2 = 63 - l.leading_zeros() as u64;
    ((((k as u64 * l) >> 6) + floor_log2) >> 1) as i64
}

fn chain_dp(seeds: &[Seed], params: &NmParams, penalty: fn(u64, usize) -> i64) -> Result<ChainState, NmError> {
    if let Some(i) = seeds.windows(2).position(|p| p[0].sort_key() > p[1].sort_key()) {
        return Err(NmError::UnsortedSeeds(i + 1));
    }
    let mut st = ChainState {
        f: Vec::with_capacity(seeds.len()),
        pred: Vec::with_capacity(seeds.len()),
    };
    for (i, s) in seeds.iter().enumerate() {
        let mut best = s.w as i64;
        let mut pred = None;
        for j in i.saturating_sub(params.lookback)..i {
            let Some((dx, dy, l)) = gap(&seeds[j], s, params) else {
                continue;
            };
            let alpha = dx.min(dy).min(s.w as i64);
            let score = st.f[j] + alpha - penalty(l, params.k);
            if score > best {
                best = score;
                pred = Some(j);
            }
        }
        st.f.push(best);
        st.pred.push(pred);
    }
    Ok(st)
}

/// Full DP state of the exact chaining recurrence over a sorted seed list.
pub fn chain_exact_state(seeds: &[Seed], params: &NmParams) -> Result<ChainState, NmError> {
    chain_dp(seeds, params, exact_penalty)
}

/// Best chain score with exact gap costs and a lookback of `params.lookback` seeds.
pub fn chain_score_exact(seeds: &[Seed], params: &NmParams) -> Result<i64, NmError> {
    chain_dp(seeds, params, exact_penalty).map(|s| s.best())
}

/// Best chain score with the shift-based gap cost. Always `>=` [`chain_score_exact`].
pub fn chain_score_approx(seeds: &[Seed], params: &NmParams) -> Result<i64, NmError> {
    chain_dp(seeds, params, shift_penalty).map(|s| s.best())
}

/// Runs the three filtering steps on one read.
pub fn nm_filter(read: &Read, index: &KmerIndex, params: &NmParams) -> NmDecision {
    let mut seeds = seed_find(read, index, params);
    let decision = |verdict, best_score| NmDecision {
        read_id: read.id,
        verdict,
        best_score,
    };
    match seed_count_gate(seeds.len(), params) {
        Gate::FilterLowSeeds => decision(NmVerdict::FilterLowSeeds, -1),
        Gate::ForwardManySeeds => decision(NmVerdict::ForwardManySeeds, -1),
        Gate::Chain => {
            sort_seeds(&mut seeds);
            let score = chain_score_approx(&seeds, params).expect("seeds sorted above");
            let verdict = if score >= params.min_chain_score {
                NmVerdict::ForwardChained
            } else {
                NmVerdict::FilterLowChain
            };
            decision(verdict, score.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
        }
    }
}

/// Filters every read, in parallel, keeping input order.
pub fn nm_filter_all(reads: &[Read], index: &KmerIndex, params: &NmParams) -> Vec<NmDecision> {
    reads.par_iter().map(|r| nm_filter(r, index, params)).collect()
}

/// Verdict counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NmStats {
    pub reads_total: u64,
    pub filter_low_seeds: u64,
    pub filter_low_chain: u64,
    pub forward_many_seeds: u64,
    pub forward_chained: u64,
}

impl NmStats {
    pub fn from_decisions(decisions: &[NmDecision]) -> NmStats {
        let mut s = NmStats::default();
        for d in decisions {
            s.reads_total += 1;
            match d.verdict {
                NmVerdict::FilterLowSeeds => s.filter_low_seeds += 1,
                NmVerdict::FilterLowChain => s.filter_low_chain += 1,
                NmVerdict::ForwardManySeeds => s.forward_many_seeds += 1,
                NmVerdict::ForwardChained => s.forward_chained += 1,
            }
        }
        s
    }

    pub fn filtered(&self) -> u64 {
        self.filter_low_seeds + self.filter_low_chain
    }

    pub fn forwarded(&self) -> u64 {
        self.forward_many_seeds + self.forward_chained
    }
}

/// Writes decisions as `read_id u64 | verdict u8 | best_score i32`, little-endian.
pub fn write_decisions<W: Write>(out: &mut W, decisions: &[NmDecision]) -> io::Result<()> {
    for d in decisions {
        out.write_all(&d.read_id.to_le_bytes())?;
        out.write_all(&[d.verdict as u8])?;
        out.write_all(&d.best_score.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_decisions(bytes: &[u8]) -> io::Result<Vec<NmDecision>> {
    if !bytes.len().is_multiple_of(13) {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated decision stream"));
    }
    bytes
        .chunks_exact(13)
        .map(|c| {
            let verdict = NmVerdict::from_code(c[8]).ok_or_else(|| {
                io::Error::new(io::ErrorKind::InvalidData, format!("unknown verdict {}", c[8]))
            })?;
            Ok(NmDecision {
                read_id: u64::from_le_bytes(c[..8].try_into().unwrap()),
                verdict,
                best_score: i32::from_le_bytes(c[9..13].try_into().unwrap()),
            })
        })
        .collect()
}
