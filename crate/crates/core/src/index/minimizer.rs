//! Windowed minimizer extraction over canonical k-mers.

use std::collections::VecDeque;

use super::hash::hash64;
use crate::seqio::PackedSeq;

/// A selected k-mer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Minimizer {
    /// `hash64` of the canonical k-mer.
    pub hash: u64,
    /// Position of the last base of the k-mer.
    pub end: usize,
    /// True when the reverse complement is the canonical form.
    pub rev: bool,
}

/// Splits `[0, len)` at the given ambiguous positions (which are dropped).
pub fn segments_excluding(len: usize, ambiguous: impl IntoIterator<Item = usize>) -> Vec<(usize, usize)> {
    let mut segs = Vec::new();
    let mut start = 0;
    for a in ambiguous {
        if a > start {
            segs.push((start, a));
        }
        start = start.max(a + 1);
    }
    if len > start {
        segs.push((start, len));
    }
    segs
}

/// Minimizers of every segment, in position order.
///
/// Within a window the smallest hash wins, ties go to the leftmost k-mer, and
/// a k-mer chosen by several overlapping windows is reported once. A segment
/// with fewer than `w` k-mers contributes its single smallest k-mer.
pub fn scan_minimizers(seq: &PackedSeq, segments: &[(usize, usize)], k: usize, w: usize) -> Vec<Minimizer> {
    assert!((1..=32).contains(&k), "k must be in 1..=32");
    assert!(w >= 1, "w must be positive");
    let mask = if k == 32 { u64::MAX } else { (1u64 << (2 * k)) - 1 };
    let rc_shift = 2 * (k - 1);
    let mut out = Vec::new();
    let mut window: VecDeque<Minimizer> = VecDeque::with_capacity(w + 1);

    for &(s, e) in segments {
        if e - s < k {
            continue;
        }
        let n_kmers = e - s - k + 1;
        let mut fwd = 0u64;
        let mut rc = 0u64;
        window.clear();
        let mut last_emitted: Option<usize> = None;
        let mut best_short: Option<Minimizer> = None;

        for pos in s..e {
            let c = seq.code(pos) as u64;
            fwd = ((fwd << 2) | c) & mask;
            rc = (rc >> 2) | ((3 - c) << rc_shift);
            if pos + 1 < s + k {
                continue;
            }
            let m = Minimizer {
                hash: hash64(fwd.min(rc)),
                end: pos,
                rev: rc < fwd,
            };
            if n_kmers < w {
                if best_short.is_none_or(|b| m.hash < b.hash) {
                    best_short = Some(m);
                }
                continue;
            }
            while window.back().is_some_and(|b| b.hash > m.hash) {
                window.pop_back();
            }
            window.push_back(m);
            let idx = pos + 1 - (s + k);
            if idx + 1 < w {
                continue;
            }
            let window_first_end = pos + 1 - w;
            while window.front().is_some_and(|f| f.end < window_first_end) {
                window.pop_front();
            }
            let best = *window.front().expect("window holds the newest k-mer");
            if last_emitted != Some(best.end) {
                out.push(best);
                last_emitted = Some(best.end);
            }
        }
        if let Some(b) = best_short {
            out.push(b);
        }
    }
    out
}
