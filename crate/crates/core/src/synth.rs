//! Seeded synthetic workloads: random references, short reads with a known
//! exact-match fraction, and long reads with a known aligning fraction.
//!
//! All generators are sequential and driven by a single ChaCha8 stream, so a
//! seed fixes the output byte for byte.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::seqio::{revcomp, Base, PackedSeq, Read, ReadSet, ReferenceGenome};

/// Stamped into generated FASTA/FASTQ headers.
pub const GENERATOR_VERSION: &str = concat!("genstore-synth/", env!("CARGO_PKG_VERSION"), "/1");

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("{name} must be in [0, 1], got {value}")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("read length {read_len} exceeds the {available} clean reference bases available")]
    ReferenceTooShort { read_len: usize, available: usize },
    #[error("length must be positive")]
    ZeroLength,
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
}

fn check_rate(name: &'static str, value: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SynthError::RateOutOfRange { name, value })
    }
}

fn random_seq(rng: &mut ChaCha8Rng, len: usize) -> PackedSeq {
    let mut s = PackedSeq::with_capacity(len);
    for _ in 0..len {
        s.push(Base::ALL[rng.gen_range(0..4)]);
    }
    s
}

fn substitute(rng: &mut ChaCha8Rng, b: Base) -> Base {
    // one of the three other bases
    Base::ALL[(b as usize + rng.gen_range(1..4)) % 4]
}

pub fn gen_reference(len: usize, seed: u64) -> Result<ReferenceGenome, SynthError> {
    if len == 0 {
        return Err(SynthError::ZeroLength);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = random_seq(&mut rng, len);
    Ok(ReferenceGenome::from_packed(&format!("synthetic seed={seed} {GENERATOR_VERSION}"), seq))
}

/// Short forward-strand reads. Exactly `round(exact_fraction · count)` reads are
/// verbatim reference substrings; every other read carries at least one
/// substitution (each base is substituted with probability `subst_rate`).
pub fn gen_reads(
    reference: &ReferenceGenome,
    read_len: usize,
    count: usize,
    exact_fraction: f64,
    subst_rate: f64,
    seed: u64,
) -> Result<ReadSet, SynthError> {
    check_rate("exact_fraction", exact_fraction)?;
    check_rate("subst_rate", subst_rate)?;
    if read_len == 0 {
        return Err(SynthError::ZeroLength);
    }
    let starts: Vec<usize> = reference.clean_kmer_starts(read_len).collect();
    if starts.is_empty() {
        return Err(SynthError::ReferenceTooShort {
            read_len,
            available: reference.seq.len() - reference.ambiguous.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_exact = (exact_fraction * count as f64).round() as usize;
    let mut exact: Vec<bool> = (0..count).map(|i| i < n_exact).collect();
    exact.shuffle(&mut rng);
    let mut reads = Vec::with_capacity(count);
    for (id, is_exact) in exact.into_iter().enumerate() {
        let start = starts[rng.gen_range(0..starts.len())];
        let mut seq = reference.seq.subseq(start, read_len);
        if !is_exact {
            let mut codes: Vec<Base> = seq.iter().collect();
            let mut changed = false;
            for b in codes.iter_mut() {
                if rng.gen_bool(subst_rate) {
                    *b = substitute(&mut rng, *b);
                    changed = true;
                }
            }
            if !changed {
                let p = rng.gen_range(0..read_len);
                codes[p] = substitute(&mut rng, codes[p]);
            }
            seq = PackedSeq::with_capacity(read_len);
            for b in codes {
                seq.push(b);
            }
        }
        reads.push(Read::new(id as u64, seq));
    }
    Ok(reads)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LongReadSpec {
    pub mean_len: usize,
    pub count: usize,
    pub align_fraction: f64,
    /// Per-base error probability of aligning reads.
    pub error_rate: f64,
    /// Share of errors that are single-base insertions or deletions.
    pub indel_fraction: f64,
}

impl LongReadSpec {
    pub fn new(mean_len: usize, count: usize, align_fraction: f64) -> Self {
        LongReadSpec {
            mean_len,
            count,
            align_fraction,
            error_rate: 0.10,
            indel_fraction: 0.05,
        }
    }
}

/// Long reads of normally distributed length (sd = mean / 4). Aligning reads
/// are sampled from the reference, mutated, and reverse-complemented half of
/// the time; the rest are random sequence. Exactly
/// `round(align_fraction · count)` reads are sampled from the reference.
pub fn gen_longreads(reference: &ReferenceGenome, spec: &LongReadSpec, seed: u64) -> Result<ReadSet, SynthError> {
    check_rate("align_fraction", spec.align_fraction)?;
    check_rate("error_rate", spec.error_rate)?;
    check_rate("indel_fraction", spec.indel_fraction)?;
    if spec.mean_len == 0 {
        return Err(SynthError::ZeroLength);
    }
    let min_len = (spec.mean_len / 4).max(1);
    let segments: Vec<(usize, usize)> = reference.clean_segments();
    let longest = segments.iter().map(|&(s, e)| e - s).max().unwrap_or(0);
    if longest < min_len {
        return Err(SynthError::ReferenceTooShort {
            read_len: min_len,
            available: longest,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_align = (spec.align_fraction * spec.count as f64).round() as usize;
    let mut aligns: Vec<bool> = (0..spec.count).map(|i| i < n_align).collect();
    aligns.shuffle(&mut rng);
    let lengths = Normal::new(spec.mean_len as f64, spec.mean_len as f64 / 4.0).expect("finite sd");
    let mut reads = Vec::with_capacity(spec.count);
    for (id, aligned) in aligns.into_iter().enumerate() {
        let len = (lengths.sample(&mut rng).round().max(0.0) as usize).clamp(min_len, longest);
        let seq = if aligned {
            let fitting: Vec<&(usize, usize)> = segments.iter().filter(|&&(s, e)| e - s >= len).collect();
            let &(s, e) = fitting[rng.gen_range(0..fitting.len())];
            let start = rng.gen_range(s..=e - len);
            let mut out = PackedSeq::with_capacity(len + len / 8);
            for b in reference.seq.subseq(start, len).iter() {
                if !rng.gen_bool(spec.error_rate) {
                    out.push(b);
                } else if rng.gen_bool(spec.indel_fraction) {
                    if rng.gen_bool(0.5) {
                        out.push(b);
                        out.push(Base::ALL[rng.gen_range(0..4)]);
                    }
                } else {
                    out.push(substitute(&mut rng, b));
                }
            }
            if rng.gen_bool(0.5) {
                revcomp(&out)
            } else {
                out
            }
        } else {
            random_seq(&mut rng, len)
        };
        reads.push(Read::new(id as u64, seq));
    }
    Ok(reads)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PresetKind {
    Short { read_len: usize, exact_fraction: f64, subst_rate: f64 },
    Long { mean_len: usize, align_fraction: f64, error_rate: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    /// Size of the read set this preset imitates, GB.
    pub source_size_gb: f64,
    pub kind: PresetKind,
}

const fn long(name: &'static str, source_size_gb: f64, align_fraction: f64) -> Preset {
    Preset {
        name,
        source_size_gb,
        kind: PresetKind::Long {
            mean_len: 5000,
            align_fraction,
            error_rate: 0.10,
        },
    }
}

/// Aligning-read fractions of known datasets, plus a human short-read workload.
pub const PRESETS: [Preset; 8] = [
    long("table1-seqerr-1", 54.0, 0.474),
    long("table1-seqerr-2", 371.0, 0.693),
    long("table1-evolving-1", 1.69, 0.600),
    Preset {
        name: "table1-evolving-2",
        source_size_gb: 0.466,
        kind: PresetKind::Long {
            mean_len: 150,
            align_fraction: 0.231,
            error_rate: 0.01,
        },
    },
    long("table1-noref-1", 12.4, 0.0035),
    long("table1-noref-2", 15.9, 0.370),
    long("table1-contamination-1", 15.9, 0.010),
    Preset {
        name: "human-short-80",
        source_size_gb: 22.0,
        kind: PresetKind::Short {
            read_len: 150,
            exact_fraction: 0.80,
            subst_rate: 0.01,
        },
    },
];

pub fn preset(name: &str) -> Result<Preset, SynthError> {
    PRESETS
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .copied()
        .ok_or_else(|| SynthError::UnknownPreset(name.to_string()))
}
