//! Binary index files.
//!
//! ```text
//! offset  size  field
//!      0     6  magic "GSIDX\0"
//!      6     2  format version, u16 LE
//!      8     1  kind: 1 = SRTable, 2 = SKIndex, 3 = KmerIndex
//!      9     1  flags: bit 0 = canonical-strand fingerprints
//!     10     6  zero
//!     16    16  k, w, max_locations, read_len (u32 LE each; unused fields 0)
//!     32     8  entry count, u64 LE
//!     40     …  entries (each padded to a multiple of 8 bytes)
//!    end-8   8  FNV-1a 64 of the entry section, u64 LE
//! ```
//!
//! Entry encodings, all little-endian:
//! * SRTable: fingerprint u128, read id u64, packed read bytes padded to 8.
//! * SKIndex: fingerprint u128, location count u32, 4 zero bytes, locations u64 each.
//! * KmerIndex: minimizer hash u64, location count u32, 4 zero bytes, packed locations u64 each.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{Fingerprint, IndexParams, KmerIndex, SkEntry, SkIndex, SrEntry, SrTable};
use crate::seqio::PackedSeq;

pub const MAGIC: [u8; 6] = *b"GSIDX\0";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 40;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index format version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u16 },
    #[error("unknown index kind {0}")]
    UnknownKind(u8),
    #[error("index file is truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("expected a {expected} index, found {found}")]
    WrongKind { expected: IndexKind, found: IndexKind },
    #[error("corrupt index: {0}")]
    Corrupt(String),
}

impl FormatError {
    /// Stable numeric code per error class.
    pub fn code(&self) -> u8 {
        match self {
            FormatError::Io(_) => 1,
            FormatError::BadMagic => 2,
            FormatError::VersionMismatch { .. } => 3,
            FormatError::UnknownKind(_) => 4,
            FormatError::Truncated => 5,
            FormatError::Checksum { .. } => 6,
            FormatError::WrongKind { .. } => 7,
            FormatError::Corrupt(_) => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexKind {
    SrTable = 1,
    SkIndex = 2,
    KmerIndex = 3,
}

impl std::fmt::Display for IndexKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IndexKind::SrTable => "SRTable",
            IndexKind::SkIndex => "SKIndex",
            IndexKind::KmerIndex => "KmerIndex",
        })
    }
}

impl TryFrom<u8> for IndexKind {
    type Error = FormatError;

    fn try_from(v: u8) -> Result<Self, FormatError> {
        match v {
            1 => Ok(IndexKind::SrTable),
            2 => Ok(IndexKind::SkIndex),
            3 => Ok(IndexKind::KmerIndex),
            other => Err(FormatError::UnknownKind(other)),
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn pad8(v: &mut Vec<u8>) {
    while !v.len().is_multiple_of(8) {
        v.push(0);
    }
}

/// Any of the three index structures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IndexFile {
    SrTable(SrTable),
    SkIndex(SkIndex),
    Kmer(KmerIndex),
}

impl IndexFile {
    pub fn kind(&self) -> IndexKind {
        match self {
            IndexFile::SrTable(_) => IndexKind::SrTable,
            IndexFile::SkIndex(_) => IndexKind::SkIndex,
            IndexFile::Kmer(_) => IndexKind::KmerIndex,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        let (params, canonical, count): ([u32; 4], bool, u64) = match self {
            IndexFile::SrTable(t) => {
                for e in &t.entries {
                    body.extend_from_slice(&e.fp.0.to_le_bytes());
                    body.extend_from_slice(&e.read_id.to_le_bytes());
                    body.extend_from_slice(e.raw.as_bytes());
                    pad8(&mut body);
                }
                ([0, 0, 0, t.read_len as u32], t.canonical, t.entries.len() as u64)
            }
            IndexFile::SkIndex(s) => {
                for e in &s.entries {
                    body.extend_from_slice(&e.fp.0.to_le_bytes());
                    body.extend_from_slice(&(e.locations.len() as u32).to_le_bytes());
                    body.extend_from_slice(&[0; 4]);
                    for l in &e.locations {
                        body.extend_from_slice(&l.to_le_bytes());
                    }
                }
                ([s.k as u32, 0, 0, s.k as u32], s.canonical, s.entries.len() as u64)
            }
            IndexFile::Kmer(k) => {
                for (h, locs) in k.iter() {
                    body.extend_from_slice(&h.to_le_bytes());
                    body.extend_from_slice(&(locs.len() as u32).to_le_bytes());
                    body.extend_from_slice(&[0; 4]);
                    for l in locs {
                        body.extend_from_slice(&l.to_le_bytes());
                    }
                }
                let p = k.params;
                ([p.k as u32, p.w as u32, p.max_locations as u32, 0], false, k.len() as u64)
            }
        };
        let mut out = Vec::with_capacity(HEADER_LEN + body.len() + 8);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.kind() as u8);
        out.push(canonical as u8);
        out.extend_from_slice(&[0; 6]);
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&count.to_le_bytes());
        let checksum = fnv1a64(&body);
        out.extend_from_slice(&body);
        out.extend_from_slice(&checksum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<IndexFile, FormatError> {
        if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
            return Err(FormatError::BadMagic);
        }
        if bytes.len() < HEADER_LEN + 8 {
            return Err(FormatError::Truncated);
        }
        let version = u16::from_le_bytes([bytes[6], bytes[7]]);
        if version != FORMAT_VERSION {
            return Err(FormatError::VersionMismatch { found: version });
        }
        let kind = IndexKind::try_from(bytes[8])?;
        let canonical = bytes[9] & 1 == 1;
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (k, w, max_locations, read_len) = (u32_at(16), u32_at(20), u32_at(24), u32_at(28));
        let count = u64::from_le_bytes(bytes[32..40].try_into().unwrap());

        let body = &bytes[HEADER_LEN..bytes.len() - 8];
        let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        let mut cur = Cursor { buf: body, pos: 0 };
        // walk the entries first so a short file reports truncation rather than a checksum error
        let parsed = match kind {
            IndexKind::SrTable => {
                let raw_len = read_len.div_ceil(4);
                let mut entries = Vec::new();
                for _ in 0..count {
                    let fp = Fingerprint(cur.u128()?);
                    let read_id = cur.u64()?;
                    let raw = cur.take(raw_len)?.to_vec();
                    cur.align8()?;
                    entries.push(SrEntry {
                        fp,
                        read_id,
                        raw: PackedSeq::from_packed(raw, read_len),
                    });
                }
                IndexFile::SrTable(SrTable {
                    read_len,
                    canonical,
                    entries,
                })
            }
            IndexKind::SkIndex => {
                let mut entries = Vec::new();
                for _ in 0..count {
                    let fp = Fingerprint(cur.u128()?);
                    let n = cur.u32()? as usize;
                    cur.take(4)?;
                    let locations = (0..n).map(|_| cur.u64()).collect::<Result<_, _>>()?;
                    entries.push(SkEntry { fp, locations });
                }
                IndexFile::SkIndex(SkIndex {
                    k,
                    canonical,
                    entries,
                })
            }
            IndexKind::KmerIndex => {
                let mut groups = Vec::new();
                for _ in 0..count {
                    let h = cur.u64()?;
                    let n = cur.u32()? as usize;
                    cur.take(4)?;
                    let locs = (0..n).map(|_| cur.u64()).collect::<Result<Vec<_>, _>>()?;
                    groups.push((h, locs));
                }
                if groups.windows(2).any(|g| g[0].0 >= g[1].0) {
                    return Err(FormatError::Corrupt("minimizer hashes out of order".into()));
                }
                IndexFile::Kmer(KmerIndex::from_groups(
                    IndexParams { k, w, max_locations },
                    groups,
                ))
            }
        };
        if cur.pos != body.len() {
            // trailing garbage, or a cut that happened to land on an entry boundary
            let computed = fnv1a64(body);
            if computed != stored {
                return Err(FormatError::Truncated);
            }
            return Err(FormatError::Corrupt("unexpected bytes after last entry".into()));
        }
        let computed = fnv1a64(body);
        if computed != stored {
            return Err(FormatError::Checksum { stored, computed });
        }
        Ok(parsed)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<IndexFile, FormatError> {
        let mut buf = Vec::new();
        File::open(path)?.read_to_end(&mut buf)?;
        IndexFile::from_bytes(&buf)
    }

    pub fn into_srtable(self) -> Result<SrTable, FormatError> {
        match self {
            IndexFile::SrTable(t) => Ok(t),
            other => Err(FormatError::WrongKind {
                expected: IndexKind::SrTable,
                found: other.kind(),
            }),
        }
    }

    pub fn into_skindex(self) -> Result<SkIndex, FormatError> {
        match self {
            IndexFile::SkIndex(t) => Ok(t),
            other => Err(FormatError::WrongKind {
                expected: IndexKind::SkIndex,
                found: other.kind(),
            }),
        }
    }

    pub fn into_kmer_index(self) -> Result<KmerIndex, FormatError> {
        match self {
            IndexFile::Kmer(t) => Ok(t),
            other => Err(FormatError::WrongKind {
                expected: IndexKind::KmerIndex,
                found: other.kind(),
            }),
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Truncated)?;
        if end > self.buf.len() {
            return Err(FormatError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128, FormatError> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn align8(&mut self) -> Result<(), FormatError> {
        let pad = (8 - self.pos % 8) % 8;
        self.take(pad).map(|_| ())
    }
}
