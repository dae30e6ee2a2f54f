//! Sequence I/O: 2-bit packing, FASTA/FASTQ parsing and FASTQ re-emission.
//!
//! Bases are packed four per byte, first base in the two most significant
//! bits, so `"ACGT"` packs to `0b00_01_10_11`.

use std::fmt;
use std::io::{self, BufRead, BufReader, Read as IoRead, Write};

use flate2::read::MultiGzDecoder;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("record {record}: {reason}")]
    Malformed { record: usize, reason: String },
    #[error("FASTA input has sequence data before any header line")]
    MissingHeader,
}

/// A nucleotide in 2-bit form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Base {
    A = 0,
    C = 1,
    G = 2,
    T = 3,
}

impl Base {
    pub const ALL: [Base; 4] = [Base::A, Base::C, Base::G, Base::T];

    #[inline]
    pub fn from_code(code: u8) -> Base {
        Base::ALL[(code & 3) as usize]
    }

    /// Returns `None` for anything outside `ACGTacgt`.
    #[inline]
    pub fn from_ascii(b: u8) -> Option<Base> {
        match b {
            b'A' | b'a' => Some(Base::A),
            b'C' | b'c' => Some(Base::C),
            b'G' | b'g' => Some(Base::G),
            b'T' | b't' => Some(Base::T),
            _ => None,
        }
    }

    #[inline]
    pub fn code(self) -> u8 {
        self as u8
    }

    #[inline]
    pub fn to_ascii(self) -> u8 {
        b"ACGT"[self as usize]
    }

    #[inline]
    pub fn complement(self) -> Base {
        Base::from_code(3 - self as u8)
    }
}

/// Packed 2-bit base array.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct PackedSeq {
    bytes: Vec<u8>,
    len: usize,
}

impl PackedSeq {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bases: usize) -> Self {
        PackedSeq {
            bytes: Vec::with_capacity(bases.div_ceil(4)),
            len: 0,
        }
    }

    /// Packs an ASCII sequence. Non-ACGT symbols are stored as `A`.
    pub fn from_ascii(s: &[u8]) -> Self {
        let mut p = Self::with_capacity(s.len());
        for &c in s {
            p.push(Base::from_ascii(c).unwrap_or(Base::A));
        }
        p
    }

    /// Rebuilds a sequence from raw packed bytes. Unused trailing bits are cleared.
    pub fn from_packed(mut bytes: Vec<u8>, len: usize) -> Self {
        bytes.truncate(len.div_ceil(4));
        bytes.resize(len.div_ceil(4), 0);
        if !len.is_multiple_of(4) {
            let keep = 2 * (len % 4);
            let last = bytes.len() - 1;
            bytes[last] &= !(0xFFu8 >> keep);
        }
        PackedSeq { bytes, len }
    }

    pub fn push(&mut self, b: Base) {
        let slot = self.len % 4;
        if slot == 0 {
            self.bytes.push(0);
        }
        let last = self.bytes.len() - 1;
        self.bytes[last] |= b.code() << (6 - 2 * slot);
        self.len += 1;
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    #[inline]
    pub fn code(&self, i: usize) -> u8 {
        debug_assert!(i < self.len);
        (self.bytes[i / 4] >> (6 - 2 * (i % 4))) & 3
    }

    #[inline]
    pub fn get(&self, i: usize) -> Base {
        Base::from_code(self.code(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = Base> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn to_ascii(&self) -> Vec<u8> {
        self.iter().map(Base::to_ascii).collect()
    }

    /// Copies `len` bases starting at `start` into a fresh, byte-aligned sequence.
    pub fn subseq(&self, start: usize, len: usize) -> PackedSeq {
        assert!(start + len <= self.len, "subseq out of range");
        let nbytes = len.div_ceil(4);
        let mut out = Vec::with_capacity(nbytes);
        let first = start / 4;
        let shift = 2 * (start % 4);
        if shift == 0 {
            out.extend_from_slice(&self.bytes[first..first + nbytes]);
        } else {
            for i in 0..nbytes {
                let hi = self.bytes[first + i] << shift;
                let lo = self
                    .bytes
                    .get(first + i + 1)
                    .map_or(0, |&b| b >> (8 - shift));
                out.push(hi | lo);
            }
        }
        PackedSeq::from_packed(out, len)
    }

    /// The `k` bases at `start` as an integer, first base most significant. `k <= 32`.
    #[inline]
    pub fn kmer_u64(&self, start: usize, k: usize) -> u64 {
        debug_assert!(k <= 32 && start + k <= self.len);
        let mut v = 0u64;
        for i in start..start + k {
            v = (v << 2) | self.code(i) as u64;
        }
        v
    }
}

impl fmt::Debug for PackedSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PackedSeq({})", String::from_utf8_lossy(&self.to_ascii()))
    }
}

impl fmt::Display for PackedSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.to_ascii()))
    }
}

impl FromIterator<Base> for PackedSeq {
    fn from_iter<I: IntoIterator<Item = Base>>(iter: I) -> Self {
        let mut p = PackedSeq::new();
        for b in iter {
            p.push(b);
        }
        p
    }
}

/// Reverse complement.
pub fn revcomp(seq: &PackedSeq) -> PackedSeq {
    (0..seq.len()).rev().map(|i| seq.get(i).complement()).collect()
}

/// Reverse complement of a packed k-mer integer (`k <= 32`).
#[inline]
pub fn revcomp_kmer(mut v: u64, k: usize) -> u64 {
    let mut out = 0u64;
    for _ in 0..k {
        out = (out << 2) | (3 - (v & 3));
        v >>= 2;
    }
    out
}

/// A sequenced read.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Read {
    pub id: u64,
    pub seq: PackedSeq,
    /// Positions holding a non-ACGT symbol (stored as `A` in `seq`).
    pub ambiguous: Vec<u32>,
}

impl Read {
    pub fn new(id: u64, seq: PackedSeq) -> Self {
        Read {
            id,
            seq,
            ambiguous: Vec::new(),
        }
    }

    pub fn from_ascii(id: u64, s: &[u8]) -> Self {
        let ambiguous = s
            .iter()
            .enumerate()
            .filter(|(_, &c)| Base::from_ascii(c).is_none())
            .map(|(i, _)| i as u32)
            .collect();
        Read {
            id,
            seq: PackedSeq::from_ascii(s),
            ambiguous,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.seq.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    #[inline]
    pub fn has_ambiguous(&self) -> bool {
        !self.ambiguous.is_empty()
    }
}

pub type ReadSet = Vec<Read>;

/// Packed reference genome. Multi-record FASTA inputs are concatenated.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReferenceGenome {
    pub name: String,
    pub seq: PackedSeq,
    /// Start offsets of the second and later records.
    pub boundaries: Vec<u64>,
    /// Positions that held a non-ACGT symbol, sorted ascending.
    pub ambiguous: Vec<u64>,
}

impl ReferenceGenome {
    pub fn from_ascii(name: &str, s: &[u8]) -> Self {
        let ambiguous = s
            .iter()
            .enumerate()
            .filter(|(_, &c)| Base::from_ascii(c).is_none())
            .map(|(i, _)| i as u64)
            .collect();
        ReferenceGenome {
            name: name.to_string(),
            seq: PackedSeq::from_ascii(s),
            boundaries: Vec::new(),
            ambiguous,
        }
    }

    pub fn from_packed(name: &str, seq: PackedSeq) -> Self {
        ReferenceGenome {
            name: name.to_string(),
            seq,
            boundaries: Vec::new(),
            ambiguous: Vec::new(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.seq.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    /// Maximal runs `[start, end)` that contain no ambiguous base and do not
    /// cross a record boundary. k-mers are only extracted inside these.
    pub fn clean_segments(&self) -> Vec<(usize, usize)> {
        let mut cuts: Vec<(usize, bool)> = self
            .boundaries
            .iter()
            .map(|&b| (b as usize, false))
            .chain(self.ambiguous.iter().map(|&a| (a as usize, true)))
            .collect();
        cuts.sort_unstable();
        let mut segs = Vec::new();
        let mut start = 0usize;
        for (pos, skip) in cuts {
            if pos > start {
                segs.push((start, pos));
            }
            start = start.max(if skip { pos + 1 } else { pos });
        }
        if self.len() > start {
            segs.push((start, self.len()));
        }
        segs
    }

    /// Start positions of every `k`-mer lying inside a clean segment.
    pub fn clean_kmer_starts(&self, k: usize) -> impl Iterator<Item = usize> {
        self.clean_segments()
            .into_iter()
            .filter(move |&(s, e)| k > 0 && e - s >= k)
            .flat_map(move |(s, e)| s..=e - k)
    }
}

/// Wraps `input` in a gzip decoder when it starts with the gzip magic bytes.
pub fn open_maybe_gzip<'a, R: IoRead + 'a>(input: R) -> io::Result<Box<dyn BufRead + 'a>> {
    let mut buf = BufReader::new(input);
    let head = buf.fill_buf()?;
    if head.len() >= 2 && head[0] == 0x1F && head[1] == 0x8B {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(buf))))
    } else {
        Ok(Box::new(buf))
    }
}

fn trim_eol(line: &mut Vec<u8>) {
    while matches!(line.last(), Some(b'\n' | b'\r')) {
        line.pop();
    }
}

/// Raw FASTQ record as it appeared in the input (line terminators stripped).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FastqRecord {
    pub header: Vec<u8>,
    pub seq: Vec<u8>,
    pub plus: Vec<u8>,
    pub qual: Vec<u8>,
}

/// Streaming FASTQ record reader. Validates structure, keeps bytes verbatim.
pub struct FastqReader<R> {
    inner: R,
    index: usize,
    line: Vec<u8>,
}

impl<R: BufRead> FastqReader<R> {
    pub fn new(inner: R) -> Self {
        FastqReader {
            inner,
            index: 0,
            line: Vec::new(),
        }
    }

    fn next_line(&mut self) -> io::Result<Option<Vec<u8>>> {
        self.line.clear();
        if self.inner.read_until(b'\n', &mut self.line)? == 0 {
            return Ok(None);
        }
        trim_eol(&mut self.line);
        Ok(Some(std::mem::take(&mut self.line)))
    }

    fn malformed(&self, reason: impl Into<String>) -> ParseError {
        ParseError::Malformed {
            record: self.index,
            reason: reason.into(),
        }
    }

    pub fn next_record(&mut self) -> Result<Option<FastqRecord>, ParseError> {
        let header = loop {
            match self.next_line()? {
                None => return Ok(None),
                Some(l) if l.is_empty() => continue,
                Some(l) => break l,
            }
        };
        if header.first() != Some(&b'@') {
            return Err(self.malformed("header line does not start with '@'"));
        }
        let seq = self
            .next_line()?
            .ok_or_else(|| self.malformed("missing sequence line"))?;
        let plus = self
            .next_line()?
            .ok_or_else(|| self.malformed("missing '+' separator line"))?;
        if plus.first() != Some(&b'+') {
            return Err(self.malformed("separator line does not start with '+'"));
        }
        let qual = self
            .next_line()?
            .ok_or_else(|| self.malformed("missing quality line"))?;
        if qual.len() != seq.len() {
            return Err(self.malformed(format!(
                "sequence length {} does not match quality length {}",
                seq.len(),
                qual.len()
            )));
        }
        if seq.is_empty() {
            return Err(self.malformed("empty sequence"));
        }
        self.index += 1;
        Ok(Some(FastqRecord {
            header,
            seq,
            plus,
            qual,
        }))
    }
}

impl<R: BufRead> Iterator for FastqReader<R> {
    type Item = Result<FastqRecord, ParseError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

/// Parses a FASTQ stream. Ids follow file order starting at 0; qualities are dropped.
pub fn parse_fastq<R: BufRead>(stream: R) -> Result<ReadSet, ParseError> {
    FastqReader::new(stream)
        .enumerate()
        .map(|(i, rec)| rec.map(|r| Read::from_ascii(i as u64, &r.seq)))
        .collect()
}

/// Parses a FASTA stream, concatenating records.
pub fn parse_fasta<R: BufRead>(mut stream: R) -> Result<ReferenceGenome, ParseError> {
    let mut genome = ReferenceGenome::default();
    let mut line = Vec::new();
    let mut records = 0usize;
    loop {
        line.clear();
        if stream.read_until(b'\n', &mut line)? == 0 {
            break;
        }
        trim_eol(&mut line);
        if line.is_empty() {
            continue;
        }
        if line[0] == b'>' {
            if records == 0 {
                let name = String::from_utf8_lossy(&line[1..]);
                genome.name = name.split_whitespace().next().unwrap_or("").to_string();
            } else {
                genome.boundaries.push(genome.seq.len() as u64);
            }
            records += 1;
            continue;
        }
        if records == 0 {
            return Err(ParseError::MissingHeader);
        }
        for &c in line.iter() {
            match Base::from_ascii(c) {
                Some(b) => genome.seq.push(b),
                None => {
                    genome.ambiguous.push(genome.seq.len() as u64);
                    genome.seq.push(Base::A);
                }
            }
        }
    }
    if records == 0 {
        return Err(ParseError::MissingHeader);
    }
    // an empty record leaves a boundary at the same offset as its neighbour
    genome.boundaries.dedup();
    genome.boundaries.retain(|&b| b > 0 && b < genome.seq.len() as u64);
    Ok(genome)
}

/// Writes the records of `input` whose 0-based index satisfies `keep`, byte for byte.
/// Returns the number of records written.
pub fn copy_fastq_records<R: BufRead, W: Write>(
    input: R,
    out: &mut W,
    mut keep: impl FnMut(usize) -> bool,
) -> Result<usize, ParseError> {
    let mut written = 0;
    for (i, rec) in FastqReader::new(input).enumerate() {
        let rec = rec?;
        if keep(i) {
            write_fastq_record(out, &rec)?;
            written += 1;
        }
    }
    Ok(written)
}

pub fn write_fastq_record<W: Write>(out: &mut W, rec: &FastqRecord) -> io::Result<()> {
    out.write_all(&rec.header)?;
    out.write_all(b"\n")?;
    out.write_all(&rec.seq)?;
    out.write_all(b"\n")?;
    out.write_all(&rec.plus)?;
    out.write_all(b"\n")?;
    out.write_all(&rec.qual)?;
    out.write_all(b"\n")
}

/// Writes reads as FASTQ with constant quality `I`. `name` yields the header text after `@`.
pub fn write_fastq<W: Write>(
    out: &mut W,
    reads: &[Read],
    mut name: impl FnMut(&Read) -> String,
) -> io::Result<()> {
    for r in reads {
        let seq = r.seq.to_ascii();
        writeln!(out, "@{}", name(r))?;
        out.write_all(&seq)?;
        out.write_all(b"\n+\n")?;
        out.write_all(&vec![b'I'; seq.len()])?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes a single-record FASTA with 80-column lines.
pub fn write_fasta<W: Write>(out: &mut W, header: &str, seq: &PackedSeq) -> io::Result<()> {
    writeln!(out, ">{header}")?;
    let ascii = seq.to_ascii();
    for chunk in ascii.chunks(80) {
        out.write_all(chunk)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
