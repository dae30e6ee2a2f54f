//! Fingerprints for exact-match filtering and the 64-bit integer mix used for minimizers.

use md5::{Digest, Md5};

use crate::seqio::PackedSeq;

/// 128-bit strong hash of a packed sequence.
///
/// Computed as MD5 over the base count (64-bit little-endian) followed by the
/// packed 2-bit bytes, read as a big-endian integer. Equal sequences always
/// give equal fingerprints; the length prefix keeps `A` and `AA` apart even
/// though both pack to a zero byte.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fingerprint(pub u128);

impl Fingerprint {
    pub fn of(seq: &PackedSeq) -> Fingerprint {
        let mut h = Md5::new();
        h.update((seq.len() as u64).to_le_bytes());
        h.update(seq.as_bytes());
        Fingerprint(u128::from_be_bytes(h.finalize().into()))
    }

    /// The upper 64 bits, which is what a 64-bit hardware comparator sees.
    pub fn high64(self) -> u64 {
        (self.0 >> 64) as u64
    }
}

pub fn fingerprint(seq: &PackedSeq) -> Fingerprint {
    Fingerprint::of(seq)
}

/// Thomas Wang's invertible 64-bit integer mix.
#[inline]
pub fn hash64(key: u64) -> u64 {
    let mut k = (!key).wrapping_add(key << 21);
    k ^= k >> 24;
    k = k.wrapping_add(k << 3).wrapping_add(k << 8);
    k ^= k >> 14;
    k = k.wrapping_add(k << 2).wrapping_add(k << 4);
    k ^= k >> 28;
    k.wrapping_add(k << 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn hash64_golden_values() {
        assert_eq!(hash64(0), 0x77cf_a1ee_f01b_ca90);
        assert_eq!(hash64(1), 0x5bca_7c69_b794_f8ce);
        assert_eq!(hash64(0xdead_beef), 0x386f_2a5f_36b2_57cb);
        assert_eq!(hash64(u64::MAX), 0x1f89_206e_3f8e_c794);
    }

    #[test]
    fn hash64_has_no_collisions_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut seen = HashSet::with_capacity(1 << 20);
        let mut inputs = HashSet::with_capacity(1 << 20);
        for _ in 0..1_000_000 {
            let x: u64 = rng.gen();
            if inputs.insert(x) {
                assert!(seen.insert(hash64(x)), "collision for {x:#x}");
            }
        }
    }

    #[test]
    fn hash64_avalanche() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut flipped = 0u64;
        let trials = 20_000;
        for _ in 0..trials {
            let x: u64 = rng.gen();
            let bit = rng.gen_range(0..64);
            flipped += (hash64(x) ^ hash64(x ^ (1 << bit))).count_ones() as u64;
        }
        let mean = flipped as f64 / trials as f64;
        assert!(mean >= 20.0, "mean flipped bits {mean}");
    }

    #[test]
    fn fingerprint_golden_and_deterministic() {
        let s = PackedSeq::from_ascii("ACGT".repeat(37).as_bytes());
        assert_eq!(
            fingerprint(&s),
            Fingerprint(0x895e_4739_fe18_50e4_45a0_e6db_fa3b_f850)
        );
        assert_eq!(fingerprint(&s), fingerprint(&s.clone()));
        assert_eq!(
            fingerprint(&PackedSeq::from_ascii(b"ACGT")),
            Fingerprint(0x622a_20f7_670f_be1a_8a6a_9968_2d49_9087)
        );
    }

    #[test]
    fn length_prefix_separates_zero_packed_sequences() {
        let a = PackedSeq::from_ascii(b"A");
        let aa = PackedSeq::from_ascii(b"AA");
        assert_eq!(a.as_bytes(), aa.as_bytes());
        assert_ne!(fingerprint(&a), fingerprint(&aa));
    }

    #[test]
    fn no_fingerprint_collisions_on_random_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seqs = HashSet::new();
        let mut fps = HashSet::new();
        for _ in 0..1_000_000 {
            let len = rng.gen_range(8..40);
            let s: Vec<u8> = (0..len).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect();
            if seqs.insert(s.clone()) {
                assert!(fps.insert(fingerprint(&PackedSeq::from_ascii(&s))));
            }
        }
    }
}
