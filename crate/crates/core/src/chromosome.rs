//! Fixed-length bitstrings, packed 64 bits per word.
//!
//! Chromosomes travel over the wire and through logs as ASCII strings over
//! `{'0', '1'}`, with bit 0 first.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

/// Up to 256 bits live inline; the default 160-bit genome never allocates.
const INLINE_WORDS: usize = 4;
type Words = SmallVec<[u64; INLINE_WORDS]>;

/// Bits past `len` in the last word are always clear.
#[derive(PartialEq, Eq, Hash)]
pub struct Chromosome {
    len: usize,
    words: Words,
}

fn word_count(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

/// Bit `i` set iff `i` is a multiple of `1 << shift`, indexed by `shift`.
const BLOCK_STARTS: [u64; 7] = [
    u64::MAX,
    0x5555_5555_5555_5555,
    0x1111_1111_1111_1111,
    0x0101_0101_0101_0101,
    0x0001_0001_0001_0001,
    0x0000_0001_0000_0001,
    1,
];

/// Bits of word `i` that fall in `[start, end)`.
#[inline(always)]
fn word_range_mask(i: usize, start: usize, end: usize) -> u64 {
    let base = i * WORD_BITS;
    let lo = start.saturating_sub(base).min(WORD_BITS);
    let hi = end.saturating_sub(base).min(WORD_BITS);
    if lo < hi {
        span_mask(lo, hi)
    } else {
        0
    }
}

/// Blocks of width `1 << SHIFT` never straddle words. Folding each bit with
/// its next `block - 1` neighbours leaves a one at a block start iff the
/// block is full. Bits past `len` are clear, so a trailing partial block
/// never counts.
#[inline(always)]
fn fold_counts<const SHIFT: u32>(words: &[u64]) -> (usize, usize) {
    let starts = BLOCK_STARTS[SHIFT as usize];
    let (mut ones, mut full) = (0, 0);
    for &w in words {
        ones += w.count_ones() as usize;
        let mut acc = w;
        let mut s = 0;
        while s < SHIFT {
            acc &= acc >> (1u32 << s);
            s += 1;
        }
        full += (acc & starts).count_ones() as usize;
    }
    (ones, full)
}

/// Mask selecting bits `[lo, hi)` of one word, `0 <= lo <= hi <= 64`.
fn span_mask(lo: usize, hi: usize) -> u64 {
    let upper = if hi == WORD_BITS {
        u64::MAX
    } else {
        (1u64 << hi) - 1
    };
    let lower = (1u64 << lo) - 1;
    upper & !lower
}

impl Chromosome {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: SmallVec::from_elem(0, word_count(len)),
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut c = Self {
            len,
            words: SmallVec::from_elem(u64::MAX, word_count(len)),
        };
        c.clear_tail();
        c
    }

    /// Every bit independently uniform over {0, 1}.
    pub fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut c = Self::zeros(len);
        for w in c.words.iter_mut() {
            *w = rng.next_u64();
        }
        c.clear_tail();
        c
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut c = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                c.words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
            }
        }
        c
    }

    /// Parses an ASCII bitstring, rejecting anything outside `{'0', '1'}`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut c = Self::zeros(s.len());
        for (i, byte) in s.bytes().enumerate() {
            match byte {
                b'0' => {}
                b'1' => c.words[i / WORD_BITS] |= 1 << (i % WORD_BITS),
                _ => {
                    let found = s[i..].chars().next().unwrap_or('\u{fffd}');
                    return Err(Error::InvalidAlphabet { position: i, found });
                }
            }
        }
        Ok(c)
    }

    /// Parses and checks the length in one go.
    pub fn parse_with_len(s: &str, expected: usize) -> Result<Self> {
        if s.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: s.len(),
            });
        }
        Self::parse(s)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Packed storage, bit `i` at `words[i / 64] >> (i % 64)`; unused high
    /// bits of the last word are zero.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let bit = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= bit;
        } else {
            self.words[i / WORD_BITS] &= !bit;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / WORD_BITS] ^= 1 << (i % WORD_BITS);
    }

    #[inline(always)]
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of set bits in `[start, start + len)`.
    pub fn count_ones_range(&self, start: usize, len: usize) -> usize {
        let end = start + len;
        assert!(
            end <= self.len,
            "range {start}..{end} out of range {}",
            self.len
        );
        let mut total = 0;
        let mut pos = start;
        while pos < end {
            let w = pos / WORD_BITS;
            let lo = pos % WORD_BITS;
            let hi = (end - w * WORD_BITS).min(WORD_BITS);
            total += (self.words[w] & span_mask(lo, hi)).count_ones() as usize;
            pos = (w + 1) * WORD_BITS;
        }
        total
    }

    /// Number of all-ones blocks among the `len / block` aligned blocks of
    /// width `block`.
    pub fn count_full_blocks(&self, block: usize) -> usize {
        self.ones_and_full_blocks(block).1
    }

    /// `(count_ones(), count_full_blocks(block))` in one pass when `block`
    /// is a power of two up to 64.
    #[inline(always)]
    pub fn ones_and_full_blocks(&self, block: usize) -> (usize, usize) {
        assert!(block > 0);
        let w = &self.words[..];
        match block {
            1 => fold_counts::<0>(w),
            2 => fold_counts::<1>(w),
            4 => fold_counts::<2>(w),
            8 => fold_counts::<3>(w),
            16 => fold_counts::<4>(w),
            32 => fold_counts::<5>(w),
            64 => fold_counts::<6>(w),
            _ => {
                let full = (0..self.len / block)
                    .filter(|&b| self.count_ones_range(b * block, block) == block)
                    .count();
                (self.count_ones(), full)
            }
        }
    }

    pub fn is_all_ones(&self) -> bool {
        self.count_ones() == self.len
    }

    pub fn xor_assign(&mut self, other: &Self) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a ^= *b;
        }
    }

    pub fn complement(&self) -> Self {
        let mut c = self.clone();
        for w in c.words.iter_mut() {
            *w = !*w;
        }
        c.clear_tail();
        c
    }

    /// Exchanges bits `[start, end)` between two equal-length chromosomes.
    pub fn swap_range(a: &mut Self, b: &mut Self, start: usize, end: usize) {
        assert_eq!(a.len, b.len);
        assert!(start <= end && end <= a.len);
        let mut pos = start;
        while pos < end {
            let w = pos / WORD_BITS;
            let lo = pos % WORD_BITS;
            let hi = (end - w * WORD_BITS).min(WORD_BITS);
            let diff = (a.words[w] ^ b.words[w]) & span_mask(lo, hi);
            a.words[w] ^= diff;
            b.words[w] ^= diff;
            pos = (w + 1) * WORD_BITS;
        }
    }

    /// The two children of exchanging `[start, end)`: `a` with `b`'s
    /// segment, and `b` with `a`'s.
    pub fn crossed(a: &Self, b: &Self, start: usize, end: usize) -> (Self, Self) {
        assert_eq!(a.len, b.len);
        assert!(start <= end && end <= a.len);
        let n = a.words.len();
        if n > INLINE_WORDS {
            let (mut x, mut y) = (a.clone(), b.clone());
            Self::swap_range(&mut x, &mut y, start, end);
            return (x, y);
        }
        let (aw, bw) = (&a.words[..], &b.words[..n]);
        let mut x = [0u64; INLINE_WORDS];
        let mut y = [0u64; INLINE_WORDS];
        for i in 0..n {
            let diff = (aw[i] ^ bw[i]) & word_range_mask(i, start, end);
            x[i] = aw[i] ^ diff;
            y[i] = bw[i] ^ diff;
        }
        (
            Self {
                len: a.len,
                words: SmallVec::from_buf_and_len(x, n),
            },
            Self {
                len: a.len,
                words: SmallVec::from_buf_and_len(y, n),
            },
        )
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    fn clear_tail(&mut self) {
        let rem = self.len % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

impl Clone for Chromosome {
    fn clone(&self) -> Self {
        let words = if self.words.len() <= INLINE_WORDS {
            // Fixed-size copy; avoids a memcpy call per clone.
            let mut buf = [0u64; INLINE_WORDS];
            for (dst, src) in buf.iter_mut().zip(self.words.iter()) {
                *dst = *src;
            }
            SmallVec::from_buf_and_len(buf, self.words.len())
        } else {
            SmallVec::from_slice(&self.words)
        };
        Self {
            len: self.len,
            words,
        }
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.bits().map(|b| if b { '1' } else { '0' }).collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Chromosome({self})")
    }
}

impl FromStr for Chromosome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl Serialize for Chromosome {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Chromosome {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_display() {
        let c = Chromosome::parse("0110").unwrap();
        assert_eq!(c.len(), 4);
        assert!(!c.get(0) && c.get(1) && c.get(2) && !c.get(3));
        assert_eq!(c.to_string(), "0110");
    }

    #[test]
    fn parse_rejects_alphabet() {
        assert_eq!(
            Chromosome::parse("01x0"),
            Err(Error::InvalidAlphabet {
                position: 2,
                found: 'x'
            })
        );
        assert!(matches!(
            Chromosome::parse("0é"),
            Err(Error::InvalidAlphabet {
                position: 1,
                found: 'é'
            })
        ));
    }

    #[test]
    fn parse_with_len_checks_length() {
        assert_eq!(
            Chromosome::parse_with_len("010", 4),
            Err(Error::LengthMismatch {
                expected: 4,
                actual: 3
            })
        );
    }

    #[test]
    fn ones_and_complement() {
        for len in [1, 63, 64, 65, 160, 300] {
            let ones = Chromosome::ones(len);
            assert_eq!(ones.count_ones(), len);
            assert!(ones.is_all_ones());
            assert_eq!(ones.complement(), Chromosome::zeros(len));
        }
    }

    #[test]
    fn swap_range_trace() {
        let mut a = Chromosome::parse("0000").unwrap();
        let mut b = Chromosome::parse("1111").unwrap();
        Chromosome::swap_range(&mut a, &mut b, 1, 3);
        assert_eq!(a.to_string(), "0110");
        assert_eq!(b.to_string(), "1001");
    }

    fn bitstring(max: usize) -> impl Strategy<Value = Vec<bool>> {
        prop::collection::vec(any::<bool>(), 1..max)
    }

    proptest! {
        #[test]
        fn string_roundtrip(bits in bitstring(300)) {
            let c = Chromosome::from_bits(&bits);
            let back: Chromosome = c.to_string().parse().unwrap();
            prop_assert_eq!(back, c);
        }

        #[test]
        fn count_range_matches_naive(bits in bitstring(300), a in 0usize..300, b in 0usize..300) {
            let c = Chromosome::from_bits(&bits);
            let (lo, hi) = (a.min(b) % (bits.len() + 1), a.max(b) % (bits.len() + 1));
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            let naive = bits[lo..hi].iter().filter(|&&x| x).count();
            prop_assert_eq!(c.count_ones_range(lo, hi - lo), naive);
        }

        #[test]
        fn full_blocks_match_naive(bits in bitstring(300), block in 1usize..40) {
            let c = Chromosome::from_bits(&bits);
            let naive = bits.chunks_exact(block).filter(|ch| ch.iter().all(|&b| b)).count();
            prop_assert_eq!(c.count_full_blocks(block), naive);
        }

        #[test]
        fn dense_power_of_two_blocks_match_naive(
            bits in (1usize..300).prop_flat_map(|n| prop::collection::vec(prop::bool::weighted(0.95), n)),
            shift in 0u32..=6,
        ) {
            let block = 1usize << shift;
            let c = Chromosome::from_bits(&bits);
            let naive = bits.chunks_exact(block).filter(|ch| ch.iter().all(|&b| b)).count();
            let ones = bits.iter().filter(|&&b| b).count();
            prop_assert_eq!(c.ones_and_full_blocks(block), (ones, naive));
        }

        #[test]
        fn swap_range_matches_naive(
            pair in (1usize..300).prop_flat_map(|n| (
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(any::<bool>(), n),
                0..=n,
                0..=n,
            ))
        ) {
            let (x, y, i, j) = pair;
            let (lo, hi) = (i.min(j), i.max(j));
            let mut a = Chromosome::from_bits(&x);
            let mut b = Chromosome::from_bits(&y);
            Chromosome::swap_range(&mut a, &mut b, lo, hi);
            let mut ex = x.clone();
            let mut ey = y.clone();
            ex[lo..hi].copy_from_slice(&y[lo..hi]);
            ey[lo..hi].copy_from_slice(&x[lo..hi]);
            let (c, d) = Chromosome::crossed(&Chromosome::from_bits(&x), &Chromosome::from_bits(&y), lo, hi);
            prop_assert_eq!(&c, &a);
            prop_assert_eq!(&d, &b);
            prop_assert_eq!(a, Chromosome::from_bits(&ex));
            prop_assert_eq!(b, Chromosome::from_bits(&ey));
        }
    }
}
