//! Packed bit strings. Bit `i` lives in word `i / 64` at position `i % 64`,
//! which serializes to little-endian bit order within bytes.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self {
            words: Vec::with_capacity(bits.div_ceil(64)),
            len: 0,
        }
    }

    /// Takes ownership of packed words; bits past `len` are cleared.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(len.div_ceil(64), 0);
        let mut s = Self { words, len };
        s.clear_tail();
        s
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut s = Self::new();
        for b in bits {
            s.push(b);
        }
        s
    }

    /// Reads `len` bits from little-endian packed bytes.
    pub fn from_bytes_le(bytes: &[u8], len: usize) -> Result<Self> {
        let need = len.div_ceil(8);
        if bytes.len() < need {
            return Err(Error::LengthMismatch {
                what: "packed bytes",
                expected: need,
                got: bytes.len(),
            });
        }
        let words = bytes[..need]
            .chunks(8)
            .map(|c| {
                let mut buf = [0u8; 8];
                buf[..c.len()].copy_from_slice(c);
                u64::from_le_bytes(buf)
            })
            .collect();
        Ok(Self::from_words(words, len))
    }

    /// Packs into `ceil(len/8)` bytes, zero-padded.
    pub fn to_bytes_le(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
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
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i & 63);
        if v {
            self.words[i >> 6] |= mask;
        } else {
            self.words[i >> 6] &= !mask;
        }
    }

    #[inline]
    pub fn push(&mut self, v: bool) {
        if self.len & 63 == 0 {
            self.words.push(0);
        }
        if v {
            self.words[self.len >> 6] |= 1 << (self.len & 63);
        }
        self.len += 1;
    }

    pub fn extend_from(&mut self, other: &BitString) {
        if self.len & 63 == 0 {
            self.words.extend_from_slice(&other.words);
            self.len += other.len;
            return;
        }
        for i in 0..other.len {
            self.push(other.get(i));
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Copies `len` bits starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> BitString {
        assert!(start + len <= self.len, "slice out of range");
        let shift = start & 63;
        let first = start >> 6;
        let n_words = len.div_ceil(64);
        let words = (0..n_words)
            .map(|w| {
                let lo = self.words.get(first + w).copied().unwrap_or(0);
                if shift == 0 {
                    lo
                } else {
                    let hi = self.words.get(first + w + 1).copied().unwrap_or(0);
                    (lo >> shift) | (hi << (64 - shift))
                }
            })
            .collect();
        BitString::from_words(words, len)
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                what: "xor operand",
                expected: self.len,
                got: other.len,
            });
        }
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a ^ b)
            .collect();
        Ok(BitString::from_words(words, self.len))
    }

    fn clear_tail(&mut self) {
        let rem = self.len & 63;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self::from_bools(iter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_order_is_lsb_first() {
        let s = BitString::from_bools([true, false, false, false, false, false, false, false, false, true]);
        assert_eq!(s.to_bytes_le(), vec![0x01, 0x02]);
    }

    proptest! {
        #[test]
        fn bytes_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..300)) {
            let s = BitString::from_bools(bits.iter().copied());
            let back = BitString::from_bytes_le(&s.to_bytes_le(), s.len()).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(back.iter().collect::<Vec<_>>(), bits);
        }

        #[test]
        fn slice_matches_bitwise(bits in proptest::collection::vec(any::<bool>(), 1..400),
                                 a in 0usize..400, l in 0usize..400) {
            let s = BitString::from_bools(bits.iter().copied());
            let start = a % s.len();
            let len = l % (s.len() - start + 1);
            let sl = s.slice(start, len);
            prop_assert_eq!(sl.iter().collect::<Vec<_>>(), bits[start..start + len].to_vec());
        }
    }
}
