//! Toeplitz-hashing strong extractor.
//!
//! For an input of `k` bits, an output of `ℓ` bits and a seed `s` of
//! `k + ℓ − 1` bits, the Toeplitz matrix is `T[i][j] = s[ℓ − 1 − i + j]`:
//! its first row is `s[ℓ−1 .. k+ℓ−1)` and its first column is `s[0..ℓ)`
//! read from the bottom up. Output bit `i` is `⊕_j T[i][j]·x_j`.
//!
//! Equivalently `y_i = c[ℓ−1−i]` where `c[m] = ⊕_j s[m+j]·x_j` is the
//! GF(2) cross-correlation of seed and input. Small products are computed
//! word-by-word. Large ones are a binary polynomial product of the
//! bit-reversed seed with the input, `y = (s̃·x)[k−1 .. k−1+ℓ)`, via
//! Karatsuba on carry-less word multiplies; without hardware carry-less
//! multiply they fall back to one complex FFT of the packed pair followed by
//! a parity of the (exact, rounded) integer correlation.

use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng, TryRngCore};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::bits::BitString;
use crate::error::{invalid, Error, Result};

/// Inputs longer than this are hashed chunk by chunk.
pub const MAX_CHUNK_BITS: usize = 1 << 20;

/// Word-operation budget below which the direct product beats the FFT.
const DIRECT_COST_LIMIT: usize = 1 << 22;

fn check_lengths(input: &BitString, seed: &BitString, out_len: usize) -> Result<()> {
    if out_len == 0 {
        return Err(invalid("len", "output length must be at least 1"));
    }
    let k = input.len();
    if k < out_len {
        return Err(Error::LengthMismatch {
            what: "input (must be at least the output length)",
            expected: out_len,
            got: k,
        });
    }
    if seed.len() != k + out_len - 1 {
        return Err(Error::LengthMismatch {
            what: "seed",
            expected: k + out_len - 1,
            got: seed.len(),
        });
    }
    Ok(())
}

/// Hashes `input` down to `out_len` bits with the Toeplitz matrix defined
/// by `seed`. Picks the direct or FFT route by size.
pub fn toeplitz_extract(input: &BitString, seed: &BitString, out_len: usize) -> Result<BitString> {
    check_lengths(input, seed, out_len)?;
    let words = input.len().div_ceil(64);
    if words.saturating_mul(out_len) <= DIRECT_COST_LIMIT {
        Ok(direct(input, seed, out_len))
    } else if crate::gf2::hardware_clmul() {
        Ok(clmul(input, seed, out_len))
    } else {
        Ok(fft(input, seed, out_len))
    }
}

/// Polynomial-product route; uses a portable carry-less multiply when the
/// CPU lacks one.
pub fn toeplitz_extract_clmul(input: &BitString, seed: &BitString, out_len: usize) -> Result<BitString> {
    check_lengths(input, seed, out_len)?;
    Ok(clmul(input, seed, out_len))
}

/// Word-level product: one AND/XOR sweep over the input per output bit.
pub fn toeplitz_extract_direct(input: &BitString, seed: &BitString, out_len: usize) -> Result<BitString> {
    check_lengths(input, seed, out_len)?;
    Ok(direct(input, seed, out_len))
}

/// FFT-based product.
pub fn toeplitz_extract_fft(input: &BitString, seed: &BitString, out_len: usize) -> Result<BitString> {
    check_lengths(input, seed, out_len)?;
    Ok(fft(input, seed, out_len))
}

fn direct(input: &BitString, seed: &BitString, out_len: usize) -> BitString {
    let x = input.words();
    let s = seed.words();
    let k = input.len();
    let tail_mask = if k.is_multiple_of(64) { u64::MAX } else { (1u64 << (k % 64)) - 1 };
    let word_at = |idx: usize| s.get(idx).copied().unwrap_or(0);

    let mut out = BitString::zeros(out_len);
    for i in 0..out_len {
        let m = out_len - 1 - i;
        let (base, shift) = (m >> 6, (m & 63) as u32);
        let mut acc = 0u64;
        for (w, &xw) in x.iter().enumerate() {
            let lo = word_at(base + w);
            let sw = if shift == 0 {
                lo
            } else {
                (lo >> shift) | (word_at(base + w + 1) << (64 - shift))
            };
            let xw = if w + 1 == x.len() { xw & tail_mask } else { xw };
            acc ^= xw & sw;
        }
        if acc.count_ones() & 1 == 1 {
            out.set(i, true);
        }
    }
    out
}

/// Bit-reversal of a whole bit string.
fn reversed(bits: &BitString) -> BitString {
    let words: Vec<u64> = bits.words().iter().rev().map(|w| w.reverse_bits()).collect();
    let padded = words.len() * 64;
    BitString::from_words(words, padded).slice(padded - bits.len(), bits.len())
}

/// Input blocks of about `ℓ` bits each multiply an `ℓ + B − 1`-bit window
/// of the reversed seed; only the `ℓ` middle coefficients of each product
/// are kept and XORed together.
fn clmul(input: &BitString, seed: &BitString, out_len: usize) -> BitString {
    let k = input.len();
    let rev = reversed(seed);
    let block = out_len.max(4096).min(k);
    let mut acc = vec![0u64; out_len.div_ceil(64)];
    for j0 in (0..k).step_by(block) {
        let blen = block.min(k - j0);
        let x = input.slice(j0, blen);
        let lo = k - j0 - blen;
        let window = rev.slice(lo, out_len + blen - 1);
        let product = crate::gf2::multiply(window.words(), x.words());
        let total = product.len() * 64;
        let middle = BitString::from_words(product, total).slice(blen - 1, out_len);
        for (a, w) in acc.iter_mut().zip(middle.words()) {
            *a ^= w;
        }
    }
    BitString::from_words(acc, out_len)
}

fn fft(input: &BitString, seed: &BitString, out_len: usize) -> BitString {
    let k = input.len();
    let n = (k + out_len - 1).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n];
    for (j, w) in input.words().iter().enumerate() {
        let mut w = *w;
        while w != 0 {
            let b = w.trailing_zeros() as usize;
            buf[j * 64 + b].re = 1.0;
            w &= w - 1;
        }
    }
    for (j, w) in seed.words().iter().enumerate() {
        let mut w = *w;
        while w != 0 {
            let b = w.trailing_zeros() as usize;
            buf[j * 64 + b].im = 1.0;
            w &= w - 1;
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);

    // Split the packed transform into X (input) and S (seed); form S·conj(X).
    let half = Complex::new(0.5, 0.0);
    let mut prod = vec![Complex::new(0.0, 0.0); n];
    for f in 0..n {
        let z = buf[f];
        let zc = buf[(n - f) % n].conj();
        let xf = (z + zc) * half;
        // (z − zc) / 2i
        let d = z - zc;
        let sf = Complex::new(d.im * 0.5, -d.re * 0.5);
        prod[f] = sf * xf.conj();
    }
    planner.plan_fft_inverse(n).process(&mut prod);

    let scale = 1.0 / n as f64;
    let mut out = BitString::zeros(out_len);
    for i in 0..out_len {
        let c = prod[out_len - 1 - i].re * scale;
        let r = c.round();
        debug_assert!((c - r).abs() < 0.25, "FFT correlation not integral: {c}");
        if (r as i64) & 1 == 1 {
            out.set(i, true);
        }
    }
    out
}

/// Leftover-hash output length `⌊H − 2·log₂(1/ε)⌋`, clamped at zero.
pub fn output_length(min_entropy_bits: f64, eps_extract: f64) -> u64 {
    if !(min_entropy_bits > 0.0) || !(eps_extract > 0.0 && eps_extract < 1.0) {
        return 0;
    }
    let l = (min_entropy_bits - 2.0 * (1.0 / eps_extract).log2()).floor();
    if l > 0.0 {
        l as u64
    } else {
        0
    }
}

/// One chunk of a chunked extraction: input bits `[start, start+len)`
/// hashed to `out_len` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkPlan {
    pub start: usize,
    pub len: usize,
    pub out_len: usize,
}

impl ChunkPlan {
    pub fn seed_bits(&self) -> usize {
        if self.out_len == 0 {
            0
        } else {
            self.len + self.out_len - 1
        }
    }
}

/// Splits a `k`-bit input into chunks of at most [`MAX_CHUNK_BITS`] and
/// shares `out_len` output bits across them in proportion to their length.
pub fn chunk_plan(k: usize, out_len: usize) -> Result<Vec<ChunkPlan>> {
    if out_len > k {
        return Err(Error::LengthMismatch {
            what: "input (must be at least the output length)",
            expected: out_len,
            got: k,
        });
    }
    let mut plans = Vec::with_capacity(k.div_ceil(MAX_CHUNK_BITS));
    let share = |pos: usize| ((out_len as u128 * pos as u128) / k.max(1) as u128) as usize;
    let mut start = 0;
    while start < k {
        let len = MAX_CHUNK_BITS.min(k - start);
        let out = share(start + len) - share(start);
        plans.push(ChunkPlan {
            start,
            len,
            out_len: out,
        });
        start += len;
    }
    Ok(plans)
}

/// Total seed bits consumed by a chunked extraction.
pub fn seed_bits_needed(k: usize, out_len: usize) -> Result<usize> {
    Ok(chunk_plan(k, out_len)?.iter().map(ChunkPlan::seed_bits).sum())
}

/// Source of extractor seed bits.
pub trait SeedSource {
    fn take(&mut self, bits: usize) -> Result<BitString>;
}

/// Seed bits from a fixed buffer, typically a seed file; running out is an
/// error.
#[derive(Debug, Clone)]
pub struct SeedBuffer {
    bits: BitString,
    cursor: usize,
}

impl SeedBuffer {
    pub fn new(bits: BitString) -> Self {
        Self { bits, cursor: 0 }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(read_bits_file(path, None)?))
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.cursor
    }

    pub fn rewind(&mut self) {
        self.cursor = 0;
    }
}

impl SeedSource for SeedBuffer {
    fn take(&mut self, bits: usize) -> Result<BitString> {
        if bits > self.remaining() {
            return Err(Error::SeedExhausted {
                needed: bits,
                available: self.remaining(),
            });
        }
        let out = self.bits.slice(self.cursor, bits);
        self.cursor += bits;
        Ok(out)
    }
}

/// Deterministic ChaCha20 expansion of a 64-bit seed. Reproducible, so only
/// suitable for testing and replay.
pub struct DeterministicSeed(ChaCha20Rng);

impl DeterministicSeed {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha20Rng::seed_from_u64(seed))
    }
}

impl SeedSource for DeterministicSeed {
    fn take(&mut self, bits: usize) -> Result<BitString> {
        let words = (0..bits.div_ceil(64)).map(|_| self.0.next_u64()).collect();
        Ok(BitString::from_words(words, bits))
    }
}

/// Seed bits drawn from the operating system's entropy source.
pub struct SystemSeed;

impl SeedSource for SystemSeed {
    fn take(&mut self, bits: usize) -> Result<BitString> {
        let mut bytes = vec![0u8; bits.div_ceil(8)];
        rand::rngs::OsRng
            .try_fill_bytes(&mut bytes)
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        BitString::from_bytes_le(&bytes, bits)
    }
}

/// Extracts `out_len` bits from `input` chunk by chunk, pulling an
/// independent seed segment per chunk from `seeds` in chunk order. Chunks
/// are hashed in parallel and concatenated by index.
pub fn extract_chunked(input: &BitString, out_len: usize, seeds: &mut dyn SeedSource) -> Result<BitString> {
    let plans = chunk_plan(input.len(), out_len)?;
    let jobs = plans
        .iter()
        .filter(|p| p.out_len > 0)
        .map(|p| Ok((*p, seeds.take(p.seed_bits())?)))
        .collect::<Result<Vec<_>>>()?;
    let pieces = jobs
        .par_iter()
        .map(|(p, seed)| toeplitz_extract(&input.slice(p.start, p.len), seed, p.out_len))
        .collect::<Result<Vec<_>>>()?;
    let mut out = BitString::with_capacity(out_len);
    for piece in &pieces {
        out.extend_from(piece);
    }
    Ok(out)
}

/// Monobit statistic `(#ones − #zeros)/√n`.
pub fn monobit_z(bits: &BitString) -> f64 {
    if bits.is_empty() {
        return 0.0;
    }
    let n = bits.len() as f64;
    (2.0 * bits.count_ones() as f64 - n) / n.sqrt()
}

/// Reads a raw bit-packed file (little-endian bit order within bytes).
/// With `len = None` every bit of the file is used.
pub fn read_bits_file(path: impl AsRef<Path>, len: Option<usize>) -> Result<BitString> {
    let bytes = fs::read(path)?;
    BitString::from_bytes_le(&bytes, len.unwrap_or(bytes.len() * 8))
}

pub fn write_bits_file(path: impl AsRef<Path>, bits: &BitString) -> Result<()> {
    fs::write(path, bits.to_bytes_le())?;
    Ok(())
}
