//! Binary polynomial multiplication over packed `u64` words (bit `i` of the
//! slice is the coefficient of `z^i`).
//!
//! Karatsuba down to small schoolbook blocks whose word products use the
//! carry-less multiply instruction when the CPU has one.

/// Schoolbook below this many words.
const KARATSUBA_THRESHOLD: usize = 32;

/// Whether word products run on hardware carry-less multiplication.
pub fn hardware_clmul() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("pclmulqdq")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

/// Portable 64×64 → 128 carry-less product as `(lo, hi)`.
#[inline]
fn clmul_soft(a: u64, b: u64) -> (u64, u64) {
    let (mut lo, mut hi) = (0u64, 0u64);
    for i in 0..64 {
        let mask = 0u64.wrapping_sub((b >> i) & 1);
        lo ^= (a << i) & mask;
        if i > 0 {
            hi ^= (a >> (64 - i)) & mask;
        }
    }
    (lo, hi)
}

fn base_soft(a: &[u64], b: &[u64], out: &mut [u64]) {
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            let (lo, hi) = clmul_soft(x, y);
            out[i + j] ^= lo;
            out[i + j + 1] ^= hi;
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "pclmulqdq")]
unsafe fn base_pclmul(a: &[u64], b: &[u64], out: &mut [u64]) {
    use std::arch::x86_64::*;
    for (i, &x) in a.iter().enumerate() {
        let xv = _mm_set_epi64x(0, x as i64);
        for (j, &y) in b.iter().enumerate() {
            let r = _mm_clmulepi64_si128(xv, _mm_set_epi64x(0, y as i64), 0x00);
            out[i + j] ^= _mm_cvtsi128_si64(r) as u64;
            out[i + j + 1] ^= _mm_cvtsi128_si64(_mm_unpackhi_epi64(r, r)) as u64;
        }
    }
}

#[derive(Clone, Copy)]
struct Mul {
    hw: bool,
}

impl Mul {
    /// `out ^= a·b`; `out` holds at least `a.len() + b.len()` words.
    fn base(self, a: &[u64], b: &[u64], out: &mut [u64]) {
        #[cfg(target_arch = "x86_64")]
        if self.hw {
            // SAFETY: `hw` is only set after runtime detection of pclmulqdq.
            unsafe { base_pclmul(a, b, out) };
            return;
        }
        base_soft(a, b, out)
    }

    /// `out ^= a·b` for equal-length operands.
    fn karatsuba(self, a: &[u64], b: &[u64], out: &mut [u64]) {
        let n = a.len();
        debug_assert_eq!(n, b.len());
        if n <= KARATSUBA_THRESHOLD {
            return self.base(a, b, out);
        }
        let h = n / 2;
        let m = n - h;
        let (a0, a1) = a.split_at(h);
        let (b0, b1) = b.split_at(h);

        let mut z0 = vec![0u64; 2 * h];
        let mut z2 = vec![0u64; 2 * m];
        self.karatsuba(a0, b0, &mut z0);
        self.karatsuba(a1, b1, &mut z2);

        let mut sa = a1.to_vec();
        let mut sb = b1.to_vec();
        for i in 0..h {
            sa[i] ^= a0[i];
            sb[i] ^= b0[i];
        }
        let mut z1 = vec![0u64; 2 * m];
        self.karatsuba(&sa, &sb, &mut z1);
        for (i, v) in z0.iter().enumerate() {
            z1[i] ^= v;
            out[i] ^= v;
        }
        for (i, v) in z2.iter().enumerate() {
            z1[i] ^= v;
            out[2 * h + i] ^= v;
        }
        for (i, v) in z1.iter().enumerate() {
            out[h + i] ^= v;
        }
    }
}

fn multiply_with(a: &[u64], b: &[u64], mul: Mul) -> Vec<u64> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if !short.is_empty() && long.len() >= 2 * short.len() {
        // Slice the longer operand into pieces the size of the shorter one.
        let mut out = vec![0u64; a.len() + b.len()];
        for (i, piece) in long.chunks(short.len()).enumerate() {
            let p = multiply_balanced(piece, short, mul);
            let at = i * short.len();
            for (o, v) in out[at..].iter_mut().zip(&p) {
                *o ^= v;
            }
        }
        return out;
    }
    multiply_balanced(a, b, mul)
}

fn multiply_balanced(a: &[u64], b: &[u64], mul: Mul) -> Vec<u64> {
    let n = a.len().max(b.len());
    let mut out = vec![0u64; 2 * n];
    if n == 0 {
        return out;
    }
    let pad = |v: &[u64]| {
        let mut p = v.to_vec();
        p.resize(n, 0);
        p
    };
    mul.karatsuba(&pad(a), &pad(b), &mut out);
    out.truncate(a.len() + b.len());
    out
}

/// Product of two binary polynomials; `a.len() + b.len()` words.
pub fn multiply(a: &[u64], b: &[u64]) -> Vec<u64> {
    multiply_with(a, b, Mul { hw: hardware_clmul() })
}
