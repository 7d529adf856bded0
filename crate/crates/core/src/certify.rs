//! Witness evaluation, the self-test, finite-size min-entropy and the
//! honest-device entropy surrogate.
//!
//! All entropies are in bits.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{
    counts_to_frequencies, CertifiedBlock, ConditionalTable, CorrelationCounts, EnergyBounds,
    JointFrequencies, WitnessCertificate, NORMALIZATION_TOL,
};
use crate::optics::no_click_probability;

/// `γ[f] − ζ[ω] = Σ γ[b][x]·f(x,b) − Σ ζ[x]·ω_x`.
pub fn witness_value(freqs: &JointFrequencies, omega: &EnergyBounds, cert: &WitnessCertificate) -> Result<f64> {
    let sum = freqs.sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Unnormalized(sum));
    }
    let f = freqs.cells();
    let gamma: f64 = (0..2)
        .flat_map(|b| (0..2).map(move |x| (b, x)))
        .map(|(b, x)| cert.gamma[b][x] * f[b][x])
        .sum();
    let zeta = cert.zeta[0] * omega.omega0() + cert.zeta[1] * omega.omega1();
    Ok(gamma - zeta)
}

/// The self-test: passes when the witness reaches the threshold.
pub fn pass_test(value: f64, cert: &WitnessCertificate) -> bool {
    value >= cert.h
}

/// `log₂(2/ε)`, the confidence term in the finite-size corrections.
pub fn confidence_log(epsilon: f64) -> f64 {
    (2.0 / epsilon).log2()
}

/// Per-round certified rate `h − c·√(L/n) − d·L/n` with `L = log₂(2/ε)`,
/// not clamped.
pub fn finite_size_rate(n: u64, cert: &WitnessCertificate) -> f64 {
    let l_over_n = confidence_log(cert.epsilon) / n as f64;
    cert.h - cert.c * l_over_n.sqrt() - cert.d * l_over_n
}

/// Smooth min-entropy of a passing block of `n` rounds,
/// `max(0, n·(h − c·√(L/n) − d·L/n))`.
pub fn certified_min_entropy(n: u64, cert: &WitnessCertificate) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (n as f64 * finite_size_rate(n, cert)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Soundness {
    pub epsilon: f64,
    pub epsilon_prime: f64,
    pub pr_pass: f64,
}

impl Soundness {
    /// `Pr(Pass)·ε'`, which equals ε.
    pub fn product(&self) -> f64 {
        self.pr_pass * self.epsilon_prime
    }
}

/// Smoothing parameter `ε' = ε / Pr(Pass)` for a protocol that is ε-sound.
pub fn soundness_accounting(epsilon: f64, pr_pass: f64) -> Result<Soundness> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon", "must lie in (0,1)"));
    }
    if !(pr_pass > 0.0 && pr_pass <= 1.0) {
        return Err(invalid("pr_pass", "must lie in (0,1]; no passing event"));
    }
    Ok(Soundness {
        epsilon,
        epsilon_prime: epsilon / pr_pass,
        pr_pass,
    })
}

/// Binary entropy `H₂(p)` with `0·log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    term(p) + term(1.0 - p)
}

/// `H(B|X) = −Σ_x p(x) Σ_b p(b|x) log₂ p(b|x)` for a device without hidden
/// variables.
pub fn honest_shannon_entropy(p: &ConditionalTable, p1: f64) -> f64 {
    (1.0 - p1) * binary_entropy(p.get(false, false)) + p1 * binary_entropy(p.get(false, true))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyCell {
    pub alpha: f64,
    pub beta: f64,
    pub entropy_bits: f64,
}

/// Honest-device entropy over an (|α|, |β|) grid at in-phase amplitudes,
/// ideal extinction and no dark counts. Rows ordered α-major.
pub fn honest_entropy_heatmap(
    eta: f64,
    t2: f64,
    p1: f64,
    alphas: &[f64],
    betas: &[f64],
) -> Result<Vec<EntropyCell>> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(invalid("grid", "entropy heatmap grid is empty"));
    }
    let base = crate::model::DeviceParamsSpec {
        alpha_mag: 0.0,
        beta_mag: 0.0,
        rel_phase: 0.0,
        eta,
        t2,
        p1,
        dark_prob: 0.0,
        extinction_db: f64::INFINITY,
        rep_rate_hz: 1.0,
    };
    base.clone().build()?;
    let cells: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    cells
        .par_iter()
        .map(|&(alpha, beta)| {
            let params = crate::model::DeviceParamsSpec {
                alpha_mag: alpha,
                beta_mag: beta,
                ..base.clone()
            }
            .build()?;
            let table = ConditionalTable::from_no_click(
                no_click_probability(false, &params, 0.0),
                no_click_probability(true, &params, 0.0),
            )?;
            Ok(EntropyCell {
                alpha,
                beta,
                entropy_bits: honest_shannon_entropy(&table, p1),
            })
        })
        .collect()
}

pub fn write_heatmap_csv<W: Write>(cells: &[EntropyCell], mut out: W) -> Result<()> {
    writeln!(out, "alpha,beta,entropy_bits")?;
    for c in cells {
        writeln!(out, "{},{},{}", c.alpha, c.beta, c.entropy_bits)?;
    }
    Ok(())
}

/// Runs the full per-block verdict: frequencies, witness, self-test and
/// finite-size entropy. `extract_len` is filled in with the leftover-hash
/// output length for `eps_extract`; failing blocks certify nothing.
pub fn certify_block(
    counts: &CorrelationCounts,
    omega: &EnergyBounds,
    cert: &WitnessCertificate,
    pr_pass: Option<f64>,
    eps_extract: f64,
) -> Result<CertifiedBlock> {
    let freqs = counts_to_frequencies(counts)?;
    let value = witness_value(&freqs.joint, omega, cert)?;
    let passed = pass_test(value, cert);
    let min_entropy_bits = if passed {
        certified_min_entropy(counts.n_total(), cert)
    } else {
        0.0
    };
    let epsilon_prime = pr_pass
        .map(|p| soundness_accounting(cert.epsilon, p).map(|s| s.epsilon_prime))
        .transpose()?;
    Ok(CertifiedBlock {
        counts: *counts,
        witness_value: value,
        passed,
        epsilon: cert.epsilon,
        epsilon_prime,
        min_entropy_bits,
        extract_len: crate::extract::output_length(min_entropy_bits, eps_extract),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{classical_bound, classical_lhs, signed_lhs};
    use proptest::prelude::*;

    fn cert(h: f64, c: f64, d: f64) -> WitnessCertificate {
        WitnessCertificate {
            gamma: [[0.0; 2]; 2],
            zeta: [0.0; 2],
            c,
            d,
            h,
            epsilon: 1e-10,
        }
    }

    fn uniform() -> JointFrequencies {
        JointFrequencies::new([[0.25; 2]; 2]).unwrap()
    }

    #[test]
    fn null_witness_is_zero() {
        let omega = EnergyBounds::per_input(0.0, 0.0025, 0.25).unwrap();
        assert_eq!(witness_value(&uniform(), &omega, &cert(0.1, 1.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn unnormalized_frequencies_rejected() {
        let omega = EnergyBounds::per_input(0.0, 0.0, 0.5).unwrap();
        let f = JointFrequencies::unchecked([[0.3, 0.3], [0.3, 0.3]]);
        assert!(matches!(witness_value(&f, &omega, &cert(0.0, 1.0, 1.0)), Err(Error::Unnormalized(_))));
    }

    #[test]
    fn classical_bound_witness_identity() {
        // Uniform inputs: coefficients ±2 on the four joint cells.
        let p = ConditionalTable::from_no_click(0.5801, 0.5487).unwrap();
        let omega = EnergyBounds::per_input(0.0, 0.0025, 0.5).unwrap();
        let w = WitnessCertificate::classical_bound(0.5, 1.0, 0.0, 1.0, 1.0, 1e-10);
        let f = JointFrequencies::from_conditional(&p, 0.5);
        let v = witness_value(&f, &omega, &w).unwrap();
        assert!((v - (classical_lhs(&p) - classical_bound(&omega))).abs() < 1e-12);
        // Biased inputs use the same conditional expression.
        let w = WitnessCertificate::classical_bound(0.25, 1.0, 0.0, 1.0, 1.0, 1e-10);
        let f = JointFrequencies::from_conditional(&p, 0.25);
        let omega = EnergyBounds::per_input(0.0, 0.0025, 0.25).unwrap();
        let v = witness_value(&f, &omega, &w).unwrap();
        assert!((v - (signed_lhs(&p) - classical_bound(&omega))).abs() < 1e-12);
    }

    #[test]
    fn threshold_semantics() {
        let c = cert(0.117, 1.0, 1.0);
        assert!(pass_test(0.117, &c));
        assert!(!pass_test(0.1169, &c));
        assert!(pass_test(0.2, &c));
    }

    #[test]
    fn zero_penalty_gives_n_h() {
        for n in [1u64, 10, 1_000, 100_000_000] {
            assert_eq!(certified_min_entropy(n, &cert(0.117, 0.0, 0.0)), n as f64 * 0.117);
        }
    }

    #[test]
    fn default_constants_map_threshold_to_tenth_bit() {
        let c = cert(0.117, crate::model::DEFAULT_FINITE_SIZE_C, crate::model::DEFAULT_FINITE_SIZE_D);
        let rate = certified_min_entropy(100_000_000, &c) / 1e8;
        assert!((rate - 0.1).abs() < 1e-4, "rate {rate}");
    }

    #[test]
    fn large_n_approaches_h() {
        let c = cert(0.117, 1.0, 1.0);
        let rate = certified_min_entropy(1_000_000_000_000, &c) / 1e12;
        assert!(0.117 - rate < 1e-4 && rate <= 0.117);
    }

    #[test]
    fn overwhelming_corrections_clamp_to_zero() {
        assert_eq!(certified_min_entropy(100, &cert(0.117, 10.0, 1000.0)), 0.0);
        assert_eq!(certified_min_entropy(0, &cert(0.117, 1.0, 1.0)), 0.0);
    }

    #[test]
    fn soundness_examples() {
        let s = soundness_accounting(1e-10, 1.0).unwrap();
        assert_eq!(s.epsilon_prime, 1e-10);
        let s = soundness_accounting(1e-10, 0.5).unwrap();
        assert_eq!(s.epsilon_prime, 2e-10);
        assert_eq!(s.product(), 1e-10);
        assert!(soundness_accounting(1e-10, 0.0).is_err());
        assert!(soundness_accounting(0.0, 0.5).is_err());
    }

    #[test]
    fn entropy_examples() {
        let uniform = ConditionalTable::from_no_click(0.5, 0.5).unwrap();
        assert_eq!(honest_shannon_entropy(&uniform, 0.25), 1.0);
        let det = ConditionalTable::from_no_click(1.0, 0.0).unwrap();
        assert_eq!(honest_shannon_entropy(&det, 0.25), 0.0);
        let p = ConditionalTable::from_no_click(0.5801, 0.5487).unwrap();
        let h2 = |q: f64| -q * q.log2() - (1.0 - q) * (1.0 - q).log2();
        let expected = 0.75 * h2(0.5801) + 0.25 * h2(0.5487);
        assert!((honest_shannon_entropy(&p, 0.25) - expected).abs() < 1e-15);
        assert!((expected - 0.9843).abs() < 1e-4);
    }

    #[test]
    fn heatmap_degenerate_cells() {
        let cells = honest_entropy_heatmap(0.5, 0.99, 0.25, &[0.0], &[5.0, 0.0]).unwrap();
        let q = (-0.5f64 * 0.01 * 25.0).exp();
        assert!((cells[0].entropy_bits - binary_entropy(q)).abs() < 1e-15);
        assert_eq!(cells[1].entropy_bits, 0.0);
        let cells = honest_entropy_heatmap(0.5, 0.99, 0.25, &[1e-6], &[0.0]).unwrap();
        assert!(cells[0].entropy_bits < 1e-9);
    }

    #[test]
    fn heatmap_interior_maximum_along_beta() {
        let alphas: Vec<f64> = (0..11).map(|i| 0.05 * i as f64).collect();
        let betas: Vec<f64> = (0..201).map(|i| 0.15 * i as f64).collect();
        let cells = honest_entropy_heatmap(0.5, 0.99, 0.25, &alphas, &betas).unwrap();
        for row in cells.chunks(betas.len()) {
            let (idx, _) = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.entropy_bits.total_cmp(&b.1.entropy_bits))
                .unwrap();
            assert!(idx > 0 && idx < betas.len() - 1);
        }
    }

    #[test]
    fn failing_block_certifies_nothing() {
        let counts = CorrelationCounts::new([[500, 500], [500, 500]]);
        let omega = EnergyBounds::per_input(0.0, 0.0025, 0.5).unwrap();
        let w = WitnessCertificate::classical_bound(0.5, 1.0, 0.01, 1.0, 1.0, 1e-10);
        let block = certify_block(&counts, &omega, &w, Some(0.5), 1e-10).unwrap();
        assert!(!block.passed);
        assert_eq!(block.min_entropy_bits, 0.0);
        assert_eq!(block.extract_len, 0);
        assert_eq!(block.epsilon_prime, Some(2e-10));
    }

    proptest! {
        #[test]
        fn witness_is_linear(
            a in proptest::array::uniform4(0.0..1.0f64),
            b in proptest::array::uniform4(0.0..1.0f64),
            g in proptest::array::uniform4(-5.0..5.0f64),
            w in 0.0..=1.0f64,
        ) {
            let norm = |v: [f64; 4]| {
                let s: f64 = v.iter().sum::<f64>() + 1e-9;
                let mut f = [[v[0] / s, v[1] / s], [v[2] / s, v[3] / s]];
                f[0][0] = 1.0 - f[0][1] - f[1][0] - f[1][1];
                JointFrequencies::new(f)
            };
            let (Ok(fa), Ok(fb)) = (norm(a), norm(b)) else { return Ok(()) };
            let omega = EnergyBounds::per_input(0.01, 0.02, 0.3).unwrap();
            let c = WitnessCertificate { gamma: [[g[0], g[1]], [g[2], g[3]]], zeta: [1.0, 2.0], c: 1.0, d: 1.0, h: 0.0, epsilon: 0.1 };
            let mixed = witness_value(&fa.mix(&fb, w), &omega, &c).unwrap();
            let separate = w * witness_value(&fa, &omega, &c).unwrap() + (1.0 - w) * witness_value(&fb, &omega, &c).unwrap();
            prop_assert!((mixed - separate).abs() < 1e-12);
        }

        #[test]
        fn rate_monotone_and_bounded(n in 1u64..1_000_000_000, c in 0.0..50.0f64, d in 0.0..1e5f64) {
            let cert = WitnessCertificate { gamma: [[0.0; 2]; 2], zeta: [0.0; 2], c, d, h: 0.117, epsilon: 1e-10 };
            let r1 = certified_min_entropy(n, &cert) / n as f64;
            let r2 = certified_min_entropy(2 * n, &cert) / (2 * n) as f64;
            prop_assert!(r2 >= r1);
            prop_assert!(r1 <= 0.117);
        }

        #[test]
        fn entropy_range_and_relabeling(q0 in 0.0..=1.0f64, q1 in 0.0..=1.0f64, p1 in 0.01..0.99f64) {
            let p = ConditionalTable::from_no_click(q0, q1).unwrap();
            let flipped = ConditionalTable::from_no_click(1.0 - q0, 1.0 - q1).unwrap();
            let h = honest_shannon_entropy(&p, p1);
            prop_assert!((0.0..=1.0 + 1e-15).contains(&h));
            prop_assert!((h - honest_shannon_entropy(&flipped, p1)).abs() < 1e-12);
        }
    }
}
