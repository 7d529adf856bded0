//! The energy-constrained classical bound, the setup inequality, violation
//! region scans, and a brute-force oracle over explicit classical
//! strategies.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::lp::{LinearProgram, Relation};
use crate::model::{ConditionalTable, DeviceParams, EnergyBounds};

/// Margins this close to zero are reported as non-violating.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// `|p(0|0) − p(1|0) − p(0|1) + p(1|1)|`.
pub fn classical_lhs(p: &ConditionalTable) -> f64 {
    signed_lhs(p).abs()
}

/// The expression inside [`classical_lhs`] before taking the modulus.
pub fn signed_lhs(p: &ConditionalTable) -> f64 {
    p.get(false, false) - p.get(true, false) - p.get(false, true) + p.get(true, true)
}

/// `2(ω₀ + ω₁)`: the largest LHS any classical mixture can reach.
pub fn classical_bound(omega: &EnergyBounds) -> f64 {
    2.0 * (omega.omega0() + omega.omega1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SetupInequality {
    pub lhs: f64,
    pub rhs: f64,
    pub violated: bool,
}

impl SetupInequality {
    pub fn margin(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// The classical bound specialised to the ideal setup (blocked signal for
/// x=0, in-phase amplitudes, no dark counts):
/// `|e^{−η|tα+rβ|²} − e^{−η|rβ|²}| ≤ |α|²`.
pub fn setup_inequality_at(alpha: f64, beta: f64, eta: f64, t2: f64) -> SetupInequality {
    let t = t2.sqrt();
    let r = (1.0 - t2).sqrt();
    let lhs = ((-eta * (t * alpha + r * beta).powi(2)).exp() - (-eta * (r * beta).powi(2)).exp()).abs();
    let rhs = alpha * alpha;
    SetupInequality {
        lhs,
        rhs,
        violated: lhs - rhs > BOUNDARY_TOL,
    }
}

pub fn setup_inequality(params: &DeviceParams) -> SetupInequality {
    setup_inequality_at(params.alpha_mag(), params.beta_mag(), params.eta(), params.t2())
}

/// The amplitudes `α = ηt/2`, `β = 1/r` at which the setup inequality is
/// violated for every nonzero efficiency.
pub fn prescribed_violation_point(eta: f64, t2: f64) -> (f64, f64) {
    (eta * t2.sqrt() / 2.0, 1.0 / (1.0 - t2).sqrt())
}

/// Evenly spaced axis, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRange {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl AxisRange {
    pub fn new(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("steps", "grid must have at least one point"));
        }
        if !start.is_finite() || !end.is_finite() {
            return Err(invalid("range", "endpoints must be finite"));
        }
        Ok(Self { start, end, steps })
    }

    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let step = (self.end - self.start) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.start + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViolationCell {
    pub alpha: f64,
    pub beta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl ViolationCell {
    pub fn violated(&self) -> bool {
        self.margin > BOUNDARY_TOL
    }
}

/// Margin `lhs − rhs` of the setup inequality over an (|α|, |β|) grid,
/// rows ordered α-major.
pub fn scan_violation_region(eta: f64, t2: f64, alphas: &[f64], betas: &[f64]) -> Result<Vec<ViolationCell>> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(invalid("grid", "violation scan grid is empty"));
    }
    let cells: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(alpha, beta)| {
            let s = setup_inequality_at(alpha, beta, eta, t2);
            ViolationCell {
                alpha,
                beta,
                lhs: s.lhs,
                rhs: s.rhs,
                margin: s.margin(),
            }
        })
        .collect())
}

pub fn write_violation_csv<W: Write>(cells: &[ViolationCell], mut out: W) -> Result<()> {
    writeln!(out, "alpha,beta,lhs,rhs,margin")?;
    for c in cells {
        writeln!(out, "{},{},{},{},{}", c.alpha, c.beta, c.lhs, c.rhs, c.margin)?;
    }
    Ok(())
}

/// Default message alphabet size for [`classical_max_lhs`].
pub const DEFAULT_M_MAX: usize = 8;

/// Largest classical-bound LHS reachable by classical strategies with
/// integer-valued messages `m ∈ {0..=m_max}`.
///
/// A strategy sends message distributions `q_x` with mean `Σ m·q_x(m) ≤ ω_x`
/// and answers deterministically with `σ(m) ∈ {±1}` (the sign of
/// `p(0|·) − p(1|·)`). For each of the `2^(m_max+1)` response patterns the
/// best `(q₀, q₁)` is found by linear programming; the maximum over all
/// patterns covers both signs of the modulus.
pub fn classical_max_lhs(omega: &EnergyBounds, m_max: usize) -> Result<f64> {
    if m_max < 2 {
        return Err(invalid("m_max", "message alphabet must reach at least 2"));
    }
    if m_max > 20 {
        return Err(invalid("m_max", "enumeration limited to m_max <= 20"));
    }
    let k = m_max + 1;
    let mut base = LinearProgram::new(vec![0.0; 2 * k]);
    let ones = |offset: usize| -> Vec<f64> {
        (0..2 * k).map(|j| if j / k == offset { 1.0 } else { 0.0 }).collect()
    };
    let means = |offset: usize| -> Vec<f64> {
        (0..2 * k)
            .map(|j| if j / k == offset { (j % k) as f64 } else { 0.0 })
            .collect()
    };
    base = base
        .constrain(ones(0), Relation::Eq, 1.0)
        .constrain(ones(1), Relation::Eq, 1.0)
        .constrain(means(0), Relation::Le, omega.omega0())
        .constrain(means(1), Relation::Le, omega.omega1());

    let patterns: Vec<u32> = (0..1u32 << k).collect();
    let best = patterns
        .par_iter()
        .map(|&pattern| {
            let mut lp = base.clone();
            for m in 0..k {
                let sigma = if pattern >> m & 1 == 1 { 1.0 } else { -1.0 };
                lp.objective[m] = sigma;
                lp.objective[k + m] = -sigma;
            }
            lp.solve().map(|s| s.objective)
        })
        .try_reduce(|| f64::NEG_INFINITY, |a, b| Ok(a.max(b)))?;
    Ok(best)
}
