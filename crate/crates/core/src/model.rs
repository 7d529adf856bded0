//! Shared domain types: device configuration, per-block counts, energy
//! bounds and witness certificates.
//!
//! Every type validates on construction (including deserialization), so a
//! value that exists is a value that satisfies its invariants.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result, Violation};

/// Normalization tolerance for frequency and probability tables.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Physical configuration of the simulated prepare-and-measure setup.
///
/// Amplitudes are real magnitudes in units of √photons; the relative phase
/// between signal and local oscillator is carried separately in
/// `rel_phase`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeviceParamsSpec", into = "DeviceParamsSpec")]
pub struct DeviceParams {
    alpha_mag: f64,
    beta_mag: f64,
    rel_phase: f64,
    eta: f64,
    t2: f64,
    p1: f64,
    dark_prob: f64,
    extinction_db: f64,
    rep_rate_hz: f64,
}

/// Unvalidated mirror of [`DeviceParams`]; the JSON schema.
///
/// Build one with struct-update syntax and call [`DeviceParamsSpec::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParamsSpec {
    pub alpha_mag: f64,
    pub beta_mag: f64,
    pub rel_phase: f64,
    pub eta: f64,
    pub t2: f64,
    pub p1: f64,
    pub dark_prob: f64,
    /// `"inf"` in JSON for a perfectly blocked x=0 signal.
    #[serde(with = "extended_f64")]
    pub extinction_db: f64,
    pub rep_rate_hz: f64,
}

impl DeviceParamsSpec {
    pub fn build(self) -> Result<DeviceParams> {
        DeviceParams::try_from(self)
    }
}

impl TryFrom<DeviceParamsSpec> for DeviceParams {
    type Error = Error;

    fn try_from(s: DeviceParamsSpec) -> Result<Self> {
        fn finite(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be finite, got {v}")))
            }
        }
        finite("alpha_mag", s.alpha_mag)?;
        finite("beta_mag", s.beta_mag)?;
        finite("rel_phase", s.rel_phase)?;
        finite("eta", s.eta)?;
        finite("t2", s.t2)?;
        finite("p1", s.p1)?;
        finite("dark_prob", s.dark_prob)?;
        finite("rep_rate_hz", s.rep_rate_hz)?;
        if s.alpha_mag < 0.0 {
            return Err(invalid("alpha_mag", "must be >= 0"));
        }
        if s.beta_mag < 0.0 {
            return Err(invalid("beta_mag", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&s.eta) {
            return Err(invalid("eta", format!("must lie in [0,1], got {}", s.eta)));
        }
        if !(s.t2 > 0.0 && s.t2 < 1.0) {
            return Err(invalid("t2", format!("must lie in (0,1), got {}", s.t2)));
        }
        if !(s.p1 > 0.0 && s.p1 < 1.0) {
            return Err(invalid("p1", format!("must lie in (0,1), got {}", s.p1)));
        }
        if !(0.0..1.0).contains(&s.dark_prob) {
            return Err(invalid(
                "dark_prob",
                format!("must lie in [0,1), got {}", s.dark_prob),
            ));
        }
        if s.extinction_db.is_nan() || s.extinction_db < 0.0 {
            return Err(invalid("extinction_db", "must be >= 0 or infinite"));
        }
        if s.rep_rate_hz <= 0.0 {
            return Err(invalid("rep_rate_hz", "must be > 0"));
        }
        Ok(DeviceParams {
            alpha_mag: s.alpha_mag,
            beta_mag: s.beta_mag,
            rel_phase: s.rel_phase,
            eta: s.eta,
            t2: s.t2,
            p1: s.p1,
            dark_prob: s.dark_prob,
            extinction_db: s.extinction_db,
            rep_rate_hz: s.rep_rate_hz,
        })
    }
}

impl From<DeviceParams> for DeviceParamsSpec {
    fn from(p: DeviceParams) -> Self {
        p.spec()
    }
}

impl DeviceParams {
    /// The interferometer operating point of the reference experiment:
    /// signal energy 0.0025 photons, 99 photons of local oscillator behind
    /// a 99:1 splitter, 55 % global efficiency, biased inputs p(1)=0.25,
    /// 12.5 MHz repetition. Ideal extinction, no dark counts.
    pub fn reference() -> Self {
        DeviceParamsSpec {
            alpha_mag: 0.05,
            beta_mag: 99f64.sqrt(),
            rel_phase: 0.0,
            eta: 0.55,
            t2: 0.99,
            p1: 0.25,
            dark_prob: 0.0,
            extinction_db: f64::INFINITY,
            rep_rate_hz: 12.5e6,
        }
        .build()
        .expect("reference parameters are valid")
    }

    pub fn spec(&self) -> DeviceParamsSpec {
        DeviceParamsSpec {
            alpha_mag: self.alpha_mag,
            beta_mag: self.beta_mag,
            rel_phase: self.rel_phase,
            eta: self.eta,
            t2: self.t2,
            p1: self.p1,
            dark_prob: self.dark_prob,
            extinction_db: self.extinction_db,
            rep_rate_hz: self.rep_rate_hz,
        }
    }

    pub fn alpha_mag(&self) -> f64 {
        self.alpha_mag
    }
    pub fn beta_mag(&self) -> f64 {
        self.beta_mag
    }
    pub fn rel_phase(&self) -> f64 {
        self.rel_phase
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn t2(&self) -> f64 {
        self.t2
    }
    /// Reflectance r² = 1 − t².
    pub fn r2(&self) -> f64 {
        1.0 - self.t2
    }
    pub fn p1(&self) -> f64 {
        self.p1
    }
    /// Probability of input `x`.
    pub fn px(&self, x: bool) -> f64 {
        if x {
            self.p1
        } else {
            1.0 - self.p1
        }
    }
    pub fn dark_prob(&self) -> f64 {
        self.dark_prob
    }
    pub fn extinction_db(&self) -> f64 {
        self.extinction_db
    }
    pub fn rep_rate_hz(&self) -> f64 {
        self.rep_rate_hz
    }

    /// SHA-256 over the canonical JSON encoding. Round logs carry this to
    /// bind recorded data to the configuration that produced it.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(&self.spec()).expect("params serialize");
        Sha256::digest(&bytes).into()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Event counts `n[b][x]` for one block of rounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CountsSpec")]
pub struct CorrelationCounts {
    n: [[u64; 2]; 2],
    n_total: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CountsSpec {
    n: [[u64; 2]; 2],
    n_total: u64,
}

impl TryFrom<CountsSpec> for CorrelationCounts {
    type Error = Error;
    fn try_from(s: CountsSpec) -> Result<Self> {
        CorrelationCounts::from_parts(s.n, s.n_total)
    }
}

impl CorrelationCounts {
    /// Counts indexed `[b][x]`.
    pub fn new(n: [[u64; 2]; 2]) -> Self {
        let n_total = n.iter().flatten().sum();
        Self { n, n_total }
    }

    pub fn from_parts(n: [[u64; 2]; 2], n_total: u64) -> Result<Self> {
        let sum: u64 = n.iter().flatten().sum();
        if sum != n_total {
            return Err(invalid(
                "n_total",
                format!("cell counts sum to {sum}, declared {n_total}"),
            ));
        }
        Ok(Self { n, n_total })
    }

    #[inline]
    pub fn record(&mut self, round: RoundRecord) {
        self.n[round.b as usize][round.x as usize] += 1;
        self.n_total += 1;
    }

    /// Associative merge of partial counts.
    pub fn merge(&self, other: &Self) -> Self {
        let mut n = self.n;
        for (row, orow) in n.iter_mut().zip(other.n.iter()) {
            for (c, o) in row.iter_mut().zip(orow.iter()) {
                *c += o;
            }
        }
        Self {
            n,
            n_total: self.n_total + other.n_total,
        }
    }

    pub fn get(&self, b: bool, x: bool) -> u64 {
        self.n[b as usize][x as usize]
    }

    pub fn cells(&self) -> [[u64; 2]; 2] {
        self.n
    }

    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    /// Number of rounds with input `x`.
    pub fn n_x(&self, x: bool) -> u64 {
        self.n[0][x as usize] + self.n[1][x as usize]
    }
}

impl std::ops::AddAssign for CorrelationCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = self.merge(&rhs);
    }
}

impl std::iter::Sum for CorrelationCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |acc, c| acc.merge(&c))
    }
}

/// Joint frequencies `f(x,b)`, stored `[b][x]`, summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointFrequencies([[f64; 2]; 2]);

impl JointFrequencies {
    pub fn new(f: [[f64; 2]; 2]) -> Result<Self> {
        let sum: f64 = f.iter().flatten().sum();
        if f.iter().flatten().any(|v| !(0.0..=1.0).contains(v))
            || (sum - 1.0).abs() > NORMALIZATION_TOL
        {
            return Err(Error::Unnormalized(sum));
        }
        Ok(Self(f))
    }

    #[cfg(test)]
    pub(crate) fn unchecked(f: [[f64; 2]; 2]) -> Self {
        Self(f)
    }

    /// The exact joint distribution `p(x)·p(b|x)` of a conditional table.
    pub fn from_conditional(p: &ConditionalTable, p1: f64) -> Self {
        let px = [1.0 - p1, p1];
        let mut f = [[0.0; 2]; 2];
        for (b, row) in f.iter_mut().enumerate() {
            for (x, cell) in row.iter_mut().enumerate() {
                *cell = px[x] * p.get(b == 1, x == 1);
            }
        }
        Self(f)
    }

    /// Convex combination `w·self + (1−w)·other`.
    pub fn mix(&self, other: &Self, w: f64) -> Self {
        let mut f = self.0;
        for (row, orow) in f.iter_mut().zip(other.0.iter()) {
            for (c, o) in row.iter_mut().zip(orow.iter()) {
                *c = w * *c + (1.0 - w) * o;
            }
        }
        Self(f)
    }

    pub fn get(&self, b: bool, x: bool) -> f64 {
        self.0[b as usize][x as usize]
    }

    pub fn cells(&self) -> [[f64; 2]; 2] {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().flatten().sum()
    }
}

/// Conditional output distribution `p(b|x)`, stored `[b][x]`; every column
/// sums to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalTable([[f64; 2]; 2]);

impl ConditionalTable {
    pub fn new(p: [[f64; 2]; 2]) -> Result<Self> {
        for x in 0..2 {
            let col = p[0][x] + p[1][x];
            if !(0.0..=1.0).contains(&p[0][x])
                || !(0.0..=1.0).contains(&p[1][x])
                || (col - 1.0).abs() > 1e-9
            {
                return Err(Error::Unnormalized(col));
            }
        }
        Ok(Self(p))
    }

    /// Table from the two no-click probabilities `p(0|0)`, `p(0|1)`.
    pub fn from_no_click(p0_given0: f64, p0_given1: f64) -> Result<Self> {
        Self::new([[p0_given0, p0_given1], [1.0 - p0_given0, 1.0 - p0_given1]])
    }

    pub fn get(&self, b: bool, x: bool) -> f64 {
        self.0[b as usize][x as usize]
    }

    pub fn cells(&self) -> [[f64; 2]; 2] {
        self.0
    }
}

/// Joint and conditional frequencies of one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frequencies {
    pub joint: JointFrequencies,
    /// Per input `x`: `[f(0|x), f(1|x)]`, or `None` when `x` never occurred.
    pub conditional: [Option<[f64; 2]>; 2],
}

impl Frequencies {
    pub fn conditional_table(&self) -> Result<ConditionalTable> {
        let c0 = self.conditional[0].ok_or(Error::UndefinedConditional(0))?;
        let c1 = self.conditional[1].ok_or(Error::UndefinedConditional(1))?;
        ConditionalTable::new([[c0[0], c1[0]], [c0[1], c1[1]]])
    }
}

/// Observed frequencies of a block: joint `f(x,b) = n[b][x]/n_total`,
/// conditional `f(b|x) = n[b][x]/n_x`.
pub fn counts_to_frequencies(counts: &CorrelationCounts) -> Result<Frequencies> {
    if counts.n_total == 0 {
        return Err(Error::NoData);
    }
    let total = counts.n_total as f64;
    let mut joint = [[0.0; 2]; 2];
    for (b, row) in joint.iter_mut().enumerate() {
        for (x, cell) in row.iter_mut().enumerate() {
            *cell = counts.n[b][x] as f64 / total;
        }
    }
    let conditional = [false, true].map(|x| {
        let nx = counts.n_x(x);
        (nx > 0).then(|| {
            let nx = nx as f64;
            [
                counts.n[0][x as usize] as f64 / nx,
                counts.n[1][x as usize] as f64 / nx,
            ]
        })
    });
    Ok(Frequencies {
        joint: JointFrequencies(joint),
        conditional,
    })
}

/// Per-input mean photon bounds ω₀, ω₁ and their average ω̄ under the input
/// distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnergyBoundsSpec")]
pub struct EnergyBounds {
    omega0: f64,
    omega1: f64,
    omega_bar: f64,
    p1: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergyBoundsSpec {
    omega0: f64,
    omega1: f64,
    omega_bar: f64,
    p1: f64,
}

impl TryFrom<EnergyBoundsSpec> for EnergyBounds {
    type Error = Error;
    fn try_from(s: EnergyBoundsSpec) -> Result<Self> {
        EnergyBounds::from_parts(s.omega0, s.omega1, s.omega_bar, s.p1)
    }
}

impl EnergyBounds {
    /// Bounds with ω̄ = (1−p1)·ω₀ + p1·ω₁.
    pub fn per_input(omega0: f64, omega1: f64, p1: f64) -> Result<Self> {
        Self::from_parts(omega0, omega1, (1.0 - p1) * omega0 + p1 * omega1, p1)
    }

    pub fn from_parts(omega0: f64, omega1: f64, omega_bar: f64, p1: f64) -> Result<Self> {
        for (field, v) in [
            ("omega0", omega0),
            ("omega1", omega1),
            ("omega_bar", omega_bar),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(p1 > 0.0 && p1 < 1.0) {
            return Err(invalid("p1", format!("must lie in (0,1), got {p1}")));
        }
        let implied = (1.0 - p1) * omega0 + p1 * omega1;
        if (implied - omega_bar).abs() > 1e-12 * implied.max(1.0) {
            return Err(invalid(
                "omega_bar",
                format!("must equal (1-p1)*omega0 + p1*omega1 = {implied}, got {omega_bar}"),
            ));
        }
        Ok(Self {
            omega0,
            omega1,
            omega_bar,
            p1,
        })
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }
    pub fn omega1(&self) -> f64 {
        self.omega1
    }
    pub fn omega(&self, x: bool) -> f64 {
        if x {
            self.omega1
        } else {
            self.omega0
        }
    }
    pub fn omega_bar(&self) -> f64 {
        self.omega_bar
    }
    pub fn p1(&self) -> f64 {
        self.p1
    }
}

/// Linear witness `γ[f] − ζ[ω]` plus the finite-size constants that turn
/// its threshold into certified min-entropy.
///
/// `gamma[b][x]` multiplies the joint frequency `f(x,b)`; `zeta[x]`
/// multiplies `ω_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessCertificate {
    pub gamma: [[f64; 2]; 2],
    pub zeta: [f64; 2],
    pub c: f64,
    pub d: f64,
    pub h: f64,
    pub epsilon: f64,
}

/// Default first-order finite-size constant shipped with the reference
/// configuration.
pub const DEFAULT_FINITE_SIZE_C: f64 = 10.0;
/// Default second-order constant. Together with [`DEFAULT_FINITE_SIZE_C`]
/// it maps the threshold h = 0.117 at n = 10⁸, ε = 10⁻¹⁰ to 0.1 bits/round.
pub const DEFAULT_FINITE_SIZE_D: f64 = 32_585.0;

impl WitnessCertificate {
    /// All well-formedness violations, empty when the certificate is valid.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let finite = self
            .gamma
            .iter()
            .flatten()
            .chain(self.zeta.iter())
            .all(|g| g.is_finite());
        if !finite {
            v.push(Violation::NonFinite("gamma/zeta"));
        }
        if !self.h.is_finite() {
            v.push(Violation::NonFinite("h"));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            v.push(Violation::CNotPositive);
        }
        if !(self.d > 0.0) || !self.d.is_finite() {
            v.push(Violation::DNotPositive);
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            v.push(Violation::EpsilonOutOfRange);
        }
        v
    }

    /// Checks every invariant; returns the certificate or the violation list.
    pub fn validate(self) -> Result<Self> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidCertificate(v))
        }
    }

    /// Witness whose value is the signed classical-bound expression
    /// `sign·[p(0|0) − p(1|0) − p(0|1) + p(1|1)] − 2(ω₀ + ω₁)`, written on
    /// joint frequencies for input bias `p1`. Positive values rule out any
    /// deterministic explanation of the block.
    pub fn classical_bound(p1: f64, sign: f64, h: f64, c: f64, d: f64, epsilon: f64) -> Self {
        let cond = [[sign, -sign], [-sign, sign]];
        Self::from_conditional(cond, [2.0, 2.0], p1, h, c, d, epsilon)
    }

    /// Converts a witness written on conditional probabilities `p(b|x)`
    /// into joint form by dividing each column by `p(x)`.
    pub fn from_conditional(
        gamma_conditional: [[f64; 2]; 2],
        zeta: [f64; 2],
        p1: f64,
        h: f64,
        c: f64,
        d: f64,
        epsilon: f64,
    ) -> Self {
        let px = [1.0 - p1, p1];
        let mut gamma = gamma_conditional;
        for row in gamma.iter_mut() {
            for (g, p) in row.iter_mut().zip(px) {
                *g /= p;
            }
        }
        Self {
            gamma,
            zeta,
            c,
            d,
            h,
            epsilon,
        }
    }

    /// Expresses a single coefficient on ω̄ as per-input coefficients.
    pub fn zeta_from_average(zeta_bar: f64, p1: f64) -> [f64; 2] {
        [zeta_bar * (1.0 - p1), zeta_bar * p1]
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One round of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoundRecord {
    pub x: bool,
    pub b: bool,
}

/// Verdict for one block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifiedBlock {
    pub counts: CorrelationCounts,
    pub witness_value: f64,
    pub passed: bool,
    pub epsilon: f64,
    pub epsilon_prime: Option<f64>,
    pub min_entropy_bits: f64,
    pub extract_len: u64,
}

/// Serde helper encoding infinities as `"inf"` / `"-inf"`.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" | "infinity" | "Infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" | "-Infinity" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!(
                    "expected a number or \"inf\", got {other:?}"
                ))),
            },
        }
    }
}
