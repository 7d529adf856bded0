//! Monte Carlo sampling of protocol rounds.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{CorrelationCounts, DeviceParams};
use crate::optics::no_click_probability;
use crate::roundlog::{RoundLog, RoundLogHeader};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftKind {
    #[default]
    None,
    Linear,
    RandomWalk,
}

/// Evolution of the signal/local-oscillator phase over a block.
///
/// `rate` is radians per round for [`DriftKind::Linear`] and the per-round
/// standard deviation for [`DriftKind::RandomWalk`]; it is ignored for
/// [`DriftKind::None`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftModel {
    pub kind: DriftKind,
    #[serde(default)]
    pub rate: f64,
}

impl DriftModel {
    pub const NONE: DriftModel = DriftModel {
        kind: DriftKind::None,
        rate: 0.0,
    };

    pub fn linear(rate: f64) -> Result<Self> {
        Self {
            kind: DriftKind::Linear,
            rate,
        }
        .validate()
    }

    pub fn random_walk(sigma: f64) -> Result<Self> {
        Self {
            kind: DriftKind::RandomWalk,
            rate: sigma,
        }
        .validate()
    }

    pub fn validate(self) -> Result<Self> {
        if self.kind != DriftKind::None && !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(invalid("drift.rate", format!("must be finite and >= 0, got {}", self.rate)));
        }
        Ok(self)
    }

    fn is_static(&self) -> bool {
        self.kind == DriftKind::None || self.rate == 0.0
    }
}

/// Maps a probability to a threshold on uniform `u64` draws.
#[inline]
fn threshold(p: f64) -> u64 {
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        u64::MAX
    } else {
        // Exact for p·2⁶⁴ < 2⁶⁴; the cast saturates otherwise.
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}

/// Independent stream used by the random-walk phase drift.
const DRIFT_STREAM: u64 = 1;

/// Simulates `n` rounds of the honest device.
///
/// Each round draws `x` with bias `p1`, advances the relative phase by the
/// drift model (starting at `params.rel_phase`), and draws a click with
/// probability `1 − no_click_probability`. Output is a pure function of
/// `(params, n, seed, drift)`.
pub fn sample_block(
    params: &DeviceParams,
    n: u64,
    seed: u64,
    drift: DriftModel,
) -> Result<(RoundLog, CorrelationCounts)> {
    if n == 0 {
        return Err(invalid("n", "block must contain at least one round"));
    }
    let drift = drift.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_threshold = threshold(params.p1());
    let static_click = [false, true].map(|x| threshold(1.0 - no_click_probability(x, params, params.rel_phase())));

    let mut walk_rng = ChaCha8Rng::seed_from_u64(seed);
    walk_rng.set_stream(DRIFT_STREAM);
    let walk = match drift.kind {
        DriftKind::RandomWalk if drift.rate > 0.0 => Some(Normal::new(0.0, drift.rate).expect("finite sigma")),
        _ => None,
    };

    let n_usize = usize::try_from(n).map_err(|_| invalid("n", "exceeds address space"))?;
    let mut words = vec![0u64; n_usize.div_ceil(32)];
    let mut cells = [[0u64; 2]; 2];
    let mut phase = params.rel_phase();

    for i in 0..n_usize {
        let x = rng.next_u64() < x_threshold;
        let click_threshold = if drift.is_static() {
            static_click[x as usize]
        } else {
            match drift.kind {
                DriftKind::Linear => phase = params.rel_phase() + drift.rate * i as f64,
                DriftKind::RandomWalk => {
                    if i > 0 {
                        phase += walk.as_ref().map_or(0.0, |d| d.sample(&mut walk_rng));
                    }
                }
                DriftKind::None => {}
            }
            threshold(1.0 - no_click_probability(x, params, phase))
        };
        let b = rng.next_u64() < click_threshold;
        cells[b as usize][x as usize] += 1;
        words[i / 32] |= (x as u64 | (b as u64) << 1) << (2 * (i % 32));
    }

    let header = RoundLogHeader {
        n,
        seed,
        params_digest: params.digest(),
    };
    Ok((RoundLog::from_words(header, words), CorrelationCounts::new(cells)))
}

/// Relative phase of round `i` under a deterministic drift.
pub fn linear_phase(params: &DeviceParams, drift: DriftModel, i: u64) -> f64 {
    match drift.kind {
        DriftKind::Linear => params.rel_phase() + drift.rate * i as f64,
        _ => params.rel_phase(),
    }
}
