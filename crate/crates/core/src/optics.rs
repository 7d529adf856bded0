//! Closed-form model of the interferometric setup: a modulated coherent
//! signal interferes with a local oscillator on an unbalanced beam splitter
//! and one output port is watched by a threshold detector.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ConditionalTable, DeviceParams, EnergyBounds};

/// Field amplitude of the signal leaving the preparation device for input
/// `x`. For x=0 the ideal device blocks the signal; a finite extinction
/// ratio leaves a residual field `|α|·10^(−dB/20)`.
pub fn signal_amplitude(x: bool, params: &DeviceParams) -> f64 {
    if x {
        params.alpha_mag()
    } else if params.extinction_db().is_infinite() {
        0.0
    } else {
        params.alpha_mag() * 10f64.powf(-params.extinction_db() / 20.0)
    }
}

/// Mean photon number of the prepared signal for input `x`.
pub fn mean_photon_number(x: bool, params: &DeviceParams) -> f64 {
    let a = signal_amplitude(x, params);
    a * a
}

/// Energy bounds equal to the emitted mean photon numbers.
pub fn energy_bounds(params: &DeviceParams) -> EnergyBounds {
    EnergyBounds::per_input(
        mean_photon_number(false, params),
        mean_photon_number(true, params),
        params.p1(),
    )
    .expect("photon numbers of a valid device are valid bounds")
}

/// Mean photon number reaching the detector port,
/// `|t·a_x + r·β·e^{iφ}|²`.
#[inline]
pub fn detected_intensity(x: bool, params: &DeviceParams, phase: f64) -> f64 {
    let a = signal_amplitude(x, params);
    let t2 = params.t2();
    let r2 = params.r2();
    let beta = params.beta_mag();
    let cross = 2.0 * (t2 * r2).sqrt() * a * beta * phase.cos();
    // A modulus squared; clamp the rounding residue at destructive interference.
    (t2 * a * a + r2 * beta * beta + cross).max(0.0)
}

/// Probability that the detector does not click for input `x` at the given
/// relative phase, including independent dark clicks.
#[inline]
pub fn no_click_probability(x: bool, params: &DeviceParams, phase: f64) -> f64 {
    (1.0 - params.dark_prob()) * (-params.eta() * detected_intensity(x, params, phase)).exp()
}

/// Exact `p(b|x)` of the honest device at `phase`.
pub fn conditional_table(params: &DeviceParams, phase: f64) -> ConditionalTable {
    ConditionalTable::from_no_click(
        no_click_probability(false, params, phase),
        no_click_probability(true, params, phase),
    )
    .expect("no-click probabilities lie in [0,1]")
}

/// Correlation `E = p(b = x) − p(b ≠ x)` averaged over the input bias.
pub fn correlation_function(params: &DeviceParams, phase: f64) -> f64 {
    let p00 = no_click_probability(false, params, phase);
    let p01 = no_click_probability(true, params, phase);
    // x=0 agrees on no-click, x=1 agrees on click.
    params.px(false) * (2.0 * p00 - 1.0) + params.px(true) * (1.0 - 2.0 * p01)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub phase_rad: f64,
    #[serde(rename = "E")]
    pub e: f64,
}

/// `E(φ)` on every phase of `grid`.
pub fn scan_correlation_vs_phase(params: &DeviceParams, grid: &[f64]) -> Result<Vec<PhasePoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter {
            field: "grid",
            reason: "phase grid is empty".into(),
        });
    }
    Ok(grid
        .iter()
        .map(|&phase_rad| PhasePoint {
            phase_rad,
            e: correlation_function(params, phase_rad),
        })
        .collect())
}

/// `n` evenly spaced phases covering `[0, 2π]` inclusive.
pub fn full_turn_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| std::f64::consts::TAU * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Writes `phase_rad,E` rows.
pub fn write_phase_csv<W: Write>(rows: &[PhasePoint], mut out: W) -> Result<()> {
    writeln!(out, "phase_rad,E")?;
    for r in rows {
        writeln!(out, "{},{}", r.phase_rad, r.e)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DeviceParamsSpec;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn reference_with(f: impl FnOnce(&mut DeviceParamsSpec)) -> DeviceParams {
        let mut s = DeviceParams::reference().spec();
        f(&mut s);
        s.build().unwrap()
    }

    #[test]
    fn blocked_signal_matches_local_oscillator_only() {
        let p = DeviceParams::reference();
        // exp(-η·r²|β|²) with η=0.55, r²|β|²=0.99
        let expected = (-0.55f64 * 0.99).exp();
        assert!((no_click_probability(false, &p, 0.0) - expected).abs() < 1e-14);
        assert!((no_click_probability(false, &p, 0.0) - 0.5801).abs() < 1e-4);
    }

    #[test]
    fn transmitted_signal_in_phase() {
        let p = DeviceParams::reference();
        let (t, r, a, b) = (0.99f64.sqrt(), 0.1, 0.05, 99f64.sqrt());
        let expected = (-0.55 * (t * a + r * b).powi(2)).exp();
        assert!((no_click_probability(true, &p, 0.0) - expected).abs() < 1e-14);
        assert!((expected - 0.5487).abs() < 1e-4);
    }

    #[test]
    fn blind_detector_only_dark_clicks() {
        let p = reference_with(|s| {
            s.eta = 0.0;
            s.dark_prob = 2.4e-5;
        });
        for x in [false, true] {
            assert_eq!(no_click_probability(x, &p, 1.3), 1.0 - 2.4e-5);
        }
    }

    #[test]
    fn photon_numbers() {
        let p = DeviceParams::reference();
        assert_eq!(mean_photon_number(false, &p), 0.0);
        assert!((mean_photon_number(true, &p) - 0.0025).abs() < 1e-15);
        let p = reference_with(|s| s.extinction_db = 23.0);
        let expected = 0.0025 * 10f64.powf(-2.3);
        assert!((mean_photon_number(false, &p) - expected).abs() < 1e-18);
        assert!((expected - 1.25e-5).abs() < 1e-7);
    }

    #[test]
    fn correlation_reference_point() {
        let p = DeviceParams::reference();
        let p00 = (-0.55f64 * 0.99).exp();
        let p01 = (-0.55 * (0.99f64.sqrt() * 0.05 + 0.1 * 99f64.sqrt()).powi(2)).exp();
        let expected = 0.75 * (2.0 * p00 - 1.0) + 0.25 * (1.0 - 2.0 * p01);
        let e = correlation_function(&p, 0.0);
        assert!((e - expected).abs() < 1e-14);
        assert!((e - 0.0958).abs() < 1e-4);
    }

    #[test]
    fn uncorrelated_symmetric_case() {
        // Signal absent and local oscillator tuned to p(0|x) = 1/2.
        let beta = (2f64.ln() / (0.5 * 0.01)).sqrt();
        let p = reference_with(|s| {
            s.alpha_mag = 0.0;
            s.beta_mag = beta;
            s.eta = 0.5;
        });
        assert!(correlation_function(&p, 0.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_scan() {
        let p = DeviceParams::reference();
        let rows = scan_correlation_vs_phase(&p, &[0.0]).unwrap();
        assert_eq!(rows, vec![PhasePoint { phase_rad: 0.0, e: correlation_function(&p, 0.0) }]);
        assert!(scan_correlation_vs_phase(&p, &[]).is_err());
    }

    #[test]
    fn scan_extrema_at_zero_and_pi() {
        let p = DeviceParams::reference();
        let rows = scan_correlation_vs_phase(&p, &full_turn_grid(721)).unwrap();
        let max = rows.iter().max_by(|a, b| a.e.total_cmp(&b.e)).unwrap();
        let min = rows.iter().min_by(|a, b| a.e.total_cmp(&b.e)).unwrap();
        assert!(max.phase_rad.abs() < 1e-12 || (max.phase_rad - 2.0 * PI).abs() < 1e-12);
        assert!((min.phase_rad - PI).abs() < 1e-12);
        let max_abs = rows.iter().map(|r| r.e.abs()).fold(0.0, f64::max);
        assert_eq!(max_abs, max.e.abs().max(min.e.abs()));
    }

    #[test]
    fn doubling_beta_changes_curve() {
        let p = DeviceParams::reference();
        let q = reference_with(|s| s.beta_mag *= 2.0);
        let grid = full_turn_grid(13);
        let a = scan_correlation_vs_phase(&p, &grid).unwrap();
        let b = scan_correlation_vs_phase(&q, &grid).unwrap();
        assert!(a.iter().zip(&b).any(|(u, v)| (u.e - v.e).abs() > 1e-3));
        // 4·0.99 photons of local oscillator nearly always click for x=0.
        assert!(no_click_probability(false, &q, 0.0) < 0.12);
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_phase_csv(&[PhasePoint { phase_rad: 0.5, e: 0.25 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "phase_rad,E\n0.5,0.25\n");
    }

    #[test]
    fn energy_accounting_matches_average() {
        let p = reference_with(|s| s.extinction_db = 23.0);
        let e = energy_bounds(&p);
        let avg = 0.75 * mean_photon_number(false, &p) + 0.25 * mean_photon_number(true, &p);
        assert!((e.omega_bar() - avg).abs() < 1e-18);
        let p = DeviceParams::reference();
        assert_eq!(energy_bounds(&p).omega_bar(), 0.25 * mean_photon_number(true, &p));
    }

    proptest! {
        #[test]
        fn no_click_is_a_probability(
            a in 0.0..10.0f64, b in 0.0..100.0f64, eta in 0.0..=1.0f64,
            t2 in 0.001..0.999f64, dark in 0.0..0.99f64, phase in -20.0..20.0f64,
            ext in prop_oneof![Just(f64::INFINITY), 0.0..40.0f64],
        ) {
            let p = DeviceParamsSpec {
                alpha_mag: a, beta_mag: b, rel_phase: 0.0, eta, t2, p1: 0.25,
                dark_prob: dark, extinction_db: ext, rep_rate_hz: 1e6,
            }.build().unwrap();
            for x in [false, true] {
                let q = no_click_probability(x, &p, phase);
                prop_assert!((0.0..=1.0).contains(&q));
            }
            let e = correlation_function(&p, phase);
            prop_assert!((-1.0..=1.0).contains(&e));
        }

        #[test]
        fn efficiency_strictly_reduces_no_click(
            a in 0.01..3.0f64, b in 0.01..30.0f64, t2 in 0.01..0.99f64,
            eta in 0.0..0.9f64, step in 0.01..0.1f64,
        ) {
            let mk = |eta: f64| DeviceParamsSpec {
                alpha_mag: a, beta_mag: b, rel_phase: 0.0, eta, t2, p1: 0.5,
                dark_prob: 0.0, extinction_db: f64::INFINITY, rep_rate_hz: 1e6,
            }.build().unwrap();
            let lo = no_click_probability(true, &mk(eta), 0.0);
            let hi = no_click_probability(true, &mk(eta + step), 0.0);
            prop_assert!(hi < lo);
            prop_assert!(hi < 1.0);
        }

        #[test]
        fn correlation_even_in_phase(phase in -10.0..10.0f64) {
            let p = DeviceParams::reference();
            let d = correlation_function(&p, phase) - correlation_function(&p, -phase);
            prop_assert!(d.abs() < 1e-15);
        }
    }
}
