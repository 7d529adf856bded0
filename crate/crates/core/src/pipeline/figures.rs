//! CSV data behind the correlation-vs-phase curve, the violation region
//! and the honest-entropy heatmap.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::certify::{honest_entropy_heatmap, write_heatmap_csv};
use crate::classical::{classical_bound, prescribed_violation_point, scan_violation_region, write_violation_csv, AxisRange};
use crate::error::Result;
use crate::model::{DeviceParams, DeviceParamsSpec, EnergyBounds};
use crate::optics::{correlation_function, full_turn_grid, no_click_probability, scan_correlation_vs_phase, write_phase_csv};
use crate::sim::{sample_block, DriftModel};

use super::config::{Config, FigureConfig};
use super::protocol::block_seed;

/// One row of the correlation-vs-phase table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub phase_rad: f64,
    /// Closed form.
    pub e: f64,
    /// Monte Carlo estimate `(#(b=x) − #(b≠x))/n`, if simulated.
    pub e_mc: Option<f64>,
    /// Binomial standard deviation of `e_mc`, `√((1−E²)/n)`.
    pub sigma_mc: Option<f64>,
    /// Centre of the classically reachable band for the observed `p(0|0)`.
    pub e0: f64,
    /// Half-width `2·p1·(ω₀+ω₁)` of that band.
    pub classical_halfwidth: f64,
    /// `2(ω₀+ω₁)`.
    pub classical_bound: f64,
}

/// Closed-form and simulated `E(φ)` with the classical band around it.
pub fn correlation_table(
    params: &DeviceParams,
    omega: &EnergyBounds,
    phases: &[f64],
    mc_rounds: u64,
    seed: u64,
) -> Result<Vec<CorrelationRow>> {
    let bound = classical_bound(omega);
    let p1 = params.p1();
    phases
        .par_iter()
        .enumerate()
        .map(|(i, &phase)| {
            let e = correlation_function(params, phase);
            let p00 = no_click_probability(false, params, phase);
            let (e_mc, sigma_mc) = if mc_rounds > 0 {
                let shifted = DeviceParamsSpec {
                    rel_phase: phase,
                    ..params.spec()
                }
                .build()?;
                let (_, c) = sample_block(&shifted, mc_rounds, block_seed(seed, i as u64), DriftModel::NONE)?;
                let agree = c.get(false, false) + c.get(true, true);
                let n = c.n_total() as f64;
                let e_mc = (2.0 * agree as f64 - n) / n;
                (Some(e_mc), Some(((1.0 - e * e) / n).sqrt()))
            } else {
                (None, None)
            };
            Ok(CorrelationRow {
                phase_rad: phase,
                e,
                e_mc,
                sigma_mc,
                e0: (1.0 - 2.0 * p1) * (2.0 * p00 - 1.0),
                classical_halfwidth: p1 * bound,
                classical_bound: bound,
            })
        })
        .collect()
}

pub fn write_correlation_csv<W: Write>(rows: &[CorrelationRow], mut out: W) -> Result<()> {
    writeln!(out, "phase_rad,E,E_mc,sigma_mc,E0,classical_halfwidth,classical_bound")?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.phase_rad,
            r.e,
            opt(r.e_mc),
            opt(r.sigma_mc),
            r.e0,
            r.classical_halfwidth,
            r.classical_bound
        )?;
    }
    Ok(())
}

/// Axis points with extra values merged in, sorted and deduplicated.
fn axis_with(range: [f64; 2], steps: usize, extra: f64) -> Result<Vec<f64>> {
    let mut pts = AxisRange::new(range[0], range[1], steps)?.points();
    if extra >= range[0].min(range[1]) && extra <= range[0].max(range[1]) {
        pts.push(extra);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    Ok(pts)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FigureFiles {
    pub phase_scan: PathBuf,
    pub correlation: PathBuf,
    pub violation_region: PathBuf,
    pub entropy_heatmap: PathBuf,
}

/// Writes all figure CSVs into `dir`.
///
/// The (|α|, |β|) axes include the amplitudes `α = ηt/2`, `β = 1/r` when
/// they fall inside the configured ranges.
pub fn emit_figures(config: &Config, dir: &Path) -> Result<FigureFiles> {
    fs::create_dir_all(dir)?;
    let fig: &FigureConfig = &config.output.figures;
    let params = &config.device;
    let files = FigureFiles {
        phase_scan: dir.join("phase_scan.csv"),
        correlation: dir.join("correlation_vs_phase.csv"),
        violation_region: dir.join("violation_region.csv"),
        entropy_heatmap: dir.join("entropy_heatmap.csv"),
    };

    let phases = full_turn_grid(fig.phase_points.max(1));
    let scan = scan_correlation_vs_phase(params, &phases)?;
    write_phase_csv(&scan, BufWriter::new(File::create(&files.phase_scan)?))?;

    let rows = correlation_table(params, &config.energy, &phases, fig.mc_rounds, config.protocol.seed)?;
    write_correlation_csv(&rows, BufWriter::new(File::create(&files.correlation)?))?;

    let (a_star, b_star) = prescribed_violation_point(params.eta(), params.t2());
    let alphas = axis_with(fig.alpha_range, fig.steps, a_star)?;
    let betas = axis_with(fig.beta_range, fig.steps, b_star)?;
    let cells = scan_violation_region(params.eta(), params.t2(), &alphas, &betas)?;
    write_violation_csv(&cells, BufWriter::new(File::create(&files.violation_region)?))?;

    let heat = honest_entropy_heatmap(params.eta(), params.t2(), params.p1(), &alphas, &betas)?;
    write_heatmap_csv(&heat, BufWriter::new(File::create(&files.entropy_heatmap)?))?;

    Ok(files)
}
