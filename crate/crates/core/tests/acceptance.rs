//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdqrng::certify::{certified_min_entropy, finite_size_rate, witness_value};
use sdqrng::classical::{classical_max_lhs, prescribed_violation_point, setup_inequality_at, DEFAULT_M_MAX};
use sdqrng::extract::{extract_chunked, monobit_z, toeplitz_extract, toeplitz_extract_clmul, toeplitz_extract_direct, toeplitz_extract_fft, DeterministicSeed};
use sdqrng::model::{DEFAULT_FINITE_SIZE_C, DEFAULT_FINITE_SIZE_D};
use sdqrng::optics::{conditional_table, correlation_function, full_turn_grid, no_click_probability};
use sdqrng::pipeline::figures::correlation_table;
use sdqrng::pipeline::{monitor, run_protocol, Config, ExtractorSeed};
use sdqrng::{
    sample_block, BitString, DeviceParams, DeviceParamsSpec, DriftModel, EnergyBounds, JointFrequencies,
    WitnessCertificate,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn reference_omega() -> EnergyBounds {
    EnergyBounds::per_input(0.0, 0.0025, 0.25).unwrap()
}

/// Binomial z-score of `k` successes in `n` trials against probability `p`.
fn z(k: u64, n: u64, p: f64) -> f64 {
    (k as f64 - n as f64 * p) / (n as f64 * p * (1.0 - p)).sqrt()
}

fn closed_form_fidelity() -> Outcome {
    // Independent evaluation of the ideal-limit no-click probabilities.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let spec = DeviceParamsSpec {
            alpha_mag: rng.random_range(0.0..1.0),
            beta_mag: rng.random_range(0.0..20.0),
            rel_phase: 0.0,
            eta: rng.random_range(0.0..1.0),
            t2: rng.random_range(0.01..0.99),
            ..DeviceParams::reference().spec()
        };
        let p = spec.clone().build().unwrap();
        let phase = rng.random_range(-PI..PI);
        let (t, r) = (spec.t2.sqrt(), (1.0 - spec.t2).sqrt());
        let (a, b) = (spec.alpha_mag, spec.beta_mag);
        let p0 = (-spec.eta * (r * b).powi(2)).exp();
        let p1 = (-spec.eta * (t * t * a * a + r * r * b * b + 2.0 * t * r * a * b * phase.cos())).exp();
        worst = worst
            .max((no_click_probability(false, &p, phase) - p0).abs())
            .max((no_click_probability(true, &p, phase) - p1).abs());
    }
    if worst > 1e-15 {
        return Err(format!("closed form deviates by {worst:e}"));
    }

    let params = DeviceParams::reference();
    let n = 10_000_000;
    let started = Instant::now();
    let (_, counts) = sample_block(&params, n, 2024, DriftModel::NONE).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let mut zs = Vec::new();
    zs.push(z(counts.n_x(true), n, params.p1()));
    for x in [false, true] {
        zs.push(z(counts.get(false, x), counts.n_x(x), no_click_probability(x, &params, 0.0)));
    }
    let zmax = zs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    check(
        zmax <= 5.0 && secs <= 10.0,
        format!("closed form exact to {worst:.1e}; 1e7 rounds in {secs:.2} s, max |z| = {zmax:.2} (p(x=1), f(0|0), f(0|1))"),
    )
}

fn setup_violation() -> Outcome {
    let t2 = 0.99;
    let mut min_margin = f64::INFINITY;
    for k in 1..=20 {
        let eta = 0.05 * k as f64;
        let (a, b) = prescribed_violation_point(eta, t2);
        let s = setup_inequality_at(a, b, eta, t2);
        if !s.violated {
            return Err(format!("eta = {eta:.2}: lhs {} <= rhs {}", s.lhs, s.rhs));
        }
        min_margin = min_margin.min(s.margin());
    }
    let (a, b) = prescribed_violation_point(0.5, t2);
    let s = setup_inequality_at(a, b, 0.5, t2);
    check(
        (s.lhs - 0.1472).abs() <= 1e-4 && (s.rhs - 0.0619).abs() <= 1e-4,
        format!(
            "violated for all 20 efficiencies (min margin {min_margin:.4}); eta=0.5: lhs {:.5}, rhs {:.5}",
            s.lhs, s.rhs
        ),
    )
}

fn oracle_soundness() -> Outcome {
    let grid: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
    let started = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    for &w0 in &grid {
        for &w1 in &grid {
            let omega = EnergyBounds::per_input(w0, w1, 0.25).unwrap();
            let lhs = classical_max_lhs(&omega, DEFAULT_M_MAX).map_err(|e| e.to_string())?;
            worst = worst.max(lhs - 2.0 * (w0 + w1));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        worst <= 1e-9 && secs <= 60.0,
        format!("max(oracle - 2(w0+w1)) = {worst:.3e} over 400 points in {secs:.1} s"),
    )
}

fn correlation_shape() -> Outcome {
    let params = DeviceParams::reference();
    let fine = full_turn_grid(20_001);
    let e: Vec<f64> = fine.iter().map(|&p| correlation_function(&params, p)).collect();
    let (imax, _) = e.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let (imin, _) = e.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let at_zero = fine[imax] == 0.0 || fine[imax] == 2.0 * PI;
    let at_pi = (fine[imin] - PI).abs() < 1e-9;
    if !(at_zero && at_pi) {
        return Err(format!("extrema at {} and {}", fine[imax], fine[imin]));
    }

    let phases = full_turn_grid(50);
    let started = Instant::now();
    let rows = correlation_table(&params, &reference_omega(), &phases, 1_000_000, 99).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let worst = rows
        .iter()
        .map(|r| ((r.e_mc.unwrap() - r.e) / r.sigma_mc.unwrap()).abs())
        .fold(0.0f64, f64::max);
    let band = rows.iter().all(|r| (r.classical_bound - 0.005).abs() < 1e-15);
    check(
        worst <= 5.0 && band,
        format!(
            "max at 0, min at pi; 50 x 1e6-round points, worst {worst:.2} sigma ({secs:.1} s); band 2(w0+w1) = 0.005 emitted"
        ),
    )
}

fn finite_size_behaviour() -> Outcome {
    let cert = |h, c, d| WitnessCertificate {
        gamma: [[0.0; 2]; 2],
        zeta: [0.0; 2],
        c,
        d,
        h,
        epsilon: 1e-10,
    };
    let rate = |n: u64, c: &WitnessCertificate| certified_min_entropy(n, c) / n as f64;
    let shipped = cert(0.117, DEFAULT_FINITE_SIZE_C, DEFAULT_FINITE_SIZE_D);

    let ns: Vec<u64> = (0..=120).map(|k| 10f64.powf(k as f64 / 10.0).round() as u64).collect();
    for c in [&shipped, &cert(0.117, 1.0, 1.0), &cert(0.03, 1.0, 1.0)] {
        for w in ns.windows(2) {
            let (a, b) = (rate(w[0], c), rate(w[1], c));
            if b < a || b > c.h {
                return Err(format!("rate not monotone/bounded between n={} and n={}", w[0], w[1]));
            }
        }
    }
    let far = rate(1_000_000_000_000, &shipped);
    if (far - 0.117).abs() > 1e-4 {
        return Err(format!("rate at n=1e12 is {far}"));
    }
    // Without finite-size terms the per-round rate is h bit for bit and the
    // block entropy is exactly n·h (the quotient by n may differ from h in
    // its last ulp, which is float division, not a penalty).
    let zero = cert(0.117, 0.0, 0.0);
    let exact = ns.iter().all(|&n| {
        finite_size_rate(n, &zero).to_bits() == 0.117f64.to_bits()
            && certified_min_entropy(n, &zero).to_bits() == (n as f64 * 0.117).to_bits()
    });
    if !exact {
        return Err("c=d=0 does not give h exactly".into());
    }
    let full = rate(100_000_000, &shipped);
    let config = Config::load(configs_dir().join("full-scale.json")).map_err(|e| e.to_string())?;
    let declared = sdqrng::pipeline::declare(&config);
    check(
        (full - 0.1).abs() <= 0.005 && (declared.rate_bits_per_round - 0.1).abs() <= 0.005,
        format!(
            "monotone and <= h; n=1e12 within {:.1e} of h; c=d=0 exact; defaults (c={DEFAULT_FINITE_SIZE_C}, d={DEFAULT_FINITE_SIZE_D}) at n=1e8: {full:.5} bits/round, {:.4} Mbit/s nominal",
            (far - 0.117).abs(),
            declared.nominal_rate_bps / 1e6
        ),
    )
}

fn desk_run(dir: &Path, tag: &str) -> Result<(Config, sdqrng::pipeline::ProtocolOutcome), String> {
    let mut config = Config::load(configs_dir().join("desk.json")).map_err(|e| e.to_string())?;
    config.output.report = Some(dir.join(format!("{tag}.jsonl")));
    config.output.bits = Some(dir.join(format!("{tag}.bin")));
    let outcome = run_protocol(&config).map_err(|e| e.to_string())?;
    Ok((config, outcome))
}

fn desk_protocol() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let (config, first) = desk_run(dir.path(), "a")?;
    let secs = started.elapsed().as_secs_f64();
    let (_, second) = desk_run(dir.path(), "b")?;
    let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
    let identical = read("a.jsonl") == read("b.jsonl") && read("a.bin") == read("b.bin");
    let s = &first.summary;
    let shape = config.protocol.blocks == 35 && config.protocol.block_size == 1_000_000;
    check(
        shape && first.all_passed() && s.total_extracted_bits > 0 && identical && secs <= 120.0 && second.all_passed(),
        format!(
            "{}/{} blocks of 1e6 passed, {} bits extracted, reruns byte-identical: {identical}, {secs:.1} s",
            s.passed, s.blocks, s.total_extracted_bits
        ),
    )
}

fn extractor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let random_bits = |rng: &mut ChaCha8Rng, len: usize| -> BitString { (0..len).map(|_| rng.random::<bool>()).collect() };
    for i in 0..10_000 {
        let k = rng.random_range(1..=4096);
        let l = rng.random_range(1..=k);
        let seed = random_bits(&mut rng, k + l - 1);
        let a = random_bits(&mut rng, k);
        let b = random_bits(&mut rng, k);
        let lhs = toeplitz_extract(&a.xor(&b).unwrap(), &seed, l).unwrap();
        let rhs = toeplitz_extract(&a, &seed, l).unwrap().xor(&toeplitz_extract(&b, &seed, l).unwrap()).unwrap();
        if lhs != rhs {
            return Err(format!("linearity fails on triple {i} (k={k}, l={l})"));
        }
        // Both routes agree on a sample of the triples.
        if i % 100 == 0 {
            let d = toeplitz_extract_direct(&a, &seed, l).unwrap();
            if d != toeplitz_extract_fft(&a, &seed, l).unwrap() || d != toeplitz_extract_clmul(&a, &seed, l).unwrap() {
                return Err(format!("extraction routes disagree (k={k}, l={l})"));
            }
        }
    }

    // Monobit on output extracted from passing simulated blocks.
    let mut config = Config::load(configs_dir().join("desk.json")).map_err(|e| e.to_string())?;
    config.protocol.blocks = 45;
    config.protocol.seed = 31337;
    config.protocol.extractor_seed = ExtractorSeed::Deterministic { value: 11 };
    config.output = Default::default();
    let run = run_protocol(&config).map_err(|e| e.to_string())?;
    if !run.all_passed() || run.output.len() < 1_000_000 {
        return Err(format!("monobit sample: {} bits from {} passing blocks", run.output.len(), run.summary.passed));
    }
    let zscore = monobit_z(&run.output);

    // Throughput at a 10% output ratio over four 2^20-bit chunks.
    let input = random_bits(&mut rng, 4 << 20);
    let out_len = input.len() / 10;
    let mut seeds = DeterministicSeed::new(5);
    let started = Instant::now();
    let out = extract_chunked(&input, out_len, &mut seeds).map_err(|e| e.to_string())?;
    let rate = out.len() as f64 / started.elapsed().as_secs_f64();
    check(
        zscore.abs() <= 4.0 && rate >= 1.25e6,
        format!(
            "linear on 1e4 triples; monobit z = {zscore:.3} over {} bits; {:.2} Mbit/s extracted",
            run.output.len(),
            rate / 1e6
        ),
    )
}

fn drift_monitoring() -> Outcome {
    let params = DeviceParams::reference();
    let cert = WitnessCertificate::classical_bound(0.25, 1.0, 0.03, 1.0, 1.0, 1e-10);
    let omega = reference_omega();
    let n = 10_000_000u64;
    let window = 1_000_000u64;
    let rate = PI / n as f64;

    // Closed-form witness against phase, and its threshold crossing.
    let value = |phase: f64| {
        let joint = JointFrequencies::from_conditional(&conditional_table(&params, phase), 0.25);
        witness_value(&joint, &omega, &cert).unwrap()
    };
    let (mut lo, mut hi) = (0.0, PI);
    if !(value(lo) > cert.h && value(hi) < cert.h) {
        return Err("drift does not cross the threshold".into());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if value(mid) >= cert.h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let crossing = (lo / rate) as u64;

    let (log, _) = sample_block(&params, n, 4242, DriftModel::linear(rate).unwrap()).unwrap();
    let report = monitor(log.iter().map(Ok), &cert, &omega, window).map_err(|e| e.to_string())?;
    let Some(alarm) = report.alarm else {
        return Err("no alarm raised".into());
    };
    let lag = alarm.raised_at as i64 - crossing as i64;
    check(
        lag.unsigned_abs() <= window,
        format!(
            "closed-form crossing at round {crossing} (phase {lo:.4}); alarm raised at round {} (window {}), lag {lag} <= {window}",
            alarm.raised_at, alarm.window
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("closed-form fidelity and Monte Carlo agreement", closed_form_fidelity),
        ("setup inequality violated at alpha = eta*t/2, beta = 1/r", setup_violation),
        ("classical oracle within 2(w0+w1)", oracle_soundness),
        ("correlation-vs-phase shape and simulated points", correlation_shape),
        ("finite-size min-entropy behaviour", finite_size_behaviour),
        ("desk-scale end-to-end protocol", desk_protocol),
        ("Toeplitz extractor", extractor),
        ("drift monitoring", drift_monitoring),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} [{secs:.1} s] {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {}: FAIL  {name} [{secs:.1} s] {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
