use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sdqrng::certify::{certify_block, honest_entropy_heatmap, write_heatmap_csv};
use sdqrng::classical::{scan_violation_region, write_violation_csv, AxisRange};
use sdqrng::extract::{extract_chunked, read_bits_file, write_bits_file, SeedBuffer};
use sdqrng::pipeline::{declare, emit_figures, ingest_round_log, monitor, run_protocol, Config};
use sdqrng::roundlog::RoundLog;
use sdqrng::{sample_block, DeviceParams, DriftKind, DriftModel, EnergyBounds, WitnessCertificate};

/// Self-testing quantum random number generation from an energy bound.
#[derive(Parser)]
#[command(name = "sdqrng", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Drift {
    None,
    Linear,
    RandomWalk,
}

impl From<Drift> for DriftKind {
    fn from(d: Drift) -> Self {
        match d {
            Drift::None => DriftKind::None,
            Drift::Linear => DriftKind::Linear,
            Drift::RandomWalk => DriftKind::RandomWalk,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate rounds and write a round log.
    Simulate {
        /// Device parameters (JSON).
        #[arg(long)]
        device: PathBuf,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "none")]
        drift_kind: Drift,
        /// Radians per round (linear) or per-round std deviation (random walk).
        #[arg(long, default_value_t = 0.0)]
        drift_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Self-test and certify the blocks of a round log.
    Certify {
        #[arg(long)]
        log: PathBuf,
        /// Witness certificate (JSON, joint form).
        #[arg(long)]
        certificate: PathBuf,
        /// Energy bounds (JSON).
        #[arg(long)]
        energy: PathBuf,
        /// Device parameters; when given, the log's digest must match.
        #[arg(long)]
        device: Option<PathBuf>,
        /// Rounds per block; defaults to the whole log.
        #[arg(long)]
        block_size: Option<u64>,
        #[arg(long, default_value_t = 1e-10)]
        eps_extract: f64,
    },
    /// Toeplitz-hash a bit-packed file.
    Extract {
        #[arg(long)]
        input: PathBuf,
        /// Number of input bits to use; defaults to the whole file.
        #[arg(long)]
        bits: Option<usize>,
        #[arg(long)]
        seed_file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Output length in bits.
        #[arg(long)]
        len: usize,
    },
    /// Run the block protocol from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Print the declared rates and exit without taking data.
        #[arg(long)]
        declare_only: bool,
    },
    /// Windowed self-testing over a round log.
    Monitor {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long)]
        energy: PathBuf,
        #[arg(long)]
        window: u64,
    },
    /// Write the figure CSVs for a config.
    Figures {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Scan the setup inequality over an (|α|, |β|) grid.
    Scan {
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        t2: f64,
        /// `start:end`
        #[arg(long, value_parser = parse_range)]
        alpha_range: (f64, f64),
        #[arg(long, value_parser = parse_range)]
        beta_range: (f64, f64),
        #[arg(long, default_value_t = 61)]
        steps: usize,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the honest-entropy heatmap here.
        #[arg(long)]
        heatmap: Option<PathBuf>,
        /// Input bias for the heatmap.
        #[arg(long, default_value_t = 0.25)]
        p1: f64,
    },
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected start:end, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn verdict(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            device,
            n,
            seed,
            drift_kind,
            drift_rate,
            out,
        } => {
            let params: DeviceParams = read_json(&device)?;
            let drift = DriftModel {
                kind: drift_kind.into(),
                rate: drift_rate,
            }
            .validate()?;
            let (log, counts) = sample_block(&params, n, seed, drift)?;
            log.save(&out).with_context(|| format!("writing {}", out.display()))?;
            print_json(&counts)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify {
            log,
            certificate,
            energy,
            device,
            block_size,
            eps_extract,
        } => {
            let cert: WitnessCertificate = read_json(&certificate)?;
            let cert = cert.validate()?;
            let omega: EnergyBounds = read_json(&energy)?;
            let log = RoundLog::load(&log)?;
            if let Some(device) = device {
                let params: DeviceParams = read_json(&device)?;
                if params.digest() != log.header().params_digest {
                    bail!(sdqrng::Error::DigestMismatch {
                        expected: hex::encode(params.digest()),
                        found: hex::encode(log.header().params_digest),
                    });
                }
            }
            let n = block_size.unwrap_or(log.len() as u64) as usize;
            if n == 0 {
                bail!("block size must be >= 1");
            }
            let blocks = log.len() / n;
            if blocks == 0 {
                bail!("log holds {} rounds, fewer than one block of {n}", log.len());
            }
            let mut all = true;
            for i in 0..blocks {
                let counts = log.counts_range(i * n, n);
                let block = certify_block(&counts, &omega, &cert, None, eps_extract)?;
                all &= block.passed;
                print_json(&block)?;
            }
            Ok(verdict(all))
        }
        Command::Extract {
            input,
            bits,
            seed_file,
            out,
            len,
        } => {
            let input = read_bits_file(&input, bits)?;
            let mut seeds = SeedBuffer::from_file(&seed_file)?;
            let output = extract_chunked(&input, len, &mut seeds)?;
            write_bits_file(&out, &output)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, declare_only } => {
            let config = Config::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if declare_only {
                print_json(&declare(&config))?;
                return Ok(ExitCode::SUCCESS);
            }
            let outcome = run_protocol(&config)?;
            print_json(&outcome.summary)?;
            eprintln!(
                "{} of {} blocks passed, {} bits extracted, {:.3e} rounds/s",
                outcome.summary.passed,
                outcome.summary.blocks,
                outcome.summary.total_extracted_bits,
                outcome.rounds_per_second()
            );
            Ok(verdict(outcome.all_passed()))
        }
        Command::Monitor {
            log,
            certificate,
            energy,
            window,
        } => {
            let cert: WitnessCertificate = read_json(&certificate)?;
            let omega: EnergyBounds = read_json(&energy)?;
            let ingested = ingest_round_log(&log)?;
            let report = monitor(ingested.stream, &cert, &omega, window)?;
            for w in &report.windows {
                print_json(w)?;
            }
            if let Some(alarm) = &report.alarm {
                eprintln!("alarm: window {} starting at round {} failed", alarm.window, alarm.start);
            }
            Ok(verdict(report.alarm.is_none()))
        }
        Command::Figures { config, out_dir } => {
            let config = Config::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let files = emit_figures(&config, &out_dir)?;
            for p in [files.phase_scan, files.correlation, files.violation_region, files.entropy_heatmap] {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scan {
            eta,
            t2,
            alpha_range,
            beta_range,
            steps,
            out,
            heatmap,
            p1,
        } => {
            let alphas = AxisRange::new(alpha_range.0, alpha_range.1, steps)?.points();
            let betas = AxisRange::new(beta_range.0, beta_range.1, steps)?.points();
            let cells = scan_violation_region(eta, t2, &alphas, &betas)?;
            let mut w = sink(out.as_deref())?;
            write_violation_csv(&cells, &mut w)?;
            w.flush()?;
            if let Some(path) = heatmap {
                let heat = honest_entropy_heatmap(eta, t2, p1, &alphas, &betas)?;
                let mut w = sink(Some(&path))?;
                write_heatmap_csv(&heat, &mut w)?;
                w.flush()?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
