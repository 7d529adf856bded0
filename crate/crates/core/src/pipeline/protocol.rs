//! Block-wise protocol: simulate or ingest rounds, self-test each block,
//! certify its min-entropy and extract the certified bits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bits::BitString;
use crate::certify::{certify_block, certified_min_entropy};
use crate::error::{Error, Result};
use crate::extract::{extract_chunked, output_length, seed_bits_needed, DeterministicSeed, SeedBuffer, SeedSource, SystemSeed};
use crate::model::{CertifiedBlock, CorrelationCounts, DeviceParams, DeviceParamsSpec};
use crate::roundlog::RoundLog;
use crate::sim::{sample_block, DriftKind};

use super::config::{Config, ExtractorSeed};

/// Seed of block `index` derived from the master seed.
pub fn block_seed(master: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"block-seed");
    h.update(master.to_le_bytes());
    h.update(index.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// One line of the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum ReportRecord {
    Block(BlockRecord),
    Summary(Summary),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRecord {
    pub block: usize,
    pub n: u64,
    pub seed: Option<u64>,
    pub counts: CorrelationCounts,
    pub witness_value: f64,
    pub passed: bool,
    pub epsilon: f64,
    pub epsilon_prime: Option<f64>,
    pub min_entropy_bits: f64,
    pub extract_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub blocks: usize,
    pub passed: usize,
    pub pass_rate: f64,
    pub rounds: u64,
    pub total_min_entropy_bits: f64,
    pub total_extracted_bits: u64,
    pub epsilon: f64,
    pub eps_extract: f64,
    /// Certified rate per round of a passing block, before extraction.
    pub rate_bits_per_round: f64,
    /// `rate_bits_per_round` times the device repetition rate.
    pub nominal_rate_bps: f64,
    /// Extracted bits per round, over all rounds, times the repetition rate.
    pub extracted_rate_bps: f64,
}

/// Rates a configuration promises before any data is taken.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Declaration {
    pub block_size: u64,
    pub h: f64,
    pub epsilon: f64,
    pub rep_rate_hz: f64,
    pub rate_bits_per_round: f64,
    pub nominal_rate_bps: f64,
    pub min_entropy_per_block: f64,
    pub extract_len_per_block: u64,
    pub post_extraction_rate_bps: f64,
}

pub fn declare(config: &Config) -> Declaration {
    let cert = config.effective_certificate();
    let n = config.protocol.block_size;
    let h_min = certified_min_entropy(n, &cert);
    let rate = h_min / n as f64;
    let len = output_length(h_min, config.protocol.eps_extract);
    let rep = config.device.rep_rate_hz();
    Declaration {
        block_size: n,
        h: cert.h,
        epsilon: cert.epsilon,
        rep_rate_hz: rep,
        rate_bits_per_round: rate,
        nominal_rate_bps: rate * rep,
        min_entropy_per_block: h_min,
        extract_len_per_block: len,
        post_extraction_rate_bps: len as f64 / n as f64 * rep,
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub blocks: Vec<CertifiedBlock>,
    pub records: Vec<ReportRecord>,
    pub summary: Summary,
    pub output: BitString,
    /// Wall clock of the run; kept out of the report so that reports are
    /// reproducible.
    pub elapsed: Duration,
}

impl ProtocolOutcome {
    pub fn all_passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn rounds_per_second(&self) -> f64 {
        self.summary.rounds as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }

    /// Report as newline-delimited JSON.
    pub fn report_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }
}

enum RoundSource {
    Simulate,
    Log(RoundLog),
}

/// Parameters of block `index`. A linear drift keeps accumulating across
/// blocks; a random walk restarts at `rel_phase` every block.
fn block_params(config: &Config, index: usize) -> Result<DeviceParams> {
    let drift = config.protocol.drift;
    if drift.kind != DriftKind::Linear || drift.rate == 0.0 {
        return Ok(config.device.clone());
    }
    let offset = drift.rate * (index as f64) * config.protocol.block_size as f64;
    DeviceParamsSpec {
        rel_phase: config.device.rel_phase() + offset,
        ..config.device.spec()
    }
    .build()
}

struct BlockData {
    seed: Option<u64>,
    certified: CertifiedBlock,
    outputs: BitString,
}

fn produce_block(config: &Config, source: &RoundSource, index: usize) -> Result<BlockData> {
    let n = config.protocol.block_size;
    let cert = config.effective_certificate();
    let (seed, counts, outputs) = match source {
        RoundSource::Simulate => {
            let seed = block_seed(config.protocol.seed, index as u64);
            let params = block_params(config, index)?;
            let (log, counts) = sample_block(&params, n, seed, config.protocol.drift)?;
            (Some(seed), counts, log.outputs())
        }
        RoundSource::Log(log) => {
            let start = index * n as usize;
            (None, log.counts_range(start, n as usize), log.outputs_range(start, n as usize))
        }
    };
    let certified = certify_block(&counts, &config.energy, &cert, config.protocol.pr_pass, config.protocol.eps_extract)?;
    Ok(BlockData {
        seed,
        certified,
        outputs,
    })
}

fn open_seed_source(seed: &ExtractorSeed) -> Result<Box<dyn SeedSource>> {
    Ok(match seed {
        ExtractorSeed::System => Box::new(SystemSeed),
        ExtractorSeed::File { path } => Box::new(SeedBuffer::from_file(path)?),
        ExtractorSeed::Deterministic { value } => Box::new(DeterministicSeed::new(*value)),
    })
}

/// Runs the configured protocol end to end and writes the report and bit
/// file when the configuration names them.
pub fn run_protocol(config: &Config) -> Result<ProtocolOutcome> {
    config.validate()?;
    let started = Instant::now();
    let n = config.protocol.block_size;
    let n_blocks = config.protocol.blocks;

    let source = match &config.protocol.round_log {
        None => RoundSource::Simulate,
        Some(path) => {
            let log = RoundLog::load(path)?;
            let expected = config.device.digest();
            if log.header().params_digest != expected {
                return Err(Error::DigestMismatch {
                    expected: hex::encode(expected),
                    found: hex::encode(log.header().params_digest),
                });
            }
            let need = n.checked_mul(n_blocks as u64).ok_or_else(|| Error::Config("block_size * blocks overflows".into()))?;
            if (log.len() as u64) < need {
                return Err(Error::Config(format!(
                    "round log holds {} rounds, {} blocks of {} need {}",
                    log.len(),
                    n_blocks,
                    n,
                    need
                )));
            }
            RoundSource::Log(log)
        }
    };

    let mut seeds = open_seed_source(&config.protocol.extractor_seed)?;
    let reuse_pool = if config.protocol.reuse_extractor_seed {
        let max_len = output_length(certified_min_entropy(n, &config.effective_certificate()), config.protocol.eps_extract)
            .min(n) as usize;
        Some(seeds.take(seed_bits_needed(n as usize, max_len)?)?)
    } else {
        None
    };

    let mut blocks = Vec::with_capacity(n_blocks);
    let mut records = Vec::with_capacity(n_blocks + 1);
    let mut output = BitString::new();
    // Bounded batches keep at most one batch of raw blocks in memory.
    let batch = rayon::current_num_threads().max(1);
    for first in (0..n_blocks).step_by(batch) {
        let last = (first + batch).min(n_blocks);
        let data = (first..last)
            .into_par_iter()
            .map(|i| produce_block(config, &source, i))
            .collect::<Result<Vec<_>>>()?;

        // Seed segments are handed out in block order.
        let mut jobs = Vec::with_capacity(data.len());
        for d in &data {
            let len = d.certified.extract_len.min(n) as usize;
            let seed = if len == 0 {
                None
            } else {
                let need = seed_bits_needed(n as usize, len)?;
                Some(match &reuse_pool {
                    Some(pool) => pool.slice(0, need),
                    None => seeds.take(need)?,
                })
            };
            jobs.push((len, seed));
        }
        let pieces = data
            .par_iter()
            .zip(jobs.par_iter())
            .map(|(d, (len, seed))| match seed {
                Some(seed) => extract_chunked(&d.outputs, *len, &mut SeedBuffer::new(seed.clone())),
                None => Ok(BitString::new()),
            })
            .collect::<Result<Vec<_>>>()?;

        for (offset, (d, piece)) in data.into_iter().zip(pieces).enumerate() {
            output.extend_from(&piece);
            let mut certified = d.certified;
            certified.extract_len = piece.len() as u64;
            records.push(ReportRecord::Block(BlockRecord {
                block: first + offset,
                n,
                seed: d.seed,
                counts: certified.counts,
                witness_value: certified.witness_value,
                passed: certified.passed,
                epsilon: certified.epsilon,
                epsilon_prime: certified.epsilon_prime,
                min_entropy_bits: certified.min_entropy_bits,
                extract_len: certified.extract_len,
            }));
            blocks.push(certified);
        }
    }

    let passed = blocks.iter().filter(|b| b.passed).count();
    let rounds = n * n_blocks as u64;
    let cert = config.effective_certificate();
    let rate = certified_min_entropy(n, &cert) / n as f64;
    let rep = config.device.rep_rate_hz();
    let total_extracted = output.len() as u64;
    let summary = Summary {
        blocks: n_blocks,
        passed,
        pass_rate: passed as f64 / n_blocks as f64,
        rounds,
        total_min_entropy_bits: blocks.iter().map(|b| b.min_entropy_bits).sum(),
        total_extracted_bits: total_extracted,
        epsilon: cert.epsilon,
        eps_extract: config.protocol.eps_extract,
        rate_bits_per_round: rate,
        nominal_rate_bps: rate * rep,
        extracted_rate_bps: total_extracted as f64 / rounds as f64 * rep,
    };
    records.push(ReportRecord::Summary(summary.clone()));

    let outcome = ProtocolOutcome {
        blocks,
        records,
        summary,
        output,
        elapsed: started.elapsed(),
    };

    if let Some(path) = &config.output.report {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(outcome.report_jsonl()?.as_bytes())?;
        w.flush()?;
    }
    if let Some(path) = &config.output.bits {
        crate::extract::write_bits_file(path, &outcome.output)?;
    }
    Ok(outcome)
}
