//! Binary round log.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `QRNG`                  |
//! | 4      | 1    | version (1)                   |
//! | 5      | 8    | n, number of rounds           |
//! | 13     | 8    | simulator seed                |
//! | 21     | 32   | SHA-256 digest of the device  |
//! | 53     | ⌈n/4⌉| rounds, 2 bits each           |
//!
//! Round `i` occupies payload bits `2i` (x) and `2i+1` (b), least
//! significant bit first within each byte; the final byte is zero-padded.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::model::{CorrelationCounts, RoundRecord};

pub const MAGIC: &[u8; 4] = b"QRNG";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 8 + 8 + 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundLogHeader {
    pub n: u64,
    pub seed: u64,
    pub params_digest: [u8; 32],
}

impl RoundLogHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(MAGIC);
        out[4] = VERSION;
        out[5..13].copy_from_slice(&self.n.to_le_bytes());
        out[13..21].copy_from_slice(&self.seed.to_le_bytes());
        out[21..].copy_from_slice(&self.params_digest);
        out
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut buf = [0u8; HEADER_LEN];
        let got = read_full(r, &mut buf)?;
        let magic_len = got.min(4);
        if buf[..magic_len] != MAGIC[..magic_len] {
            return Err(Error::BadMagic);
        }
        if got >= 5 && buf[4] != VERSION {
            return Err(Error::UnsupportedVersion(buf[4]));
        }
        if got < HEADER_LEN {
            return Err(Error::TruncatedHeader);
        }
        let n = u64::from_le_bytes(buf[5..13].try_into().unwrap());
        let seed = u64::from_le_bytes(buf[13..21].try_into().unwrap());
        let mut params_digest = [0u8; 32];
        params_digest.copy_from_slice(&buf[21..]);
        Ok(Self {
            n,
            seed,
            params_digest,
        })
    }

    pub fn payload_len(&self) -> usize {
        (self.n as usize).div_ceil(4)
    }
}

/// Reads until `buf` is full or the source is exhausted; returns bytes read.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(k) => got += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(got)
}

/// In-memory sequence of rounds plus header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundLog {
    header: RoundLogHeader,
    /// 32 rounds per word, round `i` at bits `2(i%32)` and `2(i%32)+1`.
    words: Vec<u64>,
}

impl RoundLog {
    pub(crate) fn from_words(header: RoundLogHeader, words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len(), (header.n as usize).div_ceil(32));
        Self { header, words }
    }

    pub fn from_rounds(seed: u64, params_digest: [u8; 32], rounds: &[RoundRecord]) -> Self {
        let mut words = vec![0u64; rounds.len().div_ceil(32)];
        for (i, r) in rounds.iter().enumerate() {
            words[i / 32] |= (r.x as u64 | (r.b as u64) << 1) << (2 * (i % 32));
        }
        Self {
            header: RoundLogHeader {
                n: rounds.len() as u64,
                seed,
                params_digest,
            },
            words,
        }
    }

    pub fn header(&self) -> &RoundLogHeader {
        &self.header
    }

    pub fn len(&self) -> usize {
        self.header.n as usize
    }

    pub fn is_empty(&self) -> bool {
        self.header.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> RoundRecord {
        assert!(i < self.len());
        let v = self.words[i / 32] >> (2 * (i % 32));
        RoundRecord {
            x: v & 1 == 1,
            b: v & 2 == 2,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = RoundRecord> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Counts over rounds `[start, start + len)`.
    pub fn counts_range(&self, start: usize, len: usize) -> CorrelationCounts {
        let mut n = [[0u64; 2]; 2];
        for i in start..start + len {
            let r = self.get(i);
            n[r.b as usize][r.x as usize] += 1;
        }
        CorrelationCounts::new(n)
    }

    pub fn counts(&self) -> CorrelationCounts {
        self.counts_range(0, self.len())
    }

    /// Output bits `b` of rounds `[start, start + len)`.
    pub fn outputs_range(&self, start: usize, len: usize) -> BitString {
        assert!(start + len <= self.len());
        let mut out = BitString::with_capacity(len);
        for i in start..start + len {
            out.push(self.get(i).b);
        }
        out
    }

    pub fn outputs(&self) -> BitString {
        self.outputs_range(0, self.len())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.header.payload_len());
        out.extend_from_slice(&self.header.to_bytes());
        let payload = self.header.payload_len();
        out.extend(self.words.iter().flat_map(|w| w.to_le_bytes()).take(payload));
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    /// SHA-256 of the serialized log.
    pub fn file_digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let header = RoundLogHeader::read_from(&mut r)?;
        if header.n == 0 {
            return Err(Error::NoData);
        }
        let payload = header.payload_len();
        let mut bytes = vec![0u8; payload];
        let got = read_full(&mut r, &mut bytes)?;
        if got < payload {
            return Err(Error::Truncated(got as u64 * 4));
        }
        let words = bytes
            .chunks(8)
            .map(|c| {
                let mut buf = [0u8; 8];
                buf[..c.len()].copy_from_slice(c);
                u64::from_le_bytes(buf)
            })
            .collect();
        Ok(Self { header, words })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Streaming reader yielding rounds in order.
pub struct RoundLogReader<R> {
    header: RoundLogHeader,
    inner: R,
    next: u64,
    buf: Vec<u8>,
    pos: usize,
    failed: bool,
}

const READ_CHUNK: usize = 1 << 16;

impl<R: Read> RoundLogReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let header = RoundLogHeader::read_from(&mut inner)?;
        if header.n == 0 {
            return Err(Error::NoData);
        }
        Ok(Self {
            header,
            inner,
            next: 0,
            buf: Vec::new(),
            pos: 0,
            failed: false,
        })
    }

    pub fn header(&self) -> &RoundLogHeader {
        &self.header
    }

    fn refill(&mut self) -> Result<()> {
        let remaining_rounds = self.header.n - self.next;
        let want = (remaining_rounds as usize).div_ceil(4).min(READ_CHUNK);
        self.buf.resize(want, 0);
        let got = read_full(&mut self.inner, &mut self.buf)?;
        self.buf.truncate(got);
        self.pos = 0;
        if got == 0 {
            return Err(Error::Truncated(self.next));
        }
        Ok(())
    }
}

impl<R: Read> Iterator for RoundLogReader<R> {
    type Item = Result<RoundRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.next >= self.header.n {
            return None;
        }
        let in_byte = (self.next % 4) as usize;
        if in_byte == 0 && self.pos >= self.buf.len() {
            if let Err(e) = self.refill() {
                self.failed = true;
                return Some(Err(e));
            }
        }
        let byte_index = if in_byte == 0 { self.pos } else { self.pos - 1 };
        let v = self.buf[byte_index] >> (2 * in_byte);
        if in_byte == 0 {
            self.pos += 1;
        }
        self.next += 1;
        Some(Ok(RoundRecord {
            x: v & 1 == 1,
            b: v & 2 == 2,
        }))
    }
}

/// A round log opened for ingest: the full-scan counts and a fresh stream
/// over the same rounds.
pub struct IngestedLog {
    pub header: RoundLogHeader,
    pub counts: CorrelationCounts,
    pub stream: RoundLogReader<BufReader<File>>,
}

/// Scans a round log file once to count it, then reopens it for streaming.
pub fn ingest_round_log(path: impl AsRef<Path>) -> Result<IngestedLog> {
    let path = path.as_ref();
    let reader = RoundLogReader::new(BufReader::new(File::open(path)?))?;
    let header = *reader.header();
    let mut n = [[0u64; 2]; 2];
    for r in reader {
        let r = r?;
        n[r.b as usize][r.x as usize] += 1;
    }
    let stream = RoundLogReader::new(BufReader::new(File::open(path)?))?;
    Ok(IngestedLog {
        header,
        counts: CorrelationCounts::new(n),
        stream,
    })
}
