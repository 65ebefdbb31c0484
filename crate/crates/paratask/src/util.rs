//! Small shared helpers: hashing, seed derivation, and checksum framing for
//! the binary file formats.

use sha2::{Digest, Sha256};

/// FNV-1a 64-bit hash. Used both for the hashing embedder buckets and for
/// seed derivation, so the constants are part of the on-disk contract.
pub const FNV_OFFSET: u64 = 0xcbf29ce484222325;
pub const FNV_PRIME: u64 = 0x100000001b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derives a stage- or component-specific seed from one base seed.
///
/// Every piece of randomness in the pipeline flows from a single CLI seed
/// through labeled derivations, so stages cannot accidentally share RNG
/// streams and reordering stages never changes their draws.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in base.to_le_bytes().iter() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    for &b in label.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Hex-encoded SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Incremental writer that appends a SHA-256 trailer over everything written.
pub struct ChecksumWriter {
    buf: Vec<u8>,
}

impl ChecksumWriter {
    pub fn new() -> Self {
        ChecksumWriter { buf: Vec::new() }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Writes a u32 length prefix followed by the raw bytes.
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    /// Appends the SHA-256 of everything written so far and returns the
    /// finished buffer.
    pub fn finish(mut self) -> Vec<u8> {
        let mut hasher = Sha256::new();
        hasher.update(&self.buf);
        let digest = hasher.finalize();
        self.buf.extend_from_slice(&digest);
        self.buf
    }
}

impl Default for ChecksumWriter {
    fn default() -> Self {
        Self::new()
    }
}

/// Cursor over a checksum-framed buffer. `verify` must be called first; it
/// strips the trailer and confirms the digest before any field is read.
pub struct ChecksumReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

/// Error surfaced by [`ChecksumReader`] when the buffer is truncated or the
/// trailer digest does not match.
#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("file is truncated")]
    Truncated,
    #[error("checksum mismatch: file is corrupt")]
    ChecksumMismatch,
    #[error("invalid string encoding")]
    BadString,
}

impl<'a> ChecksumReader<'a> {
    /// Validates the SHA-256 trailer and returns a reader over the payload.
    pub fn verify(buf: &'a [u8]) -> Result<Self, FrameError> {
        if buf.len() < 32 {
            return Err(FrameError::Truncated);
        }
        let (payload, trailer) = buf.split_at(buf.len() - 32);
        let mut hasher = Sha256::new();
        hasher.update(payload);
        let digest = hasher.finalize();
        if digest.as_slice() != trailer {
            return Err(FrameError::ChecksumMismatch);
        }
        Ok(ChecksumReader { buf: payload, pos: 0 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.pos + n > self.buf.len() {
            return Err(FrameError::Truncated);
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        self.take(n)
    }

    pub fn u8(&mut self) -> Result<u8, FrameError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FrameError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self) -> Result<u64, FrameError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    pub fn f64(&mut self) -> Result<f64, FrameError> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    pub fn str(&mut self) -> Result<String, FrameError> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| FrameError::BadString)
    }

    /// True when every payload byte has been consumed.
    pub fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }
}
