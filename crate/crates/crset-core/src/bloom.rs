//! Single-hash Bloom filter with salted, level-indexed cryptographic
//! hashing.
//!
//! Every probe and insert hashes the fixed 66-byte encoding of
//! `id || level || salt` with SHA-256 and maps the digest to one bit
//! position. A cryptographic hash keeps the set bits from being reversed
//! into candidate IDs; the level index and cascade salt make the per-level
//! hash functions independent.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::{RevocationId, Salt};

/// Byte width of the normative hash-input encoding:
/// 32-byte id, 2-byte big-endian level, 32-byte salt.
pub const HASH_INPUT_LEN: usize = 66;

/// One hashing position in a cascade: an ID pinned to a level under a salt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashInput {
    pub id: RevocationId,
    pub level: u16,
    pub salt: Salt,
}

impl HashInput {
    pub fn new(id: RevocationId, level: u16, salt: Salt) -> Self {
        HashInput { id, level, salt }
    }

    /// The fixed byte encoding shared by the builder and every checker.
    /// Equal logical inputs always produce equal encodings.
    pub fn encode(&self) -> [u8; HASH_INPUT_LEN] {
        let mut buf = [0u8; HASH_INPUT_LEN];
        buf[..32].copy_from_slice(&self.id.0);
        buf[32..34].copy_from_slice(&self.level.to_be_bytes());
        buf[34..].copy_from_slice(&self.salt);
        buf
    }
}

/// Maps a hash input to a bit position in `[0, m)`: the first 8 bytes of
/// SHA-256 over the fixed encoding, read big-endian, reduced modulo `m`.
/// Modulo bias is below 2^-32 for any `m` under 2^32.
pub fn bit_index(input: &HashInput, m: u64) -> u64 {
    debug_assert!(m >= 1);
    let digest = Sha256::digest(input.encode());
    let prefix = u64::from_be_bytes(digest[..8].try_into().expect("digest is 32 bytes"));
    prefix % m
}

/// Smallest bit length `m` such that a single-hash filter holding
/// `n_entries` values has expected false-positive rate at most `p_target`,
/// per p = 1 - e^(-n/m).
pub fn filter_size_for(n_entries: u64, p_target: f64) -> Result<u64> {
    if n_entries == 0 {
        return Err(Error::InvalidParameter(
            "filter must be sized for at least one entry".into(),
        ));
    }
    if !p_target.is_finite() || p_target <= 0.0 || p_target >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "target false-positive rate must be in (0, 1), got {p_target}"
        )));
    }
    let n = n_entries as f64;
    let expected_fpr = |m: u64| -(-n / m as f64).exp_m1();
    let mut m = (-n / (1.0 - p_target).ln()).ceil() as u64;
    m = m.max(1);
    // The closed form can land one off after rounding; snap to the smallest
    // m that actually satisfies the rate.
    while m > 1 && expected_fpr(m - 1) <= p_target {
        m -= 1;
    }
    while expected_fpr(m) > p_target {
        m += 1;
    }
    Ok(m)
}

/// Fixed-length bit array queried through exactly one salted hash.
///
/// Bits are stored most-significant-first within each byte, so the
/// in-memory bytes are already in wire order and any unused bits of the
/// final byte stay zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u8>,
    m: u64,
}

impl BloomFilter {
    /// Creates an empty filter of `m` bits. `m` must be at least 1.
    pub fn new(m: u64) -> Self {
        assert!(m >= 1, "filter length must be at least one bit");
        let bytes = usize::try_from(m.div_ceil(8)).expect("filter length fits in memory");
        BloomFilter {
            bits: vec![0u8; bytes],
            m,
        }
    }

    /// Reassembles a filter from its wire representation. The byte length
    /// must match `m` and the padding bits of the final byte must be zero.
    pub fn from_parts(m: u64, bits: Vec<u8>) -> Result<Self> {
        if m == 0 {
            return Err(Error::CorruptPayload("filter of zero bits".into()));
        }
        if bits.len() as u64 != m.div_ceil(8) {
            return Err(Error::CorruptPayload(format!(
                "filter of {m} bits needs {} bytes, got {}",
                m.div_ceil(8),
                bits.len()
            )));
        }
        if !m.is_multiple_of(8) {
            let padding_mask = 0xffu8 >> (m % 8);
            if bits.last().copied().unwrap_or(0) & padding_mask != 0 {
                return Err(Error::CorruptPayload(
                    "nonzero padding bits in final filter byte".into(),
                ));
            }
        }
        Ok(BloomFilter { bits, m })
    }

    /// Bit length `m`.
    pub fn len_bits(&self) -> u64 {
        self.m
    }

    /// Wire-order bytes, `ceil(m / 8)` of them.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    /// Number of set bits.
    pub fn count_ones(&self) -> u64 {
        self.bits.iter().map(|b| u64::from(b.count_ones())).sum()
    }

    /// Sets the bit at the input's hash position. Inserting the same input
    /// again is a no-op, and a previously inserted input is never reported
    /// absent.
    pub fn insert(&mut self, input: &HashInput) {
        let idx = bit_index(input, self.m);
        self.bits[(idx / 8) as usize] |= 0x80 >> (idx % 8);
    }

    /// True iff the bit at the input's hash position is set. May be a false
    /// positive, never a false negative.
    pub fn contains(&self, input: &HashInput) -> bool {
        let idx = bit_index(input, self.m);
        self.bits[(idx / 8) as usize] & (0x80 >> (idx % 8)) != 0
    }
}
