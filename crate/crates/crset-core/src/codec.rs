//! Bit-exact cascade serialization and fixed-size blob packing.
//!
//! Wire layout, all integers big-endian:
//!
//! ```text
//! magic "CRST" (4B)  version u8 = 1  salt (32B)  n_max u64  level_count u16
//! then per level:    bit_length u64  ceil(bit_length / 8) filter bytes
//! ```
//!
//! Filter bytes are most-significant-bit-first; the final partial byte is
//! zero-padded at the least-significant end.
//!
//! Blob packing prepends a u64 payload-length prefix, zero-pads to a
//! multiple of the blob size, and splits. Padding carries no information
//! beyond the payload length.

use crate::bloom::BloomFilter;
use crate::cascade::FilterCascade;
use crate::error::{Error, Result};
use crate::Salt;

pub const MAGIC: [u8; 4] = *b"CRST";
pub const VERSION: u8 = 1;

/// Fixed header size: magic, version, salt, n_max, level count.
pub const HEADER_LEN: usize = 4 + 1 + 32 + 8 + 2;

/// Default blob payload size in bytes (128 KiB).
pub const DEFAULT_BLOB_SIZE: usize = 131_072;

/// A cascade in wire form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SerializedCascade {
    pub bytes: Vec<u8>,
}

/// An ordered run of equally sized blobs carrying one serialized cascade.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlobBundle {
    pub blobs: Vec<Vec<u8>>,
    pub blob_size: usize,
}

/// Encodes a cascade. Deterministic: equal cascades yield equal bytes.
pub fn serialize(cascade: &FilterCascade) -> Result<SerializedCascade> {
    let level_count = u16::try_from(cascade.levels.len()).map_err(|_| {
        Error::FormatOverflow(format!(
            "{} levels exceed the u16 level-count field",
            cascade.levels.len()
        ))
    })?;
    let body: usize = cascade.levels.iter().map(|f| 8 + f.as_bytes().len()).sum();
    let mut bytes = Vec::with_capacity(HEADER_LEN + body);
    bytes.extend_from_slice(&MAGIC);
    bytes.push(VERSION);
    bytes.extend_from_slice(&cascade.salt);
    bytes.extend_from_slice(&cascade.n_max.to_be_bytes());
    bytes.extend_from_slice(&level_count.to_be_bytes());
    for filter in &cascade.levels {
        bytes.extend_from_slice(&filter.len_bits().to_be_bytes());
        bytes.extend_from_slice(filter.as_bytes());
    }
    Ok(SerializedCascade { bytes })
}

/// Decodes a cascade, validating magic, version, exact length, and the
/// zero padding bits of every level's final byte.
pub fn deserialize(data: &SerializedCascade) -> Result<FilterCascade> {
    let bytes = &data.bytes;
    if bytes.len() < HEADER_LEN {
        return Err(Error::CorruptPayload(format!(
            "{} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::UnsupportedFormat("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedFormat(format!(
            "unknown version {}",
            bytes[4]
        )));
    }
    let mut salt: Salt = [0u8; 32];
    salt.copy_from_slice(&bytes[5..37]);
    let n_max = u64::from_be_bytes(bytes[37..45].try_into().unwrap());
    let level_count = u16::from_be_bytes(bytes[45..47].try_into().unwrap());

    let mut offset = HEADER_LEN;
    let mut levels = Vec::with_capacity(level_count as usize);
    for _ in 0..level_count {
        if bytes.len() - offset < 8 {
            return Err(Error::CorruptPayload("truncated level header".into()));
        }
        let bit_length = u64::from_be_bytes(bytes[offset..offset + 8].try_into().unwrap());
        offset += 8;
        let byte_length = bit_length.div_ceil(8);
        if byte_length > (bytes.len() - offset) as u64 {
            return Err(Error::CorruptPayload("truncated level body".into()));
        }
        let filter =
            BloomFilter::from_parts(bit_length, bytes[offset..offset + byte_length as usize].to_vec())?;
        offset += byte_length as usize;
        levels.push(filter);
    }
    if offset != bytes.len() {
        return Err(Error::CorruptPayload(format!(
            "{} trailing bytes after the last level",
            bytes.len() - offset
        )));
    }
    Ok(FilterCascade {
        levels,
        salt,
        n_max,
    })
}

/// Frames a payload into equally sized blobs: u64 length prefix, zero
/// padding up to a blob boundary, then split. `blob_size` must be at
/// least 64 bytes.
pub fn pack_blobs(data: &SerializedCascade, blob_size: usize) -> BlobBundle {
    assert!(blob_size >= 64, "blob size must be at least 64 bytes");
    let mut payload = Vec::with_capacity(8 + data.bytes.len());
    payload.extend_from_slice(&(data.bytes.len() as u64).to_be_bytes());
    payload.extend_from_slice(&data.bytes);
    payload.resize(payload.len().div_ceil(blob_size) * blob_size, 0);
    BlobBundle {
        blobs: payload.chunks(blob_size).map(<[u8]>::to_vec).collect(),
        blob_size,
    }
}

/// Exact inverse of [`pack_blobs`]: concatenates, checks the length prefix
/// and that the padding is all zero, and strips both.
pub fn unpack_blobs(bundle: &BlobBundle) -> Result<SerializedCascade> {
    if bundle.blobs.is_empty() {
        return Err(Error::CorruptPayload("empty blob bundle".into()));
    }
    if bundle.blobs.iter().any(|b| b.len() != bundle.blob_size) {
        return Err(Error::CorruptPayload(format!(
            "blob lengths differ from the declared {} bytes",
            bundle.blob_size
        )));
    }
    let total: Vec<u8> = bundle.blobs.concat();
    if total.len() < 8 {
        return Err(Error::CorruptPayload("missing length prefix".into()));
    }
    let payload_len = u64::from_be_bytes(total[..8].try_into().unwrap());
    let available = (total.len() - 8) as u64;
    if payload_len > available {
        return Err(Error::CorruptPayload(format!(
            "length prefix {payload_len} exceeds {available} content bytes"
        )));
    }
    let end = 8 + payload_len as usize;
    if total[end..].iter().any(|&b| b != 0) {
        return Err(Error::CorruptPayload("nonzero padding bytes".into()));
    }
    Ok(SerializedCascade {
        bytes: total[8..end].to_vec(),
    })
}
