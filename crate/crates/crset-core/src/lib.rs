//! Padded Bloom filter cascades for credential revocation.
//!
//! An issuer assigns every credential a random 256-bit revocation ID, keeps
//! track of which IDs are valid and which are revoked, and periodically
//! publishes a freshly built filter cascade as fixed-size blobs. Because both
//! sets are padded to a fixed ratio of the declared capacity before the
//! cascade is built, the published data has the same shape no matter how many
//! credentials actually exist or have been revoked. Relying parties download
//! the latest blobs and answer revocation checks locally.
//!
//! Modules:
//!
//! - [`bloom`]: single-hash Bloom filter with salted, level-indexed hashing
//! - [`cascade`]: build and query the padded filter cascade
//! - [`codec`]: wire format and fixed-size blob packing
//! - [`registry`]: issuer-side record keeping and status entries
//! - [`blobstore`]: publication layer with a file-backed store
//! - [`checker`]: relying-party revocation checks
//! - [`privacy`]: regression attack and count-indistinguishability game

pub mod blobstore;
pub mod bloom;
pub mod cascade;
pub mod checker;
pub mod codec;
mod error;
mod lock;
pub mod privacy;
pub mod registry;

pub use blobstore::{BlobStore, FsBlobStore, PublishedCascade};
pub use bloom::{bit_index, filter_size_for, BloomFilter, HashInput};
pub use cascade::{
    build_cascade, build_cascade_with_targets, estimate_size_bits, level_count_bound,
    padding_targets, CascadeParams, FilterCascade, IdSets,
};
pub use checker::{
    check_many, check_status, parse_status_entry, status_entry_from_input, CredentialStatus,
};
pub use codec::{deserialize, pack_blobs, serialize, unpack_blobs, BlobBundle, SerializedCascade};
pub use error::{Error, Result};
pub use privacy::{
    default_series, extract_features, fit_ridge, generate_dataset, run_ccig, synthesize_history,
    write_csv, AttackReport, CascadeFeatures, CcigAdversary, CountSeries, DatasetRow,
    FeatureRegressionAdversary, RandomGuessAdversary, RidgeModel,
};
pub use registry::{IssuerAccount, RecordStatus, Registry, RegistryRecord, StatusEntry};

use rand::Rng;

/// Opaque 256-bit value identifying one credential inside the revocation
/// mechanism. Unrelated to any identifier in the credential itself.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RevocationId(pub [u8; 32]);

/// 256-bit salt mixed into every hash of one cascade.
pub type Salt = [u8; 32];

impl RevocationId {
    /// Draws a uniform ID from the full 256-bit universe.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        RevocationId(bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Parses exactly 64 hex characters (case-insensitive).
    pub fn from_hex(s: &str) -> Result<Self> {
        if s.len() != 64 {
            return Err(Error::InvalidParameter(format!(
                "revocation id must be 64 hex characters, got {}",
                s.len()
            )));
        }
        let bytes = hex::decode(s)
            .map_err(|_| Error::InvalidParameter("revocation id is not valid hex".into()))?;
        let mut id = [0u8; 32];
        id.copy_from_slice(&bytes);
        Ok(RevocationId(id))
    }
}

impl std::fmt::Debug for RevocationId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RevocationId({})", self.to_hex())
    }
}

impl std::fmt::Display for RevocationId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}
