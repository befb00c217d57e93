//! Publication layer with latest-wins semantics per account.
//!
//! [`BlobStore`] is the interface a real blob-carrying-transaction client
//! would implement; [`FsBlobStore`] is the file-backed stand-in used here.
//! Layout: one directory per account holding `<sequence>.<index>.blob`
//! files (each exactly one blob) and a `LATEST` pointer file updated by
//! atomic rename, so readers see either the old or the new publication,
//! never a torn one. Publications older than the retention window are
//! pruned, mirroring carriers that keep blobs only for a limited time.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use crate::codec::BlobBundle;
use crate::error::{Error, Result};
use crate::lock::DirLock;
use crate::registry::IssuerAccount;

/// Publications kept per account before pruning.
pub const DEFAULT_RETENTION: u64 = 8;

/// One sequence-numbered publication under an account.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublishedCascade {
    pub account: IssuerAccount,
    pub sequence: u64,
    pub bundle: BlobBundle,
    pub published_at: u64,
}

/// Write/read interface of the publication layer. A chain-backed client
/// implements the same two operations.
pub trait BlobStore {
    /// Durably stores the bundle as the account's newest publication and
    /// returns its sequence number (starting at 1).
    fn publish(&self, account: &IssuerAccount, bundle: &BlobBundle) -> Result<u64>;

    /// Returns the highest-sequence bundle, bit-identical to what was
    /// published.
    fn fetch_latest(&self, account: &IssuerAccount) -> Result<BlobBundle>;
}

/// File-backed blob store rooted at a directory.
pub struct FsBlobStore {
    root: PathBuf,
    retention: u64,
}

impl FsBlobStore {
    pub fn new(root: &Path) -> Self {
        FsBlobStore {
            root: root.to_path_buf(),
            retention: DEFAULT_RETENTION,
        }
    }

    pub fn with_retention(root: &Path, retention: u64) -> Self {
        FsBlobStore {
            root: root.to_path_buf(),
            retention: retention.max(1),
        }
    }

    fn account_dir(&self, account: &IssuerAccount) -> PathBuf {
        self.root.join(account.caip10())
    }

    /// Latest sequence number for an account.
    pub fn latest_sequence(&self, account: &IssuerAccount) -> Result<u64> {
        let pointer = self.account_dir(account).join("LATEST");
        let text = fs::read_to_string(&pointer)
            .map_err(|_| Error::NoPublication(account.caip10()))?;
        text.trim()
            .parse()
            .map_err(|_| Error::CorruptPayload(format!("bad LATEST pointer {text:?}")))
    }

    /// Fetches one specific publication; pruned or never-written sequences
    /// report `NoPublication`.
    pub fn fetch_sequence(&self, account: &IssuerAccount, sequence: u64) -> Result<BlobBundle> {
        let dir = self.account_dir(account);
        let mut blobs = Vec::new();
        loop {
            let path = dir.join(format!("{sequence}.{}.blob", blobs.len()));
            if !path.exists() {
                break;
            }
            blobs.push(fs::read(path)?);
        }
        if blobs.is_empty() {
            return Err(Error::NoPublication(format!(
                "{} sequence {sequence}",
                account.caip10()
            )));
        }
        let blob_size = blobs[0].len();
        if blobs.iter().any(|b| b.len() != blob_size) {
            return Err(Error::CorruptPayload(
                "stored blobs of one publication differ in size".into(),
            ));
        }
        Ok(BlobBundle { blobs, blob_size })
    }

    /// Latest publication together with its metadata.
    pub fn head(&self, account: &IssuerAccount) -> Result<PublishedCascade> {
        let sequence = self.latest_sequence(account)?;
        let bundle = self.fetch_sequence(account, sequence)?;
        let published_at = fs::metadata(self.account_dir(account).join("LATEST"))?
            .modified()?
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(PublishedCascade {
            account: account.clone(),
            sequence,
            bundle,
            published_at,
        })
    }
}

impl BlobStore for FsBlobStore {
    fn publish(&self, account: &IssuerAccount, bundle: &BlobBundle) -> Result<u64> {
        if bundle.blobs.is_empty() {
            return Err(Error::InvalidParameter("empty bundle".into()));
        }
        if bundle.blobs.iter().any(|b| b.len() != bundle.blob_size) {
            return Err(Error::InvalidParameter(
                "bundle blobs must all have the declared blob size".into(),
            ));
        }
        let dir = self.account_dir(account);
        fs::create_dir_all(&dir)?;
        let _lock = DirLock::acquire(&dir.join(".lock"))?;

        let sequence = match self.latest_sequence(account) {
            Ok(seq) => seq + 1,
            Err(Error::NoPublication(_)) => 1,
            Err(e) => return Err(e),
        };
        for (index, blob) in bundle.blobs.iter().enumerate() {
            let tmp = dir.join(format!("{sequence}.{index}.blob.tmp"));
            fs::write(&tmp, blob)?;
            fs::rename(&tmp, dir.join(format!("{sequence}.{index}.blob")))?;
        }
        let tmp = dir.join("LATEST.tmp");
        fs::write(&tmp, format!("{sequence}\n"))?;
        fs::rename(&tmp, dir.join("LATEST"))?;

        // Prune beyond the retention window; the latest stays available.
        let keep_from = sequence.saturating_sub(self.retention - 1);
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            let Some((seq_part, _)) = name.split_once('.') else {
                continue;
            };
            if let Ok(seq) = seq_part.parse::<u64>() {
                if seq < keep_from && name.ends_with(".blob") {
                    fs::remove_file(entry.path())?;
                }
            }
        }
        Ok(sequence)
    }

    fn fetch_latest(&self, account: &IssuerAccount) -> Result<BlobBundle> {
        self.fetch_sequence(account, self.latest_sequence(account)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{pack_blobs, SerializedCascade};
    use sha2::{Digest, Sha256};

    fn account() -> IssuerAccount {
        IssuerAccount::new("eip155", "1", "0x32f39a4366a42c9e5a4aa3ff27d1994d9115ae53").unwrap()
    }

    fn bundle(tag: u8, len: usize) -> BlobBundle {
        pack_blobs(
            &SerializedCascade {
                bytes: vec![tag; len],
            },
            128,
        )
    }

    #[test]
    fn first_publish_is_sequence_one() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::new(dir.path());
        assert_eq!(store.publish(&account(), &bundle(1, 50)).unwrap(), 1);
    }

    #[test]
    fn fetch_latest_returns_newest_publication() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::new(dir.path());
        let first = bundle(1, 50);
        let second = bundle(2, 300);
        store.publish(&account(), &first).unwrap();
        assert_eq!(store.publish(&account(), &second).unwrap(), 2);
        assert_eq!(store.fetch_latest(&account()).unwrap(), second);
    }

    #[test]
    fn unknown_account_has_no_publication() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::new(dir.path());
        assert!(matches!(
            store.fetch_latest(&account()),
            Err(Error::NoPublication(_))
        ));
    }

    #[test]
    fn retention_prunes_oldest_sequences() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::with_retention(dir.path(), 3);
        for i in 0..4 {
            store.publish(&account(), &bundle(i, 40)).unwrap();
        }
        assert!(matches!(
            store.fetch_sequence(&account(), 1),
            Err(Error::NoPublication(_))
        ));
        assert_eq!(store.fetch_sequence(&account(), 2).unwrap(), bundle(1, 40));
        assert_eq!(store.fetch_latest(&account()).unwrap(), bundle(3, 40));
    }

    #[test]
    fn stored_blobs_are_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::new(dir.path());
        let published = bundle(9, 1000);
        store.publish(&account(), &published).unwrap();
        let fetched = store.fetch_latest(&account()).unwrap();
        let digest_of = |b: &BlobBundle| {
            let mut hasher = Sha256::new();
            for blob in &b.blobs {
                hasher.update(blob);
            }
            hasher.finalize()
        };
        assert_eq!(digest_of(&published), digest_of(&fetched));
    }

    #[test]
    fn multi_blob_bundles_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::new(dir.path());
        let big = bundle(3, 700); // 128-byte blobs => several per bundle
        assert!(big.blobs.len() > 1);
        store.publish(&account(), &big).unwrap();
        assert_eq!(store.fetch_latest(&account()).unwrap(), big);
    }

    #[test]
    fn head_reports_sequence_and_account() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::new(dir.path());
        store.publish(&account(), &bundle(1, 10)).unwrap();
        store.publish(&account(), &bundle(2, 10)).unwrap();
        let head = store.head(&account()).unwrap();
        assert_eq!(head.sequence, 2);
        assert_eq!(head.account, account());
        assert_eq!(head.bundle, bundle(2, 10));
        assert!(head.published_at > 0);
    }

    #[test]
    fn rejects_malformed_bundles() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::new(dir.path());
        let empty = BlobBundle {
            blobs: vec![],
            blob_size: 64,
        };
        assert!(store.publish(&account(), &empty).is_err());
        let ragged = BlobBundle {
            blobs: vec![vec![0; 64], vec![0; 63]],
            blob_size: 64,
        };
        assert!(store.publish(&account(), &ragged).is_err());
    }
}
