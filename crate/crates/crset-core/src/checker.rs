//! Relying-party revocation checks.
//!
//! A checker parses the status entry carried by a credential, fetches the
//! issuer's latest publication, decodes the cascade, and answers valid or
//! revoked. Every failure along that path surfaces as an error — a check
//! that cannot complete is "unavailable", never "valid".
//!
//! Callers are expected to have verified the credential's signature first,
//! so the ID under test belongs to the issuer's universe; answers for
//! foreign IDs are unspecified by construction.

use std::collections::HashMap;
use std::sync::Arc;

use crate::blobstore::BlobStore;
use crate::cascade::FilterCascade;
use crate::codec::{deserialize, unpack_blobs};
use crate::error::{Error, Result};
use crate::registry::{CredentialStatusEnvelope, IssuerAccount, StatusEntry, STATUS_ENTRY_TYPE};
use crate::RevocationId;

/// Outcome of a completed revocation check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CredentialStatus {
    Valid,
    Revoked,
}

impl std::fmt::Display for CredentialStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CredentialStatus::Valid => "valid",
            CredentialStatus::Revoked => "revoked",
        })
    }
}

/// Splits `namespace:chainid:address:id-hex` into the issuer account and
/// the 32-byte revocation ID.
pub fn parse_status_entry(id_uri: &str) -> Result<(IssuerAccount, RevocationId)> {
    let parts: Vec<&str> = id_uri.split(':').collect();
    if parts.len() != 4 {
        return Err(Error::MalformedEntry(format!(
            "expected namespace:chainid:address:id, got {} segments",
            parts.len()
        )));
    }
    let account = IssuerAccount::new(parts[0], parts[1], parts[2])
        .map_err(|e| Error::MalformedEntry(e.to_string()))?;
    let id = RevocationId::from_hex(parts[3]).map_err(|e| Error::MalformedEntry(e.to_string()))?;
    Ok((account, id))
}

/// Builds a [`StatusEntry`] from operator input: either a bare id string
/// (`namespace:chainid:address:id-hex`), the `credentialStatus` JSON
/// object, or a JSON document wrapping one.
pub fn status_entry_from_input(input: &str) -> Result<StatusEntry> {
    let trimmed = input.trim();
    if !trimmed.starts_with('{') {
        return Ok(StatusEntry {
            id_uri: trimmed.to_string(),
            type_tag: STATUS_ENTRY_TYPE.to_string(),
        });
    }
    if let Ok(envelope) = serde_json::from_str::<CredentialStatusEnvelope>(trimmed) {
        return Ok(envelope.credential_status);
    }
    serde_json::from_str::<StatusEntry>(trimmed)
        .map_err(|e| Error::MalformedEntry(format!("unrecognized status JSON: {e}")))
}

/// Fetches the issuer's latest cascade and tests the entry's ID.
pub fn check_status<S: BlobStore + ?Sized>(
    store: &S,
    entry: &StatusEntry,
) -> Result<CredentialStatus> {
    let (account, id) = parse_entry_checked(entry)?;
    let cascade = fetch_cascade(store, &account)?;
    Ok(status_of(&cascade, &id))
}

/// Element-wise [`check_status`] that fetches and decodes each issuer's
/// publication at most once, however many entries reference it.
pub fn check_many<S: BlobStore + ?Sized>(
    store: &S,
    entries: &[StatusEntry],
) -> Vec<Result<CredentialStatus>> {
    let mut cache: HashMap<String, std::result::Result<Arc<FilterCascade>, String>> =
        HashMap::new();
    entries
        .iter()
        .map(|entry| {
            let (account, id) = parse_entry_checked(entry)?;
            let key = account.caip10();
            let slot = cache.entry(key.clone()).or_insert_with(|| {
                fetch_cascade(store, &account)
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            });
            match slot {
                Ok(cascade) => Ok(status_of(cascade, &id)),
                Err(reason) => Err(Error::CheckUnavailable {
                    account: key,
                    reason: reason.clone(),
                }),
            }
        })
        .collect()
}

fn parse_entry_checked(entry: &StatusEntry) -> Result<(IssuerAccount, RevocationId)> {
    if entry.type_tag != STATUS_ENTRY_TYPE {
        return Err(Error::MalformedEntry(format!(
            "unexpected status type {:?}",
            entry.type_tag
        )));
    }
    parse_status_entry(&entry.id_uri)
}

fn fetch_cascade<S: BlobStore + ?Sized>(
    store: &S,
    account: &IssuerAccount,
) -> Result<FilterCascade> {
    let bundle = store.fetch_latest(account)?;
    deserialize(&unpack_blobs(&bundle)?)
}

fn status_of(cascade: &FilterCascade, id: &RevocationId) -> CredentialStatus {
    if cascade.test_id(id) {
        CredentialStatus::Valid
    } else {
        CredentialStatus::Revoked
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blobstore::FsBlobStore;
    use crate::cascade::{build_cascade, CascadeParams, IdSets};
    use crate::codec::{pack_blobs, serialize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::cell::Cell;

    const ADDRESS: &str = "0x32f39a4366a42c9e5a4aa3ff27d1994d9115ae53";

    fn account() -> IssuerAccount {
        IssuerAccount::new("eip155", "1", ADDRESS).unwrap()
    }

    fn entry_for(account: &IssuerAccount, id: &RevocationId) -> StatusEntry {
        StatusEntry::new(account, id)
    }

    /// Counts fetches so batching contracts are observable.
    struct CountingStore<'a> {
        inner: &'a FsBlobStore,
        fetches: Cell<u64>,
    }

    impl BlobStore for CountingStore<'_> {
        fn publish(&self, account: &IssuerAccount, bundle: &crate::BlobBundle) -> Result<u64> {
            self.inner.publish(account, bundle)
        }
        fn fetch_latest(&self, account: &IssuerAccount) -> Result<crate::BlobBundle> {
            self.fetches.set(self.fetches.get() + 1);
            self.inner.fetch_latest(account)
        }
    }

    fn publish_sets(
        store: &FsBlobStore,
        account: &IssuerAccount,
        sets: &IdSets,
        seed: u64,
    ) -> crate::FilterCascade {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut params = CascadeParams::new(64);
        params.min_filter_entries = 16;
        let cascade = build_cascade(sets, &params, &mut rng).unwrap();
        let bundle = pack_blobs(&serialize(&cascade).unwrap(), 4096);
        store.publish(account, &bundle).unwrap();
        cascade
    }

    #[test]
    fn parses_full_length_entry() {
        let id_hex = "dd1539a19280e18607b0c22826aedee227b2d1f24a09a35ddde7a1d0e72fb3d3";
        let uri = format!("eip155:1:{ADDRESS}:{id_hex}");
        let (account, id) = parse_status_entry(&uri).unwrap();
        assert_eq!(account.caip10(), format!("eip155:1:{ADDRESS}"));
        assert_eq!(id.to_hex(), id_hex);
    }

    #[test]
    fn rejects_missing_segment() {
        assert!(matches!(
            parse_status_entry(&format!("eip155:1:{ADDRESS}")),
            Err(Error::MalformedEntry(_))
        ));
    }

    #[test]
    fn rejects_short_or_bad_ids() {
        let short = "ab".repeat(31);
        assert!(matches!(
            parse_status_entry(&format!("eip155:1:{ADDRESS}:{short}")),
            Err(Error::MalformedEntry(_))
        ));
        let nonhex = "zz".repeat(32);
        assert!(matches!(
            parse_status_entry(&format!("eip155:1:{ADDRESS}:{nonhex}")),
            Err(Error::MalformedEntry(_))
        ));
    }

    #[test]
    fn rejects_bad_account_segments() {
        let id_hex = "11".repeat(32);
        assert!(parse_status_entry(&format!("EIP:1:{ADDRESS}:{id_hex}")).is_err());
        assert!(parse_status_entry(&format!("eip155:1:0x123:{id_hex}")).is_err());
    }

    #[test]
    fn accepts_json_or_bare_input() {
        let id = RevocationId([0xdd; 32]);
        let entry = entry_for(&account(), &id);
        let from_envelope = status_entry_from_input(&entry.to_credential_status_json()).unwrap();
        assert_eq!(from_envelope, entry);
        let from_inner =
            status_entry_from_input(&serde_json::to_string(&entry).unwrap()).unwrap();
        assert_eq!(from_inner, entry);
        let from_bare = status_entry_from_input(&entry.id_uri).unwrap();
        assert_eq!(from_bare, entry);
        assert!(status_entry_from_input("{\"nope\": 1}").is_err());
    }

    #[test]
    fn end_to_end_valid_and_revoked() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::new(dir.path());
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let sets = IdSets::random(10, 5, &mut rng);
        publish_sets(&store, &account(), &sets, 2);

        for id in &sets.valid {
            let status = check_status(&store, &entry_for(&account(), id)).unwrap();
            assert_eq!(status, CredentialStatus::Valid);
        }
        for id in &sets.revoked {
            let status = check_status(&store, &entry_for(&account(), id)).unwrap();
            assert_eq!(status, CredentialStatus::Revoked);
        }
    }

    #[test]
    fn unpublished_issuer_is_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::new(dir.path());
        let err = check_status(&store, &entry_for(&account(), &RevocationId([1; 32])))
            .unwrap_err();
        assert!(matches!(err, Error::NoPublication(_)));
    }

    #[test]
    fn wrong_type_tag_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::new(dir.path());
        let mut entry = entry_for(&account(), &RevocationId([1; 32]));
        entry.type_tag = "SomethingElse".into();
        assert!(matches!(
            check_status(&store, &entry),
            Err(Error::MalformedEntry(_))
        ));
    }

    #[test]
    fn batched_checks_fetch_once_per_issuer() {
        let dir = tempfile::tempdir().unwrap();
        let fs_store = FsBlobStore::new(dir.path());
        let mut rng = ChaCha20Rng::seed_from_u64(3);

        let account_b =
            IssuerAccount::new("eip155", "10", "0x00f39a4366a42c9e5a4aa3ff27d1994d9115ae00")
                .unwrap();
        let sets_a = IdSets::random(30, 30, &mut rng);
        let sets_b = IdSets::random(20, 20, &mut rng);
        publish_sets(&fs_store, &account(), &sets_a, 4);
        publish_sets(&fs_store, &account_b, &sets_b, 5);

        let store = CountingStore {
            inner: &fs_store,
            fetches: Cell::new(0),
        };

        // 100 entries, one issuer -> one fetch.
        let ids_a: Vec<RevocationId> = sets_a.valid.iter().copied().collect();
        let entries: Vec<StatusEntry> = (0..100)
            .map(|i| entry_for(&account(), &ids_a[i % ids_a.len()]))
            .collect();
        let statuses = check_many(&store, &entries);
        assert_eq!(store.fetches.get(), 1);
        assert!(statuses
            .iter()
            .all(|s| matches!(s, Ok(CredentialStatus::Valid))));

        // Mixed issuers -> one fetch per issuer.
        store.fetches.set(0);
        let mixed: Vec<StatusEntry> = sets_a
            .revoked
            .iter()
            .map(|id| entry_for(&account(), id))
            .chain(sets_b.revoked.iter().map(|id| entry_for(&account_b, id)))
            .collect();
        let statuses = check_many(&store, &mixed);
        assert_eq!(store.fetches.get(), 2);
        assert!(statuses
            .iter()
            .all(|s| matches!(s, Ok(CredentialStatus::Revoked))));
    }

    #[test]
    fn batched_answers_match_individual_checks() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::new(dir.path());
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let sets = IdSets::random(40, 40, &mut rng);
        publish_sets(&store, &account(), &sets, 7);

        let all: Vec<RevocationId> = sets
            .valid
            .iter()
            .chain(sets.revoked.iter())
            .copied()
            .collect();
        let entries: Vec<StatusEntry> = (0..1000)
            .map(|_| entry_for(&account(), &all[rng.gen_range(0..all.len())]))
            .collect();
        let batched = check_many(&store, &entries);
        for (entry, got) in entries.iter().zip(&batched) {
            let single = check_status(&store, entry);
            match (got, single) {
                (Ok(a), Ok(b)) => assert_eq!(*a, b),
                (Err(_), Err(_)) => {}
                (a, b) => panic!("batched {a:?} vs single {b:?}"),
            }
        }
    }

    #[test]
    fn batched_unavailable_issuer_fetches_once() {
        let dir = tempfile::tempdir().unwrap();
        let fs_store = FsBlobStore::new(dir.path());
        let store = CountingStore {
            inner: &fs_store,
            fetches: Cell::new(0),
        };
        let entries: Vec<StatusEntry> = (0..10)
            .map(|i| entry_for(&account(), &RevocationId([i as u8; 32])))
            .collect();
        let statuses = check_many(&store, &entries);
        assert_eq!(store.fetches.get(), 1);
        for status in statuses {
            assert!(matches!(status, Err(Error::CheckUnavailable { .. })));
        }
    }

    #[test]
    fn corrupted_publication_is_never_valid() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsBlobStore::new(dir.path());
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let sets = IdSets::random(10, 10, &mut rng);
        let mut params = CascadeParams::new(64);
        params.min_filter_entries = 16;
        let cascade = build_cascade(&sets, &params, &mut rng).unwrap();
        let mut data = serialize(&cascade).unwrap();
        data.bytes[0] ^= 0xff; // magic flip
        store
            .publish(&account(), &pack_blobs(&data, 4096))
            .unwrap();
        let id = sets.valid.iter().next().unwrap();
        let err = check_status(&store, &entry_for(&account(), id)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
    }
}
