//! Issuer-side registry: mints revocation IDs, tracks statuses, renders
//! status entries, and rebuilds the cascade from a consistent snapshot.
//!
//! State lives in a directory:
//!
//! ```text
//! meta.json      account and capacity, written once at init
//! log            append-only lines: ISSUE <hex-id> <ts> | REVOKE <hex-id> <ts>
//! snapshot       compacted record table: RECORD <hex-id> <status> <created> <revoked|->
//! staged.crset   latest built cascade, ready for publishing
//! .lock          advisory lock guarding single-writer access
//! ```
//!
//! Loading replays the snapshot and then the log; replay is idempotent, so
//! a crash between compaction steps cannot lose or duplicate records. A
//! torn final log line (partial write) is ignored.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{build_cascade, CascadeParams, FilterCascade, IdSets};
use crate::codec::{serialize, SerializedCascade};
use crate::error::{Error, Result};
use crate::lock::DirLock;
use crate::RevocationId;

/// The `type` value carried by every status entry of this mechanism.
pub const STATUS_ENTRY_TYPE: &str = "CRSetEntry";

const META_FILE: &str = "meta.json";
const LOG_FILE: &str = "log";
const SNAPSHOT_FILE: &str = "snapshot";
const STAGED_FILE: &str = "staged.crset";
const LOCK_FILE: &str = ".lock";

/// A blockchain account in CAIP-10 form: `namespace:chainid:address`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IssuerAccount {
    chain_namespace: String,
    chain_id: String,
    address: String,
}

impl IssuerAccount {
    pub fn new(chain_namespace: &str, chain_id: &str, address: &str) -> Result<Self> {
        let ns_ok = (3..=8).contains(&chain_namespace.len())
            && chain_namespace
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-');
        if !ns_ok {
            return Err(Error::InvalidParameter(format!(
                "chain namespace {chain_namespace:?} is not 3-8 chars of [a-z0-9-]"
            )));
        }
        let chain_ok = (1..=32).contains(&chain_id.len())
            && chain_id
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
        if !chain_ok {
            return Err(Error::InvalidParameter(format!(
                "chain id {chain_id:?} is not 1-32 chars of [a-zA-Z0-9_-]"
            )));
        }
        let addr_ok = address.len() == 42
            && address.starts_with("0x")
            && address[2..].bytes().all(|b| b.is_ascii_hexdigit());
        if !addr_ok {
            return Err(Error::InvalidParameter(format!(
                "address {address:?} is not a 0x-prefixed 20-byte hex account"
            )));
        }
        Ok(IssuerAccount {
            chain_namespace: chain_namespace.to_string(),
            chain_id: chain_id.to_string(),
            address: address.to_string(),
        })
    }

    /// Parses `namespace:chainid:address`.
    pub fn parse_caip10(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidParameter(format!(
                "account {s:?} is not of the form namespace:chainid:address"
            )));
        }
        IssuerAccount::new(parts[0], parts[1], parts[2])
    }

    /// Renders the CAIP-10 account identifier.
    pub fn caip10(&self) -> String {
        format!("{}:{}:{}", self.chain_namespace, self.chain_id, self.address)
    }

    pub fn chain_namespace(&self) -> &str {
        &self.chain_namespace
    }

    pub fn chain_id(&self) -> &str {
        &self.chain_id
    }

    pub fn address(&self) -> &str {
        &self.address
    }
}

impl TryFrom<String> for IssuerAccount {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        IssuerAccount::parse_caip10(&s)
    }
}

impl From<IssuerAccount> for String {
    fn from(a: IssuerAccount) -> String {
        a.caip10()
    }
}

impl std::fmt::Display for IssuerAccount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.caip10())
    }
}

/// The pointer placed in a credential's `credentialStatus` field: the
/// issuer's CAIP-10 account followed by the credential's revocation ID in
/// lowercase hex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusEntry {
    #[serde(rename = "id")]
    pub id_uri: String,
    #[serde(rename = "type")]
    pub type_tag: String,
}

impl StatusEntry {
    pub fn new(account: &IssuerAccount, id: &RevocationId) -> Self {
        StatusEntry {
            id_uri: format!("{}:{}", account.caip10(), id.to_hex()),
            type_tag: STATUS_ENTRY_TYPE.to_string(),
        }
    }

    /// The full `credentialStatus` JSON object.
    pub fn to_credential_status_json(&self) -> String {
        serde_json::to_string(&CredentialStatusEnvelope {
            credential_status: self.clone(),
        })
        .expect("status entry serializes")
    }
}

/// Wrapper matching the credential JSON shape.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CredentialStatusEnvelope {
    #[serde(rename = "credentialStatus")]
    pub credential_status: StatusEntry,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordStatus {
    Valid,
    Revoked,
}

/// One credential's revocation state. Status only ever moves from valid to
/// revoked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegistryRecord {
    pub id: RevocationId,
    pub status: RecordStatus,
    pub created_at: u64,
    pub revoked_at: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    account: IssuerAccount,
    capacity: u64,
}

/// Durable issuer-side registry bound to one directory.
pub struct Registry {
    dir: PathBuf,
    account: IssuerAccount,
    capacity: u64,
    records: BTreeMap<RevocationId, RegistryRecord>,
    log: File,
    _lock: DirLock,
}

impl Registry {
    /// Initializes a fresh registry directory.
    pub fn create(dir: &Path, account: IssuerAccount, capacity: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("capacity must be at least 1".into()));
        }
        fs::create_dir_all(dir)?;
        let lock = DirLock::acquire(&dir.join(LOCK_FILE))?;
        let meta_path = dir.join(META_FILE);
        if meta_path.exists() {
            return Err(Error::InvalidParameter(format!(
                "{} already contains a registry",
                dir.display()
            )));
        }
        let meta = Meta {
            account: account.clone(),
            capacity,
        };
        write_atomically(&meta_path, serde_json::to_string_pretty(&meta)?.as_bytes())?;
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(LOG_FILE))?;
        Ok(Registry {
            dir: dir.to_path_buf(),
            account,
            capacity,
            records: BTreeMap::new(),
            log,
            _lock: lock,
        })
    }

    /// Opens an existing registry, replaying snapshot and log.
    pub fn open(dir: &Path) -> Result<Self> {
        let lock = DirLock::acquire(&dir.join(LOCK_FILE))?;
        let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?)
            .map_err(|e| Error::CorruptRegistry(format!("bad meta.json: {e}")))?;
        let mut records = BTreeMap::new();
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        if snapshot_path.exists() {
            replay_snapshot(&fs::read_to_string(&snapshot_path)?, &mut records)?;
        }
        let log_path = dir.join(LOG_FILE);
        if log_path.exists() {
            replay_log(&fs::read_to_string(&log_path)?, &mut records)?;
        }
        let log = OpenOptions::new().create(true).append(true).open(log_path)?;
        Ok(Registry {
            dir: dir.to_path_buf(),
            account: meta.account,
            capacity: meta.capacity,
            records,
            log,
            _lock: lock,
        })
    }

    pub fn account(&self) -> &IssuerAccount {
        &self.account
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Total records ever issued (valid + revoked).
    pub fn issued_count(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn revoked_count(&self) -> u64 {
        self.records
            .values()
            .filter(|r| r.status == RecordStatus::Revoked)
            .count() as u64
    }

    pub fn record(&self, id: &RevocationId) -> Option<&RegistryRecord> {
        self.records.get(id)
    }

    pub fn records(&self) -> impl Iterator<Item = &RegistryRecord> {
        self.records.values()
    }

    /// Mints a fresh unique revocation ID, stores it as valid, and returns
    /// the status entry to embed in the credential. Fails with
    /// `CapacityExceeded` once the instance has issued `capacity` IDs; the
    /// total-issued bound is what guarantees the revoked side can always
    /// absorb a full emergency revocation.
    pub fn create_entry<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<(RevocationId, StatusEntry)> {
        if self.records.len() as u64 >= self.capacity {
            return Err(Error::CapacityExceeded(format!(
                "registry holds {} of {} ids; start a fresh instance",
                self.records.len(),
                self.capacity
            )));
        }
        let id = loop {
            let candidate = RevocationId::random(rng);
            if !self.records.contains_key(&candidate) {
                break candidate;
            }
        };
        let ts = unix_now();
        self.append_line(&format!("ISSUE {} {ts}\n", id.to_hex()))?;
        self.records.insert(
            id,
            RegistryRecord {
                id,
                status: RecordStatus::Valid,
                created_at: ts,
                revoked_at: None,
            },
        );
        Ok((id, StatusEntry::new(&self.account, &id)))
    }

    /// Marks an ID revoked. Idempotent: revoking an already revoked ID
    /// succeeds and keeps the original revocation time.
    pub fn revoke(&mut self, id: &RevocationId) -> Result<()> {
        match self.records.get(id) {
            None => return Err(Error::UnknownId(id.to_hex())),
            Some(record) if record.status == RecordStatus::Revoked => return Ok(()),
            Some(_) => {}
        }
        let ts = unix_now();
        self.append_line(&format!("REVOKE {} {ts}\n", id.to_hex()))?;
        let record = self.records.get_mut(id).expect("presence checked above");
        record.status = RecordStatus::Revoked;
        record.revoked_at = Some(ts);
        Ok(())
    }

    /// Emergency path: revokes every currently valid ID. Returns how many
    /// were newly revoked. Always fits: at most `capacity` IDs exist and
    /// the revoked side is padded to twice that.
    pub fn revoke_all(&mut self) -> Result<u64> {
        let valid_ids: Vec<RevocationId> = self
            .records
            .values()
            .filter(|r| r.status == RecordStatus::Valid)
            .map(|r| r.id)
            .collect();
        for id in &valid_ids {
            self.revoke(id)?;
        }
        Ok(valid_ids.len() as u64)
    }

    /// Disjoint valid/revoked sets reflecting the current records.
    pub fn snapshot_sets(&self) -> IdSets {
        let mut sets = IdSets::default();
        for record in self.records.values() {
            match record.status {
                RecordStatus::Valid => sets.valid.insert(record.id),
                RecordStatus::Revoked => sets.revoked.insert(record.id),
            };
        }
        sets
    }

    /// Rebuilds the cascade from scratch over the current snapshot and
    /// stages the serialized bytes for publishing. Updates are always full
    /// recreations, never deltas, so consecutive publications differ even
    /// when nothing was revoked. `params.n_max` must equal the registry
    /// capacity.
    pub fn build_and_stage<R: Rng + ?Sized>(
        &mut self,
        params: &CascadeParams,
        rng: &mut R,
    ) -> Result<FilterCascade> {
        if params.n_max != self.capacity {
            return Err(Error::InvalidParameter(format!(
                "params capacity {} does not match registry capacity {}",
                params.n_max, self.capacity
            )));
        }
        let cascade = build_cascade(&self.snapshot_sets(), params, rng)?;
        let data = serialize(&cascade)?;
        write_atomically(&self.dir.join(STAGED_FILE), &data.bytes)?;
        Ok(cascade)
    }

    /// The serialized cascade staged by the last `build_and_stage`, if any.
    pub fn staged(&self) -> Result<Option<SerializedCascade>> {
        let path = self.dir.join(STAGED_FILE);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(SerializedCascade {
            bytes: fs::read(path)?,
        }))
    }

    /// Folds the log into the snapshot file and truncates the log.
    pub fn compact(&mut self) -> Result<()> {
        let mut snapshot = String::new();
        for record in self.records.values() {
            let (status, revoked_at) = match record.status {
                RecordStatus::Valid => ("valid", "-".to_string()),
                RecordStatus::Revoked => (
                    "revoked",
                    record.revoked_at.unwrap_or(record.created_at).to_string(),
                ),
            };
            snapshot.push_str(&format!(
                "RECORD {} {status} {} {revoked_at}\n",
                record.id.to_hex(),
                record.created_at
            ));
        }
        write_atomically(&self.dir.join(SNAPSHOT_FILE), snapshot.as_bytes())?;
        self.log = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(self.dir.join(LOG_FILE))?;
        Ok(())
    }

    fn append_line(&mut self, line: &str) -> Result<()> {
        self.log.write_all(line.as_bytes())?;
        self.log.flush()?;
        Ok(())
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn replay_snapshot(
    text: &str,
    records: &mut BTreeMap<RevocationId, RegistryRecord>,
) -> Result<()> {
    for (number, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed = (|| -> Option<RegistryRecord> {
            if fields.len() != 5 || fields[0] != "RECORD" {
                return None;
            }
            let id = RevocationId::from_hex(fields[1]).ok()?;
            let created_at: u64 = fields[3].parse().ok()?;
            let (status, revoked_at) = match fields[2] {
                "valid" if fields[4] == "-" => (RecordStatus::Valid, None),
                "revoked" => (RecordStatus::Revoked, Some(fields[4].parse().ok()?)),
                _ => return None,
            };
            Some(RegistryRecord {
                id,
                status,
                created_at,
                revoked_at,
            })
        })();
        match parsed {
            Some(record) => {
                records.insert(record.id, record);
            }
            None => {
                return Err(Error::CorruptRegistry(format!(
                    "snapshot line {}: {line:?}",
                    number + 1
                )))
            }
        }
    }
    Ok(())
}

fn replay_log(text: &str, records: &mut BTreeMap<RevocationId, RegistryRecord>) -> Result<()> {
    let complete_up_to = if text.ends_with('\n') { text.len() } else { 0 };
    let lines: Vec<&str> = text.lines().collect();
    let line_count = lines.len();
    for (number, line) in lines.into_iter().enumerate() {
        let is_final = number + 1 == line_count;
        match parse_log_line(line) {
            Some((op, id, ts)) => apply_log_op(records, op, id, ts),
            // A torn final line is an interrupted append: ignore it. Torn
            // writes cannot occur mid-file.
            None if is_final && complete_up_to == 0 => return Ok(()),
            None => {
                return Err(Error::CorruptRegistry(format!(
                    "log line {}: {line:?}",
                    number + 1
                )))
            }
        }
    }
    Ok(())
}

enum LogOp {
    Issue,
    Revoke,
}

fn parse_log_line(line: &str) -> Option<(LogOp, RevocationId, u64)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 3 {
        return None;
    }
    let op = match fields[0] {
        "ISSUE" => LogOp::Issue,
        "REVOKE" => LogOp::Revoke,
        _ => return None,
    };
    let id = RevocationId::from_hex(fields[1]).ok()?;
    let ts: u64 = fields[2].parse().ok()?;
    Some((op, id, ts))
}

/// Replay is idempotent: re-issuing an existing id or re-revoking a revoked
/// one leaves the first record in place.
fn apply_log_op(
    records: &mut BTreeMap<RevocationId, RegistryRecord>,
    op: LogOp,
    id: RevocationId,
    ts: u64,
) {
    match op {
        LogOp::Issue => {
            records.entry(id).or_insert(RegistryRecord {
                id,
                status: RecordStatus::Valid,
                created_at: ts,
                revoked_at: None,
            });
        }
        LogOp::Revoke => {
            if let Some(record) = records.get_mut(&id) {
                if record.status == RecordStatus::Valid {
                    record.status = RecordStatus::Revoked;
                    record.revoked_at = Some(ts.max(record.created_at));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn account() -> IssuerAccount {
        IssuerAccount::new("eip155", "1", "0x32f39a4366a42c9e5a4aa3ff27d1994d9115ae53").unwrap()
    }

    fn fresh(capacity: u64) -> (tempfile::TempDir, Registry) {
        let dir = tempfile::tempdir().unwrap();
        let registry = Registry::create(dir.path(), account(), capacity).unwrap();
        (dir, registry)
    }

    #[test]
    fn caip10_validation() {
        assert!(IssuerAccount::new("eip155", "1", "0x32f39a4366a42c9e5a4aa3ff27d1994d9115ae53").is_ok());
        assert!(IssuerAccount::new("EIP", "1", "0x32f39a4366a42c9e5a4aa3ff27d1994d9115ae53").is_err());
        assert!(IssuerAccount::new("ei", "1", "0x32f39a4366a42c9e5a4aa3ff27d1994d9115ae53").is_err());
        assert!(IssuerAccount::new("eip155", "", "0x32f39a4366a42c9e5a4aa3ff27d1994d9115ae53").is_err());
        assert!(IssuerAccount::new("eip155", "1", "0x1234").is_err());
        assert!(IssuerAccount::new("eip155", "1", "32f39a4366a42c9e5a4aa3ff27d1994d9115ae5300").is_err());
        let parsed =
            IssuerAccount::parse_caip10("eip155:1:0x32f39a4366a42c9e5a4aa3ff27d1994d9115ae53")
                .unwrap();
        assert_eq!(
            parsed.caip10(),
            "eip155:1:0x32f39a4366a42c9e5a4aa3ff27d1994d9115ae53"
        );
        assert!(IssuerAccount::parse_caip10("eip155:1").is_err());
    }

    #[test]
    fn entry_has_account_prefix_and_type() {
        let (_tmp, mut registry) = fresh(16);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (id, entry) = registry.create_entry(&mut rng).unwrap();
        assert_eq!(entry.type_tag, "CRSetEntry");
        assert_eq!(
            entry.id_uri,
            format!("{}:{}", account().caip10(), id.to_hex())
        );
        let json = entry.to_credential_status_json();
        assert!(json.starts_with("{\"credentialStatus\":{"));
        assert!(json.contains("\"type\":\"CRSetEntry\""));
    }

    #[test]
    fn entries_are_distinct() {
        let (_tmp, mut registry) = fresh(16);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (a, _) = registry.create_entry(&mut rng).unwrap();
        let (b, _) = registry.create_entry(&mut rng).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn issuance_stops_at_capacity() {
        let (_tmp, mut registry) = fresh(3);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..3 {
            registry.create_entry(&mut rng).unwrap();
        }
        assert!(matches!(
            registry.create_entry(&mut rng),
            Err(Error::CapacityExceeded(_))
        ));
        // Revocation does not free capacity: total issued is what counts.
        let id = registry.records().next().unwrap().id;
        registry.revoke(&id).unwrap();
        assert!(matches!(
            registry.create_entry(&mut rng),
            Err(Error::CapacityExceeded(_))
        ));
    }

    #[test]
    fn revoke_is_idempotent_and_checks_existence() {
        let (_tmp, mut registry) = fresh(8);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (id, _) = registry.create_entry(&mut rng).unwrap();
        registry.revoke(&id).unwrap();
        let first = registry.record(&id).unwrap().clone();
        registry.revoke(&id).unwrap();
        assert_eq!(registry.record(&id).unwrap(), &first);
        assert!(matches!(
            registry.revoke(&RevocationId([9u8; 32])),
            Err(Error::UnknownId(_))
        ));
    }

    #[test]
    fn revoke_all_counts_newly_revoked() {
        let (_tmp, mut registry) = fresh(16);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let ids: Vec<RevocationId> = (0..8)
            .map(|_| registry.create_entry(&mut rng).unwrap().0)
            .collect();
        for id in &ids[..3] {
            registry.revoke(id).unwrap();
        }
        assert_eq!(registry.revoke_all().unwrap(), 5);
        assert_eq!(registry.revoked_count(), 8);
        assert_eq!(registry.revoke_all().unwrap(), 0);
    }

    #[test]
    fn revoke_all_on_empty_registry() {
        let (_tmp, mut registry) = fresh(4);
        assert_eq!(registry.revoke_all().unwrap(), 0);
    }

    #[test]
    fn snapshot_sets_reflect_operations() {
        let (_tmp, mut registry) = fresh(16);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        assert_eq!(registry.snapshot_sets(), IdSets::default());
        let ids: Vec<RevocationId> = (0..3)
            .map(|_| registry.create_entry(&mut rng).unwrap().0)
            .collect();
        registry.revoke(&ids[1]).unwrap();
        let sets = registry.snapshot_sets();
        assert_eq!(sets.valid.len(), 2);
        assert_eq!(sets.revoked.len(), 1);
        assert!(sets.revoked.contains(&ids[1]));
        sets.validate().unwrap();
    }

    #[test]
    fn full_revocation_still_builds_exactly() {
        let (_tmp, mut registry) = fresh(16);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let ids: Vec<RevocationId> = (0..8)
            .map(|_| registry.create_entry(&mut rng).unwrap().0)
            .collect();
        for id in &ids[..3] {
            registry.revoke(id).unwrap();
        }
        assert_eq!(registry.revoke_all().unwrap(), 5);
        let mut params = CascadeParams::new(16);
        params.min_filter_entries = 16;
        let cascade = registry.build_and_stage(&params, &mut rng).unwrap();
        for id in &ids {
            assert!(!cascade.test_id(id));
        }
    }

    #[test]
    fn consecutive_builds_draw_fresh_salts_and_stay_exact() {
        let (_tmp, mut registry) = fresh(32);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let ids: Vec<RevocationId> = (0..20)
            .map(|_| registry.create_entry(&mut rng).unwrap().0)
            .collect();
        registry.revoke(&ids[0]).unwrap();
        let mut params = CascadeParams::new(32);
        params.min_filter_entries = 16;
        let first = registry.build_and_stage(&params, &mut rng).unwrap();
        let second = registry.build_and_stage(&params, &mut rng).unwrap();
        assert_ne!(first.salt, second.salt);
        for cascade in [&first, &second] {
            assert!(!cascade.test_id(&ids[0]));
            for id in &ids[1..] {
                assert!(cascade.test_id(id));
            }
        }
        // The staged bytes correspond to the latest build.
        let staged = registry.staged().unwrap().unwrap();
        assert_eq!(staged, serialize(&second).unwrap());
    }

    #[test]
    fn rebuild_after_revoke_flips_answer() {
        let (_tmp, mut registry) = fresh(16);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (id, _) = registry.create_entry(&mut rng).unwrap();
        let mut params = CascadeParams::new(16);
        params.min_filter_entries = 16;
        let before = registry.build_and_stage(&params, &mut rng).unwrap();
        assert!(before.test_id(&id));
        registry.revoke(&id).unwrap();
        let after = registry.build_and_stage(&params, &mut rng).unwrap();
        assert!(!after.test_id(&id));
    }

    #[test]
    fn build_params_must_match_capacity() {
        let (_tmp, mut registry) = fresh(16);
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        assert!(registry
            .build_and_stage(&CascadeParams::new(8), &mut rng)
            .is_err());
    }

    #[test]
    fn reload_reproduces_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let expected: Vec<RegistryRecord>;
        {
            let mut registry = Registry::create(dir.path(), account(), 64).unwrap();
            let ids: Vec<RevocationId> = (0..10)
                .map(|_| registry.create_entry(&mut rng).unwrap().0)
                .collect();
            registry.revoke(&ids[2]).unwrap();
            registry.revoke(&ids[7]).unwrap();
            expected = registry.records().cloned().collect();
        }
        let reloaded = Registry::open(dir.path()).unwrap();
        let got: Vec<RegistryRecord> = reloaded.records().cloned().collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn compaction_and_further_ops_survive_reload() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let expected;
        {
            let mut registry = Registry::create(dir.path(), account(), 64).unwrap();
            let ids: Vec<RevocationId> = (0..6)
                .map(|_| registry.create_entry(&mut rng).unwrap().0)
                .collect();
            registry.revoke(&ids[0]).unwrap();
            registry.compact().unwrap();
            registry.revoke(&ids[1]).unwrap();
            registry.create_entry(&mut rng).unwrap();
            expected = registry.records().cloned().collect::<Vec<_>>();
        }
        let reloaded = Registry::open(dir.path()).unwrap();
        assert_eq!(reloaded.records().cloned().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn torn_final_log_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let keep;
        {
            let mut registry = Registry::create(dir.path(), account(), 64).unwrap();
            for _ in 0..5 {
                registry.create_entry(&mut rng).unwrap();
            }
            keep = registry.records().cloned().collect::<Vec<_>>();
        }
        // Simulate a crash mid-append: chop the log inside the final
        // line's id field so the remainder cannot parse.
        let log_path = dir.path().join(LOG_FILE);
        let text = fs::read_to_string(&log_path).unwrap();
        let last_issued = text.lines().last().unwrap().split_whitespace().nth(1).unwrap();
        let last_issued = RevocationId::from_hex(last_issued).unwrap();
        let mut bytes = text.into_bytes();
        let cut = bytes.len() - 13;
        bytes.truncate(cut);
        fs::write(&log_path, &bytes).unwrap();

        let reloaded = Registry::open(dir.path()).unwrap();
        let got: Vec<RegistryRecord> = reloaded.records().cloned().collect();
        let expected: Vec<RegistryRecord> = keep
            .iter()
            .filter(|r| r.id != last_issued)
            .cloned()
            .collect();
        assert_eq!(got, expected);
        assert_eq!(got.len(), 4);
    }

    #[test]
    fn corrupt_mid_log_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        {
            let mut registry = Registry::create(dir.path(), account(), 64).unwrap();
            for _ in 0..3 {
                registry.create_entry(&mut rng).unwrap();
            }
        }
        let log_path = dir.path().join(LOG_FILE);
        let mut text = fs::read_to_string(&log_path).unwrap();
        text = text.replacen("ISSUE", "BOGUS", 1);
        fs::write(&log_path, text).unwrap();
        assert!(matches!(
            Registry::open(dir.path()),
            Err(Error::CorruptRegistry(_))
        ));
    }

    #[test]
    fn log_replay_is_idempotent() {
        let mut records = BTreeMap::new();
        let id = RevocationId([7u8; 32]);
        let log = format!(
            "ISSUE {h} 100\nISSUE {h} 200\nREVOKE {h} 300\nREVOKE {h} 400\n",
            h = id.to_hex()
        );
        replay_log(&log, &mut records).unwrap();
        let record = &records[&id];
        assert_eq!(record.created_at, 100);
        assert_eq!(record.revoked_at, Some(300));
    }

    #[test]
    fn create_refuses_existing_registry_dir() {
        let dir = tempfile::tempdir().unwrap();
        drop(Registry::create(dir.path(), account(), 4).unwrap());
        assert!(Registry::create(dir.path(), account(), 4).is_err());
    }

    #[test]
    fn sets_stay_disjoint_under_random_operation_sequences() {
        // 1000 random op sequences against an in-memory oracle.
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        for _ in 0..1000 {
            let dir = tempfile::tempdir().unwrap();
            let mut registry = Registry::create(dir.path(), account(), 12).unwrap();
            let mut issued: Vec<RevocationId> = Vec::new();
            for _ in 0..rng.gen_range(0..24) {
                if issued.is_empty() || rng.gen_bool(0.6) {
                    if let Ok((id, _)) = registry.create_entry(&mut rng) {
                        issued.push(id);
                    }
                } else {
                    let id = issued[rng.gen_range(0..issued.len())];
                    registry.revoke(&id).unwrap();
                }
            }
            let sets = registry.snapshot_sets();
            sets.validate().unwrap();
            assert_eq!(
                sets.valid.len() + sets.revoked.len(),
                registry.issued_count() as usize
            );
        }
    }
}
