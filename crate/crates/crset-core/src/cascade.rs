//! Build and query padded Bloom filter cascades.
//!
//! A cascade encodes a finite universe of IDs split into a valid set and a
//! revoked set so that membership answers are exact for every ID in that
//! universe. Level 0 holds the valid side; each deeper level holds the
//! false positives of the level above it, with the two sides swapping
//! roles, until a level produces none.
//!
//! Before building, both sides are padded with random IDs to a fixed ratio
//! of the declared capacity: `n_max` valid and `2 * n_max` revoked. Level-0
//! geometry is therefore a function of `n_max` alone, and the revoked side
//! always has room to absorb an emergency revocation of everything issued.

use std::collections::BTreeSet;

use rand::Rng;

use crate::bloom::{filter_size_for, BloomFilter, HashInput};
use crate::error::{Error, Result};
use crate::{RevocationId, Salt};

/// Default inner-level target false-positive rate.
pub const DEFAULT_P: f64 = 0.5;

/// Empirically tuned alternative to [`DEFAULT_P`].
pub const EMPIRICAL_P: f64 = 0.53;

/// Default floor on the entry count every filter is sized for. Keeps tiny
/// tail levels from realizing unexpectedly high false-positive rates.
pub const DEFAULT_MIN_FILTER_ENTRIES: u64 = 1024;

/// Default number of full rebuild attempts (each with a fresh salt) before
/// the build is reported as diverged.
pub const DEFAULT_MAX_RESTARTS: u32 = 8;

/// Build parameters for one cascade.
#[derive(Clone, Debug)]
pub struct CascadeParams {
    /// Capacity of the instance: the padded valid-set size, and half the
    /// padded revoked-set size.
    pub n_max: u64,
    /// Target false-positive rate of levels 1 and deeper.
    pub p: f64,
    /// Target false-positive rate of level 0, `sqrt(p) / 2` unless
    /// overridden.
    pub p0: f64,
    /// Every filter is sized for at least this many entries.
    pub min_filter_entries: u64,
    /// Hard cap on cascade depth before the build restarts with a new salt.
    pub max_levels: u32,
    /// Restart budget before giving up with `BuildDiverged`.
    pub max_restarts: u32,
}

impl CascadeParams {
    /// Defaults for a given capacity: p = 0.5, p0 = sqrt(p)/2, a 1024-entry
    /// filter floor, and a depth guard from [`level_count_bound`].
    pub fn new(n_max: u64) -> Self {
        CascadeParams {
            n_max,
            p: DEFAULT_P,
            p0: DEFAULT_P.sqrt() / 2.0,
            min_filter_entries: DEFAULT_MIN_FILTER_ENTRIES,
            max_levels: level_count_bound(n_max),
            max_restarts: DEFAULT_MAX_RESTARTS,
        }
    }

    /// Sets the inner-level rate and re-derives `p0 = sqrt(p) / 2`.
    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self.p0 = p.sqrt() / 2.0;
        self
    }

    /// Overrides the level-0 rate independently of `p`.
    pub fn with_p0(mut self, p0: f64) -> Self {
        self.p0 = p0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(Error::InvalidParameter("capacity must be at least 1".into()));
        }
        if self.n_max > u64::MAX / 4 {
            return Err(Error::InvalidParameter("capacity too large".into()));
        }
        for (name, value) in [("p", self.p), ("p0", self.p0)] {
            if !value.is_finite() || value <= 0.0 || value >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be in (0, 1), got {value}"
                )));
            }
        }
        if self.min_filter_entries < 1 {
            return Err(Error::InvalidParameter(
                "min_filter_entries must be at least 1".into(),
            ));
        }
        if self.max_levels < 2 {
            return Err(Error::InvalidParameter("max_levels must be at least 2".into()));
        }
        if self.max_levels > u16::MAX as u32 {
            return Err(Error::InvalidParameter(
                "max_levels exceeds the 16-bit level index space".into(),
            ));
        }
        Ok(())
    }
}

/// The disjoint valid / revoked ID sets of one issuer at one point in time.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdSets {
    pub valid: BTreeSet<RevocationId>,
    pub revoked: BTreeSet<RevocationId>,
}

impl IdSets {
    pub fn new(valid: BTreeSet<RevocationId>, revoked: BTreeSet<RevocationId>) -> Result<Self> {
        let sets = IdSets { valid, revoked };
        sets.validate()?;
        Ok(sets)
    }

    /// Draws `valid_count + revoked_count` distinct random IDs.
    pub fn random<R: Rng + ?Sized>(valid_count: u64, revoked_count: u64, rng: &mut R) -> Self {
        let mut all = BTreeSet::new();
        while (all.len() as u64) < valid_count + revoked_count {
            all.insert(RevocationId::random(rng));
        }
        let valid: BTreeSet<_> = all.iter().copied().take(valid_count as usize).collect();
        let revoked: BTreeSet<_> = all.into_iter().skip(valid_count as usize).collect();
        IdSets { valid, revoked }
    }

    pub fn validate(&self) -> Result<()> {
        if self.valid.intersection(&self.revoked).next().is_some() {
            return Err(Error::InvalidParameter(
                "valid and revoked sets must be disjoint".into(),
            ));
        }
        Ok(())
    }
}

/// An ordered list of Bloom filters plus the salt they were built under and
/// the declared capacity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterCascade {
    pub levels: Vec<BloomFilter>,
    pub salt: Salt,
    pub n_max: u64,
}

impl FilterCascade {
    /// Membership test for IDs of this issuer's universe: true means valid,
    /// false means revoked. Walks the levels until one does not contain the
    /// ID; an absence at an odd level (or exhausting an odd number of
    /// levels) confirms cascade membership. IDs outside the universe the
    /// cascade was built over get unspecified answers.
    pub fn test_id(&self, id: &RevocationId) -> bool {
        for (level, filter) in self.levels.iter().enumerate() {
            if !filter.contains(&HashInput::new(*id, level as u16, self.salt)) {
                return level % 2 == 1;
            }
        }
        self.levels.len() % 2 == 1
    }

    /// Total bit length across levels (header bytes not included).
    pub fn total_bits(&self) -> u64 {
        self.levels.iter().map(BloomFilter::len_bits).sum()
    }
}

/// Padded set sizes for a capacity: `n_max` valid, `2 * n_max` revoked.
/// The revoked side is twice as large so that every credential ever issued
/// can be revoked at once without outgrowing the instance.
pub fn padding_targets(n_max: u64) -> (u64, u64) {
    (n_max, 2 * n_max)
}

/// Grows `ids` to exactly `target` elements with fresh uniform random IDs,
/// avoiding collisions with `ids` itself and with `exclusions`.
pub fn pad_with_random_ids<R: Rng + ?Sized>(
    ids: &BTreeSet<RevocationId>,
    target: u64,
    exclusions: &BTreeSet<RevocationId>,
    rng: &mut R,
) -> Result<BTreeSet<RevocationId>> {
    if ids.len() as u64 > target {
        return Err(Error::CapacityExceeded(format!(
            "{} ids exceed the padding target {target}; start a fresh instance",
            ids.len()
        )));
    }
    let mut padded = ids.clone();
    while (padded.len() as u64) < target {
        let candidate = RevocationId::random(rng);
        if !exclusions.contains(&candidate) {
            padded.insert(candidate);
        }
    }
    Ok(padded)
}

/// Builds a padded cascade: every ID in `sets.valid` will test true and
/// every ID in `sets.revoked` will test false. The salt is drawn fresh from
/// `rng`; if the cascade fails to converge within `params.max_levels`
/// levels, the build restarts with a new salt up to `params.max_restarts`
/// times before reporting `BuildDiverged`.
pub fn build_cascade<R: Rng + ?Sized>(
    sets: &IdSets,
    params: &CascadeParams,
    rng: &mut R,
) -> Result<FilterCascade> {
    let (v_target, r_target) = padding_targets(params.n_max);
    build_cascade_with_targets(sets, v_target, r_target, params, rng)
}

/// Builds a cascade with explicit padded sizes. `build_cascade` uses the
/// fixed-ratio targets; passing the actual set sizes yields an unpadded
/// build, which the privacy harness uses as its leaky baseline.
pub fn build_cascade_with_targets<R: Rng + ?Sized>(
    sets: &IdSets,
    v_target: u64,
    r_target: u64,
    params: &CascadeParams,
    rng: &mut R,
) -> Result<FilterCascade> {
    Ok(build_traced(sets, v_target, r_target, params, rng)?.0)
}

/// Like [`build_cascade_with_targets`], additionally reporting how many
/// ids were encoded at each level.
pub(crate) fn build_traced<R: Rng + ?Sized>(
    sets: &IdSets,
    v_target: u64,
    r_target: u64,
    params: &CascadeParams,
    rng: &mut R,
) -> Result<(FilterCascade, Vec<u64>)> {
    params.validate()?;
    sets.validate()?;
    if sets.valid.len() as u64 > v_target {
        return Err(Error::CapacityExceeded(format!(
            "{} valid ids exceed target {v_target}",
            sets.valid.len()
        )));
    }
    if sets.revoked.len() as u64 > r_target {
        return Err(Error::CapacityExceeded(format!(
            "{} revoked ids exceed target {r_target}",
            sets.revoked.len()
        )));
    }

    for _ in 0..=params.max_restarts {
        let salt: Salt = rng.gen();
        let padded_valid = pad_with_random_ids(&sets.valid, v_target, &sets.revoked, rng)?;
        let padded_revoked = pad_with_random_ids(&sets.revoked, r_target, &padded_valid, rng)?;
        if let Some((levels, entry_counts)) = try_build(&padded_valid, &padded_revoked, salt, params)
        {
            let cascade = FilterCascade {
                levels,
                salt,
                n_max: params.n_max,
            };
            return Ok((cascade, entry_counts));
        }
    }
    Err(Error::BuildDiverged {
        restarts: params.max_restarts,
    })
}

/// One salted build attempt; `None` means the depth guard was hit.
fn try_build(
    padded_valid: &BTreeSet<RevocationId>,
    padded_revoked: &BTreeSet<RevocationId>,
    salt: Salt,
    params: &CascadeParams,
) -> Option<(Vec<BloomFilter>, Vec<u64>)> {
    let mut included: Vec<RevocationId> = padded_valid.iter().copied().collect();
    let mut excluded: Vec<RevocationId> = padded_revoked.iter().copied().collect();
    let mut levels: Vec<BloomFilter> = Vec::new();
    let mut entry_counts: Vec<u64> = Vec::new();

    while !included.is_empty() {
        if levels.len() as u32 >= params.max_levels {
            return None;
        }
        let level = levels.len() as u16;
        let p = if level == 0 { params.p0 } else { params.p };
        let entries = (included.len() as u64).max(params.min_filter_entries);
        let m = filter_size_for(entries, p).expect("parameters were validated");
        let mut filter = BloomFilter::new(m);
        for id in &included {
            filter.insert(&HashInput::new(*id, level, salt));
        }
        let false_positives: Vec<RevocationId> = excluded
            .iter()
            .copied()
            .filter(|id| filter.contains(&HashInput::new(*id, level, salt)))
            .collect();
        entry_counts.push(included.len() as u64);
        levels.push(filter);
        excluded = std::mem::replace(&mut included, false_positives);
    }
    Some((levels, entry_counts))
}

/// Expected total cascade size in bits for a capacity, 5.64 bits per
/// capacity unit.
pub fn estimate_size_bits(n_max: u64) -> Result<f64> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("capacity must be at least 1".into()));
    }
    Ok(5.64 * n_max as f64)
}

/// Default depth guard: `4 * ceil(log2(n_max))`, never below 16. Levels
/// grow logarithmically with capacity, so this sits comfortably above the
/// depths that occur in practice; it is a restart trigger, not a tight
/// bound.
pub fn level_count_bound(n_max: u64) -> u32 {
    let x = n_max.max(2);
    let ceil_log2 = x.ilog2() + u32::from(!x.is_power_of_two());
    (4 * ceil_log2).max(16)
}
