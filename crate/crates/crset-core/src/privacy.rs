//! Empirical privacy evaluation.
//!
//! Two complementary harnesses probe whether published cascades leak the
//! issuer's activity:
//!
//! - a regression attack: structural features of serialized cascades are
//!   fed to a closed-form ridge regression that tries to predict the true
//!   valid/revoked counts. Padded builds should leave it at chance
//!   (R-squared near zero); unpadded builds should hand it the counts.
//! - an executable count-indistinguishability game: an adversary picks two
//!   plausible count histories, the challenger realizes one of them as an
//!   ID history, builds and serializes the cascades, and the adversary
//!   must guess which history it saw. A win rate near one half means the
//!   published data carries no usable signal.
//!
//! The game measures fixed, concrete adversaries. It can refute privacy
//! (a distinguishing adversary is a counterexample) but a passing run is
//! evidence, not a proof over all efficient adversaries.

use std::collections::BTreeSet;
use std::io::Write;
use std::ops::RangeInclusive;

use rand::Rng;

use crate::cascade::{build_cascade, build_cascade_with_targets, CascadeParams, IdSets};
use crate::codec::{deserialize, serialize, SerializedCascade};
use crate::error::{Error, Result};
use crate::RevocationId;

/// Structural features of one serialized cascade: total byte size, level
/// count, and the bit lengths and set-bit counts of the first three
/// filters. Missing levels are encoded as zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CascadeFeatures {
    pub total_size: u64,
    pub filter_count: u32,
    pub first3_sizes: [u64; 3],
    pub first3_setbits: [u64; 3],
}

pub const FEATURE_COUNT: usize = 8;

impl CascadeFeatures {
    /// Flat vector in a fixed column order.
    pub fn to_vector(&self) -> [f64; FEATURE_COUNT] {
        [
            self.total_size as f64,
            self.filter_count as f64,
            self.first3_sizes[0] as f64,
            self.first3_sizes[1] as f64,
            self.first3_sizes[2] as f64,
            self.first3_setbits[0] as f64,
            self.first3_setbits[1] as f64,
            self.first3_setbits[2] as f64,
        ]
    }

    pub const COLUMN_NAMES: [&'static str; FEATURE_COUNT] = [
        "total_size",
        "filter_count",
        "level0_bits",
        "level1_bits",
        "level2_bits",
        "level0_set_bits",
        "level1_set_bits",
        "level2_set_bits",
    ];
}

/// Extracts features from wire bytes. Deterministic: identical bytes give
/// identical features.
pub fn extract_features(data: &SerializedCascade) -> Result<CascadeFeatures> {
    let cascade = deserialize(data)?;
    let mut features = CascadeFeatures {
        total_size: data.bytes.len() as u64,
        filter_count: cascade.levels.len() as u32,
        ..CascadeFeatures::default()
    };
    for (i, filter) in cascade.levels.iter().take(3).enumerate() {
        features.first3_sizes[i] = filter.len_bits();
        features.first3_setbits[i] = filter.count_ones();
    }
    Ok(features)
}

/// One labeled sample: features of a build over sets of known sizes.
#[derive(Clone, Debug)]
pub struct DatasetRow {
    pub features: CascadeFeatures,
    pub valid_count: u64,
    pub revoked_count: u64,
}

/// Builds a labeled dataset. Each sample draws both counts uniformly from
/// `count_range`, materializes random disjoint sets of those sizes, builds
/// a cascade at capacity `n_max`, and extracts features. `padded = false`
/// sets the padding targets to the actual set sizes, producing the leaky
/// variant the attack should defeat.
pub fn generate_dataset<R: Rng + ?Sized>(
    n_samples: usize,
    n_max: u64,
    padded: bool,
    count_range: RangeInclusive<u64>,
    rng: &mut R,
) -> Result<Vec<DatasetRow>> {
    if count_range.is_empty() {
        return Err(Error::InvalidParameter("empty count range".into()));
    }
    if *count_range.end() > n_max {
        return Err(Error::InvalidParameter(format!(
            "count range end {} exceeds capacity {n_max}",
            count_range.end()
        )));
    }
    let params = CascadeParams::new(n_max);
    let mut rows = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let valid_count = rng.gen_range(count_range.clone());
        let revoked_count = rng.gen_range(count_range.clone());
        let sets = IdSets::random(valid_count, revoked_count, rng);
        let cascade = if padded {
            build_cascade(&sets, &params, rng)?
        } else {
            build_cascade_with_targets(&sets, valid_count, revoked_count, &params, rng)?
        };
        rows.push(DatasetRow {
            features: extract_features(&serialize(&cascade)?)?,
            valid_count,
            revoked_count,
        });
    }
    Ok(rows)
}

/// Writes rows as comma-separated text, feature columns then both labels.
pub fn write_csv<W: Write>(rows: &[DatasetRow], out: &mut W) -> std::io::Result<()> {
    writeln!(
        out,
        "{},valid_count,revoked_count",
        CascadeFeatures::COLUMN_NAMES.join(",")
    )?;
    for row in rows {
        let values: Vec<String> = row
            .features
            .to_vector()
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        writeln!(
            out,
            "{},{},{}",
            values.join(","),
            row.valid_count,
            row.revoked_count
        )?;
    }
    Ok(())
}

/// Test-split performance of a fitted attack model.
#[derive(Clone, Copy, Debug)]
pub struct AttackReport {
    /// 1 - mse / baseline_variance; near 0 means the features predict
    /// nothing, near 1 means they reveal the label.
    pub r2: f64,
    pub mse: f64,
    /// Variance of the held-out labels, the error of always predicting
    /// their mean.
    pub baseline_variance: f64,
    pub n_samples: usize,
}

/// Closed-form ridge regressor over standard-scaled features.
#[derive(Clone, Debug)]
pub struct RidgeModel {
    /// Indices of the feature columns that survived scaling.
    pub kept_columns: Vec<usize>,
    /// Per-kept-column train means and standard deviations.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Coefficients in scaled feature space, one per kept column.
    pub coefficients: Vec<f64>,
    /// Mean of the train labels.
    pub intercept: f64,
}

impl RidgeModel {
    pub fn predict(&self, features: &CascadeFeatures) -> f64 {
        let row = features.to_vector();
        self.kept_columns
            .iter()
            .zip(&self.coefficients)
            .zip(self.means.iter().zip(&self.stds))
            .map(|((&col, beta), (mean, std))| beta * (row[col] - mean) / std)
            .sum::<f64>()
            + self.intercept
    }
}

/// Fits ridge regression by the normal equations on the first 80% of the
/// rows and reports mean squared error and R-squared on the held-out 20%.
/// Features are standard-scaled with train-split statistics only;
/// zero-variance columns are dropped.
pub fn fit_ridge(
    features: &[CascadeFeatures],
    labels: &[f64],
    l2: f64,
) -> Result<(AttackReport, RidgeModel)> {
    if features.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} feature rows vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features.len() < 10 {
        return Err(Error::InvalidParameter(
            "need at least 10 samples to fit".into(),
        ));
    }
    if !l2.is_finite() || l2 < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "l2 strength must be finite and non-negative, got {l2}"
        )));
    }

    let rows: Vec<[f64; FEATURE_COUNT]> = features.iter().map(CascadeFeatures::to_vector).collect();
    let n = rows.len();
    let n_train = n * 4 / 5;
    let n_test = n - n_train;

    // Train-split statistics.
    let mut means = [0.0f64; FEATURE_COUNT];
    for row in &rows[..n_train] {
        for (mean, value) in means.iter_mut().zip(row) {
            *mean += value;
        }
    }
    means.iter_mut().for_each(|m| *m /= n_train as f64);
    let mut variances = [0.0f64; FEATURE_COUNT];
    for row in &rows[..n_train] {
        for ((variance, value), mean) in variances.iter_mut().zip(row).zip(&means) {
            let d = value - mean;
            *variance += d * d;
        }
    }
    variances.iter_mut().for_each(|v| *v /= n_train as f64);

    let kept_columns: Vec<usize> = (0..FEATURE_COUNT)
        .filter(|&c| variances[c].sqrt() > 1e-9 * (1.0 + means[c].abs()))
        .collect();
    if kept_columns.is_empty() {
        return Err(Error::DegenerateDesign(
            "all feature columns are constant on the train split".into(),
        ));
    }
    let k = kept_columns.len();
    let col_means: Vec<f64> = kept_columns.iter().map(|&c| means[c]).collect();
    let col_stds: Vec<f64> = kept_columns.iter().map(|&c| variances[c].sqrt()).collect();

    let scale_row = |row: &[f64; FEATURE_COUNT]| -> Vec<f64> {
        kept_columns
            .iter()
            .zip(col_means.iter().zip(&col_stds))
            .map(|(&c, (mean, std))| (row[c] - mean) / std)
            .collect()
    };

    let intercept = labels[..n_train].iter().sum::<f64>() / n_train as f64;

    // Normal equations: (X^T X + l2 I) beta = X^T (y - mean(y)).
    let mut gram = vec![vec![0.0f64; k]; k];
    let mut moment = vec![0.0f64; k];
    for (row, &label) in rows[..n_train].iter().zip(&labels[..n_train]) {
        let x = scale_row(row);
        let centered = label - intercept;
        for (i, &xi) in x.iter().enumerate() {
            moment[i] += xi * centered;
            for (j, &xj) in x.iter().enumerate().skip(i) {
                gram[i][j] += xi * xj;
            }
        }
    }
    // Mirror the upper triangle and add the ridge term.
    #[allow(clippy::needless_range_loop)]
    for i in 0..k {
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
        gram[i][i] += l2;
    }
    let coefficients = solve_linear_system(gram, moment)?;

    let model = RidgeModel {
        kept_columns,
        means: col_means,
        stds: col_stds,
        coefficients,
        intercept,
    };

    let test_labels = &labels[n_train..];
    let label_mean = test_labels.iter().sum::<f64>() / n_test as f64;
    let baseline_variance = test_labels
        .iter()
        .map(|y| (y - label_mean) * (y - label_mean))
        .sum::<f64>()
        / n_test as f64;
    let mse = features[n_train..]
        .iter()
        .zip(test_labels)
        .map(|(f, y)| {
            let e = model.predict(f) - y;
            e * e
        })
        .sum::<f64>()
        / n_test as f64;
    if baseline_variance == 0.0 {
        return Err(Error::DegenerateDesign(
            "held-out labels have zero variance".into(),
        ));
    }
    let report = AttackReport {
        r2: 1.0 - mse / baseline_variance,
        mse,
        baseline_variance,
        n_samples: n,
    };
    Ok((report, model))
}

/// Gaussian elimination with partial pivoting; `matrix` is consumed.
#[allow(clippy::needless_range_loop)] // elimination touches two rows at once
fn solve_linear_system(mut matrix: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Result<Vec<f64>> {
    let k = rhs.len();
    let scale: f64 = (0..k).map(|i| matrix[i][i].abs()).fold(0.0, f64::max);
    for col in 0..k {
        let pivot_row = (col..k)
            .max_by(|&a, &b| matrix[a][col].abs().total_cmp(&matrix[b][col].abs()))
            .expect("non-empty range");
        if matrix[pivot_row][col].abs() <= 1e-12 * scale.max(1.0) {
            return Err(Error::DegenerateDesign(
                "singular normal equations; raise l2 or drop collinear features".into(),
            ));
        }
        matrix.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in col + 1..k {
            let factor = matrix[row][col] / matrix[col][col];
            if factor == 0.0 {
                continue;
            }
            for j in col..k {
                matrix[row][j] -= factor * matrix[col][j];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut solution = vec![0.0f64; k];
    for col in (0..k).rev() {
        let tail: f64 = matrix[col][col + 1..]
            .iter()
            .zip(&solution[col + 1..])
            .map(|(a, b)| a * b)
            .sum();
        solution[col] = (rhs[col] - tail) / matrix[col][col];
    }
    Ok(solution)
}

/// Two aligned per-step counts of valid and revoked credentials.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountSeries {
    pub valid_counts: Vec<u64>,
    pub revoked_counts: Vec<u64>,
}

impl CountSeries {
    pub fn new(valid_counts: Vec<u64>, revoked_counts: Vec<u64>) -> Self {
        CountSeries {
            valid_counts,
            revoked_counts,
        }
    }

    pub fn len(&self) -> usize {
        self.valid_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid_counts.is_empty()
    }

    /// Plausibility under the credential life cycle without expiry: counts
    /// below the capacity, revocations never undone, and the cumulative
    /// issued total never shrinking.
    pub fn check_plausible(&self, n: u64) -> Result<()> {
        if self.valid_counts.len() != self.revoked_counts.len() || self.valid_counts.is_empty() {
            return Err(Error::ImplausibleSeries(
                "valid and revoked series must have equal non-zero length".into(),
            ));
        }
        let steps = self.valid_counts.iter().zip(&self.revoked_counts);
        let mut prev_revoked = 0u64;
        let mut prev_issued = 0u64;
        for (step, (&valid, &revoked)) in steps.enumerate() {
            if valid >= n || revoked >= n {
                return Err(Error::ImplausibleSeries(format!(
                    "step {step}: counts ({valid}, {revoked}) must stay below n = {n}"
                )));
            }
            if revoked < prev_revoked {
                return Err(Error::ImplausibleSeries(format!(
                    "step {step}: revoked count dropped from {prev_revoked} to {revoked}"
                )));
            }
            let issued = valid + revoked;
            if issued < prev_issued {
                return Err(Error::ImplausibleSeries(format!(
                    "step {step}: cumulative issued dropped from {prev_issued} to {issued}"
                )));
            }
            prev_revoked = revoked;
            prev_issued = issued;
        }
        Ok(())
    }
}

/// Realizes a count series as an ID history: at each step, fresh IDs are
/// issued and the step's new revocations are drawn uniformly from the
/// currently valid IDs. IDs are issued once and revocations are permanent.
pub fn synthesize_history<R: Rng + ?Sized>(
    series: &CountSeries,
    rng: &mut R,
) -> Result<Vec<IdSets>> {
    let mut valid: BTreeSet<RevocationId> = BTreeSet::new();
    let mut revoked: BTreeSet<RevocationId> = BTreeSet::new();
    let mut history = Vec::with_capacity(series.len());
    for (step, (&v_target, &r_target)) in series
        .valid_counts
        .iter()
        .zip(&series.revoked_counts)
        .enumerate()
    {
        let issued_target = v_target + r_target;
        let issued_now = (valid.len() + revoked.len()) as u64;
        if issued_target < issued_now || r_target < revoked.len() as u64 {
            return Err(Error::ImplausibleSeries(format!(
                "step {step} is not reachable from the previous step"
            )));
        }
        for _ in 0..issued_target - issued_now {
            loop {
                let id = RevocationId::random(rng);
                if !valid.contains(&id) && !revoked.contains(&id) {
                    valid.insert(id);
                    break;
                }
            }
        }
        let new_revocations = (r_target - revoked.len() as u64) as usize;
        let pool: Vec<RevocationId> = valid.iter().copied().collect();
        for index in rand::seq::index::sample(rng, pool.len(), new_revocations) {
            let id = pool[index];
            valid.remove(&id);
            revoked.insert(id);
        }
        debug_assert_eq!(valid.len() as u64, v_target);
        history.push(IdSets {
            valid: valid.clone(),
            revoked: revoked.clone(),
        });
    }
    assert_history_realizable(&history);
    Ok(history)
}

/// Life-cycle invariants of a synthesized history: disjoint sets, revoked
/// IDs stay revoked, issued IDs stay issued.
fn assert_history_realizable(history: &[IdSets]) {
    for window in history.windows(2) {
        let (earlier, later) = (&window[0], &window[1]);
        assert!(
            earlier.revoked.is_subset(&later.revoked),
            "revocation undone between steps"
        );
        let earlier_issued: BTreeSet<_> =
            earlier.valid.union(&earlier.revoked).copied().collect();
        let later_issued: BTreeSet<_> = later.valid.union(&later.revoked).copied().collect();
        assert!(
            earlier_issued.is_subset(&later_issued),
            "issued id vanished between steps"
        );
    }
    for sets in history {
        sets.validate().expect("valid and revoked sets stay disjoint");
    }
}

/// A player of the count-indistinguishability game.
pub trait CcigAdversary {
    /// Two distinct plausible series of counts over `l` steps, all below
    /// `n`.
    fn choose_series(&mut self, l: usize, n: u64) -> (CountSeries, CountSeries);

    /// Given the serialized cascades of one realized history, guess which
    /// series (0 or 1) produced it.
    fn guess(&mut self, snapshots: &[SerializedCascade]) -> u8;
}

/// Runs the game: per trial the challenger flips a hidden bit, realizes
/// the corresponding series as an ID history, builds and serializes the
/// `l` cascades at capacity `n` (padded or not), and scores the
/// adversary's guess. Returns the fraction of correct guesses.
pub fn run_ccig<R: Rng + ?Sized>(
    adversary: &mut dyn CcigAdversary,
    padded: bool,
    l: usize,
    n: u64,
    trials: u32,
    rng: &mut R,
) -> Result<f64> {
    if l == 0 || trials == 0 {
        return Err(Error::InvalidParameter(
            "need at least one step and one trial".into(),
        ));
    }
    let (series0, series1) = adversary.choose_series(l, n);
    for series in [&series0, &series1] {
        series.check_plausible(n)?;
        if series.len() != l {
            return Err(Error::ImplausibleSeries(format!(
                "series length {} does not match l = {l}",
                series.len()
            )));
        }
    }
    if series0 == series1 {
        return Err(Error::ImplausibleSeries(
            "the two series must be distinct".into(),
        ));
    }

    let params = CascadeParams::new(n);
    let mut wins = 0u32;
    for _ in 0..trials {
        let hidden_bit = rng.gen::<bool>() as u8;
        let series = if hidden_bit == 1 { &series1 } else { &series0 };
        let history = synthesize_history(series, rng)?;
        let mut snapshots = Vec::with_capacity(l);
        for sets in &history {
            let cascade = if padded {
                build_cascade(sets, &params, rng)?
            } else {
                build_cascade_with_targets(
                    sets,
                    sets.valid.len() as u64,
                    sets.revoked.len() as u64,
                    &params,
                    rng,
                )?
            };
            snapshots.push(serialize(&cascade)?);
        }
        if adversary.guess(&snapshots) == hidden_bit {
            wins += 1;
        }
    }
    Ok(f64::from(wins) / f64::from(trials))
}

/// Baseline adversary: ignores the snapshots and flips a coin.
pub struct RandomGuessAdversary {
    rng: rand_chacha::ChaCha20Rng,
}

impl RandomGuessAdversary {
    pub fn new(seed: u64) -> Self {
        use rand::SeedableRng;
        RandomGuessAdversary {
            rng: rand_chacha::ChaCha20Rng::seed_from_u64(seed),
        }
    }
}

impl CcigAdversary for RandomGuessAdversary {
    fn choose_series(&mut self, l: usize, n: u64) -> (CountSeries, CountSeries) {
        (
            default_series(l, n, n / 4),
            default_series(l, n, n / 2),
        )
    }

    fn guess(&mut self, _snapshots: &[SerializedCascade]) -> u8 {
        self.rng.gen_range(0..=1)
    }
}

/// A plausible series with a constant valid count and a slow revocation
/// ramp.
pub fn default_series(l: usize, n: u64, valid_level: u64) -> CountSeries {
    let valid_level = valid_level.clamp(1, n.saturating_sub(1).max(1));
    let step = (n / 128).max(1);
    let revoked: Vec<u64> = (0..l as u64).map(|i| (i * step).min(n - 1)).collect();
    CountSeries::new(vec![valid_level; l], revoked)
}

/// The attack of the regression experiment, packaged as a game player: it
/// trains ridge models for both labels against the create function under
/// test, then guesses whichever series its per-step count predictions are
/// closer to.
pub struct FeatureRegressionAdversary {
    series0: CountSeries,
    series1: CountSeries,
    valid_model: RidgeModel,
    revoked_model: RidgeModel,
}

impl FeatureRegressionAdversary {
    /// Trains against the given build mode at capacity `n`.
    pub fn train<R: Rng + ?Sized>(
        padded: bool,
        n: u64,
        series0: CountSeries,
        series1: CountSeries,
        train_samples: usize,
        l2: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let rows = generate_dataset(train_samples, n, padded, 0..=n - 1, rng)?;
        let features: Vec<CascadeFeatures> = rows.iter().map(|r| r.features).collect();
        let valid_labels: Vec<f64> = rows.iter().map(|r| r.valid_count as f64).collect();
        let revoked_labels: Vec<f64> = rows.iter().map(|r| r.revoked_count as f64).collect();
        let (_, valid_model) = fit_ridge(&features, &valid_labels, l2)?;
        let (_, revoked_model) = fit_ridge(&features, &revoked_labels, l2)?;
        Ok(FeatureRegressionAdversary {
            series0,
            series1,
            valid_model,
            revoked_model,
        })
    }

    fn distance_to(&self, series: &CountSeries, predictions: &[(f64, f64)]) -> f64 {
        predictions
            .iter()
            .zip(series.valid_counts.iter().zip(&series.revoked_counts))
            .map(|((pv, pr), (&v, &r))| {
                let dv = pv - v as f64;
                let dr = pr - r as f64;
                dv * dv + dr * dr
            })
            .sum()
    }
}

impl CcigAdversary for FeatureRegressionAdversary {
    fn choose_series(&mut self, _l: usize, _n: u64) -> (CountSeries, CountSeries) {
        (self.series0.clone(), self.series1.clone())
    }

    fn guess(&mut self, snapshots: &[SerializedCascade]) -> u8 {
        let predictions: Vec<(f64, f64)> = snapshots
            .iter()
            .map(|data| {
                let features = extract_features(data).expect("challenger snapshots are well-formed");
                (
                    self.valid_model.predict(&features),
                    self.revoked_model.predict(&features),
                )
            })
            .collect();
        let d0 = self.distance_to(&self.series0, &predictions);
        let d1 = self.distance_to(&self.series1, &predictions);
        u8::from(d1 < d0)
    }
}
