//! `crset` — operator tooling around the revocation toolkit: issuer-side
//! registry commands, cascade builds, blob publishing, relying-party
//! checks, and the privacy/performance harnesses.
//!
//! Exit codes: 0 success, 1 domain failure (capacity, unknown id, missing
//! publication, unavailable check), 2 usage errors.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use crset_core::{
    build_cascade, check_status, default_series, fit_ridge, generate_dataset, pack_blobs,
    run_ccig, serialize, status_entry_from_input, write_csv, BlobStore, CascadeParams, Error,
    FeatureRegressionAdversary, FsBlobStore, IdSets, IssuerAccount, RandomGuessAdversary,
    Registry, RevocationId,
};

#[derive(Parser)]
#[command(name = "crset", version, about = "Padded filter-cascade revocation toolkit")]
struct Cli {
    /// Emit machine-readable JSON instead of text
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RegistryDir {
    /// Registry directory
    #[arg(long, env = "CRSET_DIR")]
    dir: PathBuf,
}

#[derive(Args)]
struct StoreDir {
    /// Blob store directory (defaults to <dir>/store for issuer commands)
    #[arg(long, env = "CRSET_STORE_DIR")]
    store: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Create a registry directory for one issuer account
    Init {
        /// Instance capacity: total ids this registry may ever issue
        #[arg(long)]
        capacity: u64,
        /// Issuer account as a CAIP-10 identifier (namespace:chainid:address)
        #[arg(long)]
        account: String,
        #[command(flatten)]
        dir: RegistryDir,
    },
    /// Mint revocation ids and print their credential status entries
    Issue {
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[command(flatten)]
        dir: RegistryDir,
    },
    /// Mark one id revoked
    Revoke {
        /// Revocation id, 64 hex characters
        id: String,
        #[command(flatten)]
        dir: RegistryDir,
    },
    /// Emergency: revoke every currently valid id
    RevokeAll {
        #[command(flatten)]
        dir: RegistryDir,
    },
    /// Rebuild the cascade from the registry and stage it for publishing
    Build {
        /// Inner-level target false-positive rate (0.53 is the measured optimum)
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Hex seed for deterministic builds
        #[arg(long)]
        seed: Option<String>,
        #[command(flatten)]
        dir: RegistryDir,
    },
    /// Publish the staged cascade to the blob store
    Publish {
        #[arg(long, default_value_t = crset_core::codec::DEFAULT_BLOB_SIZE)]
        blob_size: usize,
        #[command(flatten)]
        dir: RegistryDir,
        #[command(flatten)]
        store: StoreDir,
    },
    /// Check one credential: prints valid, revoked, or unavailable
    Check {
        /// Status entry id (namespace:chainid:address:idhex) or its JSON form
        id_uri: String,
        /// Blob store directory
        #[arg(long, env = "CRSET_STORE_DIR")]
        store: PathBuf,
    },
    /// Build-time and size table across capacities
    Bench {
        /// Comma-separated capacities, scientific notation allowed (1e3,1e4)
        #[arg(long, default_value = "1e3,1e4,1e5")]
        capacities: String,
        #[arg(long)]
        seed: Option<String>,
    },
    /// Regression attack against generated datasets
    PrivacyEval {
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long)]
        capacity: u64,
        /// Attack padded builds (default)
        #[arg(long, conflicts_with = "unpadded")]
        padded: bool,
        /// Attack unpadded builds instead
        #[arg(long)]
        unpadded: bool,
        /// Which count the attack tries to predict
        #[arg(long, value_parser = ["revoked", "valid"], default_value = "revoked")]
        label: String,
        #[arg(long, default_value_t = 1.0)]
        l2: f64,
        /// Also write the dataset as CSV
        #[arg(long)]
        export_csv: Option<PathBuf>,
        #[arg(long)]
        seed: Option<String>,
    },
    /// Count-indistinguishability game against a chosen adversary
    Ccig {
        #[arg(long, default_value_t = 200)]
        trials: u32,
        /// History length (number of published snapshots per trial)
        #[arg(long, default_value_t = 4)]
        l: usize,
        /// Capacity of each build; all counts stay below it
        #[arg(long)]
        n: u64,
        #[arg(long, conflicts_with = "unpadded")]
        padded: bool,
        #[arg(long)]
        unpadded: bool,
        #[arg(long, value_parser = ["regression", "random"], default_value = "regression")]
        adversary: String,
        #[arg(long, default_value_t = 300)]
        train_samples: usize,
        #[arg(long)]
        seed: Option<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    });
}

fn rng_from_seed(seed: &Option<String>) -> Result<ChaCha20Rng, Error> {
    match seed {
        None => Ok(ChaCha20Rng::from_entropy()),
        Some(text) => {
            let bytes = hex::decode(text)
                .map_err(|_| Error::InvalidParameter(format!("seed {text:?} is not hex")))?;
            if bytes.len() > 32 {
                return Err(Error::InvalidParameter(
                    "seed must be at most 32 bytes of hex".into(),
                ));
            }
            let mut seed = [0u8; 32];
            seed[..bytes.len()].copy_from_slice(&bytes);
            Ok(ChaCha20Rng::from_seed(seed))
        }
    }
}

fn store_for(dir: &Path, store: &StoreDir) -> FsBlobStore {
    let root = store
        .store
        .clone()
        .unwrap_or_else(|| dir.join("store"));
    FsBlobStore::new(&root)
}

fn parse_capacities(text: &str) -> Result<Vec<u64>, Error> {
    text.split(',')
        .map(|part| {
            let trimmed = part.trim();
            let value: f64 = trimmed
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad capacity {trimmed:?}")))?;
            if !value.is_finite() || !(1.0..=1e12).contains(&value) {
                return Err(Error::InvalidParameter(format!(
                    "capacity {trimmed:?} out of range"
                )));
            }
            Ok(value.round() as u64)
        })
        .collect()
}

fn run(cli: Cli) -> Result<i32, Error> {
    let json = cli.json;
    match cli.command {
        Command::Init { capacity, account, dir } => {
            let account = IssuerAccount::parse_caip10(&account)?;
            let registry = Registry::create(&dir.dir, account, capacity)?;
            if json {
                println!(
                    "{}",
                    json!({
                        "dir": registry.dir(),
                        "account": registry.account().caip10(),
                        "capacity": registry.capacity(),
                    })
                );
            } else {
                println!(
                    "initialized registry for {} with capacity {} at {}",
                    registry.account().caip10(),
                    registry.capacity(),
                    registry.dir().display()
                );
            }
            Ok(0)
        }

        Command::Issue { count, dir } => {
            let mut registry = Registry::open(&dir.dir)?;
            let mut rng = ChaCha20Rng::from_entropy();
            let mut entries = Vec::new();
            for _ in 0..count {
                let (_, entry) = registry.create_entry(&mut rng)?;
                entries.push(entry);
            }
            if json {
                let objects: Vec<serde_json::Value> = entries
                    .iter()
                    .map(|e| json!({"credentialStatus": {"id": e.id_uri, "type": e.type_tag}}))
                    .collect();
                println!("{}", json!(objects));
            } else {
                for entry in &entries {
                    println!("{}", entry.to_credential_status_json());
                }
            }
            Ok(0)
        }

        Command::Revoke { id, dir } => {
            let id = RevocationId::from_hex(&id)?;
            let mut registry = Registry::open(&dir.dir)?;
            registry.revoke(&id)?;
            if json {
                println!("{}", json!({"revoked": id.to_hex()}));
            } else {
                println!("revoked {}", id.to_hex());
            }
            Ok(0)
        }

        Command::RevokeAll { dir } => {
            let mut registry = Registry::open(&dir.dir)?;
            let newly = registry.revoke_all()?;
            if json {
                println!(
                    "{}",
                    json!({"newly_revoked": newly, "revoked_total": registry.revoked_count()})
                );
            } else {
                println!(
                    "revoked {newly} ids ({} total revoked)",
                    registry.revoked_count()
                );
            }
            Ok(0)
        }

        Command::Build { p, seed, dir } => {
            let mut registry = Registry::open(&dir.dir)?;
            let mut rng = rng_from_seed(&seed)?;
            let params = CascadeParams::new(registry.capacity()).with_p(p);
            let started = Instant::now();
            let cascade = registry.build_and_stage(&params, &mut rng)?;
            let elapsed = started.elapsed();
            let bytes = registry.staged()?.expect("just staged").bytes.len();
            let bits_per_capacity = bytes as f64 * 8.0 / registry.capacity() as f64;
            if json {
                println!(
                    "{}",
                    json!({
                        "levels": cascade.levels.len(),
                        "bytes": bytes,
                        "bits_per_capacity": bits_per_capacity,
                        "salt": hex::encode(cascade.salt),
                        "millis": elapsed.as_millis() as u64,
                    })
                );
            } else {
                println!(
                    "staged cascade: {} levels, {} bytes, {:.3} bits/capacity, built in {:.1?}",
                    cascade.levels.len(),
                    bytes,
                    bits_per_capacity,
                    elapsed
                );
            }
            Ok(0)
        }

        Command::Publish { blob_size, dir, store } => {
            if blob_size < 64 {
                return Err(Error::InvalidParameter(
                    "blob size must be at least 64 bytes".into(),
                ));
            }
            let registry = Registry::open(&dir.dir)?;
            let staged = registry.staged()?.ok_or_else(|| {
                Error::InvalidParameter("no staged cascade; run `crset build` first".into())
            })?;
            let bundle = pack_blobs(&staged, blob_size);
            let blob_store = store_for(registry.dir(), &store);
            let sequence = blob_store.publish(registry.account(), &bundle)?;
            if json {
                println!(
                    "{}",
                    json!({
                        "sequence": sequence,
                        "blobs": bundle.blobs.len(),
                        "blob_size": blob_size,
                        "account": registry.account().caip10(),
                    })
                );
            } else {
                println!(
                    "published sequence {sequence} for {} ({} blob(s) of {blob_size} bytes)",
                    registry.account().caip10(),
                    bundle.blobs.len()
                );
            }
            Ok(0)
        }

        Command::Check { id_uri, store } => {
            let entry = status_entry_from_input(&id_uri)?;
            let blob_store = FsBlobStore::new(&store);
            match check_status(&blob_store, &entry) {
                Ok(status) => {
                    if json {
                        println!("{}", json!({"status": status.to_string()}));
                    } else {
                        println!("{status}");
                    }
                    Ok(0)
                }
                Err(e) => {
                    if json {
                        println!(
                            "{}",
                            json!({"status": "unavailable", "reason": e.to_string()})
                        );
                    } else {
                        println!("unavailable");
                    }
                    eprintln!("error: {e}");
                    Ok(1)
                }
            }
        }

        Command::Bench { capacities, seed } => {
            let mut rng = rng_from_seed(&seed)?;
            let mut rows = Vec::new();
            if !json {
                println!(
                    "{:>10} {:>7} {:>10} {:>10} {:>9}",
                    "capacity", "levels", "millis", "bytes", "bits/cap"
                );
            }
            for capacity in parse_capacities(&capacities)? {
                let sets = IdSets::random(capacity / 2, capacity / 2, &mut rng);
                let params = CascadeParams::new(capacity);
                let started = Instant::now();
                let cascade = build_cascade(&sets, &params, &mut rng)?;
                let millis = started.elapsed().as_secs_f64() * 1e3;
                let bytes = serialize(&cascade)?.bytes.len();
                let bits_per_capacity = bytes as f64 * 8.0 / capacity as f64;
                if json {
                    rows.push(json!({
                        "capacity": capacity,
                        "levels": cascade.levels.len(),
                        "millis": millis,
                        "bytes": bytes,
                        "bits_per_capacity": bits_per_capacity,
                    }));
                } else {
                    println!(
                        "{capacity:>10} {:>7} {millis:>10.1} {bytes:>10} {bits_per_capacity:>9.3}",
                        cascade.levels.len()
                    );
                }
            }
            if json {
                println!("{}", json!(rows));
            }
            Ok(0)
        }

        Command::PrivacyEval {
            samples,
            capacity,
            padded: _,
            unpadded,
            label,
            l2,
            export_csv,
            seed,
        } => {
            let padded = !unpadded;
            let mut rng = rng_from_seed(&seed)?;
            let rows = generate_dataset(samples, capacity, padded, 0..=capacity, &mut rng)?;
            if let Some(path) = export_csv {
                let mut file = File::create(&path)?;
                write_csv(&rows, &mut file)?;
                file.flush()?;
            }
            let features: Vec<_> = rows.iter().map(|r| r.features).collect();
            let labels: Vec<f64> = rows
                .iter()
                .map(|r| {
                    if label == "valid" {
                        r.valid_count as f64
                    } else {
                        r.revoked_count as f64
                    }
                })
                .collect();
            let (report, _) = fit_ridge(&features, &labels, l2)?;
            if json {
                println!(
                    "{}",
                    json!({
                        "padded": padded,
                        "label": label,
                        "r2": report.r2,
                        "mse": report.mse,
                        "baseline_variance": report.baseline_variance,
                        "n_samples": report.n_samples,
                    })
                );
            } else {
                println!(
                    "{} {label}-count attack over {} samples: r2 {:.4}, mse {:.1}, baseline variance {:.1}",
                    if padded { "padded" } else { "unpadded" },
                    report.n_samples,
                    report.r2,
                    report.mse,
                    report.baseline_variance
                );
            }
            Ok(0)
        }

        Command::Ccig {
            trials,
            l,
            n,
            padded: _,
            unpadded,
            adversary,
            train_samples,
            seed,
        } => {
            let padded = !unpadded;
            let mut rng = rng_from_seed(&seed)?;
            // Well-separated histories: a small issuer vs one at 3/4 load.
            let series0 = default_series(l, n, (n / 32).max(1));
            let series1 = default_series(l, n, n * 3 / 4);
            let win_rate = if adversary == "random" {
                let mut player = RandomGuessAdversary::new(0);
                run_ccig(&mut player, padded, l, n, trials, &mut rng)?
            } else {
                let mut player = FeatureRegressionAdversary::train(
                    padded,
                    n,
                    series0,
                    series1,
                    train_samples,
                    1.0,
                    &mut rng,
                )?;
                run_ccig(&mut player, padded, l, n, trials, &mut rng)?
            };
            if json {
                println!(
                    "{}",
                    json!({
                        "padded": padded,
                        "adversary": adversary,
                        "trials": trials,
                        "l": l,
                        "n": n,
                        "win_rate": win_rate,
                        "advantage": (win_rate - 0.5).abs(),
                    })
                );
            } else {
                println!(
                    "{} {adversary} adversary over {trials} trials (l={l}, n={n}): win rate {win_rate:.3}, advantage {:.3}",
                    if padded { "padded" } else { "unpadded" },
                    (win_rate - 0.5).abs()
                );
            }
            Ok(0)
        }
    }
}
