//! Low-resource transfer benchmark construction.
//!
//! For each domain this builds a leave-one-out scenario: every other domain
//! pools into a high-resource source set, and small target subsets are drawn
//! with SPIS (samples per intent and slot) so that every ontology token is
//! covered up to a per-token cap `k`. A held-out target test split is carved
//! off before subsampling so evaluation never sees training samples.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{extract_ontology, write_dataset, Dataset, DatasetError};
use crate::frame::ontology_tokens;
use crate::inventory::{build_inventory, write_inventory_tsv, Inventory};

/// Fraction of each domain reserved as the held-out test split.
pub const TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("dataset spans a single domain; leave-one-out needs at least 2")]
    SingleDomainDataset,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("inventory: {0}")]
    Inventory(String),
}

/// SPIS parameters: per-token cap `k` and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpisConfig {
    pub k: usize,
    pub seed: u64,
}

impl SpisConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        assert!(k >= 1, "SPIS cardinality k must be >= 1");
        SpisConfig { k, seed }
    }
}

/// One leave-one-out transfer scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub target_domain: String,
    /// All samples from the other domains, in corpus order.
    pub source: Dataset,
    /// SPIS subsets of the target train pool, keyed by k.
    pub target_subsets: BTreeMap<usize, Dataset>,
    /// Held-out target samples, disjoint from every subset.
    pub target_test: Dataset,
}

/// Greedy SPIS selection pass over samples in the order given, without
/// shuffling. A sample is kept iff at least one of its ontology tokens is
/// still under the cap; keeping it increments the count of every ontology
/// token it contains (occurrences, not presence).
pub fn spis_scan(dataset: &Dataset, k: usize) -> Dataset {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut kept = Vec::new();
    for sample in &dataset.samples {
        let tokens = ontology_tokens(&sample.frame);
        if tokens.iter().any(|t| counts.get(t).copied().unwrap_or(0) < k) {
            for t in &tokens {
                *counts.entry(t.clone()).or_insert(0) += 1;
            }
            kept.push(sample.clone());
        }
    }
    Dataset::new(kept)
}

/// SPIS subsampling: Fisher-Yates shuffle with a ChaCha8 generator seeded by
/// `config.seed`, then the greedy [`spis_scan`]. Output preserves scan order.
///
/// Guarantee: every ontology token with `n_t` occurrences in the input keeps
/// at least `min(k, n_t)` occurrences in the output.
pub fn spis_subsample(dataset: &Dataset, config: &SpisConfig) -> Dataset {
    let mut shuffled = dataset.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffled.samples.shuffle(&mut rng);
    spis_scan(&shuffled, config.k)
}

fn split_seed(seed: u64, domain: &str) -> u64 {
    // Stable per-domain stream: fold the domain name into the base seed.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in domain.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    seed ^ h
}

/// Split one domain's samples into a train pool and a held-out test split
/// using a seeded shuffle; the test split takes [`TEST_FRACTION`] (at least
/// one sample when the domain has two or more).
pub fn split_train_test(domain_samples: &Dataset, seed: u64) -> (Dataset, Dataset) {
    let mut shuffled = domain_samples.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.samples.shuffle(&mut rng);
    let n = shuffled.len();
    let mut n_test = ((n as f64) * TEST_FRACTION).floor() as usize;
    if n >= 2 && n_test == 0 {
        n_test = 1;
    }
    let test = Dataset::new(shuffled.samples.split_off(n - n_test));
    (shuffled, test)
}

/// Build one scenario per domain. The target's train pool feeds SPIS subsets
/// for every `k`; all other domains form the source set untouched.
pub fn make_scenarios(
    dataset: &Dataset,
    ks: &[usize],
    seed: u64,
) -> Result<Vec<Scenario>, BenchmarkError> {
    let domains = dataset.domains();
    if domains.len() < 2 {
        return Err(BenchmarkError::SingleDomainDataset);
    }
    let mut scenarios = Vec::new();
    for domain in &domains {
        let target_all = dataset.restrict_to_domain(domain);
        let (train_pool, target_test) = split_train_test(&target_all, split_seed(seed, domain));
        let mut target_subsets = BTreeMap::new();
        for &k in ks {
            let subset = spis_subsample(&train_pool, &SpisConfig::new(k, split_seed(seed, domain)));
            target_subsets.insert(k, subset);
        }
        scenarios.push(Scenario {
            target_domain: domain.clone(),
            source: dataset.exclude_domain(domain),
            target_subsets,
            target_test,
        });
    }
    Ok(scenarios)
}

/// Per-domain inventories derived from the corpus frames.
pub fn corpus_inventories(dataset: &Dataset) -> Result<BTreeMap<String, Inventory>, BenchmarkError> {
    let mut out = BTreeMap::new();
    for domain in dataset.domains() {
        let labels: Vec<_> = extract_ontology(dataset, &domain).into_iter().collect();
        let inv = build_inventory(&domain, &labels)
            .map_err(|e| BenchmarkError::Inventory(e.to_string()))?;
        out.insert(domain, inv);
    }
    Ok(out)
}

/// Write the benchmark manifest:
///
/// ```text
/// dir/
///   summary.tsv                  counts per scenario, one row per domain
///   inventories/<domain>.tsv     component tables for every domain
///   <domain>/source.tsv          pooled other-domain samples
///   <domain>/target_{k}spis.tsv  SPIS subsets
///   <domain>/target_test.tsv     held-out evaluation split
/// ```
pub fn write_manifest(
    scenarios: &[Scenario],
    inventories: &BTreeMap<String, Inventory>,
    dir: &Path,
) -> Result<(), BenchmarkError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| BenchmarkError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let inv_dir = dir.join("inventories");
    std::fs::create_dir_all(&inv_dir).map_err(io_err(&inv_dir))?;
    for (domain, inv) in inventories {
        let path = inv_dir.join(format!("{domain}.tsv"));
        write_inventory_tsv(inv, &path).map_err(io_err(&path))?;
    }

    let ks: Vec<usize> = scenarios
        .first()
        .map(|s| s.target_subsets.keys().copied().collect())
        .unwrap_or_default();
    let mut summary = String::from("domain\tsource");
    for k in &ks {
        write!(summary, "\t{k}spis").unwrap();
    }
    summary.push_str("\ttest\n");

    for scenario in scenarios {
        let sdir = dir.join(&scenario.target_domain);
        std::fs::create_dir_all(&sdir).map_err(io_err(&sdir))?;
        write_dataset(&scenario.source, &sdir.join("source.tsv"))?;
        for (k, subset) in &scenario.target_subsets {
            write_dataset(subset, &sdir.join(format!("target_{k}spis.tsv")))?;
        }
        write_dataset(&scenario.target_test, &sdir.join("target_test.tsv"))?;

        write!(summary, "{}\t{}", scenario.target_domain, scenario.source.len()).unwrap();
        for k in &ks {
            let n = scenario.target_subsets.get(k).map_or(0, Dataset::len);
            write!(summary, "\t{n}").unwrap();
        }
        writeln!(summary, "\t{}", scenario.target_test.len()).unwrap();
    }
    let summary_path = dir.join("summary.tsv");
    std::fs::write(&summary_path, summary).map_err(io_err(&summary_path))?;
    Ok(())
}
