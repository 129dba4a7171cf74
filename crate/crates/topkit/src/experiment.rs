//! Experiment orchestration: the two-stage transfer grid and the inventory
//! ablation, driven by a single TOML config with documented defaults.
//!
//! Every (scenario, k, mode, seed) cell is self-contained and deterministic,
//! so cells run in parallel; all randomness derives from the cell seed. The
//! word vocabulary is built once per cell from the source corpus plus every
//! domain's inventory spans, standing in for a pre-trained vocabulary that
//! covers the language broadly. Copy-generate cells additionally reserve one
//! label token per source-domain ontology entry up front and extend for
//! unseen target labels during adaptation; pointer cells never extend.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{spis_subsample, SpisConfig};
use crate::dataset::{load_dataset, Dataset};
use crate::evaluate::{
    aggregate, domain_profile, exact_match, AggregateReport, EvalReport, RunRecord,
};
use crate::inventory::{load_inventory_tsv, Inventory, InventoryVariant, OntologyLabel};
use crate::model::vocab::Vocabulary;
use crate::model::{
    loss, predict, prepare_pairs, train, ModelConfig, ModelError, ParserMode, TrainConfig,
    TrainedModel,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] crate::evaluate::EvalError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.display().to_string(), source }
}

/// Model dimensions section of the experiment config (mode, variant, and
/// seed are grid axes, not config fields).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_source_len: usize,
    pub max_target_len: usize,
    pub dropout: f64,
    pub m_max: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::default();
        ModelSection {
            layers: d.layers,
            model_dim: d.model_dim,
            heads: d.heads,
            ffn_dim: d.ffn_dim,
            max_source_len: d.max_source_len,
            max_target_len: d.max_target_len,
            dropout: d.dropout,
            m_max: d.m_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    /// Dropout rate while training this stage (decoding is always dropout-free).
    pub dropout: f64,
}

impl StageSection {
    fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
            seed,
            ..TrainConfig::default()
        }
    }
}

/// Source-stage defaults: more data, fewer passes, regularized.
fn default_source_stage() -> StageSection {
    StageSection { epochs: 40, batch_size: 16, learning_rate: 2e-3, grad_clip: 1.0, dropout: 0.2 }
}

/// Target-stage defaults: tiny data, more passes, gentler rate, no dropout
/// so both modes converge on a handful of samples.
fn default_target_stage() -> StageSection {
    StageSection { epochs: 40, batch_size: 2, learning_rate: 5e-4, grad_clip: 1.0, dropout: 0.0 }
}

impl Default for StageSection {
    fn default() -> Self {
        default_source_stage()
    }
}

/// Full experiment description. Every field has a default, so an empty TOML
/// file is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Scenario (target-domain) names; empty selects every scenario present.
    pub scenarios: Vec<String>,
    /// SPIS cardinalities to run; each must have a manifest subset file.
    pub ks: Vec<usize>,
    pub modes: Vec<ParserMode>,
    pub variant: InventoryVariant,
    pub seeds: Vec<u64>,
    /// Cap on evaluated test samples per cell (0 = no cap).
    pub test_limit: usize,
    /// SPIS cap applied to the pooled source set before source-stage
    /// training (0 = train on the full source set).
    pub source_spis: usize,
    pub model: ModelSection,
    pub source_train: StageSection,
    pub target_train: StageSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenarios: Vec::new(),
            ks: vec![1],
            modes: vec![ParserMode::InventoryPointer, ParserMode::CopyGenerate],
            variant: InventoryVariant::IndexTypeSpan,
            seeds: vec![1, 2, 3],
            test_limit: 80,
            source_spis: 25,
            model: ModelSection::default(),
            source_train: default_source_stage(),
            target_train: default_target_stage(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn model_config(&self, mode: ParserMode, variant: InventoryVariant, seed: u64) -> ModelConfig {
        ModelConfig {
            mode,
            inventory_variant: variant,
            layers: self.model.layers,
            model_dim: self.model.model_dim,
            heads: self.model.heads,
            ffn_dim: self.model.ffn_dim,
            max_source_len: self.model.max_source_len,
            max_target_len: self.model.max_target_len,
            dropout: self.model.dropout,
            m_max: self.model.m_max,
            seed,
        }
    }
}

/// A benchmark manifest on disk (see `benchmark::write_manifest`).
pub struct Manifest {
    pub dir: PathBuf,
    pub domains: Vec<String>,
    pub inventories: BTreeMap<String, Inventory>,
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, ExperimentError> {
    let inv_dir = dir.join("inventories");
    let mut inventories = BTreeMap::new();
    let entries = std::fs::read_dir(&inv_dir).map_err(io_err(&inv_dir))?;
    for entry in entries {
        let entry = entry.map_err(io_err(&inv_dir))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("tsv") {
            let domain = path.file_stem().unwrap().to_string_lossy().to_string();
            let inv = load_inventory_tsv(&domain, &path).map_err(ExperimentError::Manifest)?;
            inventories.insert(domain, inv);
        }
    }
    let mut domains = Vec::new();
    for domain in inventories.keys() {
        if dir.join(domain).join("source.tsv").exists() {
            domains.push(domain.clone());
        }
    }
    if domains.is_empty() {
        return Err(ExperimentError::Manifest(format!(
            "no scenario directories under {}",
            dir.display()
        )));
    }
    Ok(Manifest { dir: dir.to_path_buf(), domains, inventories })
}

impl Manifest {
    fn scenario_file(&self, domain: &str, name: &str) -> Result<Dataset, ExperimentError> {
        let path = self.dir.join(domain).join(name);
        Ok(load_dataset(&path)?)
    }

    pub fn source(&self, domain: &str) -> Result<Dataset, ExperimentError> {
        self.scenario_file(domain, "source.tsv")
    }

    pub fn target_subset(&self, domain: &str, k: usize) -> Result<Dataset, ExperimentError> {
        self.scenario_file(domain, &format!("target_{k}spis.tsv"))
    }

    pub fn target_test(&self, domain: &str) -> Result<Dataset, ExperimentError> {
        self.scenario_file(domain, "target_test.tsv")
    }
}

/// Identity and outcome of one grid cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellOutcome {
    pub domain: String,
    pub k: usize,
    pub mode: ParserMode,
    pub variant: InventoryVariant,
    pub seed: u64,
    pub em: f64,
    pub n_test: usize,
    /// Vocabulary entries appended during target adaptation.
    pub added_labels: Vec<String>,
    pub vocab_size_before_target: usize,
    pub vocab_size_after_target: usize,
    pub embedding_rows_before_target: usize,
    pub embedding_rows_after_target: usize,
    /// Mean target-set loss of the source-trained model before adaptation.
    pub target_initial_loss: f64,
    /// Mean target-set loss of a freshly initialized model, for the transfer
    /// sanity check.
    pub fresh_initial_loss: f64,
    pub report: EvalReport,
    pub train_log: Vec<crate::model::LogEntry>,
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut h = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58476d1ce4e5b9);
    h ^ (h >> 27)
}

/// Run one two-stage transfer cell: source fine-tuning, target adaptation,
/// then greedy evaluation on the held-out target test split.
pub fn run_cell(
    manifest: &Manifest,
    config: &ExperimentConfig,
    domain: &str,
    k: usize,
    mode: ParserMode,
    variant: InventoryVariant,
    seed: u64,
) -> Result<CellOutcome, ExperimentError> {
    let source_full = manifest.source(domain)?;
    let target_subset = manifest.target_subset(domain, k)?;
    let mut target_test = manifest.target_test(domain)?;
    if config.test_limit > 0 && target_test.len() > config.test_limit {
        target_test.samples.truncate(config.test_limit);
    }

    let source_train_set = if config.source_spis > 0 {
        spis_subsample(&source_full, &SpisConfig::new(config.source_spis, mix(seed, 11)))
    } else {
        source_full.clone()
    };

    // The word vocabulary stands in for a pre-trained subword vocabulary: a
    // fixed resource covering the corpus language (all domains' words and
    // spans), carrying no target supervision. The copy-generate baseline
    // additionally reserves label tokens for source domains only, mirroring
    // how its decoder vocabulary is assembled before adaptation.
    let mut word_corpus = source_full.clone();
    word_corpus.samples.extend(target_subset.samples.iter().cloned());
    word_corpus.samples.extend(manifest.target_test(domain)?.samples);
    let all_invs: Vec<&Inventory> = manifest.inventories.values().collect();
    let mut vocab = Vocabulary::build(
        &word_corpus,
        &all_invs,
        ParserMode::InventoryPointer,
        config.model.m_max,
    );
    if mode == ParserMode::CopyGenerate {
        let mut source_labels: Vec<OntologyLabel> = Vec::new();
        for (d, inv) in &manifest.inventories {
            if d != domain {
                source_labels.extend(inv.components().iter().map(|c| c.label.clone()));
            }
        }
        vocab.extend_with_labels(&source_labels);
    }

    let model_config = config.model_config(mode, variant, mix(seed, 1));
    let mut model = TrainedModel::init(model_config.clone(), vocab)?;

    let source_tc = config.source_train.to_train_config(mix(seed, 2));
    model.config.dropout = config.source_train.dropout;
    train(&mut model, &source_train_set, &manifest.inventories, &source_tc, "source")?;
    model.config.dropout = 0.0;

    // Snapshot for the adaptation invariants.
    let vocab_size_before_target = model.vocab.len();
    let embedding_rows_before_target =
        model.params.value(crate::model::transformer::EMBEDDING).nrows();

    // Transfer sanity: target loss before adaptation, against a fresh model.
    let target_inventory = manifest
        .inventories
        .get(domain)
        .ok_or_else(|| ExperimentError::Manifest(format!("no inventory for `{domain}`")))?
        .clone();
    let target_pairs =
        prepare_pairs(&target_subset, &manifest.inventories, &model.config, &model.vocab);
    let (target_initial_loss, fresh_initial_loss) = match target_pairs {
        Ok(ref pairs) if !pairs.is_empty() => {
            let fresh = TrainedModel::init(model_config.clone(), model.vocab.clone())?;
            (loss(&model, pairs)?, loss(&fresh, pairs)?)
        }
        _ => (f64::NAN, f64::NAN),
    };

    let target_tc = config.target_train.to_train_config(mix(seed, 3));
    model.config.dropout = config.target_train.dropout;
    let target_report =
        train(&mut model, &target_subset, &manifest.inventories, &target_tc, "target")?;
    model.config.dropout = 0.0;

    let predictions: Vec<_> = target_test
        .samples
        .iter()
        .map(|s| predict(&model, &s.utterance, &target_inventory))
        .collect();
    let golds: Vec<_> = target_test.samples.iter().map(|s| s.frame.clone()).collect();
    let report = exact_match(&predictions, &golds)?;

    Ok(CellOutcome {
        domain: domain.to_string(),
        k,
        mode,
        variant,
        seed,
        em: report.em,
        n_test: report.n,
        added_labels: target_report.added_vocab,
        vocab_size_before_target,
        vocab_size_after_target: model.vocab.len(),
        embedding_rows_before_target,
        embedding_rows_after_target: model
            .params
            .value(crate::model::transformer::EMBEDDING)
            .nrows(),
        target_initial_loss,
        fresh_initial_loss,
        report,
        train_log: model.training_log.clone(),
    })
}

/// Results of a grid run plus the aggregate view.
pub struct GridOutcome {
    pub cells: Vec<CellOutcome>,
    pub aggregate: AggregateReport,
}

/// Run the full (scenario x k x mode x seed) grid, in parallel across cells.
pub fn run_grid(
    manifest: &Manifest,
    config: &ExperimentConfig,
) -> Result<GridOutcome, ExperimentError> {
    let scenarios: Vec<String> = if config.scenarios.is_empty() {
        manifest.domains.clone()
    } else {
        for s in &config.scenarios {
            if !manifest.domains.contains(s) {
                return Err(ExperimentError::Config(format!(
                    "scenario `{s}` not present in manifest"
                )));
            }
        }
        config.scenarios.clone()
    };
    let mut cells: Vec<(String, usize, ParserMode, u64)> = Vec::new();
    for domain in &scenarios {
        for &k in &config.ks {
            for &mode in &config.modes {
                for &seed in &config.seeds {
                    cells.push((domain.clone(), k, mode, seed));
                }
            }
        }
    }
    log::info!("running {} cells", cells.len());
    let outcomes: Result<Vec<CellOutcome>, ExperimentError> = cells
        .par_iter()
        .map(|(domain, k, mode, seed)| {
            let outcome =
                run_cell(manifest, config, domain, *k, *mode, config.variant, *seed)?;
            log::info!(
                "cell {}/k={}/{}/seed={}: EM {:.3} over {} samples",
                domain,
                k,
                mode,
                seed,
                outcome.em,
                outcome.n_test
            );
            Ok(outcome)
        })
        .collect();
    let cells = outcomes?;
    let records: Vec<RunRecord> = cells
        .iter()
        .map(|c| RunRecord {
            domain: c.domain.clone(),
            k: c.k,
            mode: c.mode,
            seed: c.seed,
            em: c.em,
        })
        .collect();
    Ok(GridOutcome { cells, aggregate: aggregate(&records) })
}

/// Run the inventory ablation: the three linearization variants in pointer
/// mode on a single domain with shared seeds.
pub fn run_ablation(
    manifest: &Manifest,
    config: &ExperimentConfig,
    domain: &str,
) -> Result<Vec<CellOutcome>, ExperimentError> {
    if !manifest.domains.contains(&domain.to_string()) {
        return Err(ExperimentError::Config(format!("scenario `{domain}` not in manifest")));
    }
    let mut jobs: Vec<(InventoryVariant, usize, u64)> = Vec::new();
    for &variant in &InventoryVariant::ALL {
        for &k in &config.ks {
            for &seed in &config.seeds {
                jobs.push((variant, k, seed));
            }
        }
    }
    let outcomes: Result<Vec<CellOutcome>, ExperimentError> = jobs
        .par_iter()
        .map(|(variant, k, seed)| {
            let outcome = run_cell(
                manifest,
                config,
                domain,
                *k,
                ParserMode::InventoryPointer,
                *variant,
                *seed,
            )?;
            log::info!(
                "ablation {}/k={}/{}/seed={}: EM {:.3}",
                domain,
                k,
                variant.as_str(),
                seed,
                outcome.em
            );
            Ok(outcome)
        })
        .collect();
    outcomes
}

/// Mean EM per variant/k over an ablation run, rendered like a component
/// comparison table: one row per variant, one column per k.
pub fn render_ablation_table(outcomes: &[CellOutcome]) -> String {
    let mut ks: Vec<usize> = outcomes.iter().map(|c| c.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut out = String::from("component");
    for k in &ks {
        write!(out, "\t{k}spis").unwrap();
    }
    out.push('\n');
    for (variant, label) in [
        (InventoryVariant::IndexOnly, "index"),
        (InventoryVariant::IndexType, "+ type"),
        (InventoryVariant::IndexTypeSpan, "+ span"),
    ] {
        out.push_str(label);
        for k in &ks {
            let ems: Vec<f64> = outcomes
                .iter()
                .filter(|c| c.variant == variant && c.k == *k)
                .map(|c| c.em)
                .collect();
            if ems.is_empty() {
                out.push_str("\t-");
            } else {
                let mean = ems.iter().sum::<f64>() / ems.len() as f64;
                write!(out, "\t{:.2}", mean * 100.0).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// EM versus domain characteristics (compositionality, ontology size), one
/// row per (domain, mode, k) cell.
pub fn render_characteristics_table(
    manifest: &Manifest,
    outcome: &GridOutcome,
) -> Result<String, ExperimentError> {
    let mut profiles = BTreeMap::new();
    for domain in &manifest.domains {
        let test = manifest.target_test(domain)?;
        let profile = domain_profile(&test, domain)?;
        let ontology_size = manifest.inventories[domain].len();
        profiles.insert(domain.clone(), (profile.compositionality, ontology_size));
    }
    let mut out = String::from("domain\tcompositionality\tontology_size\tmode\tk\tmean_em\tstd_em\n");
    for ((domain, k, mode), stats) in &outcome.aggregate.cells {
        let (comp, size) = profiles
            .get(domain)
            .ok_or_else(|| ExperimentError::Manifest(format!("no profile for `{domain}`")))?;
        writeln!(
            out,
            "{domain}\t{comp:.3}\t{size}\t{}\t{k}\t{:.4}\t{:.4}",
            mode.as_str(),
            stats.mean_em,
            stats.std_em
        )
        .unwrap();
    }
    Ok(out)
}

/// Persist grid outputs: per-cell reports, run records, the aggregate table,
/// and the characteristics table.
pub fn write_grid_outputs(
    manifest: &Manifest,
    config: &ExperimentConfig,
    outcome: &GridOutcome,
    out_dir: &Path,
) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let config_path = out_dir.join("config.toml");
    std::fs::write(&config_path, config.to_toml()).map_err(io_err(&config_path))?;

    let cells_dir = out_dir.join("cells");
    std::fs::create_dir_all(&cells_dir).map_err(io_err(&cells_dir))?;
    let mut runs = String::new();
    for cell in &outcome.cells {
        let name = format!("{}_k{}_{}_s{}", cell.domain, cell.k, cell.mode.as_str(), cell.seed);
        let cell_dir = cells_dir.join(&name);
        std::fs::create_dir_all(&cell_dir).map_err(io_err(&cell_dir))?;
        let report_path = cell_dir.join("report.json");
        let json = serde_json::to_string_pretty(cell)
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        std::fs::write(&report_path, json).map_err(io_err(&report_path))?;
        let log_path = cell_dir.join("train_log.jsonl");
        let mut log_text = String::new();
        for entry in &cell.train_log {
            log_text.push_str(&serde_json::to_string(entry).unwrap());
            log_text.push('\n');
        }
        std::fs::write(&log_path, log_text).map_err(io_err(&log_path))?;
        writeln!(
            runs,
            "{}",
            serde_json::json!({
                "domain": cell.domain,
                "k": cell.k,
                "mode": cell.mode.as_str(),
                "variant": cell.variant.as_str(),
                "seed": cell.seed,
                "em": cell.em,
                "n_test": cell.n_test,
                "added_labels": cell.added_labels.len(),
            })
        )
        .unwrap();
    }
    let runs_path = out_dir.join("runs.jsonl");
    std::fs::write(&runs_path, runs).map_err(io_err(&runs_path))?;

    let agg_path = out_dir.join("aggregate.tsv");
    std::fs::write(&agg_path, outcome.aggregate.render_table()).map_err(io_err(&agg_path))?;

    let characteristics = render_characteristics_table(manifest, outcome)?;
    let characteristics_path = out_dir.join("characteristics.tsv");
    std::fs::write(&characteristics_path, characteristics)
        .map_err(io_err(&characteristics_path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_gives_defaults() {
        let config = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(config, ExperimentConfig::default());
        assert_eq!(config.seeds, vec![1, 2, 3]);
        assert_eq!(config.ks, vec![1]);
    }

    #[test]
    fn partial_toml_overrides() {
        let config = ExperimentConfig::from_toml(
            "seeds = [7]\nks = [2]\n[model]\nmodel_dim = 32\n[target_train]\nepochs = 5\n",
        )
        .unwrap();
        assert_eq!(config.seeds, vec![7]);
        assert_eq!(config.ks, vec![2]);
        assert_eq!(config.model.model_dim, 32);
        assert_eq!(config.target_train.epochs, 5);
        // Untouched sections keep their defaults.
        assert_eq!(config.source_train.epochs, default_source_stage().epochs);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = ExperimentConfig::default();
        let parsed = ExperimentConfig::from_toml(&config.to_toml()).unwrap();
        assert_eq!(parsed, config);
    }

    #[test]
    fn bad_toml_is_a_config_error() {
        assert!(matches!(
            ExperimentConfig::from_toml("seeds = \"oops\""),
            Err(ExperimentError::Config(_))
        ));
    }
}
