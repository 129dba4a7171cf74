use std::collections::BTreeMap;
use topkit::benchmark::{spis_subsample, SpisConfig};
use topkit::experiment::load_manifest;
use topkit::model::vocab::Vocabulary;
use topkit::model::{predict, train, ModelConfig, ParserMode, TrainConfig, TrainedModel};
use topkit::Inventory;

fn main() {
    let domain = std::env::args().nth(1).unwrap_or("timer".into());
    let dir = std::env::temp_dir().join("topkit-transfer-probe");
    let manifest = load_manifest(&dir).unwrap();
    let source_full = manifest.source(&domain).unwrap();
    let target_subset = manifest.target_subset(&domain, 1).unwrap();
    let mut target_test = manifest.target_test(&domain).unwrap();
    target_test.samples.truncate(12);

    let seed = 1u64;
    let source_train_set = spis_subsample(&source_full, &SpisConfig::new(10, seed * 31 + 7));
    let all_invs: Vec<&Inventory> = manifest.inventories.values().collect();
    let vocab = Vocabulary::build(&source_full, &all_invs, ParserMode::InventoryPointer, 64);
    let config = ModelConfig { mode: ParserMode::InventoryPointer, seed, ..ModelConfig::default() };
    let mut model = TrainedModel::init(config, vocab).unwrap();
    let stc = TrainConfig { epochs: 60, batch_size: 16, learning_rate: 2e-3, seed: seed + 100, ..TrainConfig::default() };
    train(&mut model, &source_train_set, &manifest.inventories, &stc, "source").unwrap();

    println!("== target subset (train):");
    for s in &target_subset.samples {
        println!("  {} ||| {}", s.utterance, s.frame.serialize());
    }
    println!("== zero-shot predictions on {domain}:");
    let inv = &manifest.inventories[&domain];
    for s in &target_test.samples {
        let pred = match predict(&model, &s.utterance, inv) {
            Ok(f) => f.serialize(),
            Err(e) => format!("FAIL {:?} {}", e.cause, e.tokens.join(" ")),
        };
        println!("  utt:  {}\n  gold: {}\n  pred: {}", s.utterance, s.frame.serialize(), pred);
    }
    let ttc = TrainConfig { epochs: 40, batch_size: 2, learning_rate: 5e-4, seed: seed + 200, ..TrainConfig::default() };
    train(&mut model, &target_subset, &manifest.inventories, &ttc, "target").unwrap();
    println!("== post-adaptation predictions:");
    for s in &target_test.samples {
        let pred = match predict(&model, &s.utterance, inv) {
            Ok(f) => f.serialize(),
            Err(e) => format!("FAIL {:?} {}", e.cause, e.tokens.join(" ")),
        };
        println!("  utt:  {}\n  gold: {}\n  pred: {}", s.utterance, s.frame.serialize(), pred);
    }
}
