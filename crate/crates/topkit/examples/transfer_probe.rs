use std::collections::BTreeMap;
use std::time::Instant;
use topkit::benchmark::{corpus_inventories, make_scenarios, spis_subsample, write_manifest, SpisConfig};
use topkit::evaluate::exact_match;
use topkit::experiment::load_manifest;
use topkit::model::vocab::Vocabulary;
use topkit::model::{predict, train, ModelConfig, ParserMode, TrainConfig, TrainedModel};
use topkit::synth::default_benchmark_suite;
use topkit::Inventory;

fn em_on(model: &TrainedModel, samples: &[topkit::Sample], invs: &BTreeMap<String, Inventory>) -> f64 {
    let preds: Vec<_> = samples.iter().map(|s| predict(model, &s.utterance, &invs[&s.domain])).collect();
    let golds: Vec<_> = samples.iter().map(|s| s.frame.clone()).collect();
    exact_match(&preds, &golds).unwrap().em
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let source_spis: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let src_epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
    let src_lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2e-3);
    let tgt_epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(40);
    let tgt_lr: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(5e-4);
    let domains: Vec<String> = args.get(6).map(|s| s.split(',').map(str::to_string).collect()).unwrap_or_else(|| vec!["alarm".into(), "timer".into()]);
    let seeds: Vec<u64> = args.get(7).map(|s| s.split(',').map(|x| x.parse().unwrap()).collect()).unwrap_or_else(|| vec![1, 2]);

    let corpus = default_benchmark_suite(13);
    let dir = std::env::temp_dir().join("topkit-transfer-probe");
    if !dir.join("summary.tsv").exists() {
        let scenarios = make_scenarios(&corpus, &[1], 0).unwrap();
        let inventories = corpus_inventories(&corpus).unwrap();
        write_manifest(&scenarios, &inventories, &dir).unwrap();
    }
    let manifest = load_manifest(&dir).unwrap();

    for domain in &domains {
        let source_full = manifest.source(domain).unwrap();
        let target_subset = manifest.target_subset(domain, 1).unwrap();
        let mut target_test = manifest.target_test(domain).unwrap();
        target_test.samples.truncate(60);
        for mode in [ParserMode::InventoryPointer, ParserMode::CopyGenerate] {
            let mut zero_shots = Vec::new();
            let mut finals = Vec::new();
            let t = Instant::now();
            for &seed in &seeds {
                let source_train_set = spis_subsample(&source_full, &SpisConfig::new(source_spis, seed * 31 + 7));
                let all_invs: Vec<&Inventory> = manifest.inventories.values().collect();
                let mut word_corpus = source_full.clone();
                word_corpus.samples.extend(target_subset.samples.iter().cloned());
                word_corpus.samples.extend(manifest.target_test(domain).unwrap().samples);
                let mut vocab = Vocabulary::build(&word_corpus, &all_invs, ParserMode::InventoryPointer, 64);
                if mode == ParserMode::CopyGenerate {
                    let mut labels = Vec::new();
                    for (d, inv) in &manifest.inventories {
                        if d != domain { labels.extend(inv.components().iter().map(|c| c.label.clone())); }
                    }
                    vocab.extend_with_labels(&labels);
                }
                let src_dropout: f64 = std::env::var("PROBE_DROPOUT").ok().and_then(|v| v.parse().ok()).unwrap_or(0.2);
                let config = ModelConfig { mode, seed, dropout: src_dropout, ..ModelConfig::default() };
                let mut model = TrainedModel::init(config, vocab).unwrap();
                let stc = TrainConfig { epochs: src_epochs, batch_size: 16, learning_rate: src_lr, seed: seed + 100, ..TrainConfig::default() };
                train(&mut model, &source_train_set, &manifest.inventories, &stc, "source").unwrap();
                let source_eval: Vec<topkit::Sample> = source_full.samples.iter().rev().take(40).cloned().collect();
                model.config.dropout = 0.0;
                let sem = em_on(&model, &source_eval, &manifest.inventories);
                print!("    [seed {seed} src-EM {sem:.2}] ");
                zero_shots.push(em_on(&model, &target_test.samples, &manifest.inventories));
                let ttc = TrainConfig { epochs: tgt_epochs, batch_size: 2, learning_rate: tgt_lr, seed: seed + 200, ..TrainConfig::default() };
                train(&mut model, &target_subset, &manifest.inventories, &ttc, "target").unwrap();
                finals.push(em_on(&model, &target_test.samples, &manifest.inventories));
            }
            let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
            println!(
                "{domain}/{mode}: zero-shot {:?} (mean {:.3}) -> final {:?} (mean {:.3})  [{:?}]",
                zero_shots.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>(), mean(&zero_shots),
                finals.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>(), mean(&finals),
                t.elapsed()
            );
        }
    }
}
