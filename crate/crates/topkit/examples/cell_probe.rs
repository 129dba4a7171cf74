use std::time::Instant;
use topkit::benchmark::{corpus_inventories, make_scenarios, write_manifest};
use topkit::experiment::{load_manifest, run_cell, ExperimentConfig};
use topkit::model::ParserMode;
use topkit::synth::default_benchmark_suite;

fn main() {
    let t0 = Instant::now();
    let corpus = default_benchmark_suite(13);
    println!("synth: {} samples in {:?}", corpus.len(), t0.elapsed());

    let dir = std::env::temp_dir().join("topkit-cell-probe");
    let _ = std::fs::remove_dir_all(&dir);
    let t = Instant::now();
    let scenarios = make_scenarios(&corpus, &[1], 0).unwrap();
    let inventories = corpus_inventories(&corpus).unwrap();
    write_manifest(&scenarios, &inventories, &dir).unwrap();
    println!("benchmark written in {:?}", t.elapsed());
    for sc in &scenarios {
        println!(
            "  {}: source={} 1spis={} test={}",
            sc.target_domain,
            sc.source.len(),
            sc.target_subsets[&1].len(),
            sc.target_test.len()
        );
    }

    let manifest = load_manifest(&dir).unwrap();
    let config = ExperimentConfig::default();
    for mode in [ParserMode::InventoryPointer, ParserMode::CopyGenerate] {
        let t = Instant::now();
        let cell = run_cell(&manifest, &config, "alarm", 1, mode, config.variant, 1).unwrap();
        println!(
            "cell alarm/1/{mode}/1: EM={:.3} n={} init_loss target={:.3} fresh={:.3} added={} in {:?}",
            cell.em, cell.n_test, cell.target_initial_loss, cell.fresh_initial_loss,
            cell.added_labels.len(), t.elapsed()
        );
    }
}
