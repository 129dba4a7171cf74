use std::collections::BTreeMap;
use topkit::dataset::{Dataset, Sample};
use topkit::frame::parse_frame;
use topkit::inventory::{build_inventory, OntologyLabel};
use topkit::model::vocab::Vocabulary;
use topkit::model::{predict, train, ModelConfig, ParserMode, TrainConfig, TrainedModel};

fn main() {
    for mode in [ParserMode::InventoryPointer, ParserMode::CopyGenerate] {
        for lr in [1e-3, 3e-3, 1e-2] {
            let labels: Vec<OntologyLabel> = ["IN:CREATE_ALARM", "SL:DATE_TIME"]
                .iter().map(|s| OntologyLabel::parse(s).unwrap()).collect();
            let inv = build_inventory("alarm", &labels).unwrap();
            let ds = Dataset::new(vec![Sample::new(
                "alarm", "wake me at 6pm",
                parse_frame("[IN:CREATE_ALARM [SL:DATE_TIME 6pm ] ]").unwrap(),
            )]);
            let config = ModelConfig {
                mode, layers: 1, model_dim: 16, heads: 2, ffn_dim: 32, m_max: 8,
                ..ModelConfig::default()
            };
            let vocab = Vocabulary::build(&ds, &[&inv], mode, config.m_max);
            let mut model = TrainedModel::init(config, vocab).unwrap();
            let inventories = BTreeMap::from([("alarm".to_string(), inv.clone())]);
            let tc = TrainConfig { epochs: 200, batch_size: 1, learning_rate: lr, seed: 5, ..TrainConfig::default() };
            let report = train(&mut model, &ds, &inventories, &tc, "train").unwrap();
            let losses: Vec<String> = report.epoch_losses.iter().step_by(20).map(|l| format!("{l:.3}")).collect();
            let pred = predict(&model, "wake me at 6pm", &inv);
            let ok = matches!(&pred, Ok(f) if f.serialize().to_lowercase() == "[in:create_alarm [sl:date_time 6pm ] ]");
            println!("{mode} lr={lr}: target-hit={ok} losses={losses:?}");
        }
    }
}
