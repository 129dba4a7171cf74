//! topkit: a desk-scale toolkit for task-oriented semantic parsing
//! experiments.
//!
//! The pipeline: build per-domain label inventories from an ontology
//! ([`inventory`]), convert hierarchical intent-slot frames ([`frame`]) to
//! index-pointer form, assemble low-resource transfer benchmarks with
//! coverage-guaranteed subsampling ([`benchmark`]), train a micro seq2seq
//! parser in inventory-pointer or copy-generate mode ([`model`]), and score
//! and diagnose predictions ([`evaluate`]). [`synth`] generates multi-domain
//! corpora so everything runs without proprietary data; [`experiment`] wires
//! the pieces into reproducible grids.

pub mod benchmark;
pub mod dataset;
pub mod evaluate;
pub mod experiment;
pub mod frame;
pub mod inventory;
pub mod model;
pub mod synth;

pub use dataset::{Dataset, Sample};
pub use frame::{parse_frame, serialize_frame, Frame, FrameNode};
pub use inventory::{build_inventory, Inventory, InventoryVariant, OntologyLabel};
pub use model::{ModelConfig, ParserMode, TrainConfig, TrainedModel};
