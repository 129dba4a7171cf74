//! Command-line entry point. Every command is deterministic given its
//! arguments and config file; errors exit nonzero with a machine-readable
//! category on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use topkit::dataset::{load_dataset, write_dataset};
use topkit::evaluate::{domain_profile, exact_match, frame_diff, Prediction};
use topkit::experiment::{
    load_manifest, render_ablation_table, run_ablation, run_grid, write_grid_outputs,
    ExperimentConfig, ExperimentError,
};
use topkit::frame::parse_frame;
use topkit::model::decode::{DecodeCause, DecodeFailure};
use topkit::model::{grad_check, ModelConfig};
use topkit::synth::{default_suite_specs, generate_suite, SuiteSpec};
use topkit::{benchmark, Sample};

#[derive(Parser)]
#[command(name = "topkit", version, about = "Task-oriented semantic parsing experiment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain corpus (TSV).
    Synth {
        /// Output directory; receives corpus.tsv and specs.toml.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 13)]
        seed: u64,
        /// Optional TOML suite spec; defaults to the built-in 4-domain suite.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Samples per domain.
        #[arg(long, default_value_t = 2500)]
        samples: usize,
    },
    /// Build the leave-one-out SPIS benchmark manifest from a corpus.
    Benchmark {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// SPIS cardinalities, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 5, 10])]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the two-stage transfer grid over a benchmark manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// Experiment TOML; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare inventory linearization variants on one domain.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        domain: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a prediction file against a gold dataset (exact match).
    Evaluate {
        /// One serialized frame per line, aligned with the gold file.
        #[arg(long)]
        pred: PathBuf,
        /// Gold TSV dataset.
        #[arg(long)]
        gold: PathBuf,
        /// Optional JSONL per-sample output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render edit-script diffs for prediction errors, sorted by distance.
    Diff {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Randomly sample this many errors for inspection.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Report per-domain compositionality and ontology size.
    Profile {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Verify training-objective gradients against finite differences.
    GradCheck {
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        #[arg(long, default_value_t = 24)]
        ffn: usize,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long, default_value_t = 250)]
        checks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct CliError {
    category: &'static str,
    message: String,
}

impl CliError {
    fn new(category: &'static str, message: impl ToString) -> Self {
        CliError { category, message: message.to_string() }
    }
}

impl From<topkit::dataset::DatasetError> for CliError {
    fn from(e: topkit::dataset::DatasetError) -> Self {
        let category = match &e {
            topkit::dataset::DatasetError::Io { .. } => "io",
            _ => "dataset",
        };
        CliError::new(category, e)
    }
}

impl From<benchmark::BenchmarkError> for CliError {
    fn from(e: benchmark::BenchmarkError) -> Self {
        let category = match &e {
            benchmark::BenchmarkError::Io { .. } => "io",
            benchmark::BenchmarkError::SingleDomainDataset => "single-domain-dataset",
            _ => "benchmark",
        };
        CliError::new(category, e)
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        let category = match &e {
            ExperimentError::Io { .. } => "io",
            ExperimentError::Config(_) => "config",
            ExperimentError::Manifest(_) => "manifest",
            ExperimentError::Model(_) => "model",
            ExperimentError::Dataset(_) => "dataset",
            ExperimentError::Eval(_) => "evaluate",
        };
        CliError::new(category, e)
    }
}

impl From<topkit::synth::SynthError> for CliError {
    fn from(e: topkit::synth::SynthError) -> Self {
        CliError::new("config", e)
    }
}

impl From<topkit::model::ModelError> for CliError {
    fn from(e: topkit::model::ModelError) -> Self {
        CliError::new("model", e)
    }
}

impl From<topkit::evaluate::EvalError> for CliError {
    fn from(e: topkit::evaluate::EvalError) -> Self {
        CliError::new("evaluate", e)
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::new("io", format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!(
                "{}",
                serde_json::json!({ "category": err.category, "message": err.message })
            );
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Synth { out, seed, spec, samples } => cmd_synth(&out, seed, spec.as_deref(), samples),
        Command::Benchmark { corpus, out, ks, seed } => cmd_benchmark(&corpus, &out, &ks, seed),
        Command::Run { manifest, config, out } => cmd_run(&manifest, config.as_deref(), &out),
        Command::Ablate { manifest, config, domain, out } => {
            cmd_ablate(&manifest, config.as_deref(), &domain, &out)
        }
        Command::Evaluate { pred, gold, out } => cmd_evaluate(&pred, &gold, out.as_deref()),
        Command::Diff { pred, gold, sample, seed } => cmd_diff(&pred, &gold, sample, seed),
        Command::Profile { corpus } => cmd_profile(&corpus),
        Command::GradCheck { layers, dim, heads, ffn, epsilon, checks, seed } => {
            cmd_grad_check(layers, dim, heads, ffn, epsilon, checks, seed)
        }
    }
}

fn load_experiment_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_error(path))?;
            Ok(ExperimentConfig::from_toml(&text)?)
        }
    }
}

fn cmd_synth(
    out: &Path,
    seed: u64,
    spec: Option<&Path>,
    samples: usize,
) -> Result<ExitCode, CliError> {
    let suite = match spec {
        None => default_suite_specs(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_error(path))?;
            SuiteSpec::from_toml(&text)?
        }
    };
    let corpus = generate_suite(&suite, samples, seed)?;
    std::fs::create_dir_all(out).map_err(io_error(out))?;
    let corpus_path = out.join("corpus.tsv");
    write_dataset(&corpus, &corpus_path)?;
    std::fs::write(out.join("specs.toml"), suite.to_toml()).map_err(io_error(out))?;
    println!(
        "wrote {} samples across {} domains to {}",
        corpus.len(),
        suite.domains.len(),
        corpus_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_benchmark(corpus: &Path, out: &Path, ks: &[usize], seed: u64) -> Result<ExitCode, CliError> {
    let dataset = load_dataset(corpus)?;
    let scenarios = benchmark::make_scenarios(&dataset, ks, seed)?;
    let inventories = benchmark::corpus_inventories(&dataset)?;
    benchmark::write_manifest(&scenarios, &inventories, out)?;
    println!(
        "wrote {} scenarios x {} subsets to {}",
        scenarios.len(),
        ks.len(),
        out.display()
    );
    print!("{}", std::fs::read_to_string(out.join("summary.tsv")).map_err(io_error(out))?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(manifest_dir: &Path, config: Option<&Path>, out: &Path) -> Result<ExitCode, CliError> {
    let manifest = load_manifest(manifest_dir)?;
    let config = load_experiment_config(config)?;
    let outcome = run_grid(&manifest, &config)?;
    write_grid_outputs(&manifest, &config, &outcome, out)?;
    print!("{}", outcome.aggregate.render_table());
    println!("outputs under {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_ablate(
    manifest_dir: &Path,
    config: Option<&Path>,
    domain: &str,
    out: &Path,
) -> Result<ExitCode, CliError> {
    let manifest = load_manifest(manifest_dir)?;
    let config = load_experiment_config(config)?;
    let outcomes = run_ablation(&manifest, &config, domain)?;
    std::fs::create_dir_all(out).map_err(io_error(out))?;
    let table = render_ablation_table(&outcomes);
    std::fs::write(out.join("ablation.tsv"), &table).map_err(io_error(out))?;
    let mut rows = String::new();
    for cell in &outcomes {
        rows.push_str(&serde_json::to_string(cell).map_err(|e| CliError::new("io", e))?);
        rows.push('\n');
    }
    std::fs::write(out.join("cells.jsonl"), rows).map_err(io_error(out))?;
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

/// Read a prediction file: one serialized frame per line; unparseable lines
/// become decode failures.
fn load_predictions(path: &Path) -> Result<Vec<Prediction>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    Ok(text
        .lines()
        .map(|line| {
            parse_frame(line).map_err(|e| DecodeFailure {
                tokens: line.split_whitespace().map(str::to_string).collect(),
                cause: DecodeCause::Parse(e.to_string()),
            })
        })
        .collect())
}

fn cmd_evaluate(pred: &Path, gold: &Path, out: Option<&Path>) -> Result<ExitCode, CliError> {
    let predictions = load_predictions(pred)?;
    let gold_ds = load_dataset(gold)?;
    let golds: Vec<_> = gold_ds.samples.iter().map(|s| s.frame.clone()).collect();
    let report = exact_match(&predictions, &golds)?;
    println!("em={:.4} matches={} n={}", report.em, report.matches(), report.n);
    if let Some(out) = out {
        let mut text = String::new();
        for row in &report.per_sample {
            text.push_str(&serde_json::to_string(row).map_err(|e| CliError::new("io", e))?);
            text.push('\n');
        }
        std::fs::write(out, text).map_err(io_error(out))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_diff(pred: &Path, gold: &Path, sample: Option<usize>, seed: u64) -> Result<ExitCode, CliError> {
    let predictions = load_predictions(pred)?;
    let gold_ds = load_dataset(gold)?;
    if predictions.len() != gold_ds.len() {
        return Err(CliError::new(
            "evaluate",
            format!("{} predictions vs {} golds", predictions.len(), gold_ds.len()),
        ));
    }
    struct ErrorRow {
        index: usize,
        utterance: String,
        rendered: String,
        distance: usize,
    }
    let mut errors = Vec::new();
    for (i, (pred, Sample { utterance, frame: gold, .. })) in
        predictions.iter().zip(&gold_ds.samples).enumerate()
    {
        match pred {
            Ok(frame) => {
                let script = frame_diff(frame, gold);
                if script.distance > 0 {
                    errors.push(ErrorRow {
                        index: i,
                        utterance: utterance.clone(),
                        rendered: script.render(),
                        distance: script.distance,
                    });
                }
            }
            Err(failure) => errors.push(ErrorRow {
                index: i,
                utterance: utterance.clone(),
                rendered: format!("decode-failure: {}", failure.tokens.join(" ")),
                distance: usize::MAX,
            }),
        }
    }
    if errors.is_empty() {
        println!("0 errors");
        return Ok(ExitCode::SUCCESS);
    }
    if let Some(n) = sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        errors.shuffle(&mut rng);
        errors.truncate(n);
    }
    errors.sort_by_key(|e| (e.distance, e.index));
    println!("{} errors", errors.len());
    for row in &errors {
        let distance = if row.distance == usize::MAX {
            "decode-failure".to_string()
        } else {
            row.distance.to_string()
        };
        println!("# sample {} distance {}: {}", row.index, distance, row.utterance);
        println!("{}", row.rendered);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_profile(corpus: &Path) -> Result<ExitCode, CliError> {
    let dataset = load_dataset(corpus)?;
    println!("domain\tcompositionality\tontology_size\tsamples");
    for domain in dataset.domains() {
        let p = domain_profile(&dataset, &domain)?;
        println!("{}\t{:.3}\t{}\t{}", p.domain, p.compositionality, p.ontology_size, p.samples);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_grad_check(
    layers: usize,
    dim: usize,
    heads: usize,
    ffn: usize,
    epsilon: f64,
    checks: usize,
    seed: u64,
) -> Result<ExitCode, CliError> {
    let labels: Vec<topkit::OntologyLabel> = ["IN:CREATE_ALARM", "IN:GET_TIME", "SL:ALARM_NAME", "SL:DATE_TIME"]
        .iter()
        .map(|s| topkit::OntologyLabel::parse(s).expect("static labels parse"))
        .collect();
    let inventory = topkit::build_inventory("alarm", &labels)
        .expect("static inventory builds");
    let sample = Sample::new(
        "alarm",
        "wake me up at 6 pm tomorrow",
        parse_frame("[IN:CREATE_ALARM [SL:DATE_TIME 6 pm tomorrow ] ]").expect("static frame"),
    );
    let config = ModelConfig {
        layers,
        model_dim: dim,
        heads,
        ffn_dim: ffn,
        m_max: 8,
        seed,
        ..ModelConfig::default()
    };
    let report = grad_check(&config, &sample, &inventory, epsilon, checks, seed)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::new("io", e))?);
    if report.valid && report.max_rel_error < 1e-4 {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(CliError::new(
            "grad-check",
            format!(
                "gradient check failed: valid={} max_rel_error={}",
                report.valid, report.max_rel_error
            ),
        ))
    }
}
