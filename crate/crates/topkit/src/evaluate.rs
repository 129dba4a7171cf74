//! Prediction scoring, cross-run aggregation, and error diffs.
//!
//! Exact match compares lowercased, whitespace-normalized serializations, so
//! near-miss malformed outputs score zero without special-casing. Edit
//! scripts are token-level insert/delete alignments against the gold frame,
//! rendered with `+`/`-` prefixes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{extract_ontology, Dataset};
use crate::frame::{is_nested, Frame};
use crate::model::decode::DecodeFailure;
use crate::model::ParserMode;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("predictions ({predictions}) and golds ({golds}) differ in length")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("domain `{0}` not present in dataset")]
    UnknownDomain(String),
}

/// A decoded prediction: either a frame or a structured failure.
pub type Prediction = Result<Frame, DecodeFailure>;

/// Canonical comparison form: lowercased, single-space-joined tokens.
pub fn normalize_frame_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub index: usize,
    /// Serialized prediction, or `None` on decode failure.
    pub predicted: Option<String>,
    pub gold: String,
    pub matched: bool,
}

/// Exact-match scores for one prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_sample: Vec<SampleResult>,
    pub em: f64,
    pub n: usize,
}

impl EvalReport {
    pub fn matches(&self) -> usize {
        self.per_sample.iter().filter(|r| r.matched).count()
    }
}

/// Score predictions against golds; decode failures count as non-matches.
pub fn exact_match(predictions: &[Prediction], golds: &[Frame]) -> Result<EvalReport, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    let mut per_sample = Vec::with_capacity(golds.len());
    for (i, (pred, gold)) in predictions.iter().zip(golds).enumerate() {
        let gold_text = gold.serialize();
        let (predicted, matched) = match pred {
            Ok(frame) => {
                let text = frame.serialize();
                let matched =
                    normalize_frame_text(&text) == normalize_frame_text(&gold_text);
                (Some(text), matched)
            }
            Err(_) => (None, false),
        };
        per_sample.push(SampleResult { index: i, predicted, gold: gold_text, matched });
    }
    let n = per_sample.len();
    let em = if n == 0 {
        0.0
    } else {
        per_sample.iter().filter(|r| r.matched).count() as f64 / n as f64
    };
    Ok(EvalReport { per_sample, em, n })
}

/// One scored run, keyed for aggregation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub domain: String,
    pub k: usize,
    pub mode: ParserMode,
    pub seed: u64,
    pub em: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean_em: f64,
    pub std_em: f64,
    pub runs: usize,
}

/// Mean and population standard deviation of EM per (domain, k, mode) cell.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AggregateReport {
    pub cells: BTreeMap<(String, usize, ParserMode), CellStats>,
}

impl AggregateReport {
    pub fn get(&self, domain: &str, k: usize, mode: ParserMode) -> Option<CellStats> {
        self.cells.get(&(domain.to_string(), k, mode)).copied()
    }

    /// Render as a TSV table: one row per (domain, mode), one column per k.
    pub fn render_table(&self) -> String {
        let mut ks: Vec<usize> = self.cells.keys().map(|(_, k, _)| *k).collect();
        ks.sort_unstable();
        ks.dedup();
        let mut rows: Vec<(String, ParserMode)> =
            self.cells.keys().map(|(d, _, m)| (d.clone(), *m)).collect();
        rows.sort();
        rows.dedup();
        let mut out = String::from("domain\tmode");
        for k in &ks {
            out.push_str(&format!("\t{k}spis"));
        }
        out.push('\n');
        for (domain, mode) in rows {
            out.push_str(&format!("{domain}\t{}", mode.as_str()));
            for k in &ks {
                match self.get(&domain, *k, mode) {
                    Some(stats) => out.push_str(&format!(
                        "\t{:.2}±{:.2}",
                        stats.mean_em * 100.0,
                        stats.std_em * 100.0
                    )),
                    None => out.push_str("\t-"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Group runs by (domain, k, mode) and compute mean and population std.
pub fn aggregate(records: &[RunRecord]) -> AggregateReport {
    let mut grouped: BTreeMap<(String, usize, ParserMode), Vec<f64>> = BTreeMap::new();
    for r in records {
        grouped.entry((r.domain.clone(), r.k, r.mode)).or_default().push(r.em);
    }
    let cells = grouped
        .into_iter()
        .map(|(key, ems)| {
            let n = ems.len() as f64;
            let mean = ems.iter().sum::<f64>() / n;
            let var = ems.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
            (key, CellStats { mean_em: mean, std_em: var.sqrt(), runs: ems.len() })
        })
        .collect();
    AggregateReport { cells }
}

/// Structural characteristics of one domain's samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub domain: String,
    /// Fraction of frames with an intent nested inside a slot.
    pub compositionality: f64,
    /// Count of distinct intent and slot labels.
    pub ontology_size: usize,
    pub samples: usize,
}

pub fn domain_profile(dataset: &Dataset, domain: &str) -> Result<DomainProfile, EvalError> {
    let subset = dataset.restrict_to_domain(domain);
    if subset.is_empty() {
        return Err(EvalError::UnknownDomain(domain.to_string()));
    }
    let nested = subset.samples.iter().filter(|s| is_nested(&s.frame)).count();
    Ok(DomainProfile {
        domain: domain.to_string(),
        compositionality: nested as f64 / subset.len() as f64,
        ontology_size: extract_ontology(dataset, domain).len(),
        samples: subset.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditOp {
    Keep(String),
    Insert(String),
    Delete(String),
}

/// Minimal insert/delete script turning the prediction's token sequence into
/// the gold's. Distance counts inserts plus deletes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
    pub distance: usize,
}

impl EditScript {
    pub fn inserted(&self) -> Vec<&str> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                EditOp::Insert(t) => Some(t.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn deleted(&self) -> Vec<&str> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                EditOp::Delete(t) => Some(t.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Inline rendering: kept tokens bare, deletions `-tok`, insertions `+tok`.
    pub fn render(&self) -> String {
        self.ops
            .iter()
            .map(|op| match op {
                EditOp::Keep(t) => t.clone(),
                EditOp::Insert(t) => format!("+{t}"),
                EditOp::Delete(t) => format!("-{t}"),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Minimal edit script between two token sequences (insert/delete moves
/// only). Deterministic tie-breaking: keep > delete > insert.
pub fn token_diff(pred: &[String], gold: &[String]) -> EditScript {
    let n = pred.len();
    let m = gold.len();
    // dist[i][j]: cost to turn pred[i..] into gold[j..].
    let mut dist = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..=n).rev() {
        for j in (0..=m).rev() {
            if i == n && j == m {
                continue;
            }
            let mut best = usize::MAX;
            if i < n && j < m && pred[i] == gold[j] {
                best = best.min(dist[i + 1][j + 1]);
            }
            if i < n {
                best = best.min(dist[i + 1][j] + 1);
            }
            if j < m {
                best = best.min(dist[i][j + 1] + 1);
            }
            dist[i][j] = best;
        }
    }
    let mut ops = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    while i < n || j < m {
        if i < n && j < m && pred[i] == gold[j] && dist[i][j] == dist[i + 1][j + 1] {
            ops.push(EditOp::Keep(pred[i].clone()));
            i += 1;
            j += 1;
        } else if i < n && dist[i][j] == dist[i + 1][j] + 1 {
            ops.push(EditOp::Delete(pred[i].clone()));
            i += 1;
        } else {
            ops.push(EditOp::Insert(gold[j].clone()));
            j += 1;
        }
    }
    let distance = dist[0][0];
    EditScript { ops, distance }
}

/// Token-level edit script between two frames' serializations.
pub fn frame_diff(prediction: &Frame, gold: &Frame) -> EditScript {
    let pred: Vec<String> =
        prediction.serialize().split_whitespace().map(str::to_string).collect();
    let gold: Vec<String> = gold.serialize().split_whitespace().map(str::to_string).collect();
    token_diff(&pred, &gold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::parse_frame;
    use crate::synth::{default_benchmark_suite, default_suite_specs};

    #[test]
    fn identical_frames_match() {
        let f = parse_frame("[IN:A [SL:B x ] ]").unwrap();
        let report = exact_match(&[Ok(f.clone())], &[f]).unwrap();
        assert_eq!(report.em, 1.0);
        assert_eq!(report.n, 1);
    }

    #[test]
    fn half_match() {
        let gold1 = parse_frame("[IN:A [SL:B x ] ]").unwrap();
        let gold2 = parse_frame("[IN:A [SL:C x ] ]").unwrap();
        let pred2 = parse_frame("[IN:A [SL:D x ] ]").unwrap();
        let report =
            exact_match(&[Ok(gold1.clone()), Ok(pred2)], &[gold1, gold2]).unwrap();
        assert_eq!(report.em, 0.5);
    }

    #[test]
    fn decode_failure_scores_zero() {
        let gold = parse_frame("[IN:A ]").unwrap();
        let failure = DecodeFailure::empty_output(vec!["[".into()]);
        let report = exact_match(&[Err(failure)], &[gold]).unwrap();
        assert_eq!(report.em, 0.0);
        assert!(report.per_sample[0].predicted.is_none());
    }

    #[test]
    fn match_is_case_insensitive() {
        let gold = parse_frame("[IN:A [SL:B Lacey ] ]").unwrap();
        let pred = parse_frame("[IN:A [SL:B lacey ] ]").unwrap();
        let report = exact_match(&[Ok(pred)], &[gold]).unwrap();
        assert_eq!(report.em, 1.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let gold = parse_frame("[IN:A ]").unwrap();
        assert!(matches!(
            exact_match(&[], &[gold]),
            Err(EvalError::LengthMismatch { predictions: 0, golds: 1 })
        ));
    }

    #[test]
    fn aggregate_mean_and_population_std() {
        let records: Vec<RunRecord> = [0.4, 0.5, 0.6]
            .iter()
            .enumerate()
            .map(|(i, &em)| RunRecord {
                domain: "alarm".into(),
                k: 1,
                mode: ParserMode::InventoryPointer,
                seed: i as u64,
                em,
            })
            .collect();
        let agg = aggregate(&records);
        let stats = agg.get("alarm", 1, ParserMode::InventoryPointer).unwrap();
        assert!((stats.mean_em - 0.5).abs() < 1e-12);
        assert!((stats.std_em - 0.0816496580927726).abs() < 1e-12);
        assert_eq!(stats.runs, 3);
    }

    #[test]
    fn aggregate_single_run_std_zero() {
        let records = vec![RunRecord {
            domain: "d".into(),
            k: 2,
            mode: ParserMode::CopyGenerate,
            seed: 0,
            em: 0.7,
        }];
        let agg = aggregate(&records);
        let stats = agg.get("d", 2, ParserMode::CopyGenerate).unwrap();
        assert_eq!(stats.std_em, 0.0);
    }

    #[test]
    fn aggregate_empty_is_empty() {
        assert!(aggregate(&[]).cells.is_empty());
    }

    #[test]
    fn profiles_recover_generator_characteristics() {
        let suite = default_benchmark_suite(3);
        for spec in default_suite_specs().domains {
            let profile = domain_profile(&suite, &spec.name).unwrap();
            assert_eq!(profile.ontology_size, spec.ontology_size());
            assert!(
                (profile.compositionality - spec.nesting_rate).abs() <= 0.05,
                "domain {}: {} vs {}",
                spec.name,
                profile.compositionality,
                spec.nesting_rate
            );
        }
        assert!(matches!(
            domain_profile(&suite, "nope"),
            Err(EvalError::UnknownDomain(_))
        ));
    }

    #[test]
    fn diff_of_identical_frames_is_empty() {
        let f = parse_frame("[IN:A [SL:B x ] ]").unwrap();
        let script = frame_diff(&f, &f);
        assert_eq!(script.distance, 0);
        assert!(script.ops.iter().all(|op| matches!(op, EditOp::Keep(_))));
    }

    #[test]
    fn diff_of_missing_bracket() {
        let pred: Vec<String> =
            "[IN:A [SL:B x ]".split(' ').map(str::to_string).collect();
        let gold: Vec<String> =
            "[IN:A [SL:B x ] ]".split(' ').map(str::to_string).collect();
        let script = token_diff(&pred, &gold);
        assert_eq!(script.distance, 1);
        assert_eq!(script.inserted(), vec!["]"]);
    }

    #[test]
    fn diff_marks_wrong_slot_openers() {
        let pred = parse_frame(
            "[IN:GET_MESSAGE [SL:RECIPIENT i ] [SL:ORDINAL Tuesday ] [SL:TAG_MESSAGE Twitter ] ]",
        )
        .unwrap();
        let gold =
            parse_frame("[IN:GET_MESSAGE [SL:DATE_TIME Tuesday ] [SL:RESOURCE Twitter ] ]")
                .unwrap();
        let script = frame_diff(&pred, &gold);
        assert_eq!(script.distance, 7);
        let mut deleted = script.deleted();
        deleted.sort_unstable();
        assert_eq!(
            deleted,
            vec!["[SL:ORDINAL", "[SL:RECIPIENT", "[SL:TAG_MESSAGE", "]", "i"]
        );
        let mut inserted = script.inserted();
        inserted.sort_unstable();
        assert_eq!(inserted, vec!["[SL:DATE_TIME", "[SL:RESOURCE"]);
    }

    #[test]
    fn render_prefixes() {
        let pred: Vec<String> = vec!["a".into(), "b".into()];
        let gold: Vec<String> = vec!["a".into(), "c".into()];
        let script = token_diff(&pred, &gold);
        assert_eq!(script.render(), "a -b +c");
    }

    #[test]
    fn diff_distance_is_symmetric() {
        let a = parse_frame("[IN:A [SL:B x y ] ]").unwrap();
        let b = parse_frame("[IN:A [SL:C x ] z ]").unwrap();
        assert_eq!(frame_diff(&a, &b).distance, frame_diff(&b, &a).distance);
    }
}
