//! Corpus loading and persistence.
//!
//! Corpora are stored one sample per line as `domain<TAB>utterance<TAB>frame`
//! (UTF-8, LF line endings). This mirrors the common distribution format of
//! task-oriented parsing datasets so externally prepared files drop in
//! directly.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{self, Frame, FrameError};
use crate::inventory::OntologyLabel;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    BadFieldCount { line: usize, found: usize },
    #[error("line {line}: frame parse failed: {source}")]
    FrameParse {
        line: usize,
        #[source]
        source: FrameError,
    },
}

/// One `(domain, utterance, frame)` triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub domain: String,
    pub utterance: String,
    pub frame: Frame,
}

impl Sample {
    pub fn new(domain: impl Into<String>, utterance: impl Into<String>, frame: Frame) -> Self {
        Sample { domain: domain.into(), utterance: utterance.into(), frame }
    }

    /// Frame leaf tokens that do not occur in the utterance (both sides
    /// lowercased). Non-empty output is a data-quality warning, not an error.
    pub fn uncovered_frame_tokens(&self) -> Vec<String> {
        let utterance: BTreeSet<String> =
            self.utterance.split_whitespace().map(|t| t.to_lowercase()).collect();
        frame::utterance_tokens(&self.frame)
            .into_iter()
            .map(|t| t.to_lowercase())
            .filter(|t| !utterance.contains(t))
            .collect()
    }
}

/// An ordered corpus. Order is significant: subsampling shuffles are seeded
/// relative to it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Dataset { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct domains in first-occurrence order.
    pub fn domains(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for s in &self.samples {
            if seen.insert(s.domain.clone()) {
                out.push(s.domain.clone());
            }
        }
        out
    }

    /// Samples whose domain matches, preserving order.
    pub fn restrict_to_domain(&self, domain: &str) -> Dataset {
        Dataset::new(self.samples.iter().filter(|s| s.domain == domain).cloned().collect())
    }

    /// Samples whose domain differs, preserving order.
    pub fn exclude_domain(&self, domain: &str) -> Dataset {
        Dataset::new(self.samples.iter().filter(|s| s.domain != domain).cloned().collect())
    }
}

/// Load a TSV corpus. Every line must have exactly three tab-separated
/// fields; frames are parsed strictly and errors carry the 1-based line
/// number.
pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(DatasetError::BadFieldCount { line: lineno, found: fields.len() });
        }
        let frame = frame::parse_frame(fields[2])
            .map_err(|source| DatasetError::FrameParse { line: lineno, source })?;
        samples.push(Sample::new(fields[0], fields[1], frame));
    }
    Ok(Dataset::new(samples))
}

/// Write a corpus in the TSV format read by [`load_dataset`].
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io { path: path.display().to_string(), source };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    for sample in &dataset.samples {
        writeln!(file, "{}\t{}\t{}", sample.domain, sample.utterance, sample.frame.serialize())
            .map_err(io_err)?;
    }
    Ok(())
}

/// The set of ontology labels appearing in the domain's frames.
pub fn extract_ontology(dataset: &Dataset, domain: &str) -> BTreeSet<OntologyLabel> {
    let mut out = BTreeSet::new();
    for sample in &dataset.samples {
        if sample.domain != domain {
            continue;
        }
        for raw in frame::ontology_tokens(&sample.frame) {
            if let Ok(label) = OntologyLabel::parse(&raw) {
                out.insert(label);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::parse_frame;

    fn tmp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("topkit-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn loads_single_line() {
        let path = tmp_path("one.tsv");
        std::fs::write(
            &path,
            "alarm\tDelete my 6pm alarm\t[IN:DELETE_ALARM [SL:DATE_TIME 6pm ] ]\n",
        )
        .unwrap();
        let ds = load_dataset(&path).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.samples[0].domain, "alarm");
        assert_eq!(ds.samples[0].utterance, "Delete my 6pm alarm");
        assert_eq!(
            ds.samples[0].frame,
            parse_frame("[IN:DELETE_ALARM [SL:DATE_TIME 6pm ] ]").unwrap()
        );
    }

    #[test]
    fn loads_empty_file() {
        let path = tmp_path("empty.tsv");
        std::fs::write(&path, "").unwrap();
        assert!(load_dataset(&path).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_field_count() {
        let path = tmp_path("bad.tsv");
        std::fs::write(&path, "alarm\tonly two fields\n").unwrap();
        match load_dataset(&path) {
            Err(DatasetError::BadFieldCount { line: 1, found: 2 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn frame_errors_carry_line_numbers() {
        let path = tmp_path("badframe.tsv");
        std::fs::write(&path, "a\tx\t[IN:A ]\nb\ty\t[IN:B\n").unwrap();
        match load_dataset(&path) {
            Err(DatasetError::FrameParse { line: 2, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn round_trips_three_samples() {
        let path = tmp_path("rt.tsv");
        let ds = Dataset::new(vec![
            Sample::new("a", "set an alarm", parse_frame("[IN:CREATE_ALARM ]").unwrap()),
            Sample::new(
                "a",
                "delete my 6pm alarm",
                parse_frame("[IN:DELETE_ALARM [SL:DATE_TIME 6pm ] ]").unwrap(),
            ),
            Sample::new(
                "r",
                "remind me about lunch plans with Derek",
                parse_frame(
                    "[IN:CREATE_REMINDER [SL:TODO [IN:GET_TODO [SL:TODO lunch plans ] \
                     [SL:ATTENDEE Derek ] ] ] ]",
                )
                .unwrap(),
            ),
        ]);
        write_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);
        // Byte-identical on a second write.
        let first = std::fs::read(&path).unwrap();
        write_dataset(&load_dataset(&path).unwrap(), &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn writes_empty_dataset() {
        let path = tmp_path("empty_out.tsv");
        write_dataset(&Dataset::default(), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    }

    #[test]
    fn extracts_ontology() {
        let ds = Dataset::new(vec![
            Sample::new(
                "alarm",
                "u1",
                parse_frame("[IN:CREATE_ALARM [SL:ALARM_NAME x ] [SL:DATE_TIME 6pm ] ]").unwrap(),
            ),
            Sample::new(
                "alarm",
                "u2",
                parse_frame("[IN:UPDATE_ALARM [SL:DATE_TIME 7am ] [SL:TIME_ZONE est ] ]").unwrap(),
            ),
            Sample::new("other", "u3", parse_frame("[IN:FOO ]").unwrap()),
        ]);
        let labels: Vec<String> =
            extract_ontology(&ds, "alarm").iter().map(|l| l.raw().to_string()).collect();
        assert_eq!(
            labels,
            vec!["IN:CREATE_ALARM", "IN:UPDATE_ALARM", "SL:ALARM_NAME", "SL:DATE_TIME", "SL:TIME_ZONE"]
        );
        assert!(extract_ontology(&ds, "missing").is_empty());
    }

    #[test]
    fn uncovered_tokens_warns() {
        let s = Sample::new(
            "a",
            "Delete my 6pm alarm",
            parse_frame("[IN:DELETE_ALARM [SL:DATE_TIME 6pm ] [SL:ALARM_NAME gym ] ]").unwrap(),
        );
        assert_eq!(s.uncovered_frame_tokens(), vec!["gym"]);
    }
}
