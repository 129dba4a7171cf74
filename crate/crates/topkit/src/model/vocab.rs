//! Word-level vocabulary with reserved structural tokens.
//!
//! Ids 0..10 are fixed specials, followed by the shared index-token block
//! `1..=m_max`, then corpus words sorted lexicographically. In copy-generate
//! mode, one extra entry per ontology label (its opening token, e.g.
//! `[IN:CREATE_ALARM`) is appended; inventory-pointer mode never adds
//! label-specific entries, which is the property the pointer formulation
//! exploits for cross-domain reuse.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::frame;
use crate::inventory::{Inventory, OntologyLabel};
use crate::model::ParserMode;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SEP: usize = 4;
pub const LBRACKET: usize = 5;
pub const RBRACKET: usize = 6;
pub const PIPE: usize = 7;
pub const TYPE_INTENT: usize = 8;
pub const TYPE_SLOT: usize = 9;
pub const NUM_SPECIALS: usize = 10;

const SPECIAL_STRINGS: [&str; NUM_SPECIALS] =
    ["<pad>", "<s>", "</s>", "<unk>", "<sep>", "[", "]", "|", "intent", "slot"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    m_max: usize,
}

impl Vocabulary {
    /// Build from a corpus: reserved specials, the index-token block, then
    /// every lowercased utterance/frame-leaf word plus every span word from
    /// the given inventories. Label tokens are appended only in
    /// copy-generate mode.
    pub fn build(
        corpus: &Dataset,
        inventories: &[&Inventory],
        mode: ParserMode,
        m_max: usize,
    ) -> Vocabulary {
        let mut words: BTreeSet<String> = BTreeSet::new();
        for sample in &corpus.samples {
            for w in sample.utterance.split_whitespace() {
                words.insert(w.to_lowercase());
            }
            for w in frame::utterance_tokens(&sample.frame) {
                words.insert(w.to_lowercase());
            }
        }
        for inv in inventories {
            for c in inv.components() {
                for w in c.span.split_whitespace() {
                    words.insert(w.to_lowercase());
                }
            }
        }

        let mut tokens: Vec<String> =
            SPECIAL_STRINGS.iter().map(|s| s.to_string()).collect();
        for i in 1..=m_max {
            tokens.push(i.to_string());
        }
        let is_reserved = |w: &str| {
            SPECIAL_STRINGS.contains(&w)
                || w.parse::<usize>().map(|n| n >= 1 && n <= m_max).unwrap_or(false)
        };
        tokens.extend(words.into_iter().filter(|w| !is_reserved(w)));

        if mode == ParserMode::CopyGenerate {
            let mut labels: BTreeSet<String> = BTreeSet::new();
            for inv in inventories {
                for c in inv.components() {
                    labels.insert(format!("[{}", c.label.raw()));
                }
            }
            tokens.extend(labels);
        }

        let mut vocab = Vocabulary { tokens, index: HashMap::new(), m_max };
        vocab.rebuild_index();
        vocab
    }

    pub fn from_tokens(tokens: Vec<String>, m_max: usize) -> Vocabulary {
        let mut vocab = Vocabulary { tokens, index: HashMap::new(), m_max };
        vocab.rebuild_index();
        vocab
    }

    fn rebuild_index(&mut self) {
        self.index =
            self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Exact-match lookup (callers lowercase words themselves).
    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id_of(token).unwrap_or(UNK)
    }

    /// Id of the reserved index token for component index `i`.
    pub fn index_token_id(&self, i: usize) -> Option<usize> {
        (i >= 1 && i <= self.m_max).then(|| NUM_SPECIALS + i - 1)
    }

    /// Append missing label tokens (copy-generate adaptation); returns the
    /// tokens actually added, in id order.
    pub fn extend_with_labels(&mut self, labels: &[OntologyLabel]) -> Vec<String> {
        let mut added = Vec::new();
        let mut sorted: Vec<String> = labels.iter().map(|l| format!("[{}", l.raw())).collect();
        sorted.sort();
        for token in sorted {
            if !self.index.contains_key(&token) {
                self.index.insert(token.clone(), self.tokens.len());
                self.tokens.push(token.clone());
                added.push(token);
            }
        }
        added
    }

    /// Ids for a lowercased whitespace tokenization of free text.
    pub fn encode_words(&self, text: &str) -> Vec<usize> {
        text.split_whitespace().map(|w| self.id_or_unk(&w.to_lowercase())).collect()
    }

    /// Ids for serialized frame tokens: label openers are looked up exactly,
    /// everything else lowercased.
    pub fn encode_frame_tokens(&self, tokens: &[&str]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| {
                if t.len() > 1 && t.starts_with('[') {
                    self.id_or_unk(t)
                } else {
                    self.id_or_unk(&t.to_lowercase())
                }
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&id| self.tokens[id].clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;
    use crate::frame::parse_frame;
    use crate::inventory::build_inventory;

    fn tiny_corpus() -> Dataset {
        Dataset::new(vec![Sample::new(
            "alarm",
            "Delete my 6pm alarm",
            parse_frame("[IN:DELETE_ALARM [SL:DATE_TIME 6pm ] ]").unwrap(),
        )])
    }

    fn alarm_inventory() -> Inventory {
        let labels: Vec<OntologyLabel> = ["IN:DELETE_ALARM", "SL:DATE_TIME"]
            .iter()
            .map(|s| OntologyLabel::parse(s).unwrap())
            .collect();
        build_inventory("alarm", &labels).unwrap()
    }

    #[test]
    fn reserved_layout_is_stable() {
        let inv = alarm_inventory();
        let v = Vocabulary::build(&tiny_corpus(), &[&inv], ParserMode::InventoryPointer, 8);
        assert_eq!(v.token(PAD), "<pad>");
        assert_eq!(v.token(BOS), "<s>");
        assert_eq!(v.token(EOS), "</s>");
        assert_eq!(v.token(UNK), "<unk>");
        assert_eq!(v.token(SEP), "<sep>");
        assert_eq!(v.token(LBRACKET), "[");
        assert_eq!(v.token(RBRACKET), "]");
        assert_eq!(v.token(PIPE), "|");
        assert_eq!(v.id_of("1"), Some(NUM_SPECIALS));
        assert_eq!(v.id_of("8"), Some(NUM_SPECIALS + 7));
        assert_eq!(v.index_token_id(1), Some(NUM_SPECIALS));
        assert_eq!(v.index_token_id(9), None);
    }

    #[test]
    fn pointer_mode_has_no_label_tokens() {
        let inv = alarm_inventory();
        let v = Vocabulary::build(&tiny_corpus(), &[&inv], ParserMode::InventoryPointer, 8);
        assert_eq!(v.id_of("[IN:DELETE_ALARM"), None);
        // Span words are ordinary vocabulary entries.
        assert!(v.id_of("date").is_some());
        assert!(v.id_of("delete").is_some());
    }

    #[test]
    fn copy_generate_mode_adds_one_token_per_label() {
        let inv = alarm_inventory();
        let pointer =
            Vocabulary::build(&tiny_corpus(), &[&inv], ParserMode::InventoryPointer, 8);
        let copygen = Vocabulary::build(&tiny_corpus(), &[&inv], ParserMode::CopyGenerate, 8);
        assert_eq!(copygen.len(), pointer.len() + inv.len());
        assert!(copygen.id_of("[IN:DELETE_ALARM").is_some());
        assert!(copygen.id_of("[SL:DATE_TIME").is_some());
    }

    #[test]
    fn extension_appends_only_missing_labels() {
        let inv = alarm_inventory();
        let mut v = Vocabulary::build(&tiny_corpus(), &[&inv], ParserMode::CopyGenerate, 8);
        let before = v.len();
        let new_labels = vec![
            OntologyLabel::parse("IN:DELETE_ALARM").unwrap(),
            OntologyLabel::parse("SL:TIME_ZONE").unwrap(),
        ];
        let added = v.extend_with_labels(&new_labels);
        assert_eq!(added, vec!["[SL:TIME_ZONE".to_string()]);
        assert_eq!(v.len(), before + 1);
        assert_eq!(v.id_of("[SL:TIME_ZONE"), Some(before));
    }

    #[test]
    fn encode_lowercases_words() {
        let inv = alarm_inventory();
        let v = Vocabulary::build(&tiny_corpus(), &[&inv], ParserMode::InventoryPointer, 8);
        let ids = v.encode_words("DELETE my 6pm ALARM zzz");
        assert_eq!(ids[0], v.id_of("delete").unwrap());
        assert_eq!(ids[4], UNK);
    }
}
