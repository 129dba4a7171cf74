//! Per-domain label inventories.
//!
//! An inventory is a table with one component per ontology label. Each
//! component carries the label's intrinsic properties: a positional index, a
//! categorical type (`intent` or `slot`), and a natural-language span derived
//! from the label name. Frames can be converted between label form and
//! index-pointer form through the inventory's injective label-index mapping.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, FrameError, FrameNode, INTENT_PREFIX, SLOT_PREFIX};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InventoryError {
    #[error("ontology label `{0}` is malformed (expected IN:NAME or SL:NAME)")]
    MalformedLabel(String),
    #[error("ontology is empty")]
    EmptyOntology,
    #[error("duplicate ontology label `{0}`")]
    DuplicateLabel(String),
    #[error("label `{label}` is not in the `{domain}` inventory")]
    UnknownLabel { label: String, domain: String },
    #[error("index {0} is not in the inventory")]
    UnknownIndex(usize),
}

/// Categorical type of an ontology label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    Intent,
    Slot,
}

impl LabelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelKind::Intent => "intent",
            LabelKind::Slot => "slot",
        }
    }
}

/// A raw ontology label such as `SL:TIME_ZONE`, with its kind decoded from
/// the prefix. Ordering is kind-major (intents first), then lexicographic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OntologyLabel {
    raw: String,
    kind: LabelKind,
}

impl OntologyLabel {
    pub fn parse(raw: &str) -> Result<Self, InventoryError> {
        let (kind, name) = if let Some(name) = raw.strip_prefix(INTENT_PREFIX) {
            (LabelKind::Intent, name)
        } else if let Some(name) = raw.strip_prefix(SLOT_PREFIX) {
            (LabelKind::Slot, name)
        } else {
            return Err(InventoryError::MalformedLabel(raw.to_string()));
        };
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(InventoryError::MalformedLabel(raw.to_string()));
        }
        Ok(OntologyLabel { raw: raw.to_string(), kind })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    /// Label name without the categorical prefix.
    pub fn name(&self) -> &str {
        &self.raw[3..]
    }
}

impl PartialOrd for OntologyLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OntologyLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.kind, &self.raw).cmp(&(other.kind, &other.raw))
    }
}

impl std::fmt::Display for OntologyLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.raw)
    }
}

impl std::str::FromStr for OntologyLabel {
    type Err = InventoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OntologyLabel::parse(s)
    }
}

/// The `(index, type, span)` tuple stored for one ontology label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryComponent {
    pub index: usize,
    pub kind: LabelKind,
    pub span: String,
    pub label: OntologyLabel,
}

/// Which intrinsic properties the linearized inventory exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InventoryVariant {
    IndexOnly,
    IndexType,
    IndexTypeSpan,
}

impl InventoryVariant {
    pub const ALL: [InventoryVariant; 3] = [
        InventoryVariant::IndexOnly,
        InventoryVariant::IndexType,
        InventoryVariant::IndexTypeSpan,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            InventoryVariant::IndexOnly => "index-only",
            InventoryVariant::IndexType => "index-type",
            InventoryVariant::IndexTypeSpan => "index-type-span",
        }
    }
}

impl std::str::FromStr for InventoryVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "index-only" | "index_only" | "index" => Ok(InventoryVariant::IndexOnly),
            "index-type" | "index_type" => Ok(InventoryVariant::IndexType),
            "index-type-span" | "index_type_span" | "full" => Ok(InventoryVariant::IndexTypeSpan),
            other => Err(format!("unknown inventory variant `{other}`")),
        }
    }
}

/// Per-domain component table. Indices run 1..=m in sorted-ontology order and
/// the label-to-index mapping is injective.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventory {
    domain: String,
    components: Vec<InventoryComponent>,
    #[serde(skip)]
    by_label: HashMap<String, usize>,
}

impl Inventory {
    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn components(&self) -> &[InventoryComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component_for_label(&self, raw_label: &str) -> Option<&InventoryComponent> {
        if let Some(&pos) = self.by_label.get(raw_label) {
            return Some(&self.components[pos]);
        }
        // Deserialized inventories have an empty cache; fall back to a scan.
        self.components.iter().find(|c| c.label.raw() == raw_label)
    }

    pub fn component_for_index(&self, index: usize) -> Option<&InventoryComponent> {
        if index >= 1 && index <= self.components.len() {
            Some(&self.components[index - 1])
        } else {
            None
        }
    }

    fn rebuild_cache(&mut self) {
        self.by_label = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| (c.label.raw().to_string(), i))
            .collect();
    }
}

/// Strip the categorical prefix, lowercase, and replace underscores with
/// single spaces: `SL:TIME_ZONE` becomes `time zone`.
pub fn derive_span(label: &OntologyLabel) -> String {
    label
        .name()
        .split('_')
        .filter(|part| !part.is_empty())
        .map(|part| part.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Build the inventory for `domain`: sort the ontology (intents before slots,
/// lexicographic within kind), assign indices 1..=m, and derive spans.
pub fn build_inventory(
    domain: &str,
    ontology: &[OntologyLabel],
) -> Result<Inventory, InventoryError> {
    if ontology.is_empty() {
        return Err(InventoryError::EmptyOntology);
    }
    let mut sorted: Vec<OntologyLabel> = ontology.to_vec();
    sorted.sort();
    for pair in sorted.windows(2) {
        if pair[0] == pair[1] {
            return Err(InventoryError::DuplicateLabel(pair[0].raw().to_string()));
        }
    }
    let components = sorted
        .into_iter()
        .enumerate()
        .map(|(i, label)| InventoryComponent {
            index: i + 1,
            kind: label.kind(),
            span: derive_span(&label),
            label,
        })
        .collect();
    let mut inv = Inventory { domain: domain.to_string(), components, by_label: HashMap::new() };
    inv.rebuild_cache();
    Ok(inv)
}

/// Render the inventory as a flat token string: each component contributes
/// `[ {index}`, then `| {type}` and `| {span}` depending on the variant.
pub fn linearize(inventory: &Inventory, variant: InventoryVariant) -> String {
    let mut out = String::new();
    for component in &inventory.components {
        if !out.is_empty() {
            out.push(' ');
        }
        write!(out, "[ {}", component.index).unwrap();
        if matches!(variant, InventoryVariant::IndexType | InventoryVariant::IndexTypeSpan) {
            write!(out, " | {}", component.kind.as_str()).unwrap();
        }
        if variant == InventoryVariant::IndexTypeSpan {
            write!(out, " | {}", component.span).unwrap();
        }
    }
    out
}

/// A frame whose intent/slot labels have been replaced by inventory indices.
/// Serializes with `[` and the index as separate tokens: `[ 1 [ 4 6pm ] ]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexNode {
    Pointer { index: usize, children: Vec<IndexNode> },
    Token(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexFrame {
    pub root: IndexNode,
}

impl IndexFrame {
    pub fn serialize(&self) -> String {
        let mut out = Vec::new();
        fn walk(node: &IndexNode, out: &mut Vec<String>) {
            match node {
                IndexNode::Token(t) => out.push(t.clone()),
                IndexNode::Pointer { index, children } => {
                    out.push("[".to_string());
                    out.push(index.to_string());
                    for child in children {
                        walk(child, out);
                    }
                    out.push("]".to_string());
                }
            }
        }
        walk(&self.root, &mut out);
        out.join(" ")
    }

    /// Parse the token form emitted by [`IndexFrame::serialize`]. Every `[`
    /// must be immediately followed by a decimal index.
    pub fn parse_tokens(tokens: &[&str]) -> Result<IndexFrame, FrameError> {
        fn parse_node(tokens: &[&str], pos: &mut usize) -> Result<IndexNode, FrameError> {
            if tokens[*pos] != "[" {
                return Err(FrameError::UnbalancedBrackets(format!(
                    "expected `[`, found `{}`",
                    tokens[*pos]
                )));
            }
            *pos += 1;
            let index: usize = tokens
                .get(*pos)
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| FrameError::LabelMissing("[".to_string()))?;
            *pos += 1;
            let mut children = Vec::new();
            loop {
                match tokens.get(*pos) {
                    None => {
                        return Err(FrameError::UnbalancedBrackets(
                            "pointer node is never closed".to_string(),
                        ))
                    }
                    Some(&"]") => {
                        *pos += 1;
                        break;
                    }
                    Some(&"[") => children.push(parse_node(tokens, pos)?),
                    Some(tok) => {
                        children.push(IndexNode::Token(tok.to_string()));
                        *pos += 1;
                    }
                }
            }
            Ok(IndexNode::Pointer { index, children })
        }

        if tokens.is_empty() {
            return Err(FrameError::EmptyFrame);
        }
        let mut pos = 0usize;
        let root = parse_node(tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(FrameError::UnbalancedBrackets(format!(
                "trailing tokens after root closes: `{}`",
                tokens[pos..].join(" ")
            )));
        }
        Ok(IndexFrame { root })
    }
}

impl std::fmt::Display for IndexFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// Replace every intent/slot label with its component index.
pub fn to_index_frame(frame: &Frame, inventory: &Inventory) -> Result<IndexFrame, InventoryError> {
    fn convert(node: &FrameNode, inventory: &Inventory) -> Result<IndexNode, InventoryError> {
        match node {
            FrameNode::Token(t) => Ok(IndexNode::Token(t.clone())),
            _ => {
                let raw = node.qualified_label().unwrap();
                let component = inventory.component_for_label(&raw).ok_or_else(|| {
                    InventoryError::UnknownLabel {
                        label: raw.clone(),
                        domain: inventory.domain().to_string(),
                    }
                })?;
                let children = node
                    .children()
                    .iter()
                    .map(|c| convert(c, inventory))
                    .collect::<Result<_, _>>()?;
                Ok(IndexNode::Pointer { index: component.index, children })
            }
        }
    }
    Ok(IndexFrame { root: convert(&frame.root, inventory)? })
}

/// Restore labels (and node kinds) from component indices; exact inverse of
/// [`to_index_frame`].
pub fn from_index_frame(
    frame: &IndexFrame,
    inventory: &Inventory,
) -> Result<Frame, InventoryError> {
    fn convert(node: &IndexNode, inventory: &Inventory) -> Result<FrameNode, InventoryError> {
        match node {
            IndexNode::Token(t) => Ok(FrameNode::Token(t.clone())),
            IndexNode::Pointer { index, children } => {
                let component = inventory
                    .component_for_index(*index)
                    .ok_or(InventoryError::UnknownIndex(*index))?;
                let children = children
                    .iter()
                    .map(|c| convert(c, inventory))
                    .collect::<Result<Vec<_>, _>>()?;
                let name = component.label.name().to_string();
                Ok(match component.kind {
                    LabelKind::Intent => FrameNode::Intent { label: name, children },
                    LabelKind::Slot => FrameNode::Slot { label: name, children },
                })
            }
        }
    }
    Ok(Frame::new(convert(&frame.root, inventory)?))
}

/// Write the inventory as a TSV of `index  type  span  raw_label`.
pub fn write_inventory_tsv(inventory: &Inventory, path: &Path) -> std::io::Result<()> {
    let mut out = String::from("index\ttype\tspan\traw_label\n");
    for c in &inventory.components {
        writeln!(out, "{}\t{}\t{}\t{}", c.index, c.kind.as_str(), c.span, c.label.raw()).unwrap();
    }
    std::fs::write(path, out)
}

/// Load an inventory previously written by [`write_inventory_tsv`].
pub fn load_inventory_tsv(domain: &str, path: &Path) -> Result<Inventory, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(format!("{}: line {} has {} fields", path.display(), i + 1, fields.len()));
        }
        labels.push(OntologyLabel::parse(fields[3]).map_err(|e| e.to_string())?);
    }
    build_inventory(domain, &labels).map_err(|e| e.to_string())
}
