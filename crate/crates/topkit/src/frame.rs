//! Bracketed intent-slot frames: parsing, serialization, validation, and
//! structural measurements.
//!
//! A frame is an ordered tree rooted at an intent node. Internal nodes are
//! intents (`[IN:NAME`) or slots (`[SL:NAME`); leaves are utterance tokens.
//! The textual form is whitespace-delimited: an opening token such as
//! `[IN:CREATE_ALARM` starts a node and a bare `]` closes it, e.g.
//! `[IN:CREATE_ALARM [SL:DATE_TIME 6pm ] ]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prefix that marks an intent label in serialized form.
pub const INTENT_PREFIX: &str = "IN:";
/// Prefix that marks a slot label in serialized form.
pub const SLOT_PREFIX: &str = "SL:";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("unbalanced brackets: {0}")]
    UnbalancedBrackets(String),
    #[error("empty frame")]
    EmptyFrame,
    #[error("root must be an intent node, found `{0}`")]
    RootNotIntent(String),
    #[error("ontology opener `{0}` is missing a label")]
    LabelMissing(String),
}

/// Node kind; token leaves carry utterance text, the other two carry labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Intent,
    Slot,
    Token,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Intent => "intent",
            NodeKind::Slot => "slot",
            NodeKind::Token => "token",
        }
    }
}

/// One node of a frame tree.
///
/// Token nodes are leaves by construction; intent and slot nodes hold the
/// bare label name (without the `IN:`/`SL:` prefix) and an ordered child list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameNode {
    Intent { label: String, children: Vec<FrameNode> },
    Slot { label: String, children: Vec<FrameNode> },
    Token(String),
}

impl FrameNode {
    pub fn intent(label: impl Into<String>, children: Vec<FrameNode>) -> Self {
        FrameNode::Intent { label: label.into(), children }
    }

    pub fn slot(label: impl Into<String>, children: Vec<FrameNode>) -> Self {
        FrameNode::Slot { label: label.into(), children }
    }

    pub fn token(text: impl Into<String>) -> Self {
        FrameNode::Token(text.into())
    }

    pub fn kind(&self) -> NodeKind {
        match self {
            FrameNode::Intent { .. } => NodeKind::Intent,
            FrameNode::Slot { .. } => NodeKind::Slot,
            FrameNode::Token(_) => NodeKind::Token,
        }
    }

    /// Bare label name for intent/slot nodes, `None` for tokens.
    pub fn label(&self) -> Option<&str> {
        match self {
            FrameNode::Intent { label, .. } | FrameNode::Slot { label, .. } => Some(label),
            FrameNode::Token(_) => None,
        }
    }

    /// Label with its categorical prefix, e.g. `IN:CREATE_ALARM`.
    pub fn qualified_label(&self) -> Option<String> {
        match self {
            FrameNode::Intent { label, .. } => Some(format!("{INTENT_PREFIX}{label}")),
            FrameNode::Slot { label, .. } => Some(format!("{SLOT_PREFIX}{label}")),
            FrameNode::Token(_) => None,
        }
    }

    pub fn children(&self) -> &[FrameNode] {
        match self {
            FrameNode::Intent { children, .. } | FrameNode::Slot { children, .. } => children,
            FrameNode::Token(_) => &[],
        }
    }
}

/// A parse tree for one utterance. Construction does not validate; use
/// [`validate_frame`] to obtain an issue report.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame {
    pub root: FrameNode,
}

impl Frame {
    pub fn new(root: FrameNode) -> Self {
        Frame { root }
    }

    pub fn serialize(&self) -> String {
        serialize_frame(self)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_frame(self)
    }

    pub fn is_nested(&self) -> bool {
        is_nested(self)
    }

    pub fn ontology_tokens(&self) -> Vec<String> {
        ontology_tokens(self)
    }
}

impl std::str::FromStr for Frame {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_frame(s)
    }
}

impl std::fmt::Display for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.serialize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IssueCode {
    RootNotIntent,
    SlotInSlot,
    IntentInIntent,
    MalformedLabel,
}

/// One validation finding, anchored by the child-index path from the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    pub path: Vec<usize>,
    pub message: String,
}

/// Advisory validation output; an empty issue list means the frame satisfies
/// every structural invariant.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

fn classify_opener(tok: &str) -> Result<(NodeKind, String), FrameError> {
    debug_assert!(tok.starts_with('['));
    let body = &tok[1..];
    if let Some(name) = body.strip_prefix(INTENT_PREFIX) {
        if name.is_empty() {
            return Err(FrameError::LabelMissing(tok.to_string()));
        }
        Ok((NodeKind::Intent, name.to_string()))
    } else if let Some(name) = body.strip_prefix(SLOT_PREFIX) {
        if name.is_empty() {
            return Err(FrameError::LabelMissing(tok.to_string()));
        }
        Ok((NodeKind::Slot, name.to_string()))
    } else {
        Err(FrameError::LabelMissing(tok.to_string()))
    }
}

/// Parse a whitespace-tokenized bracketed frame string.
///
/// Parsing is strict: malformed input is a hard error. Structural rules that
/// do not affect the tree shape (e.g. slot nesting) are left to
/// [`validate_frame`] so that model outputs remain checkable.
pub fn parse_frame(text: &str) -> Result<Frame, FrameError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(FrameError::EmptyFrame);
    }
    if !tokens[0].starts_with('[') {
        return Err(FrameError::RootNotIntent(tokens[0].to_string()));
    }
    let (kind, _) = classify_opener(tokens[0])?;
    if kind != NodeKind::Intent {
        return Err(FrameError::RootNotIntent(tokens[0].to_string()));
    }
    let mut pos = 0usize;
    let root = parse_node(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(FrameError::UnbalancedBrackets(format!(
            "trailing tokens after root closes: `{}`",
            tokens[pos..].join(" ")
        )));
    }
    Ok(Frame::new(root))
}

fn parse_node(tokens: &[&str], pos: &mut usize) -> Result<FrameNode, FrameError> {
    let opener = tokens[*pos];
    let (kind, label) = classify_opener(opener)?;
    *pos += 1;
    let mut children = Vec::new();
    loop {
        match tokens.get(*pos) {
            None => {
                return Err(FrameError::UnbalancedBrackets(format!(
                    "`{opener}` is never closed"
                )))
            }
            Some(&"]") => {
                *pos += 1;
                break;
            }
            Some(tok) if tok.starts_with('[') => children.push(parse_node(tokens, pos)?),
            Some(tok) => {
                children.push(FrameNode::Token(tok.to_string()));
                *pos += 1;
            }
        }
    }
    Ok(match kind {
        NodeKind::Intent => FrameNode::Intent { label, children },
        NodeKind::Slot => FrameNode::Slot { label, children },
        NodeKind::Token => unreachable!(),
    })
}

/// Serialize a frame to its canonical single-space-separated form.
/// Inverse of [`parse_frame`] for all parseable inputs.
pub fn serialize_frame(frame: &Frame) -> String {
    let mut out = Vec::new();
    push_tokens(&frame.root, &mut out);
    out.join(" ")
}

fn push_tokens(node: &FrameNode, out: &mut Vec<String>) {
    match node {
        FrameNode::Token(text) => out.push(text.clone()),
        _ => {
            out.push(format!("[{}", node.qualified_label().unwrap()));
            for child in node.children() {
                push_tokens(child, out);
            }
            out.push("]".to_string());
        }
    }
}

fn label_is_well_formed(label: &str) -> bool {
    !label.is_empty() && !label.contains(char::is_whitespace) && !label.contains(['[', ']'])
}

/// Check every structural invariant, reporting violations in pre-order.
/// Errors are data: this never fails, so model predictions can be audited
/// without aborting an evaluation run.
pub fn validate_frame(frame: &Frame) -> ValidationReport {
    let mut issues = Vec::new();
    if frame.root.kind() != NodeKind::Intent {
        issues.push(Issue {
            code: IssueCode::RootNotIntent,
            path: Vec::new(),
            message: format!("root is a {} node", frame.root.kind().as_str()),
        });
    }
    let mut path = Vec::new();
    walk_validate(&frame.root, &mut path, &mut issues);
    ValidationReport { issues }
}

fn walk_validate(node: &FrameNode, path: &mut Vec<usize>, issues: &mut Vec<Issue>) {
    if let Some(label) = node.label() {
        if !label_is_well_formed(label) {
            issues.push(Issue {
                code: IssueCode::MalformedLabel,
                path: path.clone(),
                message: format!("label `{label}` is empty or contains reserved characters"),
            });
        }
    }
    for (i, child) in node.children().iter().enumerate() {
        match (node.kind(), child.kind()) {
            (NodeKind::Slot, NodeKind::Slot) => {
                path.push(i);
                issues.push(Issue {
                    code: IssueCode::SlotInSlot,
                    path: path.clone(),
                    message: format!(
                        "slot `{}` nested directly inside slot `{}`",
                        child.label().unwrap_or(""),
                        node.label().unwrap_or("")
                    ),
                });
                path.pop();
            }
            (NodeKind::Intent, NodeKind::Intent) => {
                path.push(i);
                issues.push(Issue {
                    code: IssueCode::IntentInIntent,
                    path: path.clone(),
                    message: format!(
                        "intent `{}` nested directly inside intent `{}`",
                        child.label().unwrap_or(""),
                        node.label().unwrap_or("")
                    ),
                });
                path.pop();
            }
            _ => {}
        }
        path.push(i);
        walk_validate(child, path, issues);
        path.pop();
    }
}

/// True iff some slot node has an intent child (the frame is compositional).
pub fn is_nested(frame: &Frame) -> bool {
    fn walk(node: &FrameNode) -> bool {
        if node.kind() == NodeKind::Slot
            && node.children().iter().any(|c| c.kind() == NodeKind::Intent)
        {
            return true;
        }
        node.children().iter().any(walk)
    }
    walk(&frame.root)
}

/// Pre-order list of qualified intent/slot labels, duplicates preserved.
pub fn ontology_tokens(frame: &Frame) -> Vec<String> {
    fn walk(node: &FrameNode, out: &mut Vec<String>) {
        if let Some(q) = node.qualified_label() {
            out.push(q);
        }
        for child in node.children() {
            walk(child, out);
        }
    }
    let mut out = Vec::new();
    walk(&frame.root, &mut out);
    out
}

/// Utterance tokens of the frame in left-to-right order.
pub fn utterance_tokens(frame: &Frame) -> Vec<String> {
    fn walk(node: &FrameNode, out: &mut Vec<String>) {
        match node {
            FrameNode::Token(t) => out.push(t.clone()),
            _ => {
                for child in node.children() {
                    walk(child, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(&frame.root, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_frame() {
        let f = parse_frame("[IN:CREATE_ALARM [SL:DATE_TIME 6pm ] ]").unwrap();
        assert_eq!(
            f.root,
            FrameNode::intent(
                "CREATE_ALARM",
                vec![FrameNode::slot("DATE_TIME", vec![FrameNode::token("6pm")])]
            )
        );
    }

    #[test]
    fn parses_minimal_frame() {
        let f = parse_frame("[IN:GET_EVENT ]").unwrap();
        assert_eq!(f.root, FrameNode::intent("GET_EVENT", vec![]));
    }

    #[test]
    fn slot_in_slot_parses_but_fails_validation() {
        let f = parse_frame("[IN:A [SL:B [SL:C x ] ] ]").unwrap();
        let report = validate_frame(&f);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].code, IssueCode::SlotInSlot);
        assert_eq!(report.issues[0].path, vec![0, 0]);
    }

    #[test]
    fn parse_error_cases() {
        assert_eq!(parse_frame("   "), Err(FrameError::EmptyFrame));
        assert!(matches!(
            parse_frame("[IN:A [SL:B x ]"),
            Err(FrameError::UnbalancedBrackets(_))
        ));
        assert!(matches!(
            parse_frame("[IN:A ] ]"),
            Err(FrameError::UnbalancedBrackets(_))
        ));
        assert!(matches!(
            parse_frame("[SL:B x ]"),
            Err(FrameError::RootNotIntent(_))
        ));
        assert!(matches!(
            parse_frame("hello world"),
            Err(FrameError::RootNotIntent(_))
        ));
        assert!(matches!(
            parse_frame("[IN: x ]"),
            Err(FrameError::LabelMissing(_))
        ));
        assert!(matches!(
            parse_frame("[IN:A [FOO x ] ]"),
            Err(FrameError::LabelMissing(_))
        ));
    }

    #[test]
    fn serializes_round_trip() {
        let text = "[IN:CREATE_ALARM [SL:DATE_TIME 6pm ] ]";
        let f = parse_frame(text).unwrap();
        assert_eq!(serialize_frame(&f), text);
        assert_eq!(serialize_frame(&parse_frame("[IN:GET_EVENT ]").unwrap()), "[IN:GET_EVENT ]");
    }

    #[test]
    fn nested_oracle_frame_round_trips() {
        let text = "[IN:DELETE_ALARM [SL:ALARM_NAME [IN:GET_TIME [SL:DATE_TIME 6pm ] ] ] ]";
        let f = parse_frame(text).unwrap();
        assert_eq!(serialize_frame(&f), text);
        assert_eq!(parse_frame(&serialize_frame(&f)).unwrap(), f);
    }

    #[test]
    fn whitespace_normalizes_on_round_trip() {
        let messy = "  [IN:CREATE_ALARM   [SL:DATE_TIME 6pm ]\t]\n";
        let f = parse_frame(messy).unwrap();
        assert_eq!(serialize_frame(&f), "[IN:CREATE_ALARM [SL:DATE_TIME 6pm ] ]");
    }

    #[test]
    fn validates_well_formed_frame_as_empty() {
        let f = parse_frame("[IN:CREATE_ALARM [SL:ALARM_NAME morning run ] [SL:DATE_TIME 6pm ] ]")
            .unwrap();
        assert!(validate_frame(&f).is_valid());
    }

    #[test]
    fn validates_token_root() {
        let f = Frame::new(FrameNode::token("hello"));
        let report = validate_frame(&f);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].code, IssueCode::RootNotIntent);
    }

    #[test]
    fn validates_intent_in_intent() {
        let f = Frame::new(FrameNode::intent(
            "A",
            vec![FrameNode::intent("B", vec![])],
        ));
        let report = validate_frame(&f);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].code, IssueCode::IntentInIntent);
    }

    #[test]
    fn validates_malformed_label() {
        let f = Frame::new(FrameNode::intent("", vec![]));
        let report = validate_frame(&f);
        assert_eq!(report.issues[0].code, IssueCode::MalformedLabel);
    }

    #[test]
    fn nesting_detection() {
        let nested =
            parse_frame("[IN:DELETE_ALARM [SL:ALARM_NAME [IN:GET_TIME [SL:DATE_TIME 6pm ] ] ] ]")
                .unwrap();
        assert!(is_nested(&nested));
        let flat = parse_frame("[IN:CREATE_ALARM [SL:DATE_TIME 6pm ] ]").unwrap();
        assert!(!is_nested(&flat));
        assert!(!is_nested(&parse_frame("[IN:A ]").unwrap()));
    }

    #[test]
    fn ontology_tokens_preorder() {
        let f = parse_frame("[IN:DELETE_ALARM [SL:ALARM_NAME [IN:GET_TIME [SL:DATE_TIME 6pm ] ] ] ]")
            .unwrap();
        assert_eq!(
            ontology_tokens(&f),
            vec!["IN:DELETE_ALARM", "SL:ALARM_NAME", "IN:GET_TIME", "SL:DATE_TIME"]
        );
        assert_eq!(ontology_tokens(&parse_frame("[IN:A ]").unwrap()), vec!["IN:A"]);
    }

    #[test]
    fn ontology_tokens_keep_duplicates() {
        let f = parse_frame(
            "[IN:CREATE_REMINDER [SL:PERSON_REMINDED me ] [SL:TODO I have lunch plans ] \
             [SL:ATTENDEE_EVENT Derek ] [SL:DATE_TIME in two days ] [SL:DATE_TIME at 1pm ] ]",
        )
        .unwrap();
        let toks = ontology_tokens(&f);
        assert_eq!(toks.iter().filter(|t| *t == "SL:DATE_TIME").count(), 2);
    }

    #[test]
    fn utterance_tokens_in_order() {
        let f = parse_frame("[IN:A [SL:B hello there ] world ]").unwrap();
        assert_eq!(utterance_tokens(&f), vec!["hello", "there", "world"]);
    }
}
