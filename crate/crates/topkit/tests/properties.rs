//! Property tests for the structural invariants: frame round-trips,
//! inventory bijections, SPIS coverage/monotonicity, diff minimality, and
//! aggregation statistics, each checked against an independently written
//! oracle.

use std::collections::BTreeMap;

use proptest::prelude::*;

use topkit::benchmark::{spis_scan, spis_subsample, SpisConfig};
use topkit::dataset::{Dataset, Sample};
use topkit::evaluate::{aggregate, token_diff, RunRecord};
use topkit::frame::{
    is_nested, ontology_tokens, parse_frame, serialize_frame, validate_frame, Frame, FrameNode,
    NodeKind,
};
use topkit::inventory::{
    build_inventory, from_index_frame, linearize, to_index_frame, InventoryVariant, OntologyLabel,
};
use topkit::model::ParserMode;

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

fn label_name() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[A-Z][A-Z0-9_]{0,8}").unwrap()
}

fn utterance_token() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-z0-9]{1,6}").unwrap()
}

/// A structurally valid frame: intent root, slots under intents, intents or
/// tokens under slots, tokens anywhere below an internal node.
fn valid_frame(depth: u32) -> impl Strategy<Value = Frame> {
    valid_intent(depth).prop_map(Frame::new)
}

fn valid_intent(depth: u32) -> BoxedStrategy<FrameNode> {
    if depth == 0 {
        (label_name(), proptest::collection::vec(utterance_token(), 0..3))
            .prop_map(|(label, tokens)| {
                FrameNode::intent(label, tokens.into_iter().map(FrameNode::token).collect())
            })
            .boxed()
    } else {
        let child = prop_oneof![
            utterance_token().prop_map(FrameNode::token),
            valid_slot(depth - 1),
        ];
        (label_name(), proptest::collection::vec(child, 0..4))
            .prop_map(|(label, children)| FrameNode::intent(label, children))
            .boxed()
    }
}

fn valid_slot(depth: u32) -> BoxedStrategy<FrameNode> {
    if depth == 0 {
        (label_name(), proptest::collection::vec(utterance_token(), 1..4))
            .prop_map(|(label, tokens)| {
                FrameNode::slot(label, tokens.into_iter().map(FrameNode::token).collect())
            })
            .boxed()
    } else {
        let child = prop_oneof![
            2 => utterance_token().prop_map(FrameNode::token),
            1 => valid_intent(depth - 1),
        ];
        (label_name(), proptest::collection::vec(child, 1..4))
            .prop_map(|(label, children)| FrameNode::slot(label, children))
            .boxed()
    }
}

fn ontology() -> impl Strategy<Value = Vec<OntologyLabel>> {
    proptest::collection::btree_set(
        (prop_oneof![Just("IN:"), Just("SL:")], label_name()),
        1..12,
    )
    .prop_map(|set| {
        set.into_iter()
            .map(|(prefix, name)| OntologyLabel::parse(&format!("{prefix}{name}")).unwrap())
            .collect()
    })
}

// ---------------------------------------------------------------------------
// Oracles, written independently of the implementations they check
// ---------------------------------------------------------------------------

/// Recursive validity checker: returns true iff the frame obeys every
/// structural rule, without consulting `validate_frame`.
fn brute_force_valid(frame: &Frame) -> bool {
    fn label_ok(label: &str) -> bool {
        !label.is_empty()
            && !label.contains(char::is_whitespace)
            && !label.contains('[')
            && !label.contains(']')
    }
    fn node_ok(node: &FrameNode, parent: Option<NodeKind>) -> bool {
        match node.kind() {
            NodeKind::Token => true,
            kind => {
                if !label_ok(node.label().unwrap()) {
                    return false;
                }
                if parent == Some(kind) {
                    // intent under intent or slot under slot
                    return false;
                }
                node.children().iter().all(|c| node_ok(c, Some(kind)))
            }
        }
    }
    frame.root.kind() == NodeKind::Intent && node_ok(&frame.root, None)
}

/// Nesting oracle: walks every (parent, child) edge looking for slot->intent.
fn brute_force_nested(frame: &Frame) -> bool {
    fn walk(node: &FrameNode) -> bool {
        for child in node.children() {
            if node.kind() == NodeKind::Slot && child.kind() == NodeKind::Intent {
                return true;
            }
            if walk(child) {
                return true;
            }
        }
        false
    }
    walk(&frame.root)
}

/// Levenshtein distance with insert/delete moves only, straight DP over
/// prefix lengths (the implementation works over suffixes).
fn oracle_indel_distance(a: &[String], b: &[String]) -> usize {
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for i in 0..=n {
        dp[i][0] = i;
    }
    for j in 0..=m {
        dp[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let mut best = usize::MAX;
            if a[i - 1] == b[j - 1] {
                best = dp[i - 1][j - 1];
            }
            best = best.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
            dp[i][j] = best;
        }
    }
    dp[n][m]
}

/// Welford online mean/variance, as an independent statistics oracle.
fn welford(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    (mean, (m2 / values.len() as f64).sqrt())
}

fn sample_from_tokens(labels: &[(String, bool)]) -> Sample {
    let mut iter = labels.iter();
    let (root_name, _) = iter.next().unwrap();
    let children: Vec<FrameNode> = iter
        .map(|(name, is_intent)| {
            if *is_intent {
                FrameNode::intent(name.clone(), vec![])
            } else {
                FrameNode::slot(name.clone(), vec![FrameNode::token("x")])
            }
        })
        .collect();
    Sample::new("d", "x", Frame::new(FrameNode::intent(root_name.clone(), children)))
}

fn token_dataset() -> impl Strategy<Value = Dataset> {
    let sample = proptest::collection::vec(
        (proptest::string::string_regex("[A-F]").unwrap(), any::<bool>()),
        1..4,
    )
    .prop_map(|labels| sample_from_tokens(&labels));
    proptest::collection::vec(sample, 0..40).prop_map(Dataset::new)
}

// ---------------------------------------------------------------------------
// Properties
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn frame_round_trip(frame in valid_frame(3)) {
        let text = serialize_frame(&frame);
        let reparsed = parse_frame(&text).unwrap();
        prop_assert_eq!(reparsed, frame);
    }

    #[test]
    fn corpus_string_normalization_round_trip(frame in valid_frame(3)) {
        // A serialized frame with noisy whitespace re-serializes canonically.
        let noisy = serialize_frame(&frame).replace(' ', "  ");
        let normalized: String =
            noisy.split_whitespace().collect::<Vec<_>>().join(" ");
        prop_assert_eq!(serialize_frame(&parse_frame(&noisy).unwrap()), normalized);
    }

    #[test]
    fn validate_agrees_with_brute_force(frame in valid_frame(3)) {
        prop_assert_eq!(validate_frame(&frame).is_valid(), brute_force_valid(&frame));
    }

    #[test]
    fn is_nested_agrees_with_brute_force(frame in valid_frame(4)) {
        prop_assert_eq!(is_nested(&frame), brute_force_nested(&frame));
    }

    #[test]
    fn inventory_bijection(ontology in ontology(), frame in valid_frame(2)) {
        let inventory = build_inventory("d", &ontology).unwrap();
        // Remap the random frame's labels onto inventory labels so the
        // precondition (labels covered) holds.
        let intents: Vec<&OntologyLabel> =
            ontology.iter().filter(|l| l.kind() == topkit::inventory::LabelKind::Intent).collect();
        let slots: Vec<&OntologyLabel> =
            ontology.iter().filter(|l| l.kind() == topkit::inventory::LabelKind::Slot).collect();
        prop_assume!(!intents.is_empty() && !slots.is_empty());
        fn remap(node: &FrameNode, intents: &[&OntologyLabel], slots: &[&OntologyLabel], i: &mut usize) -> FrameNode {
            *i += 1;
            match node {
                FrameNode::Token(t) => FrameNode::token(t.clone()),
                FrameNode::Intent { children, .. } => FrameNode::intent(
                    intents[*i % intents.len()].name(),
                    children.iter().map(|c| remap(c, intents, slots, i)).collect(),
                ),
                FrameNode::Slot { children, .. } => FrameNode::slot(
                    slots[*i % slots.len()].name(),
                    children.iter().map(|c| remap(c, intents, slots, i)).collect(),
                ),
            }
        }
        let mut counter = 0;
        let frame = Frame::new(remap(&frame.root, &intents, &slots, &mut counter));
        let index_frame = to_index_frame(&frame, &inventory).unwrap();
        let restored = from_index_frame(&index_frame, &inventory).unwrap();
        prop_assert_eq!(restored, frame);
    }

    #[test]
    fn inventory_injective_and_deterministic(ontology in ontology()) {
        let a = build_inventory("d", &ontology).unwrap();
        let b = build_inventory("d", &ontology).unwrap();
        prop_assert_eq!(a.components(), b.components());
        let mut seen_indices = std::collections::BTreeSet::new();
        let mut seen_labels = std::collections::BTreeSet::new();
        for (pos, c) in a.components().iter().enumerate() {
            prop_assert_eq!(c.index, pos + 1);
            prop_assert!(seen_indices.insert(c.index));
            prop_assert!(seen_labels.insert(c.label.raw().to_string()));
        }
        for variant in InventoryVariant::ALL {
            prop_assert_eq!(linearize(&a, variant), linearize(&b, variant));
        }
    }

    #[test]
    fn spis_coverage_guarantee(ds in token_dataset(), k in 1usize..11, seed in 0u64..500) {
        let subset = spis_subsample(&ds, &SpisConfig::new(k, seed));
        let count = |d: &Dataset| {
            let mut m: BTreeMap<String, usize> = BTreeMap::new();
            for s in &d.samples {
                for t in ontology_tokens(&s.frame) {
                    *m.entry(t).or_insert(0) += 1;
                }
            }
            m
        };
        let input = count(&ds);
        let output = count(&subset);
        for (token, n_t) in input {
            let kept = output.get(&token).copied().unwrap_or(0);
            prop_assert!(kept >= k.min(n_t), "token {token}: kept {kept} < min({k}, {n_t})");
        }
    }

    #[test]
    fn spis_monotone_in_k(ds in token_dataset(), k1 in 1usize..6, extra in 0usize..6, seed in 0u64..500) {
        let k2 = k1 + extra;
        let small = spis_subsample(&ds, &SpisConfig::new(k1, seed));
        let large = spis_subsample(&ds, &SpisConfig::new(k2, seed));
        // Same seed implies same scan order, so the smaller subset must be
        // a sub-multiset of the larger.
        let mut large_counts: BTreeMap<String, usize> = BTreeMap::new();
        for s in &large.samples {
            *large_counts.entry(s.frame.serialize()).or_insert(0) += 1;
        }
        for s in &small.samples {
            let slot = large_counts.entry(s.frame.serialize()).or_insert(0);
            prop_assert!(*slot > 0, "sample of k={k1} subset missing at k={k2}");
            *slot -= 1;
        }
    }

    #[test]
    fn spis_deterministic(ds in token_dataset(), k in 1usize..5, seed in 0u64..100) {
        let a = spis_subsample(&ds, &SpisConfig::new(k, seed));
        let b = spis_subsample(&ds, &SpisConfig::new(k, seed));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn scan_without_shuffle_preserves_order(ds in token_dataset(), k in 1usize..4) {
        let subset = spis_scan(&ds, k);
        let mut cursor = 0usize;
        for kept in &subset.samples {
            let pos = ds.samples[cursor..].iter().position(|s| s == kept);
            prop_assert!(pos.is_some(), "scan output out of order");
            cursor += pos.unwrap() + 1;
        }
    }

    #[test]
    fn diff_distance_matches_oracle(
        a in proptest::collection::vec(proptest::string::string_regex("[a-c]{1,2}").unwrap(), 0..30),
        b in proptest::collection::vec(proptest::string::string_regex("[a-c]{1,2}").unwrap(), 0..30),
    ) {
        let script = token_diff(&a, &b);
        prop_assert_eq!(script.distance, oracle_indel_distance(&a, &b));
        // Applying the script to `a` yields `b`.
        let mut rebuilt = Vec::new();
        for op in &script.ops {
            match op {
                topkit::evaluate::EditOp::Keep(t) | topkit::evaluate::EditOp::Insert(t) => {
                    rebuilt.push(t.clone())
                }
                topkit::evaluate::EditOp::Delete(_) => {}
            }
        }
        prop_assert_eq!(rebuilt, b);
        // Distance counts non-keep ops.
        let non_keep = script
            .ops
            .iter()
            .filter(|op| !matches!(op, topkit::evaluate::EditOp::Keep(_)))
            .count();
        prop_assert_eq!(script.distance, non_keep);
    }

    #[test]
    fn diff_symmetric_distance(a in valid_frame(2), b in valid_frame(2)) {
        let ab = topkit::evaluate::frame_diff(&a, &b);
        let ba = topkit::evaluate::frame_diff(&b, &a);
        prop_assert_eq!(ab.distance, ba.distance);
        prop_assert_eq!(topkit::evaluate::frame_diff(&a, &a).distance, 0);
    }

    #[test]
    fn aggregate_matches_streaming_oracle(ems in proptest::collection::vec(0.0f64..=1.0, 1..12)) {
        let records: Vec<RunRecord> = ems
            .iter()
            .enumerate()
            .map(|(i, &em)| RunRecord {
                domain: "d".into(),
                k: 1,
                mode: ParserMode::InventoryPointer,
                seed: i as u64,
                em,
            })
            .collect();
        let report = aggregate(&records);
        let stats = report.get("d", 1, ParserMode::InventoryPointer).unwrap();
        let (mean, std) = welford(&ems);
        prop_assert!((stats.mean_em - mean).abs() < 1e-10);
        prop_assert!((stats.std_em - std).abs() < 1e-10);
    }

    #[test]
    fn em_invariant_under_reserialization(frame in valid_frame(3)) {
        let reparsed = parse_frame(&serialize_frame(&frame)).unwrap();
        let report =
            topkit::evaluate::exact_match(&[Ok(reparsed)], &[frame]).unwrap();
        prop_assert_eq!(report.em, 1.0);
    }
}

/// Exhaustive small-world check of the nesting predicate against the oracle:
/// all frames of depth <= 3 with <= 2 children per node over a 3-label
/// alphabet.
#[test]
fn is_nested_exhaustive_small_frames() {
    fn intents(depth: u32) -> Vec<FrameNode> {
        let mut out = Vec::new();
        for label in ["A", "B"] {
            let mut child_options: Vec<FrameNode> = vec![FrameNode::token("x")];
            if depth > 0 {
                child_options.extend(slots(depth - 1));
            }
            out.push(FrameNode::intent(label, vec![]));
            for c1 in &child_options {
                out.push(FrameNode::intent(label, vec![c1.clone()]));
                for c2 in &child_options {
                    out.push(FrameNode::intent(label, vec![c1.clone(), c2.clone()]));
                }
            }
        }
        out
    }
    fn slots(depth: u32) -> Vec<FrameNode> {
        let mut out = Vec::new();
        let mut child_options: Vec<FrameNode> = vec![FrameNode::token("y")];
        if depth > 0 {
            for label in ["A", "B"] {
                child_options.push(FrameNode::intent(label, vec![FrameNode::token("z")]));
            }
        }
        for c1 in &child_options {
            out.push(FrameNode::slot("S", vec![c1.clone()]));
            for c2 in &child_options {
                out.push(FrameNode::slot("S", vec![c1.clone(), c2.clone()]));
            }
        }
        out
    }
    let mut total = 0usize;
    let mut nested_count = 0usize;
    for root in intents(3) {
        let frame = Frame::new(root);
        let expected = brute_force_nested(&frame);
        assert_eq!(is_nested(&frame), expected, "frame {}", serialize_frame(&frame));
        total += 1;
        nested_count += usize::from(expected);
    }
    assert!(total > 1000, "exhaustive set unexpectedly small: {total}");
    assert!(nested_count > 0);
}
