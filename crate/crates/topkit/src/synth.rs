//! Synthetic multi-domain corpus generation.
//!
//! Utterances are realized from carrier templates whose holes name declared
//! slots; the frame is assembled from the same fillers, so every generated
//! sample is parseable and token-consistent by construction. A slot marked
//! nestable can embed a resolver sub-intent, producing compositional frames
//! at a configurable rate.
//!
//! Domain specs load from TOML (see `DomainSpec` field docs and the repo
//! README for the schema).

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Sample};
use crate::frame::{Frame, FrameNode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid domain spec `{domain}`: {reason}")]
    InvalidSpec { domain: String, reason: String },
    #[error("spec file: {0}")]
    SpecFile(String),
}

/// One carrier template bound to the intent it realizes. Holes are written
/// `{SLOT_NAME}` and must name a declared slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarrierTemplate {
    pub intent: String,
    pub text: String,
}

/// How a nestable slot embeds a sub-intent: the slot's content becomes
/// `[IN:intent [SL:inner_slot <filler> ] ]` instead of a plain filler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedSlotSpec {
    pub intent: String,
    pub inner_slot: String,
}

/// Declarative description of one synthetic domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    /// Bare intent names (serialized with the `IN:` prefix).
    pub intents: Vec<String>,
    /// Bare slot names (serialized with the `SL:` prefix).
    pub slots: Vec<String>,
    /// Filler phrases per slot; phrases may span several tokens.
    pub slot_fillers: BTreeMap<String, Vec<String>>,
    /// Carrier templates with `{SLOT}` holes.
    pub templates: Vec<CarrierTemplate>,
    /// Nesting recipe per nestable slot.
    #[serde(default)]
    pub nested: BTreeMap<String, NestedSlotSpec>,
    /// Probability that a generated frame contains one nested slot.
    pub nesting_rate: f64,
}

/// A list of domain specs as stored in a TOML spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub domains: Vec<DomainSpec>,
}

impl SuiteSpec {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let suite: SuiteSpec =
            toml::from_str(text).map_err(|e| SynthError::SpecFile(e.to_string()))?;
        for spec in &suite.domains {
            spec.validate()?;
        }
        Ok(suite)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("suite spec serializes")
    }
}

fn template_holes(text: &str) -> Vec<String> {
    let mut holes = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let Some(end) = rest[start..].find('}') else { break };
        holes.push(rest[start + 1..start + end].to_string());
        rest = &rest[start + end + 1..];
    }
    holes
}

impl DomainSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |reason: String| SynthError::InvalidSpec { domain: self.name.clone(), reason };
        if self.name.is_empty() {
            return Err(err("domain name is empty".into()));
        }
        if self.intents.is_empty() {
            return Err(err("at least one intent is required".into()));
        }
        if !(0.0..=1.0).contains(&self.nesting_rate) {
            return Err(err(format!("nesting_rate {} outside [0, 1]", self.nesting_rate)));
        }
        if self.templates.is_empty() {
            return Err(err("at least one carrier template is required".into()));
        }
        let slots: BTreeSet<&String> = self.slots.iter().collect();
        let intents: BTreeSet<&String> = self.intents.iter().collect();
        for t in &self.templates {
            if !intents.contains(&t.intent) {
                return Err(err(format!("template intent `{}` is not declared", t.intent)));
            }
            for hole in template_holes(&t.text) {
                if !slots.contains(&hole) {
                    return Err(err(format!("template hole `{{{hole}}}` names no declared slot")));
                }
                if self.fillers_for(&hole).is_empty() {
                    return Err(err(format!("slot `{hole}` has no fillers")));
                }
            }
        }
        for (slot, nested) in &self.nested {
            if !slots.contains(slot) {
                return Err(err(format!("nested slot `{slot}` is not declared")));
            }
            if !intents.contains(&nested.intent) {
                return Err(err(format!("nested intent `{}` is not declared", nested.intent)));
            }
            if !slots.contains(&nested.inner_slot) {
                return Err(err(format!("inner slot `{}` is not declared", nested.inner_slot)));
            }
            if self.fillers_for(&nested.inner_slot).is_empty() {
                return Err(err(format!("inner slot `{}` has no fillers", nested.inner_slot)));
            }
        }
        if self.nesting_rate > 0.0 && !self.templates.iter().any(|t| self.template_can_nest(t)) {
            return Err(err("nesting_rate > 0 but no template has a nestable hole".into()));
        }
        Ok(())
    }

    fn fillers_for(&self, slot: &str) -> &[String] {
        self.slot_fillers.get(slot).map(Vec::as_slice).unwrap_or(&[])
    }

    fn template_can_nest(&self, template: &CarrierTemplate) -> bool {
        template_holes(&template.text).iter().any(|h| self.nested.contains_key(h))
    }

    /// Count of distinct ontology labels (intents + slots).
    pub fn ontology_size(&self) -> usize {
        self.intents.len() + self.slots.len()
    }
}

/// Generate `n` samples from one spec. Deterministic given the seed; the
/// realized fraction of nested frames concentrates on `nesting_rate`.
pub fn generate_domain(spec: &DomainSpec, n: usize, seed: u64) -> Result<Dataset, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nestable_templates: Vec<&CarrierTemplate> =
        spec.templates.iter().filter(|t| spec.template_can_nest(t)).collect();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let nest_this = spec.nesting_rate > 0.0 && rng.random_bool(spec.nesting_rate);
        let template = if nest_this {
            *nestable_templates.choose(&mut rng).unwrap()
        } else {
            spec.templates.choose(&mut rng).unwrap()
        };
        samples.push(realize(spec, template, nest_this, &mut rng));
    }
    Ok(Dataset::new(samples))
}

fn realize(
    spec: &DomainSpec,
    template: &CarrierTemplate,
    nest_this: bool,
    rng: &mut ChaCha8Rng,
) -> Sample {
    let holes = template_holes(&template.text);
    let nestable_positions: Vec<usize> =
        holes.iter().enumerate().filter(|(_, h)| spec.nested.contains_key(*h)).map(|(i, _)| i).collect();
    let nest_at = if nest_this && !nestable_positions.is_empty() {
        Some(*nestable_positions.choose(rng).unwrap())
    } else {
        None
    };

    let mut utterance = Vec::new();
    let mut children = Vec::new();
    let mut rest = template.text.as_str();
    let mut hole_idx = 0usize;
    while let Some(start) = rest.find('{') {
        let end = rest[start..].find('}').unwrap() + start;
        utterance.extend(rest[..start].split_whitespace().map(str::to_string));
        let slot = &rest[start + 1..end];
        let (node, filler_tokens) = fill_slot(spec, slot, nest_at == Some(hole_idx), rng);
        utterance.extend(filler_tokens);
        children.push(node);
        rest = &rest[end + 1..];
        hole_idx += 1;
    }
    utterance.extend(rest.split_whitespace().map(str::to_string));

    let frame = Frame::new(FrameNode::intent(template.intent.clone(), children));
    Sample::new(spec.name.clone(), utterance.join(" "), frame)
}

fn fill_slot(
    spec: &DomainSpec,
    slot: &str,
    nest: bool,
    rng: &mut ChaCha8Rng,
) -> (FrameNode, Vec<String>) {
    if nest {
        let recipe = &spec.nested[slot];
        let filler = spec.fillers_for(&recipe.inner_slot).choose(rng).unwrap().clone();
        let tokens: Vec<String> = filler.split_whitespace().map(str::to_string).collect();
        let inner = FrameNode::slot(
            recipe.inner_slot.clone(),
            tokens.iter().cloned().map(FrameNode::token).collect(),
        );
        let sub = FrameNode::intent(recipe.intent.clone(), vec![inner]);
        (FrameNode::slot(slot.to_string(), vec![sub]), tokens)
    } else {
        let filler = spec.fillers_for(slot).choose(rng).unwrap().clone();
        let tokens: Vec<String> = filler.split_whitespace().map(str::to_string).collect();
        let node = FrameNode::slot(
            slot.to_string(),
            tokens.iter().cloned().map(FrameNode::token).collect(),
        );
        (node, tokens)
    }
}

fn strs(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn templates(items: &[(&str, &str)]) -> Vec<CarrierTemplate> {
    items
        .iter()
        .map(|(intent, text)| CarrierTemplate { intent: intent.to_string(), text: text.to_string() })
        .collect()
}

// Filler pools shared across domains so cross-domain transfer has lexical
// overlap to exploit.
const DATE_TIMES: &[&str] = &[
    "6 pm", "7 am", "noon", "midnight", "tonight", "tomorrow morning", "next friday",
    "this weekend", "sunday evening", "in two hours", "next summer", "march third",
    "8 30 pm", "at 1 pm", "in ten minutes", "for today",
];
const PERSONS: &[&str] = &[
    "derek", "lacey", "candy", "mom", "alice", "my boss", "grandma", "jake", "the team",
    "dr smith",
];
const PLACES: &[&str] = &[
    "boston", "florida", "home", "the office", "the gym", "downtown", "letchworth",
    "menlo park", "thailand", "the airport",
];
const EVENT_NAMES: &[&str] = &[
    "morning run", "lunch plans", "team sync", "baby shower", "yoga class", "piano lesson",
    "standup", "book club", "movie night", "rescue fundraiser",
];
const MESSAGES: &[&str] = &[
    "running late", "on my way", "see you soon", "call me back", "happy birthday",
    "meeting moved to noon", "dinner is ready", "pick up milk",
];
const DURATIONS: &[&str] =
    &["ten minutes", "an hour", "30 seconds", "two hours", "45 minutes", "five minutes"];

fn alarm_spec() -> DomainSpec {
    DomainSpec {
        name: "alarm".into(),
        intents: strs(&["CREATE_ALARM", "DELETE_ALARM", "GET_TIME"]),
        slots: strs(&["ALARM_NAME", "DATE_TIME"]),
        slot_fillers: BTreeMap::from([
            ("ALARM_NAME".to_string(), strs(EVENT_NAMES)),
            ("DATE_TIME".to_string(), strs(DATE_TIMES)),
        ]),
        templates: templates(&[
            ("CREATE_ALARM", "set an alarm for {DATE_TIME}"),
            ("CREATE_ALARM", "wake me up {DATE_TIME} please"),
            ("CREATE_ALARM", "create a {ALARM_NAME} alarm"),
            ("CREATE_ALARM", "make an alarm called {ALARM_NAME} for {DATE_TIME}"),
            ("DELETE_ALARM", "delete my {DATE_TIME} alarm"),
            ("DELETE_ALARM", "cancel the {ALARM_NAME} alarm"),
            ("DELETE_ALARM", "remove the alarm set for {DATE_TIME}"),
            ("GET_TIME", "what time is it"),
            ("GET_TIME", "tell me the current time"),
        ]),
        nested: BTreeMap::from([(
            "ALARM_NAME".to_string(),
            NestedSlotSpec { intent: "GET_TIME".into(), inner_slot: "DATE_TIME".into() },
        )]),
        nesting_rate: 0.2,
    }
}

fn timer_spec() -> DomainSpec {
    DomainSpec {
        name: "timer".into(),
        intents: strs(&["CREATE_TIMER", "PAUSE_TIMER", "RESUME_TIMER", "DELETE_TIMER"]),
        slots: strs(&["DURATION", "METHOD_TIMER", "DATE_TIME"]),
        slot_fillers: BTreeMap::from([
            ("DURATION".to_string(), strs(DURATIONS)),
            ("METHOD_TIMER".to_string(), strs(&["timer", "stopwatch", "countdown"])),
            ("DATE_TIME".to_string(), strs(DATE_TIMES)),
        ]),
        templates: templates(&[
            ("CREATE_TIMER", "set a {METHOD_TIMER} for {DURATION}"),
            ("CREATE_TIMER", "create a {DURATION} {METHOD_TIMER}"),
            ("CREATE_TIMER", "set a {METHOD_TIMER} going off {DATE_TIME}"),
            ("PAUSE_TIMER", "pause the {METHOD_TIMER}"),
            ("PAUSE_TIMER", "hold my {METHOD_TIMER} for {DURATION}"),
            ("RESUME_TIMER", "resume the {METHOD_TIMER}"),
            ("RESUME_TIMER", "restart my {METHOD_TIMER} now"),
            ("DELETE_TIMER", "delete the {METHOD_TIMER}"),
            ("DELETE_TIMER", "stop the {METHOD_TIMER}"),
            ("DELETE_TIMER", "cancel the {DURATION} {METHOD_TIMER}"),
        ]),
        nested: BTreeMap::new(),
        nesting_rate: 0.0,
    }
}

fn event_spec() -> DomainSpec {
    DomainSpec {
        name: "event".into(),
        intents: strs(&["GET_EVENT", "CREATE_EVENT", "DELETE_EVENT", "GET_LOCATION"]),
        slots: strs(&[
            "CATEGORY_EVENT",
            "DATE_TIME",
            "LOCATION",
            "ATTENDEE",
            "NAME_EVENT",
            "POINT_ON_MAP",
            "ORGANIZER",
            "ORDINAL",
        ]),
        slot_fillers: BTreeMap::from([
            ("CATEGORY_EVENT".to_string(), strs(&["activities", "concerts", "festivals", "markets", "workshops"])),
            ("DATE_TIME".to_string(), strs(DATE_TIMES)),
            ("LOCATION".to_string(), strs(PLACES)),
            ("ATTENDEE".to_string(), strs(PERSONS)),
            ("NAME_EVENT".to_string(), strs(EVENT_NAMES)),
            ("POINT_ON_MAP".to_string(), strs(PLACES)),
            ("ORGANIZER".to_string(), strs(PERSONS)),
            ("ORDINAL".to_string(), strs(&["first", "second", "third", "last"])),
        ]),
        templates: templates(&[
            ("GET_EVENT", "find {CATEGORY_EVENT} in {LOCATION} {DATE_TIME}"),
            ("GET_EVENT", "get me {CATEGORY_EVENT} near {LOCATION}"),
            ("GET_EVENT", "show me the {ORDINAL} {CATEGORY_EVENT} {DATE_TIME}"),
            ("GET_EVENT", "what is happening at {LOCATION} {DATE_TIME}"),
            ("CREATE_EVENT", "create {NAME_EVENT} on my calendar {DATE_TIME}"),
            ("CREATE_EVENT", "schedule {NAME_EVENT} with {ATTENDEE} {DATE_TIME}"),
            ("CREATE_EVENT", "plan {NAME_EVENT} organized by {ORGANIZER} at {LOCATION}"),
            ("DELETE_EVENT", "delete {NAME_EVENT} {DATE_TIME}"),
            ("DELETE_EVENT", "drop the {NAME_EVENT} from my calendar"),
            ("GET_LOCATION", "where is {POINT_ON_MAP}"),
            ("GET_LOCATION", "get the location of {POINT_ON_MAP}"),
        ]),
        nested: BTreeMap::from([(
            "LOCATION".to_string(),
            NestedSlotSpec { intent: "GET_LOCATION".into(), inner_slot: "POINT_ON_MAP".into() },
        )]),
        nesting_rate: 0.1,
    }
}

fn messaging_spec() -> DomainSpec {
    DomainSpec {
        name: "messaging".into(),
        intents: strs(&[
            "SEND_MESSAGE",
            "GET_MESSAGE",
            "DELETE_MESSAGE",
            "REPLY_MESSAGE",
            "GET_CONTACT",
        ]),
        slots: strs(&[
            "RECIPIENT",
            "SENDER",
            "CONTENT_EXACT",
            "DATE_TIME",
            "RESOURCE",
            "TYPE_CONTENT",
            "GROUP",
            "CONTACT_RELATED",
            "ORDINAL",
        ]),
        slot_fillers: BTreeMap::from([
            ("RECIPIENT".to_string(), strs(PERSONS)),
            ("SENDER".to_string(), strs(PERSONS)),
            ("CONTENT_EXACT".to_string(), strs(MESSAGES)),
            ("DATE_TIME".to_string(), strs(DATE_TIMES)),
            ("RESOURCE".to_string(), strs(&["twitter", "email", "chat", "instagram"])),
            ("TYPE_CONTENT".to_string(), strs(&["video", "photo", "voice note", "link"])),
            ("GROUP".to_string(), strs(&["family", "work friends", "book club", "the team"])),
            ("CONTACT_RELATED".to_string(), strs(PERSONS)),
            ("ORDINAL".to_string(), strs(&["first", "second", "third", "last"])),
        ]),
        templates: templates(&[
            ("SEND_MESSAGE", "message {RECIPIENT} saying {CONTENT_EXACT}"),
            ("SEND_MESSAGE", "send a {TYPE_CONTENT} to {RECIPIENT}"),
            ("SEND_MESSAGE", "text {GROUP} that {CONTENT_EXACT}"),
            ("SEND_MESSAGE", "tell {RECIPIENT} {CONTENT_EXACT} over {RESOURCE}"),
            ("GET_MESSAGE", "did i get any messages {DATE_TIME} on {RESOURCE}"),
            ("GET_MESSAGE", "read the {ORDINAL} message from {SENDER}"),
            ("GET_MESSAGE", "show messages from {SENDER} {DATE_TIME}"),
            ("DELETE_MESSAGE", "delete the {ORDINAL} message from {SENDER}"),
            ("DELETE_MESSAGE", "remove my {TYPE_CONTENT} sent to {RECIPIENT}"),
            ("REPLY_MESSAGE", "reply to {SENDER} with {CONTENT_EXACT}"),
            ("REPLY_MESSAGE", "answer {SENDER} on {RESOURCE} saying {CONTENT_EXACT}"),
            ("GET_CONTACT", "look up {CONTACT_RELATED} in my contacts"),
            ("GET_CONTACT", "get the contact for {CONTACT_RELATED}"),
        ]),
        nested: BTreeMap::from([(
            "RECIPIENT".to_string(),
            NestedSlotSpec { intent: "GET_CONTACT".into(), inner_slot: "CONTACT_RELATED".into() },
        )]),
        nesting_rate: 0.35,
    }
}

/// The four specs behind [`default_benchmark_suite`], with ontology sizes
/// 5, 7, 12, and 14 and nesting rates from 0 to 0.35.
pub fn default_suite_specs() -> SuiteSpec {
    SuiteSpec { domains: vec![alarm_spec(), timer_spec(), event_spec(), messaging_spec()] }
}

/// Samples generated per domain by [`default_benchmark_suite`].
pub const DEFAULT_SUITE_SAMPLES_PER_DOMAIN: usize = 2500;

/// Deterministic multi-domain corpus used by the experiment pipelines.
pub fn default_benchmark_suite(seed: u64) -> Dataset {
    let specs = default_suite_specs();
    let mut samples = Vec::new();
    for (i, spec) in specs.domains.iter().enumerate() {
        let ds = generate_domain(spec, DEFAULT_SUITE_SAMPLES_PER_DOMAIN, seed.wrapping_add(i as u64))
            .expect("default suite specs are valid");
        samples.extend(ds.samples);
    }
    Dataset::new(samples)
}

/// Generate a corpus from a suite spec, `n` samples per domain.
pub fn generate_suite(suite: &SuiteSpec, n: usize, seed: u64) -> Result<Dataset, SynthError> {
    let mut samples = Vec::new();
    for (i, spec) in suite.domains.iter().enumerate() {
        let ds = generate_domain(spec, n, seed.wrapping_add(i as u64))?;
        samples.extend(ds.samples);
    }
    Ok(Dataset::new(samples))
}
