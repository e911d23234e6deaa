//! Mention identification over a foundational-layer passage.
//!
//! Scene and Participant units are mentions automatically. Units under
//! Time, Elaborator, Relator, Quantity or Adverbial edges are only
//! candidates: an annotator decides them through a [`DecisionFile`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ucca::{Category, Passage, UnitId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AutoRule {
    Scene,
    Participant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CandidateRule {
    Time,
    Elaborator,
    Relator,
    Quantity,
    Adverbial,
}

impl CandidateRule {
    fn from_category(cat: Category) -> Option<Self> {
        Some(match cat {
            Category::T => CandidateRule::Time,
            Category::E => CandidateRule::Elaborator,
            Category::R => CandidateRule::Relator,
            Category::Q => CandidateRule::Quantity,
            Category::D => CandidateRule::Adverbial,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SuppressReason {
    /// The evoked scene of a relational noun that is not itself in a
    /// Participant role; the enclosing unit carries the mention.
    RelationalNounScene,
    /// The inner Participant of a relational noun, covering the same tokens
    /// as the noun's predicate.
    RelationalNounInner,
}

/// Units sorted into automatic mentions, candidates and suppressed units.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub doc_id: String,
    pub auto_mentions: BTreeMap<UnitId, AutoRule>,
    pub candidates: BTreeMap<UnitId, CandidateRule>,
    pub suppressed: BTreeMap<UnitId, SuppressReason>,
    /// Units with two or more primary Centers.
    pub multi_center: BTreeSet<UnitId>,
}

impl CandidateSet {
    pub fn total(&self) -> usize {
        self.auto_mentions.len() + self.candidates.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Referring,
    NonReferring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinationVerdict {
    WholeUnitReferring,
    ConjunctsOnly,
}

/// Annotator judgments for one passage.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionFile {
    pub doc_id: String,
    #[serde(default)]
    pub verdicts: BTreeMap<UnitId, Verdict>,
    #[serde(default)]
    pub coordination: BTreeMap<UnitId, CoordinationVerdict>,
    /// Mention unit id to referent label, in file order. Duplicated keys are
    /// kept so that conflicting assignments can be reported.
    #[serde(
        default,
        serialize_with = "write_pairs",
        deserialize_with = "read_pairs"
    )]
    pub clusters: Vec<(UnitId, String)>,
}

impl DecisionFile {
    pub fn empty(doc_id: impl Into<String>) -> Self {
        DecisionFile {
            doc_id: doc_id.into(),
            ..Default::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn write_pairs<S: Serializer>(pairs: &[(UnitId, String)], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(pairs.len()))?;
    for (k, v) in pairs {
        map.serialize_entry(k, v)?;
    }
    map.end()
}

fn read_pairs<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(UnitId, String)>, D::Error> {
    struct Pairs;
    impl<'de> Visitor<'de> for Pairs {
        type Value = Vec<(UnitId, String)>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a map from unit ids to referent labels")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
            let mut out = Vec::new();
            while let Some((k, v)) = map.next_entry::<String, String>()? {
                out.push((UnitId::new(k), v));
            }
            Ok(out)
        }
    }
    d.deserialize_map(Pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionKind {
    Scene,
    Participant,
    Time,
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Auto,
    Decided,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub unit: UnitId,
    pub kind: MentionKind,
    pub implicit: bool,
    /// The unit is also the child of at least one remote edge.
    pub via_remote: bool,
    pub provenance: Provenance,
}

impl Mention {
    /// Mentions are identified by their unit; no unit yields two mentions.
    pub fn id(&self) -> &UnitId {
        &self.unit
    }

    fn new(p: &Passage, unit: &UnitId, kind: MentionKind, provenance: Provenance) -> Result<Self> {
        Ok(Mention {
            unit: unit.clone(),
            kind,
            implicit: p.unit(unit)?.implicit,
            via_remote: p.is_remote_child(unit),
            provenance,
        })
    }

    /// Rebuilds a mention's metadata from the passage alone, for layers
    /// read back from disk.
    pub fn infer(p: &Passage, unit: &UnitId) -> Result<Self> {
        let (kind, provenance) = if p.is_scene(unit)? && !is_relational_noun(p, unit)? {
            (MentionKind::Scene, Provenance::Auto)
        } else if p.incoming(unit).any(|e| e.has(Category::A)) {
            (MentionKind::Participant, Provenance::Auto)
        } else if p.primary_incoming(unit).is_some_and(|e| e.has(Category::T)) {
            (MentionKind::Time, Provenance::Decided)
        } else {
            (MentionKind::Other, Provenance::Decided)
        };
        Mention::new(p, unit, kind, provenance)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewNote {
    pub unit: UnitId,
    pub note: String,
}

/// The mentions of one passage, keyed by unit, plus constructions flagged
/// for a human look.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionSet {
    pub doc_id: String,
    pub mentions: BTreeMap<UnitId, Mention>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub review: Vec<ReviewNote>,
}

impl MentionSet {
    pub fn len(&self) -> usize {
        self.mentions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mentions.is_empty()
    }

    pub fn contains(&self, unit: &UnitId) -> bool {
        self.mentions.contains_key(unit)
    }
}

/// Children of `id` reached through edges labeled with one of `cats`
/// (primary and remote), paired with their punctuation-free spans.
fn children_spans(
    p: &Passage,
    id: &UnitId,
    cats: &[Category],
) -> Result<Vec<(UnitId, BTreeSet<usize>)>> {
    let unit = p.unit(id)?;
    unit.outgoing
        .iter()
        .filter(|e| e.has_any(cats))
        .map(|e| Ok((e.child.clone(), p.mention_span(&e.child)?.positions)))
        .collect()
}

/// Inner Participant units of a relational noun: A-children whose span
/// coincides with the span of one of the unit's P/S children.
fn relational_inner(p: &Passage, id: &UnitId) -> Result<Vec<UnitId>> {
    if !p.is_scene(id)? {
        return Ok(Vec::new());
    }
    let preds = children_spans(p, id, &[Category::P, Category::S])?;
    let args = children_spans(p, id, &[Category::A])?;
    Ok(args
        .into_iter()
        .filter(|(_, span)| !span.is_empty() && preds.iter().any(|(_, ps)| ps == span))
        .map(|(u, _)| u)
        .collect())
}

/// A scene analyzed internally as both predicate and Participant over the
/// same tokens ("teacher", "friend").
pub fn is_relational_noun(p: &Passage, id: &UnitId) -> Result<bool> {
    Ok(!relational_inner(p, id)?.is_empty())
}

/// Sorts every unit of the passage by mention status.
pub fn extract_candidates(p: &Passage) -> Result<CandidateSet> {
    let mut set = CandidateSet {
        doc_id: p.doc_id.clone(),
        ..Default::default()
    };

    let mut inner = BTreeSet::new();
    let mut relational = BTreeSet::new();
    for u in p.non_root_units() {
        let found = relational_inner(p, &u.id)?;
        if !found.is_empty() {
            relational.insert(u.id.clone());
            inner.extend(found);
        }
    }

    for u in p.non_root_units() {
        let id = &u.id;
        if u.center_count() >= 2 {
            set.multi_center.insert(id.clone());
        }
        if p.is_punctuation_unit(id) {
            continue;
        }
        let as_participant = p.incoming(id).any(|e| e.has(Category::A));

        if inner.contains(id) && !relational.contains(id) {
            set.suppressed.insert(id.clone(), SuppressReason::RelationalNounInner);
        } else if relational.contains(id) {
            if as_participant {
                set.auto_mentions.insert(id.clone(), AutoRule::Participant);
            } else {
                set.suppressed.insert(id.clone(), SuppressReason::RelationalNounScene);
            }
        } else if p.is_scene(id)? {
            set.auto_mentions.insert(id.clone(), AutoRule::Scene);
        } else if as_participant {
            set.auto_mentions.insert(id.clone(), AutoRule::Participant);
        } else if let Some(rule) = p
            .primary_incoming(id)
            .and_then(|e| e.categories.iter().find_map(|&c| CandidateRule::from_category(c)))
        {
            set.candidates.insert(id.clone(), rule);
        }
    }
    Ok(set)
}

/// Combines automatic mentions with the annotator's candidate verdicts.
/// Candidates without a verdict are treated as non-referring.
pub fn apply_decisions(p: &Passage, c: &CandidateSet, d: &DecisionFile) -> Result<MentionSet> {
    if c.doc_id != d.doc_id {
        return Err(Error::DocMismatch {
            left: c.doc_id.clone(),
            right: d.doc_id.clone(),
        });
    }
    for unit in d.verdicts.keys() {
        if c.auto_mentions.contains_key(unit) {
            return Err(Error::VerdictOnAutoMention(unit.to_string()));
        }
        if !c.candidates.contains_key(unit) {
            return Err(Error::VerdictUnknownUnit(unit.to_string()));
        }
    }
    for unit in d.coordination.keys() {
        if !c.multi_center.contains(unit) {
            return Err(Error::CoordinationUnknownUnit(unit.to_string()));
        }
    }

    let mut mentions = BTreeMap::new();
    for (unit, rule) in &c.auto_mentions {
        let kind = match rule {
            AutoRule::Scene => MentionKind::Scene,
            AutoRule::Participant => MentionKind::Participant,
        };
        mentions.insert(unit.clone(), Mention::new(p, unit, kind, Provenance::Auto)?);
    }
    for (unit, rule) in &c.candidates {
        if d.verdicts.get(unit) != Some(&Verdict::Referring) {
            continue;
        }
        let kind = match rule {
            CandidateRule::Time => MentionKind::Time,
            _ => MentionKind::Other,
        };
        mentions.insert(unit.clone(), Mention::new(p, unit, kind, Provenance::Decided)?);
    }
    Ok(MentionSet {
        doc_id: c.doc_id.clone(),
        mentions,
        review: Vec::new(),
    })
}

/// The mention standing for a multi-Center unit: the unit itself, or the
/// closest ancestor that reaches it through single-Center edges.
fn whole_mention(p: &Passage, ms: &MentionSet, unit: &UnitId) -> Option<UnitId> {
    let mut cur = unit.clone();
    loop {
        if ms.contains(&cur) {
            return Some(cur);
        }
        let edge = p.primary_incoming(&cur)?;
        if !edge.has(Category::C) || p.units[&edge.parent].center_count() != 1 {
            return None;
        }
        cur = edge.parent.clone();
    }
}

/// Adds conjunct mentions for multi-Center units and applies the
/// coordination verdicts to the whole-unit mention.
pub fn expand_multicenter(p: &Passage, ms: &MentionSet, d: &DecisionFile) -> Result<MentionSet> {
    let mut out = ms.clone();
    let multi: Vec<&UnitId> = p
        .non_root_units()
        .filter(|u| u.center_count() >= 2)
        .map(|u| &u.id)
        .collect();

    let mut removed = BTreeSet::new();
    for mc in multi {
        let Some(whole) = whole_mention(p, ms, mc) else {
            continue;
        };
        let whole_mention = &ms.mentions[&whole];
        match d.coordination.get(mc) {
            None if whole_mention.provenance == Provenance::Auto => {
                return Err(Error::MissingCoordinationVerdict(mc.to_string()));
            }
            Some(CoordinationVerdict::ConjunctsOnly) => {
                removed.insert(whole.clone());
            }
            _ => {}
        }
        out.review.push(ReviewNote {
            unit: mc.clone(),
            note: "multi-Center unit rendered as a coordination".into(),
        });

        let inherited = match whole_mention.kind {
            MentionKind::Participant | MentionKind::Time => whole_mention.kind,
            _ => MentionKind::Other,
        };
        for conjunct in p.units[mc].primary_children_with(Category::C) {
            if out.contains(conjunct) {
                continue;
            }
            let kind = if p.is_scene(conjunct)? && !is_relational_noun(p, conjunct)? {
                MentionKind::Scene
            } else {
                inherited
            };
            out.mentions.insert(
                conjunct.clone(),
                Mention::new(p, conjunct, kind, Provenance::Auto)?,
            );
        }
    }
    for unit in removed {
        out.mentions.remove(&unit);
    }
    Ok(out)
}

/// Quantity handling for partitives.
///
/// Nested partitives (a Q+remote-C core next to an Elaborator) already get
/// both mentions from the Elaborator and whole-unit rules; they are only
/// checked. Flat partitives (`one_Q of_R the_F 5_Q books_C`) gain a mention
/// for each Quantity that follows the Relator.
pub fn partitive_mentions(p: &Passage, ms: &MentionSet) -> Result<MentionSet> {
    let mut out = ms.clone();
    for id in ms.mentions.keys() {
        let unit = p.unit(id)?;
        let mut children: Vec<(usize, &crate::ucca::Edge)> = Vec::new();
        for e in unit.primary_edges() {
            let span = p.yield_span(&e.child, true)?;
            if let Some(&first) = span.positions.first() {
                children.push((first, e));
            }
        }
        children.sort_by_key(|(pos, _)| *pos);

        // flat: Q ... R ... Q ... C
        let first_q = children.iter().position(|(_, e)| e.has(Category::Q));
        let relator = first_q.and_then(|q| {
            children[q + 1..]
                .iter()
                .position(|(_, e)| e.has(Category::R))
                .map(|r| q + 1 + r)
        });
        if let Some(r) = relator {
            let center = children[r + 1..].iter().position(|(_, e)| e.has(Category::C));
            if let Some(c) = center.map(|c| r + 1 + c) {
                for (_, e) in &children[r + 1..c] {
                    if e.has(Category::Q) && !out.contains(&e.child) {
                        out.mentions.insert(
                            e.child.clone(),
                            Mention::new(p, &e.child, MentionKind::Other, Provenance::Auto)?,
                        );
                        out.review.push(ReviewNote {
                            unit: e.child.clone(),
                            note: format!("flat partitive under {id}: Quantity added as a mention"),
                        });
                    }
                }
            }
        }

        // nested: [[Q (C)]_C [...]_E]
        let nested_core = unit.primary_children_with(Category::C).any(|c| {
            let core = &p.units[c];
            core.primary_children_with(Category::Q).next().is_some()
                && core.outgoing.iter().any(|e| e.remote && e.has(Category::C))
        });
        if nested_core {
            for e in unit.primary_children_with(Category::E) {
                if !ms.contains(e) {
                    out.review.push(ReviewNote {
                        unit: e.clone(),
                        note: format!("partitive Elaborator under {id} is not marked referring"),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Runs the whole identification chain: candidates, verdicts, conjuncts,
/// partitives.
pub fn identify_mentions(p: &Passage, d: &DecisionFile) -> Result<(CandidateSet, MentionSet)> {
    let candidates = extract_candidates(p)?;
    let ms = apply_decisions(p, &candidates, d)?;
    let ms = expand_multicenter(p, &ms, d)?;
    let ms = partitive_mentions(p, &ms)?;
    Ok((candidates, ms))
}

/// The annotator questionnaire: every candidate with its rule and text.
pub fn questionnaire(p: &Passage, c: &CandidateSet) -> Result<serde_json::Value> {
    let mut items = Vec::new();
    for (unit, rule) in &c.candidates {
        items.push(serde_json::json!({
            "unit": unit,
            "rule": rule,
            "text": p.span_text(&p.mention_span(unit)?),
        }));
    }
    let mut coordination = Vec::new();
    for unit in &c.multi_center {
        coordination.push(serde_json::json!({
            "unit": unit,
            "text": p.span_text(&p.mention_span(unit)?),
        }));
    }
    Ok(serde_json::json!({
        "doc_id": c.doc_id,
        "auto_mentions": c.auto_mentions,
        "candidates": items,
        "multi_center": coordination,
        "suppressed": c.suppressed,
    }))
}
