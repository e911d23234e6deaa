//! The coreference layer: referent nodes parenting coreferring mentions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mention::{DecisionFile, Mention, MentionKind, MentionSet};
use crate::ucca::{Category, Passage, UnitId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferentKind {
    Event,
    Time,
    Entity,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Referent {
    pub label: String,
    pub kind: ReferentKind,
    pub mentions: BTreeSet<UnitId>,
}

impl Referent {
    pub fn is_singleton(&self) -> bool {
        self.mentions.len() == 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorefLayer {
    pub doc_id: String,
    /// Ordered by each referent's smallest mention id.
    pub referents: Vec<Referent>,
    pub mentions: BTreeMap<UnitId, Mention>,
    /// Mentions that received no label and were completed to singletons.
    pub unclustered: BTreeSet<UnitId>,
}

/// Label given to the singleton referent of an unassigned mention.
pub fn singleton_label(unit: &UnitId) -> String {
    format!("@{unit}")
}

/// Event if any mention is a scene, else time if any is a time expression,
/// else entity.
pub fn classify_referent(kinds: impl IntoIterator<Item = MentionKind>) -> ReferentKind {
    let mut out = ReferentKind::Entity;
    for k in kinds {
        match k {
            MentionKind::Scene => return ReferentKind::Event,
            MentionKind::Time => out = ReferentKind::Time,
            _ => {}
        }
    }
    out
}

impl CorefLayer {
    fn assemble(
        doc_id: String,
        groups: BTreeMap<String, BTreeSet<UnitId>>,
        mentions: BTreeMap<UnitId, Mention>,
        unclustered: BTreeSet<UnitId>,
    ) -> Self {
        let mut referents: Vec<Referent> = groups
            .into_iter()
            .map(|(label, ids)| Referent {
                kind: classify_referent(ids.iter().map(|u| mentions[u].kind)),
                label,
                mentions: ids,
            })
            .collect();
        referents.sort_by(|a, b| a.mentions.first().cmp(&b.mentions.first()));
        CorefLayer {
            doc_id,
            referents,
            mentions,
            unclustered,
        }
    }

    /// Index of the referent holding each mention.
    pub fn referent_index(&self) -> BTreeMap<&UnitId, usize> {
        self.referents
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.mentions.iter().map(move |u| (u, i)))
            .collect()
    }

    pub fn referent_of(&self, unit: &UnitId) -> Option<&Referent> {
        self.referents.iter().find(|r| r.mentions.contains(unit))
    }

    pub fn singleton_count(&self) -> usize {
        self.referents.iter().filter(|r| r.is_singleton()).count()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = LayerFile {
            doc_id: self.doc_id.clone(),
            referents: self
                .referents
                .iter()
                .map(|r| ReferentFile {
                    label: r.label.clone(),
                    kind: r.kind,
                    mentions: r.mentions.iter().cloned().collect(),
                })
                .collect(),
            mention_kinds: self
                .mentions
                .iter()
                .map(|(u, m)| (u.clone(), m.kind))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    /// Reads a layer written by [`CorefLayer::to_json`]. Mention metadata is
    /// recomputed from the passage; stored mention kinds take precedence
    /// when present.
    pub fn from_json(p: &Passage, text: &str) -> Result<Self> {
        let file: LayerFile = serde_json::from_str(text)?;
        if file.doc_id != p.doc_id {
            return Err(Error::DocMismatch {
                left: p.doc_id.clone(),
                right: file.doc_id,
            });
        }
        let mut groups = BTreeMap::new();
        let mut owner: BTreeMap<UnitId, String> = BTreeMap::new();
        let mut mentions = BTreeMap::new();
        let mut unclustered = BTreeSet::new();
        for r in file.referents {
            if r.mentions.is_empty() {
                return Err(Error::Schema(format!("referent {} has no mentions", r.label)));
            }
            if groups.contains_key(&r.label) {
                return Err(Error::Schema(format!("duplicate referent label {}", r.label)));
            }
            for u in &r.mentions {
                if let Some(first) = owner.insert(u.clone(), r.label.clone()) {
                    return Err(Error::ConflictingCluster {
                        unit: u.to_string(),
                        first,
                        second: r.label.clone(),
                    });
                }
                let mut m = Mention::infer(p, u)?;
                if let Some(&k) = file.mention_kinds.get(u) {
                    m.kind = k;
                }
                mentions.insert(u.clone(), m);
            }
            if r.mentions.len() == 1 && r.label == singleton_label(&r.mentions[0]) {
                unclustered.insert(r.mentions[0].clone());
            }
            groups.insert(r.label, r.mentions.into_iter().collect());
        }
        Ok(CorefLayer::assemble(file.doc_id, groups, mentions, unclustered))
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    doc_id: String,
    referents: Vec<ReferentFile>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    mention_kinds: BTreeMap<UnitId, MentionKind>,
}

#[derive(Serialize, Deserialize)]
struct ReferentFile {
    label: String,
    kind: ReferentKind,
    mentions: Vec<UnitId>,
}

/// Groups mentions by their cluster label. Mentions without a label become
/// singleton referents.
pub fn build_layer(ms: &MentionSet, d: &DecisionFile) -> Result<CorefLayer> {
    let mut label_of: BTreeMap<&UnitId, &str> = BTreeMap::new();
    for (unit, label) in &d.clusters {
        if !ms.contains(unit) {
            return Err(Error::ClusterUnknownMention(unit.to_string()));
        }
        if let Some(first) = label_of.insert(unit, label) {
            if first != label {
                return Err(Error::ConflictingCluster {
                    unit: unit.to_string(),
                    first: first.to_string(),
                    second: label.clone(),
                });
            }
        }
    }

    let mut groups: BTreeMap<String, BTreeSet<UnitId>> = BTreeMap::new();
    let mut unclustered = BTreeSet::new();
    for unit in ms.mentions.keys() {
        let label = match label_of.get(unit) {
            Some(l) => l.to_string(),
            None => {
                unclustered.insert(unit.clone());
                singleton_label(unit)
            }
        };
        groups.entry(label).or_default().insert(unit.clone());
    }
    Ok(CorefLayer::assemble(
        ms.doc_id.clone(),
        groups,
        ms.mentions.clone(),
        unclustered,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub rule: String,
    pub units: Vec<UnitId>,
    pub message: String,
}

impl Diagnostic {
    fn new(severity: Severity, rule: &str, units: Vec<UnitId>, message: String) -> Self {
        Diagnostic {
            severity,
            rule: rule.to_string(),
            units,
            message,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    pub fn tsv_row(&self, doc_id: &str) -> String {
        let units: Vec<&str> = self.units.iter().map(|u| u.as_str()).collect();
        format!(
            "{doc_id}\t{}\t{}\t{}\t{}",
            self.severity,
            self.rule,
            units.join(","),
            self.message
        )
    }
}

pub const DIAGNOSTICS_HEADER: &str = "doc_id\tseverity\trule\tunits\tmessage";

const NEGATORS: &[&str] = &[
    "not", "n't", "no", "never", "none", "nobody", "nothing", "neither", "nor", "cannot",
];

/// A scene with an Adverbial that contains a negator.
fn is_negated_scene(p: &Passage, unit: &UnitId) -> Result<bool> {
    for d in p.unit(unit)?.primary_children_with(Category::D) {
        for pos in p.mention_span(d)?.positions {
            let word = p.terminals[pos - 1].text.to_lowercase();
            if NEGATORS.contains(&word.as_str()) || word.ends_with("n't") {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Lints a layer against the structurally checkable guideline constraints.
pub fn validate_layer(p: &Passage, layer: &CorefLayer) -> Result<Vec<Diagnostic>> {
    let index = layer.referent_index();
    let mut out = Vec::new();

    // a unit always corefers with its Center
    for unit in layer.mentions.keys() {
        let mut cur = p.unit(unit)?;
        while cur.center_count() == 1 {
            let c = cur.primary_children_with(Category::C).next().expect("one Center");
            if let Some(&ri) = index.get(c) {
                if ri != index[unit] {
                    out.push(Diagnostic::new(
                        Severity::Error,
                        "center-coref",
                        vec![unit.clone(), c.clone()],
                        format!(
                            "{unit} and its Center {c} are in different referents ({}, {})",
                            layer.referents[index[unit]].label, layer.referents[ri].label
                        ),
                    ));
                }
                break;
            }
            cur = p.unit(c)?;
        }
    }

    // each conjunct gets its own referent
    for u in p.non_root_units() {
        if u.center_count() < 2 {
            continue;
        }
        let conjuncts: Vec<&UnitId> = u
            .primary_children_with(Category::C)
            .filter(|c| index.contains_key(c))
            .collect();
        for (i, a) in conjuncts.iter().enumerate() {
            for b in &conjuncts[i + 1..] {
                if index[a] == index[b] {
                    out.push(Diagnostic::new(
                        Severity::Error,
                        "conjunct-merge",
                        vec![(*a).clone(), (*b).clone()],
                        format!(
                            "conjuncts {a} and {b} of {} share referent {}",
                            u.id, layer.referents[index[a]].label
                        ),
                    ));
                }
            }
        }
    }

    for (unit, m) in &layer.mentions {
        let r = &layer.referents[index[unit]];
        if m.via_remote && r.is_singleton() && layer.mentions.len() > 1 {
            out.push(Diagnostic::new(
                Severity::Warning,
                "remote-unlinked",
                vec![unit.clone()],
                format!("remote target {unit} is a singleton"),
            ));
        }
        if m.implicit && r.is_singleton() {
            out.push(Diagnostic::new(
                Severity::Warning,
                "implicit-singleton",
                vec![unit.clone()],
                format!("implicit unit {unit} is not linked to any other mention"),
            ));
        }
    }

    for r in &layer.referents {
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for u in &r.mentions {
            if layer.mentions[u].kind != MentionKind::Scene {
                continue;
            }
            if is_negated_scene(p, u)? {
                negative.push(u);
            } else {
                positive.push(u);
            }
        }
        if !positive.is_empty() && !negative.is_empty() {
            let units: Vec<UnitId> = positive.iter().chain(&negative).map(|u| (*u).clone()).collect();
            out.push(Diagnostic::new(
                Severity::Warning,
                "negation-merge",
                units,
                format!("referent {} merges negated and affirmed scenes", r.label),
            ));
        }
    }
    Ok(out)
}

/// A referent taking part in a scene through a remote Participant edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RemoteParticipation {
    pub scene: UnitId,
    pub participant: UnitId,
    /// `None` when the remote target is not itself a mention.
    pub referent: Option<String>,
}

/// One entry per remote A edge, in edge order.
pub fn remote_participation(p: &Passage, layer: &CorefLayer) -> Vec<RemoteParticipation> {
    let mut out = Vec::new();
    for u in p.units.values() {
        for e in u.outgoing.iter().filter(|e| e.remote && e.has(Category::A)) {
            out.push(RemoteParticipation {
                scene: e.parent.clone(),
                participant: e.child.clone(),
                referent: layer.referent_of(&e.child).map(|r| r.label.clone()),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mention::identify_mentions;
    use crate::ucca::parse_passage;

    const FIG1: &str = include_str!("../tests/fixtures/fig1.xml");
    const FIG1_DECISIONS: &str = include_str!("../tests/fixtures/fig1.json");

    fn fig1() -> (Passage, CorefLayer) {
        let p = parse_passage(FIG1).unwrap();
        let d = DecisionFile::from_json(FIG1_DECISIONS).unwrap();
        let (_, ms) = identify_mentions(&p, &d).unwrap();
        let layer = build_layer(&ms, &d).unwrap();
        (p, layer)
    }

    fn labels(layer: &CorefLayer) -> Vec<(&str, ReferentKind, usize)> {
        layer
            .referents
            .iter()
            .map(|r| (r.label.as_str(), r.kind, r.mentions.len()))
            .collect()
    }

    #[test]
    fn fig1_referents() {
        let (p, layer) = fig1();
        assert_eq!(
            labels(&layer),
            [
                ("has-fears", ReferentKind::Event, 2),
                ("addressee", ReferentKind::Entity, 2),
                ("surmounts", ReferentKind::Event, 1),
                ("advises", ReferentKind::Event, 1),
            ]
        );
        assert_eq!(layer.singleton_count(), 2);
        assert!(layer.unclustered.is_empty());
        assert!(validate_layer(&p, &layer).unwrap().is_empty());
    }

    #[test]
    fn singleton_completion() {
        let p = parse_passage(FIG1).unwrap();
        let (_, ms) = identify_mentions(&p, &DecisionFile::empty("fig1")).unwrap();
        let layer = build_layer(&ms, &DecisionFile::empty("fig1")).unwrap();
        assert_eq!(layer.referents.len(), 6);
        assert_eq!(layer.unclustered.len(), 6);
        assert_eq!(layer.referents[0].label, "@1.2");

        let mut d = DecisionFile::empty("fig1");
        d.clusters.push(("1.15".into(), "X".into()));
        d.clusters.push(("1.17".into(), "X".into()));
        assert_eq!(build_layer(&ms, &d).unwrap().referents.len(), 5);
    }

    #[test]
    fn assignment_errors() {
        let p = parse_passage(FIG1).unwrap();
        let (_, ms) = identify_mentions(&p, &DecisionFile::empty("fig1")).unwrap();
        let mut d = DecisionFile::empty("fig1");
        d.clusters.push(("1.5".into(), "X".into()));
        assert!(matches!(build_layer(&ms, &d), Err(Error::ClusterUnknownMention(u)) if u == "1.5"));
        let mut d = DecisionFile::empty("fig1");
        d.clusters.push(("1.15".into(), "X".into()));
        d.clusters.push(("1.15".into(), "Y".into()));
        assert!(matches!(build_layer(&ms, &d), Err(Error::ConflictingCluster { .. })));
    }

    #[test]
    fn classification_order() {
        use MentionKind::*;
        assert_eq!(classify_referent([Participant, Scene]), ReferentKind::Event);
        assert_eq!(classify_referent([Time, Participant]), ReferentKind::Time);
        assert_eq!(classify_referent([Time, Scene]), ReferentKind::Event);
        assert_eq!(classify_referent([Other]), ReferentKind::Entity);
    }

    #[test]
    fn json_round_trip() {
        let (p, layer) = fig1();
        let text = layer.to_json().unwrap();
        assert_eq!(CorefLayer::from_json(&p, &text).unwrap(), layer);
    }

    #[test]
    fn remote_participation_of_addressee() {
        let (p, layer) = fig1();
        let rp = remote_participation(&p, &layer);
        assert_eq!(rp.len(), 1);
        assert_eq!(rp[0].scene.as_str(), "1.19");
        assert_eq!(rp[0].referent.as_deref(), Some("addressee"));
    }

    #[test]
    fn remote_singleton_warns() {
        let p = parse_passage(FIG1).unwrap();
        let (_, ms) = identify_mentions(&p, &DecisionFile::empty("fig1")).unwrap();
        let layer = build_layer(&ms, &DecisionFile::empty("fig1")).unwrap();
        let diags = validate_layer(&p, &layer).unwrap();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].rule, "remote-unlinked");
        assert!(!diags[0].is_error());
    }

    fn single_scene(words: &[&str], units: &str) -> Passage {
        let terminals: String = words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                format!(
                    r#"<node ID="0.{}" type="Word"><attributes text="{w}" paragraph="1" /></node>"#,
                    i + 1
                )
            })
            .collect();
        parse_passage(&format!(
            r#"<root passageID="t"><layer layerID="0">{terminals}</layer><layer layerID="1">{units}</layer></root>"#
        ))
        .unwrap()
    }

    #[test]
    fn negation_merge_warns() {
        // [I_A left_P]_H [I_A did_F not_D leave_P]_H
        let p = single_scene(
            &["I", "left", "I", "did", "not", "leave"],
            r#"<node ID="1.1" type="FN"><edge toID="1.2" type="H" /><edge toID="1.5" type="H" /></node>
               <node ID="1.2" type="FN"><edge toID="1.3" type="A" /><edge toID="1.4" type="P" /></node>
               <node ID="1.3" type="FN"><edge toID="0.1" type="Terminal" /></node>
               <node ID="1.4" type="FN"><edge toID="0.2" type="Terminal" /></node>
               <node ID="1.5" type="FN"><edge toID="1.6" type="A" /><edge toID="1.7" type="F" /><edge toID="1.8" type="D" /><edge toID="1.9" type="P" /></node>
               <node ID="1.6" type="FN"><edge toID="0.3" type="Terminal" /></node>
               <node ID="1.7" type="FN"><edge toID="0.4" type="Terminal" /></node>
               <node ID="1.8" type="FN"><edge toID="0.5" type="Terminal" /></node>
               <node ID="1.9" type="FN"><edge toID="0.6" type="Terminal" /></node>"#,
        );
        let mut d = DecisionFile::empty("t");
        for (u, l) in [("1.2", "leave"), ("1.5", "leave"), ("1.3", "me"), ("1.6", "me")] {
            d.clusters.push((u.into(), l.into()));
        }
        let (_, ms) = identify_mentions(&p, &d).unwrap();
        let layer = build_layer(&ms, &d).unwrap();
        let diags = validate_layer(&p, &layer).unwrap();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].rule, "negation-merge");
        assert_eq!(diags[0].severity, Severity::Warning);
    }

    #[test]
    fn implicit_singleton_warns() {
        // Advice_P please_F (implicit adviser)_A
        let p = single_scene(
            &["Advice", "please"],
            r#"<node ID="1.1" type="FN"><edge toID="1.2" type="H" /></node>
               <node ID="1.2" type="FN"><edge toID="1.3" type="P" /><edge toID="1.4" type="F" /><edge toID="1.5" type="A" /></node>
               <node ID="1.3" type="FN"><edge toID="0.1" type="Terminal" /></node>
               <node ID="1.4" type="FN"><edge toID="0.2" type="Terminal" /></node>
               <node ID="1.5" type="FN"><attributes implicit="True" /></node>"#,
        );
        let (_, ms) = identify_mentions(&p, &DecisionFile::empty("t")).unwrap();
        assert!(ms.mentions[&UnitId::from("1.5")].implicit);
        let layer = build_layer(&ms, &DecisionFile::empty("t")).unwrap();
        let rules: Vec<_> = validate_layer(&p, &layer)
            .unwrap()
            .into_iter()
            .map(|d| d.rule)
            .collect();
        assert_eq!(rules, ["implicit-singleton"]);
    }

    #[test]
    fn empty_passage_has_no_diagnostics() {
        let p = single_scene(
            &["please"],
            r#"<node ID="1.1" type="FN"><edge toID="1.2" type="F" /></node>
               <node ID="1.2" type="FN"><edge toID="0.1" type="Terminal" /></node>"#,
        );
        let (_, ms) = identify_mentions(&p, &DecisionFile::empty("t")).unwrap();
        let layer = build_layer(&ms, &DecisionFile::empty("t")).unwrap();
        assert!(layer.referents.is_empty());
        assert!(validate_layer(&p, &layer).unwrap().is_empty());
    }
}
