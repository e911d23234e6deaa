//! Corpus statistics: passage size, candidate filtering, mentions and
//! referents by kind.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::ops::AddAssign;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::layer::{CorefLayer, ReferentKind};
use crate::mention::{CandidateSet, MentionKind};
use crate::ucca::Passage;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub sentences: usize,
    pub tokens: usize,
    pub non_punct_tokens: usize,
    /// Layer-1 units other than the root and punctuation.
    pub units: usize,
    /// Automatic mentions plus candidates awaiting a verdict.
    pub candidates: usize,
    pub mentions: usize,
    pub scene_mentions: usize,
    pub participant_mentions: usize,
    pub time_mentions: usize,
    pub other_mentions: usize,
    pub implicit_mentions: usize,
    pub remote_mentions: usize,
    pub referents: usize,
    pub event_referents: usize,
    pub entity_referents: usize,
    pub time_referents: usize,
    pub non_singleton_referents: usize,
    /// Non-singleton referents with an implicit mention.
    pub implicit_participation: usize,
    /// Non-singleton referents with a mention that is a remote target.
    pub remote_participation: usize,
}

const COLUMNS: [&str; 19] = [
    "sentences",
    "tokens",
    "non_punct_tokens",
    "units",
    "candidates",
    "mentions",
    "scene_mentions",
    "participant_mentions",
    "time_mentions",
    "other_mentions",
    "implicit_mentions",
    "remote_mentions",
    "referents",
    "event_referents",
    "entity_referents",
    "time_referents",
    "non_singleton_referents",
    "implicit_participation",
    "remote_participation",
];

impl Counts {
    fn values(&self) -> [usize; 19] {
        [
            self.sentences,
            self.tokens,
            self.non_punct_tokens,
            self.units,
            self.candidates,
            self.mentions,
            self.scene_mentions,
            self.participant_mentions,
            self.time_mentions,
            self.other_mentions,
            self.implicit_mentions,
            self.remote_mentions,
            self.referents,
            self.event_referents,
            self.entity_referents,
            self.time_referents,
            self.non_singleton_referents,
            self.implicit_participation,
            self.remote_participation,
        ]
    }

    /// Candidate share of units; `None` for a passage without units.
    pub fn candidate_fraction(&self) -> Option<f64> {
        (self.units > 0).then(|| self.candidates as f64 / self.units as f64)
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Self) {
        let mut sum = self.values();
        for (s, v) in sum.iter_mut().zip(o.values()) {
            *s += v;
        }
        let [a, b, c, d, e, f, g, h, i, j, k, l, m, n, p, q, r, s, t] = sum;
        *self = Counts {
            sentences: a,
            tokens: b,
            non_punct_tokens: c,
            units: d,
            candidates: e,
            mentions: f,
            scene_mentions: g,
            participant_mentions: h,
            time_mentions: i,
            other_mentions: j,
            implicit_mentions: k,
            remote_mentions: l,
            referents: m,
            event_referents: n,
            entity_referents: p,
            time_referents: q,
            non_singleton_referents: r,
            implicit_participation: s,
            remote_participation: t,
        };
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StatsReport {
    /// Sorted by document id.
    pub documents: BTreeMap<String, Counts>,
    pub total: Counts,
}

impl StatsReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("doc_id");
        for c in COLUMNS {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        let mut row = |name: &str, counts: &Counts| {
            out.push_str(name);
            for v in counts.values() {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        };
        for (doc, counts) in &self.documents {
            row(doc, counts);
        }
        row("TOTAL", &self.total);
        out
    }
}

/// Counts for one passage.
pub fn document_counts(p: &Passage, c: &CandidateSet, layer: &CorefLayer) -> Counts {
    let mut k = Counts {
        sentences: p.sentence_count(),
        tokens: p.terminals.len(),
        non_punct_tokens: p.terminals.iter().filter(|t| !t.is_punct).count(),
        units: p.non_root_units().filter(|u| !p.is_punctuation_unit(&u.id)).count(),
        candidates: c.total(),
        mentions: layer.mentions.len(),
        referents: layer.referents.len(),
        ..Counts::default()
    };
    for m in layer.mentions.values() {
        match m.kind {
            MentionKind::Scene => k.scene_mentions += 1,
            MentionKind::Participant => k.participant_mentions += 1,
            MentionKind::Time => k.time_mentions += 1,
            MentionKind::Other => k.other_mentions += 1,
        }
        k.implicit_mentions += m.implicit as usize;
        k.remote_mentions += m.via_remote as usize;
    }
    for r in &layer.referents {
        match r.kind {
            ReferentKind::Event => k.event_referents += 1,
            ReferentKind::Entity => k.entity_referents += 1,
            ReferentKind::Time => k.time_referents += 1,
        }
        if r.is_singleton() {
            continue;
        }
        k.non_singleton_referents += 1;
        let ms = || r.mentions.iter().map(|u| &layer.mentions[u]);
        k.implicit_participation += ms().any(|m| m.implicit) as usize;
        k.remote_participation += ms().any(|m| m.via_remote) as usize;
    }
    k
}

/// Per-document and total counts. Every passage needs a candidate set and
/// a layer with the same document id.
pub fn corpus_stats(passages: &[Passage], candidates: &[CandidateSet], layers: &[CorefLayer]) -> Result<StatsReport> {
    let cands: BTreeMap<&str, &CandidateSet> = candidates.iter().map(|c| (c.doc_id.as_str(), c)).collect();
    let lays: BTreeMap<&str, &CorefLayer> = layers.iter().map(|l| (l.doc_id.as_str(), l)).collect();
    let mut report = StatsReport::default();
    for p in passages {
        let id = p.doc_id.as_str();
        let (Some(c), Some(l)) = (cands.get(id), lays.get(id)) else {
            return Err(Error::MissingLayer(id.to_string()));
        };
        let counts = document_counts(p, c, l);
        report.total += counts;
        report.documents.insert(id.to_string(), counts);
    }
    Ok(report)
}
