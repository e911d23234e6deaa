//! Scheme-neutral token-span clusters.
//!
//! A [`SpanLayer`] is what gets compared across annotation schemes. The
//! coreference layer renders into one under a minimum (head) or maximum
//! (full yield) span convention.

mod conll;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::CorefLayer;
use crate::ucca::{Passage, Position, UnitId};

pub use conll::{read_conll, write_conll};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanMode {
    Min,
    Max,
}

impl SpanMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SpanMode::Min => "min",
            SpanMode::Max => "max",
        }
    }
}

impl fmt::Display for SpanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpanMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "min" => Ok(SpanMode::Min),
            "max" => Ok(SpanMode::Max),
            _ => Err(format!("unknown span mode {s:?} (expected min or max)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Ucoref,
    #[default]
    External,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpanMention {
    pub positions: BTreeSet<Position>,
    /// Head tokens; empty when the source scheme has no head markup.
    #[serde(default)]
    pub head: BTreeSet<Position>,
    #[serde(default)]
    pub null: bool,
    #[serde(default)]
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<UnitId>,
}

impl SpanMention {
    pub fn external(positions: impl IntoIterator<Item = Position>) -> Self {
        SpanMention {
            positions: positions.into_iter().collect(),
            head: BTreeSet::new(),
            null: false,
            source: Source::External,
            unit: None,
        }
    }

    pub fn is_contiguous(&self) -> bool {
        match (self.positions.first(), self.positions.last()) {
            (Some(a), Some(b)) => b - a + 1 == self.positions.len(),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanCluster {
    pub label: String,
    pub mentions: Vec<SpanMention>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanLayer {
    pub doc_id: String,
    pub clusters: Vec<SpanCluster>,
}

impl SpanLayer {
    pub fn mention_count(&self) -> usize {
        self.clusters.iter().map(|c| c.mentions.len()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rejects positions beyond the passage length.
    pub fn check_range(&self, limit: usize) -> Result<()> {
        for m in self.clusters.iter().flat_map(|c| &c.mentions) {
            for &pos in m.positions.iter().chain(&m.head) {
                if pos == 0 || pos > limit {
                    return Err(Error::TokenOutOfRange {
                        position: pos,
                        limit,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Renders a layer as token spans.
///
/// Both modes drop a mention that lies on the head path of another mention
/// of the same referent, since the parent already stands for it. Implicit
/// mentions become null spans when `include_null` is set and are omitted
/// otherwise.
pub fn to_spans(p: &Passage, layer: &CorefLayer, mode: SpanMode, include_null: bool) -> Result<SpanLayer> {
    let mut clusters = Vec::new();
    for r in &layer.referents {
        let mut represented = BTreeSet::new();
        for u in &r.mentions {
            represented.extend(p.head_chain(u)?.intersection(&r.mentions).cloned());
        }
        let mut mentions = Vec::new();
        for u in r.mentions.difference(&represented) {
            let m = if p.unit(u)?.implicit {
                if !include_null {
                    continue;
                }
                SpanMention {
                    positions: BTreeSet::new(),
                    head: BTreeSet::new(),
                    null: true,
                    source: Source::Ucoref,
                    unit: Some(u.clone()),
                }
            } else {
                let head = p.head_span(u)?.positions;
                let positions = match mode {
                    SpanMode::Max => p.mention_span(u)?.positions,
                    SpanMode::Min => head.clone(),
                };
                if positions.is_empty() {
                    continue;
                }
                SpanMention {
                    positions,
                    head,
                    null: false,
                    source: Source::Ucoref,
                    unit: Some(u.clone()),
                }
            };
            mentions.push(m);
        }
        if mentions.is_empty() {
            continue;
        }
        mentions.sort();
        clusters.push(SpanCluster {
            label: r.label.clone(),
            mentions,
        });
    }
    Ok(SpanLayer {
        doc_id: layer.doc_id.clone(),
        clusters,
    })
}

pub fn to_max_spans(p: &Passage, layer: &CorefLayer, include_null: bool) -> Result<SpanLayer> {
    to_spans(p, layer, SpanMode::Max, include_null)
}

pub fn to_min_spans(p: &Passage, layer: &CorefLayer, include_null: bool) -> Result<SpanLayer> {
    to_spans(p, layer, SpanMode::Min, include_null)
}
