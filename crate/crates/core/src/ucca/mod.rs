//! UCCA foundational-layer passages.
//!
//! A [`Passage`] is a DAG of layer-1 units over layer-0 terminals. Every
//! non-root unit has exactly one primary (non-remote) parent, so the primary
//! edges form a tree; remote edges add re-entrancies on top of it.

mod xml;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use xml::{parse_passage, write_passage};

/// 1-based token index within a passage.
pub type Position = usize;

/// Identifier of a layer-1 node, e.g. `1.12`.
///
/// Ordered numerically segment by segment, so `1.2 < 1.10`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(String);

impl UnitId {
    pub fn new(id: impl Into<String>) -> Self {
        UnitId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UnitId {
    fn from(s: &str) -> Self {
        UnitId(s.to_string())
    }
}

impl Ord for UnitId {
    fn cmp(&self, other: &Self) -> Ordering {
        let mut a = self.0.split('.');
        let mut b = other.0.split('.');
        loop {
            match (a.next(), b.next()) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some(x), Some(y)) => {
                    let ord = match (x.parse::<u64>(), y.parse::<u64>()) {
                        (Ok(nx), Ok(ny)) => nx.cmp(&ny),
                        _ => x.cmp(y),
                    };
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
            }
        }
    }
}

impl PartialOrd for UnitId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Foundational-layer edge categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    /// Parallel Scene
    H,
    /// Process
    P,
    /// State
    S,
    /// Participant
    A,
    /// Center
    C,
    /// Elaborator
    E,
    /// Adverbial
    D,
    /// Function
    F,
    /// Relator
    R,
    /// Time
    T,
    /// Quantity
    Q,
    /// Ground
    G,
    /// Linker
    L,
    /// Connector
    N,
    /// Punctuation
    U,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::H => "H",
            Category::P => "P",
            Category::S => "S",
            Category::A => "A",
            Category::C => "C",
            Category::E => "E",
            Category::D => "D",
            Category::F => "F",
            Category::R => "R",
            Category::T => "T",
            Category::Q => "Q",
            Category::G => "G",
            Category::L => "L",
            Category::N => "N",
            Category::U => "U",
        }
    }

    pub fn is_predicate(self) -> bool {
        matches!(self, Category::P | Category::S)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "H" => Category::H,
            "P" => Category::P,
            "S" => Category::S,
            "A" => Category::A,
            "C" => Category::C,
            "E" => Category::E,
            "D" => Category::D,
            "F" => Category::F,
            "R" => Category::R,
            "T" => Category::T,
            "Q" => Category::Q,
            "G" => Category::G,
            "L" => Category::L,
            "N" => Category::N,
            "U" => Category::U,
            other => return Err(other.to_string()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Terminal {
    pub id: String,
    pub position: Position,
    pub text: String,
    pub is_punct: bool,
    pub paragraph: u32,
    pub paragraph_position: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub parent: UnitId,
    pub child: UnitId,
    /// Never empty. The first entry is the edge's primary `type`.
    pub categories: Vec<Category>,
    pub remote: bool,
}

impl Edge {
    pub fn has(&self, cat: Category) -> bool {
        self.categories.contains(&cat)
    }

    pub fn has_any(&self, cats: &[Category]) -> bool {
        self.categories.iter().any(|c| cats.contains(c))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unit {
    pub id: UnitId,
    /// XML node type (`FN`, `PNCT`, ...).
    pub node_type: String,
    pub implicit: bool,
    pub unanalyzable: bool,
    pub outgoing: Vec<Edge>,
    /// Terminals attached directly to this unit, in document order.
    pub terminals: Vec<Position>,
}

impl Unit {
    pub fn primary_edges(&self) -> impl Iterator<Item = &Edge> {
        self.outgoing.iter().filter(|e| !e.remote)
    }

    pub fn primary_children_with(&self, cat: Category) -> impl Iterator<Item = &UnitId> {
        self.primary_edges()
            .filter(move |e| e.has(cat))
            .map(|e| &e.child)
    }

    pub fn center_count(&self) -> usize {
        self.primary_children_with(Category::C).count()
    }
}

/// Tokens covered by a unit. Implicit units render as null spans.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenSpan {
    pub doc_id: String,
    pub positions: BTreeSet<Position>,
    pub null_span: bool,
}

impl TokenSpan {
    pub fn new(doc_id: impl Into<String>, positions: impl IntoIterator<Item = Position>) -> Self {
        TokenSpan {
            doc_id: doc_id.into(),
            positions: positions.into_iter().collect(),
            null_span: false,
        }
    }

    pub fn null(doc_id: impl Into<String>) -> Self {
        TokenSpan {
            doc_id: doc_id.into(),
            positions: BTreeSet::new(),
            null_span: true,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Passage {
    pub doc_id: String,
    pub terminals: Vec<Terminal>,
    pub units: BTreeMap<UnitId, Unit>,
    pub root: UnitId,
    primary_parent: BTreeMap<UnitId, (UnitId, usize)>,
    remote_parents: BTreeMap<UnitId, Vec<(UnitId, usize)>>,
}

impl Passage {
    /// Assembles a passage and checks every structural invariant.
    pub fn new(
        doc_id: String,
        terminals: Vec<Terminal>,
        units: Vec<Unit>,
        root: UnitId,
    ) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for u in units {
            let id = u.id.clone();
            if by_id.insert(id.clone(), u).is_some() {
                return Err(Error::Schema(format!("duplicate unit id {id}")));
            }
        }
        if !by_id.contains_key(&root) {
            return Err(Error::UnknownUnit(root.to_string()));
        }

        for (i, t) in terminals.iter().enumerate() {
            if t.position != i + 1 {
                return Err(Error::TerminalGap {
                    id: t.id.clone(),
                    expected: i + 1,
                    found: t.position,
                });
            }
            if t.text.is_empty() {
                return Err(Error::Schema(format!("terminal {} has empty text", t.id)));
            }
        }

        let mut primary_parent: BTreeMap<UnitId, (UnitId, usize)> = BTreeMap::new();
        let mut remote_parents: BTreeMap<UnitId, Vec<(UnitId, usize)>> = BTreeMap::new();
        let mut primary_count: BTreeMap<&UnitId, usize> = BTreeMap::new();
        let mut terminal_owner: Vec<Option<&UnitId>> = vec![None; terminals.len()];

        for u in by_id.values() {
            if u.implicit && (!u.outgoing.is_empty() || !u.terminals.is_empty()) {
                return Err(Error::ImplicitWithContent(u.id.to_string()));
            }
            for &pos in &u.terminals {
                let slot = terminal_owner
                    .get_mut(pos.wrapping_sub(1))
                    .ok_or_else(|| Error::Schema(format!("unit {} references terminal position {pos}", u.id)))?;
                if let Some(prev) = slot {
                    return Err(Error::Schema(format!(
                        "terminal {} attached to both {} and {}",
                        terminals[pos - 1].id, prev, u.id
                    )));
                }
                *slot = Some(&u.id);
            }
            for (idx, e) in u.outgoing.iter().enumerate() {
                if e.categories.is_empty() {
                    return Err(Error::Schema(format!("edge {} -> {} has no category", e.parent, e.child)));
                }
                if !by_id.contains_key(&e.child) {
                    return Err(Error::UnknownNode {
                        from: e.parent.to_string(),
                        to: e.child.to_string(),
                    });
                }
                if e.remote {
                    remote_parents
                        .entry(e.child.clone())
                        .or_default()
                        .push((u.id.clone(), idx));
                } else {
                    *primary_count.entry(&e.child).or_default() += 1;
                    primary_parent.insert(e.child.clone(), (u.id.clone(), idx));
                }
            }
        }

        for id in by_id.keys() {
            let n = primary_count.get(id).copied().unwrap_or(0);
            let expected = usize::from(*id != root);
            if n != expected {
                return Err(Error::PrimaryParents {
                    unit: id.to_string(),
                    count: n,
                });
            }
        }
        drop(primary_count);

        let passage = Passage {
            doc_id,
            terminals,
            units: by_id,
            root,
            primary_parent,
            remote_parents,
        };
        passage.check_acyclic()?;

        // with one primary parent per unit and no cycles, every unit hangs
        // off the root; terminals only need an owner
        let owners: Vec<bool> = {
            let mut seen = vec![false; passage.terminals.len()];
            for u in passage.units.values() {
                for &p in &u.terminals {
                    seen[p - 1] = true;
                }
            }
            seen
        };
        if let Some(i) = owners.iter().position(|seen| !seen) {
            return Err(Error::UnreachableTerminal(passage.terminals[i].id.clone()));
        }
        Ok(passage)
    }

    fn check_acyclic(&self) -> Result<()> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Fresh,
            Active,
            Done,
        }
        let mut marks: BTreeMap<&UnitId, Mark> =
            self.units.keys().map(|k| (k, Mark::Fresh)).collect();
        for start in self.units.keys() {
            if marks[start] != Mark::Fresh {
                continue;
            }
            // iterative DFS over primary and remote edges
            let mut stack: Vec<(&UnitId, usize)> = vec![(start, 0)];
            marks.insert(start, Mark::Active);
            while let Some((node, next)) = stack.pop() {
                let unit = &self.units[node];
                if let Some(edge) = unit.outgoing.get(next) {
                    stack.push((node, next + 1));
                    let child = &edge.child;
                    match marks[child] {
                        Mark::Active => return Err(Error::Cycle(child.to_string())),
                        Mark::Fresh => {
                            marks.insert(child, Mark::Active);
                            stack.push((child, 0));
                        }
                        Mark::Done => {}
                    }
                } else {
                    marks.insert(node, Mark::Done);
                }
            }
        }
        Ok(())
    }

    pub fn unit(&self, id: &UnitId) -> Result<&Unit> {
        self.units
            .get(id)
            .ok_or_else(|| Error::UnknownUnit(id.to_string()))
    }

    pub fn terminal(&self, pos: Position) -> Option<&Terminal> {
        pos.checked_sub(1).and_then(|i| self.terminals.get(i))
    }

    /// The unique non-remote edge into `id`; `None` for the root.
    pub fn primary_incoming(&self, id: &UnitId) -> Option<&Edge> {
        self.primary_parent
            .get(id)
            .map(|(p, idx)| &self.units[p].outgoing[*idx])
    }

    pub fn remote_incoming(&self, id: &UnitId) -> impl Iterator<Item = &Edge> {
        self.remote_parents
            .get(id)
            .into_iter()
            .flatten()
            .map(|(p, idx)| &self.units[p].outgoing[*idx])
    }

    pub fn incoming(&self, id: &UnitId) -> impl Iterator<Item = &Edge> {
        self.primary_incoming(id).into_iter().chain(self.remote_incoming(id))
    }

    pub fn is_remote_child(&self, id: &UnitId) -> bool {
        self.remote_parents.contains_key(id)
    }

    pub fn primary_parent(&self, id: &UnitId) -> Option<&UnitId> {
        self.primary_parent.get(id).map(|(p, _)| p)
    }

    /// Units other than the root, in id order.
    pub fn non_root_units(&self) -> impl Iterator<Item = &Unit> {
        self.units.values().filter(move |u| u.id != self.root)
    }

    /// A unit made only of punctuation terminals (and nothing else).
    pub fn is_punctuation_unit(&self, id: &UnitId) -> bool {
        let Some(u) = self.units.get(id) else {
            return false;
        };
        if u.node_type == "PNCT" {
            return true;
        }
        !u.implicit
            && u.outgoing.is_empty()
            && !u.terminals.is_empty()
            && u.terminals.iter().all(|&p| self.terminals[p - 1].is_punct)
    }

    /// Terminals reachable from `id` through primary edges.
    pub fn yield_span(&self, id: &UnitId, include_punct: bool) -> Result<TokenSpan> {
        let unit = self.unit(id)?;
        if unit.implicit {
            return Ok(TokenSpan::null(&self.doc_id));
        }
        let mut positions = BTreeSet::new();
        let mut stack = vec![unit];
        while let Some(u) = stack.pop() {
            positions.extend(
                u.terminals
                    .iter()
                    .copied()
                    .filter(|&p| include_punct || !self.terminals[p - 1].is_punct),
            );
            stack.extend(u.primary_edges().map(|e| &self.units[&e.child]));
        }
        Ok(TokenSpan {
            doc_id: self.doc_id.clone(),
            positions,
            null_span: false,
        })
    }

    /// Punctuation-free yield, the rendering used for every coreference unit.
    pub fn mention_span(&self, id: &UnitId) -> Result<TokenSpan> {
        self.yield_span(id, false)
    }

    /// A scene has an outgoing primary Process or State edge.
    pub fn is_scene(&self, id: &UnitId) -> Result<bool> {
        Ok(self
            .unit(id)?
            .primary_edges()
            .any(|e| e.has_any(&[Category::P, Category::S])))
    }

    /// Semantic heads of `id`, found by descending primary C, S and P edges.
    ///
    /// A unit with several Centers yields one head per Center. Unanalyzable
    /// and implicit units are their own head.
    pub fn semantic_head(&self, id: &UnitId) -> Result<BTreeSet<UnitId>> {
        self.unit(id)?;
        let mut heads = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            let unit = &self.units[cur];
            if unit.implicit || unit.unanalyzable {
                heads.insert(cur.clone());
                continue;
            }
            let before = stack.len();
            stack.extend(
                unit.primary_edges()
                    .filter(|e| e.has_any(&[Category::C, Category::S, Category::P]))
                    .map(|e| &e.child),
            );
            if stack.len() == before {
                heads.insert(cur.clone());
            }
        }
        Ok(heads)
    }

    /// Every unit on a head path below `id` (excluding `id` itself).
    pub fn head_chain(&self, id: &UnitId) -> Result<BTreeSet<UnitId>> {
        self.unit(id)?;
        let mut out = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            let unit = &self.units[cur];
            if unit.implicit || unit.unanalyzable {
                continue;
            }
            for e in unit
                .primary_edges()
                .filter(|e| e.has_any(&[Category::C, Category::S, Category::P]))
            {
                if out.insert(e.child.clone()) {
                    stack.push(&e.child);
                }
            }
        }
        Ok(out)
    }

    /// Union of the punctuation-free yields of the semantic heads.
    pub fn head_span(&self, id: &UnitId) -> Result<TokenSpan> {
        if self.unit(id)?.implicit {
            return Ok(TokenSpan::null(&self.doc_id));
        }
        let mut positions = BTreeSet::new();
        for h in self.semantic_head(id)? {
            positions.extend(self.mention_span(&h)?.positions);
        }
        Ok(TokenSpan {
            doc_id: self.doc_id.clone(),
            positions,
            null_span: false,
        })
    }

    /// Space-joined text of a span, for diagnostics and questionnaires.
    pub fn span_text(&self, span: &TokenSpan) -> String {
        if span.null_span {
            return "<implicit>".to_string();
        }
        span.positions
            .iter()
            .filter_map(|&p| self.terminal(p))
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Number of distinct paragraphs, the passage's sentence groupings.
    pub fn sentence_count(&self) -> usize {
        self.terminals
            .iter()
            .map(|t| t.paragraph)
            .collect::<BTreeSet<_>>()
            .len()
    }
}
