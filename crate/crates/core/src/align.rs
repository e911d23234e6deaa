//! Greedy one-to-one alignment of mentions and referents by Dice overlap.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spans::{SpanLayer, SpanMention};
use crate::ucca::{Position, TokenSpan};

pub type Score = Ratio<u64>;

/// Parses a threshold written as a decimal (`0.25`) or a fraction (`1/3`).
pub fn parse_mu(s: &str) -> Result<Score> {
    let bad = || Error::InvalidMu(s.to_string());
    let t = s.trim();
    let mu = if let Some((n, d)) = t.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        let d: u64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        Ratio::new(n, d)
    } else {
        let (int, frac) = t.split_once('.').unwrap_or((t, ""));
        if (int.is_empty() && frac.is_empty())
            || frac.len() > 18
            || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        if int > 1 {
            return Err(bad());
        }
        let scale = 10u64.pow(frac.len() as u32);
        let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        Ratio::new(int * scale + frac, scale)
    };
    if mu > Ratio::from_integer(1) {
        return Err(bad());
    }
    Ok(mu)
}

/// Dice coefficient of two position sets. The normalized form
/// `2|a∩b| / (|a|+|b|)` reaches 1 exactly on equal sets; `compat` drops the
/// factor 2, which leaves the ranking unchanged but halves every score.
pub fn dice(a: &BTreeSet<Position>, b: &BTreeSet<Position>, compat: bool) -> Score {
    let total = (a.len() + b.len()) as u64;
    if total == 0 {
        return Ratio::from_integer(0);
    }
    let common = a.intersection(b).count() as u64;
    Ratio::new(if compat { common } else { 2 * common }, total)
}

/// Normalized Dice overlap of two token spans.
pub fn overlap_score(a: &TokenSpan, b: &TokenSpan) -> Result<Score> {
    if a.null_span || b.null_span {
        return Err(Error::NullSpan);
    }
    Ok(dice(&a.positions, &b.positions, false))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    #[serde(serialize_with = "score_string")]
    pub score: Score,
}

fn score_string<S: serde::Serializer>(s: &Score, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.serialize_str(&s.to_string())
}

/// A one-to-one matching in greedy pick order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Alignment {
    pub pairs: Vec<Pair>,
    pub unaligned_a: BTreeSet<usize>,
    pub unaligned_b: BTreeSet<usize>,
    #[serde(serialize_with = "score_string")]
    pub mu: Score,
}

impl Alignment {
    pub fn matched(&self) -> usize {
        self.pairs.len()
    }
}

struct Candidate<'a> {
    score: Score,
    a: usize,
    b: usize,
    pa: &'a BTreeSet<Position>,
    pb: &'a BTreeSet<Position>,
}

impl Candidate<'_> {
    /// Tie-break key, unchanged when the two sides swap roles: document
    /// order, then combined length, then the spans themselves.
    #[allow(clippy::type_complexity)]
    fn key(&self) -> (usize, usize, usize, &BTreeSet<Position>, &BTreeSet<Position>, usize, usize) {
        let la = self.pa.first().copied().unwrap_or(usize::MAX);
        let lb = self.pb.first().copied().unwrap_or(usize::MAX);
        let (lo, hi) = if self.pa <= self.pb { (self.pa, self.pb) } else { (self.pb, self.pa) };
        (
            la.min(lb),
            la.max(lb),
            self.pa.len() + self.pb.len(),
            lo,
            hi,
            self.a.min(self.b),
            self.a.max(self.b),
        )
    }

    fn order(&self, other: &Self) -> Ordering {
        other
            .score
            .cmp(&self.score)
            .then_with(|| self.key().cmp(&other.key()))
            .then(self.a.cmp(&other.a))
    }
}

/// Picks the best remaining pair until none scores above zero and at least
/// `mu`. Items are identified by index and ordered for ties by `pa`/`pb`.
pub fn greedy_align(
    pa: &[BTreeSet<Position>],
    pb: &[BTreeSet<Position>],
    score: impl Fn(usize, usize) -> Score,
    mu: Score,
) -> Alignment {
    let zero = Ratio::from_integer(0);
    let mut candidates = Vec::new();
    for (i, a) in pa.iter().enumerate() {
        for (j, b) in pb.iter().enumerate() {
            let s = score(i, j);
            if s > zero && s >= mu {
                candidates.push(Candidate { score: s, a: i, b: j, pa: a, pb: b });
            }
        }
    }
    candidates.sort_by(|x, y| x.order(y));

    let mut unaligned_a: BTreeSet<usize> = (0..pa.len()).collect();
    let mut unaligned_b: BTreeSet<usize> = (0..pb.len()).collect();
    let mut pairs = Vec::new();
    for c in candidates {
        if unaligned_a.contains(&c.a) && unaligned_b.contains(&c.b) {
            unaligned_a.remove(&c.a);
            unaligned_b.remove(&c.b);
            pairs.push(Pair { a: c.a, b: c.b, score: c.score });
        }
    }
    Alignment { pairs, unaligned_a, unaligned_b, mu }
}

/// The mentions of a layer that take part in alignment: null spans are
/// left out and a span repeated for the same unit is kept once.
#[derive(Clone, Debug)]
pub struct FlatLayer<'a> {
    pub mentions: Vec<&'a SpanMention>,
    /// Cluster index of each mention.
    pub cluster_of: Vec<usize>,
    /// Mention indices per cluster, for clusters with at least one mention.
    pub clusters: BTreeMap<usize, Vec<usize>>,
}

impl<'a> FlatLayer<'a> {
    pub fn new(layer: &'a SpanLayer) -> Self {
        let mut seen = BTreeSet::new();
        let mut flat = FlatLayer {
            mentions: Vec::new(),
            cluster_of: Vec::new(),
            clusters: BTreeMap::new(),
        };
        for (ci, c) in layer.clusters.iter().enumerate() {
            for m in &c.mentions {
                if m.null || m.positions.is_empty() || !seen.insert((&m.positions, &m.unit)) {
                    continue;
                }
                flat.clusters.entry(ci).or_default().push(flat.mentions.len());
                flat.mentions.push(m);
                flat.cluster_of.push(ci);
            }
        }
        flat
    }

    fn positions(&self) -> Vec<BTreeSet<Position>> {
        self.mentions.iter().map(|m| m.positions.clone()).collect()
    }

    /// Indices of clusters taking part in referent alignment.
    pub fn cluster_ids(&self) -> Vec<usize> {
        self.clusters.keys().copied().collect()
    }

    fn cluster_positions(&self, ci: usize) -> BTreeSet<Position> {
        self.clusters[&ci]
            .iter()
            .flat_map(|&m| self.mentions[m].positions.iter().copied())
            .collect()
    }
}

fn check_docs(a: &SpanLayer, b: &SpanLayer) -> Result<()> {
    if a.doc_id != b.doc_id {
        return Err(Error::DocMismatch {
            left: a.doc_id.clone(),
            right: b.doc_id.clone(),
        });
    }
    Ok(())
}

/// Aligns the mentions of two layers. Pair indices refer to
/// [`FlatLayer::mentions`].
pub fn align_mentions(a: &SpanLayer, b: &SpanLayer, mu: Score, compat: bool) -> Result<Alignment> {
    check_docs(a, b)?;
    Ok(align_flat_mentions(&FlatLayer::new(a), &FlatLayer::new(b), mu, compat))
}

pub fn align_flat_mentions(a: &FlatLayer, b: &FlatLayer, mu: Score, compat: bool) -> Alignment {
    let (pa, pb) = (a.positions(), b.positions());
    greedy_align(&pa, &pb, |i, j| dice(&pa[i], &pb[j], compat), mu)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReferentScore {
    /// Dice over the mention-alignment links joining two clusters.
    #[default]
    AlignedMentions,
    /// Dice over the union of the clusters' token positions.
    TokenUnion,
}

/// Aligns the clusters of two layers given a mention alignment `m`. Pair
/// indices refer to cluster positions in the layers.
pub fn align_referents(
    a: &SpanLayer,
    b: &SpanLayer,
    m: &Alignment,
    mu: Score,
    compat: bool,
    scoring: ReferentScore,
) -> Result<Alignment> {
    check_docs(a, b)?;
    Ok(align_flat_referents(&FlatLayer::new(a), &FlatLayer::new(b), m, mu, compat, scoring))
}

pub fn align_flat_referents(
    a: &FlatLayer,
    b: &FlatLayer,
    m: &Alignment,
    mu: Score,
    compat: bool,
    scoring: ReferentScore,
) -> Alignment {
    let ids_a = a.cluster_ids();
    let ids_b = b.cluster_ids();
    let pa: Vec<_> = ids_a.iter().map(|&c| a.cluster_positions(c)).collect();
    let pb: Vec<_> = ids_b.iter().map(|&c| b.cluster_positions(c)).collect();

    let mut links: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for pair in &m.pairs {
        *links.entry((a.cluster_of[pair.a], b.cluster_of[pair.b])).or_default() += 1;
    }
    let score = |i: usize, j: usize| match scoring {
        ReferentScore::AlignedMentions => {
            let (ca, cb) = (ids_a[i], ids_b[j]);
            let n = links.get(&(ca, cb)).copied().unwrap_or(0);
            let total = (a.clusters[&ca].len() + b.clusters[&cb].len()) as u64;
            Ratio::new(if compat { n } else { 2 * n }, total)
        }
        ReferentScore::TokenUnion => dice(&pa[i], &pb[j], compat),
    };
    let local = greedy_align(&pa, &pb, score, mu);
    Alignment {
        pairs: local
            .pairs
            .into_iter()
            .map(|p| Pair { a: ids_a[p.a], b: ids_b[p.b], score: p.score })
            .collect(),
        unaligned_a: local.unaligned_a.into_iter().map(|i| ids_a[i]).collect(),
        unaligned_b: local.unaligned_b.into_iter().map(|j| ids_b[j]).collect(),
        mu,
    }
}

/// JSON rendering of a mention and referent alignment with the aligned
/// spans spelled out.
pub fn alignment_json(
    a: &SpanLayer,
    b: &SpanLayer,
    mentions: &Alignment,
    referents: &Alignment,
) -> serde_json::Value {
    let (fa, fb) = (FlatLayer::new(a), FlatLayer::new(b));
    let mention_pairs: Vec<_> = mentions
        .pairs
        .iter()
        .map(|p| {
            serde_json::json!({
                "a": fa.mentions[p.a].positions,
                "b": fb.mentions[p.b].positions,
                "a_unit": fa.mentions[p.a].unit,
                "b_unit": fb.mentions[p.b].unit,
                "score": p.score.to_string(),
            })
        })
        .collect();
    let referent_pairs: Vec<_> = referents
        .pairs
        .iter()
        .map(|p| {
            serde_json::json!({
                "a": a.clusters[p.a].label,
                "b": b.clusters[p.b].label,
                "score": p.score.to_string(),
            })
        })
        .collect();
    serde_json::json!({
        "doc_id": a.doc_id,
        "mu": mentions.mu.to_string(),
        "mentions": {
            "pairs": mention_pairs,
            "unaligned_a": mentions.unaligned_a.iter().map(|&i| &fa.mentions[i].positions).collect::<Vec<_>>(),
            "unaligned_b": mentions.unaligned_b.iter().map(|&i| &fb.mentions[i].positions).collect::<Vec<_>>(),
        },
        "referents": {
            "pairs": referent_pairs,
            "unaligned_a": referents.unaligned_a.iter().map(|&i| &a.clusters[i].label).collect::<Vec<_>>(),
            "unaligned_b": referents.unaligned_b.iter().map(|&i| &b.clusters[i].label).collect::<Vec<_>>(),
        },
    })
}
