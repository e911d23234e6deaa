#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::path::PathBuf;

use num_rational::Ratio;
use proptest::prelude::*;

use ucoref::eval::Prf;
use ucoref::mention::{extract_candidates, CoordinationVerdict, DecisionFile, Verdict};
use ucoref::pipeline::{analyze, Analysis};
use ucoref::spans::{SpanCluster, SpanLayer, SpanMention};
use ucoref::ucca::{parse_passage, Passage, UnitId};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

/// Passage fixtures with their decision files, where present.
pub const PASSAGES: &[&str] = &[
    "fig1",
    "advice",
    "oldbook",
    "ivy_and",
    "ivy_or",
    "partitive_flat",
    "partitive_nested",
    "relational",
    "time",
];

pub fn analyze_fixture(stem: &str) -> Analysis {
    let xml = fixture_path(&format!("{stem}.xml"));
    let json = fixture_path(&format!("{stem}.json"));
    analyze(&xml, json.exists().then_some(json.as_path())).unwrap()
}

/// Deterministic choices drawn from a proptest-generated vector.
pub struct Picker {
    xs: Vec<u32>,
    i: usize,
}

impl Picker {
    pub fn new(xs: Vec<u32>) -> Self {
        assert!(!xs.is_empty());
        Picker { xs, i: 0 }
    }

    pub fn pick(&mut self, n: usize) -> usize {
        let v = self.xs[self.i % self.xs.len()].wrapping_add((self.i / self.xs.len()) as u32 * 7919);
        self.i += 1;
        v as usize % n
    }

    pub fn chance(&mut self, percent: usize) -> bool {
        self.pick(100) < percent
    }
}

struct Builder {
    words: Vec<(String, u32, bool)>,
    units: Vec<(String, String, Vec<String>, bool)>,
    next: usize,
    paragraph: u32,
}

impl Builder {
    fn unit(&mut self, node_type: &str) -> usize {
        self.next += 1;
        self.units.push((format!("1.{}", self.next), node_type.to_string(), Vec::new(), false));
        self.units.len() - 1
    }

    fn id(&self, u: usize) -> String {
        self.units[u].0.clone()
    }

    fn word(&mut self, text: &str, punct: bool) -> String {
        self.words.push((text.to_string(), self.paragraph, punct));
        format!("0.{}", self.words.len())
    }

    fn leaf(&mut self, texts: &[&str]) -> usize {
        let u = self.unit("FN");
        for t in texts {
            let w = self.word(t, false);
            self.units[u].2.push(format!(r#"<edge toID="{w}" type="Terminal" />"#));
        }
        u
    }

    fn edge(&mut self, parent: usize, child: usize, cat: &str) {
        let to = self.id(child);
        self.units[parent].2.push(format!(r#"<edge toID="{to}" type="{cat}" />"#));
    }

    fn remote(&mut self, parent: usize, child: usize, cat: &str) {
        let to = self.id(child);
        self.units[parent]
            .2
            .push(format!(r#"<edge toID="{to}" type="{cat}"><attributes remote="True" /></edge>"#));
    }

    fn xml(&self, doc_id: &str) -> String {
        let mut out = format!(r#"<root passageID="{doc_id}"><layer layerID="0">"#);
        for (i, (text, par, punct)) in self.words.iter().enumerate() {
            let kind = if *punct { "Punctuation" } else { "Word" };
            let _ = write!(
                out,
                r#"<node ID="0.{}" type="{kind}"><attributes text="{text}" paragraph="{par}" /></node>"#,
                i + 1
            );
        }
        out.push_str(r#"</layer><layer layerID="1">"#);
        for (id, node_type, edges, implicit) in &self.units {
            let _ = write!(out, r#"<node ID="{id}" type="{node_type}">"#);
            if *implicit {
                out.push_str(r#"<attributes implicit="True" />"#);
            }
            for e in edges {
                out.push_str(e);
            }
            out.push_str("</node>");
        }
        out.push_str("</layer></root>");
        out
    }
}

const NOUNS: &[&str] = &["dog", "cat", "Ivy", "book", "fears", "teacher", "week", "school"];
const VERBS: &[&str] = &["saw", "left", "wants", "read", "helped"];

/// A participant-like unit: bare noun, noun phrase, coordination,
/// implicit unit or embedded scene.
fn participant(b: &mut Builder, r: &mut Picker, depth: usize, targets: &mut Vec<usize>) -> usize {
    let noun = NOUNS[r.pick(NOUNS.len())];
    match r.pick(if depth > 1 { 4 } else { 5 }) {
        0 => {
            let u = b.leaf(&[noun]);
            targets.push(u);
            u
        }
        1 => {
            let u = b.unit("FN");
            if r.chance(50) {
                let f = b.leaf(&["the"]);
                b.edge(u, f, "F");
            }
            if r.chance(50) {
                let e = b.leaf(&["old"]);
                b.edge(u, e, "E");
            }
            if r.chance(20) {
                let q = b.leaf(&["5"]);
                b.edge(u, q, "Q");
            }
            let c = b.leaf(&[noun]);
            b.edge(u, c, "C");
            targets.push(u);
            targets.push(c);
            u
        }
        2 => {
            let u = b.unit("FN");
            let c1 = b.leaf(&[noun]);
            b.edge(u, c1, "C");
            let n = b.leaf(&["and"]);
            b.edge(u, n, "N");
            let c2 = b.leaf(&[NOUNS[r.pick(NOUNS.len())]]);
            b.edge(u, c2, "C");
            targets.push(c1);
            targets.push(c2);
            u
        }
        3 => {
            let u = b.unit("FN");
            b.units[u].3 = true;
            u
        }
        _ => scene(b, r, depth + 1, targets),
    }
}

fn scene(b: &mut Builder, r: &mut Picker, depth: usize, targets: &mut Vec<usize>) -> usize {
    let u = b.unit("FN");
    for _ in 0..r.pick(3) {
        let a = participant(b, r, depth, targets);
        b.edge(u, a, "A");
    }
    let verb = VERBS[r.pick(VERBS.len())];
    let p = if r.chance(15) {
        b.leaf(&["get", "over"])
    } else {
        b.leaf(&[verb])
    };
    b.edge(u, p, if r.chance(30) { "S" } else { "P" });
    if r.chance(30) {
        let d = b.leaf(&[if r.chance(50) { "not" } else { "quickly" }]);
        b.edge(u, d, "D");
    }
    if r.chance(30) {
        let t = b.unit("FN");
        let rel = b.leaf(&["in"]);
        b.edge(t, rel, "R");
        let c = b.leaf(&["May"]);
        b.edge(t, c, "C");
        b.edge(u, t, "T");
    }
    if r.chance(20) {
        let f = b.leaf(&["please"]);
        b.edge(u, f, "F");
    }
    u
}

/// A random valid passage: one to three top-level scenes in separate
/// paragraphs, with punctuation, implicit units and cross-scene remote
/// Participant edges.
pub fn random_passage(choices: Vec<u32>) -> String {
    let mut r = Picker::new(choices);
    let mut b = Builder {
        words: Vec::new(),
        units: Vec::new(),
        next: 0,
        paragraph: 1,
    };
    let root = b.unit("FN");
    let mut scenes = Vec::new();
    let mut targets_by_scene = Vec::new();
    for i in 0..1 + r.pick(3) {
        b.paragraph = i as u32 + 1;
        let mut targets = Vec::new();
        let s = scene(&mut b, &mut r, 0, &mut targets);
        b.edge(root, s, "H");
        if r.chance(70) {
            let w = b.word("?", true);
            let pu = b.unit("PNCT");
            b.units[pu].2.push(format!(r#"<edge toID="{w}" type="Terminal" />"#));
            b.edge(root, pu, "U");
        }
        scenes.push(s);
        targets_by_scene.push(targets);
    }
    for (i, &s) in scenes.iter().enumerate() {
        if !r.chance(50) {
            continue;
        }
        let others: Vec<usize> = targets_by_scene
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, t)| t.iter().copied())
            .collect();
        if !others.is_empty() {
            let target = others[r.pick(others.len())];
            b.remote(s, target, "A");
        }
    }
    b.xml("rand")
}

pub fn passage_choices() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(any::<u32>(), 1..48)
}

/// Random verdicts, coordination verdicts and cluster labels for a passage.
pub fn random_decisions(p: &Passage, r: &mut Picker, labels: usize) -> DecisionFile {
    let c = extract_candidates(p).unwrap();
    let mut d = DecisionFile::empty(&p.doc_id);
    for u in c.candidates.keys() {
        if r.chance(50) {
            let v = if r.chance(50) { Verdict::Referring } else { Verdict::NonReferring };
            d.verdicts.insert(u.clone(), v);
        }
    }
    for u in &c.multi_center {
        let v = if r.chance(50) {
            CoordinationVerdict::WholeUnitReferring
        } else {
            CoordinationVerdict::ConjunctsOnly
        };
        d.coordination.insert(u.clone(), v);
    }
    let (_, ms) = ucoref::mention::identify_mentions(p, &d).unwrap();
    for u in ms.mentions.keys() {
        if r.chance(60) {
            d.clusters.push((u.clone(), format!("r{}", r.pick(labels.max(1)))));
        }
    }
    d
}

pub fn parse(xml: &str) -> Passage {
    parse_passage(xml).unwrap()
}

/// A span layer over positions `1..=max_pos` with at most `max_mentions`
/// mentions spread over up to four clusters.
pub fn span_layer(max_mentions: usize, max_pos: usize) -> impl Strategy<Value = SpanLayer> {
    let span = (1..=max_pos, 1..=3usize, any::<bool>()).prop_map(move |(start, len, gap)| {
        let mut positions: BTreeSet<usize> = (start..start + len).filter(|&p| p <= max_pos).collect();
        if gap && positions.len() > 1 {
            let second = *positions.iter().nth(1).unwrap();
            positions.remove(&second);
        }
        positions
    });
    prop::collection::vec((span, 0..4usize), 0..=max_mentions).prop_map(|ms| {
        let mut clusters: BTreeMap<usize, Vec<SpanMention>> = BTreeMap::new();
        for (positions, c) in ms {
            clusters.entry(c).or_default().push(SpanMention::external(positions));
        }
        SpanLayer {
            doc_id: "d".into(),
            clusters: clusters
                .into_iter()
                .map(|(c, mentions)| SpanCluster {
                    label: format!("c{c}"),
                    mentions,
                })
                .collect(),
        }
    })
}

pub type Score = Ratio<u64>;

/// An item index with its span.
pub type Side<'a> = (usize, &'a BTreeSet<usize>);

pub fn dice(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> Score {
    let common = a.iter().filter(|p| b.contains(p)).count() as u64;
    Ratio::new(2 * common, (a.len() + b.len()) as u64)
}

/// Pair preference used by the oracle: higher score first, then document
/// order, combined length and span content, independent of which side a
/// span comes from.
pub fn pair_rank(score: Score, (i, a): Side, (j, b): Side, other: (Score, Side, Side)) -> Ordering {
    let key = |s: Score, (i, a): Side, (j, b): Side| {
        let la = a.iter().next().copied().unwrap_or(usize::MAX);
        let lb = b.iter().next().copied().unwrap_or(usize::MAX);
        let (lo, hi) = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        (
            std::cmp::Reverse(s),
            la.min(lb),
            la.max(lb),
            a.len() + b.len(),
            lo,
            hi,
            i.min(j),
            i.max(j),
            i,
        )
    };
    key(score, (i, a), (j, b)).cmp(&key(other.0, other.1, other.2))
}

/// Exhaustive best-first oracle: among all one-to-one matchings of pairs
/// scoring above zero and at least `mu`, the one whose pairs, listed best
/// first, form the greatest sequence.
pub fn oracle_align(
    pa: &[BTreeSet<usize>],
    pb: &[BTreeSet<usize>],
    score: &dyn Fn(usize, usize) -> Score,
    mu: Score,
) -> Vec<(usize, usize)> {
    let zero = Ratio::from_integer(0);
    let eligible: Vec<Vec<usize>> = (0..pa.len())
        .map(|i| (0..pb.len()).filter(|&j| score(i, j) > zero && score(i, j) >= mu).collect())
        .collect();
    let cmp_pair = |x: &(usize, usize), y: &(usize, usize)| {
        pair_rank(score(x.0, x.1), (x.0, &pa[x.0]), (x.1, &pb[x.1]), (score(y.0, y.1), (y.0, &pa[y.0]), (y.1, &pb[y.1])))
    };
    // Ordering::Less means the first sequence is preferred.
    let cmp_seq = |x: &[(usize, usize)], y: &[(usize, usize)]| {
        for (p, q) in x.iter().zip(y) {
            match cmp_pair(p, q) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        y.len().cmp(&x.len())
    };

    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut current = Vec::new();
    let mut used = vec![false; pb.len()];
    type Visit<'v> = dyn FnMut(&[(usize, usize)]) + 'v;
    fn walk(
        i: usize,
        eligible: &[Vec<usize>],
        used: &mut [bool],
        current: &mut Vec<(usize, usize)>,
        visit: &mut Visit,
    ) {
        if i == eligible.len() {
            visit(current);
            return;
        }
        walk(i + 1, eligible, used, current, visit);
        for &j in &eligible[i] {
            if !used[j] {
                used[j] = true;
                current.push((i, j));
                walk(i + 1, eligible, used, current, visit);
                current.pop();
                used[j] = false;
            }
        }
    }
    walk(0, &eligible, &mut used, &mut current, &mut |m| {
        let mut sorted = m.to_vec();
        sorted.sort_by(|x, y| cmp_pair(x, y));
        if cmp_seq(&sorted, &best) == Ordering::Less {
            best = sorted;
        }
    });
    best
}

/// Size of the largest one-to-one matching between equal spans.
pub fn exact_match_count(pa: &[BTreeSet<usize>], pb: &[BTreeSet<usize>]) -> usize {
    let mut count: BTreeMap<&BTreeSet<usize>, (usize, usize)> = BTreeMap::new();
    for a in pa {
        count.entry(a).or_default().0 += 1;
    }
    for b in pb {
        count.entry(b).or_default().1 += 1;
    }
    count.values().map(|(x, y)| x.min(y)).sum()
}

/// Non-null mention spans after dropping repeats of the same span and unit.
pub fn flat_spans(l: &SpanLayer) -> Vec<BTreeSet<usize>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for m in l.clusters.iter().flat_map(|c| &c.mentions) {
        if !m.null && !m.positions.is_empty() && seen.insert((m.positions.clone(), m.unit.clone())) {
            out.push(m.positions.clone());
        }
    }
    out
}

/// A gold passage of `n` scenes, each of the shape
/// `[the_F big_E dog_C]_A saw_P [cat_C and_N mouse_C]_A`, where every
/// scene after the first also has a remote Participant edge to the
/// previous scene's Center `dog`. Gold decisions keep each noun phrase
/// coreferent with its Center (a mention everywhere but the last scene),
/// give every conjunct its own referent and mark coordinations as
/// whole-unit referring.
pub fn synthetic_gold(n: usize) -> (Passage, DecisionFile, Vec<Scene>) {
    let mut b = Builder {
        words: Vec::new(),
        units: Vec::new(),
        next: 0,
        paragraph: 1,
    };
    let root = b.unit("FN");
    let mut scenes = Vec::new();
    let mut prev_center: Option<usize> = None;
    for i in 0..n {
        b.paragraph = i as u32 + 1;
        let s = b.unit("FN");
        let np = b.unit("FN");
        let f = b.leaf(&["the"]);
        let e = b.leaf(&["big"]);
        let c = b.leaf(&["dog"]);
        b.edge(np, f, "F");
        b.edge(np, e, "E");
        b.edge(np, c, "C");
        b.edge(s, np, "A");
        let p = b.leaf(&["saw"]);
        b.edge(s, p, "P");
        let co = b.unit("FN");
        let c1 = b.leaf(&["cat"]);
        let nn = b.leaf(&["and"]);
        let c2 = b.leaf(&["mouse"]);
        b.edge(co, c1, "C");
        b.edge(co, nn, "N");
        b.edge(co, c2, "C");
        b.edge(s, co, "A");
        if let Some(pc) = prev_center {
            b.remote(s, pc, "A");
        }
        b.edge(root, s, "H");
        prev_center = Some(c);
        scenes.push(Scene {
            scene: b.id(s),
            phrase: b.id(np),
            center: b.id(c),
            coordination: b.id(co),
            conjuncts: [b.id(c1), b.id(c2)],
        });
    }
    let p = parse_passage(&b.xml("synthetic")).unwrap();
    let mut d = DecisionFile::empty("synthetic");
    for (i, s) in scenes.iter().enumerate() {
        d.coordination.insert(UnitId::new(&s.coordination), CoordinationVerdict::WholeUnitReferring);
        d.clusters.push((UnitId::new(&s.phrase), format!("dog{i}")));
        if i + 1 < n {
            d.clusters.push((UnitId::new(&s.center), format!("dog{i}")));
        }
        d.clusters.push((UnitId::new(&s.conjuncts[0]), format!("cat{i}")));
        d.clusters.push((UnitId::new(&s.conjuncts[1]), format!("mouse{i}")));
    }
    (p, d, scenes)
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub scene: String,
    pub phrase: String,
    pub center: String,
    pub coordination: String,
    pub conjuncts: [String; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    /// Put both conjuncts of a coordination into one referent.
    MergeConjuncts,
    /// Move a phrase's Center into a referent of its own.
    SplitCenter,
}

/// Applies one mutation to scene `i` of a gold decision file and returns
/// the rule expected to fire together with the units it should name.
pub fn mutate(d: &DecisionFile, scenes: &[Scene], i: usize, m: Mutation) -> (DecisionFile, &'static str, BTreeSet<UnitId>) {
    let mut out = d.clone();
    let s = &scenes[i];
    match m {
        Mutation::MergeConjuncts => {
            let first = UnitId::new(&s.conjuncts[0]);
            let second = UnitId::new(&s.conjuncts[1]);
            let label = out.clusters.iter().find(|(u, _)| *u == first).unwrap().1.clone();
            for (u, l) in out.clusters.iter_mut() {
                if *u == second {
                    *l = label.clone();
                }
            }
            (out, "conjunct-merge", [first, second].into())
        }
        Mutation::SplitCenter => {
            let center = UnitId::new(&s.center);
            for (u, l) in out.clusters.iter_mut() {
                if *u == center {
                    *l = format!("split{i}");
                }
            }
            (out, "center-coref", [UnitId::new(&s.phrase), center].into())
        }
    }
}

/// Mentions as (positions, cluster) after the usual filtering.
fn mentions(l: &SpanLayer) -> Vec<(BTreeSet<usize>, usize)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (c, cl) in l.clusters.iter().enumerate() {
        for m in &cl.mentions {
            if !m.null && !m.positions.is_empty() && seen.insert((m.positions.clone(), m.unit.clone())) {
                out.push((m.positions.clone(), c));
            }
        }
    }
    out
}

/// The six cells computed from the exhaustive oracle.
pub fn oracle_grid(a: &SpanLayer, b: &SpanLayer, mu: Score) -> [Prf; 6] {
    let (ma, mb) = (mentions(a), mentions(b));
    let pa: Vec<_> = ma.iter().map(|m| m.0.clone()).collect();
    let pb: Vec<_> = mb.iter().map(|m| m.0.clone()).collect();
    let clusters = |ms: &[(BTreeSet<usize>, usize)]| {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, m) in ms.iter().enumerate() {
            out.entry(m.1).or_default().push(i);
        }
        out
    };
    let (ca, cb) = (clusters(&ma), clusters(&mb));
    let ka: Vec<usize> = ca.keys().copied().collect();
    let kb: Vec<usize> = cb.keys().copied().collect();
    let union = |ms: &[(BTreeSet<usize>, usize)], idx: &[usize]| -> BTreeSet<usize> {
        idx.iter().flat_map(|&i| ms[i].0.iter().copied()).collect()
    };
    let ua: Vec<_> = ka.iter().map(|k| union(&ma, &ca[k])).collect();
    let ub: Vec<_> = kb.iter().map(|k| union(&mb, &cb[k])).collect();

    let one = Ratio::from_integer(1);
    let mention_score = |i: usize, j: usize| dice(&pa[i], &pb[j]);
    let mut out = Vec::new();
    for m_mu in [one, mu] {
        let links = oracle_align(&pa, &pb, &mention_score, m_mu);
        out.push(Prf::new(links.len(), pa.len(), pb.len()));
        let referent_score = |i: usize, j: usize| {
            let n = links
                .iter()
                .filter(|(x, y)| ma[*x].1 == ka[i] && mb[*y].1 == kb[j])
                .count() as u64;
            Ratio::new(2 * n, (ca[&ka[i]].len() + cb[&kb[j]].len()) as u64)
        };
        for r_mu in [one, mu] {
            let r = oracle_align(&ua, &ub, &referent_score, r_mu);
            out.push(Prf::new(r.len(), ka.len(), kb.len()));
        }
    }
    out.try_into().unwrap()
}
