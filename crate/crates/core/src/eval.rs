//! Mention and referent precision, recall and F-score between two span
//! layers, treating layer A as the prediction and B as the reference.

use std::fmt::Write;
use std::ops::AddAssign;

use num_rational::Ratio;
use serde::Serialize;

use crate::align::{align_flat_mentions, align_flat_referents, Alignment, FlatLayer, ReferentScore, Score};
use crate::error::{Error, Result};
use crate::spans::{SpanLayer, SpanMode};

/// Match counts; the scores derive from them, so reports aggregate by
/// summing counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Prf {
    pub matched: usize,
    pub predicted: usize,
    pub reference: usize,
}

impl Prf {
    pub fn new(matched: usize, predicted: usize, reference: usize) -> Self {
        Prf { matched, predicted, reference }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.matched, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.matched, self.reference)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Exact precision, recall and F-score.
    pub fn exact(&self) -> (Ratio<u64>, Ratio<u64>, Ratio<u64>) {
        let m = self.matched as u64;
        let q = |d: usize| if d == 0 { Ratio::from_integer(0) } else { Ratio::new(m, d as u64) };
        let total = (self.predicted + self.reference) as u64;
        let f = if m == 0 { Ratio::from_integer(0) } else { Ratio::new(2 * m, total) };
        (q(self.predicted), q(self.reference), f)
    }

    /// Percentages with one decimal.
    pub fn percentages(&self) -> [String; 3] {
        [self.precision(), self.recall(), self.f1()].map(|v| format!("{:.1}", 100.0 * v))
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

impl AddAssign for Prf {
    fn add_assign(&mut self, o: Self) {
        self.matched += o.matched;
        self.predicted += o.predicted;
        self.reference += o.reference;
    }
}

/// Referent scores over one mention base.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReferentCells {
    pub exact: Prf,
    pub fuzzy: Prf,
}

/// Scores for one mention match mode: the mention row and the two
/// referent rows built on it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MentionBase {
    pub mentions: Prf,
    pub referents: ReferentCells,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EvalReport {
    /// Mentions matched on identical token sets.
    pub exact: MentionBase,
    /// Mentions matched by thresholded overlap.
    pub fuzzy: MentionBase,
}

impl AddAssign for EvalReport {
    fn add_assign(&mut self, o: Self) {
        for (mine, theirs) in [(&mut self.exact, o.exact), (&mut self.fuzzy, o.fuzzy)] {
            mine.mentions += theirs.mentions;
            mine.referents.exact += theirs.referents.exact;
            mine.referents.fuzzy += theirs.referents.fuzzy;
        }
    }
}

impl EvalReport {
    /// Rows in the order mention base, then level.
    pub fn rows(&self) -> [(&'static str, &'static str, Prf); 6] {
        [
            ("exact", "mention", self.exact.mentions),
            ("exact", "referent-exact", self.exact.referents.exact),
            ("exact", "referent-fuzzy", self.exact.referents.fuzzy),
            ("fuzzy", "mention", self.fuzzy.mentions),
            ("fuzzy", "referent-exact", self.fuzzy.referents.exact),
            ("fuzzy", "referent-fuzzy", self.fuzzy.referents.fuzzy),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalConfig {
    /// Threshold of the fuzzy mention and referent alignments.
    pub mu: Score,
    pub compat_dice: bool,
    pub referent_score: ReferentScore,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mu: Ratio::from_integer(0),
            compat_dice: false,
            referent_score: ReferentScore::AlignedMentions,
        }
    }
}

fn referent_prf(a: &FlatLayer, b: &FlatLayer, al: &Alignment) -> Prf {
    Prf::new(al.matched(), a.clusters.len(), b.clusters.len())
}

/// Fills all six cells for a pair of layers over the same document.
pub fn score(a: &SpanLayer, b: &SpanLayer, cfg: &EvalConfig) -> Result<EvalReport> {
    if a.doc_id != b.doc_id {
        return Err(Error::DocMismatch {
            left: a.doc_id.clone(),
            right: b.doc_id.clone(),
        });
    }
    let (fa, fb) = (FlatLayer::new(a), FlatLayer::new(b));
    let one = Ratio::from_integer(1);
    let mention_prf = |al: &Alignment| Prf::new(al.matched(), fa.mentions.len(), fb.mentions.len());

    let base = |m: &Alignment| {
        let exact = align_flat_referents(&fa, &fb, m, one, false, cfg.referent_score);
        let fuzzy = align_flat_referents(&fa, &fb, m, cfg.mu, cfg.compat_dice, cfg.referent_score);
        MentionBase {
            mentions: mention_prf(m),
            referents: ReferentCells {
                exact: referent_prf(&fa, &fb, &exact),
                fuzzy: referent_prf(&fa, &fb, &fuzzy),
            },
        }
    };
    let exact_mentions = align_flat_mentions(&fa, &fb, one, false);
    let fuzzy_mentions = align_flat_mentions(&fa, &fb, cfg.mu, cfg.compat_dice);
    Ok(EvalReport {
        exact: base(&exact_mentions),
        fuzzy: base(&fuzzy_mentions),
    })
}

pub const TABLE_HEADER: &str = "scheme\tspan-mode\tmatch-mode\tlevel\tP\tR\tF";

/// Appends the six report rows for one scheme and span mode.
pub fn write_table_rows(out: &mut String, scheme: &str, mode: SpanMode, report: &EvalReport) {
    for (matching, level, prf) in report.rows() {
        let [p, r, f] = prf.percentages();
        let _ = writeln!(out, "{scheme}\t{mode}\t{matching}\t{level}\t{p}\t{r}\t{f}");
    }
}
