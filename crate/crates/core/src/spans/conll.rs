//! CoNLL-2012 coreference column format.
//!
//! One token per line, the cluster markup in the last column: `(n` opens a
//! mention of cluster `n`, `n)` closes one, `(n)` is a one-token mention and
//! `-` marks no markup. Pieces on a token are joined with `|`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spans::{SpanCluster, SpanLayer, SpanMention};
use crate::ucca::{Passage, Position};

/// Writes the layer over the passage tokens. Null and discontiguous spans
/// have no column representation and are left out; cluster numbers follow
/// cluster order.
pub fn write_conll(p: &Passage, layer: &SpanLayer) -> String {
    let mut opens: BTreeMap<Position, Vec<(Position, usize)>> = BTreeMap::new();
    let mut closes: BTreeMap<Position, Vec<(Position, usize)>> = BTreeMap::new();
    for (id, c) in layer.clusters.iter().enumerate() {
        for m in c.mentions.iter().filter(|m| !m.null && m.is_contiguous()) {
            let (first, last) = (m.positions.first().copied().unwrap(), m.positions.last().copied().unwrap());
            opens.entry(first).or_default().push((last, id));
            closes.entry(last).or_default().push((first, id));
        }
    }

    let mut out = format!("#begin document ({}); part 000\n", layer.doc_id);
    let mut word = 0;
    let mut paragraph = None;
    for t in &p.terminals {
        if paragraph.is_some_and(|prev| prev != t.paragraph) {
            out.push('\n');
            word = 0;
        }
        paragraph = Some(t.paragraph);

        let pos = t.position;
        let mut starting = opens.get(&pos).cloned().unwrap_or_default();
        // outer mentions open first
        starting.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut ending = closes.get(&pos).cloned().unwrap_or_default();
        // inner mentions close first
        ending.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut pieces = Vec::new();
        for &(last, id) in &starting {
            if last != pos {
                pieces.push(format!("({id}"));
            }
        }
        for &(last, id) in &starting {
            if last == pos {
                pieces.push(format!("({id})"));
            }
        }
        for &(first, id) in &ending {
            if first != pos {
                pieces.push(format!("{id})"));
            }
        }
        let coref = if pieces.is_empty() {
            "-".to_string()
        } else {
            pieces.join("|")
        };
        let _ = writeln!(out, "{}\t0\t{word}\t{}\t{coref}", layer.doc_id, t.text);
        word += 1;
    }
    out.push_str("\n#end document\n");
    out
}

/// Reads a single-document CoNLL-2012 file. Token positions count from 1
/// across the whole document; cluster ids become labels.
pub fn read_conll(path: &Path, text: &str) -> Result<SpanLayer> {
    let format_err = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };

    let mut doc_id = None;
    let mut position: Position = 0;
    let mut open: BTreeMap<String, Vec<Position>> = BTreeMap::new();
    let mut found: BTreeMap<String, BTreeSet<SpanMention>> = BTreeMap::new();

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end();
        if let Some(rest) = line.strip_prefix("#begin document") {
            if doc_id.is_some() {
                return Err(format_err(format!("line {lineno}: more than one document")));
            }
            let rest = rest.trim();
            let name = rest
                .strip_prefix('(')
                .and_then(|r| r.split_once(')'))
                .map(|(name, _)| name.to_string())
                .ok_or_else(|| format_err(format!("line {lineno}: malformed document header")))?;
            doc_id = Some(name);
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let columns: Vec<&str> = line.split_whitespace().collect();
        if columns.len() < 2 {
            return Err(format_err(format!("line {lineno}: expected a coreference column")));
        }
        position += 1;
        let coref = columns[columns.len() - 1];
        if coref == "-" {
            continue;
        }
        for piece in coref.split('|') {
            let (opens, closes, id) = match (piece.strip_prefix('('), piece.strip_suffix(')')) {
                (Some(_), Some(_)) if piece.len() > 2 => (true, true, &piece[1..piece.len() - 1]),
                (Some(id), None) => (true, false, id),
                (None, Some(id)) => (false, true, id),
                _ => return Err(format_err(format!("line {lineno}: bad cluster markup {piece:?}"))),
            };
            if id.is_empty() || id.contains(['(', ')']) {
                return Err(format_err(format!("line {lineno}: bad cluster markup {piece:?}")));
            }
            let start = if opens && closes {
                position
            } else if opens {
                open.entry(id.to_string()).or_default().push(position);
                continue;
            } else {
                open.get_mut(id)
                    .and_then(|stack| stack.pop())
                    .ok_or_else(|| Error::UnbalancedCluster {
                        cluster: id.to_string(),
                        line: lineno,
                    })?
            };
            found
                .entry(id.to_string())
                .or_default()
                .insert(SpanMention::external(start..=position));
        }
    }
    if let Some((id, _)) = open.iter().find(|(_, stack)| !stack.is_empty()) {
        return Err(Error::UnbalancedCluster {
            cluster: id.clone(),
            line: text.lines().count(),
        });
    }

    let mut clusters: Vec<SpanCluster> = found
        .into_iter()
        .map(|(label, mentions)| SpanCluster {
            label,
            mentions: mentions.into_iter().collect(),
        })
        .collect();
    clusters.sort_by(|a, b| natural_key(&a.label).cmp(&natural_key(&b.label)));
    Ok(SpanLayer {
        doc_id: doc_id.unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        }),
        clusters,
    })
}

fn natural_key(label: &str) -> (Option<u64>, &str) {
    (label.parse().ok(), label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<SpanLayer> {
        read_conll(Path::new("test.conll"), text)
    }

    fn positions(l: &SpanLayer) -> Vec<(String, Vec<Vec<usize>>)> {
        l.clusters
            .iter()
            .map(|c| {
                (
                    c.label.clone(),
                    c.mentions.iter().map(|m| m.positions.iter().copied().collect()).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn one_multi_token_mention() {
        let l = read("#begin document (d); part 000\nd 0 0 a -\nd 0 1 b (3\nd 0 2 c -\nd 0 3 d 3)\n#end document\n").unwrap();
        assert_eq!(l.doc_id, "d");
        assert_eq!(positions(&l), [("3".to_string(), vec![vec![2, 3, 4]])]);
    }

    #[test]
    fn nested_openings() {
        let l = read("d 0 0 a (1|(2)\nd 0 1 b 1)\n").unwrap();
        assert_eq!(
            positions(&l),
            [("1".to_string(), vec![vec![1, 2]]), ("2".to_string(), vec![vec![1]])]
        );
    }

    #[test]
    fn unbalanced() {
        assert!(matches!(read("d 0 0 a (1\n"), Err(Error::UnbalancedCluster { .. })));
        assert!(matches!(read("d 0 0 a 1)\n"), Err(Error::UnbalancedCluster { line: 1, .. })));
        assert!(matches!(read("d 0 0 a (x\n"), Err(Error::UnbalancedCluster { .. })));
        assert!(matches!(read("d 0 0 a ()\n"), Err(Error::Format { .. })));
    }
}
