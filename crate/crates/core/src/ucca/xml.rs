//! Reader and writer for the UCCA passage XML interchange format.
//!
//! Layer 0 holds terminals (`Word` / `Punctuation` nodes), layer 1 holds
//! foundational units whose edges point at other units or, with type
//! `Terminal`, at layer-0 nodes. Linkage (`LKG`) nodes are skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};

use super::{Category, Edge, Passage, Position, Terminal, Unit, UnitId};
use crate::error::{Error, Result};

const LINKAGE_EDGES: &[&str] = &["LK", "LR", "LA"];

#[derive(Default)]
struct RawEdge {
    to: String,
    types: Vec<String>,
    remote: bool,
}

#[derive(Default)]
struct RawNode {
    id: String,
    node_type: String,
    attrs: BTreeMap<String, String>,
    edges: Vec<RawEdge>,
}

#[derive(Default)]
struct Builder {
    doc_id: Option<String>,
    layer: Option<String>,
    node: Option<RawNode>,
    edge: Option<RawEdge>,
    terminals: Vec<RawNode>,
    units: Vec<RawNode>,
}

fn attributes(e: &BytesStart<'_>, position: u64) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for attr in e.attributes() {
        let attr = attr.map_err(|err| Error::Xml {
            position,
            message: err.to_string(),
        })?;
        let key = attr.key.as_ref().to_string();
        let value = attr
            .normalized_value(XmlVersion::Implicit1_0)
            .map_err(|err| Error::Xml {
                position,
                message: err.to_string(),
            })?;
        out.insert(key, value.into_owned());
    }
    Ok(out)
}

fn is_true(v: Option<&String>) -> bool {
    v.is_some_and(|s| s.eq_ignore_ascii_case("true"))
}

impl Builder {
    fn open(&mut self, e: &BytesStart<'_>, position: u64) -> Result<()> {
        let mut attrs = attributes(e, position)?;
        match e.name().as_ref() {
            "root" => self.doc_id = attrs.remove("passageID"),
            "layer" => self.layer = attrs.remove("layerID"),
            "node" => {
                let id = attrs
                    .remove("ID")
                    .ok_or_else(|| Error::Schema("node without ID".into()))?;
                self.node = Some(RawNode {
                    id,
                    node_type: attrs.remove("type").unwrap_or_default(),
                    ..RawNode::default()
                });
            }
            "edge" => {
                let Some(node) = &self.node else {
                    return Err(Error::Schema("edge outside of a node".into()));
                };
                let to = attrs
                    .remove("toID")
                    .ok_or_else(|| Error::Schema(format!("edge from {} without toID", node.id)))?;
                self.edge = Some(RawEdge {
                    to,
                    types: attrs.remove("type").into_iter().collect(),
                    remote: false,
                });
            }
            "category" => {
                if let (Some(edge), Some(tag)) = (self.edge.as_mut(), attrs.remove("tag")) {
                    edge.types.push(tag);
                }
            }
            "attributes" => {
                if let Some(edge) = self.edge.as_mut() {
                    edge.remote |= is_true(attrs.get("remote"));
                } else if let Some(node) = self.node.as_mut() {
                    node.attrs.extend(attrs);
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn close(&mut self, name: &str) {
        match name {
            "edge" => {
                if let (Some(edge), Some(node)) = (self.edge.take(), self.node.as_mut()) {
                    node.edges.push(edge);
                }
            }
            "node" => {
                if let Some(node) = self.node.take() {
                    match self.layer.as_deref() {
                        Some("0") => self.terminals.push(node),
                        Some("1") => self.units.push(node),
                        _ => {}
                    }
                }
            }
            "layer" => self.layer = None,
            _ => {}
        }
    }

    fn finish(self) -> Result<Passage> {
        let doc_id = self
            .doc_id
            .ok_or_else(|| Error::Schema("root element has no passageID".into()))?;

        let mut terminals = Vec::with_capacity(self.terminals.len());
        let mut by_terminal_id: BTreeMap<String, Position> = BTreeMap::new();
        let mut positions = BTreeSet::new();
        for raw in self.terminals {
            let position = terminal_position(&raw.id)?;
            if !positions.insert(position) || by_terminal_id.contains_key(&raw.id) {
                return Err(Error::DuplicateTerminal {
                    id: raw.id,
                    position,
                });
            }
            by_terminal_id.insert(raw.id.clone(), position);
            let paragraph = match raw.attrs.get("paragraph") {
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::Schema(format!("terminal {}: bad paragraph {v:?}", raw.id)))?,
                None => 1,
            };
            terminals.push(Terminal {
                position,
                text: raw.attrs.get("text").cloned().unwrap_or_default(),
                is_punct: raw.node_type == "Punctuation",
                paragraph,
                paragraph_position: raw.attrs.get("paragraph_position").and_then(|v| v.parse().ok()),
                id: raw.id,
            });
        }
        terminals.sort_by_key(|t| t.position);

        let linkage: BTreeSet<&str> = self
            .units
            .iter()
            .filter(|n| n.node_type == "LKG")
            .map(|n| n.id.as_str())
            .collect();

        let mut units = Vec::new();
        for raw in self.units.iter().filter(|n| n.node_type != "LKG") {
            let id = UnitId::new(raw.id.clone());
            let mut outgoing = Vec::new();
            let mut attached = Vec::new();
            for e in &raw.edges {
                if let Some(&pos) = by_terminal_id.get(&e.to) {
                    attached.push(pos);
                    continue;
                }
                if linkage.contains(e.to.as_str())
                    || e.types.iter().any(|t| LINKAGE_EDGES.contains(&t.as_str()))
                {
                    continue;
                }
                let mut categories: Vec<Category> = Vec::new();
                for t in &e.types {
                    let cat: Category = t.parse().map_err(|tag| Error::UnknownCategory {
                        from: raw.id.clone(),
                        to: e.to.clone(),
                        tag,
                    })?;
                    if !categories.contains(&cat) {
                        categories.push(cat);
                    }
                }
                outgoing.push(Edge {
                    parent: id.clone(),
                    child: UnitId::new(e.to.clone()),
                    categories,
                    remote: e.remote,
                });
            }
            let unanalyzable = attached.len() > 1 && !outgoing.iter().any(|e| !e.remote);
            units.push(Unit {
                id,
                node_type: raw.node_type.clone(),
                implicit: is_true(raw.attrs.get("implicit")),
                unanalyzable,
                outgoing,
                terminals: attached,
            });
        }

        let root = pick_root(&units)?;
        Passage::new(doc_id, terminals, units, root)
    }
}

fn terminal_position(id: &str) -> Result<Position> {
    id.rsplit('.')
        .next()
        .and_then(|k| k.parse::<Position>().ok())
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::Schema(format!("terminal id {id:?} does not end in a positive index")))
}

fn pick_root(units: &[Unit]) -> Result<UnitId> {
    if units.iter().any(|u| u.id.as_str() == "1.1") {
        return Ok(UnitId::from("1.1"));
    }
    let children: BTreeSet<&UnitId> = units
        .iter()
        .flat_map(|u| u.primary_edges().map(|e| &e.child))
        .collect();
    let mut roots = units.iter().filter(|u| !children.contains(&u.id));
    match (roots.next(), roots.next()) {
        (Some(r), None) => Ok(r.id.clone()),
        (None, _) => Err(Error::Schema("layer 1 has no root unit".into())),
        (Some(a), Some(b)) => Err(Error::Schema(format!(
            "layer 1 has several root candidates ({}, {})",
            a.id, b.id
        ))),
    }
}

/// Parses a passage from UCCA XML.
pub fn parse_passage(xml: &str) -> Result<Passage> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(true);
    let mut builder = Builder::default();
    loop {
        let position = reader.buffer_position();
        let event = reader.read_event().map_err(|e| Error::Xml {
            position: reader.error_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(e) => builder.open(&e, position)?,
            Event::Empty(e) => {
                builder.open(&e, position)?;
                builder.close(e.name().as_ref());
            }
            Event::End(e) => builder.close(e.name().as_ref()),
            Event::Eof => break,
            _ => {}
        }
    }
    builder.finish()
}

/// Serializes a passage back to UCCA XML; `parse_passage` inverts it.
pub fn write_passage(p: &Passage) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<root passageID=\"{}\">", escape(p.doc_id.as_str()));
    out.push_str("  <layer layerID=\"0\">\n");
    for t in &p.terminals {
        let kind = if t.is_punct { "Punctuation" } else { "Word" };
        let _ = write!(
            out,
            "    <node ID=\"{}\" type=\"{kind}\"><attributes text=\"{}\" paragraph=\"{}\"",
            escape(t.id.as_str()),
            escape(t.text.as_str()),
            t.paragraph
        );
        if let Some(pp) = t.paragraph_position {
            let _ = write!(out, " paragraph_position=\"{pp}\"");
        }
        out.push_str(" /></node>\n");
    }
    out.push_str("  </layer>\n  <layer layerID=\"1\">\n");
    for u in p.units.values() {
        let _ = writeln!(
            out,
            "    <node ID=\"{}\" type=\"{}\">",
            escape(u.id.as_str()),
            escape(u.node_type.as_str())
        );
        if u.implicit {
            out.push_str("      <attributes implicit=\"True\" />\n");
        }
        for e in &u.outgoing {
            let _ = write!(
                out,
                "      <edge toID=\"{}\" type=\"{}\"",
                escape(e.child.as_str()),
                e.categories[0]
            );
            if !e.remote && e.categories.len() == 1 {
                out.push_str(" />\n");
                continue;
            }
            out.push('>');
            if e.remote {
                out.push_str("<attributes remote=\"True\" />");
            }
            if e.categories.len() > 1 {
                for c in &e.categories {
                    let _ = write!(out, "<category tag=\"{c}\" />");
                }
            }
            out.push_str("</edge>\n");
        }
        for &pos in &u.terminals {
            let _ = writeln!(
                out,
                "      <edge toID=\"{}\" type=\"Terminal\" />",
                escape(p.terminals[pos - 1].id.as_str())
            );
        }
        out.push_str("    </node>\n");
    }
    out.push_str("  </layer>\n</root>\n");
    out
}
