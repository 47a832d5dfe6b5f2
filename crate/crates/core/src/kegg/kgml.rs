use std::collections::{BTreeSet, HashSet};

use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};

use super::{EntryKind, GraphicsBox, KeggError, Pathway, PathwayEntry, PathwayId, Shape};
use crate::ingest::is_ko_id;

struct Attrs {
    element: String,
    pairs: Vec<(String, String)>,
}

impl Attrs {
    fn read(start: &BytesStart<'_>, position: u64) -> Result<Self, KeggError> {
        let element = start.name().as_ref().to_owned();
        let mut pairs = Vec::new();
        for attr in start.attributes() {
            let attr = attr.map_err(|e| KeggError::XmlSyntax {
                position,
                detail: e.to_string(),
            })?;
            let key = attr.key.as_ref().to_owned();
            let value = attr
                .normalized_value(XmlVersion::Implicit1_0)
                .map_err(|e| KeggError::XmlSyntax {
                    position,
                    detail: e.to_string(),
                })?
                .into_owned();
            pairs.push((key, value));
        }
        Ok(Self { element, pairs })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str, KeggError> {
        self.get(key).ok_or_else(|| KeggError::MissingAttribute {
            element: self.element.clone(),
            attr: key.to_owned(),
        })
    }
}

fn coordinate(attrs: &Attrs, key: &str, entry_id: u32) -> Result<f64, KeggError> {
    let value: f64 = attrs
        .require(key)?
        .trim()
        .parse()
        .map_err(|_| KeggError::BadCoordinate(entry_id))?;
    if !value.is_finite() || value < 0.0 {
        return Err(KeggError::BadCoordinate(entry_id));
    }
    Ok(value)
}

fn parse_coords(raw: &str, entry_id: u32) -> Result<Vec<(f64, f64)>, KeggError> {
    let values: Vec<f64> = raw
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| KeggError::BadCoordinate(entry_id))?;
    if values.len() < 4
        || !values.len().is_multiple_of(2)
        || values.iter().any(|v| !v.is_finite() || *v < 0.0)
    {
        return Err(KeggError::BadCoordinate(entry_id));
    }
    Ok(values.chunks(2).map(|c| (c[0], c[1])).collect())
}

fn parse_graphics(attrs: &Attrs, entry_id: u32) -> Result<GraphicsBox, KeggError> {
    let shape = Shape::parse(attrs.get("type").unwrap_or("rectangle"));
    if shape == Shape::Line {
        let coords = parse_coords(attrs.require("coords")?, entry_id)?;
        let optional = |key| match attrs.get(key) {
            Some(_) => coordinate(attrs, key, entry_id),
            None => Ok(0.0),
        };
        return Ok(GraphicsBox {
            center_x: optional("x")?,
            center_y: optional("y")?,
            width: optional("width")?,
            height: optional("height")?,
            shape,
            coords,
        });
    }
    let graphics = GraphicsBox {
        center_x: coordinate(attrs, "x", entry_id)?,
        center_y: coordinate(attrs, "y", entry_id)?,
        width: coordinate(attrs, "width", entry_id)?,
        height: coordinate(attrs, "height", entry_id)?,
        shape,
        coords: Vec::new(),
    };
    let needs_area = matches!(graphics.shape, Shape::Rectangle | Shape::Circle);
    if needs_area && (graphics.width <= 0.0 || graphics.height <= 0.0) {
        return Err(KeggError::BadCoordinate(entry_id));
    }
    Ok(graphics)
}

fn parse_entry(attrs: &Attrs, position: u64) -> Result<PathwayEntry, KeggError> {
    let raw_id = attrs.require("id")?;
    let entry_id: u32 = raw_id.trim().parse().map_err(|_| KeggError::XmlSyntax {
        position,
        detail: format!("entry id `{raw_id}` is not numeric"),
    })?;
    let kind = EntryKind::parse(attrs.require("type")?);
    let name = attrs.require("name")?;
    let ko_ids: BTreeSet<String> = if kind.is_gene_product() {
        name.split_whitespace()
            .filter_map(|t| t.strip_prefix("ko:"))
            .filter(|t| is_ko_id(t))
            .map(str::to_owned)
            .collect()
    } else {
        BTreeSet::new()
    };
    Ok(PathwayEntry {
        entry_id,
        ko_ids,
        kind,
        graphics: Vec::new(),
    })
}

/// Parses a KGML document into a [`Pathway`].
///
/// Only the root `pathway`, its `entry` children and their `graphics` are
/// read; relations, reactions and group components are skipped. The image
/// size stays unset until [`Pathway::attach_image_size`] is called.
pub fn parse_kgml(xml: &[u8]) -> Result<Pathway, KeggError> {
    let mut reader = Reader::from_reader(xml);
    let mut pathway: Option<Pathway> = None;
    let mut current: Option<PathwayEntry> = None;
    let mut seen_ids = HashSet::new();
    let mut depth = 0usize;

    loop {
        let position = reader.buffer_position();
        let event = reader.read_event().map_err(|e| KeggError::XmlSyntax {
            position: reader.error_position(),
            detail: e.to_string(),
        })?;
        let (start, is_empty) = match &event {
            Event::Start(s) => (Some(s), false),
            Event::Empty(s) => (Some(s), true),
            Event::End(end) => {
                depth = depth.saturating_sub(1);
                if end.name().as_ref() == "entry" {
                    if let (Some(pw), Some(entry)) = (pathway.as_mut(), current.take()) {
                        pw.entries.push(entry);
                    }
                }
                continue;
            }
            Event::Eof => break,
            _ => continue,
        };
        let Some(start) = start else { continue };
        let name = start.name().as_ref().to_owned();
        let attrs = Attrs::read(start, position)?;
        match (depth, name.as_str()) {
            (0, "pathway") => {
                let org = attrs.require("org")?;
                let number = attrs.require("number")?;
                let id = PathwayId::new(org, number)?;
                pathway = Some(Pathway {
                    id,
                    title: attrs.get("title").unwrap_or_default().to_owned(),
                    entries: Vec::new(),
                    image_size: None,
                });
            }
            (0, other) => {
                return Err(KeggError::XmlSyntax {
                    position,
                    detail: format!("root element is <{other}>, expected <pathway>"),
                })
            }
            (1, "entry") => {
                let entry = parse_entry(&attrs, position)?;
                if !seen_ids.insert(entry.entry_id) {
                    return Err(KeggError::DuplicateEntry(entry.entry_id));
                }
                if is_empty {
                    if let Some(pw) = pathway.as_mut() {
                        pw.entries.push(entry);
                    }
                } else {
                    current = Some(entry);
                }
            }
            (2, "graphics") => {
                if let Some(entry) = current.as_mut() {
                    let graphics = parse_graphics(&attrs, entry.entry_id)?;
                    entry.graphics.push(graphics);
                }
            }
            _ => {}
        }
        if !is_empty {
            depth += 1;
        }
    }
    if depth != 0 {
        return Err(KeggError::XmlSyntax {
            position: reader.buffer_position(),
            detail: "unexpected end of document".into(),
        });
    }
    pathway.ok_or_else(|| KeggError::XmlSyntax {
        position: 0,
        detail: "no <pathway> root element".into(),
    })
}
