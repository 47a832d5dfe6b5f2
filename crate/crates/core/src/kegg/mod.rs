//! KEGG pathway model, KGML parsing and the cached REST client.

mod client;
mod kgml;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use client::{
    default_cache_dir, CountingFetcher, Fetcher, HttpFetcher, KeggClient, KeggSettings, Mode,
    DEFAULT_BASE_URL, DEFAULT_MIN_DELAY,
};
pub use kgml::parse_kgml;

use crate::image::ImageError;

#[derive(Debug, Error)]
pub enum KeggError {
    #[error("XML syntax error at byte {position}: {detail}")]
    XmlSyntax { position: u64, detail: String },
    #[error("<{element}> is missing attribute `{attr}`")]
    MissingAttribute { element: String, attr: String },
    #[error("entry {0}: bad graphics coordinate")]
    BadCoordinate(u32),
    #[error("duplicate entry id {0}")]
    DuplicateEntry(u32),
    #[error("invalid pathway id `{0}`")]
    BadPathwayId(String),
    #[error("invalid organism code `{0}`")]
    BadOrgCode(String),
    #[error("network error: {0}")]
    NetworkError(String),
    #[error("offline fixture missing: {0}")]
    FixtureMissing(String),
    #[error("image decode error: {0}")]
    ImageDecodeError(#[from] ImageError),
    #[error("pathway {pathway}: entry {entry_id} lies outside the {width}x{height} image")]
    DimensionMismatch {
        pathway: String,
        entry_id: u32,
        width: u32,
        height: u32,
    },
    #[error("cache I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Allowed slack when checking graphics against image bounds.
pub const BOUNDS_TOLERANCE_PX: f64 = 2.0;

/// `ko` or a 2–4 letter lowercase organism code.
pub fn is_org_code(code: &str) -> bool {
    (2..=4).contains(&code.len()) && code.bytes().all(|b| b.is_ascii_lowercase())
}

/// Organism code plus 5-digit map number, rendered as e.g. `ko00010`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathwayId {
    org_code: String,
    number: String,
}

impl PathwayId {
    pub fn new(org_code: &str, number: &str) -> Result<Self, KeggError> {
        if !is_org_code(org_code) {
            return Err(KeggError::BadOrgCode(org_code.to_owned()));
        }
        if number.len() != 5 || !number.bytes().all(|b| b.is_ascii_digit()) {
            return Err(KeggError::BadPathwayId(format!("{org_code}{number}")));
        }
        Ok(Self {
            org_code: org_code.to_owned(),
            number: number.to_owned(),
        })
    }

    pub fn org_code(&self) -> &str {
        &self.org_code
    }

    pub fn number(&self) -> &str {
        &self.number
    }
}

impl FromStr for PathwayId {
    type Err = KeggError;

    /// Accepts `ko00010` and the `path:` prefixed form KEGG uses in listings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix("path:").unwrap_or(s);
        if s.len() < 7 || !s.is_char_boundary(s.len() - 5) {
            return Err(KeggError::BadPathwayId(s.to_owned()));
        }
        let (org, number) = s.split_at(s.len() - 5);
        Self::new(org, number).map_err(|_| KeggError::BadPathwayId(s.to_owned()))
    }
}

impl fmt::Display for PathwayId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.org_code, self.number)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shape {
    Rectangle,
    Circle,
    Line,
    Other(String),
}

impl Shape {
    fn parse(label: &str) -> Self {
        match label {
            "rectangle" => Self::Rectangle,
            "circle" => Self::Circle,
            "line" => Self::Line,
            other => Self::Other(other.to_owned()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Self::Rectangle => "rectangle",
            Self::Circle => "circle",
            Self::Line => "line",
            Self::Other(s) => s,
        }
    }
}

/// One `graphics` element. Coordinates are pixels from the top-left corner;
/// `center_x`/`center_y` mark the box centre.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphicsBox {
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub height: f64,
    pub shape: Shape,
    /// Polyline vertices for `line` graphics.
    pub coords: Vec<(f64, f64)>,
}

/// Integer pixel rectangle, half-open on the right and bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub left: i64,
    pub top: i64,
    pub width: i64,
    pub height: i64,
}

impl GraphicsBox {
    /// Pixel footprint: `[x - w/2, x - w/2 + w) × [y - h/2, y - h/2 + h)`.
    pub fn pixel_rect(&self) -> PixelRect {
        let width = self.width.round() as i64;
        let height = self.height.round() as i64;
        PixelRect {
            left: (self.center_x - self.width / 2.0).round() as i64,
            top: (self.center_y - self.height / 2.0).round() as i64,
            width,
            height,
        }
    }

    /// `(min_x, min_y, max_x, max_y)` of the drawn extent.
    fn extent(&self) -> (f64, f64, f64, f64) {
        if self.shape == Shape::Line && !self.coords.is_empty() {
            let xs = self.coords.iter().map(|c| c.0);
            let ys = self.coords.iter().map(|c| c.1);
            return (
                xs.clone().fold(f64::INFINITY, f64::min),
                ys.clone().fold(f64::INFINITY, f64::min),
                xs.fold(f64::NEG_INFINITY, f64::max),
                ys.fold(f64::NEG_INFINITY, f64::max),
            );
        }
        (
            self.center_x - self.width / 2.0,
            self.center_y - self.height / 2.0,
            self.center_x + self.width / 2.0,
            self.center_y + self.height / 2.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntryKind {
    Ortholog,
    Gene,
    Compound,
    Map,
    Other(String),
}

impl EntryKind {
    fn parse(label: &str) -> Self {
        match label {
            "ortholog" => Self::Ortholog,
            "gene" => Self::Gene,
            "compound" => Self::Compound,
            "map" => Self::Map,
            other => Self::Other(other.to_owned()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Self::Ortholog => "ortholog",
            Self::Gene => "gene",
            Self::Compound => "compound",
            Self::Map => "map",
            Self::Other(s) => s,
        }
    }

    /// Entries that can carry KO identifiers and receive expression overlays.
    pub fn is_gene_product(&self) -> bool {
        matches!(self, Self::Ortholog | Self::Gene)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathwayEntry {
    pub entry_id: u32,
    pub ko_ids: BTreeSet<String>,
    pub kind: EntryKind,
    pub graphics: Vec<GraphicsBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pathway {
    pub id: PathwayId,
    pub title: String,
    pub entries: Vec<PathwayEntry>,
    /// Set once the diagram image has been resolved.
    pub image_size: Option<ImageSize>,
}

impl Pathway {
    /// Every KO referenced by an ortholog or gene entry.
    pub fn ortholog_kos(&self) -> BTreeSet<&str> {
        self.entries
            .iter()
            .filter(|e| e.kind.is_gene_product())
            .flat_map(|e| e.ko_ids.iter().map(String::as_str))
            .collect()
    }

    /// Records the diagram dimensions after checking every graphics element
    /// against them.
    pub fn attach_image_size(&mut self, size: ImageSize) -> Result<(), KeggError> {
        let (w, h) = (f64::from(size.width), f64::from(size.height));
        for entry in &self.entries {
            for g in &entry.graphics {
                let (x0, y0, x1, y1) = g.extent();
                let tol = BOUNDS_TOLERANCE_PX;
                if x0 < -tol || y0 < -tol || x1 > w + tol || y1 > h + tol {
                    return Err(KeggError::DimensionMismatch {
                        pathway: self.id.to_string(),
                        entry_id: entry.entry_id,
                        width: size.width,
                        height: size.height,
                    });
                }
            }
        }
        self.image_size = Some(size);
        Ok(())
    }

    /// Flat entry/coordinate table: one row per graphics element, or one row
    /// with empty geometry for entries without graphics.
    pub fn entry_table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("entry_id\tkind\tko_ids\tshape\tx\ty\twidth\theight\n");
        for e in &self.entries {
            let kos = e.ko_ids.iter().cloned().collect::<Vec<_>>().join(",");
            if e.graphics.is_empty() {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t\t\t\t\t",
                    e.entry_id,
                    e.kind.as_str(),
                    kos
                );
            }
            for g in &e.graphics {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    e.entry_id,
                    e.kind.as_str(),
                    kos,
                    g.shape.as_str(),
                    g.center_x,
                    g.center_y,
                    g.width,
                    g.height
                );
            }
        }
        out
    }
}
