//! Pathway overlays: per-condition colour stripes inside ortholog boxes,
//! red outlines around candidate genes and a colour-bar legend appended
//! below the diagram.

mod scale;

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use thiserror::Error;

pub use scale::{bin_of, build_quantile_scale, Palette, QuantileScale};

use crate::image::{decode_png, encode_png, ImageError, Rgb, RgbImage};
use crate::ingest::{CandidateSet, ExpressionMatrix, KoMapping};
use crate::kegg::{Pathway, PixelRect, Shape};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("no finite values to build a colour scale from")]
    EmptyValues,
    #[error("a colour scale needs at least 2 bins, got {0}")]
    BadBinCount(usize),
    #[error("unknown palette `{0}`")]
    UnknownPalette(String),
    #[error("unknown aggregation `{0}` (expected mean, max or sum)")]
    UnknownAggregation(String),
    #[error(transparent)]
    ImageDecodeError(#[from] ImageError),
    #[error("pathway {pathway}: image is {actual:?} but the pathway records {expected:?}")]
    DimensionMismatch {
        pathway: String,
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("KO {0} has display values but does not occur in the pathway")]
    ForeignKo(String),
    #[error("KO {ko}: expected {expected} condition values, got {actual}")]
    ConditionCount {
        ko: String,
        expected: usize,
        actual: usize,
    },
}

/// Height in pixels of the legend band appended below every diagram.
pub const LEGEND_BAND_HEIGHT: u32 = 48;
pub const OUTLINE_COLOR: Rgb = [255, 0, 0];
pub const OUTLINE_WIDTH: i64 = 2;
const BACKGROUND: Rgb = [255, 255, 255];
const INK: Rgb = [0, 0, 0];

/// How several genes mapped to one KO are combined into one display value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
    Sum,
}

impl Aggregation {
    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            Self::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Self::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Self::Sum => values.iter().sum(),
        }
    }
}

impl FromStr for Aggregation {
    type Err = RenderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            "sum" => Ok(Self::Sum),
            other => Err(RenderError::UnknownAggregation(other.to_owned())),
        }
    }
}

/// Display value of one KO in one condition from the abundances of its genes.
/// `gene_values` must be non-empty.
pub fn aggregate_ko_value(gene_values: &[f64], strategy: Aggregation) -> f64 {
    assert!(
        !gene_values.is_empty(),
        "aggregate_ko_value needs at least one gene"
    );
    strategy.apply(gene_values)
}

/// Everything needed to draw one pathway.
#[derive(Debug, Clone)]
pub struct OverlaySpec<'a> {
    pub pathway: &'a Pathway,
    pub base_image: &'a [u8],
    pub conditions: Vec<String>,
    /// KO → one display value per condition.
    pub values: BTreeMap<String, Vec<f64>>,
    /// KO → candidate labels flagging it.
    pub candidates: BTreeMap<String, BTreeSet<String>>,
    pub scale: &'a QuantileScale,
    /// Combines the KOs of a multi-KO entry.
    pub aggregation: Aggregation,
}

/// A pathway KO for which no matrix gene supplied data.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MissingKo {
    pub entry_id: u32,
    pub ko: String,
}

impl<'a> OverlaySpec<'a> {
    /// Derives display values and candidate flags for the KOs of `pathway`.
    /// Only matrix genes contribute. Also returns the pathway KOs
    /// left without data.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        pathway: &'a Pathway,
        base_image: &'a [u8],
        matrix: &ExpressionMatrix,
        mapping: &KoMapping,
        candidate_sets: &[CandidateSet],
        scale: &'a QuantileScale,
        aggregation: Aggregation,
    ) -> (Self, Vec<MissingKo>) {
        let genes_by_ko = mapping.genes_by_ko(|g| matrix.contains_gene(g));
        let mut values = BTreeMap::new();
        let mut candidates: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut missing = Vec::new();
        for entry in pathway.entries.iter().filter(|e| e.kind.is_gene_product()) {
            for ko in &entry.ko_ids {
                let Some(genes) = genes_by_ko.get(ko) else {
                    missing.push(MissingKo {
                        entry_id: entry.entry_id,
                        ko: ko.clone(),
                    });
                    continue;
                };
                if values.contains_key(ko) {
                    continue;
                }
                let rows: Vec<&[f64]> = genes.iter().filter_map(|g| matrix.gene_row(g)).collect();
                let per_condition = (0..matrix.n_conditions())
                    .map(|c| {
                        let column: Vec<f64> = rows.iter().map(|r| r[c]).collect();
                        aggregate_ko_value(&column, aggregation)
                    })
                    .collect();
                values.insert(ko.clone(), per_condition);
                for set in candidate_sets {
                    if genes.iter().any(|g| set.genes.contains(g)) {
                        candidates
                            .entry(ko.clone())
                            .or_default()
                            .insert(set.label.clone());
                    }
                }
            }
        }
        missing.sort();
        missing.dedup();
        let spec = Self {
            pathway,
            base_image,
            conditions: matrix.condition_labels().to_vec(),
            values,
            candidates,
            scale,
            aggregation,
        };
        (spec, missing)
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub png: Vec<u8>,
    pub warnings: Vec<String>,
}

/// Splits `width` pixels into `n` stripes as `(offset, width)` pairs. Stripes
/// are at least 1 px; the last visible stripe absorbs any remainder.
fn stripe_layout(width: i64, n: usize) -> Vec<(i64, i64)> {
    let n = n as i64;
    let base = (width / n).max(1);
    let visible = n.min(width);
    (0..visible)
        .map(|i| {
            let start = i * base;
            let end = if i == visible - 1 {
                width
            } else {
                start + base
            };
            (start, end - start)
        })
        .collect()
}

fn clip_fill(img: &mut RgbImage, rect: (i64, i64, i64, i64), limit: (i64, i64), color: Rgb) {
    let (x0, y0, x1, y1) = rect;
    img.fill_rect(x0, y0, x1.min(limit.0), y1.min(limit.1), color);
}

/// Draws a frame of `OUTLINE_WIDTH` px just outside `r`.
fn draw_outline(img: &mut RgbImage, r: PixelRect, limit: (i64, i64)) {
    for inset in 1..=OUTLINE_WIDTH {
        let (x0, y0) = (r.left - inset, r.top - inset);
        let (x1, y1) = (r.left + r.width + inset, r.top + r.height + inset);
        clip_fill(img, (x0, y0, x1, y0 + 1), limit, OUTLINE_COLOR);
        clip_fill(img, (x0, y1 - 1, x1, y1), limit, OUTLINE_COLOR);
        clip_fill(img, (x0, y0, x0 + 1, y1), limit, OUTLINE_COLOR);
        clip_fill(img, (x1 - 1, y0, x1, y1), limit, OUTLINE_COLOR);
    }
}

fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: Rgb) -> i64 {
    let mut cursor = x;
    for ch in text.chars() {
        let glyph = font8x8::legacy::BASIC_LEGACY[if ch.is_ascii() {
            ch as usize
        } else {
            '?' as usize
        }];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8 {
                if bits & (1 << col) != 0 {
                    img.put(cursor + col, y + row as i64, color);
                }
            }
        }
        cursor += 8;
    }
    cursor
}

/// Legend: one swatch per bin, the quantile level of each breakpoint, and the
/// condition order used for the stripes.
fn draw_legend(img: &mut RgbImage, top: i64, scale: &QuantileScale, conditions: &[String]) {
    let margin = 8i64;
    let usable = i64::from(img.width()) - 2 * margin;
    let swatch = (usable / scale.n_bins as i64).clamp(2, 48);
    for (i, color) in scale.colors.iter().enumerate() {
        let x0 = margin + i as i64 * swatch;
        img.fill_rect(x0, top + 4, x0 + swatch, top + 18, *color);
    }
    for j in 1..scale.n_bins {
        let label = format!("{}%", (100 * j) / scale.n_bins);
        let x = margin + j as i64 * swatch;
        img.fill_rect(x, top + 18, x + 1, top + 21, INK);
        draw_text(img, x - 4 * label.len() as i64, top + 22, &label, INK);
    }
    let caption = format!("stripes L->R: {}", conditions.join(" | "));
    draw_text(img, margin, top + 34, &caption, INK);
}

/// Renders the overlay into a new PNG.
pub fn render_overlay(spec: &OverlaySpec<'_>) -> Result<RenderOutput, RenderError> {
    let base = decode_png(spec.base_image)?;
    let actual = (base.width(), base.height());
    if let Some(size) = spec.pathway.image_size {
        if (size.width, size.height) != actual {
            return Err(RenderError::DimensionMismatch {
                pathway: spec.pathway.id.to_string(),
                expected: (size.width, size.height),
                actual,
            });
        }
    }
    let pathway_kos = spec.pathway.ortholog_kos();
    for (ko, v) in &spec.values {
        if !pathway_kos.contains(ko.as_str()) {
            return Err(RenderError::ForeignKo(ko.clone()));
        }
        if v.len() != spec.conditions.len() {
            return Err(RenderError::ConditionCount {
                ko: ko.clone(),
                expected: spec.conditions.len(),
                actual: v.len(),
            });
        }
    }

    let limit = (i64::from(actual.0), i64::from(actual.1));
    let mut canvas = base.extend_bottom(LEGEND_BAND_HEIGHT, BACKGROUND);
    let mut warnings = Vec::new();
    let n_cond = spec.conditions.len();

    let gene_entries = || {
        spec.pathway
            .entries
            .iter()
            .filter(|e| e.kind.is_gene_product())
    };
    for entry in gene_entries() {
        let with_data: Vec<&Vec<f64>> = entry
            .ko_ids
            .iter()
            .filter_map(|k| spec.values.get(k))
            .collect();
        if with_data.is_empty() || n_cond == 0 {
            continue;
        }
        let display: Vec<f64> = (0..n_cond)
            .map(|c| {
                spec.aggregation
                    .apply(&with_data.iter().map(|v| v[c]).collect::<Vec<_>>())
            })
            .collect();
        for g in entry
            .graphics
            .iter()
            .filter(|g| g.shape == Shape::Rectangle)
        {
            let r = g.pixel_rect();
            if r.width < n_cond as i64 {
                warnings.push(format!(
                    "StripeTooNarrow: {} entry {} is {} px wide for {} conditions",
                    spec.pathway.id, entry.entry_id, r.width, n_cond
                ));
            }
            for ((offset, width), value) in stripe_layout(r.width, n_cond).into_iter().zip(&display)
            {
                let x0 = r.left + offset;
                let rect = (x0, r.top, x0 + width, r.top + r.height);
                clip_fill(&mut canvas, rect, limit, spec.scale.color_of(*value));
            }
        }
    }
    // outlines last so fills never cover them
    for entry in gene_entries() {
        if !entry.ko_ids.iter().any(|k| spec.candidates.contains_key(k)) {
            continue;
        }
        for g in entry.graphics.iter().filter(|g| g.shape != Shape::Line) {
            draw_outline(&mut canvas, g.pixel_rect(), limit);
        }
    }
    draw_legend(&mut canvas, limit.1, spec.scale, &spec.conditions);

    Ok(RenderOutput {
        png: encode_png(&canvas)?,
        warnings,
    })
}
