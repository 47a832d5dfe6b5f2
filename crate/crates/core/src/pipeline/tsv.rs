use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::PipelineError;
use crate::kegg::PathwayId;
use crate::render::{MissingKo, QuantileScale};
use crate::stats::EnrichmentResult;

/// Float cell: scientific notation below 1e-4, fixed notation otherwise,
/// always six digits after the point.
pub fn format_float(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:.6e}")
    } else {
        format!("{v:.6}")
    }
}

/// Replaces tabs and line breaks so a free-text field stays in one cell.
fn cell(text: &str) -> String {
    text.chars()
        .map(|c| {
            if matches!(c, '\t' | '\n' | '\r') {
                ' '
            } else {
                c
            }
        })
        .collect()
}

pub const ENRICHMENT_HEADER: &str =
    "term_id\tterm_name\ta\tb\tc\td\tp_value\tp_adjusted\thit_genes";

fn push_result(out: &mut String, r: &EnrichmentResult) {
    let t = &r.table;
    let _ = writeln!(
        out,
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        cell(&r.term_id),
        cell(&r.term_name),
        t.a,
        t.b,
        t.c,
        t.d,
        format_float(r.p_value),
        format_float(r.p_adjusted),
        r.hit_genes.join(",")
    );
}

/// Header plus one row per result, in the given order.
pub fn enrichment_tsv(results: &[EnrichmentResult]) -> String {
    let mut out = format!("{ENRICHMENT_HEADER}\n");
    for r in results {
        push_result(&mut out, r);
    }
    out
}

/// Like [`enrichment_tsv`] with a leading `label` column naming the
/// candidate set each row belongs to.
pub fn labeled_enrichment_tsv<'a>(
    groups: impl IntoIterator<Item = (&'a str, &'a [EnrichmentResult])>,
) -> String {
    let mut out = format!("label\t{ENRICHMENT_HEADER}\n");
    for (label, results) in groups {
        for r in results {
            out.push_str(&cell(label));
            out.push('\t');
            push_result(&mut out, r);
        }
    }
    out
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

/// Writes an enrichment table to `destination`.
pub fn write_enrichment_tsv(
    results: &[EnrichmentResult],
    destination: &Path,
) -> Result<(), PipelineError> {
    write_file(destination, enrichment_tsv(results).as_bytes())
}

pub fn missing_tsv(rows: &[(PathwayId, MissingKo)]) -> String {
    let mut out = String::from("pathway_id\tentry_id\tko_id\n");
    for (id, m) in rows {
        let _ = writeln!(out, "{id}\t{}\t{}", m.entry_id, m.ko);
    }
    out
}

/// One row per bin: the value interval `(lower, upper]` it covers and its
/// colour.
pub fn color_scale_tsv(scale: &QuantileScale) -> String {
    let mut out = String::from("bin\tquantile_from\tquantile_to\tlower\tupper\tcolor\n");
    for (bin, color) in scale.colors.iter().enumerate() {
        let lower = bin
            .checked_sub(1)
            .map_or("-inf".into(), |i| format_float(scale.breakpoints[i]));
        let upper = scale
            .breakpoints
            .get(bin)
            .map_or("inf".into(), |&b| format_float(b));
        let _ = writeln!(
            out,
            "{bin}\t{}\t{}\t{lower}\t{upper}\t#{:02x}{:02x}{:02x}",
            format_float(bin as f64 / scale.n_bins as f64),
            format_float((bin + 1) as f64 / scale.n_bins as f64),
            color[0],
            color[1],
            color[2]
        );
    }
    out
}

/// Reduces a label to `[A-Za-z0-9._-]` for use in a file name.
pub fn file_stem(label: &str) -> String {
    let stem: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if stem.is_empty() || stem.chars().all(|c| c == '.') {
        format!("_{stem}")
    } else {
        stem
    }
}
