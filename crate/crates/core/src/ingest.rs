//! Parsers for the user-supplied tab-separated inputs: the expression
//! matrix, the gene to KO mapping, candidate gene lists and GO annotations.
//!
//! Every parser is total: it either returns a fully validated value or a
//! structured error carrying the 1-based physical line number. Lines starting
//! with `#` are comments, blank lines are skipped and CRLF endings are
//! accepted.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("line {0}: not valid UTF-8")]
    InvalidUtf8(usize),
    #[error("line {0}: header declares no conditions")]
    NoConditions(usize),
    #[error("duplicate condition label `{0}`")]
    DuplicateCondition(String),
    #[error("duplicate gene `{0}`")]
    DuplicateGene(String),
    #[error("line {0}: unexpected number of columns")]
    RaggedRow(usize),
    #[error("line {0}, column {1}: value is not a finite decimal number")]
    NonNumericValue(usize, usize),
    #[error("line {0}, column {1}: negative abundance")]
    NegativeValue(usize, usize),
    #[error("line {0}: malformed KO identifier `{1}`")]
    MalformedKoId(usize, String),
    #[error("GO term `{0}` is assigned to more than one namespace")]
    ConflictingNamespace(String),
    #[error("line {0}: namespace `{1}` is not declared in the file header")]
    UndeclaredNamespace(usize, String),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// Iterates over the non-comment, non-blank lines of a byte stream, yielding
/// `(line_no, line)` with the trailing `\r` removed.
fn data_lines(raw: &[u8]) -> impl Iterator<Item = Result<(usize, &str)>> {
    raw.split(|&b| b == b'\n')
        .enumerate()
        .filter_map(|(idx, bytes)| {
            let line_no = idx + 1;
            let line = match std::str::from_utf8(bytes) {
                Ok(s) => s.strip_suffix('\r').unwrap_or(s),
                Err(_) => return Some(Err(IngestError::InvalidUtf8(line_no))),
            };
            if line.is_empty() || line.starts_with('#') {
                None
            } else {
                Some(Ok((line_no, line)))
            }
        })
}

fn parse_abundance(token: &str, line_no: usize, col: usize) -> Result<f64> {
    // `f64::from_str` also accepts "inf" and "NaN"; both are rejected below.
    let value: f64 = token
        .parse()
        .map_err(|_| IngestError::NonNumericValue(line_no, col))?;
    if !value.is_finite() {
        return Err(IngestError::NonNumericValue(line_no, col));
    }
    if value < 0.0 {
        return Err(IngestError::NegativeValue(line_no, col));
    }
    // normalise -0.0
    Ok(value + 0.0)
}

/// Genes × ordered conditions, dense row-major, finite non-negative values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    gene_ids: Vec<String>,
    condition_labels: Vec<String>,
    values: Vec<f64>,
    row_of: HashMap<String, usize>,
}

impl ExpressionMatrix {
    /// Builds a matrix from rows, checking every invariant.
    pub fn new(condition_labels: Vec<String>, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for label in &condition_labels {
            if !seen.insert(label.as_str()) {
                return Err(IngestError::DuplicateCondition(label.clone()));
            }
        }
        let width = condition_labels.len();
        let mut gene_ids = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len() * width);
        let mut row_of = HashMap::with_capacity(rows.len());
        for (row, (gene, row_values)) in rows.into_iter().enumerate() {
            if row_values.len() != width {
                return Err(IngestError::RaggedRow(row + 2));
            }
            for (col, v) in row_values.iter().enumerate() {
                if !v.is_finite() {
                    return Err(IngestError::NonNumericValue(row + 2, col + 2));
                }
                if *v < 0.0 {
                    return Err(IngestError::NegativeValue(row + 2, col + 2));
                }
            }
            if row_of.insert(gene.clone(), row).is_some() {
                return Err(IngestError::DuplicateGene(gene));
            }
            gene_ids.push(gene);
            values.extend(row_values.into_iter().map(|v| v + 0.0));
        }
        Ok(Self {
            gene_ids,
            condition_labels,
            values,
            row_of,
        })
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn condition_labels(&self) -> &[String] {
        &self.condition_labels
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_conditions(&self) -> usize {
        self.condition_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gene_ids.is_empty()
    }

    pub fn contains_gene(&self, gene: &str) -> bool {
        self.row_of.contains_key(gene)
    }

    pub fn row_index(&self, gene: &str) -> Option<usize> {
        self.row_of.get(gene).copied()
    }

    pub fn condition_index(&self, label: &str) -> Option<usize> {
        self.condition_labels.iter().position(|c| c == label)
    }

    pub fn row(&self, index: usize) -> &[f64] {
        let w = self.n_conditions();
        &self.values[index * w..(index + 1) * w]
    }

    pub fn gene_row(&self, gene: &str) -> Option<&[f64]> {
        self.row_index(gene).map(|i| self.row(i))
    }

    pub fn value(&self, gene_index: usize, condition_index: usize) -> f64 {
        self.values[gene_index * self.n_conditions() + condition_index]
    }

    /// All values in row-major order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The measured universe: every gene id of the matrix.
    pub fn universe(&self) -> BTreeSet<String> {
        self.gene_ids.iter().cloned().collect()
    }

    /// Returns a copy with `f` applied to every value.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let rows = self
            .gene_ids
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), self.row(i).iter().map(|&v| f(v)).collect()))
            .collect();
        Self::new(self.condition_labels.clone(), rows)
    }

    /// Serialises back into the TSV layout accepted by [`parse_expression_table`].
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("gene_id");
        for label in &self.condition_labels {
            out.push('\t');
            out.push_str(label);
        }
        out.push('\n');
        for (i, gene) in self.gene_ids.iter().enumerate() {
            out.push_str(gene);
            for v in self.row(i) {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the expression TSV: header `gene_id<TAB>cond1<TAB>...` followed by
/// one row per gene.
pub fn parse_expression_table(raw: &[u8]) -> Result<ExpressionMatrix> {
    let mut lines = data_lines(raw);
    let (header_line, header) = match lines.next() {
        Some(r) => r?,
        None => return Err(IngestError::EmptyFile),
    };
    let labels: Vec<String> = header.split('\t').skip(1).map(str::to_owned).collect();
    if labels.is_empty() {
        return Err(IngestError::NoConditions(header_line));
    }
    let mut seen = HashSet::new();
    for label in &labels {
        if !seen.insert(label.as_str()) {
            return Err(IngestError::DuplicateCondition(label.clone()));
        }
    }

    let mut gene_ids = Vec::new();
    let mut values = Vec::new();
    let mut row_of = HashMap::new();
    for item in lines {
        let (line_no, line) = item?;
        let mut fields = line.split('\t');
        let gene = fields.next().unwrap_or_default();
        let mut n = 0;
        for (i, token) in fields.enumerate() {
            if i >= labels.len() {
                return Err(IngestError::RaggedRow(line_no));
            }
            values.push(parse_abundance(token, line_no, i + 2)?);
            n += 1;
        }
        if n != labels.len() {
            return Err(IngestError::RaggedRow(line_no));
        }
        if row_of.insert(gene.to_owned(), gene_ids.len()).is_some() {
            return Err(IngestError::DuplicateGene(gene.to_owned()));
        }
        gene_ids.push(gene.to_owned());
    }
    if gene_ids.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    Ok(ExpressionMatrix {
        gene_ids,
        condition_labels: labels,
        values,
        row_of,
    })
}

/// `K` followed by exactly five decimal digits.
pub fn is_ko_id(token: &str) -> bool {
    let b = token.as_bytes();
    b.len() == 6 && b[0] == b'K' && b[1..].iter().all(u8::is_ascii_digit)
}

/// Gene → set of KO identifiers. Many-to-many.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KoMapping {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl KoMapping {
    pub fn insert(&mut self, gene: impl Into<String>, ko: impl Into<String>) -> bool {
        let ko = ko.into();
        debug_assert!(is_ko_id(&ko));
        self.entries.entry(gene.into()).or_default().insert(ko)
    }

    pub fn kos_of(&self, gene: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(gene)
    }

    pub fn genes(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inverts the mapping to KO → genes, keeping only genes accepted by `keep`.
    pub fn genes_by_ko(&self, keep: impl Fn(&str) -> bool) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (gene, kos) in &self.entries {
            if !keep(gene) {
                continue;
            }
            for ko in kos {
                out.entry(ko.clone()).or_default().insert(gene.clone());
            }
        }
        out
    }
}

fn split_exact(line: &str, line_no: usize, n: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != n {
        return Err(IngestError::RaggedRow(line_no));
    }
    Ok(fields)
}

/// Parses `gene_id<TAB>KO_id` lines; repeated genes accumulate.
pub fn parse_ko_mapping(raw: &[u8]) -> Result<KoMapping> {
    let mut mapping = KoMapping::default();
    for item in data_lines(raw) {
        let (line_no, line) = item?;
        let fields = split_exact(line, line_no, 2)?;
        if !is_ko_id(fields[1]) {
            return Err(IngestError::MalformedKoId(line_no, fields[1].to_owned()));
        }
        mapping.insert(fields[0], fields[1]);
    }
    Ok(mapping)
}

/// Genes of interest for one condition or contrast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub label: String,
    pub genes: BTreeSet<String>,
}

/// Parses `label<TAB>gene_id` lines into one set per label, in order of first
/// appearance. A line with an empty gene field declares the label without
/// adding a gene, which is how an empty candidate set is written.
pub fn parse_candidate_lists(raw: &[u8]) -> Result<Vec<CandidateSet>> {
    let mut sets: Vec<CandidateSet> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for item in data_lines(raw) {
        let (line_no, line) = item?;
        let fields = split_exact(line, line_no, 2)?;
        let label = fields[0];
        if label.is_empty() {
            return Err(IngestError::RaggedRow(line_no));
        }
        let slot = *index.entry(label.to_owned()).or_insert_with(|| {
            sets.push(CandidateSet {
                label: label.to_owned(),
                genes: BTreeSet::new(),
            });
            sets.len() - 1
        });
        if !fields[1].is_empty() {
            sets[slot].genes.insert(fields[1].to_owned());
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermMeta {
    pub name: String,
    pub namespace: String,
}

/// Gene → GO terms, plus per-term name and namespace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoAnnotation {
    pub gene_terms: BTreeMap<String, BTreeSet<String>>,
    pub term_meta: BTreeMap<String, TermMeta>,
    namespaces: Vec<String>,
}

impl GoAnnotation {
    /// Namespaces in declaration order (header directive), otherwise in order
    /// of first appearance.
    pub fn namespaces(&self) -> &[String] {
        &self.namespaces
    }

    pub fn is_empty(&self) -> bool {
        self.gene_terms.is_empty()
    }

    /// Term → annotated genes restricted to one namespace.
    pub fn genes_by_term(&self, namespace: &str) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (gene, terms) in &self.gene_terms {
            for term in terms {
                if self
                    .term_meta
                    .get(term)
                    .is_some_and(|m| m.namespace == namespace)
                {
                    out.entry(term.clone()).or_default().insert(gene.clone());
                }
            }
        }
        out
    }
}

const NAMESPACE_DIRECTIVE: &str = "#namespaces";

/// Parses `gene_id<TAB>GO_id<TAB>namespace[<TAB>name]` lines.
///
/// An optional `#namespaces<TAB>BP<TAB>MF<TAB>...` header line declares the
/// namespace vocabulary; when present, every row must use one of those labels.
pub fn parse_go_annotation(raw: &[u8]) -> Result<GoAnnotation> {
    let mut declared: Option<Vec<String>> = None;
    for (idx, bytes) in raw.split(|&b| b == b'\n').enumerate() {
        let Ok(line) = std::str::from_utf8(bytes) else {
            return Err(IngestError::InvalidUtf8(idx + 1));
        };
        let line = line.strip_suffix('\r').unwrap_or(line);
        if let Some(rest) = line.strip_prefix(NAMESPACE_DIRECTIVE) {
            declared = Some(
                rest.split('\t')
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
                    .collect(),
            );
            break;
        }
        if !(line.is_empty() || line.starts_with('#')) {
            break;
        }
    }

    let mut annotation = GoAnnotation {
        namespaces: declared.clone().unwrap_or_default(),
        ..GoAnnotation::default()
    };
    for item in data_lines(raw) {
        let (line_no, line) = item?;
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) || fields[..3].iter().any(|f| f.is_empty()) {
            return Err(IngestError::RaggedRow(line_no));
        }
        let (gene, term, namespace) = (fields[0], fields[1], fields[2]);
        let name = fields.get(3).filter(|n| !n.is_empty()).unwrap_or(&term);
        match &declared {
            Some(ns) if !ns.iter().any(|n| n == namespace) => {
                return Err(IngestError::UndeclaredNamespace(
                    line_no,
                    namespace.to_owned(),
                ));
            }
            Some(_) => {}
            None => {
                if !annotation.namespaces.iter().any(|n| n == namespace) {
                    annotation.namespaces.push(namespace.to_owned());
                }
            }
        }
        match annotation.term_meta.get_mut(term) {
            Some(meta) if meta.namespace != namespace => {
                return Err(IngestError::ConflictingNamespace(term.to_owned()));
            }
            Some(meta) => {
                // a later row may supply the name an earlier row omitted
                if meta.name == term && *name != term {
                    meta.name = (*name).to_owned();
                }
            }
            None => {
                annotation.term_meta.insert(
                    term.to_owned(),
                    TermMeta {
                        name: (*name).to_owned(),
                        namespace: namespace.to_owned(),
                    },
                );
            }
        }
        annotation
            .gene_terms
            .entry(gene.to_owned())
            .or_default()
            .insert(term.to_owned());
    }
    Ok(annotation)
}

/// Cross-checks auxiliary inputs against the matrix. Genes outside the matrix
/// and candidate labels that are not matrix conditions produce warnings only.
pub fn cross_check(
    matrix: &ExpressionMatrix,
    mapping: &KoMapping,
    candidates: &[CandidateSet],
) -> Vec<String> {
    let mut warnings = Vec::new();
    let unmapped = mapping.genes().filter(|g| !matrix.contains_gene(g)).count();
    if unmapped > 0 {
        warnings.push(format!(
            "{unmapped} gene(s) in the KO mapping are absent from the expression matrix"
        ));
    }
    for set in candidates {
        if matrix.condition_index(&set.label).is_none() {
            warnings.push(format!(
                "candidate label `{}` is not a condition of the expression matrix",
                set.label
            ));
        }
        let absent = set
            .genes
            .iter()
            .filter(|g| !matrix.contains_gene(g))
            .count();
        if absent > 0 {
            warnings.push(format!(
                "candidate set `{}`: {absent} gene(s) absent from the expression matrix are ignored",
                set.label
            ));
        }
    }
    warnings
}
