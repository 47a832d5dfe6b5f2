//! Exact enrichment statistics: hypergeometric kernel, one-sided Fisher test,
//! Benjamini–Hochberg adjustment and the two enrichment analyses built on them
//! (pathway over-representation and per-namespace GO term enrichment).
//!
//! The background universe is always the gene set of the expression matrix.
//! Genes outside it never enter a contingency table.

mod bh;
mod enrichment;
mod hypergeom;

use thiserror::Error;

pub use bh::bh_adjust;
pub use enrichment::{
    go_enrichment, pathway_overrepresentation, test_gene_sets, GeneSetTerm, NamespaceEnrichment,
};
pub use hypergeom::{fisher_exact_greater, hypergeometric_pmf, LogFactorials};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("log-factorial table covers {available}, need {needed}")]
    TableTooSmall { needed: u64, available: u64 },
    #[error("the universe is empty")]
    EmptyUniverse,
    #[error("selected gene `{0}` is not part of the universe")]
    NotInUniverse(String),
    #[error("alpha must lie in (0, 1], got {0}")]
    BadAlpha(f64),
}

/// 2×2 counts for one test.
///
/// `a` selected and annotated, `b` selected only, `c` annotated only,
/// `d` neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    /// Builds the table from the overlap and the three margins.
    pub fn from_margins(
        hits: u64,
        selected: u64,
        annotated: u64,
        universe: u64,
    ) -> Result<Self, StatsError> {
        if hits > selected || hits > annotated || selected + annotated > universe + hits {
            return Err(StatsError::Domain(format!(
                "inconsistent margins: hits={hits}, selected={selected}, annotated={annotated}, N={universe}"
            )));
        }
        Ok(Self {
            a: hits,
            b: selected - hits,
            c: annotated - hits,
            d: universe + hits - selected - annotated,
        })
    }

    /// Universe size `N`.
    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

/// One tested term or pathway.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentResult {
    pub term_id: String,
    pub term_name: String,
    pub table: ContingencyTable,
    pub p_value: f64,
    pub p_adjusted: f64,
    /// Sorted; its length equals `table.a`.
    pub hit_genes: Vec<String>,
}
