use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{bh_adjust, ContingencyTable, EnrichmentResult, LogFactorials, StatsError};
use crate::ingest::{GoAnnotation, KoMapping};
use crate::kegg::Pathway;

/// A named gene set to test against a selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneSetTerm {
    pub id: String,
    pub name: String,
    pub genes: BTreeSet<String>,
}

fn check_selection(
    selected: &BTreeSet<String>,
    universe: &BTreeSet<String>,
) -> Result<(), StatsError> {
    if universe.is_empty() {
        return Err(StatsError::EmptyUniverse);
    }
    match selected.iter().find(|g| !universe.contains(*g)) {
        Some(g) => Err(StatsError::NotInUniverse(g.clone())),
        None => Ok(()),
    }
}

/// Tests every term with at least one universe gene as one BH family.
///
/// Term genes outside the universe are dropped before counting. Output is
/// sorted by adjusted p, then term id.
pub fn test_gene_sets(
    selected: &BTreeSet<String>,
    terms: &[GeneSetTerm],
    universe: &BTreeSet<String>,
) -> Result<Vec<EnrichmentResult>, StatsError> {
    check_selection(selected, universe)?;
    let n_universe = universe.len() as u64;
    let n_selected = selected.len() as u64;
    let log_fact = LogFactorials::new(n_universe);

    let mut results: Vec<EnrichmentResult> = terms
        .par_iter()
        .filter_map(|term| {
            let annotated: Vec<&String> = term
                .genes
                .iter()
                .filter(|g| universe.contains(*g))
                .collect();
            if annotated.is_empty() {
                return None;
            }
            let hit_genes: Vec<String> = annotated
                .iter()
                .filter(|g| selected.contains(**g))
                .map(|g| (*g).clone())
                .collect();
            Some((term, annotated.len() as u64, hit_genes))
        })
        .map(|(term, n_annotated, hit_genes)| {
            let table = ContingencyTable::from_margins(
                hit_genes.len() as u64,
                n_selected,
                n_annotated,
                n_universe,
            )?;
            let p_value = log_fact.fisher_greater(&table)?;
            Ok(EnrichmentResult {
                term_id: term.id.clone(),
                term_name: term.name.clone(),
                table,
                p_value,
                p_adjusted: p_value,
                hit_genes,
            })
        })
        .collect::<Result<_, StatsError>>()?;

    // deterministic order before adjustment
    results.sort_by(|x, y| x.term_id.cmp(&y.term_id));
    let raw: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    for (r, adj) in results.iter_mut().zip(bh_adjust(&raw)?) {
        r.p_adjusted = adj;
    }
    results.sort_by(|x, y| {
        x.p_adjusted
            .total_cmp(&y.p_adjusted)
            .then_with(|| x.term_id.cmp(&y.term_id))
    });
    Ok(results)
}

/// Pathway over-representation of `selected` against `universe`.
///
/// A gene belongs to a pathway when any of its KOs appears in an ortholog or
/// gene entry of that pathway.
pub fn pathway_overrepresentation(
    selected: &BTreeSet<String>,
    pathways: &[Pathway],
    mapping: &KoMapping,
    universe: &BTreeSet<String>,
) -> Result<Vec<EnrichmentResult>, StatsError> {
    check_selection(selected, universe)?;
    let genes_by_ko = mapping.genes_by_ko(|g| universe.contains(g));
    let terms: Vec<GeneSetTerm> = pathways
        .iter()
        .map(|pw| {
            let genes = pw
                .ortholog_kos()
                .into_iter()
                .filter_map(|ko| genes_by_ko.get(ko))
                .flatten()
                .cloned()
                .collect();
            GeneSetTerm {
                id: pw.id.to_string(),
                name: pw.title.clone(),
                genes,
            }
        })
        .collect();
    test_gene_sets(selected, &terms, universe)
}

/// Results for one GO namespace.
#[derive(Debug, Clone, PartialEq)]
pub struct NamespaceEnrichment {
    pub namespace: String,
    /// Every tested term.
    pub all: Vec<EnrichmentResult>,
    /// Terms with `p_adjusted < alpha` (all terms when `alpha` is 1).
    pub significant: Vec<EnrichmentResult>,
}

/// GO term enrichment, each namespace its own BH family.
pub fn go_enrichment(
    selected: &BTreeSet<String>,
    annotation: &GoAnnotation,
    universe: &BTreeSet<String>,
    alpha: f64,
) -> Result<Vec<NamespaceEnrichment>, StatsError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(StatsError::BadAlpha(alpha));
    }
    check_selection(selected, universe)?;
    annotation
        .namespaces()
        .iter()
        .map(|ns| {
            let terms: Vec<GeneSetTerm> = annotation
                .genes_by_term(ns)
                .into_iter()
                .map(|(id, genes)| GeneSetTerm {
                    name: annotation.term_meta[&id].name.clone(),
                    id,
                    genes,
                })
                .collect();
            let all = test_gene_sets(selected, &terms, universe)?;
            // alpha = 1 disables filtering, so p_adjusted = 1 is kept too
            let significant = all
                .iter()
                .filter(|r| alpha >= 1.0 || r.p_adjusted < alpha)
                .cloned()
                .collect();
            Ok(NamespaceEnrichment {
                namespace: ns.clone(),
                all,
                significant,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_go_annotation;
    use crate::kegg::{EntryKind, PathwayEntry, PathwayId};
    use crate::stats::hypergeometric_pmf;
    use std::collections::BTreeMap;

    fn by_term(results: &[EnrichmentResult]) -> BTreeMap<&str, &EnrichmentResult> {
        results.iter().map(|r| (r.term_id.as_str(), r)).collect()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn pathway(id: &str, kos: &[&str]) -> Pathway {
        Pathway {
            id: id.parse::<PathwayId>().unwrap(),
            title: format!("title {id}"),
            entries: kos
                .iter()
                .enumerate()
                .map(|(i, ko)| PathwayEntry {
                    entry_id: i as u32 + 1,
                    ko_ids: set(&[ko]),
                    kind: EntryKind::Ortholog,
                    graphics: vec![],
                })
                .collect(),
            image_size: None,
        }
    }

    fn fixture() -> (Vec<Pathway>, KoMapping, BTreeSet<String>) {
        let pathways = vec![
            pathway("ko00010", &["K00001", "K00002"]),
            pathway("ko00020", &["K00003"]),
            pathway("ko00030", &["K00004", "K00001"]),
            pathway("ko00040", &["K99999"]),
        ];
        let mut mapping = KoMapping::default();
        for (g, k) in [
            ("g1", "K00001"),
            ("g2", "K00002"),
            ("g3", "K00003"),
            ("g4", "K00004"),
            ("g5", "K00001"),
            ("g6", "K00003"),
        ] {
            mapping.insert(g, k);
        }
        let universe = set(&["g1", "g2", "g3", "g4", "g5", "g6", "g7", "g8"]);
        (pathways, mapping, universe)
    }

    #[test]
    fn selected_equals_universe() {
        let (pathways, mapping, universe) = fixture();
        let res = pathway_overrepresentation(&universe, &pathways, &mapping, &universe).unwrap();
        assert_eq!(res.len(), 3);
        for r in &res {
            assert_eq!(r.table.c, 0);
            let t = r.table;
            let point = hypergeometric_pmf(t.a, t.total(), t.a + t.c, t.a + t.b).unwrap();
            assert!((r.p_value - point).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_selection_is_one() {
        let (pathways, mapping, universe) = fixture();
        let res =
            pathway_overrepresentation(&BTreeSet::new(), &pathways, &mapping, &universe).unwrap();
        assert!(res.iter().all(|r| r.p_value == 1.0 && r.p_adjusted == 1.0));
    }

    #[test]
    fn unmatched_pathway_excluded() {
        let (pathways, mapping, universe) = fixture();
        let res =
            pathway_overrepresentation(&set(&["g1"]), &pathways, &mapping, &universe).unwrap();
        assert!(res.iter().all(|r| r.term_id != "ko00040"));
        let p00010 = by_term(&res)["ko00010"];
        // pathway 00010 holds g1, g2, g5
        assert_eq!(p00010.table, ContingencyTable::new(1, 0, 2, 5));
        assert_eq!(p00010.hit_genes, ["g1"]);
        // m = 3 in the BH family
        let p00020 = by_term(&res)["ko00020"];
        assert_eq!(p00020.p_value, 1.0);
    }

    #[test]
    fn errors() {
        let (pathways, mapping, universe) = fixture();
        assert_eq!(
            pathway_overrepresentation(&BTreeSet::new(), &pathways, &mapping, &BTreeSet::new()),
            Err(StatsError::EmptyUniverse)
        );
        assert_eq!(
            pathway_overrepresentation(&set(&["zz"]), &pathways, &mapping, &universe),
            Err(StatsError::NotInUniverse("zz".into()))
        );
    }

    #[test]
    fn go_smallest_p_when_term_equals_selection() {
        let mut raw = String::new();
        let universe: BTreeSet<String> = (0..12).map(|i| format!("g{i:02}")).collect();
        let selected: BTreeSet<String> = (0..6).map(|i| format!("g{i:02}")).collect();
        for g in &selected {
            raw.push_str(&format!("{g}\tGO:1\tBP\tterm one\n"));
        }
        let ann = parse_go_annotation(raw.as_bytes()).unwrap();
        let res = go_enrichment(&selected, &ann, &universe, 0.05).unwrap();
        // 1 / C(12, 6)
        let oracle = 1.0 / 924.0;
        assert_eq!(res.len(), 1);
        assert!((res[0].all[0].p_value - oracle).abs() < 1e-15);
        assert_eq!(res[0].significant.len(), 1);
    }

    #[test]
    fn go_alpha_one_and_empty() {
        let ann = parse_go_annotation(b"g1\tGO:1\tBP\ng2\tGO:2\tMF\ng3\tGO:2\tMF\n").unwrap();
        let universe = set(&["g1", "g2", "g3", "g4"]);
        let res = go_enrichment(&set(&["g2"]), &ann, &universe, 1.0).unwrap();
        assert_eq!(res.len(), 2);
        for ns in &res {
            assert_eq!(ns.all, ns.significant);
        }
        let empty =
            go_enrichment(&set(&["g2"]), &GoAnnotation::default(), &universe, 0.05).unwrap();
        assert!(empty.is_empty());
        let declared = parse_go_annotation(b"#namespaces\tBP\tMF\tCC\n").unwrap();
        let res = go_enrichment(&set(&["g2"]), &declared, &universe, 0.05).unwrap();
        assert_eq!(res.len(), 3);
        assert!(res
            .iter()
            .all(|r| r.all.is_empty() && r.significant.is_empty()));
        assert!(go_enrichment(&set(&["g2"]), &ann, &universe, 0.0).is_err());
    }

    #[test]
    fn label_invariance() {
        let (pathways, mapping, universe) = fixture();
        let selected = set(&["g1", "g3", "g6"]);
        let rename = |g: &str| format!("renamed_{}", g.chars().rev().collect::<String>());
        let mut renamed_mapping = KoMapping::default();
        for (g, kos) in mapping.iter() {
            for k in kos {
                renamed_mapping.insert(rename(g), k.clone());
            }
        }
        let r_universe = universe.iter().map(|g| rename(g)).collect();
        let r_selected = selected.iter().map(|g| rename(g)).collect();
        let a = pathway_overrepresentation(&selected, &pathways, &mapping, &universe).unwrap();
        let b = pathway_overrepresentation(&r_selected, &pathways, &renamed_mapping, &r_universe)
            .unwrap();
        let b = by_term(&b);
        for r in &a {
            assert_eq!(r.p_value, b[r.term_id.as_str()].p_value);
            assert_eq!(r.p_adjusted, b[r.term_id.as_str()].p_adjusted);
        }
    }
}
