mod common;

use std::fs;
use std::sync::Arc;

use common::*;
use pathmap_core::image::decode_png;
use pathmap_core::kegg::{CountingFetcher, PathwayId};
use pathmap_core::pipeline::{
    self, write_enrichment_tsv, AnalysisMode, PipelineError, ENRICHMENT_HEADER,
};
use pathmap_core::render::OUTLINE_COLOR;

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split('\t').map(str::to_owned).collect())
        .collect()
}

#[test]
fn golden_pathway_p_values_match_the_tail_oracle() {
    let text = fs::read_to_string(fixture("golden/toy_run/pathway_enrichment.tsv")).unwrap();
    let table = rows(&text);
    assert_eq!(table.len(), 2);
    for row in table {
        let n: Vec<u64> = row[3..7].iter().map(|v| v.parse().unwrap()).collect();
        let p: f64 = row[7].parse().unwrap();
        assert!(
            (p - brute_force_upper_tail(n[0], n[1], n[2], n[3])).abs() < 5e-7,
            "{row:?}"
        );
    }
}

#[test]
fn empty_candidate_set_gives_p_one_and_no_outlines() {
    let tmp = tempfile::tempdir().unwrap();
    let candidates = tmp.path().join("candidates.tsv");
    fs::write(&candidates, "treat\t\n").unwrap();
    let out = tmp.path().join("out");
    let mut config = toy_config(&out);
    config.candidates = Some(candidates);
    pipeline::run(&config, Arc::new(CountingFetcher::new())).unwrap();

    let table = rows(&fs::read_to_string(out.join("pathway_enrichment.tsv")).unwrap());
    assert!(!table.is_empty());
    assert!(table.iter().all(|r| r[7] == "1.000000"));
    let img = decode_png(&fs::read(out.join("pathways/ko00010.png")).unwrap()).unwrap();
    for y in 0..480 {
        for x in 0..img.width() {
            assert_ne!(img.get(x, y), OUTLINE_COLOR, "red pixel at ({x},{y})");
        }
    }
}

#[test]
fn pathway_filter_with_warm_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut config = toy_config(&out);
    config.offline = false;
    config.pathways = vec![PathwayId::new("ko", "00010").unwrap()];
    let fetcher = Arc::new(CountingFetcher::new());
    let report = pipeline::run(&config, fetcher.clone()).unwrap();
    assert_eq!(fetcher.request_count(), 0);
    assert_eq!(report.pathways_rendered, 1);
    let pngs: Vec<_> = fs::read_dir(out.join("pathways")).unwrap().collect();
    assert_eq!(pngs.len(), 1);
}

#[test]
fn failed_run_leaves_only_staging() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut config = toy_config(&out);
    config.pathways = vec![PathwayId::new("ko", "00020").unwrap()];
    let err = pipeline::run(&config, Arc::new(CountingFetcher::new())).unwrap_err();
    assert!(
        matches!(&err, PipelineError::Kegg { pathway, .. } if pathway == "ko00020"),
        "{err}"
    );
    assert!(!out.join("pathway_enrichment.tsv").exists());
    assert!(!out.join("pathways").exists());
}

#[test]
fn bad_input_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let expr = tmp.path().join("bad.tsv");
    fs::write(&expr, "gene\ta\ng1\tx\n").unwrap();
    let mut config = toy_config(&tmp.path().join("out"));
    config.expr = expr;
    let err = pipeline::run(&config, Arc::new(CountingFetcher::new())).unwrap_err();
    assert!(err.to_string().contains("bad.tsv"), "{err}");
}

#[test]
fn rerun_replaces_previous_results() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    fs::create_dir_all(out.join("go_enrichment")).unwrap();
    fs::write(out.join("go_enrichment/stale.tsv"), "old").unwrap();
    fs::write(out.join("notes.txt"), "mine").unwrap();
    pipeline::run(&toy_config(&out), Arc::new(CountingFetcher::new())).unwrap();
    assert!(!out.join("go_enrichment/stale.tsv").exists());
    assert!(out.join("notes.txt").exists());
    assert!(!out.join(pipeline::STAGING_DIR).exists());
}

#[test]
fn report_bundle_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bundles = Vec::new();
    for i in 0..2 {
        let out = tmp.path().join(format!("out{i}"));
        let mut config = toy_config(&out);
        config.report_bundle = true;
        pipeline::run(&config, Arc::new(CountingFetcher::new())).unwrap();
        bundles.push(fs::read(out.join(pipeline::BUNDLE_NAME)).unwrap());
    }
    assert_eq!(bundles[0], bundles[1]);
    assert!(bundles[0].starts_with(b"PK"));
}

#[test]
fn time_series_mode_writes_profiles() {
    let tmp = tempfile::tempdir().unwrap();
    let expr = tmp.path().join("series.tsv");
    fs::write(
        &expr,
        "gene\tt0\tt1\tt2\ng1\t1\t4\t4\ng2\t8\t2\t2\ng3\t2\t2\t2\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let mut config = toy_config(&out);
    config.expr = expr;
    config.candidates = None;
    config.mode = AnalysisMode::TimeSeries;
    config.time_points = vec!["t0".into(), "t1".into(), "t2".into()];
    let report = pipeline::run(&config, Arc::new(CountingFetcher::new())).unwrap();
    assert_eq!(report.profile_groups, 2);
    assert_eq!(
        fs::read_to_string(out.join("profiles.tsv")).unwrap(),
        "profile_key\tgene_id\nDown-EE\tg2\nUp-EE\tg1\n"
    );
    assert!(out.join("profile_go_enrichment/Up-EE_BP.tsv").is_file());
    assert!(out
        .join("profile_go_enrichment/Down-EE_MF.significant.tsv")
        .is_file());
}

#[test]
fn writes_header_only_table() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("nested/empty.tsv");
    write_enrichment_tsv(&[], &path).unwrap();
    assert_eq!(
        fs::read_to_string(path).unwrap(),
        format!("{ENRICHMENT_HEADER}\n")
    );
}
