//! End-to-end run: ingest, resolve pathways, statistics, profiles, overlays
//! and reports.

mod tsv;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{Cursor, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

pub use tsv::{
    color_scale_tsv, enrichment_tsv, file_stem, format_float, labeled_enrichment_tsv, missing_tsv,
    write_enrichment_tsv, ENRICHMENT_HEADER,
};

use crate::ingest::{
    cross_check, parse_candidate_lists, parse_expression_table, parse_go_annotation,
    parse_ko_mapping, CandidateSet, GoAnnotation, IngestError,
};
use crate::kegg::{
    Fetcher, KeggClient, KeggError, KeggSettings, Mode, Pathway, PathwayId, DEFAULT_BASE_URL,
};
use crate::profiles::{
    group_profiles, profile_enrichment, ClassifierConfig, ProfileError, TimeSeriesDesign,
};
use crate::render::{
    build_quantile_scale, render_overlay, Aggregation, MissingKo, OverlaySpec, Palette, RenderError,
};
use crate::stats::{
    go_enrichment, pathway_overrepresentation, EnrichmentResult, NamespaceEnrichment, StatsError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Ingest { path: String, source: IngestError },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("pathway listing for `{org}`: {source}")]
    Listing { org: String, source: KeggError },
    #[error("pathway {pathway}: {source}")]
    Kegg { pathway: String, source: KeggError },
    #[error("pathway {pathway}: {source}")]
    Render {
        pathway: String,
        source: RenderError,
    },
    #[error("colour scale: {0}")]
    Scale(RenderError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("report bundle: {0}")]
    Bundle(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnalysisMode {
    #[default]
    Multi,
    TimeSeries,
}

impl FromStr for AnalysisMode {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "multi" => Ok(Self::Multi),
            "timeseries" | "time-series" => Ok(Self::TimeSeries),
            other => Err(PipelineError::Config(format!(
                "unknown mode `{other}` (expected multi or timeseries)"
            ))),
        }
    }
}

/// Pathway id, overlay PNG, render warnings and KOs without data.
type Rendered = (PathwayId, Vec<u8>, Vec<String>, Vec<MissingKo>);

pub const STAGING_DIR: &str = ".partial";
pub const BUNDLE_NAME: &str = "report_bundle.zip";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub expr: PathBuf,
    pub ko_map: PathBuf,
    pub candidates: Option<PathBuf>,
    pub go: Option<PathBuf>,
    pub org: String,
    pub mode: AnalysisMode,
    /// Matrix columns in time order (time-series mode).
    pub time_points: Vec<String>,
    /// Extra replicate column → time point.
    pub replicates: BTreeMap<String, String>,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
    pub offline: bool,
    pub refresh: bool,
    pub base_url: String,
    pub alpha: f64,
    pub n_bins: usize,
    pub palette: Palette,
    pub classifier: ClassifierConfig,
    pub aggregation: Aggregation,
    /// When non-empty, only these pathways are resolved and the listing is
    /// never requested.
    pub pathways: Vec<PathwayId>,
    pub report_bundle: bool,
}

impl RunConfig {
    pub fn new(
        expr: impl Into<PathBuf>,
        ko_map: impl Into<PathBuf>,
        org: &str,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            expr: expr.into(),
            ko_map: ko_map.into(),
            candidates: None,
            go: None,
            org: org.to_owned(),
            mode: AnalysisMode::Multi,
            time_points: Vec::new(),
            replicates: BTreeMap::new(),
            cache_dir: crate::kegg::default_cache_dir(),
            out_dir: out_dir.into(),
            offline: false,
            refresh: false,
            base_url: DEFAULT_BASE_URL.to_owned(),
            alpha: 0.05,
            n_bins: 5,
            palette: Palette::default(),
            classifier: ClassifierConfig::default(),
            aggregation: Aggregation::default(),
            pathways: Vec::new(),
            report_bundle: false,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if !crate::kegg::is_org_code(&self.org) {
            return bad(format!(
                "organism code `{}` must be 2-4 lowercase letters",
                self.org
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} outside (0, 1]", self.alpha));
        }
        if self.n_bins < 2 {
            return bad(format!("bins must be at least 2, got {}", self.n_bins));
        }
        self.classifier
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.mode == AnalysisMode::TimeSeries && self.time_points.len() < 2 {
            return bad("time-series mode needs at least 2 time points (--timepoints)".into());
        }
        if self.mode == AnalysisMode::Multi
            && !(self.time_points.is_empty() && self.replicates.is_empty())
        {
            return bad("time points are only used in time-series mode".into());
        }
        Ok(())
    }
}

/// Parses a `key = value` config file. `#` starts a comment line.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(PipelineError::Config(format!(
                "config line {}: expected key=value",
                i + 1
            )));
        };
        let key = key.trim();
        if out
            .insert(key.to_owned(), value.trim().to_owned())
            .is_some()
        {
            return Err(PipelineError::Config(format!(
                "config line {}: duplicate key `{key}`",
                i + 1
            )));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub pathways_resolved: usize,
    /// Pathways with at least one matrix gene.
    pub pathways_tested: usize,
    pub pathways_rendered: usize,
    pub tests_performed: usize,
    /// Family → count of results with `p_adjusted < alpha`.
    pub significant: BTreeMap<String, usize>,
    pub profile_groups: usize,
    pub warnings: Vec<String>,
    pub duration: Duration,
}

impl RunReport {
    /// `key<TAB>value` rows. Wall-clock time is left out so reruns compare
    /// byte for byte.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("key\tvalue\n");
        let _ = writeln!(out, "pathways_resolved\t{}", self.pathways_resolved);
        let _ = writeln!(out, "pathways_tested\t{}", self.pathways_tested);
        let _ = writeln!(out, "pathways_rendered\t{}", self.pathways_rendered);
        let _ = writeln!(out, "tests_performed\t{}", self.tests_performed);
        let _ = writeln!(out, "profile_groups\t{}", self.profile_groups);
        for (family, n) in &self.significant {
            let _ = writeln!(out, "significant:{family}\t{n}");
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning\t{}", w.replace(['\t', '\n'], " "));
        }
        out
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn ingest<T>(
    path: &Path,
    parse: impl FnOnce(&[u8]) -> Result<T, IngestError>,
) -> Result<T, PipelineError> {
    parse(&read_input(path)?).map_err(|source| PipelineError::Ingest {
        path: path.display().to_string(),
        source,
    })
}

fn is_significant(r: &EnrichmentResult, alpha: f64) -> bool {
    alpha >= 1.0 || r.p_adjusted < alpha
}

/// Staged output files, relative path → bytes. Kept in memory until every
/// computation has succeeded.
#[derive(Default)]
struct Outputs(BTreeMap<PathBuf, Vec<u8>>);

impl Outputs {
    fn add(&mut self, path: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.0.insert(path.into(), bytes.into());
    }

    fn add_namespace_tables(&mut self, dir: &str, stem: &str, tables: &[NamespaceEnrichment]) {
        for ns in tables {
            let base = format!("{dir}/{stem}_{}", file_stem(&ns.namespace));
            self.add(format!("{base}.tsv"), enrichment_tsv(&ns.all));
            self.add(
                format!("{base}.significant.tsv"),
                enrichment_tsv(&ns.significant),
            );
        }
    }
}

fn resolve_pathways(
    config: &RunConfig,
    client: &KeggClient,
) -> Result<Vec<(Pathway, Vec<u8>)>, PipelineError> {
    let ids = if config.pathways.is_empty() {
        client
            .list_pathways(&config.org)
            .map_err(|source| PipelineError::Listing {
                org: config.org.clone(),
                source,
            })?
    } else {
        let unique: BTreeSet<PathwayId> = config.pathways.iter().cloned().collect();
        unique.into_iter().collect()
    };
    ids.par_iter()
        .map(|id| {
            client
                .fetch_pathway(id)
                .map_err(|source| PipelineError::Kegg {
                    pathway: id.to_string(),
                    source,
                })
        })
        .collect()
}

/// Runs the whole analysis and writes every report under `config.out_dir`.
///
/// Nothing is written into final paths unless the run succeeds; files are
/// staged in `out_dir/.partial` and moved into place at the end. A failed
/// run leaves whatever was staged in `.partial`.
pub fn run(config: &RunConfig, fetcher: Arc<dyn Fetcher>) -> Result<RunReport, PipelineError> {
    let started = Instant::now();
    config.validate()?;
    let matrix = ingest(&config.expr, parse_expression_table)?;
    let mapping = ingest(&config.ko_map, parse_ko_mapping)?;
    let candidate_sets: Vec<CandidateSet> = match &config.candidates {
        Some(p) => ingest(p, parse_candidate_lists)?,
        None => Vec::new(),
    };
    let annotation: Option<GoAnnotation> = match &config.go {
        Some(p) => Some(ingest(p, parse_go_annotation)?),
        None => None,
    };

    let mut report = RunReport::default();
    report
        .warnings
        .extend(cross_check(&matrix, &mapping, &candidate_sets));
    let universe = matrix.universe();
    // candidate genes outside the matrix never enter a contingency table
    let candidate_sets: Vec<CandidateSet> = candidate_sets
        .into_iter()
        .map(|s| CandidateSet {
            genes: s.genes.intersection(&universe).cloned().collect(),
            label: s.label,
        })
        .collect();

    let mut settings = KeggSettings::new(
        &config.cache_dir,
        if config.offline {
            Mode::Offline
        } else {
            Mode::Online
        },
    );
    settings.base_url = config.base_url.clone();
    settings.refresh = config.refresh;
    let client = KeggClient::new(settings, fetcher);
    let resolved = resolve_pathways(config, &client)?;
    report.pathways_resolved = resolved.len();

    let genes_by_ko = mapping.genes_by_ko(|g| universe.contains(g));
    let relevant: Vec<&(Pathway, Vec<u8>)> = resolved
        .iter()
        .filter(|(pw, _)| {
            pw.ortholog_kos()
                .iter()
                .any(|ko| genes_by_ko.contains_key(*ko))
        })
        .collect();
    report.pathways_tested = relevant.len();

    let scale = build_quantile_scale(matrix.values(), config.n_bins, config.palette)
        .map_err(PipelineError::Scale)?;
    let rendered: Vec<Rendered> = relevant
        .par_iter()
        .map(|(pw, png)| {
            let (spec, missing) = OverlaySpec::build(
                pw,
                png,
                &matrix,
                &mapping,
                &candidate_sets,
                &scale,
                config.aggregation,
            );
            let out = render_overlay(&spec).map_err(|source| PipelineError::Render {
                pathway: pw.id.to_string(),
                source,
            })?;
            Ok((pw.id.clone(), out.png, out.warnings, missing))
        })
        .collect::<Result<_, PipelineError>>()?;

    let mut outputs = Outputs::default();
    let mut missing_rows = Vec::new();
    for (id, png, warnings, missing) in rendered {
        outputs.add(format!("pathways/{id}.png"), png);
        report.warnings.extend(warnings);
        missing_rows.extend(missing.into_iter().map(|m| (id.clone(), m)));
        report.pathways_rendered += 1;
    }
    outputs.add("missing.tsv", missing_tsv(&missing_rows));
    outputs.add("color_scale.tsv", color_scale_tsv(&scale));

    let pathways: Vec<Pathway> = resolved.iter().map(|(pw, _)| pw.clone()).collect();
    let mut pathway_tables = Vec::new();
    for set in &candidate_sets {
        let results = pathway_overrepresentation(&set.genes, &pathways, &mapping, &universe)?;
        report.tests_performed += results.len();
        let n_sig = results
            .iter()
            .filter(|r| is_significant(r, config.alpha))
            .count();
        report
            .significant
            .insert(format!("pathway:{}", set.label), n_sig);
        pathway_tables.push((set.label.as_str(), results));
    }
    outputs.add(
        "pathway_enrichment.tsv",
        labeled_enrichment_tsv(pathway_tables.iter().map(|(l, r)| (*l, r.as_slice()))),
    );

    if let Some(annotation) = &annotation {
        for set in &candidate_sets {
            let tables = go_enrichment(&set.genes, annotation, &universe, config.alpha)?;
            for ns in &tables {
                report.tests_performed += ns.all.len();
                report.significant.insert(
                    format!("go:{}:{}", set.label, ns.namespace),
                    ns.significant.len(),
                );
            }
            outputs.add_namespace_tables("go_enrichment", &file_stem(&set.label), &tables);
        }
    }

    if config.mode == AnalysisMode::TimeSeries {
        let design = TimeSeriesDesign {
            time_points: config.time_points.clone(),
            replicates: config.replicates.clone(),
        };
        let groups = group_profiles(&matrix, &design, &config.classifier)?;
        report.profile_groups = groups.len();
        let mut text = String::from("profile_key\tgene_id\n");
        for g in &groups {
            for gene in &g.genes {
                let _ = writeln!(text, "{}\t{gene}", g.key);
            }
        }
        outputs.add("profiles.tsv", text);
        if let Some(annotation) = &annotation {
            for (key, tables) in profile_enrichment(&groups, annotation, &universe, config.alpha)? {
                for ns in &tables {
                    report.tests_performed += ns.all.len();
                    report.significant.insert(
                        format!("profile_go:{key}:{}", ns.namespace),
                        ns.significant.len(),
                    );
                }
                outputs.add_namespace_tables("profile_go_enrichment", &file_stem(&key), &tables);
            }
        }
    }

    outputs.add("run_report.tsv", report.to_tsv());
    if config.report_bundle {
        let bundle = zip_bundle(&outputs)?;
        outputs.add(BUNDLE_NAME, bundle);
    }
    commit(&config.out_dir, &outputs)?;
    report.duration = started.elapsed();
    Ok(report)
}

/// Deterministic zip of the staged tree: sorted entries, fixed timestamps.
fn zip_bundle(outputs: &Outputs) -> Result<Vec<u8>, PipelineError> {
    use zip::write::SimpleFileOptions;
    let err = |e: zip::result::ZipError| PipelineError::Bundle(e.to_string());
    let options = SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default())
        .unix_permissions(0o644);
    let mut writer = zip::ZipWriter::new(Cursor::new(Vec::new()));
    for (path, bytes) in &outputs.0 {
        let name = path.to_string_lossy().replace('\\', "/");
        writer.start_file(name, options).map_err(err)?;
        writer
            .write_all(bytes)
            .map_err(|e| PipelineError::Bundle(e.to_string()))?;
    }
    Ok(writer.finish().map_err(err)?.into_inner())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes everything to `out_dir/.partial`, then moves each top-level item
/// into `out_dir`, replacing earlier results of the same name.
fn commit(out_dir: &Path, outputs: &Outputs) -> Result<(), PipelineError> {
    let staging = out_dir.join(STAGING_DIR);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    for (rel, bytes) in &outputs.0 {
        tsv::write_file(&staging.join(rel), bytes)?;
    }
    let top_level: BTreeSet<PathBuf> = outputs
        .0
        .keys()
        .filter_map(|p| p.components().next())
        .map(|c| PathBuf::from(c.as_os_str()))
        .collect();
    for item in top_level {
        let target = out_dir.join(&item);
        if target.is_dir() {
            fs::remove_dir_all(&target).map_err(io_err(&target))?;
        } else if target.exists() {
            fs::remove_file(&target).map_err(io_err(&target))?;
        }
        let source = staging.join(&item);
        fs::rename(&source, &target).map_err(io_err(&source))?;
    }
    fs::remove_dir_all(&staging).map_err(io_err(&staging))
}

/// Downloads the listing and every pathway of `org` into the cache.
/// Returns the number of pathways now cached.
pub fn prefetch(
    org: &str,
    settings: KeggSettings,
    fetcher: Arc<dyn Fetcher>,
) -> Result<usize, PipelineError> {
    let client = KeggClient::new(settings, fetcher);
    let ids = client
        .list_pathways(org)
        .map_err(|source| PipelineError::Listing {
            org: org.to_owned(),
            source,
        })?;
    for id in &ids {
        client.fetch_raw(id).map_err(|source| PipelineError::Kegg {
            pathway: id.to_string(),
            source,
        })?;
    }
    Ok(ids.len())
}
