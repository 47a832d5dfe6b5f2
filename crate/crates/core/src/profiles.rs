//! Time-course profiles: each gene's consecutive time-point transitions are
//! called Up, Down or EE (equally expressed) and genes with at least one
//! non-EE call are grouped by the resulting profile key, e.g. `Up-EE-Down`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::ingest::{ExpressionMatrix, GoAnnotation};
use crate::stats::{go_enrichment, NamespaceEnrichment, StatsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("a time series needs at least two time points, got {0}")]
    TooFewTimePoints(usize),
    #[error("time point {0} has no replicate values")]
    EmptyReplicateGroup(usize),
    #[error("time point {0} contains a negative or non-finite value")]
    InvalidValue(usize),
    #[error("column `{0}` is not part of the expression matrix")]
    UnknownColumn(String),
    #[error("time point `{0}` is listed twice")]
    DuplicateTimePoint(String),
    #[error("replicate column `{0}` maps to `{1}`, which is not a time point")]
    BadReplicateTarget(String, String),
    #[error("invalid classifier setting: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    EE,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Up => "Up",
            Self::Down => "Down",
            Self::EE => "EE",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionCall {
    pub direction: Direction,
    pub log2_fold_change: f64,
    /// False exactly when `direction` is EE.
    pub passed_significance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileAssignment {
    pub gene_id: String,
    pub calls: Vec<TransitionCall>,
    pub profile_key: String,
}

impl ProfileAssignment {
    fn new(gene_id: String, calls: Vec<TransitionCall>) -> Self {
        let profile_key = profile_key(&calls);
        Self {
            gene_id,
            calls,
            profile_key,
        }
    }

    pub fn has_change(&self) -> bool {
        self.calls.iter().any(|c| c.direction != Direction::EE)
    }
}

/// Hyphen-joined directions.
pub fn profile_key(calls: &[TransitionCall]) -> String {
    calls
        .iter()
        .map(|c| c.direction.as_str())
        .collect::<Vec<_>>()
        .join("-")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    /// Minimum |log2 fold change| for a call; inclusive.
    pub fc_threshold: f64,
    /// Added to both means before taking the ratio.
    pub pseudocount: f64,
    /// When set, transitions between groups that both have ≥2 replicates also
    /// need a Welch t-test p below this value.
    pub test_alpha: Option<f64>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            fc_threshold: 1.0,
            pseudocount: 1.0,
            test_alpha: None,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if !(self.fc_threshold.is_finite() && self.fc_threshold >= 0.0) {
            return Err(ProfileError::BadConfig(format!(
                "fc_threshold {}",
                self.fc_threshold
            )));
        }
        if !(self.pseudocount.is_finite() && self.pseudocount >= 0.0) {
            return Err(ProfileError::BadConfig(format!(
                "pseudocount {}",
                self.pseudocount
            )));
        }
        if let Some(a) = self.test_alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(ProfileError::BadConfig(format!("test alpha {a}")));
            }
        }
        Ok(())
    }
}

/// Turns per-time-point replicate groups into transition calls.
pub trait TransitionClassifier: Sync {
    fn classify(&self, groups: &[Vec<f64>]) -> Result<Vec<TransitionCall>, ProfileError>;
}

/// Thresholded log2 fold change between consecutive replicate means, with an
/// optional Welch test on log-scale replicates.
#[derive(Debug, Clone, Copy, Default)]
pub struct FoldChangeClassifier {
    pub config: ClassifierConfig,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64], m: f64) -> f64 {
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// Two-sided Welch t-test p-value. `None` when the statistic is undefined.
fn welch_p(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let (vx, vy) = (
        sample_variance(x, mx) / x.len() as f64,
        sample_variance(y, my) / y.len() as f64,
    );
    let se2 = vx + vy;
    if se2 == 0.0 {
        return Some(if mx == my { 1.0 } else { 0.0 });
    }
    let t = (my - mx) / se2.sqrt();
    let df = se2 * se2 / (vx * vx / (x.len() - 1) as f64 + vy * vy / (y.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((2.0 * dist.sf(t.abs())).min(1.0))
}

impl TransitionClassifier for FoldChangeClassifier {
    fn classify(&self, groups: &[Vec<f64>]) -> Result<Vec<TransitionCall>, ProfileError> {
        if groups.len() < 2 {
            return Err(ProfileError::TooFewTimePoints(groups.len()));
        }
        for (i, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(ProfileError::EmptyReplicateGroup(i));
            }
            if g.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(ProfileError::InvalidValue(i));
            }
        }
        let cfg = &self.config;
        let eps = cfg.pseudocount;
        let calls = groups
            .windows(2)
            .map(|pair| {
                let (before, after) = (&pair[0], &pair[1]);
                let lfc = ((mean(after) + eps) / (mean(before) + eps)).log2();
                let mut direction = if lfc >= cfg.fc_threshold {
                    Direction::Up
                } else if lfc <= -cfg.fc_threshold {
                    Direction::Down
                } else {
                    Direction::EE
                };
                if let Some(alpha) = cfg.test_alpha {
                    if direction != Direction::EE && before.len() >= 2 && after.len() >= 2 {
                        let log =
                            |g: &Vec<f64>| g.iter().map(|v| (v + eps).log2()).collect::<Vec<_>>();
                        // non-finite logs (zero abundance, no pseudocount): fold change decides
                        if let Some(p) = welch_p(&log(before), &log(after)) {
                            if p >= alpha {
                                direction = Direction::EE;
                            }
                        }
                    }
                }
                TransitionCall {
                    direction,
                    log2_fold_change: lfc,
                    passed_significance: direction != Direction::EE,
                }
            })
            .collect();
        Ok(calls)
    }
}

/// Classifies one gene from its replicate groups, ordered by time.
pub fn classify_gene(
    gene_id: &str,
    values_by_timepoint: &[Vec<f64>],
    config: &ClassifierConfig,
) -> Result<ProfileAssignment, ProfileError> {
    config.validate()?;
    let calls = FoldChangeClassifier { config: *config }.classify(values_by_timepoint)?;
    Ok(ProfileAssignment::new(gene_id.to_owned(), calls))
}

/// Ordered time points, each a matrix column, plus optional extra replicate
/// columns mapped onto a time point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSeriesDesign {
    pub time_points: Vec<String>,
    /// Replicate column → time point label.
    pub replicates: BTreeMap<String, String>,
}

impl TimeSeriesDesign {
    pub fn new(time_points: Vec<String>) -> Self {
        Self {
            time_points,
            replicates: BTreeMap::new(),
        }
    }

    /// Column indices per time point, in time order.
    pub fn column_groups(
        &self,
        matrix: &ExpressionMatrix,
    ) -> Result<Vec<Vec<usize>>, ProfileError> {
        if self.time_points.len() < 2 {
            return Err(ProfileError::TooFewTimePoints(self.time_points.len()));
        }
        let mut seen = HashSet::new();
        let mut groups = Vec::with_capacity(self.time_points.len());
        for tp in &self.time_points {
            if !seen.insert(tp.as_str()) {
                return Err(ProfileError::DuplicateTimePoint(tp.clone()));
            }
            let col = matrix
                .condition_index(tp)
                .ok_or_else(|| ProfileError::UnknownColumn(tp.clone()))?;
            groups.push(vec![col]);
        }
        for (column, tp) in &self.replicates {
            let col = matrix
                .condition_index(column)
                .ok_or_else(|| ProfileError::UnknownColumn(column.clone()))?;
            let slot = self
                .time_points
                .iter()
                .position(|t| t == tp)
                .ok_or_else(|| ProfileError::BadReplicateTarget(column.clone(), tp.clone()))?;
            if !groups[slot].contains(&col) {
                groups[slot].push(col);
            }
        }
        Ok(groups)
    }
}

/// Genes sharing one profile key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileGroup {
    pub key: String,
    /// Sorted.
    pub genes: Vec<String>,
}

/// Classifies every gene and groups those with at least one change.
/// Groups come largest first, ties broken by key.
pub fn group_profiles(
    matrix: &ExpressionMatrix,
    design: &TimeSeriesDesign,
    config: &ClassifierConfig,
) -> Result<Vec<ProfileGroup>, ProfileError> {
    config.validate()?;
    group_profiles_with(matrix, design, &FoldChangeClassifier { config: *config })
}

pub fn group_profiles_with(
    matrix: &ExpressionMatrix,
    design: &TimeSeriesDesign,
    classifier: &dyn TransitionClassifier,
) -> Result<Vec<ProfileGroup>, ProfileError> {
    let assignments = assign_profiles(matrix, design, classifier)?;
    let mut by_key: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for a in assignments
        .into_iter()
        .filter(ProfileAssignment::has_change)
    {
        by_key.entry(a.profile_key).or_default().insert(a.gene_id);
    }
    let mut groups: Vec<ProfileGroup> = by_key
        .into_iter()
        .map(|(key, genes)| ProfileGroup {
            key,
            genes: genes.into_iter().collect(),
        })
        .collect();
    groups.sort_by(|a, b| {
        b.genes
            .len()
            .cmp(&a.genes.len())
            .then_with(|| a.key.cmp(&b.key))
    });
    Ok(groups)
}

/// Per-gene assignments in matrix row order, including all-EE genes.
pub fn assign_profiles(
    matrix: &ExpressionMatrix,
    design: &TimeSeriesDesign,
    classifier: &dyn TransitionClassifier,
) -> Result<Vec<ProfileAssignment>, ProfileError> {
    use rayon::prelude::*;
    let columns = design.column_groups(matrix)?;
    (0..matrix.n_genes())
        .into_par_iter()
        .map(|row| {
            let values = matrix.row(row);
            let groups: Vec<Vec<f64>> = columns
                .iter()
                .map(|cols| cols.iter().map(|&c| values[c]).collect())
                .collect();
            let calls = classifier.classify(&groups)?;
            Ok(ProfileAssignment::new(
                matrix.gene_ids()[row].clone(),
                calls,
            ))
        })
        .collect()
}

/// GO enrichment of every profile group, each group its own analysis.
pub fn profile_enrichment(
    groups: &[ProfileGroup],
    annotation: &GoAnnotation,
    universe: &BTreeSet<String>,
    alpha: f64,
) -> Result<Vec<(String, Vec<NamespaceEnrichment>)>, ProfileError> {
    groups
        .iter()
        .map(|g| {
            let selected: BTreeSet<String> = g.genes.iter().cloned().collect();
            Ok((
                g.key.clone(),
                go_enrichment(&selected, annotation, universe, alpha)?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_go_annotation;
    use proptest::prelude::*;

    fn cfg(fc: f64, eps: f64) -> ClassifierConfig {
        ClassifierConfig {
            fc_threshold: fc,
            pseudocount: eps,
            test_alpha: None,
        }
    }

    fn singles(means: &[f64]) -> Vec<Vec<f64>> {
        means.iter().map(|&m| vec![m]).collect()
    }

    fn key(means: &[f64], c: ClassifierConfig) -> String {
        classify_gene("g", &singles(means), &c).unwrap().profile_key
    }

    #[test]
    fn examples() {
        assert_eq!(key(&[1.0, 1.0, 1.0], cfg(1.0, 1.0)), "EE-EE");
        assert_eq!(key(&[1.0, 4.0, 16.0], cfg(1.0, 0.0)), "Up-Up");
        assert_eq!(key(&[8.0, 2.0, 2.0], cfg(1.0, 0.0)), "Down-EE");
    }

    #[test]
    fn boundary_is_inclusive() {
        let a = classify_gene("g", &singles(&[3.0, 6.0]), &cfg(1.0, 0.0)).unwrap();
        assert_eq!(a.calls[0].log2_fold_change, 1.0);
        assert_eq!(a.calls[0].direction, Direction::Up);
        assert_eq!(key(&[6.0, 3.0], cfg(1.0, 0.0)), "Down");
    }

    #[test]
    fn pseudocount_guards_zero() {
        let a = classify_gene("g", &singles(&[0.0, 3.0]), &ClassifierConfig::default()).unwrap();
        assert_eq!(a.calls[0].log2_fold_change, 2.0);
        assert_eq!(a.profile_key, "Up");
    }

    #[test]
    fn errors() {
        let c = ClassifierConfig::default();
        assert_eq!(
            classify_gene("g", &singles(&[1.0]), &c),
            Err(ProfileError::TooFewTimePoints(1))
        );
        assert_eq!(
            classify_gene("g", &[vec![1.0], vec![]], &c),
            Err(ProfileError::EmptyReplicateGroup(1))
        );
        assert!(classify_gene("g", &singles(&[1.0, 2.0]), &cfg(-1.0, 1.0)).is_err());
    }

    #[test]
    fn replicate_test_vetoes_noisy_change() {
        let noisy = vec![vec![1.0, 30.0, 2.0], vec![40.0, 3.0, 60.0]];
        let tight = vec![vec![10.0, 11.0, 10.5], vec![40.0, 41.0, 40.5]];
        let mut c = cfg(1.0, 1.0);
        assert_eq!(classify_gene("g", &noisy, &c).unwrap().profile_key, "Up");
        c.test_alpha = Some(0.05);
        let vetoed = classify_gene("g", &noisy, &c).unwrap();
        assert_eq!(vetoed.profile_key, "EE");
        assert!(!vetoed.calls[0].passed_significance);
        assert_eq!(classify_gene("g", &tight, &c).unwrap().profile_key, "Up");
        // single replicate on one side: fold change alone decides
        let single = vec![vec![1.0], vec![40.0, 3.0, 60.0]];
        assert_eq!(classify_gene("g", &single, &c).unwrap().profile_key, "Up");
    }

    #[test]
    fn welch_against_reference() {
        // scipy.stats.ttest_ind([1,2,3,4],[2,4,6,8,10], equal_var=False).pvalue
        let p = welch_p(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0, 10.0]).unwrap();
        assert!((p - 0.069_133_593_192_392_36).abs() < 1e-9, "{p}");
    }

    fn matrix(labels: &[&str], rows: &[(&str, &[f64])]) -> ExpressionMatrix {
        ExpressionMatrix::new(
            labels.iter().map(|s| s.to_string()).collect(),
            rows.iter()
                .map(|(g, v)| (g.to_string(), v.to_vec()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn grouping_excludes_all_ee() {
        let m = matrix(
            &["t0", "t1", "t2"],
            &[
                ("flat", &[5.0, 5.0, 5.0]),
                ("b", &[1.0, 4.0, 16.0]),
                ("a", &[2.0, 8.0, 32.0]),
            ],
        );
        let design = TimeSeriesDesign::new(vec!["t0".into(), "t1".into(), "t2".into()]);
        let groups = group_profiles(&m, &design, &cfg(1.0, 0.0)).unwrap();
        assert_eq!(
            groups,
            [ProfileGroup {
                key: "Up-Up".into(),
                genes: vec!["a".into(), "b".into()]
            }]
        );
    }

    #[test]
    fn grouping_order_and_replicates() {
        let m = matrix(
            &["t0", "t1", "t1b"],
            &[
                ("x", &[1.0, 8.0, 8.0]),
                ("y", &[8.0, 1.0, 1.0]),
                ("z", &[8.0, 1.0, 1.0]),
            ],
        );
        let mut design = TimeSeriesDesign::new(vec!["t0".into(), "t1".into()]);
        design.replicates.insert("t1b".into(), "t1".into());
        let groups = group_profiles(&m, &design, &cfg(1.0, 0.0)).unwrap();
        let keys: Vec<_> = groups.iter().map(|g| g.key.as_str()).collect();
        assert_eq!(keys, ["Down", "Up"]);

        design.replicates.insert("t1b".into(), "t9".into());
        assert!(matches!(
            group_profiles(&m, &design, &cfg(1.0, 0.0)),
            Err(ProfileError::BadReplicateTarget(..))
        ));
        let bad = TimeSeriesDesign::new(vec!["t0".into(), "nope".into()]);
        assert_eq!(
            group_profiles(&m, &bad, &cfg(1.0, 0.0)),
            Err(ProfileError::UnknownColumn("nope".into()))
        );
        let dup = TimeSeriesDesign::new(vec!["t0".into(), "t0".into()]);
        assert!(matches!(
            group_profiles(&m, &dup, &cfg(1.0, 0.0)),
            Err(ProfileError::DuplicateTimePoint(_))
        ));
    }

    #[test]
    fn enrichment_delegates_per_group() {
        let ann =
            parse_go_annotation(b"a\tGO:1\tBP\nb\tGO:1\tBP\nc\tGO:2\tBP\nd\tGO:3\tMF\n").unwrap();
        let universe: BTreeSet<String> = ["a", "b", "c", "d", "e"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let groups = vec![
            ProfileGroup {
                key: "Up".into(),
                genes: vec!["a".into(), "b".into()],
            },
            ProfileGroup {
                key: "Down".into(),
                genes: vec!["c".into()],
            },
        ];
        let res = profile_enrichment(&groups, &ann, &universe, 0.05).unwrap();
        for (g, (key, r)) in groups.iter().zip(&res) {
            assert_eq!(&g.key, key);
            let selected = g.genes.iter().cloned().collect();
            assert_eq!(r, &go_enrichment(&selected, &ann, &universe, 0.05).unwrap());
        }
        assert!(profile_enrichment(&[], &ann, &universe, 0.05)
            .unwrap()
            .is_empty());
    }

    proptest! {
        #[test]
        fn scaling_invariance(values in proptest::collection::vec(0.01..1e4f64, 2..6), c in 0.001..1000.0f64) {
            let conf = cfg(1.0, 0.0);
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            let a = classify_gene("g", &singles(&values), &conf).unwrap();
            let b = classify_gene("g", &singles(&scaled), &conf).unwrap();
            // skip cases sitting on the threshold, where rounding can flip the call
            let near = a.calls.iter().any(|t| (t.log2_fold_change.abs() - 1.0).abs() < 1e-9);
            prop_assume!(!near);
            prop_assert_eq!(a.profile_key, b.profile_key);
        }

        #[test]
        fn reversal_antisymmetry(values in proptest::collection::vec(0.01..1e4f64, 2..6)) {
            let conf = cfg(1.0, 0.0);
            let forward = classify_gene("g", &singles(&values), &conf).unwrap();
            let rev: Vec<f64> = values.iter().rev().copied().collect();
            let backward = classify_gene("g", &singles(&rev), &conf).unwrap();
            for (f, b) in forward.calls.iter().zip(backward.calls.iter().rev()) {
                let flipped = match f.direction {
                    Direction::Up => Direction::Down,
                    Direction::Down => Direction::Up,
                    Direction::EE => Direction::EE,
                };
                prop_assert_eq!(b.direction, flipped);
            }
        }
    }
}
