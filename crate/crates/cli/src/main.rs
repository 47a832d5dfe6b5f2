use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pathmap_core::kegg::{
    default_cache_dir, HttpFetcher, KeggSettings, Mode, PathwayId, DEFAULT_MIN_DELAY,
};
use pathmap_core::pipeline::{self, parse_config_file, AnalysisMode, RunConfig};

#[derive(Parser)]
#[command(
    name = "pathmap",
    about = "Map expression data onto KEGG pathway diagrams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full analysis and write reports and overlays.
    Run(Box<RunArgs>),
    /// Download the pathway listing, KGML and images for an organism.
    Fetch(FetchArgs),
    /// Print the version.
    Version,
}

/// Every option may also come from `--config`; flags given here win.
#[derive(Args, Debug, Default)]
struct RunArgs {
    /// key=value file with defaults for any option below (keys are the long
    /// flag names).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    expr: Option<PathBuf>,
    #[arg(long = "ko-map")]
    ko_map: Option<PathBuf>,
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    go: Option<PathBuf>,
    #[arg(long)]
    org: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Use only the cache; never touch the network.
    #[arg(long)]
    offline: bool,
    /// multi or timeseries.
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated matrix columns in time order.
    #[arg(long)]
    timepoints: Option<String>,
    /// Extra replicate column for a time point, as COLUMN=TIMEPOINT.
    #[arg(long = "replicate")]
    replicates: Vec<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long = "fc-threshold")]
    fc_threshold: Option<f64>,
    #[arg(long)]
    pseudocount: Option<f64>,
    /// Welch test level for transitions with replicates; off by default.
    #[arg(long = "test-alpha")]
    test_alpha: Option<f64>,
    /// mean, max or sum.
    #[arg(long)]
    agg: Option<String>,
    /// ylorrd, viridis or blues.
    #[arg(long)]
    palette: Option<String>,
    /// Restrict the run to these pathways (repeatable).
    #[arg(long = "pathway")]
    pathways: Vec<String>,
    #[arg(long)]
    refresh: bool,
    #[arg(long = "base-url")]
    base_url: Option<String>,
    /// Also write a zip of the output tree.
    #[arg(long = "report-bundle")]
    report_bundle: bool,
}

#[derive(Args)]
struct FetchArgs {
    #[arg(long)]
    org: String,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    refresh: bool,
    #[arg(long = "base-url")]
    base_url: Option<String>,
}

const CONFIG_KEYS: &[&str] = &[
    "expr",
    "ko-map",
    "candidates",
    "go",
    "org",
    "out",
    "cache",
    "offline",
    "mode",
    "timepoints",
    "replicate",
    "alpha",
    "bins",
    "fc-threshold",
    "pseudocount",
    "test-alpha",
    "agg",
    "palette",
    "pathway",
    "refresh",
    "base-url",
    "report-bundle",
];

/// Flag value, else config file value, else nothing.
struct Layered<'a> {
    file: &'a BTreeMap<String, String>,
}

impl Layered<'_> {
    fn pick<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.file
            .get(key)
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|e| anyhow!("config key `{key}`: {e}"))
            })
            .transpose()
    }

    fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }

    fn list(&self, flag: Vec<String>, key: &str) -> Vec<String> {
        if !flag.is_empty() {
            return flag;
        }
        self.file
            .get(key)
            .map(|raw| split_list(raw))
            .unwrap_or_default()
    }
}

fn split_list(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| anyhow!("missing required option --{name}"))
}

fn build_config(args: RunArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let map = parse_config_file(&text)?;
            if let Some(unknown) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
                bail!("{}: unknown config key `{unknown}`", path.display());
            }
            map
        }
        None => BTreeMap::new(),
    };
    let layer = Layered { file: &file };

    let expr: PathBuf = required(layer.pick(args.expr, "expr")?, "expr")?;
    let ko_map: PathBuf = required(layer.pick(args.ko_map, "ko-map")?, "ko-map")?;
    let org: String = required(layer.pick(args.org, "org")?, "org")?;
    let out: PathBuf = required(layer.pick(args.out, "out")?, "out")?;
    let mut config = RunConfig::new(expr, ko_map, &org, out);

    config.candidates = layer.pick(args.candidates, "candidates")?;
    config.go = layer.pick(args.go, "go")?;
    config.cache_dir = layer
        .pick(args.cache, "cache")?
        .unwrap_or_else(default_cache_dir);
    config.offline = layer.switch(args.offline, "offline")?;
    config.refresh = layer.switch(args.refresh, "refresh")?;
    config.report_bundle = layer.switch(args.report_bundle, "report-bundle")?;
    if let Some(mode) = layer.pick::<String>(args.mode, "mode")? {
        config.mode = mode.parse::<AnalysisMode>()?;
    }
    if let Some(tp) = layer.pick::<String>(args.timepoints, "timepoints")? {
        config.time_points = split_list(&tp);
    }
    for item in layer.list(args.replicates, "replicate") {
        let (col, tp) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("--replicate expects COLUMN=TIMEPOINT, got `{item}`"))?;
        config.replicates.insert(col.to_owned(), tp.to_owned());
    }
    if let Some(v) = layer.pick(args.alpha, "alpha")? {
        config.alpha = v;
    }
    if let Some(v) = layer.pick(args.bins, "bins")? {
        config.n_bins = v;
    }
    if let Some(v) = layer.pick(args.fc_threshold, "fc-threshold")? {
        config.classifier.fc_threshold = v;
    }
    if let Some(v) = layer.pick(args.pseudocount, "pseudocount")? {
        config.classifier.pseudocount = v;
    }
    config.classifier.test_alpha = layer.pick(args.test_alpha, "test-alpha")?;
    if let Some(v) = layer.pick::<String>(args.agg, "agg")? {
        config.aggregation = v.parse()?;
    }
    if let Some(v) = layer.pick::<String>(args.palette, "palette")? {
        config.palette = v.parse()?;
    }
    if let Some(v) = layer.pick::<String>(args.base_url, "base-url")? {
        config.base_url = v;
    }
    config.pathways = layer
        .list(args.pathways, "pathway")
        .iter()
        .map(|p| p.parse::<PathwayId>())
        .collect::<Result<_, _>>()?;
    config.validate()?;
    Ok(config)
}

fn run(args: RunArgs) -> Result<()> {
    let config = build_config(args)?;
    let fetcher = Arc::new(HttpFetcher::new(DEFAULT_MIN_DELAY));
    let report = pipeline::run(&config, fetcher)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    eprintln!(
        "{} pathway(s) rendered, {} test(s), finished in {:.2?}; results in {}",
        report.pathways_rendered,
        report.tests_performed,
        report.duration,
        config.out_dir.display()
    );
    Ok(())
}

fn fetch(args: FetchArgs) -> Result<()> {
    let mut settings =
        KeggSettings::new(args.cache.unwrap_or_else(default_cache_dir), Mode::Online);
    settings.refresh = args.refresh;
    if let Some(url) = args.base_url {
        settings.base_url = url;
    }
    let cache = settings.cache_dir.clone();
    let n = pipeline::prefetch(
        &args.org,
        settings,
        Arc::new(HttpFetcher::new(DEFAULT_MIN_DELAY)),
    )?;
    eprintln!("{n} pathway(s) cached under {}", cache.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(*args),
        Command::Fetch(args) => fetch(args),
        Command::Version => {
            println!("pathmap {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn base_args() -> RunArgs {
        RunArgs {
            expr: Some("e.tsv".into()),
            ko_map: Some("k.tsv".into()),
            org: Some("ko".into()),
            out: Some("out".into()),
            ..Default::default()
        }
    }

    #[test]
    fn flags_beat_config_file() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            "alpha = 0.1\nbins = 7\npalette = viridis\noffline = true"
        )
        .unwrap();
        let mut args = base_args();
        args.config = Some(file.path().to_owned());
        args.alpha = Some(0.2);
        let c = build_config(args).unwrap();
        assert_eq!(c.alpha, 0.2);
        assert_eq!(c.n_bins, 7);
        assert_eq!(c.palette, pathmap_core::render::Palette::Viridis);
        assert!(c.offline);
    }

    #[test]
    fn defaults_apply() {
        let c = build_config(base_args()).unwrap();
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.n_bins, 5);
        assert!(!c.offline);
    }

    #[test]
    fn bad_values() {
        let mut args = base_args();
        args.agg = Some("median".into());
        assert!(build_config(args).is_err());
        let mut args = base_args();
        args.expr = None;
        assert!(build_config(args).is_err());
        let mut args = base_args();
        args.replicates = vec!["t0b".into()];
        assert!(build_config(args).is_err());
    }

    #[test]
    fn unknown_config_key() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "colour = red").unwrap();
        let mut args = base_args();
        args.config = Some(file.path().to_owned());
        assert!(build_config(args).is_err());
    }
}
