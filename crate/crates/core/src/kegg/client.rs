use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::{is_org_code, parse_kgml, ImageSize, KeggError, Pathway, PathwayId};
use crate::image::decode_png;

pub const DEFAULT_BASE_URL: &str = "https://rest.kegg.jp";
pub const DEFAULT_MIN_DELAY: Duration = Duration::from_millis(350);
const CACHE_ENV: &str = "PATHMAP_CACHE_DIR";

/// `$PATHMAP_CACHE_DIR`, else the platform cache directory, else a local
/// `.pathmap-cache`.
pub fn default_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    dirs::cache_dir()
        .map(|d| d.join("pathmap"))
        .unwrap_or_else(|| PathBuf::from(".pathmap-cache"))
}

/// Source of raw bytes for a URL.
pub trait Fetcher: Send + Sync {
    fn get(&self, url: &str) -> Result<Vec<u8>, KeggError>;
}

/// Blocking HTTP fetcher. Requests are serialised and spaced at least
/// `min_delay` apart.
pub struct HttpFetcher {
    agent: ureq::Agent,
    min_delay: Duration,
    last_request: Mutex<Option<Instant>>,
}

impl HttpFetcher {
    pub fn new(min_delay: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .user_agent(concat!("pathmap/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        Self {
            agent,
            min_delay,
            last_request: Mutex::new(None),
        }
    }
}

impl Fetcher for HttpFetcher {
    fn get(&self, url: &str) -> Result<Vec<u8>, KeggError> {
        // held for the whole request: no parallel fetches
        let mut last = self.last_request.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_delay {
                thread::sleep(self.min_delay - elapsed);
            }
        }
        log::debug!("GET {url}");
        let result = self
            .agent
            .get(url)
            .call()
            .and_then(|mut resp| resp.body_mut().with_config().limit(64 << 20).read_to_vec());
        *last = Some(Instant::now());
        result.map_err(|e| KeggError::NetworkError(format!("{url}: {e}")))
    }
}

/// In-memory fetcher that counts requests. Unknown URLs yield a
/// `NetworkError`.
#[derive(Default)]
pub struct CountingFetcher {
    responses: HashMap<String, Vec<u8>>,
    count: AtomicUsize,
    log: Mutex<Vec<String>>,
}

impl CountingFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(mut self, url: impl Into<String>, body: impl Into<Vec<u8>>) -> Self {
        self.responses.insert(url.into(), body.into());
        self
    }

    pub fn request_count(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }

    pub fn requested_urls(&self) -> Vec<String> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Fetcher for CountingFetcher {
    fn get(&self, url: &str) -> Result<Vec<u8>, KeggError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(url.to_owned());
        self.responses
            .get(url)
            .cloned()
            .ok_or_else(|| KeggError::NetworkError(format!("{url}: no such resource")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Online,
    /// Only the cache directory is consulted; it acts as the fixture store.
    Offline,
}

#[derive(Debug, Clone)]
pub struct KeggSettings {
    pub base_url: String,
    pub cache_dir: PathBuf,
    pub mode: Mode,
    /// Refetch artifacts even when cached (online only).
    pub refresh: bool,
}

impl KeggSettings {
    pub fn new(cache_dir: impl Into<PathBuf>, mode: Mode) -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.to_owned(),
            cache_dir: cache_dir.into(),
            mode,
            refresh: false,
        }
    }
}

/// Cache-first access to pathway listings, KGML and diagram images.
///
/// Layout: `<cache>/<org>/pathways.list`, `<cache>/<org>/<id>.kgml`,
/// `<cache>/<org>/<id>.png`. Entries never expire.
pub struct KeggClient {
    settings: KeggSettings,
    fetcher: Arc<dyn Fetcher>,
    fetch_queue: Mutex<HashSet<PathBuf>>,
}

impl KeggClient {
    pub fn new(settings: KeggSettings, fetcher: Arc<dyn Fetcher>) -> Self {
        Self {
            settings,
            fetcher,
            fetch_queue: Mutex::new(HashSet::new()),
        }
    }

    pub fn settings(&self) -> &KeggSettings {
        &self.settings
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.settings.base_url.trim_end_matches('/'), path)
    }

    fn org_dir(&self, org: &str) -> PathBuf {
        self.settings.cache_dir.join(org)
    }

    /// Reads `path`, fetching and storing it first when needed. Fetch-and-store
    /// runs under one lock so a missing artifact is requested exactly once.
    fn resolve(&self, path: &Path, url: &str) -> Result<Vec<u8>, KeggError> {
        let refresh = self.settings.refresh && self.settings.mode == Mode::Online;
        if !refresh && path.is_file() {
            return read(path);
        }
        if self.settings.mode == Mode::Offline {
            return Err(KeggError::FixtureMissing(path.display().to_string()));
        }
        let mut fetched = self.fetch_queue.lock().unwrap_or_else(|e| e.into_inner());
        let stale = refresh && !fetched.contains(path);
        if !stale && path.is_file() {
            return read(path);
        }
        let bytes = self.fetcher.get(url)?;
        store(path, &bytes)?;
        fetched.insert(path.to_owned());
        Ok(bytes)
    }

    /// Sorted, deduplicated pathway ids for an organism.
    pub fn list_pathways(&self, org: &str) -> Result<Vec<PathwayId>, KeggError> {
        if !is_org_code(org) {
            return Err(KeggError::BadOrgCode(org.to_owned()));
        }
        let path = self.org_dir(org).join("pathways.list");
        let raw = self.resolve(&path, &self.url(&format!("list/pathway/{org}")))?;
        parse_listing(&raw, org)
    }

    /// Raw KGML and PNG bytes for one pathway, cache first.
    pub fn fetch_raw(&self, id: &PathwayId) -> Result<(Vec<u8>, Vec<u8>), KeggError> {
        let dir = self.org_dir(id.org_code());
        let kgml = self.resolve(
            &dir.join(format!("{id}.kgml")),
            &self.url(&format!("get/{id}/kgml")),
        )?;
        let png = self.resolve(
            &dir.join(format!("{id}.png")),
            &self.url(&format!("get/{id}/image")),
        )?;
        Ok((kgml, png))
    }

    /// Parsed pathway with its image size recorded, plus the PNG bytes.
    pub fn fetch_pathway(&self, id: &PathwayId) -> Result<(Pathway, Vec<u8>), KeggError> {
        let (kgml, png) = self.fetch_raw(id)?;
        let mut pathway = parse_kgml(&kgml)?;
        let image = decode_png(&png)?;
        pathway.attach_image_size(ImageSize {
            width: image.width(),
            height: image.height(),
        })?;
        Ok((pathway, png))
    }
}

fn read(path: &Path) -> Result<Vec<u8>, KeggError> {
    fs::read(path).map_err(|source| KeggError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn store(path: &Path, bytes: &[u8]) -> Result<(), KeggError> {
    let io = |source| KeggError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let tmp = path.with_extension("part");
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Parses `list/pathway` output. The first column may be `path:hsa00010`,
/// `hsa00010` or a reference `map00010`; the map number is re-homed onto the
/// requested organism.
fn parse_listing(raw: &[u8], org: &str) -> Result<Vec<PathwayId>, KeggError> {
    let text = String::from_utf8_lossy(raw);
    let mut ids = BTreeSet::new();
    for line in text.lines() {
        let first = line.split('\t').next().unwrap_or_default().trim();
        if first.is_empty() {
            continue;
        }
        let first = first.strip_prefix("path:").unwrap_or(first);
        if first.len() < 5 || !first.is_char_boundary(first.len() - 5) {
            return Err(KeggError::BadPathwayId(first.to_owned()));
        }
        let number = &first[first.len() - 5..];
        ids.insert(
            PathwayId::new(org, number).map_err(|_| KeggError::BadPathwayId(first.to_owned()))?,
        );
    }
    Ok(ids.into_iter().collect())
}
