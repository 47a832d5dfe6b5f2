#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture(rel: &str) -> PathBuf {
    fixtures().join(rel)
}

pub fn read_fixture(rel: &str) -> Vec<u8> {
    fs::read(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// Exact binomial coefficient.
pub fn choose(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// `P(X ≥ a)` by direct summation of exact integer counts.
pub fn brute_force_upper_tail(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let n_total = a + b + c + d;
    let annotated = a + c;
    let selected = a + b;
    let mut favourable: u128 = 0;
    for k in a..=annotated.min(selected) {
        favourable += choose(annotated, k) * choose(n_total - annotated, selected - k);
    }
    favourable as f64 / choose(n_total, selected) as f64
}

/// Every file under `root` as relative path → bytes.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Offline toy run configuration writing to `out`.
pub fn toy_config(out: &Path) -> pathmap_core::pipeline::RunConfig {
    let mut config = pathmap_core::pipeline::RunConfig::new(
        fixture("toy/expression.tsv"),
        fixture("toy/ko_map.tsv"),
        "ko",
        out,
    );
    config.candidates = Some(fixture("toy/candidates.tsv"));
    config.go = Some(fixture("toy/go.tsv"));
    config.cache_dir = fixture("cache");
    config.offline = true;
    config
}
