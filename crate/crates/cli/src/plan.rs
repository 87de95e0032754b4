//! A resolved run: everything needed to execute a subcommand, and nothing
//! taken from the environment. The manifest is a plan written out as TOML.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ncmt_core::config::KvConfig;
use serde::{Deserialize, Serialize};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Set to anything but "" or "0" to require explicit seeds and keep
/// manifests free of timing data.
pub const CI_ENV: &str = "NCMT_CI";

pub fn ci_mode() -> bool {
    std::env::var(CI_ENV).map(|v| !v.is_empty() && v != "0").unwrap_or(false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub subcommand: String,
    pub jobs: usize,
    pub seed: Option<u64>,
    pub config: KvConfig,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
}

impl Plan {
    pub fn new(subcommand: &str, jobs: usize) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            jobs: jobs.max(1),
            seed: None,
            config: KvConfig::default(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&self, key: &str) -> anyhow::Result<&Path> {
        self.inputs
            .get(key)
            .map(PathBuf::as_path)
            .ok_or_else(|| anyhow!("plan has no input '{key}'"))
    }

    pub fn output(&self, key: &str) -> anyhow::Result<&Path> {
        self.outputs
            .get(key)
            .map(PathBuf::as_path)
            .ok_or_else(|| anyhow!("plan has no output '{key}'"))
    }

    pub fn manifest_path(&self) -> anyhow::Result<&Path> {
        self.output("manifest")
    }
}

/// `prefix` with `.ext` appended, keeping any dots already in the prefix.
pub fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    subcommand: String,
    version: String,
    /// Kept as text: TOML integers stop at 2^63 - 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<String>,
    jobs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duration_seconds: Option<f64>,
    config: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn path_map(paths: &BTreeMap<String, PathBuf>) -> BTreeMap<String, String> {
    paths
        .iter()
        .map(|(k, p)| (k.clone(), p.to_string_lossy().into_owned()))
        .collect()
}

pub fn render_manifest(plan: &Plan, duration_seconds: Option<f64>) -> anyhow::Result<String> {
    let manifest = Manifest {
        subcommand: plan.subcommand.clone(),
        version: VERSION.to_string(),
        seed: plan.seed.map(|s| s.to_string()),
        jobs: plan.jobs,
        duration_seconds,
        config: plan.config.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        inputs: path_map(&plan.inputs),
        outputs: path_map(&plan.outputs),
    };
    Ok(toml::to_string(&manifest)?)
}

pub fn write_manifest(plan: &Plan, duration_seconds: Option<f64>) -> anyhow::Result<()> {
    let path = plan.manifest_path()?;
    fs::write(path, render_manifest(plan, duration_seconds)?)
        .with_context(|| format!("cannot write manifest {}", path.display()))
}

/// Reads a manifest back into a plan. Returns the recorded tool version
/// alongside so callers can warn on a mismatch.
pub fn read_manifest(path: &Path) -> anyhow::Result<(Plan, String)> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
    let m: Manifest = toml::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))?;
    let seed = match m.seed {
        Some(s) => Some(s.parse().with_context(|| format!("bad seed '{s}' in manifest"))?),
        None => None,
    };
    let mut config = KvConfig::default();
    for (k, v) in m.config {
        config.insert(k, v);
    }
    let to_paths = |map: BTreeMap<String, String>| map.into_iter().map(|(k, v)| (k, PathBuf::from(v))).collect();
    let plan = Plan {
        subcommand: m.subcommand,
        jobs: m.jobs.max(1),
        seed,
        config,
        inputs: to_paths(m.inputs),
        outputs: to_paths(m.outputs),
    };
    Ok((plan, m.version))
}
