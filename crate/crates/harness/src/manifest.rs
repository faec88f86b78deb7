//! Run manifests and the output directory writer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub rng_algorithm: String,
    pub versions: BTreeMap<String, String>,
    /// The config exactly as hashed.
    pub config_toml: String,
    pub outputs: Vec<OutputFile>,
    pub summary: serde_json::Value,
    /// Wall-clock seconds of the timed phases; kept out of the artifacts so
    /// those stay reproducible.
    pub timings: BTreeMap<String, f64>,
    pub created_unix_s: u64,
    pub wall_seconds: f64,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text)
            .map_err(|e| crate::error::HarnessError::data(format!("manifest: {e}")))
    }
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("oesnn-core".to_string(), oesnn_core::VERSION.to_string()),
        (
            "oesnn-harness".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        ),
        (
            "target".to_string(),
            format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
        ),
    ])
}

/// Collects artifacts written into one directory.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
    timings: BTreeMap<String, f64>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn time(&mut self, phase: &str, seconds: f64) {
        self.timings.insert(phase.to_string(), seconds);
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&p, bytes)?;
        self.record(name, bytes);
        Ok(p)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value).expect("value serializes");
        s.push('\n');
        self.write_text(name, &s)
    }

    /// RFC-4180 CSV with a mandatory header row.
    pub fn write_csv<I, R, S>(&mut self, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    /// Record a file some other writer already put in the directory.
    pub fn register(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        let rel = path
            .strip_prefix(&self.dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        self.record(&rel, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.files.retain(|f| f.path != name);
        self.files.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    pub fn finish(
        mut self,
        cfg: &ExperimentConfig,
        summary: serde_json::Value,
        wall_seconds: f64,
    ) -> Result<Manifest> {
        let config_toml = cfg.to_toml();
        self.write_text("config.toml", &config_toml)?;
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let m = Manifest {
            experiment: cfg.experiment.to_string(),
            config_sha256: sha256_hex(config_toml.as_bytes()),
            seed: cfg.seed,
            rng_algorithm: oesnn_core::rng::ALGORITHM.to_string(),
            versions: versions(),
            config_toml,
            outputs: self.files.clone(),
            summary,
            timings: std::mem::take(&mut self.timings),
            created_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            wall_seconds,
        };
        let mut s = serde_json::to_string_pretty(&m).expect("manifest serializes");
        s.push('\n');
        std::fs::write(self.dir.join(MANIFEST_FILE), s)?;
        Ok(m)
    }
}
