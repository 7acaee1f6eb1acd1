use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const OUT_ENV: &str = "LSTM_RELEVANCE_OUT";

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Directory receiving every file of one run, plus the manifest written at
/// the end.
pub struct RunDir {
    path: PathBuf,
    files: Vec<(String, String)>,
}

impl RunDir {
    /// `explicit`, or a fresh `<command>-<UTC timestamp>` directory under
    /// `$LSTM_RELEVANCE_OUT` (default `runs`).
    pub fn create(explicit: Option<&Path>, command: &str) -> std::io::Result<Self> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let base = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
                let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
                let mut p = base.join(format!("{command}-{stamp}"));
                let mut k = 2;
                while p.exists() {
                    p = base.join(format!("{command}-{stamp}-{k}"));
                    k += 1;
                }
                p
            }
        };
        fs::create_dir_all(&path)?;
        Ok(Self { path, files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> std::io::Result<PathBuf> {
        let p = self.path.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, contents.as_ref())?;
        self.record(name, contents.as_ref());
        Ok(p)
    }

    /// Registers a file written by other code.
    pub fn adopt(&mut self, name: &str) -> std::io::Result<()> {
        let bytes = fs::read(self.path.join(name))?;
        self.record(name, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), sha256_hex(bytes)));
    }

    /// Writes `manifest.json`. Nothing in it depends on wall-clock time or on
    /// the output location, so identical runs give identical manifests.
    pub fn finish<C: Serialize>(mut self, command: &str, seed: u64, config: &C, status: &str) -> std::io::Result<PathBuf> {
        let config = serde_json::to_value(config).map_err(std::io::Error::other)?;
        let canonical = serde_json::to_string(&config).map_err(std::io::Error::other)?;
        self.files.sort();
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            status,
            config_hash: sha256_hex(canonical.as_bytes()),
            config,
            files: self
                .files
                .iter()
                .map(|(name, sha256)| FileEntry { name, sha256 })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        text.push('\n');
        let p = self.path.join("manifest.json");
        fs::write(&p, text)?;
        Ok(self.path)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    status: &'a str,
    config_hash: String,
    config: serde_json::Value,
    files: Vec<FileEntry<'a>>,
}

#[derive(Serialize)]
struct FileEntry<'a> {
    name: &'a str,
    sha256: &'a str,
}
