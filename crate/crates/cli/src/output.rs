use std::path::{Path, PathBuf};

use regime_trader::config::RunConfig;
use regime_trader::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// The directory one subcommand writes into, and every file it produced.
pub struct Output {
    dir: PathBuf,
    command: &'static str,
    files: Vec<String>,
}

#[derive(Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Versions {
    regime_trader: &'static str,
    cli: &'static str,
}

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    config_sha256: String,
    seed: u64,
    versions: Versions,
    files: Vec<FileEntry>,
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

impl Output {
    pub fn create(root: &Path, command: &'static str) -> Result<Self> {
        let dir = root.join(command);
        std::fs::create_dir_all(&dir)?;
        Ok(Output { dir, command, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path of `name` inside the directory, recorded for the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.file(name);
        std::fs::write(path, contents)?;
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Writes the resolved configuration and `manifest.json`.
    pub fn finish(mut self, config: &RunConfig) -> Result<PathBuf> {
        let resolved = config.resolved_json()? + "\n";
        self.write("config.json", &resolved)?;
        let mut names = self.files.clone();
        names.sort();
        let files = names
            .iter()
            .map(|name| Ok(FileEntry { path: name.clone(), sha256: sha256_file(&self.dir.join(name))? }))
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            command: self.command,
            config_sha256: hex::encode(Sha256::digest(resolved.as_bytes())),
            seed: config.seed,
            versions: Versions { regime_trader: regime_trader::VERSION, cli: env!("CARGO_PKG_VERSION") },
            files,
        };
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }
}
