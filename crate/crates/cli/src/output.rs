//! Output files. Each starts with `#` metadata lines so the run can be traced
//! back to its configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::config::Loaded;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct Meta {
    lines: Vec<String>,
}

impl Meta {
    pub fn new(command: &str, loaded: &Loaded, seed: Option<u64>) -> Result<Self> {
        let mut lines = vec![
            format!("aerobat {VERSION}"),
            format!("command={command}"),
            format!("config_sha256={}", loaded.config.hash()?),
            format!("seed={}", seed.map_or("none".to_string(), |s| s.to_string())),
        ];
        if !loaded.sources.is_empty() {
            lines.push(format!("config={}", loaded.sources.join(" ")));
        }
        for o in &loaded.overrides {
            lines.push(format!("override {o}"));
        }
        Ok(Self { lines })
    }

    /// Adds a marker line such as `synthetic_ecm=true`.
    pub fn mark(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    pub fn header(&self) -> String {
        self.lines.iter().map(|l| format!("# {l}\n")).collect()
    }
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `body` after the metadata header.
    pub fn write(&self, name: &str, meta: &Meta, body: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut f = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        f.write_all(meta.header().as_bytes())?;
        f.write_all(body)?;
        Ok(path)
    }

    pub fn write_csv<F>(&self, name: &str, meta: &Meta, fill: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
    {
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            fill(&mut w)?;
            w.flush()?;
        }
        self.write(name, meta, &buf)
    }
}

/// `key=value` lines.
pub fn summary(pairs: &[(&str, String)]) -> Vec<u8> {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect::<String>().into_bytes()
}
