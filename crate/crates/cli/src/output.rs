use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const OUT_DIR_ENV: &str = "ARELU_OUT_DIR";

/// Where a run writes: `--out`, then `$ARELU_OUT_DIR`, then `runs/<command>-seed<N>`.
pub fn resolve_out_dir(flag: Option<&Path>, command: &str, seed: u64) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from("runs").join(format!("{command}-seed{seed}")),
    }
}

/// Output directory plus the files written into it so far.
pub struct RunDir {
    pub path: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(path: PathBuf) -> anyhow::Result<Self> {
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { path, files: Vec::new() })
    }

    pub fn file(&mut self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let full = self.path.join(name);
        let f = File::create(&full).with_context(|| format!("creating {}", full.display()))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Records the tracked path of a file written by other code.
    pub fn track(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.path.join(name)
    }

    /// Writes `manifest.json`. `settings` holds every effective setting under
    /// its flag name, so it can be fed back through `--config`.
    pub fn finish(mut self, command: &str, seed: u64, settings: Settings) -> anyhow::Result<PathBuf> {
        let manifest = json!({
            "tool": "arelu",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": seed,
            "settings": Value::Object(settings.0),
            "files": self.files,
        });
        self.json("manifest.json", &manifest)?;
        Ok(self.path)
    }
}

/// Effective settings keyed by flag name.
#[derive(Default)]
pub struct Settings(Map<String, Value>);

impl Settings {
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.insert(key.to_string(), Value::String(value.to_string()));
        self
    }
}
