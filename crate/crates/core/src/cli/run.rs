//! Run directories and manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use edgehst::embed::MODEL_FORMAT_VERSION;
use edgehst::hst::FOREST_FORMAT_VERSION;
use edgehst::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub crate_version: String,
    pub model_format_version: u32,
    pub forest_format_version: u32,
    pub created: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
    pub timings_secs: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            args: std::env::args().collect(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            model_format_version: MODEL_FORMAT_VERSION,
            forest_format_version: FOREST_FORMAT_VERSION,
            created: chrono::Local::now().to_rfc3339(),
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            config: serde_json::Value::Null,
            timings_secs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.into(), path.display().to_string());
    }

    pub fn output(&mut self, name: &str, path: &Path) {
        self.outputs.insert(name.into(), path.display().to_string());
    }

    /// Runs `f` and records its wall time under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings_secs
            .insert(phase.into(), t.elapsed().as_secs_f64());
        out
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST);
        write_file(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        Ok(serde_json::from_str(&read_file(&path)?)?)
    }
}

/// `explicit`, or a fresh `<root>/<timestamp>-s<seed>` directory.
pub fn run_dir(explicit: Option<&Path>, root: &Path, seed: u64) -> Result<PathBuf> {
    let dir = match explicit {
        Some(d) => d.to_path_buf(),
        None => {
            let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
            let base = root.join(format!("{stamp}-s{seed}"));
            let mut dir = base.clone();
            let mut k = 2;
            while dir.exists() {
                dir = PathBuf::from(format!("{}-{k}", base.display()));
                k += 1;
            }
            dir
        }
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
