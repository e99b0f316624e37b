//! Run manifests: every invocation records its configuration, seeds, input
//! hashes, outputs, and timings in `manifest.txt` under the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use contexthate::kv::KvDoc;

pub struct RunManifest {
    doc: KvDoc,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut doc = KvDoc::new();
        doc.set("command", command);
        doc.set("tool_version", env!("CARGO_PKG_VERSION"));
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        doc.set("started_unix", now);
        RunManifest { doc, outputs: Vec::new(), started: Instant::now() }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.doc.set(key, value.to_string());
    }

    /// Record an artifact path; every file a run writes must be listed.
    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn write(mut self, out_dir: &Path) -> Result<()> {
        for (i, p) in self.outputs.iter().enumerate() {
            self.doc.set(&format!("output.{i}"), p.display());
        }
        self.doc.set("elapsed_ms", self.started.elapsed().as_millis());
        std::fs::create_dir_all(out_dir)?;
        self.doc.save(&out_dir.join("manifest.txt"))?;
        Ok(())
    }
}

/// Write a file and log it in the manifest.
pub fn write_output(manifest: &mut RunManifest, path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    manifest.output(path);
    Ok(())
}
