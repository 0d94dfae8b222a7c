//! Atomic artifact output and the run manifest.
//!
//! Every file is written to a temporary sibling and renamed into place, so
//! a failed run never leaves partial artifacts. The manifest lists each
//! artifact with its content digest plus the resolved config snapshot; its
//! bytes depend only on the config and the artifacts, never on wall time.
//! Stage timings go to a separate `timings.txt` that the manifest does not
//! reference, keeping manifests comparable across runs.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const TIMINGS_NAME: &str = "timings.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Writes `bytes` to `path` through a same-directory temp file and rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Collects artifacts and stage timings for one command run.
pub struct ArtifactWriter {
    out_dir: PathBuf,
    entries: Vec<(String, String)>,
    timings: Vec<(String, f64)>,
}

impl ArtifactWriter {
    pub fn new(out_dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let out_dir = out_dir.into();
        std::fs::create_dir_all(&out_dir)?;
        Ok(ArtifactWriter {
            out_dir,
            entries: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Writes one artifact atomically and records its digest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        atomic_write(&self.out_dir.join(name), bytes)?;
        self.entries.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    /// Runs a stage, recording how long it took.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push((stage.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    /// Renders the manifest for `command` over the artifacts written so far.
    pub fn render_manifest(&self, command: &str, snapshot: &[(String, String)]) -> String {
        let mut out = String::new();
        out.push_str(&format!("v6forge-version={}\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("command={command}\n"));
        out.push_str("\n[config]\n");
        for (key, value) in snapshot {
            out.push_str(&format!("{key}={value}\n"));
        }
        out.push_str("\n[artifacts]\n");
        let mut entries = self.entries.clone();
        entries.sort();
        for (name, digest) in entries {
            out.push_str(&format!("{name} sha256={digest}\n"));
        }
        out
    }

    /// Writes the manifest and the timing sidecar, consuming the writer.
    pub fn finish(self, command: &str, snapshot: &[(String, String)]) -> std::io::Result<()> {
        let manifest = self.render_manifest(command, snapshot);
        atomic_write(&self.out_dir.join(MANIFEST_NAME), manifest.as_bytes())?;
        let mut timings = String::new();
        for (stage, secs) in &self.timings {
            timings.push_str(&format!("stage={stage} seconds={secs:.3}\n"));
        }
        atomic_write(&self.out_dir.join(TIMINGS_NAME), timings.as_bytes())
    }
}
