use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn hash_bytes(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

pub fn hash_json<T: Serialize + ?Sized>(value: &T) -> String {
    hash_bytes(&[&serde_json::to_vec(value).expect("serializable value")])
}

/// Git-style content hash of every regular file in `dir`, by sorted name.
pub fn hash_dir(dir: &Path) -> Result<String> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for path in names {
        let bytes = fs::read(&path)?;
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        h.update(format!("blob {} {}\0", name, bytes.len()).as_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageEvent {
    Computed,
    Skipped,
    Failed,
}

/// Which stages ran and which were served from cache.
#[derive(Debug, Default)]
pub struct StageLog {
    entries: Mutex<Vec<(String, String, StageEvent)>>,
}

impl StageLog {
    pub fn record(&self, item: impl Into<String>, stage: &str, event: StageEvent) {
        self.entries.lock().unwrap().push((item.into(), stage.to_string(), event));
    }

    /// Entries sorted by item and stage, independent of scheduling order.
    pub fn entries(&self) -> Vec<(String, String, StageEvent)> {
        let mut v = self.entries.lock().unwrap().clone();
        v.sort();
        v
    }

    pub fn count(&self, event: StageEvent) -> usize {
        self.entries.lock().unwrap().iter().filter(|e| e.2 == event).count()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for (item, stage, event) in self.entries() {
            let word = match event {
                StageEvent::Computed => "computed",
                StageEvent::Skipped => "skipped (cached)",
                StageEvent::Failed => "failed",
            };
            writeln!(f, "{item}\t{stage}\t{word}")?;
        }
        Ok(())
    }
}

/// Content-addressed files under `<root>/<stage>/<key>.<ext>`.
#[derive(Debug, Clone)]
pub struct StageCache {
    pub root: PathBuf,
    pub enabled: bool,
}

impl StageCache {
    pub fn new(root: impl Into<PathBuf>, enabled: bool) -> Self {
        StageCache {
            root: root.into(),
            enabled,
        }
    }

    pub fn path(&self, stage: &str, key: &str, ext: &str) -> PathBuf {
        self.root.join(stage).join(format!("{key}.{ext}"))
    }

    /// Path of a cached artifact if caching is on and it exists.
    pub fn hit(&self, stage: &str, key: &str, ext: &str) -> Option<PathBuf> {
        let p = self.path(stage, key, ext);
        (self.enabled && p.is_file()).then_some(p)
    }

    pub fn prepare(&self, stage: &str) -> Result<()> {
        fs::create_dir_all(self.root.join(stage))?;
        Ok(())
    }
}

/// Writes through a temporary file so readers never see a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_are_stable_and_length_prefixed() {
        assert_eq!(hash_bytes(&[b"ab", b"c"]), hash_bytes(&[b"ab", b"c"]));
        assert_ne!(hash_bytes(&[b"ab", b"c"]), hash_bytes(&[b"a", b"bc"]));
        assert_eq!(hash_json(&[1, 2]).len(), 64);
    }

    #[test]
    fn dir_hash_tracks_content() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("a.csv"), "1,2\n").unwrap();
        let h1 = hash_dir(tmp.path()).unwrap();
        fs::write(tmp.path().join("a.csv"), "1,3\n").unwrap();
        assert_ne!(h1, hash_dir(tmp.path()).unwrap());
    }
}
