use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::PipelineError;

/// Hex SHA-256 over length-prefixed parts, so `["ab", "c"]` and
/// `["a", "bc"]` hash differently.
pub fn content_key<T: AsRef<[u8]>>(parts: &[T]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        let p = p.as_ref();
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// On-disk artifact store addressed by content key.
#[derive(Clone, Debug)]
pub struct ArtifactCache {
    root: PathBuf,
}

impl ArtifactCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ArtifactCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, kind: &str, key: &str, ext: &str) -> PathBuf {
        self.root.join(kind).join(format!("{key}.{ext}"))
    }

    /// Loads the artifact if present, otherwise builds and stores it. The
    /// file is written under a temporary name and renamed into place.
    pub fn get_or_build<T>(
        &self,
        kind: &str,
        key: &str,
        ext: &str,
        load: impl FnOnce(&Path) -> Result<T, PipelineError>,
        save: impl FnOnce(&T, &Path) -> Result<(), PipelineError>,
        build: impl FnOnce() -> Result<T, PipelineError>,
    ) -> Result<T, PipelineError> {
        let path = self.path(kind, key, ext);
        if path.is_file() {
            log::debug!("cache hit {}", path.display());
            return load(&path);
        }
        let value = build()?;
        fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
        let tmp = path.with_extension(format!("{ext}.tmp"));
        save(&value, &tmp)?;
        fs::rename(&tmp, &path)?;
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn keys_separate_parts() {
        assert_ne!(content_key(&["ab", "c"]), content_key(&["a", "bc"]));
        assert_eq!(content_key(&["x"]), content_key(&[b"x".to_vec()]));
        assert_eq!(content_key(&["x"]).len(), 64);
    }

    #[test]
    fn builds_once() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ArtifactCache::new(dir.path());
        let builds = Cell::new(0);
        let get = || {
            cache.get_or_build(
                "num",
                "k",
                "txt",
                |p| Ok(fs::read_to_string(p)?.parse::<u32>().unwrap()),
                |v, p| Ok(fs::write(p, v.to_string())?),
                || {
                    builds.set(builds.get() + 1);
                    Ok(42u32)
                },
            )
        };
        assert_eq!(get().unwrap(), 42);
        assert_eq!(get().unwrap(), 42);
        assert_eq!(builds.get(), 1);
    }
}
