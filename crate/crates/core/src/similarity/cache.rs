use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fsutil::write_atomic;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("provider {provider}: expected dimension {expected}, got {got}")]
    DimMismatch { provider: String, expected: usize, got: usize },
    #[error("vector for {0} has a non-finite value or zero norm")]
    BadVector(String),
    #[error("corrupt embedding cache {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub provider: String,
    pub dim: usize,
    pub count: usize,
    pub ids: Vec<String>,
}

/// Embedding store for one provider: `vectors.bin` holds little-endian f64
/// values back to back, `manifest.json` the provider, dimension, count and
/// ids in file order.
///
/// Vectors are appended and synced before the manifest is replaced, so a
/// crash leaves at worst unreferenced bytes at the end of `vectors.bin`,
/// which the next open cuts off.
#[derive(Debug)]
pub struct EmbeddingCache {
    provider: String,
    dir: Option<PathBuf>,
    dim: Option<usize>,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f64>,
}

fn valid(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.iter().any(|&x| x != 0.0)
}

impl EmbeddingCache {
    pub fn in_memory(provider: impl Into<String>) -> Self {
        EmbeddingCache {
            provider: provider.into(),
            dir: None,
            dim: None,
            ids: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
        }
    }

    /// Opens `<root>/<provider>/`, creating it if needed.
    pub fn open(root: impl AsRef<Path>, provider: &str) -> Result<Self, CacheError> {
        let dir = root.as_ref().join(provider);
        fs::create_dir_all(&dir)?;
        let mut cache = EmbeddingCache::in_memory(provider);
        let manifest_path = dir.join("manifest.json");
        let bin_path = dir.join("vectors.bin");
        let corrupt = |reason: String| CacheError::Corrupt {
            path: dir.clone(),
            reason,
        };
        if manifest_path.exists() {
            let manifest: CacheManifest =
                serde_json::from_slice(&fs::read(&manifest_path)?).map_err(|e| corrupt(e.to_string()))?;
            if manifest.provider != provider {
                return Err(corrupt(format!("manifest is for provider {}", manifest.provider)));
            }
            if manifest.count != manifest.ids.len() {
                return Err(corrupt("count does not match ids".into()));
            }
            let need = manifest.count * manifest.dim * 8;
            let bytes = fs::read(&bin_path).or_else(|e| {
                if e.kind() == io::ErrorKind::NotFound {
                    Ok(Vec::new())
                } else {
                    Err(e)
                }
            })?;
            if bytes.len() < need {
                return Err(corrupt(format!("vectors.bin has {} bytes, manifest needs {need}", bytes.len())));
            }
            if bytes.len() > need {
                let f = OpenOptions::new().write(true).open(&bin_path)?;
                f.set_len(need as u64)?;
                f.sync_all()?;
            }
            cache.values = bytes[..need]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            if manifest.count > 0 {
                cache.dim = Some(manifest.dim);
            }
            for (i, id) in manifest.ids.into_iter().enumerate() {
                if cache.index.insert(id.clone(), i).is_some() {
                    return Err(corrupt(format!("duplicate id {id}")));
                }
                cache.ids.push(id);
            }
        } else if bin_path.exists() {
            fs::remove_file(&bin_path)?;
        }
        cache.dir = Some(dir);
        Ok(cache)
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        let &i = self.index.get(id)?;
        let d = self.dim?;
        Some(&self.values[i * d..(i + 1) * d])
    }

    pub fn manifest(&self) -> CacheManifest {
        CacheManifest {
            provider: self.provider.clone(),
            dim: self.dim.unwrap_or(0),
            count: self.ids.len(),
            ids: self.ids.clone(),
        }
    }

    /// Validates and appends vectors; ids already cached are skipped. The
    /// whole batch is rejected if any vector is invalid.
    pub fn insert_batch(&mut self, batch: &[(String, Vec<f64>)]) -> Result<usize, CacheError> {
        let mut dim = self.dim;
        for (id, v) in batch {
            let expected = *dim.get_or_insert(v.len());
            if v.len() != expected || expected == 0 {
                return Err(CacheError::DimMismatch {
                    provider: self.provider.clone(),
                    expected,
                    got: v.len(),
                });
            }
            if !valid(v) {
                return Err(CacheError::BadVector(id.clone()));
            }
        }
        let mut fresh: Vec<&(String, Vec<f64>)> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for entry in batch {
            if !self.index.contains_key(&entry.0) && seen.insert(entry.0.as_str()) {
                fresh.push(entry);
            }
        }
        if fresh.is_empty() {
            return Ok(0);
        }
        if let Some(dir) = &self.dir {
            let mut bytes = Vec::with_capacity(fresh.len() * dim.unwrap_or(0) * 8);
            for (_, v) in &fresh {
                for x in v {
                    bytes.extend_from_slice(&x.to_le_bytes());
                }
            }
            let mut f = OpenOptions::new().create(true).append(true).open(dir.join("vectors.bin"))?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        self.dim = dim;
        for (id, v) in &fresh {
            self.index.insert(id.clone(), self.ids.len());
            self.ids.push(id.clone());
            self.values.extend_from_slice(v);
        }
        if let Some(dir) = &self.dir {
            let manifest = serde_json::to_vec_pretty(&self.manifest()).map_err(io::Error::other)?;
            write_atomic(&dir.join("manifest.json"), &manifest)?;
        }
        Ok(fresh.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_and_reopens() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut c = EmbeddingCache::open(dir.path(), "sbert").unwrap();
            c.insert_batch(&[("a".into(), vec![1.0, 2.0]), ("b".into(), vec![-0.5, 0.25])]).unwrap();
            assert_eq!(c.insert_batch(&[("a".into(), vec![9.0, 9.0])]).unwrap(), 0);
        }
        let c = EmbeddingCache::open(dir.path(), "sbert").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get("b").unwrap(), &[-0.5, 0.25]);
        assert_eq!(c.dim(), Some(2));
        let bytes = fs::read(dir.path().join("sbert/vectors.bin")).unwrap();
        assert_eq!(&bytes[..8], &1.0f64.to_le_bytes());
    }

    #[test]
    fn torn_append_is_trimmed() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut c = EmbeddingCache::open(dir.path(), "p").unwrap();
            c.insert_batch(&[("a".into(), vec![1.0, 0.0])]).unwrap();
        }
        let bin = dir.path().join("p/vectors.bin");
        let mut bytes = fs::read(&bin).unwrap();
        bytes.extend_from_slice(&[1, 2, 3]);
        fs::write(&bin, bytes).unwrap();
        let c = EmbeddingCache::open(dir.path(), "p").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(fs::metadata(&bin).unwrap().len(), 16);
    }

    #[test]
    fn rejects_wrong_dim_and_zero_vectors() {
        let mut c = EmbeddingCache::in_memory("p");
        c.insert_batch(&[("a".into(), vec![1.0, 0.0, 0.0])]).unwrap();
        match c.insert_batch(&[("b".into(), vec![1.0])]).unwrap_err() {
            CacheError::DimMismatch { provider, expected, got } => {
                assert_eq!((provider.as_str(), expected, got), ("p", 3, 1));
            }
            e => panic!("{e}"),
        }
        assert!(matches!(
            c.insert_batch(&[("z".into(), vec![0.0, 0.0, 0.0])]),
            Err(CacheError::BadVector(_))
        ));
        assert!(c.insert_batch(&[("n".into(), vec![f64::NAN, 1.0, 0.0])]).is_err());
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn truncated_bin_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut c = EmbeddingCache::open(dir.path(), "p").unwrap();
            c.insert_batch(&[("a".into(), vec![1.0, 0.0])]).unwrap();
        }
        fs::write(dir.path().join("p/vectors.bin"), [0u8; 4]).unwrap();
        assert!(matches!(EmbeddingCache::open(dir.path(), "p"), Err(CacheError::Corrupt { .. })));
    }
}
