use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use super::{Article, Publisher};
use crate::fsutil::write_atomic;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("duplicate article id {0:?}")]
    DuplicateId(String),
    #[error("invalid publisher id {0:?}")]
    InvalidPublisher(String),
    #[error("corrupt article store at {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Flat-file article store: one JSONL file per publisher plus a sidecar
/// index mapping article id to byte offset.
///
/// Readers share `&ArticleStore`; all mutation goes through `&mut self`,
/// which gives the single-writer contract when wrapped in a lock.
#[derive(Debug)]
pub struct ArticleStore {
    dir: PathBuf,
    by_publisher: BTreeMap<Publisher, Vec<Article>>,
    locations: HashMap<String, (Publisher, usize)>,
    dirty: BTreeSet<Publisher>,
}

impl ArticleStore {
    /// Opens (creating if needed) the store under `dir`, verifying every
    /// index entry against its data file.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut store = ArticleStore {
            dir,
            by_publisher: BTreeMap::new(),
            locations: HashMap::new(),
            dirty: BTreeSet::new(),
        };

        let mut data_files: Vec<PathBuf> = fs::read_dir(&store.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        data_files.sort();
        for path in data_files {
            store.load_file(&path)?;
        }
        Ok(store)
    }

    fn load_file(&mut self, path: &Path) -> Result<(), StoreError> {
        let corrupt = |reason: String| StoreError::Corrupt {
            path: path.to_path_buf(),
            reason,
        };
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let publisher = Publisher::new(stem);
        let index = read_index(&self.index_path(&publisher)).map_err(|e| corrupt(format!("index: {e}")))?;

        let mut reader = BufReader::new(File::open(path)?);
        let mut offset = 0u64;
        let mut line = String::new();
        let mut articles = Vec::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            let article: Article = serde_json::from_str(line.trim_end())
                .map_err(|e| corrupt(format!("line at byte {offset}: {e}")))?;
            if article.publisher != publisher {
                return Err(corrupt(format!("article {} filed under wrong publisher", article.id)));
            }
            match index.get(&article.id) {
                Some(&o) if o == offset => {}
                _ => return Err(corrupt(format!("index entry for {} does not match offset {offset}", article.id))),
            }
            if self.locations.contains_key(&article.id) {
                return Err(corrupt(format!("duplicate id {}", article.id)));
            }
            self.locations.insert(article.id.clone(), (publisher.clone(), articles.len()));
            articles.push(article);
            offset += n as u64;
        }
        if index.len() != articles.len() {
            return Err(corrupt(format!("index has {} entries for {} articles", index.len(), articles.len())));
        }
        self.by_publisher.insert(publisher, articles);
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.locations.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&Article> {
        let (publisher, pos) = self.locations.get(id)?;
        self.by_publisher.get(publisher)?.get(*pos)
    }

    pub fn publishers(&self) -> impl Iterator<Item = &Publisher> {
        self.by_publisher.keys()
    }

    /// All articles: publishers in id order, each in insertion order.
    pub fn articles(&self) -> impl Iterator<Item = &Article> {
        self.by_publisher.values().flatten()
    }

    pub fn articles_of(&self, publisher: &Publisher) -> &[Article] {
        self.by_publisher.get(publisher).map_or(&[], Vec::as_slice)
    }

    /// Adds an article in memory; call [`ArticleStore::flush`] to persist.
    pub fn insert(&mut self, article: Article) -> Result<(), StoreError> {
        if self.locations.contains_key(&article.id) {
            return Err(StoreError::DuplicateId(article.id));
        }
        if !Publisher::is_valid_id(article.publisher.as_str()) {
            return Err(StoreError::InvalidPublisher(article.publisher.as_str().to_string()));
        }
        let publisher = article.publisher.clone();
        let list = self.by_publisher.entry(publisher.clone()).or_default();
        self.locations.insert(article.id.clone(), (publisher.clone(), list.len()));
        list.push(article);
        self.dirty.insert(publisher);
        Ok(())
    }

    /// Rewrites the data and index files of every modified publisher,
    /// each through write-temp-then-rename. Data goes first so a crash
    /// between the two renames is detected as corruption on open.
    pub fn flush(&mut self) -> Result<(), StoreError> {
        for publisher in std::mem::take(&mut self.dirty) {
            let articles = self.articles_of(&publisher);
            let mut data = Vec::new();
            let mut index = BTreeMap::new();
            for article in articles {
                index.insert(article.id.clone(), data.len() as u64);
                serde_json::to_writer(&mut data, article).map_err(io::Error::other)?;
                data.push(b'\n');
            }
            write_atomic(&self.data_path(&publisher), &data)?;
            let index_bytes = serde_json::to_vec_pretty(&index).map_err(io::Error::other)?;
            write_atomic(&self.index_path(&publisher), &index_bytes)?;
        }
        Ok(())
    }

    /// Reads one article straight from disk through the sidecar index.
    pub fn read_persisted(&self, id: &str) -> Result<Option<Article>, StoreError> {
        let Some((publisher, _)) = self.locations.get(id) else {
            return Ok(None);
        };
        let index = read_index(&self.index_path(publisher))?;
        let Some(&offset) = index.get(id) else {
            return Ok(None);
        };
        let mut file = File::open(self.data_path(publisher))?;
        file.seek(SeekFrom::Start(offset))?;
        let mut line = String::new();
        BufReader::new(file).read_line(&mut line)?;
        let article = serde_json::from_str(line.trim_end()).map_err(|e| StoreError::Corrupt {
            path: self.data_path(publisher),
            reason: e.to_string(),
        })?;
        Ok(Some(article))
    }

    pub fn data_path(&self, publisher: &Publisher) -> PathBuf {
        self.dir.join(format!("{}.jsonl", publisher.as_str()))
    }

    pub fn index_path(&self, publisher: &Publisher) -> PathBuf {
        self.dir.join(format!("{}.idx.json", publisher.as_str()))
    }
}

fn read_index(path: &Path) -> io::Result<BTreeMap<String, u64>> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(io::Error::other),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(BTreeMap::new()),
        Err(e) => Err(e),
    }
}
