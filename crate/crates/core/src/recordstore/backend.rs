use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::RwLock;

use super::{BackendKind, RecordError};

/// Content-addressed byte storage keyed by locator (hex digest).
pub trait RecordBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    /// Stores `bytes` under `locator`. Returns false if it was already there.
    fn put(&self, locator: &str, bytes: &[u8]) -> Result<bool, RecordError>;
    fn get(&self, locator: &str) -> Result<Option<Vec<u8>>, RecordError>;
    fn contains(&self, locator: &str) -> Result<bool, RecordError>;
    /// Removes an object; used to undo a put whose transaction failed.
    fn delete(&self, locator: &str) -> Result<bool, RecordError>;
    fn count(&self) -> Result<usize, RecordError>;
    /// Number of `get` calls served so far.
    fn reads(&self) -> u64;
}

#[derive(Debug, Default)]
pub struct MemoryBackend {
    objects: RwLock<HashMap<String, Vec<u8>>>,
    reads: AtomicU64,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Overwrites stored bytes without any checks, for corruption drills.
    pub fn overwrite(&self, locator: &str, bytes: Vec<u8>) {
        self.objects.write().insert(locator.to_owned(), bytes);
    }
}

impl RecordBackend for MemoryBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Memory
    }

    fn put(&self, locator: &str, bytes: &[u8]) -> Result<bool, RecordError> {
        let mut objects = self.objects.write();
        if objects.contains_key(locator) {
            return Ok(false);
        }
        objects.insert(locator.to_owned(), bytes.to_vec());
        Ok(true)
    }

    fn get(&self, locator: &str) -> Result<Option<Vec<u8>>, RecordError> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        Ok(self.objects.read().get(locator).cloned())
    }

    fn contains(&self, locator: &str) -> Result<bool, RecordError> {
        Ok(self.objects.read().contains_key(locator))
    }

    fn delete(&self, locator: &str) -> Result<bool, RecordError> {
        Ok(self.objects.write().remove(locator).is_some())
    }

    fn count(&self) -> Result<usize, RecordError> {
        Ok(self.objects.read().len())
    }

    fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }
}

/// One file per object, named by its locator.
#[derive(Debug)]
pub struct FileBackend {
    dir: PathBuf,
    reads: AtomicU64,
}

fn unavailable(e: io::Error) -> RecordError {
    RecordError::BackendUnavailable(e.to_string())
}

impl FileBackend {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, RecordError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(unavailable)?;
        Ok(FileBackend { dir, reads: AtomicU64::new(0) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, locator: &str) -> PathBuf {
        self.dir.join(locator)
    }
}

impl RecordBackend for FileBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::File
    }

    fn put(&self, locator: &str, bytes: &[u8]) -> Result<bool, RecordError> {
        let path = self.path_of(locator);
        if path.exists() {
            return Ok(false);
        }
        // unique temp name so concurrent identical puts cannot interleave
        static NEXT: AtomicU64 = AtomicU64::new(0);
        let tmp = self.dir.join(format!(".{locator}.{}.tmp", NEXT.fetch_add(1, Ordering::Relaxed)));
        let mut file = File::create(&tmp).map_err(unavailable)?;
        file.write_all(bytes).map_err(unavailable)?;
        file.sync_data().map_err(unavailable)?;
        fs::rename(&tmp, &path).map_err(unavailable)?;
        Ok(true)
    }

    fn get(&self, locator: &str) -> Result<Option<Vec<u8>>, RecordError> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        match fs::read(self.path_of(locator)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(unavailable(e)),
        }
    }

    fn contains(&self, locator: &str) -> Result<bool, RecordError> {
        Ok(self.path_of(locator).exists())
    }

    fn delete(&self, locator: &str) -> Result<bool, RecordError> {
        match fs::remove_file(self.path_of(locator)) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(unavailable(e)),
        }
    }

    fn count(&self) -> Result<usize, RecordError> {
        let mut n = 0;
        for entry in fs::read_dir(&self.dir).map_err(unavailable)? {
            let name = entry.map_err(unavailable)?.file_name();
            if name.to_str().is_some_and(|s| !s.starts_with('.')) {
                n += 1;
            }
        }
        Ok(n)
    }

    fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }
}
