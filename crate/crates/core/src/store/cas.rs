//! Filesystem blob store keyed by SHA-256.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StoreError;

const PREFIX: &str = "sha256-";

/// `sha256-` followed by 64 lowercase hex digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ContentId(String);

impl ContentId {
    pub fn of(bytes: &[u8]) -> Self {
        Self(format!("{PREFIX}{}", crate::sha256_hex(bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The bare hex digest.
    pub fn hex(&self) -> &str {
        &self.0[PREFIX.len()..]
    }

    pub fn from_hex(hex: &str) -> Result<Self, StoreError> {
        format!("{PREFIX}{hex}").parse()
    }

    pub fn matches(&self, bytes: &[u8]) -> bool {
        *self == Self::of(bytes)
    }
}

impl FromStr for ContentId {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix(PREFIX) {
            Some(h) if crate::anchor::entry::valid_hash_hex(h) => Ok(Self(s.to_string())),
            _ => Err(StoreError::InvalidId(s.to_string())),
        }
    }
}

impl TryFrom<String> for ContentId {
    type Error = StoreError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ContentId> for String {
    fn from(c: ContentId) -> Self {
        c.0
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone)]
pub struct Cas {
    root: PathBuf,
}

impl Cas {
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Where the blob for `id` lives on disk.
    pub fn path_of(&self, id: &ContentId) -> PathBuf {
        let h = id.hex();
        self.root.join(&h[..2]).join(&h[2..])
    }

    /// Stores `bytes`; idempotent. Concurrent puts of the same blob race on
    /// an atomic rename and all return the same id.
    pub fn put(&self, bytes: &[u8]) -> Result<ContentId, StoreError> {
        let id = ContentId::of(bytes);
        let path = self.path_of(&id);
        if path.exists() {
            return Ok(id);
        }
        let dir = path.parent().expect("blob path has a parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".tmp-{}", uuid::Uuid::new_v4()));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
        drop(f);
        fs::rename(&tmp, &path)?;
        Ok(id)
    }

    /// Reads and re-hashes the blob.
    pub fn get(&self, id: &ContentId) -> Result<Vec<u8>, StoreError> {
        let bytes = match fs::read(self.path_of(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(StoreError::NotFound(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        if !id.matches(&bytes) {
            return Err(StoreError::Corruption(id.to_string()));
        }
        Ok(bytes)
    }

    pub fn contains(&self, id: &ContentId) -> bool {
        self.path_of(id).exists()
    }

    /// Number of stored objects.
    pub fn len(&self) -> Result<usize, StoreError> {
        let mut n = 0;
        for d in fs::read_dir(&self.root)? {
            let d = d?;
            if d.file_type()?.is_dir() {
                n += fs::read_dir(d.path())?
                    .filter_map(Result::ok)
                    .filter(|e| !e.file_name().to_string_lossy().starts_with(".tmp-"))
                    .count();
            }
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> Result<bool, StoreError> {
        self.len().map(|n| n == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_blob_id() {
        assert_eq!(
            ContentId::of(b"").as_str(),
            "sha256-e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn put_is_idempotent_and_get_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let cas = Cas::open(dir.path()).unwrap();
        let a = cas.put(b"hello").unwrap();
        assert_eq!(cas.put(b"hello").unwrap(), a);
        assert_eq!(cas.len().unwrap(), 1);
        assert_ne!(cas.put(b"hellp").unwrap(), a);
        assert_eq!(cas.get(&a).unwrap(), b"hello");
        let unknown = ContentId::of(b"nope");
        assert!(matches!(cas.get(&unknown), Err(StoreError::NotFound(_))));
        let mut raw = fs::read(cas.path_of(&a)).unwrap();
        raw[0] ^= 1;
        fs::write(cas.path_of(&a), raw).unwrap();
        assert!(matches!(cas.get(&a), Err(StoreError::Corruption(_))));
    }

    #[test]
    fn id_parsing() {
        let id = ContentId::of(b"x");
        assert_eq!(id.as_str().parse::<ContentId>().unwrap(), id);
        assert!("sha256-XYZ".parse::<ContentId>().is_err());
        assert!("md5-00".parse::<ContentId>().is_err());
        let json = serde_json::to_string(&id).unwrap();
        assert_eq!(serde_json::from_str::<ContentId>(&json).unwrap(), id);
    }

    #[test]
    fn concurrent_puts_converge() {
        let dir = tempfile::tempdir().unwrap();
        let cas = Cas::open(dir.path()).unwrap();
        let ids: Vec<ContentId> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..8).map(|_| s.spawn(|| cas.put(b"same bytes").unwrap())).collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert!(ids.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(cas.len().unwrap(), 1);
    }
}
