//! File-backed storage: an append-only JSON-lines catalog plus content-addressed blobs.
//!
//! Writers store the blob first and append the catalog line second. After a crash the
//! catalog either names the blob or it does not; a torn final line is dropped on open.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::CatalogRecord;

pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const BLOB_DIR: &str = "blobs";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("catalog line {line} is corrupt: {message}")]
    CorruptCatalog { line: usize, message: String },
    #[error("blob {0} is missing")]
    MissingBlob(String),
    #[error("blob {0} does not match its hash")]
    CorruptBlob(String),
}

/// The append-only catalog file.
pub struct Catalog {
    dir: PathBuf,
    file: File,
}

/// Immutable content-addressed blobs. Cheap to clone and safe to use from any thread.
#[derive(Debug, Clone)]
pub struct BlobStore {
    dir: PathBuf,
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

/// Opens or creates a store and returns the catalog records in order. A trailing
/// partial line is truncated away; a bad line followed by good ones is an error.
pub fn open(dir: impl AsRef<Path>) -> Result<(Catalog, BlobStore, Vec<CatalogRecord>), StoreError> {
    let dir = dir.as_ref().to_path_buf();
    fs::create_dir_all(dir.join(BLOB_DIR))?;
    let path = dir.join(CATALOG_FILE);
    let text = match fs::read(&path) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut records = Vec::new();
    let mut good_len = 0usize;
    let mut offset = 0usize;
    let lines: Vec<&[u8]> = text.split_inclusive(|&b| b == b'\n').collect();
    for (i, line) in lines.iter().enumerate() {
        offset += line.len();
        let complete = line.ends_with(b"\n");
        match serde_json::from_slice::<CatalogRecord>(line) {
            Ok(r) if complete => {
                records.push(r);
                good_len = offset;
            }
            Ok(_) | Err(_) if i + 1 == lines.len() => break,
            Err(e) => return Err(StoreError::CorruptCatalog { line: i + 1, message: e.to_string() }),
            Ok(_) => unreachable!("only the last line can lack a newline"),
        }
    }
    let file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
    if good_len < text.len() {
        file.set_len(good_len as u64)?;
        file.sync_all()?;
    }
    sync_dir(&dir)?;
    let blobs = BlobStore { dir: dir.join(BLOB_DIR) };
    Ok((Catalog { dir, file }, blobs, records))
}

impl Catalog {
    /// Appends one durable catalog line.
    pub fn append(&mut self, rec: &CatalogRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(rec).expect("catalog records serialize");
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        Ok(())
    }

    /// Rewrites the catalog as `records` through a temporary file and an atomic rename.
    pub fn rotate(&mut self, records: &[CatalogRecord]) -> Result<(), StoreError> {
        let tmp = self.dir.join(format!("{CATALOG_FILE}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            for r in records {
                let mut line = serde_json::to_vec(r).expect("catalog records serialize");
                line.push(b'\n');
                f.write_all(&line)?;
            }
            f.sync_all()?;
        }
        let path = self.dir.join(CATALOG_FILE);
        fs::rename(&tmp, &path)?;
        sync_dir(&self.dir)?;
        self.file = OpenOptions::new().read(true).append(true).open(&path)?;
        Ok(())
    }
}

impl BlobStore {
    pub fn blob_path(&self, hash: &str) -> PathBuf {
        self.dir.join(hash)
    }

    /// Writes a blob under its SHA-256 and returns the hash. Existing blobs are kept.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<String, StoreError> {
        let hash = content_hash(bytes);
        let path = self.blob_path(&hash);
        if path.exists() {
            return Ok(hash);
        }
        let tmp = self.dir.join(format!(".{hash}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        sync_dir(&self.dir)?;
        Ok(hash)
    }

    pub fn get_blob(&self, hash: &str) -> Result<Vec<u8>, StoreError> {
        let bytes = fs::read(self.blob_path(hash)).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::MissingBlob(hash.to_string()),
            _ => StoreError::Io(e),
        })?;
        if content_hash(&bytes) != hash {
            return Err(StoreError::CorruptBlob(hash.to_string()));
        }
        Ok(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use uuid::Uuid;

    fn rec(n: u128) -> CatalogRecord {
        CatalogRecord::PairingDeactivated { pairing_id: Uuid::from_u128(n) }
    }

    #[test]
    fn records_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let (mut s, _, recs) = open(dir.path()).unwrap();
        assert!(recs.is_empty());
        s.append(&rec(1)).unwrap();
        s.append(&rec(2)).unwrap();
        drop(s);
        let (_, _, recs) = open(dir.path()).unwrap();
        assert_eq!(recs, vec![rec(1), rec(2)]);
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let (mut s, _, _) = open(dir.path()).unwrap();
        s.append(&rec(1)).unwrap();
        drop(s);
        let path = dir.path().join(CATALOG_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"record\":\"pairing_deac").unwrap();
        drop(f);
        let (mut s, _, recs) = open(dir.path()).unwrap();
        assert_eq!(recs, vec![rec(1)]);
        s.append(&rec(3)).unwrap();
        drop(s);
        assert_eq!(open(dir.path()).unwrap().2, vec![rec(1), rec(3)]);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(CATALOG_FILE),
            b"garbage\n{\"record\":\"session_analyzed\",\"session_id\":\"00000000-0000-0000-0000-000000000000\"}\n",
        )
        .unwrap();
        assert!(matches!(open(dir.path()), Err(StoreError::CorruptCatalog { line: 1, .. })));
    }

    #[test]
    fn blobs_are_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let (_, s, _) = open(dir.path()).unwrap();
        let h = s.put_blob(b"abc").unwrap();
        assert_eq!(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(s.put_blob(b"abc").unwrap(), h);
        assert_eq!(s.get_blob(&h).unwrap(), b"abc");
        fs::write(s.blob_path(&h), b"abd").unwrap();
        assert!(matches!(s.get_blob(&h), Err(StoreError::CorruptBlob(_))));
        assert!(matches!(s.get_blob("00"), Err(StoreError::MissingBlob(_))));
    }

    #[test]
    fn rotation_keeps_records() {
        let dir = tempfile::tempdir().unwrap();
        let (mut s, _, _) = open(dir.path()).unwrap();
        s.append(&rec(1)).unwrap();
        s.rotate(&[rec(2)]).unwrap();
        s.append(&rec(3)).unwrap();
        drop(s);
        assert_eq!(open(dir.path()).unwrap().2, vec![rec(2), rec(3)]);
    }
}
