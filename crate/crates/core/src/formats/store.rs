//! Append-only grade store: gzip-compressed JSON lines.
//!
//! Every append writes one complete gzip member, so the file is always a
//! valid multi-member gzip stream and readers never see a torn record from
//! a finished append. A `<store>.lock` file marks the single active writer.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::model::{Grade, GradeKey};

#[derive(Debug, Clone)]
pub struct GradeStore {
    path: PathBuf,
}

impl GradeStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        GradeStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn lock_path(&self) -> PathBuf {
        let mut name = self.path.as_os_str().to_owned();
        name.push(".lock");
        PathBuf::from(name)
    }

    /// Takes the writer lock. Fails if another writer holds it.
    pub fn writer(&self) -> Result<StoreWriter> {
        let lock = self.lock_path();
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                return Err(Error::io(
                    &lock,
                    std::io::Error::new(
                        ErrorKind::WouldBlock,
                        "grade store is locked by another writer (remove the lock file if stale)",
                    ),
                ));
            }
            Err(e) => return Err(Error::io(&lock, e)),
        }
        Ok(StoreWriter {
            path: self.path.clone(),
            lock,
        })
    }

    /// All grades in the store, with later records superseding earlier ones
    /// of the same key. Order is first appearance of each key.
    pub fn read(&self) -> Result<Vec<Grade>> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.path, e)),
        };
        let name = self.path.display().to_string();
        let reader = BufReader::new(MultiGzDecoder::new(BufReader::new(file)));
        let mut grades: Vec<Grade> = Vec::new();
        let mut slots: HashMap<GradeKey, usize> = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::parse(&name, line_no, format!("corrupt store: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let grade: Grade = serde_json::from_str(&line).map_err(|e| Error::parse(&name, line_no, e.to_string()))?;
            match slots.get(&grade.key()) {
                Some(&slot) => grades[slot] = grade,
                None => {
                    slots.insert(grade.key(), grades.len());
                    grades.push(grade);
                }
            }
        }
        Ok(grades)
    }
}

/// Exclusive writer handle; releases the lock on drop.
#[derive(Debug)]
pub struct StoreWriter {
    path: PathBuf,
    lock: PathBuf,
}

impl StoreWriter {
    pub fn append(&mut self, grades: &[Grade]) -> Result<()> {
        if grades.is_empty() {
            return Ok(());
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        let mut gz = GzEncoder::new(file, Compression::default());
        for g in grades {
            serde_json::to_writer(&mut gz, g)?;
            gz.write_all(b"\n").map_err(|e| Error::io(&self.path, e))?;
        }
        let file = gz.finish().map_err(|e| Error::io(&self.path, e))?;
        file.sync_data().map_err(|e| Error::io(&self.path, e))?;
        Ok(())
    }
}

impl Drop for StoreWriter {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock);
    }
}

pub fn append_grades(store: &GradeStore, grades: &[Grade]) -> Result<()> {
    store.writer()?.append(grades)
}

pub fn read_grades(store: &GradeStore) -> Result<Vec<Grade>> {
    store.read()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rated(p: &str, q: &str, r: u8) -> Grade {
        Grade::self_rated("q1", p, q, Some(r.to_string()), r).unwrap()
    }

    #[test]
    fn append_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let store = GradeStore::new(dir.path().join("g.jsonl.gz"));
        assert!(read_grades(&store).unwrap().is_empty());
        let grades = vec![
            rated("p1", "a", 3),
            Grade::qa_verified("q1", "p1", "a", Some("epidermis".into()), true),
        ];
        append_grades(&store, &grades).unwrap();
        assert_eq!(read_grades(&store).unwrap(), grades);
    }

    #[test]
    fn last_writer_wins() {
        let dir = tempfile::tempdir().unwrap();
        let store = GradeStore::new(dir.path().join("g.jsonl.gz"));
        append_grades(&store, &[rated("p1", "a", 2)]).unwrap();
        append_grades(&store, &[rated("p1", "a", 4)]).unwrap();
        let read = read_grades(&store).unwrap();
        assert_eq!(read.len(), 1);
        assert_eq!(read[0].rating(), Some(4));
    }

    #[test]
    fn lock_excludes_second_writer() {
        let dir = tempfile::tempdir().unwrap();
        let store = GradeStore::new(dir.path().join("g.jsonl.gz"));
        let w = store.writer().unwrap();
        assert!(store.writer().is_err());
        drop(w);
        assert!(store.writer().is_ok());
    }

    #[test]
    fn corrupt_gzip_is_read_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl.gz");
        std::fs::write(&path, b"definitely not gzip").unwrap();
        let err = read_grades(&GradeStore::new(&path)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err:?}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl.gz");
        let mut gz = GzEncoder::new(File::create(&path).unwrap(), Compression::default());
        let good = serde_json::to_string(&rated("p", "a", 1)).unwrap();
        writeln!(gz, "{good}").unwrap();
        writeln!(
            gz,
            r#"{{"query_id":"q","passage_id":"p","question_id":"b","mode":"self_rated","rating":9}}"#
        )
        .unwrap();
        gz.finish().unwrap();
        let err = read_grades(&GradeStore::new(&path)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }
}
