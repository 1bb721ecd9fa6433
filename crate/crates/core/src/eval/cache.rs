use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::record::EvalRecord;
use super::EvalError;

type Key = (String, String, u64);

/// Append-only evaluation cache, optionally backed by a JSONL file.
#[derive(Debug, Default)]
pub struct EvalCache {
    records: HashMap<Key, EvalRecord>,
    order: Vec<Key>,
    writer: Option<BufWriter<File>>,
    path: Option<PathBuf>,
}

impl EvalCache {
    pub fn in_memory() -> Self {
        EvalCache::default()
    }

    /// Loads (or creates) a cache file. A corrupt last line is truncated;
    /// corruption anywhere else is an error.
    pub fn open(path: &Path) -> Result<Self, EvalError> {
        let mut cache = EvalCache::in_memory();
        cache.path = Some(path.to_path_buf());
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
        let mut valid_len = 0u64;
        let mut lines = Vec::new();
        {
            let mut reader = BufReader::new(&file);
            let mut buf = String::new();
            loop {
                buf.clear();
                let n = reader.read_line(&mut buf)?;
                if n == 0 {
                    break;
                }
                lines.push((buf.clone(), n as u64));
            }
        }
        let last = lines.len().saturating_sub(1);
        for (i, (line, n)) in lines.iter().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                valid_len += n;
                continue;
            }
            match serde_json::from_str::<EvalRecord>(trimmed) {
                Ok(rec) if line.ends_with('\n') || i < last => {
                    cache.insert_memory(rec)?;
                    valid_len += n;
                }
                Ok(rec) => {
                    // complete record missing only its newline
                    cache.insert_memory(rec)?;
                    valid_len += n;
                    file.seek(SeekFrom::End(0))?;
                    file.write_all(b"\n")?;
                    valid_len += 1;
                }
                Err(e) if i == last => {
                    log::warn!("{}: dropping corrupt trailing cache line ({e})", path.display());
                    file.set_len(valid_len)?;
                }
                Err(e) => {
                    return Err(EvalError::CorruptCache { path: path.to_path_buf(), line: i + 1, message: e.to_string() })
                }
            }
        }
        file.seek(SeekFrom::Start(valid_len))?;
        cache.writer = Some(BufWriter::new(file));
        Ok(cache)
    }

    /// Loads a cache file without opening it for appends. A corrupt last
    /// line is skipped with a warning; the file is left untouched.
    pub fn read(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)?;
        let mut cache = EvalCache::in_memory();
        cache.path = Some(path.to_path_buf());
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<EvalRecord>(line) {
                Ok(rec) => {
                    cache.insert_memory(rec)?;
                }
                Err(e) if i + 1 == lines.len() => {
                    log::warn!("{}: ignoring corrupt trailing cache line ({e})", path.display());
                }
                Err(e) => {
                    return Err(EvalError::CorruptCache { path: path.to_path_buf(), line: i + 1, message: e.to_string() })
                }
            }
        }
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, strategy_key: &str, instance_id: &str, timeout_ms: u64) -> Option<&EvalRecord> {
        self.records.get(&(strategy_key.to_string(), instance_id.to_string(), timeout_ms))
    }

    /// Records in insertion order.
    pub fn records(&self) -> impl Iterator<Item = &EvalRecord> {
        self.order.iter().map(|k| &self.records[k])
    }

    fn insert_memory(&mut self, rec: EvalRecord) -> Result<bool, EvalError> {
        let key = (rec.strategy_key.clone(), rec.instance_id.clone(), rec.timeout_ms);
        if let Some(old) = self.records.get(&key) {
            if *old == rec {
                return Ok(false);
            }
            return Err(EvalError::CacheConflict { existing: Box::new(old.clone()), new: Box::new(rec) });
        }
        self.order.push(key.clone());
        self.records.insert(key, rec);
        Ok(true)
    }

    /// Adds a record, appending it to the backing file. Returns whether it
    /// was new; re-inserting an identical record is a no-op.
    pub fn insert(&mut self, rec: EvalRecord) -> Result<bool, EvalError> {
        let line = serde_json::to_string(&rec).expect("records serialize");
        let new = self.insert_memory(rec)?;
        if new {
            if let Some(w) = &mut self.writer {
                w.write_all(line.as_bytes())?;
                w.write_all(b"\n")?;
            }
        }
        Ok(new)
    }

    pub fn flush(&mut self) -> Result<(), EvalError> {
        if let Some(w) = &mut self.writer {
            w.flush()?;
        }
        Ok(())
    }

    /// Writes all records, in insertion order, to a fresh JSONL file.
    pub fn export(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = BufWriter::new(File::create(path)?);
        for r in self.records() {
            serde_json::to_writer(&mut w, r).expect("records serialize");
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Drop for EvalCache {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            log::error!("failed to flush evaluation cache: {e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::EvalResult;

    fn rec(id: &str, wall: u64) -> EvalRecord {
        EvalRecord {
            strategy_key: "smt".into(),
            instance_id: id.into(),
            timeout_ms: 100,
            result: EvalResult::Sat,
            wall_ms: wall,
            backend_tag: "sim".into(),
            seed: 1,
        }
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        {
            let mut c = EvalCache::open(&p).unwrap();
            assert!(c.insert(rec("a", 5)).unwrap());
            assert!(!c.insert(rec("a", 5)).unwrap());
            c.insert(rec("b", 7)).unwrap();
        }
        let c = EvalCache::open(&p).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get("smt", "b", 100).unwrap().wall_ms, 7);
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(
            r#"{"strategy_key":"smt","instance_id":"a","timeout_ms":100,"result":"sat","wall_ms":5,"backend_tag":"sim","seed":1}"#
        ));
    }

    #[test]
    fn conflict_is_error() {
        let mut c = EvalCache::in_memory();
        c.insert(rec("a", 5)).unwrap();
        assert!(matches!(c.insert(rec("a", 6)), Err(EvalError::CacheConflict { .. })));
    }

    #[test]
    fn truncates_corrupt_tail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let good = serde_json::to_string(&rec("a", 5)).unwrap();
        std::fs::write(&p, format!("{good}\n{{\"strategy_key\":\"sm")).unwrap();
        {
            let mut c = EvalCache::open(&p).unwrap();
            assert_eq!(c.len(), 1);
            c.insert(rec("b", 1)).unwrap();
        }
        let c = EvalCache::open(&p).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn corrupt_middle_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let good = serde_json::to_string(&rec("a", 5)).unwrap();
        std::fs::write(&p, format!("garbage\n{good}\n")).unwrap();
        assert!(matches!(EvalCache::open(&p), Err(EvalError::CorruptCache { line: 1, .. })));
    }
}
