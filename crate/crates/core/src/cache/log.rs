//! The append-only log behind the second cache level.
//!
//! A log file starts with the 8-byte magic `SOPTLOG1`. Every record after it
//! is framed as a little-endian `u32` payload length followed by the
//! payload. A payload is a tag byte and its fields, where strings are a
//! `u32` length plus UTF-8 bytes and counters are `u64`, all little endian:
//!
//! | tag | record       | fields                                     |
//! |-----|--------------|--------------------------------------------|
//! | 1   | `Record`     | fingerprint, lhs, time, has-rhs byte, rhs? |
//! | 2   | `StaticAdd`  | fingerprint, lhs, n                        |
//! | 3   | `DynamicAdd` | fingerprint, lhs, n                        |
//! | 4   | `SiteMap`    | site, fingerprint, lhs                     |
//!
//! A frame cut short at the end of the file is the trace of an interrupted
//! write; opening the log discards it.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{CacheError, CacheKey};

pub(crate) const MAGIC: &[u8; 8] = b"SOPTLOG1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogRecord {
    /// The outcome of synthesis for a key; `None` is the null RHS. `at` is
    /// in seconds since the Unix epoch.
    Record { key: CacheKey, rhs: Option<String>, at: u64 },
    StaticAdd { key: CacheKey, n: u64 },
    DynamicAdd { key: CacheKey, n: u64 },
    /// Ties a program point to the LHS harvested there, so that profile
    /// counts keyed by site can be attributed.
    SiteMap { site: String, key: CacheKey },
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_key(out: &mut Vec<u8>, k: &CacheKey) {
    put_str(out, &k.fingerprint);
    put_str(out, &k.lhs);
}

impl LogRecord {
    pub fn encode(&self) -> Vec<u8> {
        let mut p = Vec::new();
        match self {
            LogRecord::Record { key, rhs, at } => {
                p.push(1);
                put_key(&mut p, key);
                p.extend_from_slice(&at.to_le_bytes());
                match rhs {
                    Some(r) => {
                        p.push(1);
                        put_str(&mut p, r);
                    }
                    None => p.push(0),
                }
            }
            LogRecord::StaticAdd { key, n } | LogRecord::DynamicAdd { key, n } => {
                p.push(if matches!(self, LogRecord::StaticAdd { .. }) { 2 } else { 3 });
                put_key(&mut p, key);
                p.extend_from_slice(&n.to_le_bytes());
            }
            LogRecord::SiteMap { site, key } => {
                p.push(4);
                put_str(&mut p, site);
                put_key(&mut p, key);
            }
        }
        let mut frame = (p.len() as u32).to_le_bytes().to_vec();
        frame.extend(p);
        frame
    }

    /// Decodes one payload (without its length prefix).
    pub fn decode(payload: &[u8]) -> Option<LogRecord> {
        let mut r = Reader { buf: payload, pos: 0 };
        let rec = match r.byte()? {
            1 => {
                let key = r.key()?;
                let at = r.u64()?;
                let rhs = match r.byte()? {
                    0 => None,
                    1 => Some(r.string()?),
                    _ => return None,
                };
                LogRecord::Record { key, rhs, at }
            }
            2 => LogRecord::StaticAdd {
                key: r.key()?,
                n: r.u64()?,
            },
            3 => LogRecord::DynamicAdd {
                key: r.key()?,
                n: r.u64()?,
            },
            4 => LogRecord::SiteMap {
                site: r.string()?,
                key: r.key()?,
            },
            _ => return None,
        };
        (r.pos == payload.len()).then_some(rec)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn byte(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn string(&mut self) -> Option<String> {
        let n = u32::from_le_bytes(self.take(4)?.try_into().ok()?) as usize;
        String::from_utf8(self.take(n)?.to_vec()).ok()
    }

    fn key(&mut self) -> Option<CacheKey> {
        Some(CacheKey {
            fingerprint: self.string()?,
            lhs: self.string()?,
        })
    }
}

/// An open log file. Appends go through this single writer.
#[derive(Debug)]
pub struct LogFile {
    path: PathBuf,
    file: File,
}

impl LogFile {
    /// Opens or creates the log at `path` and returns it with every intact
    /// record it holds.
    pub fn open(path: &Path) -> Result<(LogFile, Vec<LogRecord>), CacheError> {
        let io = |e: io::Error| CacheError::Io(path.to_path_buf(), e);
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)
            .map_err(io)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io)?;
        if bytes.is_empty() {
            file.write_all(MAGIC).map_err(io)?;
            file.sync_data().map_err(io)?;
            bytes.extend_from_slice(MAGIC);
        }
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CacheError::Corrupt {
                path: path.to_path_buf(),
                offset: 0,
            });
        }
        let mut records = Vec::new();
        let mut pos = MAGIC.len();
        while pos < bytes.len() {
            let Some(len) = bytes.get(pos..pos + 4) else {
                break;
            };
            let len = u32::from_le_bytes(len.try_into().unwrap()) as usize;
            let Some(payload) = bytes.get(pos + 4..pos + 4 + len) else {
                break;
            };
            let rec = LogRecord::decode(payload).ok_or_else(|| CacheError::Corrupt {
                path: path.to_path_buf(),
                offset: pos as u64,
            })?;
            records.push(rec);
            pos += 4 + len;
        }
        if pos < bytes.len() {
            log::warn!(
                "{}: discarding {} bytes of an interrupted write",
                path.display(),
                bytes.len() - pos
            );
            file.set_len(pos as u64).map_err(io)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;
        Ok((
            LogFile {
                path: path.to_path_buf(),
                file,
            },
            records,
        ))
    }

    pub fn append(&mut self, records: &[LogRecord]) -> Result<(), CacheError> {
        let io = |e: io::Error| CacheError::Io(self.path.clone(), e);
        let mut w = BufWriter::new(&self.file);
        for r in records {
            w.write_all(&r.encode()).map_err(io)?;
        }
        w.flush().map_err(io)?;
        drop(w);
        self.file.sync_data().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(s: &str) -> CacheKey {
        CacheKey {
            fingerprint: "fp".into(),
            lhs: s.into(),
        }
    }

    #[test]
    fn records_round_trip() {
        let recs = [
            LogRecord::Record {
                key: key("a"),
                rhs: Some("result 0:i1\n".into()),
                at: 1_700_000_000,
            },
            LogRecord::Record {
                key: key("b"),
                rhs: None,
                at: 0,
            },
            LogRecord::StaticAdd { key: key("a"), n: 3 },
            LogRecord::DynamicAdd {
                key: key("a"),
                n: 1 << 40,
            },
            LogRecord::SiteMap {
                site: "x.cfg:f:entry:0".into(),
                key: key("a"),
            },
        ];
        for r in recs {
            let frame = r.encode();
            assert_eq!(u32::from_le_bytes(frame[..4].try_into().unwrap()) as usize, frame.len() - 4);
            assert_eq!(LogRecord::decode(&frame[4..]), Some(r));
        }
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut frame = LogRecord::StaticAdd { key: key("a"), n: 1 }.encode();
        frame.push(0);
        assert_eq!(LogRecord::decode(&frame[4..]), None);
    }

    #[test]
    fn interrupted_write_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.log");
        let (mut log, recs) = LogFile::open(&path).unwrap();
        assert!(recs.is_empty());
        let r = LogRecord::StaticAdd { key: key("a"), n: 7 };
        log.append(std::slice::from_ref(&r)).unwrap();
        drop(log);
        let full = std::fs::read(&path).unwrap();
        let mut torn = full.clone();
        torn.extend_from_slice(&r.encode()[..5]);
        std::fs::write(&path, &torn).unwrap();
        let (_, recs) = LogFile::open(&path).unwrap();
        assert_eq!(recs, vec![r]);
        assert_eq!(std::fs::read(&path).unwrap(), full);
    }

    #[test]
    fn foreign_files_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.log");
        std::fs::write(&path, b"not a log").unwrap();
        assert!(matches!(LogFile::open(&path), Err(CacheError::Corrupt { offset: 0, .. })));
    }
}
