//! Append-only on-disk log of hafnian values.
//!
//! Layout: an 8-byte magic, then records of
//! `fingerprint u64 | len u16 | len x u32 entries | value f64 | check u32`,
//! all little-endian. `check` is FNV-1a over the preceding record bytes.
//! A damaged or partial trailing record is cut off on load.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::warn;

use gbspe_core::{HafnianCache, MultiIndex};

use crate::error::{read_error, write_error, CliResult};

const MAGIC: &[u8; 8] = b"GBSPEHC1";

fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

fn encode(fp: u64, index: &MultiIndex, value: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(22 + 4 * index.len());
    out.extend_from_slice(&fp.to_le_bytes());
    out.extend_from_slice(&(index.len() as u16).to_le_bytes());
    for &e in index.entries() {
        out.extend_from_slice(&e.to_le_bytes());
    }
    out.extend_from_slice(&value.to_le_bytes());
    let check = fnv1a(&out);
    out.extend_from_slice(&check.to_le_bytes());
    out
}

/// Decodes one record at the start of `buf`; `None` if it is partial or
/// fails its check.
fn decode(buf: &[u8]) -> Option<(u64, MultiIndex, f64, usize)> {
    let take = |at: usize, n: usize| buf.get(at..at + n);
    let fp = u64::from_le_bytes(take(0, 8)?.try_into().ok()?);
    let len = u16::from_le_bytes(take(8, 2)?.try_into().ok()?) as usize;
    if len == 0 {
        return None;
    }
    let mut entries = Vec::with_capacity(len);
    for k in 0..len {
        entries.push(u32::from_le_bytes(take(10 + 4 * k, 4)?.try_into().ok()?));
    }
    let at = 10 + 4 * len;
    let value = f64::from_le_bytes(take(at, 8)?.try_into().ok()?);
    let check = u32::from_le_bytes(take(at + 8, 4)?.try_into().ok()?);
    if fnv1a(&buf[..at + 8]) != check {
        return None;
    }
    Some((fp, MultiIndex::new(entries), value, at + 12))
}

pub struct CacheLog {
    path: PathBuf,
    known: HashSet<(u64, MultiIndex)>,
}

impl CacheLog {
    /// Loads `path` into `cache`, creating the file if needed.
    pub fn open(path: &Path, cache: &HafnianCache) -> CliResult<Self> {
        let mut known = HashSet::new();
        if !path.exists() {
            let mut f = File::create(path).map_err(|e| write_error(path, e))?;
            f.write_all(MAGIC).map_err(|e| write_error(path, e))?;
            return Ok(CacheLog { path: path.to_path_buf(), known });
        }
        let mut buf = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| read_error(path, e))?;
        if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
            return Err(read_error(path, "not a hafnian cache log"));
        }
        let mut at = MAGIC.len();
        while at < buf.len() {
            match decode(&buf[at..]) {
                Some((fp, index, value, used)) => {
                    // Stale entries from an incompatible layout are dropped.
                    if cache.insert(fp, &index, value).is_ok() {
                        known.insert((fp, index));
                    }
                    at += used;
                }
                None => break,
            }
        }
        if at < buf.len() {
            warn!(
                "cache log {}: dropping {} corrupt trailing bytes",
                path.display(),
                buf.len() - at
            );
            let f = OpenOptions::new().write(true).open(path).map_err(|e| write_error(path, e))?;
            f.set_len(at as u64).map_err(|e| write_error(path, e))?;
        }
        Ok(CacheLog { path: path.to_path_buf(), known })
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    /// Appends every cached value not yet in the log; returns how many.
    pub fn persist(&mut self, cache: &HafnianCache) -> CliResult<usize> {
        let mut bytes = Vec::new();
        let mut added = 0;
        for (fp, index, value) in cache.entries() {
            let key = (fp, index);
            if self.known.contains(&key) {
                continue;
            }
            bytes.extend(encode(fp, &key.1, value));
            self.known.insert(key);
            added += 1;
        }
        if added > 0 {
            let mut f = OpenOptions::new().append(true).open(&self.path).map_err(|e| write_error(&self.path, e))?;
            f.write_all(&bytes).map_err(|e| write_error(&self.path, e))?;
        }
        Ok(added)
    }
}
