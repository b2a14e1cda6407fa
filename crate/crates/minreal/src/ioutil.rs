//! Byte-level helpers for the flat binary containers and atomic file writes.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Write `bytes` to `path` atomically (temp file in the same directory, then
/// rename), so concurrent readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", file_name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn push_f64_slice(buf: &mut Vec<u8>, values: impl Iterator<Item = f64>) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Cursor over a byte slice for reading the binary payload sections.
pub struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub fn read_f64(&mut self) -> Result<f64> {
        if self.pos + 8 > self.bytes.len() {
            return Err(Error::Format("unexpected end of binary payload".into()));
        }
        let mut raw = [0u8; 8];
        raw.copy_from_slice(&self.bytes[self.pos..self.pos + 8]);
        self.pos += 8;
        Ok(f64::from_le_bytes(raw))
    }

    pub fn read_u64(&mut self) -> Result<u64> {
        if self.pos + 8 > self.bytes.len() {
            return Err(Error::Format("unexpected end of binary payload".into()));
        }
        let mut raw = [0u8; 8];
        raw.copy_from_slice(&self.bytes[self.pos..self.pos + 8]);
        self.pos += 8;
        Ok(u64::from_le_bytes(raw))
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Split a container into its text header lines and the binary payload.
///
/// The header is terminated by a line containing only `---`.
pub fn split_header(bytes: &[u8]) -> Result<(Vec<String>, &[u8])> {
    let mut lines = Vec::new();
    let mut start = 0usize;
    loop {
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| start + p)
            .ok_or_else(|| Error::Format("missing header terminator".into()))?;
        let line = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| Error::Format("header is not utf-8".into()))?
            .trim_end_matches('\r')
            .to_string();
        start = end + 1;
        if line == "---" {
            return Ok((lines, &bytes[start..]));
        }
        lines.push(line);
    }
}

/// Parse `key=value` tokens from a header line into (key, value) pairs.
pub fn header_fields(line: &str) -> Vec<(String, String)> {
    line.split_whitespace()
        .filter_map(|tok| tok.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

pub fn field_as_u64(fields: &[(String, String)], key: &str) -> Result<u64> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .ok_or_else(|| Error::Format(format!("missing header field `{key}`")))?
        .1
        .parse()
        .map_err(|_| Error::Format(format!("bad integer in header field `{key}`")))
}

pub fn field_as_f64(fields: &[(String, String)], key: &str) -> Result<f64> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .ok_or_else(|| Error::Format(format!("missing header field `{key}`")))?
        .1
        .parse()
        .map_err(|_| Error::Format(format!("bad float in header field `{key}`")))
}
