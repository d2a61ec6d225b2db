//! Little-endian byte helpers shared by the model and feature formats.
//! Both formats end in a CRC32 of every preceding byte.

use crate::error::{Error, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn with_capacity(cap: usize) -> Self {
        Self {
            buf: Vec::with_capacity(cap),
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Appends the CRC32 trailer and returns the finished buffer.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    stored_crc: u32,
}

impl<'a> Reader<'a> {
    /// Checks magic and version and positions the cursor right after the
    /// version field. The CRC trailer is verified by [`Reader::finish`], after
    /// the structure has been parsed, so a short file reports truncation
    /// rather than a checksum failure.
    pub fn open(data: &'a [u8], magic: [u8; 4], version: u16) -> Result<Self> {
        if data.len() < 4 {
            return Err(Error::Truncated {
                offset: 0,
                needed: 4 - data.len(),
            });
        }
        let found: [u8; 4] = data[..4].try_into().unwrap();
        if found != magic {
            return Err(Error::BadMagic {
                expected: magic,
                found,
            });
        }
        if data.len() < 6 {
            return Err(Error::Truncated {
                offset: 4,
                needed: 6 - data.len(),
            });
        }
        let found_version = u16::from_le_bytes([data[4], data[5]]);
        if found_version != version {
            return Err(Error::UnsupportedVersion {
                found: found_version,
                supported: version,
            });
        }
        if data.len() < 10 {
            return Err(Error::Truncated {
                offset: data.len(),
                needed: 10 - data.len(),
            });
        }
        let body_end = data.len() - 4;
        let stored = u32::from_le_bytes(data[body_end..].try_into().unwrap());
        Ok(Self {
            data: &data[..body_end],
            pos: 6,
            stored_crc: stored,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n - (self.data.len() - self.pos),
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or(Error::Truncated {
            offset: self.pos,
            needed: usize::MAX,
        })?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    pub fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::TrailingBytes(self.remaining()));
        }
        let computed = crc32fast::hash(self.data);
        if computed != self.stored_crc {
            return Err(Error::Checksum {
                stored: self.stored_crc,
                computed,
            });
        }
        Ok(())
    }
}

/// Writes `bytes` to `path` via a sibling temp file and an atomic rename,
/// so readers never observe a partially written file.
pub fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => std::path::Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
