//! Checksummed binary container and little-endian codec helpers.
//!
//! Layout: magic (8) | version u32 | payload length u64 | SHA-256 of
//! payload (32) | payload.

use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use sha2::{Digest, Sha256};

use crate::error::{FormatError, Result};

const HEADER_LEN: usize = 8 + 4 + 8 + 32;

pub(crate) struct Kind {
    pub magic: [u8; 8],
    pub version: u32,
    pub name: &'static str,
}

pub(crate) fn encode(kind: &Kind, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&kind.magic);
    out.write_u32::<LittleEndian>(kind.version).unwrap();
    out.write_u64::<LittleEndian>(payload.len() as u64).unwrap();
    out.extend_from_slice(&Sha256::digest(payload));
    out.extend_from_slice(payload);
    out
}

pub(crate) fn decode<'a>(kind: &Kind, bytes: &'a [u8]) -> Result<&'a [u8], FormatError> {
    if bytes.len() < 8 || bytes[..8] != kind.magic {
        if bytes.len() < 8 && kind.magic.starts_with(bytes) {
            return Err(FormatError::Truncated {
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        return Err(FormatError::BadMagic { expected: kind.name });
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let version = LittleEndian::read_u32(&bytes[8..12]);
    if version != kind.version {
        return Err(FormatError::VersionMismatch {
            expected: kind.version,
            found: version,
        });
    }
    let len = LittleEndian::read_u64(&bytes[12..20]);
    let total = HEADER_LEN as u64 + len;
    if (bytes.len() as u64) < total {
        return Err(FormatError::Truncated {
            expected: total,
            found: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 > total {
        return Err(FormatError::Malformed("trailing bytes after payload".into()));
    }
    let payload = &bytes[HEADER_LEN..];
    if Sha256::digest(payload).as_slice() != &bytes[20..52] {
        return Err(FormatError::ChecksumMismatch);
    }
    Ok(payload)
}

pub(crate) fn write_file(path: &Path, kind: &Kind, payload: &[u8]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode(kind, payload))?;
    f.flush()?;
    Ok(())
}

#[derive(Default)]
pub(crate) struct Enc {
    pub buf: Vec<u8>,
}

impl Enc {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.write_u32::<LittleEndian>(v).unwrap();
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.write_u64::<LittleEndian>(v).unwrap();
    }
    pub fn f32(&mut self, v: f32) {
        self.buf.write_f32::<LittleEndian>(v).unwrap();
    }
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    pub fn u32s(&mut self, v: &[u32]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.u32(x));
    }
    pub fn u64s(&mut self, v: &[u64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.u64(x));
    }
    pub fn f32s(&mut self, v: &[f32]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f32(x));
    }
}

pub(crate) struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Dec { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < n {
            return Err(FormatError::Malformed(format!(
                "read of {n} bytes past end at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }
    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }
    pub fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(LittleEndian::read_f32(self.take(4)?))
    }
    pub fn str(&mut self) -> Result<String, FormatError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| FormatError::Malformed(e.to_string()))
    }
    fn len(&mut self, elem: usize) -> Result<usize, FormatError> {
        let n = self.u64()? as usize;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(FormatError::Malformed(format!("array length {n} exceeds payload")));
        }
        Ok(n)
    }
    pub fn u32s(&mut self) -> Result<Vec<u32>, FormatError> {
        let n = self.len(4)?;
        (0..n).map(|_| self.u32()).collect()
    }
    pub fn u64s(&mut self) -> Result<Vec<u64>, FormatError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.u64()).collect()
    }
    pub fn f32s(&mut self) -> Result<Vec<f32>, FormatError> {
        let n = self.len(4)?;
        (0..n).map(|_| self.f32()).collect()
    }
    pub fn finish(self) -> Result<(), FormatError> {
        if self.pos != self.buf.len() {
            return Err(FormatError::Malformed("unread trailing payload".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const K: Kind = Kind {
        magic: *b"TESTFMT\0",
        version: 3,
        name: "test",
    };

    #[test]
    fn round_trip_and_errors() {
        let bytes = encode(&K, b"hello");
        assert_eq!(decode(&K, &bytes).unwrap(), b"hello");

        let mut bad = bytes.clone();
        *bad.last_mut().unwrap() ^= 1;
        assert_eq!(decode(&K, &bad), Err(FormatError::ChecksumMismatch));

        let other = Kind { version: 4, ..K };
        assert!(matches!(
            decode(&other, &bytes),
            Err(FormatError::VersionMismatch { expected: 4, found: 3 })
        ));
        assert!(matches!(decode(&K, &bytes[..bytes.len() - 2]), Err(FormatError::Truncated { .. })));
        assert!(matches!(decode(&K, &bytes[..4]), Err(FormatError::Truncated { .. })));
        assert!(matches!(decode(&K, b"garbage-garbage"), Err(FormatError::BadMagic { .. })));
    }

    #[test]
    fn codec() {
        let mut e = Enc::default();
        e.str("ab");
        e.u32s(&[1, 2]);
        e.f32s(&[0.5]);
        let mut d = Dec::new(&e.buf);
        assert_eq!(d.str().unwrap(), "ab");
        assert_eq!(d.u32s().unwrap(), vec![1, 2]);
        assert_eq!(d.f32s().unwrap(), vec![0.5]);
        d.finish().unwrap();
    }
}
